"""Evaluation mathematics: logit gaps, CKA, k-NN transfer, unified scores,
and the confidence-based membership inference attack.

All scores are fractions in [0, 1]; rendering to percent happens only at
report emission.  Every operation here is a pure function, safe to evaluate
in parallel over multiple checkpoints.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, ForgetSplit
from .errors import ConfigError, DegenerateInputError, ShapeError
from .kernels import as_matrix, gram_linear, hsic
from .model import MlpParams, accuracy, forward, softmax
from .rng import make_rng

SELF_HSIC_FLOOR = 1e-12


@dataclass
class LogitGaps:
    """Accuracies of the unlearned model and absolute gaps to the retrained one."""
    fa: float
    ra: float
    tfa: float
    tra: float
    g_f: float
    g_r: float
    g_tf: float
    g_tr: float

    def gaps(self) -> tuple:
        return (self.g_f, self.g_r, self.g_tf, self.g_tr)

    def to_dict(self) -> dict:
        return dict(fa=self.fa, ra=self.ra, tfa=self.tfa, tra=self.tra,
                    g_f=self.g_f, g_r=self.g_r, g_tf=self.g_tf, g_tr=self.g_tr)


@dataclass
class DownstreamRepr:
    """Representation scores of one model pair on one downstream dataset."""
    knn_acc_u: float
    knn_acc_r: float
    g_knn: float
    cka_ur: float
    cka_uo: float

    def to_dict(self) -> dict:
        return dict(knn_acc_u=self.knn_acc_u, knn_acc_r=self.knn_acc_r,
                    g_knn=self.g_knn, cka_ur=self.cka_ur, cka_uo=self.cka_uo)


@dataclass
class ReprScores:
    per_dataset: dict  # name -> DownstreamRepr

    def to_dict(self) -> dict:
        return {name: d.to_dict() for name, d in self.per_dataset.items()}

    @staticmethod
    def from_dict(d: dict) -> "ReprScores":
        return ReprScores({name: DownstreamRepr(**v) for name, v in d.items()})


@dataclass
class MetricsReport:
    """One evaluated (method, scenario, seed) row.

    rte_seconds is wall-clock and intentionally excluded from to_dict so the
    JSON report stays byte-identical across reruns; sample_visits is the
    deterministic cost proxy.
    """
    method: str
    scenario: str
    seed: int
    status: str = "ok"
    logit: LogitGaps | None = None
    repr_scores: ReprScores | None = None
    agl: float | None = None
    agr: float | None = None
    hlr: float | None = None
    mia: float | None = None
    sample_visits: int = 0
    rte_seconds: float = 0.0
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "scenario": self.scenario,
            "seed": self.seed,
            "status": self.status,
            "logit": self.logit.to_dict() if self.logit else None,
            "repr_scores": self.repr_scores.to_dict() if self.repr_scores else None,
            "agl": self.agl,
            "agr": self.agr,
            "hlr": self.hlr,
            "mia": self.mia,
            "sample_visits": self.sample_visits,
            "provenance": self.provenance,
        }

    @staticmethod
    def from_dict(d: dict) -> "MetricsReport":
        logit = LogitGaps(**d["logit"]) if d.get("logit") else None
        scores = ReprScores.from_dict(d["repr_scores"]) if d.get("repr_scores") else None
        return MetricsReport(
            method=d["method"], scenario=d["scenario"], seed=d["seed"],
            status=d.get("status", "ok"), logit=logit, repr_scores=scores,
            agl=d.get("agl"), agr=d.get("agr"), hlr=d.get("hlr"),
            mia=d.get("mia"), sample_visits=d.get("sample_visits", 0),
            provenance=d.get("provenance", {}),
        )


def _check_unit_interval(value: float, name: str) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


def compute_agl(gaps: LogitGaps) -> float:
    """Product of (1 - gap) over forget/retain train and test accuracies."""
    out = 1.0
    for name, g in zip(("g_f", "g_r", "g_tf", "g_tr"), gaps.gaps()):
        _check_unit_interval(g, name)
        out *= 1.0 - g
    return out


def compute_hlr(agl: float, agr: float) -> float:
    """Harmonic mean of the logit and representation scores; 0 if either is 0."""
    _check_unit_interval(agl, "agl")
    _check_unit_interval(agr, "agr")
    if agl == 0.0 or agr == 0.0:
        return 0.0
    return 2.0 / (1.0 / agl + 1.0 / agr)


def compute_cka(xa: np.ndarray, xb: np.ndarray, literal_form: bool = False) -> float:
    """Linear CKA between two feature matrices on the same samples.

    Standard scalar form HSIC(Ka,Kb) / sqrt(HSIC(Ka,Ka) * HSIC(Kb,Kb));
    bit-identical inputs score exactly 1.  literal_form instead squares the
    numerator and both denominator terms, kept only for auditing since it is
    not scale-invariant.
    """
    xa = as_matrix(xa, "Xa")
    xb = as_matrix(xb, "Xb")
    if xa.shape[0] != xb.shape[0]:
        raise ShapeError(f"row counts differ: {xa.shape[0]} vs {xb.shape[0]}")
    if xa.shape[0] < 3:
        raise DegenerateInputError("CKA needs at least 3 rows")
    if not literal_form:
        # Scale invariance lets us normalize away overflow from collapsed
        # models whose feature magnitudes are astronomical but finite.
        xa = _frobenius_rescale(xa)
        xb = _frobenius_rescale(xb)
    ka = gram_linear(xa)
    kb = gram_linear(xb)
    h_ab = hsic(ka, kb)
    h_aa = hsic(ka, ka)
    h_bb = hsic(kb, kb)
    if h_aa < SELF_HSIC_FLOOR or h_bb < SELF_HSIC_FLOOR:
        return 0.0
    if literal_form:
        return h_ab ** 2 / (h_aa ** 2 * h_bb ** 2)
    if xa.shape == xb.shape and np.array_equal(xa, xb):
        return 1.0
    return h_ab / np.sqrt(h_aa * h_bb)


def _frobenius_rescale(x: np.ndarray) -> np.ndarray:
    peak = np.abs(x).max()
    if peak > 1e100:
        x = x / peak
    scale = np.linalg.norm(x)
    return x / scale if scale > 1.0 else x


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    return x / safe[:, None]


def knn_predict(train_x: np.ndarray, train_y: np.ndarray, test_x: np.ndarray,
                k: int, num_classes: int) -> np.ndarray:
    """k-NN under cosine distance with fully deterministic tie handling.

    Neighbors are ordered by (distance, label, train index); vote ties go to
    the lowest class index.  Zero-norm rows keep similarity 0 to everything.
    """
    un_train = _normalize_rows(np.asarray(train_x, dtype=np.float64))
    un_test = _normalize_rows(np.asarray(test_x, dtype=np.float64))
    labels = np.asarray(train_y, dtype=np.int64)
    idx = np.arange(labels.size)
    preds = np.empty(un_test.shape[0], dtype=np.int64)
    for i in range(un_test.shape[0]):
        dist = 1.0 - un_train @ un_test[i]
        order = np.lexsort((idx, labels, dist))
        votes = np.bincount(labels[order[:k]], minlength=num_classes)
        preds[i] = int(np.argmax(votes))
    return preds


def stratified_split(labels: np.ndarray, train_frac: float, rng) -> tuple:
    """Per-class shuffled split; returns (train_idx, test_idx) in class order."""
    train_idx, test_idx = [], []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        perm = members[rng.permutation(members.size)]
        cut = int(train_frac * members.size)
        train_idx.append(perm[:cut])
        test_idx.append(perm[cut:])
    return np.concatenate(train_idx), np.concatenate(test_idx)


def compute_knn_accuracy(features: np.ndarray, labels: np.ndarray,
                         k: int = 5, split_seed: int = 0) -> float:
    """Transfer accuracy of a k-NN classifier on an 80/20 stratified split."""
    features = as_matrix(features, "features")
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] != labels.size:
        raise ShapeError("features and labels disagree on sample count")
    rng = make_rng(split_seed, 0)
    train_idx, test_idx = stratified_split(labels, 0.8, rng)
    for c in np.unique(labels):
        n_train = int((labels[train_idx] == c).sum())
        if n_train < k + 1:
            raise DegenerateInputError(
                f"class {int(c)} has only {n_train} samples in the 80% split; "
                f"need at least {k + 1}"
            )
    num_classes = int(labels.max()) + 1
    preds = knn_predict(features[train_idx], labels[train_idx],
                        features[test_idx], k, num_classes)
    return float((preds == labels[test_idx]).mean())


def compute_agr(scores: ReprScores, scenario_kind: str,
                related_dataset: str | None = None) -> float:
    """(1 - G_kNN) x CKA(theta_u, theta_r): averaged over all downstream
    datasets in the random scenario, on the related dataset only in the top
    scenario."""
    if scenario_kind == "random":
        if not scores.per_dataset:
            raise ConfigError("random-scenario AGR needs at least one downstream dataset")
        used = list(scores.per_dataset.values())
    elif scenario_kind == "top":
        if related_dataset is None or related_dataset not in scores.per_dataset:
            raise ConfigError(
                f"top-scenario AGR needs the related downstream dataset, "
                f"got {related_dataset!r}"
            )
        used = [scores.per_dataset[related_dataset]]
    else:
        raise ConfigError(f"unknown scenario kind {scenario_kind!r}")
    for d in used:
        _check_unit_interval(d.g_knn, "g_knn")
    mean_gap = float(np.mean([d.g_knn for d in used]))
    mean_cka = float(np.mean([d.cka_ur for d in used]))
    return (1.0 - mean_gap) * mean_cka


def logit_gaps(theta_u: MlpParams, theta_r: MlpParams, split: ForgetSplit) -> LogitGaps:
    """FA/RA/TFA/TRA of theta_u and absolute accuracy gaps to theta_r."""
    parts = (split.Df, split.Dr, split.Df_te, split.Dr_te)
    acc_u = [accuracy(theta_u, d) for d in parts]
    acc_r = [accuracy(theta_r, d) for d in parts]
    gaps = [abs(u - r) for u, r in zip(acc_u, acc_r)]
    return LogitGaps(*acc_u, *gaps)


def max_confidence(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """The attack feature: maximum softmax probability per sample."""
    _, logits = forward(params, x)
    return softmax(logits).max(axis=1)


def fit_linear_svm(features: np.ndarray, labels01: np.ndarray, seed: int,
                   epochs: int = 200, l2: float = 1e-3) -> tuple:
    """Hinge-loss SGD on a linear decision function (Pegasos-style schedule).

    labels01 holds {0, 1}; returns (w, b) with member predicted when
    w·x + b > 0.  Bias is unregularized.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.where(np.asarray(labels01) > 0, 1.0, -1.0)
    if np.unique(y).size < 2:
        raise DegenerateInputError("SVM training needs both classes present")
    rng = make_rng(seed, 0)
    w = np.zeros(x.shape[1])
    b = 0.0
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(x.shape[0]):
            t += 1
            eta = 1.0 / (l2 * t)
            margin = y[i] * (x[i] @ w + b)
            w *= 1.0 - eta * l2
            if margin < 1.0:
                w += eta * y[i] * x[i]
                b += eta * y[i]
    return w, b


def mia_efficacy(theta_u: MlpParams, dr_sample: Dataset, dtest_sample: Dataset,
                 df: Dataset, seed: int = 0) -> float:
    """Fraction of forget samples an SVM attacker calls non-members.

    The attacker trains on max-confidence features with members from the
    retain train sample (label 1) and non-members from unseen test data
    (label 0), balanced; higher efficacy means more convincing forgetting.
    """
    if dr_sample.n == 0 or dtest_sample.n == 0 or df.n == 0:
        raise DegenerateInputError("MIA needs nonempty member, non-member, and forget sets")
    if dr_sample.n != dtest_sample.n:
        raise ConfigError(
            f"MIA training must be balanced: {dr_sample.n} members vs "
            f"{dtest_sample.n} non-members"
        )
    conf_member = max_confidence(theta_u, dr_sample.X)
    conf_nonmember = max_confidence(theta_u, dtest_sample.X)
    feats = np.concatenate([conf_member, conf_nonmember])
    labels = np.concatenate([np.ones(dr_sample.n), np.zeros(dtest_sample.n)])
    # Standardize with attack-training statistics; confidences cluster near
    # 1.0 and the hinge geometry needs unit-scale features to be usable.
    mu, sd = feats.mean(), max(float(feats.std()), 1e-12)
    w, b = fit_linear_svm((feats - mu) / sd, labels, seed)
    conf_f = (max_confidence(theta_u, df.X) - mu) / sd
    return float((conf_f * w[0] + b <= 0.0).mean())


@dataclass
class LastLayerReport:
    cka_full_vs_head: float
    agl_gap: float
    agl_full: float
    agl_head: float


def last_layer_analysis(theta_o: MlpParams, theta_r: MlpParams,
                        split: ForgetSplit, cfg) -> LastLayerReport:
    """Run one method fully and head-only, then compare the two results.

    Features are extracted on the retain test set; the AGL gap is the
    absolute difference of the two AGL scores against theta_r.
    """
    from dataclasses import replace as _replace
    from .unlearning import run_unlearning

    full = run_unlearning(theta_o, split, cfg).params
    head_cfg = _replace(cfg, base=_replace(cfg.base, freeze_encoder=True))
    head = run_unlearning(theta_o, split, head_cfg).params
    feats_full, _ = forward(full, split.Dr_te.X)
    feats_head, _ = forward(head, split.Dr_te.X)
    cka = compute_cka(feats_full, feats_head)
    agl_full = compute_agl(logit_gaps(full, theta_r, split))
    agl_head = compute_agl(logit_gaps(head, theta_r, split))
    return LastLayerReport(cka, abs(agl_full - agl_head), agl_full, agl_head)
