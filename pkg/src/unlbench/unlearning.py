"""The unlearning procedures: map an original model plus a forget split to
an unlearned model.

Every method is a deterministic function of (parameters, split, config).
Four methods touch only the forget set (GA, RL, PL, SalUn); the rest also
consume retain data.  Each run reports the number of training-sample visits
so runtime cost can be compared without wall-clock noise.
"""

import hashlib
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, ForgetSplit
from .errors import ConfigError, DegenerateInputError, DivergenceError
from .model import (
    BLOCKS,
    MlpParams,
    SgdState,
    TrainConfig,
    apply_sgd_step,
    backward,
    check_finite,
    cross_entropy_grad_logits,
    epoch_batches,
    forward,
    grad_cross_entropy,
    init_params,
    log_softmax,
    sgd_train,
    softmax,
    _forward_cache,
)
from .rng import make_rng

log = logging.getLogger(__name__)

METHODS = ("FT", "GA", "RL", "PL", "SalUn", "DUCK", "CU", "SCRUB", "SCAR", "RETRAIN")

# Stream ids under the base seed, disjoint from model.STREAM_SHUFFLE / NOISE.
STREAM_RELABEL = 3
STREAM_RETAIN = 4


@dataclass(frozen=True)
class UnlearnConfig:
    method: str
    base: TrainConfig = field(default_factory=TrainConfig)
    saliency_fraction: float = 0.5
    distill_temperature: float = 2.0
    contrast_temperature: float = 0.5
    retain_loss_weight: float = 1.0
    scrub_max_steps_per_epoch: int = 1
    scrub_min_steps_per_epoch: int = 1
    covariance_shrinkage: float = 0.1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not 0.0 < self.saliency_fraction <= 1.0:
            raise ConfigError("saliency_fraction must be in (0, 1]")
        if self.distill_temperature <= 0 or self.contrast_temperature <= 0:
            raise ConfigError("temperatures must be positive")
        if self.retain_loss_weight < 0:
            raise ConfigError("retain_loss_weight must be >= 0")
        if self.scrub_max_steps_per_epoch < 0 or self.scrub_min_steps_per_epoch < 0:
            raise ConfigError("scrub step counts must be >= 0")
        if not 0.0 <= self.covariance_shrinkage <= 1.0:
            raise ConfigError("covariance_shrinkage must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "base": self.base.to_dict(),
            "saliency_fraction": self.saliency_fraction,
            "distill_temperature": self.distill_temperature,
            "contrast_temperature": self.contrast_temperature,
            "retain_loss_weight": self.retain_loss_weight,
            "scrub_max_steps_per_epoch": self.scrub_max_steps_per_epoch,
            "scrub_min_steps_per_epoch": self.scrub_min_steps_per_epoch,
            "covariance_shrinkage": self.covariance_shrinkage,
        }

    @staticmethod
    def from_dict(d: dict) -> "UnlearnConfig":
        d = dict(d)
        base = TrainConfig.from_dict(d.pop("base", {}))
        keys = {k for k in UnlearnConfig("FT").to_dict() if k not in ("method", "base")}
        return UnlearnConfig(method=d["method"], base=base,
                             **{k: v for k, v in d.items() if k in keys})

    def with_seed(self, seed: int) -> "UnlearnConfig":
        return replace(self, base=self.base.with_seed(seed))


@dataclass
class Centroids:
    """Per-class feature means, optionally with a shared shrunk covariance."""
    classes: tuple
    means: np.ndarray  # len(classes) x feat_dim
    covariance: np.ndarray | None = None
    precision: np.ndarray | None = None

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.classes).tobytes())
        h.update(np.ascontiguousarray(self.means, dtype="<f8").tobytes())
        if self.covariance is not None:
            h.update(np.ascontiguousarray(self.covariance, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass
class UnlearnResult:
    params: MlpParams
    sample_visits: int
    stats: dict = field(default_factory=dict)


def compute_centroids(params: MlpParams, dataset: Dataset, classes) -> Centroids:
    feats, _ = forward(params, dataset.X)
    means = np.vstack([feats[dataset.y == c].mean(axis=0) for c in classes])
    return Centroids(tuple(int(c) for c in classes), means)


def compute_shared_covariance(params: MlpParams, dataset: Dataset, classes,
                              shrinkage: float) -> Centroids:
    """Class-pooled within-class covariance with convex diagonal shrinkage.

    Falls back to the pure diagonal (shrinkage 1) if the shrunk matrix is
    not positive definite; diagonal entries are floored so the precision
    always exists.
    """
    cents = compute_centroids(params, dataset, classes)
    feats, _ = forward(params, dataset.X)
    centered = np.empty_like(feats)
    for i, c in enumerate(cents.classes):
        mask = dataset.y == c
        centered[mask] = feats[mask] - cents.means[i]
    pooled = centered.T @ centered / centered.shape[0]
    diag = np.diag(np.maximum(np.diag(pooled), 1e-12))

    def shrink(lam):
        return (1.0 - lam) * pooled + lam * diag

    cov = shrink(shrinkage)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        log.warning(
            "shared covariance not SPD at shrinkage %.3f; using pure diagonal",
            shrinkage,
        )
        cov = diag
    cents.covariance = cov
    cents.precision = np.linalg.inv(cov)
    return cents


class _BatchCycler:
    """Endless deterministic batches over n rows; reshuffles on exhaustion."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        if n < 1:
            raise DegenerateInputError("cannot draw batches from an empty set")
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._queue = np.array([], dtype=np.int64)

    def next(self) -> np.ndarray:
        while self._queue.size < self.batch_size:
            self._queue = np.concatenate([self._queue, self.rng.permutation(self.n)])
        out, self._queue = self._queue[: self.batch_size], self._queue[self.batch_size:]
        return out


def _ce_loop(theta: MlpParams, x: np.ndarray, labels_for_epoch, cfg: TrainConfig,
             sign: float = 1.0, mask: dict | None = None) -> tuple:
    """Minibatch cross-entropy loop; labels_for_epoch(epoch) supplies targets."""
    work = theta.copy()
    n = x.shape[0]
    if cfg.epochs == 0 or n == 0:
        return work, 0
    state = SgdState.create(work, cfg)
    visits = 0
    for epoch in range(cfg.epochs):
        y = labels_for_epoch(epoch)
        for idx in epoch_batches(n, cfg.batch_size, state.shuffle_rng):
            grads, loss = grad_cross_entropy(work, x[idx], y[idx], cfg.freeze_encoder)
            if not np.isfinite(loss):
                raise DivergenceError(state.step)
            apply_sgd_step(work, grads, state, cfg, sign=sign, mask=mask)
            visits += idx.size
    check_finite(work, state.step)
    return work, visits


def unlearn_ft(theta_o: MlpParams, dr: Dataset, cfg: UnlearnConfig) -> UnlearnResult:
    """Fine-tune on the retain set only; forgetting happens by drift."""
    params = sgd_train(theta_o, dr, cfg.base)
    return UnlearnResult(params, cfg.base.epochs * dr.n)


def unlearn_ga(theta_o: MlpParams, df: Dataset, cfg: UnlearnConfig) -> UnlearnResult:
    """Gradient ascent on the forget set's cross-entropy."""
    if df.n == 0:
        raise DegenerateInputError("gradient ascent needs a nonempty forget set")
    params, visits = _ce_loop(theta_o, df.X, lambda epoch: df.y, cfg.base, sign=-1.0)
    return UnlearnResult(params, visits)


def _random_relabel(y: np.ndarray, num_classes: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw over the num_classes - 1 labels different from each y."""
    draw = rng.integers(0, num_classes - 1, size=y.shape[0])
    return np.where(draw >= y, draw + 1, draw)


def _rl_loop(theta_o, df, cfg: UnlearnConfig, mask=None) -> tuple:
    rel_rng = make_rng(cfg.base.seed, STREAM_RELABEL)
    num_classes = theta_o.num_classes

    def labels(_epoch):
        return _random_relabel(df.y, num_classes, rel_rng)

    return _ce_loop(theta_o, df.X, labels, cfg.base, mask=mask)


def unlearn_rl(theta_o: MlpParams, df: Dataset, cfg: UnlearnConfig) -> UnlearnResult:
    """Relabel each forget sample with a random different class each epoch."""
    if df.n == 0:
        raise DegenerateInputError("random labeling needs a nonempty forget set")
    params, visits = _rl_loop(theta_o, df, cfg)
    return UnlearnResult(params, visits)


def pseudo_labels(theta_o: MlpParams, x: np.ndarray, forget_classes) -> np.ndarray:
    """Most probable class under theta_o after excluding the forget classes."""
    forget = np.asarray(sorted(set(int(c) for c in forget_classes)), dtype=np.int64)
    if forget.size >= theta_o.num_classes:
        raise ConfigError("pseudo-labeling needs at least one retained class")
    _, logits = forward(theta_o, x)
    masked = logits.copy()
    masked[:, forget] = -np.inf
    return np.argmax(masked, axis=1)


def unlearn_pl(theta_o: MlpParams, df: Dataset, cfg: UnlearnConfig) -> UnlearnResult:
    """Train forget samples toward theta_o's best non-forget prediction.

    Pseudo-labels are computed once, before any parameter update.
    """
    if df.n == 0:
        raise DegenerateInputError("pseudo labeling needs a nonempty forget set")
    targets = pseudo_labels(theta_o, df.X, np.unique(df.y))
    params, visits = _ce_loop(theta_o, df.X, lambda epoch: targets, cfg.base)
    return UnlearnResult(params, visits)


def top_fraction_mask(scores: np.ndarray, fraction: float) -> np.ndarray:
    """0/1 mask of the ceil(fraction * n) largest scores.

    Ties resolve toward the lower flat index, so the mask is deterministic.
    """
    flat = np.asarray(scores, dtype=np.float64).ravel()
    k = int(np.ceil(fraction * flat.size))
    order = np.argsort(-flat, kind="stable")
    chosen = np.zeros(flat.size)
    chosen[order[:k]] = 1.0
    return chosen


def saliency_mask(theta_o: MlpParams, df: Dataset, fraction: float) -> dict:
    """Mask of the top `fraction` of parameters by forget-loss gradient
    magnitude, ranked globally over all blocks."""
    grads, _ = grad_cross_entropy(theta_o, df.X, df.y)
    flat = np.concatenate([np.abs(grads[b]).ravel() for b in BLOCKS])
    chosen = top_fraction_mask(flat, fraction)
    mask = {}
    offset = 0
    for b in BLOCKS:
        size = getattr(theta_o, b).size
        mask[b] = chosen[offset:offset + size].reshape(getattr(theta_o, b).shape)
        offset += size
    return mask


def unlearn_salun(theta_o: MlpParams, df: Dataset, cfg: UnlearnConfig) -> UnlearnResult:
    """Random labeling restricted to the salient parameter subset."""
    if df.n == 0:
        raise DegenerateInputError("SalUn needs a nonempty forget set")
    mask = saliency_mask(theta_o, df, cfg.saliency_fraction)
    params, visits = _rl_loop(theta_o, df, cfg, mask=mask)
    masked_count = int(sum(m.sum() for m in mask.values()))
    return UnlearnResult(params, visits, {"masked_parameters": masked_count})


def _two_set_loop(theta_o, df, dr, cfg: UnlearnConfig, step_fn) -> tuple:
    """Shared driver: one forget batch plus one retain batch per step.

    step_fn(work, f_idx, r_idx) must return (grads, loss).
    """
    work = theta_o.copy()
    if cfg.base.epochs == 0:
        return work, 0, SgdState.create(work, cfg.base)
    state = SgdState.create(work, cfg.base)
    retain = _BatchCycler(dr.n, cfg.base.batch_size,
                          make_rng(cfg.base.seed, STREAM_RETAIN))
    visits = 0
    for _ in range(cfg.base.epochs):
        for f_idx in epoch_batches(df.n, cfg.base.batch_size, state.shuffle_rng):
            r_idx = retain.next()
            grads, loss = step_fn(work, f_idx, r_idx)
            if not np.isfinite(loss):
                raise DivergenceError(state.step)
            apply_sgd_step(work, grads, state, cfg.base)
            visits += f_idx.size + r_idx.size
    check_finite(work, state.step)
    return work, visits, state


def _add_grads(a: dict, b: dict, weight: float = 1.0) -> dict:
    return {k: a[k] + weight * b[k] for k in BLOCKS}


def nearest_centroids(feats: np.ndarray, centroids: Centroids) -> tuple:
    """Index of the nearest centroid per row and the distance matrix.

    Squared Euclidean when no precision is set, otherwise squared
    Mahalanobis under the stored precision.
    """
    diff = feats[:, None, :] - centroids.means[None, :, :]
    if centroids.precision is None:
        d = np.einsum("nkd,nkd->nk", diff, diff)
    else:
        d = np.einsum("nkd,de,nke->nk", diff, centroids.precision, diff)
    return np.argmin(d, axis=1), d


def _realignment_step(work, x_f, dr, r_idx, centroids, cfg, freeze):
    """Distance-to-nearest-centroid loss on forget rows + weighted retain CE."""
    cache_f = _forward_cache(work, x_f)
    feats = cache_f["feats"]
    nearest, _ = nearest_centroids(feats, centroids)
    diff = feats - centroids.means[nearest]
    if centroids.precision is None:
        loss_f = float(np.einsum("nd,nd->n", diff, diff).mean())
        d_feats = 2.0 * diff / feats.shape[0]
    else:
        p_diff = diff @ centroids.precision
        loss_f = float(np.einsum("nd,nd->n", diff, p_diff).mean())
        d_feats = 2.0 * p_diff / feats.shape[0]
    grads = backward(work, cache_f, d_feats=d_feats, freeze_encoder=freeze)
    grads_r, loss_r = grad_cross_entropy(work, dr.X[r_idx], dr.y[r_idx], freeze)
    w = cfg.retain_loss_weight
    return _add_grads(grads, grads_r, w), loss_f + w * loss_r


def unlearn_duck(theta_o: MlpParams, df: Dataset, dr: Dataset,
                 cfg: UnlearnConfig) -> UnlearnResult:
    """Push forget features onto the nearest retained-class centroid.

    Centroids come from theta_o's features on the retain set and stay
    frozen; the nearest centroid is re-chosen every step.
    """
    if df.n == 0 or dr.n == 0:
        raise DegenerateInputError("DUCK needs nonempty forget and retain sets")
    centroids = compute_centroids(theta_o, dr, sorted(set(dr.y.tolist())))
    freeze = cfg.base.freeze_encoder

    def step(work, f_idx, r_idx):
        return _realignment_step(work, df.X[f_idx], dr, r_idx, centroids, cfg, freeze)

    params, visits, _ = _two_set_loop(theta_o, df, dr, cfg, step)
    return UnlearnResult(params, visits, {"centroid_hash": centroids.content_hash()})


def unlearn_scar(theta_o: MlpParams, df: Dataset, dr: Dataset,
                 cfg: UnlearnConfig) -> UnlearnResult:
    """DUCK's realignment with squared Mahalanobis distance under the shared
    shrunk covariance of theta_o's retain features."""
    if df.n == 0 or dr.n == 0:
        raise DegenerateInputError("SCAR needs nonempty forget and retain sets")
    centroids = compute_shared_covariance(
        theta_o, dr, sorted(set(dr.y.tolist())), cfg.covariance_shrinkage
    )
    freeze = cfg.base.freeze_encoder

    def step(work, f_idx, r_idx):
        return _realignment_step(work, df.X[f_idx], dr, r_idx, centroids, cfg, freeze)

    params, visits, _ = _two_set_loop(theta_o, df, dr, cfg, step)
    return UnlearnResult(params, visits, {"centroid_hash": centroids.content_hash()})


def contrastive_loss_grad(feats_a: np.ndarray, labels_a: np.ndarray,
                          feats_r: np.ndarray, labels_r: np.ndarray,
                          tau: float) -> tuple:
    """InfoNCE-style decoupling loss over anchor/retain feature batches.

    Positives for an anchor are retain rows whose class differs from the
    anchor's original class.  Returns (loss, d_feats_a, d_feats_r, kept)
    where kept marks anchors that had at least one positive.
    """
    norm_a = np.maximum(np.linalg.norm(feats_a, axis=1), 1e-12)
    norm_r = np.maximum(np.linalg.norm(feats_r, axis=1), 1e-12)
    ua = feats_a / norm_a[:, None]
    ur = feats_r / norm_r[:, None]
    sims = ua @ ur.T
    pos = labels_r[None, :] != labels_a[:, None]
    kept = pos.any(axis=1)
    d_a = np.zeros_like(feats_a)
    d_r = np.zeros_like(feats_r)
    n_kept = int(kept.sum())
    if n_kept == 0:
        return 0.0, d_a, d_r, kept

    scaled = sims / tau
    shift = scaled.max(axis=1, keepdims=True)
    exp_all = np.exp(scaled - shift)
    sum_all = exp_all.sum(axis=1)
    sum_pos = (exp_all * pos).sum(axis=1)
    with np.errstate(divide="ignore"):
        losses = np.where(kept, -(np.log(sum_pos) - np.log(sum_all)), 0.0)
    loss = float(losses.sum() / n_kept)

    q = exp_all / sum_all[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(pos, exp_all, 0.0) / np.where(sum_pos > 0, sum_pos, 1.0)[:, None]
    d_sims = np.where(kept[:, None], (q - p) / (tau * n_kept), 0.0)

    # d sims[i, j] / d a_i = ur_j / |a_i| - sims[i, j] * ua_i / |a_i|
    d_a = (d_sims @ ur - (d_sims * sims).sum(axis=1, keepdims=True) * ua) / norm_a[:, None]
    d_r = (d_sims.T @ ua - (d_sims * sims).sum(axis=0)[:, None] * ur) / norm_r[:, None]
    return loss, d_a, d_r, kept


def unlearn_cu(theta_o: MlpParams, df: Dataset, dr: Dataset,
               cfg: UnlearnConfig) -> UnlearnResult:
    """Contrastive decoupling of forget anchors from the retain embedding,
    plus weighted retain cross-entropy.

    A retain batch that leaves some anchor without a positive is resampled
    once; anchors still lacking one are dropped from the contrastive mean
    and counted in the stats.
    """
    if df.n == 0 or dr.n == 0:
        raise DegenerateInputError("CU needs nonempty forget and retain sets")
    work = theta_o.copy()
    if cfg.base.epochs == 0:
        return UnlearnResult(work, 0)
    tau = cfg.contrast_temperature
    w = cfg.retain_loss_weight
    freeze = cfg.base.freeze_encoder
    state = SgdState.create(work, cfg.base)
    retain_cycler = _BatchCycler(dr.n, cfg.base.batch_size,
                                 make_rng(cfg.base.seed, STREAM_RETAIN))
    visits = 0
    skipped = 0
    for _ in range(cfg.base.epochs):
        for f_idx in epoch_batches(df.n, cfg.base.batch_size, state.shuffle_rng):
            r_idx = retain_cycler.next()
            if not (dr.y[r_idx][None, :] != df.y[f_idx][:, None]).any(axis=1).all():
                r_idx = retain_cycler.next()
            cache_a = _forward_cache(work, df.X[f_idx])
            cache_r = _forward_cache(work, dr.X[r_idx])
            loss_c, d_a, d_r, kept = contrastive_loss_grad(
                cache_a["feats"], df.y[f_idx], cache_r["feats"], dr.y[r_idx], tau
            )
            skipped += int((~kept).sum())
            loss_r, d_logits_r = cross_entropy_grad_logits(cache_r["logits"], dr.y[r_idx])
            if not np.isfinite(loss_c + w * loss_r):
                raise DivergenceError(state.step)
            grads = _add_grads(
                backward(work, cache_a, d_feats=d_a, freeze_encoder=freeze),
                backward(work, cache_r, d_logits=w * d_logits_r, d_feats=d_r,
                         freeze_encoder=freeze),
            )
            apply_sgd_step(work, grads, state, cfg.base)
            visits += f_idx.size + r_idx.size
    check_finite(work, state.step)
    if skipped:
        log.info("CU skipped %d anchors lacking positives", skipped)
    return UnlearnResult(work, visits, {"skipped_anchors": skipped})


def kl_teacher_student(teacher_logits: np.ndarray, student_logits: np.ndarray,
                       temperature: float) -> tuple:
    """Mean KL(teacher || student) on temperature-scaled logits.

    Returns (kl, d_student_logits) for the batch mean.
    """
    t = softmax(teacher_logits / temperature)
    log_t = log_softmax(teacher_logits / temperature)
    log_s = log_softmax(student_logits / temperature)
    n = teacher_logits.shape[0]
    kl = float((t * (log_t - log_s)).sum(axis=1).mean())
    d_student = (np.exp(log_s) - t) / (temperature * n)
    return kl, d_student


def unlearn_scrub(theta_o: MlpParams, df: Dataset, dr: Dataset,
                  cfg: UnlearnConfig) -> UnlearnResult:
    """Teacher-student distillation: ascend the forget-set KL to the frozen
    teacher, then descend retain KL plus retain cross-entropy, each epoch."""
    if df.n == 0 or dr.n == 0:
        raise DegenerateInputError("SCRUB needs nonempty forget and retain sets")
    teacher = theta_o
    temp = cfg.distill_temperature
    freeze = cfg.base.freeze_encoder
    work = theta_o.copy()
    if cfg.base.epochs == 0:
        return UnlearnResult(work, 0)
    state = SgdState.create(work, cfg.base)
    forget_cycler = _BatchCycler(df.n, cfg.base.batch_size, state.shuffle_rng)
    retain_cycler = _BatchCycler(dr.n, cfg.base.batch_size,
                                 make_rng(cfg.base.seed, STREAM_RETAIN))
    visits = 0
    for _ in range(cfg.base.epochs):
        for _ in range(cfg.scrub_max_steps_per_epoch):
            idx = forget_cycler.next()
            _, t_logits = forward(teacher, df.X[idx])
            cache = _forward_cache(work, df.X[idx])
            kl, d_logits = kl_teacher_student(t_logits, cache["logits"], temp)
            if not np.isfinite(kl):
                raise DivergenceError(state.step)
            grads = backward(work, cache, d_logits=d_logits, freeze_encoder=freeze)
            apply_sgd_step(work, grads, state, cfg.base, sign=-1.0)
            visits += idx.size
        for _ in range(cfg.scrub_min_steps_per_epoch):
            idx = retain_cycler.next()
            _, t_logits = forward(teacher, dr.X[idx])
            cache = _forward_cache(work, dr.X[idx])
            kl, d_kl = kl_teacher_student(t_logits, cache["logits"], temp)
            ce, d_ce = cross_entropy_grad_logits(cache["logits"], dr.y[idx])
            if not np.isfinite(kl + ce):
                raise DivergenceError(state.step)
            grads = backward(work, cache, d_logits=d_kl + d_ce, freeze_encoder=freeze)
            apply_sgd_step(work, grads, state, cfg.base)
            visits += idx.size
    check_finite(work, state.step)
    return UnlearnResult(work, visits)


def retrain_gold(dr: Dataset, base_cfg: TrainConfig,
                 hidden: int | None = None, feat_dim: int | None = None) -> UnlearnResult:
    """Train from a fresh seeded initialization on the retain set only."""
    if dr.n == 0:
        raise DegenerateInputError("retraining needs a nonempty retain set")
    kwargs = {}
    if hidden is not None:
        kwargs["hidden"] = hidden
    if feat_dim is not None:
        kwargs["feat_dim"] = feat_dim
    params = init_params(dr.X.shape[1], dr.num_classes, base_cfg.seed, **kwargs)
    params = sgd_train(params, dr, base_cfg)
    return UnlearnResult(params, base_cfg.epochs * dr.n)


def run_unlearning(theta_o: MlpParams, split: ForgetSplit,
                   cfg: UnlearnConfig) -> UnlearnResult:
    """Dispatch a method over a forget split."""
    m = cfg.method
    if m == "FT":
        return unlearn_ft(theta_o, split.Dr, cfg)
    if m == "GA":
        return unlearn_ga(theta_o, split.Df, cfg)
    if m == "RL":
        return unlearn_rl(theta_o, split.Df, cfg)
    if m == "PL":
        return unlearn_pl(theta_o, split.Df, cfg)
    if m == "SalUn":
        return unlearn_salun(theta_o, split.Df, cfg)
    if m == "DUCK":
        return unlearn_duck(theta_o, split.Df, split.Dr, cfg)
    if m == "CU":
        return unlearn_cu(theta_o, split.Df, split.Dr, cfg)
    if m == "SCRUB":
        return unlearn_scrub(theta_o, split.Df, split.Dr, cfg)
    if m == "SCAR":
        return unlearn_scar(theta_o, split.Df, split.Dr, cfg)
    if m == "RETRAIN":
        return retrain_gold(
            split.Dr, cfg.base,
            hidden=theta_o.W1.shape[1], feat_dim=theta_o.feat_dim,
        )
    raise ConfigError(f"unknown method {m!r}")
