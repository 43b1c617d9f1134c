"""Acceptance suite: one module per release gate, one PASS line per criterion.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion
lines.  Criteria 5-10 evaluate the shipped default experiment
(configs/default.json); 1-4 are exact-arithmetic and oracle gates.
"""

import json
import os
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from unlbench.data import Dataset
from unlbench.harness import (
    ExperimentConfig,
    _method_seed,
    build_scenario,
    run_scenario,
    sweep_dp_noise,
)
from unlbench.metrics import (
    LogitGaps,
    ReprScores,
    DownstreamRepr,
    compute_agl,
    compute_agr,
    compute_cka,
    compute_hlr,
    compute_knn_accuracy,
    last_layer_analysis,
    stratified_split,
)
from unlbench.model import BLOCKS, forward, grad_cross_entropy, init_params
from unlbench.rng import make_rng

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")

REPO = Path(__file__).resolve().parent.parent
DEFAULT_CONFIG = REPO / "configs" / "default.json"
_SUITE_START = time.perf_counter()


def report_line(criterion, ok, detail):
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    """One full run of the shipped default scenario, reports plus context."""
    out = tmp_path_factory.mktemp("default_run")
    doc = json.loads(DEFAULT_CONFIG.read_text())
    doc["output_dir"] = str(out)
    cfg = ExperimentConfig.from_dict(doc)
    ctx = build_scenario(cfg)
    reports, models = run_scenario(cfg, emit=True, ctx=ctx)
    rows = {}
    for r in reports:
        rows.setdefault(r.method, r)
    return cfg, ctx, reports, rows, models, out


def mean_cka_ur(row):
    return float(np.mean([d.cka_ur for d in row.repr_scores.per_dataset.values()]))


def mean_cka_uo(row):
    return float(np.mean([d.cka_uo for d in row.repr_scores.per_dataset.values()]))


def test_criterion_01_metric_arithmetic_vs_published_rows():
    t0 = time.perf_counter()
    agl_pl = compute_agl(LogitGaps(0.010, 0.795, 0.010, 0.769,
                                   0.010, 0.035, 0.010, 0.009))
    agl_duck = compute_agl(LogitGaps(0.009, 0.746, 0.009, 0.745,
                                     0.009, 0.014, 0.009, 0.011))
    row = lambda g, c: DownstreamRepr(0.8, 0.8, g, c, 0.9)
    agr_duck = compute_agr(ReprScores({
        "office-home": row(0.025, 0.907), "cub": row(0.021, 0.832),
        "domainnet": row(0.007, 0.849)}), "random")
    agr_pl = compute_agr(ReprScores({
        "office-home": row(0.030, 0.916), "cub": row(0.064, 0.847),
        "domainnet": row(0.020, 0.845)}), "random")
    hlr_duck = compute_hlr(0.96, 0.85)
    hlr_pl = compute_hlr(0.94, 0.84)
    elapsed = time.perf_counter() - t0
    checks = [
        abs(agl_pl - 0.94) <= 0.005, abs(agl_duck - 0.96) <= 0.005,
        abs(agr_duck - 0.85) <= 0.005, abs(agr_pl - 0.84) <= 0.005,
        abs(hlr_duck - 0.90) <= 0.005, abs(hlr_pl - 0.89) <= 0.005,
        elapsed < 1.0,
    ]
    report_line(1, all(checks),
                f"AGL {agl_pl:.4f}/{agl_duck:.4f} AGR {agr_pl:.4f}/{agr_duck:.4f} "
                f"H-LR {hlr_pl:.4f}/{hlr_duck:.4f} in {elapsed:.3f}s")


def _hsic_double_sum(k, l):
    n = k.shape[0]
    h = np.eye(n) - np.ones((n, n)) / n
    kc, lc = h @ k @ h, h @ l @ h
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += kc[i, j] * lc[i, j]
    return total / (n - 1) ** 2


def test_criterion_02_cka_property_suite():
    t0 = time.perf_counter()
    worst_self = worst_sym = worst_orth = worst_scale = worst_oracle = 0.0
    for inst in range(100):
        rng = make_rng(2000 + inst, 0)
        n = int(rng.integers(6, 21))
        xa = rng.standard_normal((n, int(rng.integers(2, 9))))
        xb = rng.standard_normal((n, int(rng.integers(2, 9))))
        worst_self = max(worst_self, abs(compute_cka(xa, xa.copy()) - 1.0))
        worst_sym = max(worst_sym, abs(compute_cka(xa, xb) - compute_cka(xb, xa)))
        q, _ = np.linalg.qr(rng.standard_normal((xa.shape[1], xa.shape[1])))
        worst_orth = max(worst_orth, abs(compute_cka(xa, xa @ q) - 1.0))
        scale = float(rng.uniform(0.1, 10.0))
        worst_scale = max(worst_scale,
                          abs(compute_cka(xa, xb) - compute_cka(xa, scale * xb)))
        ka, kb = xa @ xa.T, xb @ xb.T
        oracle = _hsic_double_sum(ka, kb) / np.sqrt(
            _hsic_double_sum(ka, ka) * _hsic_double_sum(kb, kb))
        worst_oracle = max(worst_oracle, abs(compute_cka(xa, xb) - oracle))
    elapsed = time.perf_counter() - t0
    ok = all(w <= 1e-9 for w in
             (worst_self, worst_sym, worst_orth, worst_scale, worst_oracle)) \
        and elapsed < 10.0
    report_line(2, ok,
                f"worst: self {worst_self:.2e} sym {worst_sym:.2e} "
                f"orth {worst_orth:.2e} scale {worst_scale:.2e} "
                f"oracle {worst_oracle:.2e} in {elapsed:.2f}s")


def _oracle_knn_accuracy(features, labels, k, split_seed):
    labels = np.asarray(labels, dtype=np.int64)
    rng = make_rng(split_seed, 0)
    train_idx, test_idx = stratified_split(labels, 0.8, rng)
    num_classes = int(labels.max()) + 1

    def unit(v):
        n = np.linalg.norm(v)
        return v / n if n > 0 else v

    correct = 0
    for ti in test_idx:
        uq = unit(features[ti])
        entries = []
        for rank, tj in enumerate(train_idx):
            entries.append((1.0 - float(np.dot(unit(features[tj]), uq)),
                            int(labels[tj]), rank))
        entries.sort()
        counts = [0] * num_classes
        for _, lab, _ in entries[:k]:
            counts[lab] += 1
        best = 0
        for c in range(num_classes):
            if counts[c] > counts[best]:
                best = c
        correct += int(best == labels[ti])
    return correct / len(test_idx)


def test_criterion_03_knn_oracle_equivalence():
    mismatches = 0
    for inst in range(200):
        rng = make_rng(3000 + inst, 0)
        c = int(rng.integers(2, 5))
        per = int(rng.integers(8, 100 // c + 1))
        protos = rng.standard_normal((c, 6))
        x = np.vstack([protos[i] + 0.8 * rng.standard_normal((per, 6))
                       for i in range(c)])
        y = np.repeat(np.arange(c), per)
        if compute_knn_accuracy(x, y, 5, inst) != _oracle_knn_accuracy(x, y, 5, inst):
            mismatches += 1
    report_line(3, mismatches == 0,
                f"{mismatches} mismatches over 200 seeded instances (n <= 100, k = 5)")


def test_criterion_04_gradient_correctness():
    worst = 0.0
    for seed in range(20):
        params = init_params(5, 4, seed, hidden=7, feat_dim=3)
        rng = make_rng(seed, 99)
        for b in BLOCKS:
            arr = getattr(params, b)
            arr += 0.3 * rng.standard_normal(arr.shape)
        x = rng.standard_normal((3, 5))
        y = rng.integers(0, 4, 3)
        grads, _ = grad_cross_entropy(params, x, y)
        h = 1e-5
        for b in BLOCKS:
            arr = getattr(params, b)
            num = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                i = it.multi_index
                orig = arr[i]
                arr[i] = orig + h
                _, up = grad_cross_entropy(params, x, y)
                arr[i] = orig - h
                _, down = grad_cross_entropy(params, x, y)
                arr[i] = orig
                num[i] = (up - down) / (2 * h)
            denom = max(np.abs(num).max(), 1e-8)
            worst = max(worst, np.abs(grads[b] - num).max() / denom)
    report_line(4, worst < 1e-4,
                f"worst relative error {worst:.2e} over 20 seeded cases, all blocks")


def test_criterion_05_gold_standard_sanity(default_run):
    _, _, _, rows, _, out = default_run
    retr = rows["retrained"]
    csv_rows = (out / "report.csv").read_text().splitlines()
    retr_csv = [r.split(",") for r in csv_rows if r.startswith("retrained,")][0]
    header = csv_rows[0].split(",")
    fa_csv = retr_csv[header.index("fa")]
    agl_csv = retr_csv[header.index("agl")]
    checks = [
        retr.logit.fa <= 0.01,
        retr.agl == 1.0, retr.agr == 1.0, retr.hlr == 1.0,
        float(fa_csv) <= 0.01, agl_csv == "1.000000",
    ]
    report_line(5, all(checks),
                f"FA(retr) {retr.logit.fa:.4f} AGL/AGR/H-LR "
                f"{retr.agl}/{retr.agr}/{retr.hlr}; csv fa={fa_csv} agl={agl_csv}")


def test_criterion_06_qualitative_findings(default_run):
    cfg, ctx, _, rows, _, _ = default_run
    ga, ft = rows["GA"], rows["FT"]
    collapse_ok = (mean_cka_ur(ga) < mean_cka_ur(ft)
                   and ga.logit.ra <= ft.logit.ra - 0.30)
    diagonal_ok = all(mean_cka_uo(rows[m]) > mean_cka_ur(rows[m])
                      for m in ("PL", "FT", "DUCK"))
    idx = [m.method for m in cfg.methods].index("PL")
    pl_cfg = cfg.methods[idx].with_seed(_method_seed(cfg.master_seed, idx, 0))
    last = last_layer_analysis(ctx.theta_o, ctx.theta_r, ctx.split, pl_cfg)
    shortcut_ok = last.cka_full_vs_head > 0.9
    report_line(6, collapse_ok and diagonal_ok and shortcut_ok,
                f"(i) GA cka {mean_cka_ur(ga):.3f} < FT {mean_cka_ur(ft):.3f}, "
                f"RA gap {ft.logit.ra - ga.logit.ra:.3f}; "
                f"(ii) diagonal holds for PL/FT/DUCK; "
                f"(iii) PL full-vs-head CKA {last.cka_full_vs_head:.4f}")


def test_criterion_07_top_scenario_stress(default_run):
    cfg, ctx, _, _, _, _ = default_run
    top_doc = json.loads(DEFAULT_CONFIG.read_text())
    top_doc["scenario"] = {"kind": "top", "n_forget": cfg.scenario.n_forget,
                           "related_dataset": "cub-like"}
    top_ctx = build_scenario(ExperimentConfig.from_dict(top_doc))
    probe = ctx.probes["cub-like"]
    cka_random = compute_cka(forward(ctx.theta_o, probe)[0],
                             forward(ctx.theta_r, probe)[0])
    cka_top = compute_cka(forward(top_ctx.theta_o, probe)[0],
                          forward(top_ctx.theta_r, probe)[0])
    report_line(7, cka_top < cka_random,
                f"CKA(theta_o, theta_r) top {cka_top:.4f} < random {cka_random:.4f} "
                f"on the a=0.9 downstream probe")


def test_criterion_08_dp_noise_cliff(default_run):
    cfg, ctx, _, _, _, _ = default_run
    sigmas = [0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 30.0]
    rows, _ = sweep_dp_noise(cfg, "PL", sigmas, ctx=ctx)
    knn = [r[1] for r in rows]
    eval_name = next(iter(ctx.downstreams))
    chance = 1.0 / ctx.downstreams[eval_name].num_classes
    small_ok = abs(knn[1] - knn[0]) <= 0.02
    cliff_ok = knn[-1] <= chance + 0.10
    report_line(8, small_ok and cliff_ok,
                f"knn {['%.3f' % v for v in knn]}; smallest-sigma gap "
                f"{abs(knn[1] - knn[0]):.4f} <= 0.02; floor {knn[-1]:.3f} <= "
                f"chance+0.1 = {chance + 0.10:.3f} on {eval_name}")


def test_criterion_09_cli_determinism(tmp_path):
    digests = []
    for i, threads in enumerate(("1", "1", "8")):
        out = tmp_path / f"run{i}"
        env = dict(os.environ, UNLBENCH_THREADS=threads)
        proc = subprocess.run(
            [sys.executable, "-m", "unlbench.cli", "run",
             "--config", str(DEFAULT_CONFIG), "--out", str(out)],
            capture_output=True, text=True, env=env, cwd=REPO,
        )
        assert proc.returncode == 0, proc.stderr
        digests.append((out / "report.json").read_bytes())
    ok = digests[0] == digests[1] == digests[2]
    report_line(9, ok,
                "report.json byte-identical across two runs and across "
                "UNLBENCH_THREADS=1 vs 8")


def test_criterion_10_mia_direction(default_run):
    _, _, _, rows, _, _ = default_run
    retr, orig = rows["retrained"].mia, rows["original"].mia
    ok = retr >= 0.9 and orig <= retr - 0.2
    report_line(10, ok,
                f"mia(retrained) {retr:.3f} >= 0.9; mia(original) {orig:.3f} "
                f"<= {retr - 0.2:.3f}")


def test_supplementary_default_run_all_rows_valid(default_run):
    _, _, reports, _, _, _ = default_run
    assert len(reports) == 11  # original + retrained + nine methods
    for r in reports:
        assert r.status == "ok", (r.method, r.status)
        for v in (r.agl, r.agr, r.hlr, r.mia):
            assert 0.0 <= v <= 1.0, (r.method, v)


def test_supplementary_sample_visit_ordering(default_run):
    # Deterministic cost accounting: methods that consume the retain set
    # must visit strictly more training rows than forget-only methods.
    _, _, _, rows, _, _ = default_run
    retain_users = ("FT", "DUCK", "CU", "SCRUB", "SCAR", "retrained")
    forget_only = ("GA", "RL", "PL", "SalUn")
    least_retain = min(rows[m].sample_visits for m in retain_users)
    most_forget = max(rows[m].sample_visits for m in forget_only)
    assert least_retain > most_forget, (least_retain, most_forget)
    assert all(rows[m].rte_seconds >= 0 for m in rows)


def test_supplementary_suite_runtime():
    elapsed = time.perf_counter() - _SUITE_START
    print(f"ACCEPTANCE runtime: {elapsed:.1f}s (budget 300s)")
    assert elapsed < 300.0
