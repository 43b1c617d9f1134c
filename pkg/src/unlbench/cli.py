"""Command-line surface of the benchmark.

Exit codes: 0 on success, 1 on configuration errors (bad JSON, bad flags,
bad values), 2 on runtime failures.  All config files are JSON documents
with a top-level "version" field.
"""

import argparse
import json
import sys
from pathlib import Path

from .data import (
    SyntheticSpec,
    generate_universe,
    load_dataset,
    load_split,
    save_dataset,
    save_split,
    split_random_forget,
    split_top_forget,
)
from .errors import ConfigError
from .harness import (
    ExperimentConfig,
    build_scenario,
    default_method_config,
    emit_report,
    evaluate_model,
    run_scenario,
    select_top_classes,
    sweep_dp_noise,
    sweep_hyperparameters,
)
from .metrics import MetricsReport, compute_agl, compute_agr, compute_hlr, logit_gaps, mia_efficacy
from .model import (
    ModelCheckpoint,
    TrainConfig,
    init_params,
    load_checkpoint,
    save_checkpoint,
    sgd_train,
)
from .unlearning import UnlearnConfig, run_unlearning


class _Parser(argparse.ArgumentParser):
    # Usage errors are configuration errors: exit 1, not argparse's 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _load_json(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise ConfigError(f"{path}: config must be a JSON object with version 1")
    return doc


def _cmd_gen_data(args) -> int:
    doc = _load_json(args.config)
    spec = SyntheticSpec.from_dict(doc.get("data", doc))
    train, test, downstreams, _ = generate_universe(spec)
    out = Path(args.out)
    meta = {"spec": spec.to_dict(), "seed": spec.prototype_seed}
    save_dataset(train, out / "train", meta)
    save_dataset(test, out / "test", meta)
    for name, ds in downstreams.items():
        save_dataset(ds, out / name, meta)
    print(f"wrote {out}/train, {out}/test and {len(downstreams)} downstream datasets")
    return 0


def _train_config(args) -> TrainConfig:
    if args.config:
        doc = _load_json(args.config)
        cfg = TrainConfig.from_dict(doc.get("train", doc))
    else:
        cfg = TrainConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    cfg = _train_config(args)
    params = init_params(dataset.X.shape[1], dataset.num_classes, cfg.seed)
    params = sgd_train(params, dataset, cfg)
    save_checkpoint(ModelCheckpoint(params, {
        "role": "original", "seed": cfg.seed, "config_hash": cfg.config_hash(),
        "parent_hash": None,
    }), args.out)
    print(f"trained checkpoint written to {args.out}")
    return 0


def _cmd_split(args) -> int:
    train = load_dataset(args.train)
    test = load_dataset(args.test)
    if args.kind == "random":
        split = split_random_forget(train, test, args.n, args.seed)
    else:
        if not args.ranking:
            raise ConfigError("top split requires --ranking (JSON list of class ids)")
        ranking = json.loads(Path(args.ranking).read_text())
        ids = [e["class"] if isinstance(e, dict) else e for e in ranking]
        split = split_top_forget(train, test, args.n, ids)
    save_split(split, args.out)
    print(f"split written to {args.out}; forget classes {list(split.forget_classes)}")
    return 0


def _cmd_unlearn(args) -> int:
    original = load_checkpoint(args.original)
    split = load_split(args.split)
    if args.config:
        doc = _load_json(args.config)
        body = doc.get("unlearn", doc)
        body = {k: v for k, v in body.items() if k != "version"}
        body.setdefault("method", args.method)
        if body["method"] != args.method:
            raise ConfigError(
                f"--method {args.method} conflicts with config method {body['method']}"
            )
        base = default_method_config(args.method).to_dict()
        base_inner = base.pop("base")
        base_inner.update(body.get("base", {}))
        base.update({k: v for k, v in body.items() if k != "base"})
        base["base"] = base_inner
        cfg = UnlearnConfig.from_dict(base)
    else:
        cfg = default_method_config(args.method)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    result = run_unlearning(original.params, split, cfg)
    provenance = {
        "role": f"unlearned:{cfg.method}", "seed": cfg.base.seed,
        "config_hash": cfg.base.config_hash(),
        "parent_hash": original.params.content_hash(),
        "sample_visits": result.sample_visits,
    }
    provenance.update(result.stats)
    save_checkpoint(ModelCheckpoint(result.params, provenance), args.out)
    (Path(args.out) / "unlearn_config.json").write_text(
        json.dumps({"version": 1, **cfg.to_dict()}, indent=2, sort_keys=True) + "\n"
    )
    print(f"unlearned checkpoint ({cfg.method}) written to {args.out}")
    return 0


def _cmd_select_top(args) -> int:
    model = load_checkpoint(args.model)
    train = load_dataset(args.train)
    downstream = load_dataset(args.downstream)
    ranking = select_top_classes(model.params, train, downstream, args.n)
    print(json.dumps([{"class": c, "score": s} for c, s in ranking.entries], indent=2))
    return 0


def _cmd_eval(args) -> int:
    from .data import Dataset
    from .rng import make_rng

    unlearned = load_checkpoint(args.unlearned)
    retrained = load_checkpoint(args.retrained)
    original = load_checkpoint(args.original)
    split = load_split(args.split)
    downstreams = {Path(d).name: load_dataset(d) for d in args.downstreams}

    from .metrics import DownstreamRepr, ReprScores, compute_cka, compute_knn_accuracy
    from .model import forward

    per_dataset = {}
    for name, ds in downstreams.items():
        rng = make_rng(args.seed, 0)
        idx = rng.choice(ds.n, size=min(args.probe_rows, ds.n), replace=False)
        probe_u = forward(unlearned.params, ds.X[idx])[0]
        knn_u = compute_knn_accuracy(forward(unlearned.params, ds.X)[0], ds.y, 5, args.seed)
        knn_r = compute_knn_accuracy(forward(retrained.params, ds.X)[0], ds.y, 5, args.seed)
        per_dataset[name] = DownstreamRepr(
            knn_acc_u=knn_u, knn_acc_r=knn_r, g_knn=abs(knn_u - knn_r),
            cka_ur=compute_cka(probe_u, forward(retrained.params, ds.X[idx])[0]),
            cka_uo=compute_cka(probe_u, forward(original.params, ds.X[idx])[0]),
        )
    scores = ReprScores(per_dataset)
    gaps = logit_gaps(unlearned.params, retrained.params, split)
    agl = compute_agl(gaps)
    agr = compute_agr(scores, args.scenario_kind, args.related)

    rng = make_rng(args.seed, 1)
    n = min(split.Dr.n, split.Dr_te.n, 500)
    mi = rng.choice(split.Dr.n, size=n, replace=False)
    ni = rng.choice(split.Dr_te.n, size=n, replace=False)
    mia = mia_efficacy(
        unlearned.params,
        Dataset(split.Dr.X[mi], split.Dr.y[mi], split.Dr.num_classes),
        Dataset(split.Dr_te.X[ni], split.Dr_te.y[ni], split.Dr_te.num_classes),
        split.Df, seed=args.seed,
    )
    report = MetricsReport(
        method=unlearned.provenance.get("role", "unlearned"),
        scenario=args.scenario_kind, seed=args.seed, logit=gaps,
        repr_scores=scores, agl=agl, agr=agr, hlr=compute_hlr(agl, agr), mia=mia,
    )
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.from_dict(_load_json(args.config))
    if args.out:
        cfg = type(cfg).from_dict({**cfg.to_dict(), "output_dir": args.out})
    reports, _ = run_scenario(cfg)
    failed = [r for r in reports if r.status != "ok"]
    print(f"{len(reports)} rows written to {cfg.output_dir} ({len(failed)} failed)")
    return 0


def _cmd_sweep(args) -> int:
    doc = _load_json(args.config)
    sweep = doc.get("sweep", {})
    cfg = ExperimentConfig.from_dict(doc)
    method = args.method or sweep.get("method")
    if not method:
        raise ConfigError("sweep needs a method (--method or config sweep.method)")
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "lr-epochs":
        lr_grid = sweep.get("lr_grid", [0.005, 0.01, 0.05])
        epoch_grid = sweep.get("epoch_grid", [5, 10, 15])
        _, text = sweep_hyperparameters(cfg, method, lr_grid, epoch_grid)
        path = out / f"sweep_lr_epochs_{method}.csv"
    else:
        sigma_grid = sweep.get("sigma_grid", [0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 30.0])
        _, text = sweep_dp_noise(cfg, method, sigma_grid)
        path = out / f"sweep_dp_noise_{method}.csv"
    path.write_text(text)
    print(f"sweep written to {path}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="unlbench",
                     description="Desk-scale machine-unlearning benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic universe")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("split", help="build a forget/retain split directory")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--kind", choices=("random", "top"), default="random")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ranking", help="JSON ranking file for --kind top")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_split)

    p = sub.add_parser("unlearn", help="run one unlearning method")
    p.add_argument("--method", required=True)
    p.add_argument("--original", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_unlearn)

    p = sub.add_parser("select-top", help="rank train classes by downstream similarity")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--downstream", required=True)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(fn=_cmd_select_top)

    p = sub.add_parser("eval", help="evaluate an unlearned checkpoint")
    p.add_argument("--unlearned", required=True)
    p.add_argument("--retrained", required=True)
    p.add_argument("--original", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--downstreams", nargs="+", required=True)
    p.add_argument("--scenario-kind", choices=("random", "top"), default="random")
    p.add_argument("--related")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probe-rows", type=int, default=256)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("run", help="run the full benchmark from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("sweep", help="hyperparameter or DP-noise sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--kind", choices=("lr-epochs", "dp-noise"), required=True)
    p.add_argument("--method")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
