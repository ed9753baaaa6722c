"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numerical
failure. Relative output paths resolve against $WATERGCN_ARTIFACTS when set.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import chebnet, evaluation, harness, hydraulics, network, scenegen, spectral

DATA_ERRORS = (
    network.NetworkError, scenegen.InvalidRange, scenegen.TooFewScenes,
    scenegen.UnfittedScaler, evaluation.InvalidRatio, evaluation.EmptyMask,
    evaluation.EmptyInput, evaluation.ZeroVariance, spectral.DimensionMismatch,
    spectral.IsolatedNode, hydraulics.InvalidBoundary, harness.UnknownNetwork,
    FileNotFoundError, NotADirectoryError, json.JSONDecodeError, KeyError,
    ValueError,
)
NUMERICAL_ERRORS = (
    hydraulics.NonConvergence, hydraulics.SingularSystem,
    spectral.EigenFailure, chebnet.DivergedLoss,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _out_path(p) -> Path:
    path = Path(p)
    if path.is_absolute():
        return path
    return Path(os.environ.get("WATERGCN_ARTIFACTS", ".")) / path


def _load_network(inp_path):
    return network.parse_inp(Path(inp_path).read_text())


def _load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _resolve_topology(spec_arg: str | None, inp_path):
    if spec_arg is None:
        return harness.default_topology(Path(inp_path).stem)
    if spec_arg.endswith(".json"):
        return tuple(tuple(t) for t in _load_json(spec_arg))
    return harness.default_topology(spec_arg)


def cmd_parse(args) -> int:
    net = _load_network(args.inp)
    summary = network.network_summary(net)
    counts = summary["counts"]
    print(f"{Path(args.inp).name}: {counts['junctions']} junctions, "
          f"{counts['fixed_head_nodes']} fixed-head nodes, "
          f"{counts['pipes']} pipes, {counts['pumps']} pumps, "
          f"{counts['valves']} valves")
    if args.json:
        out = _out_path(args.json)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"summary written to {out}")
    return 0


def cmd_diameter(args) -> int:
    print(network.graph_diameter(_load_network(args.inp)))
    return 0


def cmd_laplacian(args) -> int:
    net = _load_network(args.inp)
    lap = spectral.laplacian_for(net, spectral.WeightScheme(args.scheme),
                                 lambda_max_method=args.lambda_max_method)
    print(f"scheme={lap.scheme.value} n={lap.n_nodes} lambda_max={lap.lambda_max:.12g}")
    if args.export:
        prefix = _out_path(args.export)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        spectral.export_laplacian(lap, f"{prefix}.csv", f"{prefix}.json")
        print(f"dense dump written to {prefix}.csv / {prefix}.json")
    return 0


def _scene_config(args) -> scenegen.SceneConfig:
    cfg = scenegen.scene_config_from_dict(_load_json(args.config)) if args.config \
        else scenegen.SceneConfig()
    if args.n_scenes is not None:
        cfg = replace(cfg, n_scenes=args.n_scenes)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_genscenes(args) -> int:
    net = _load_network(args.inp)
    cfg = _scene_config(args)
    ss = scenegen.build_sceneset(net, cfg)
    out = _out_path(args.out)
    scenegen.save_sceneset(ss, out)
    print(f"{ss.n_scenes} scenes solved ({len(ss.failures)} failures) -> {out}")
    print(f"splits: train={len(ss.splits['train'])} val={len(ss.splits['val'])} "
          f"test={len(ss.splits['test'])}")
    return 0


def _train_config(args) -> chebnet.TrainConfig:
    cfg = chebnet.TrainConfig()
    overrides = {}
    for name in ("max_epochs", "patience", "lr", "weight_decay", "batch_size"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return replace(cfg, **overrides)


def cmd_train(args) -> int:
    net = _load_network(args.inp)
    lap = spectral.laplacian_for(net, spectral.WeightScheme(args.scheme))
    sceneset = scenegen.load_sceneset(args.scenes)
    topology = _resolve_topology(args.topology, args.inp)
    harness.check_receptive_field(topology, network.graph_diameter(net))
    out = _out_path(args.out)
    inp_hash = hashlib.sha256(Path(args.inp).read_bytes()).hexdigest()
    _, result, report = harness.run_single(
        net, lap, sceneset, topology, args.ratio, args.seed, _train_config(args),
        out_dir=out, header_extra={"inp_sha256": inp_hash, "inp_path": str(args.inp)})
    print(f"trained {result.epochs_run} epochs (best epoch {result.best_epoch}, "
          f"val loss {result.best_val:.6g})")
    print(f"test mean relative error {report.mean_rel_error:.4%} "
          f"(baseline {report.baseline_mean_rel_error:.4%}) -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    net = _load_network(args.inp)
    raw = Path(args.checkpoint).read_bytes()
    head_len = int.from_bytes(raw[4:12], "little")
    header = json.loads(raw[12:12 + head_len].decode())
    if "inp_sha256" in header:
        actual = hashlib.sha256(Path(args.inp).read_bytes()).hexdigest()
        if actual != header["inp_sha256"]:
            print("warning: network file differs from the one used at training time",
                  file=sys.stderr)
    lap = spectral.laplacian_for(net, spectral.WeightScheme(header["scheme"]))
    model, _ = chebnet.load_checkpoint(args.checkpoint, lap)
    sceneset = scenegen.load_sceneset(args.scenes)
    mask = evaluation.ObservationMask(
        bits=np.asarray(header["mask_bits"], dtype=np.int8),
        ratio=header["mask_ratio"], seed=header["mask_seed"])
    report = evaluation.evaluate(model, sceneset, mask)
    print(f"mean relative error {report.mean_rel_error:.4%} "
          f"(baseline {report.baseline_mean_rel_error:.4%})")
    t = report.taylor
    print(f"taylor: std {t.normalized_std:.4f} corr {t.correlation:.4f} "
          f"crmse {t.centered_rmse:.4f}")
    if args.out:
        out = _out_path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        report.save_json(out)
        print(f"report written to {out}")
    return 0


def cmd_experiment(args) -> int:
    plan = harness.plan_from_dict(_load_json(args.plan))
    summary = harness.run_experiment(plan, _out_path(args.out))
    print(f"{len(summary['runs'])} runs complete, "
          f"{len(summary['failures'])} failures -> {_out_path(args.out)}")
    return 0


def cmd_search(args) -> int:
    net = _load_network(args.inp)
    sceneset = scenegen.load_sceneset(args.scenes)
    space = harness.space_from_dict(_load_json(args.space)) if args.space \
        else harness.SearchSpace()
    results = harness.random_search(
        net, sceneset, space, budget=args.budget,
        repeats_per_config=args.repeats, ratio=args.ratio,
        base_seed=args.seed, train_cfg=_train_config(args))
    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ranked.json", "w") as fh:
        json.dump(results["ranked"], fh, indent=2, sort_keys=True)
        fh.write("\n")
    harness.write_swarm_csv(results["swarm"], out / "swarm.csv")
    best = results["ranked"][0]
    print(f"best config: scheme={best['scheme']} topology={best['topology']} "
          f"mean val loss {best['mean_val_loss']:.6g}")
    print(f"results -> {out}")
    return 0


def _demo_report(rng: np.random.Generator) -> evaluation.EvalReport:
    """Deterministic fixture report built through the real metric pipeline."""
    scenes, nodes = 120, 22
    profile = 55.0 + 25.0 * np.sin(np.linspace(0.3, 2.6, nodes))
    amplitude = rng.uniform(0.6, 1.3, size=(scenes, 1))
    truth = profile[None, :] * amplitude + rng.normal(0.0, 1.0, (scenes, nodes))
    pred = truth + rng.normal(0.0, 1.2, truth.shape)
    mask = evaluation.generate_mask(nodes, 0.2, seed=11)
    baseline = evaluation.naive_predict(truth, mask)
    return evaluation.build_report(pred, baseline, truth)


def _demo_swarm(rng: np.random.Generator) -> list[dict]:
    rows = []
    offsets = {"binary": 1.0, "logarithmic": 1.05, "weighted": 1.8}
    idx = 0
    for scheme, shift in offsets.items():
        for _ in range(25):
            rows.append({"config": idx, "repeat": 0, "scheme": scheme,
                         "n_layers": int(rng.integers(2, 5)),
                         "val_loss": float(shift * 1e-3 * np.exp(rng.normal(0, 0.5)))})
            idx += 1
    return rows


def _demo_history(rng: np.random.Generator) -> chebnet.TrainResult:
    epochs = 80
    val = 0.05 * np.exp(-np.arange(epochs) / 18.0) + 1e-3
    train_loss = val * rng.uniform(0.85, 0.95, epochs)
    return chebnet.TrainResult(train_loss=list(train_loss), val_loss=list(val),
                               best_epoch=epochs, best_val=float(val[-1]),
                               epochs_run=epochs)


def _write_manifest(path: Path, kind: str, inputs: dict, stem: str, style=None):
    manifest = {"kind": kind, "inputs": inputs,
                "output": {"png": f"figures/{stem}.png", "svg": f"figures/{stem}.svg"}}
    if style:
        manifest["style"] = style
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_export_plots(args) -> int:
    """Write every JSON/CSV artifact the plotting component consumes."""
    out = _out_path(args.out)
    (out / "figures").mkdir(parents=True, exist_ok=True)
    net = _load_network(args.inp)
    with open(out / "network.json", "w") as fh:
        json.dump(network.network_summary(net), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for scheme in spectral.WeightScheme:
        lap = spectral.laplacian_for(net, scheme)
        spectral.export_laplacian(lap, out / f"laplacian_{scheme.value}.csv",
                                  out / f"laplacian_{scheme.value}.json")
        _write_manifest(out / f"manifest_laplacian_{scheme.value}.json", "laplacian",
                        {"matrix_csv": f"laplacian_{scheme.value}.csv",
                         "header_json": f"laplacian_{scheme.value}.json"},
                        f"laplacian_{scheme.value}")

    if args.checkpoint and args.scenes:
        run_dir = Path(args.checkpoint).parent
        for name in ("report.json", "history.csv"):
            src = run_dir / name
            if not src.exists():
                raise FileNotFoundError(f"{src} missing next to the checkpoint")
            (out / name).write_bytes(src.read_bytes())
    else:
        rng = np.random.default_rng(2024)
        _demo_report(rng).save_json(out / "report.json")
        harness.write_history_csv(_demo_history(rng), out / "history.csv")
    swarm_csv = out / "swarm.csv"
    harness.write_swarm_csv(_demo_swarm(np.random.default_rng(2025)), swarm_csv)

    _write_manifest(out / "manifest_ecdf.json", "ecdf", {"report": "report.json"}, "ecdf")
    _write_manifest(out / "manifest_taylor.json", "taylor", {"report": "report.json"},
                    "taylor")
    _write_manifest(out / "manifest_swarm.json", "swarm", {"swarm_csv": "swarm.csv"},
                    "swarm")
    print(f"plot artifacts written to {out}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="watergcn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="validate and summarize an INP file")
    p.add_argument("--inp", required=True)
    p.add_argument("--json", help="write a JSON network summary here")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("diameter", help="print the graph diameter in hops")
    p.add_argument("--inp", required=True)
    p.set_defaults(func=cmd_diameter)

    p = sub.add_parser("laplacian", help="build the scaled Laplacian")
    p.add_argument("--inp", required=True)
    p.add_argument("--scheme", default="binary",
                   choices=[s.value for s in spectral.WeightScheme])
    p.add_argument("--lambda-max-method", default="auto",
                   choices=["auto", "exact", "power_iteration"])
    p.add_argument("--export", help="path prefix for the CSV + JSON dump")
    p.set_defaults(func=cmd_laplacian)

    p = sub.add_parser("genscenes", help="generate and solve random scenes")
    p.add_argument("--inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="scene config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-scenes", type=int)
    p.set_defaults(func=cmd_genscenes)

    p = sub.add_parser("train", help="train one model for one sensor placement")
    p.add_argument("--inp", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--topology", help="builtin name or JSON file of [order, channels]")
    p.add_argument("--scheme", default="binary",
                   choices=[s.value for s in spectral.WeightScheme])
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--inp", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", help="write the evaluation report JSON here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a ratio x placement grid from a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("search", help="random hyperparameter search")
    p.add_argument("--inp", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--space", help="search space JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("export-plots",
                       help="write the artifacts the plots package consumes")
    p.add_argument("--inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", help="use this run's report/history instead of demo data")
    p.add_argument("--scenes")
    p.set_defaults(func=cmd_export_plots)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except DATA_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
