"""Experiment orchestration: the parse -> scenes -> train -> evaluate pipeline,
the (observation ratio x placement) grid, and random hyperparameter search."""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .chebnet import TrainConfig, TrainResult, build_model, save_checkpoint, train
from .evaluation import EvalReport, evaluate, generate_mask
from .network import Network, graph_diameter, parse_inp
from .scenegen import SceneConfig, SceneSet, build_sceneset, load_sceneset, save_sceneset, scene_config_from_dict
from .spectral import WeightScheme, laplacian_for

DEFAULT_RATIOS = (0.05, 0.1, 0.2, 0.4, 0.8)

# per-layer (order, channels) presets for the bundled benchmark networks
DEFAULT_TOPOLOGIES: dict[str, tuple[tuple[int, int], ...]] = {
    "anytown": ((39, 14), (43, 20), (45, 27)),
    "ctown": ((200, 60), (200, 60), (20, 30)),
    "richmond": ((240, 120), (120, 60), (20, 30)),
}


class UnknownNetwork(Exception):
    pass


def default_topology(network_name: str) -> tuple[tuple[int, int], ...]:
    key = network_name.lower()
    if key not in DEFAULT_TOPOLOGIES:
        raise UnknownNetwork(
            f"no builtin topology for {network_name!r}; pass one explicitly")
    return DEFAULT_TOPOLOGIES[key]


def child_seed(base_seed: int, ratio_idx: int, placement_idx: int) -> int:
    """Collision-free derived seed for one grid cell."""
    digest = hashlib.sha256(
        f"{base_seed}:{ratio_idx}:{placement_idx}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def receptive_field_gap(topology, diameter: int) -> int:
    """Hops by which the stacked kernels fall short of covering the graph."""
    reach = sum(order - 1 for order, _ in topology)
    return max(0, diameter - reach)


def check_receptive_field(topology, diameter: int) -> None:
    gap = receptive_field_gap(topology, diameter)
    if gap > 0:
        warnings.warn(
            f"kernel reach {sum(o - 1 for o, _ in topology)} is below the graph "
            f"diameter {diameter}; observed data may not reach every node",
            stacklevel=2)


@dataclass(frozen=True)
class ExperimentPlan:
    inp_path: str
    scheme: WeightScheme = WeightScheme.BINARY
    observation_ratios: tuple[float, ...] = DEFAULT_RATIOS
    placements_per_ratio: int = 20
    topology: tuple[tuple[int, int], ...] | None = None  # None: by file stem
    train: TrainConfig = field(default_factory=TrainConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    base_seed: int = 0

    def validate(self):
        if not all(0.0 < r <= 1.0 for r in self.observation_ratios):
            raise ValueError("observation ratios must lie in (0, 1]")
        if self.placements_per_ratio < 1:
            raise ValueError("placements_per_ratio must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scheme"] = self.scheme.value
        return d


def plan_from_dict(raw: dict) -> ExperimentPlan:
    plan = ExperimentPlan(inp_path=raw["inp_path"])
    if "scheme" in raw:
        plan = replace(plan, scheme=WeightScheme(raw["scheme"]))
    if "observation_ratios" in raw:
        plan = replace(plan, observation_ratios=tuple(raw["observation_ratios"]))
    if "placements_per_ratio" in raw:
        plan = replace(plan, placements_per_ratio=int(raw["placements_per_ratio"]))
    if raw.get("topology") is not None:
        plan = replace(plan, topology=tuple(tuple(t) for t in raw["topology"]))
    if "train" in raw:
        plan = replace(plan, train=TrainConfig(**raw["train"]))
    if "scene" in raw:
        plan = replace(plan, scene=scene_config_from_dict(raw["scene"]))
    if "base_seed" in raw:
        plan = replace(plan, base_seed=int(raw["base_seed"]))
    return plan


def resolve_topology(plan_topology, inp_path) -> tuple[tuple[int, int], ...]:
    if plan_topology is not None:
        return tuple(tuple(t) for t in plan_topology)
    return default_topology(Path(inp_path).stem)


def write_history_csv(result: TrainResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for row in result.history_rows():
            writer.writerow([row[0], f"{row[1]:.17g}", f"{row[2]:.17g}"])


def _plan_fingerprint(plan: ExperimentPlan, inp_bytes: bytes) -> str:
    payload = json.dumps(plan.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload + inp_bytes).hexdigest()


def ensure_sceneset(net: Network, cfg: SceneConfig, cache_dir) -> SceneSet:
    """Build (or reuse an already persisted) scene set under cache_dir."""
    cache = Path(cache_dir)
    if (cache / "sceneset.json").exists():
        return load_sceneset(cache)
    ss = build_sceneset(net, cfg)
    save_sceneset(ss, cache)
    return ss


def run_single(net: Network, lap, sceneset: SceneSet, topology, ratio: float,
               seed: int, train_cfg: TrainConfig, out_dir=None,
               header_extra: dict | None = None):
    """One placement: mask -> init -> train -> evaluate (-> persist)."""
    mask = generate_mask(net.n_junctions, ratio, seed)
    model = build_model(topology, lap, seed=seed)
    result = train(model, sceneset, mask, replace(train_cfg, seed=seed))
    report = evaluate(model, sceneset, mask)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        header = {
            "scheme": lap.scheme.value,
            "lambda_max": lap.lambda_max,
            "scaler": asdict(sceneset.scaler),
            "mask_bits": mask.bits.tolist(),
            "mask_ratio": ratio,
            "mask_seed": seed,
            "seed": seed,
            "train": asdict(train_cfg),
            "best_epoch": result.best_epoch,
            "best_val": result.best_val,
        }
        header.update(header_extra or {})
        save_checkpoint(out / "model.ckpt", model, header)
        write_history_csv(result, out / "history.csv")
        report.save_json(out / "report.json")
    return model, result, report


def run_experiment(plan: ExperimentPlan, out_dir) -> dict:
    """Full grid over observation ratios and placements; writes a summary.

    Per-run artifacts live in content-addressed directories, so reruns with
    the same plan and seeds are idempotent. Failed runs are recorded and the
    grid continues.
    """
    plan.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inp_bytes = Path(plan.inp_path).read_bytes()
    net = parse_inp(inp_bytes.decode())
    topology = resolve_topology(plan.topology, plan.inp_path)
    check_receptive_field(topology, graph_diameter(net))
    lap = laplacian_for(net, plan.scheme)
    sceneset = ensure_sceneset(net, plan.scene, out / "scenes")
    fingerprint = _plan_fingerprint(plan, inp_bytes)

    rows, failures = [], []
    for ratio_idx, ratio in enumerate(plan.observation_ratios):
        for placement in range(plan.placements_per_ratio):
            seed = child_seed(plan.base_seed, ratio_idx, placement)
            run_id = hashlib.sha256(f"{fingerprint}:{seed}".encode()).hexdigest()[:16]
            run_dir = out / "runs" / run_id
            try:
                if (run_dir / "report.json").exists():
                    with open(run_dir / "report.json") as fh:
                        report_dict = json.load(fh)
                else:
                    _, _, report = run_single(
                        net, lap, sceneset, topology, ratio, seed, plan.train,
                        out_dir=run_dir,
                        header_extra={"inp_sha256": hashlib.sha256(inp_bytes).hexdigest(),
                                      "ratio": ratio, "placement": placement,
                                      "topology": [list(t) for t in topology]})
                    report_dict = report.to_json_dict()
                rows.append({
                    "ratio": ratio, "placement": placement, "seed": seed,
                    "run_id": run_id,
                    "mean_rel_error": report_dict["mean_rel_error"],
                    "taylor": report_dict["taylor"],
                    "baseline_taylor": report_dict["baseline_taylor"],
                })
            except Exception as exc:  # keep the grid going
                failures.append({"ratio": ratio, "placement": placement,
                                 "seed": seed, "error": f"{type(exc).__name__}: {exc}"})
    per_ratio = {}
    for ratio in plan.observation_ratios:
        got = [r for r in rows if r["ratio"] == ratio]
        if not got:
            continue
        per_ratio[f"{ratio:g}"] = {
            "runs": len(got),
            "mean_rel_error": float(np.mean([r["mean_rel_error"] for r in got])),
            "taylor": {
                key: float(np.mean([r["taylor"][key] for r in got]))
                for key in ("normalized_std", "correlation", "centered_rmse")},
            "baseline_taylor": {
                key: float(np.mean([r["baseline_taylor"][key] for r in got]))
                for key in ("normalized_std", "correlation", "centered_rmse")},
        }
    summary = {"plan": plan.to_dict(), "fingerprint": fingerprint,
               "runs": rows, "failures": failures, "per_ratio": per_ratio}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


@dataclass(frozen=True)
class SearchSpace:
    n_layers: tuple[int, int] = (2, 4)
    order_range: tuple[int, int] = (30, 50)
    channel_range: tuple[int, int] = (30, 50)
    weight_decay_range: tuple[float, float] = (1e-6, 1e-4)
    schemes: tuple[str, ...] = ("binary", "weighted", "logarithmic")


def space_from_dict(raw: dict) -> SearchSpace:
    space = SearchSpace()
    kwargs = {}
    for key in ("n_layers", "order_range", "channel_range", "weight_decay_range"):
        if key in raw:
            kwargs[key] = tuple(raw[key])
    if "schemes" in raw:
        kwargs["schemes"] = tuple(raw["schemes"])
    return replace(space, **kwargs)


def sample_search_config(space: SearchSpace, rng: np.random.Generator) -> dict:
    n_layers = int(rng.integers(space.n_layers[0], space.n_layers[1] + 1))
    topology = [(int(rng.integers(space.order_range[0], space.order_range[1] + 1)),
                 int(rng.integers(space.channel_range[0], space.channel_range[1] + 1)))
                for _ in range(n_layers)]
    lo, hi = space.weight_decay_range
    wd = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    scheme = str(rng.choice(list(space.schemes)))
    return {"topology": topology, "weight_decay": wd, "scheme": scheme}


def random_search(net: Network, sceneset: SceneSet, space: SearchSpace,
                  budget: int, repeats_per_config: int = 5, ratio: float = 0.8,
                  base_seed: int = 0,
                  train_cfg: TrainConfig | None = None) -> dict:
    """Uniform random search over the space, ranked by mean validation loss.

    Each sampled configuration is trained `repeats_per_config` times with
    distinct seeds (fresh mask and init per repeat); failures count as
    infinite loss. Returns ranked configs plus per-evaluation swarm rows.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    base_train = train_cfg or TrainConfig()
    rng = np.random.default_rng([base_seed, 6])
    laplacians = {s: laplacian_for(net, WeightScheme(s)) for s in space.schemes}

    entries, swarm = [], []
    for cfg_idx in range(budget):
        cfg = sample_search_config(space, rng)
        lap = laplacians[cfg["scheme"]]
        losses = []
        for rep in range(repeats_per_config):
            seed = child_seed(base_seed, cfg_idx, rep)
            tcfg = replace(base_train, weight_decay=cfg["weight_decay"], seed=seed)
            try:
                mask = generate_mask(net.n_junctions, ratio, seed)
                model = build_model(cfg["topology"], lap, seed=seed)
                result = train(model, sceneset, mask, tcfg)
                loss = result.best_val
            except Exception as exc:
                warnings.warn(f"search config {cfg_idx} repeat {rep} failed: {exc}")
                loss = np.inf
            losses.append(loss)
            swarm.append({"config": cfg_idx, "repeat": rep,
                          "scheme": cfg["scheme"],
                          "n_layers": len(cfg["topology"]),
                          "val_loss": float(loss)})
        entries.append({"config": cfg_idx, **cfg,
                        "val_losses": [float(v) for v in losses],
                        "mean_val_loss": float(np.mean(losses))})
    entries.sort(key=lambda e: e["mean_val_loss"])
    return {"ranked": entries, "swarm": swarm}


def write_swarm_csv(swarm_rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "repeat", "scheme", "n_layers", "val_loss"])
        for row in swarm_rows:
            writer.writerow([row["config"], row["repeat"], row["scheme"],
                             row["n_layers"], f"{row['val_loss']:.17g}"])


def best_loss_per_scheme(entries) -> dict[str, float]:
    best: dict[str, float] = {}
    for e in entries:
        cur = best.get(e["scheme"], np.inf)
        best[e["scheme"]] = min(cur, e["mean_val_loss"])
    return best
