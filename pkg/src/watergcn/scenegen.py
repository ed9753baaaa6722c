"""Randomized demand/pump-speed scene generation with Latin hypercube stratification.

Each scene multiplies junction base demands by truncated-normal factors,
rescales the total to a uniform day-night factor of the base total, and draws
pump speeds uniformly inside their feasibility bounds. Latin hypercube
stratification over the joint space guarantees no repeated scenes. Scenes are
solved, split 0.6/0.2/0.2, and a scaler is fitted on the training rows only.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import truncnorm

from .hydraulics import BatchResult, BoundaryConditions, SolverOptions, batch_solve
from .network import Network

SPLIT_RATIOS = (0.6, 0.2, 0.2)


class InvalidRange(Exception):
    pass


class TooFewScenes(Exception):
    pass


class UnfittedScaler(Exception):
    pass


@dataclass(frozen=True)
class TruncNormSpec:
    mean: float = 1.0
    std: float = 0.33
    lower: float = 0.1
    upper: float = 2.5

    def validate(self):
        if self.lower > self.upper:
            raise InvalidRange(f"lower {self.lower} > upper {self.upper}")
        if self.std < 0 or (self.std == 0 and self.lower != self.upper):
            raise InvalidRange("std must be positive (or the range degenerate)")


@dataclass(frozen=True)
class UniformSpec:
    lower: float = 0.3
    upper: float = 1.1

    def validate(self):
        if self.lower > self.upper:
            raise InvalidRange(f"lower {self.lower} > upper {self.upper}")


@dataclass(frozen=True)
class SceneConfig:
    n_scenes: int = 1000
    demand_multiplier: TruncNormSpec = field(default_factory=TruncNormSpec)
    daynight_factor: UniformSpec = field(default_factory=UniformSpec)
    pump_speed_range: tuple[float, float] | None = None  # None: per-pump bounds
    seed: int = 0

    def validate(self):
        if self.n_scenes < 1:
            raise InvalidRange("n_scenes must be >= 1")
        self.demand_multiplier.validate()
        self.daynight_factor.validate()
        if self.pump_speed_range is not None:
            lo, hi = self.pump_speed_range
            if not (0 < lo <= hi):
                raise InvalidRange(f"bad pump speed range ({lo}, {hi})")


def scene_config_from_dict(raw: dict) -> SceneConfig:
    cfg = SceneConfig()
    if "demand_multiplier" in raw:
        cfg = replace(cfg, demand_multiplier=TruncNormSpec(**raw["demand_multiplier"]))
    if "daynight_factor" in raw:
        cfg = replace(cfg, daynight_factor=UniformSpec(**raw["daynight_factor"]))
    for key in ("n_scenes", "seed"):
        if key in raw:
            cfg = replace(cfg, **{key: raw[key]})
    if raw.get("pump_speed_range") is not None:
        cfg = replace(cfg, pump_speed_range=tuple(raw["pump_speed_range"]))
    return cfg


def _lhs_unit(rng: np.random.Generator, n: int, dims: int) -> np.ndarray:
    """(n, dims) Latin hypercube sample over (0, 1): one stratum per row and dim."""
    u = np.empty((n, dims))
    for d in range(dims):
        u[:, d] = (rng.permutation(n) + rng.random(n)) / n
    return u


def _truncnorm_ppf(u: np.ndarray, spec: TruncNormSpec) -> np.ndarray:
    if spec.lower == spec.upper:
        return np.full_like(u, spec.lower)
    a = (spec.lower - spec.mean) / spec.std
    b = (spec.upper - spec.mean) / spec.std
    return truncnorm.ppf(u, a, b, loc=spec.mean, scale=spec.std)


def sample_boundaries(net: Network, cfg: SceneConfig) -> list[BoundaryConditions]:
    """Latin-hypercube sampled demand/pump-speed scenes (no repetitions)."""
    cfg.validate()
    rng = np.random.default_rng([cfg.seed, 0])
    n_j, n_p = net.n_junctions, len(net.pumps)
    u = _lhs_unit(rng, cfg.n_scenes, n_j + 1 + n_p)

    base = np.array([j.base_demand for j in net.junctions])
    factors = _truncnorm_ppf(u[:, :n_j], cfg.demand_multiplier)
    dn = cfg.daynight_factor
    daynight = dn.lower + u[:, n_j] * (dn.upper - dn.lower)

    demands = base[None, :] * factors
    base_total = base.sum()
    totals = demands.sum(axis=1)
    if base_total > 0:
        scale = np.where(totals > 0, daynight * base_total / np.maximum(totals, 1e-300), 1.0)
        demands *= scale[:, None]

    speeds = np.empty((cfg.n_scenes, n_p))
    for k, pump in enumerate(net.pumps):
        lo, hi = cfg.pump_speed_range or pump.speed_bounds
        speeds[:, k] = lo + u[:, n_j + 1 + k] * (hi - lo)

    return [BoundaryConditions(demands=demands[i], pump_speeds=speeds[i])
            for i in range(cfg.n_scenes)]


@dataclass(frozen=True)
class Scaler:
    """Train-split pressure statistics: standardization in, [0,1] normalization out."""

    mean: float
    std: float
    vmin: float
    vmax: float

    @classmethod
    def fit(cls, values: np.ndarray) -> "Scaler":
        values = np.asarray(values, dtype=float)
        std = float(values.std())
        vmin, vmax = float(values.min()), float(values.max())
        if std <= 0 or vmax <= vmin:
            raise InvalidRange("cannot fit a scaler on constant pressures")
        return cls(mean=float(values.mean()), std=std, vmin=vmin, vmax=vmax)


def _require_fitted(scaler) -> Scaler:
    if not isinstance(scaler, Scaler):
        raise UnfittedScaler("no fitted scaler supplied")
    return scaler


def scale_in(pressures: np.ndarray, scaler: Scaler) -> np.ndarray:
    s = _require_fitted(scaler)
    return (np.asarray(pressures, dtype=float) - s.mean) / s.std


def scale_out(pressures: np.ndarray, scaler: Scaler) -> np.ndarray:
    s = _require_fitted(scaler)
    return (np.asarray(pressures, dtype=float) - s.vmin) / (s.vmax - s.vmin)


def scale_out_inverse(normalized: np.ndarray, scaler: Scaler) -> np.ndarray:
    s = _require_fitted(scaler)
    return np.asarray(normalized, dtype=float) * (s.vmax - s.vmin) + s.vmin


@dataclass
class SceneSet:
    """Solved steady-state pressures with boundary data, splits and scaler."""

    pressures: np.ndarray       # (scenes, junctions) ft of pressure head
    demands: np.ndarray         # (scenes, junctions) cfs
    pump_speeds: np.ndarray     # (scenes, pumps)
    residual_mass: np.ndarray   # (scenes,)
    residual_energy: np.ndarray
    splits: dict[str, np.ndarray]
    scaler: Scaler
    junction_names: tuple[str, ...]
    failures: list[tuple[int, str]]
    seed: int
    config: SceneConfig

    @property
    def n_scenes(self) -> int:
        return self.pressures.shape[0]

    def boundary(self, i: int) -> BoundaryConditions:
        return BoundaryConditions(demands=self.demands[i],
                                  pump_speeds=self.pump_speeds[i])

    def split_pressures(self, name: str) -> np.ndarray:
        return self.pressures[self.splits[name]]


def _split_indices(n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    n_val = int(np.floor(SPLIT_RATIOS[1] * n))
    n_test = int(np.floor(SPLIT_RATIOS[2] * n))
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise TooFewScenes(f"{n} scenes cannot fill a {SPLIT_RATIOS} split")
    perm = rng.permutation(n)
    return {"train": np.sort(perm[:n_train]),
            "val": np.sort(perm[n_train:n_train + n_val]),
            "test": np.sort(perm[n_train + n_val:])}


def build_sceneset(net: Network, cfg: SceneConfig,
                   solver_opts: SolverOptions | None = None) -> SceneSet:
    """sample -> solve -> drop failures -> split -> fit scaler on train rows."""
    boundaries = sample_boundaries(net, cfg)
    result: BatchResult = batch_solve(net, boundaries, solver_opts)
    if not result.states:
        raise TooFewScenes("every scene failed to solve")
    kept = result.indices
    pressures = np.stack([s.pressures for s in result.states])
    demands = np.stack([boundaries[i].demands for i in kept])
    speeds = (np.stack([boundaries[i].pump_speeds for i in kept])
              if len(net.pumps) else np.zeros((len(kept), 0)))
    splits = _split_indices(len(kept), np.random.default_rng([cfg.seed, 1]))
    scaler = Scaler.fit(pressures[splits["train"]])
    return SceneSet(
        pressures=pressures, demands=demands, pump_speeds=speeds,
        residual_mass=np.array([s.residual_mass for s in result.states]),
        residual_energy=np.array([s.residual_energy for s in result.states]),
        splits=splits, scaler=scaler,
        junction_names=tuple(j.name for j in net.junctions),
        failures=result.failures, seed=cfg.seed, config=cfg)


def save_sceneset(ss: SceneSet, out_dir) -> None:
    """Persist to a directory: .npy arrays plus a JSON sidecar (byte-stable)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("pressures", "demands", "pump_speeds",
                 "residual_mass", "residual_energy"):
        np.save(out / f"{name}.npy", getattr(ss, name))
    meta = {
        "seed": ss.seed,
        "config": asdict(ss.config),
        "splits": {k: v.tolist() for k, v in ss.splits.items()},
        "scaler": asdict(ss.scaler),
        "junction_names": list(ss.junction_names),
        "failures": [[i, msg] for i, msg in ss.failures],
    }
    with open(out / "sceneset.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_sceneset(in_dir) -> SceneSet:
    src = Path(in_dir)
    with open(src / "sceneset.json") as fh:
        meta = json.load(fh)
    arrays = {name: np.load(src / f"{name}.npy")
              for name in ("pressures", "demands", "pump_speeds",
                           "residual_mass", "residual_energy")}
    return SceneSet(
        **arrays,
        splits={k: np.asarray(v, dtype=np.intp) for k, v in meta["splits"].items()},
        scaler=Scaler(**meta["scaler"]),
        junction_names=tuple(meta["junction_names"]),
        failures=[(int(i), msg) for i, msg in meta["failures"]],
        seed=meta["seed"],
        config=scene_config_from_dict(meta["config"]))
