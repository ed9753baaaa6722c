"""Observation masks, model input assembly, the naive baseline and evaluation metrics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .scenegen import Scaler, scale_in, scale_out_inverse
from .spectral import DimensionMismatch

NEAR_ZERO_TRUTH = 1e-6  # ft; smaller |truth| is excluded from relative errors


class InvalidRatio(Exception):
    pass


class EmptyMask(Exception):
    pass


class EmptyInput(Exception):
    pass


class ZeroVariance(Exception):
    pass


@dataclass(frozen=True)
class ObservationMask:
    bits: np.ndarray  # (n,) 0/1
    ratio: float
    seed: int

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def observed(self) -> np.ndarray:
        return np.flatnonzero(self.bits)


def generate_mask(n: int, ratio: float, seed: int) -> ObservationMask:
    """Exactly ceil(ratio * n) observed nodes, drawn uniformly, seeded."""
    if not (0.0 < ratio <= 1.0):
        raise InvalidRatio(f"observation ratio {ratio} outside (0, 1]")
    count = math.ceil(ratio * n)
    rng = np.random.default_rng([seed, 5])
    picks = rng.choice(n, size=count, replace=False)
    bits = np.zeros(n, dtype=np.int8)
    bits[picks] = 1
    return ObservationMask(bits=bits, ratio=ratio, seed=seed)


def assemble_input(pressures: np.ndarray, mask: ObservationMask, scaler: Scaler,
                   n_nodes: int) -> np.ndarray:
    """(scenes, n_nodes, 2) model input: masked standardized signal + the mask.

    Pressures cover the junction rows (the first mask.n node indices); any
    remaining fixed-head rows stay (0, 0).
    """
    p = np.atleast_2d(np.asarray(pressures, dtype=float))
    if p.shape[1] != mask.n:
        raise DimensionMismatch(f"{p.shape[1]} pressure columns vs mask length {mask.n}")
    if mask.n > n_nodes:
        raise DimensionMismatch(f"mask length {mask.n} exceeds node count {n_nodes}")
    x = np.zeros((p.shape[0], n_nodes, 2))
    x[:, :mask.n, 0] = scale_in(p, scaler) * mask.bits
    x[:, :mask.n, 1] = mask.bits
    return x


def naive_predict(pressures: np.ndarray, mask: ObservationMask) -> np.ndarray:
    """Observed nodes keep their value; unobserved get the observed mean."""
    if mask.bits.sum() < 1:
        raise EmptyMask("need at least one observed node")
    p = np.asarray(pressures, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    obs_mean = p[:, mask.observed].mean(axis=1, keepdims=True)
    out = np.where(mask.bits[None, :] == 1, p, obs_mean)
    return out[0] if single else out


def relative_error(pred: np.ndarray, truth: np.ndarray):
    """|pred - truth| / |truth| elementwise; near-zero truths become NaN.

    Returns (errors, excluded_count).
    """
    pred, truth = np.asarray(pred, dtype=float), np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise DimensionMismatch(f"shape mismatch {pred.shape} vs {truth.shape}")
    ok = np.abs(truth) >= NEAR_ZERO_TRUTH
    out = np.full(pred.shape, np.nan)
    out[ok] = np.abs(pred[ok] - truth[ok]) / np.abs(truth[ok])
    return out, int((~ok).sum())


def ecdf(values: np.ndarray):
    """Empirical CDF: fraction i/N at the i-th sorted value."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise EmptyInput("ecdf of an empty sample")
    return v, np.arange(1, v.size + 1) / v.size


@dataclass(frozen=True)
class TaylorStats:
    normalized_std: float
    correlation: float
    centered_rmse: float


def taylor_stats(pred: np.ndarray, truth: np.ndarray) -> TaylorStats:
    """Normalized std, Pearson correlation and normalized centered RMSE.

    Satisfies crmse^2 = s^2 + 1 - 2*s*rho with s the normalized std.
    """
    p = np.asarray(pred, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if p.shape != t.shape:
        raise DimensionMismatch(f"shape mismatch {p.shape} vs {t.shape}")
    pc = p - p.mean()
    tc = t - t.mean()
    sig_p = float(np.sqrt(np.mean(pc * pc)))
    sig_t = float(np.sqrt(np.mean(tc * tc)))
    if sig_t == 0.0 or sig_p == 0.0:
        raise ZeroVariance("constant field has no Taylor statistics")
    corr = float(np.mean(pc * tc) / (sig_p * sig_t))
    crmse = float(np.sqrt(np.mean((pc - tc) ** 2)) / sig_t)
    return TaylorStats(normalized_std=sig_p / sig_t, correlation=corr,
                       centered_rmse=crmse)


@dataclass
class EvalReport:
    rel_errors: np.ndarray        # (scenes, junctions), NaN where excluded
    excluded_count: int
    mean_rel_error: float
    ecdf_values: np.ndarray
    ecdf_fractions: np.ndarray
    taylor: TaylorStats
    baseline_taylor: TaylorStats
    baseline_mean_rel_error: float
    n_scenes: int
    n_junctions: int

    def to_json_dict(self) -> dict:
        return {
            "n_scenes": self.n_scenes,
            "n_junctions": self.n_junctions,
            "excluded_count": self.excluded_count,
            "mean_rel_error": self.mean_rel_error,
            "baseline_mean_rel_error": self.baseline_mean_rel_error,
            "ecdf": {"values": self.ecdf_values.tolist(),
                     "fractions": self.ecdf_fractions.tolist()},
            "taylor": asdict(self.taylor),
            "baseline_taylor": asdict(self.baseline_taylor),
        }

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def build_report(pred: np.ndarray, baseline: np.ndarray, truth: np.ndarray) -> EvalReport:
    rel, excluded = relative_error(pred, truth)
    finite = rel[np.isfinite(rel)]
    values, fractions = ecdf(finite)
    base_rel, _ = relative_error(baseline, truth)
    return EvalReport(
        rel_errors=rel,
        excluded_count=excluded,
        mean_rel_error=float(np.nanmean(rel)),
        ecdf_values=values,
        ecdf_fractions=fractions,
        taylor=taylor_stats(pred, truth),
        baseline_taylor=taylor_stats(baseline, truth),
        baseline_mean_rel_error=float(np.nanmean(base_rel)),
        n_scenes=truth.shape[0],
        n_junctions=truth.shape[1])


def evaluate(model, sceneset, mask: ObservationMask) -> EvalReport:
    """Model vs naive baseline on the test split, in physical pressure units."""
    from .chebnet import model_forward

    test_idx = sceneset.splits["test"]
    truth = sceneset.pressures[test_idx]
    inputs = assemble_input(truth, mask, sceneset.scaler, model.n_nodes)
    pred_norm = model_forward(model, inputs)[:, :truth.shape[1], 0]
    pred = scale_out_inverse(pred_norm, sceneset.scaler)
    baseline = naive_predict(truth, mask)
    return build_report(pred, baseline, truth)
