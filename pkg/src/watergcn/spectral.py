"""Weighted adjacencies, the scaled normalized graph Laplacian and Chebyshev filtering.

Edge weights encode how well pressure information propagates: the
Hazen-Williams conductance W = 4.727 * C^1.852 * d^4.871 / L per pipe,
max-normalized over the topology ("weighted" scheme), its base-10 logarithm
rescaled to [0.01, 1] ("logarithmic"), or plain 0/1 connectivity ("binary").
Pumps and valves always get connection strength 1.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .network import Network, NonPositiveAttribute, Pipe, adjacency_structure


class WeightScheme(str, Enum):
    BINARY = "binary"
    WEIGHTED = "weighted"
    LOGARITHMIC = "logarithmic"


class IsolatedNode(Exception):
    pass


class EigenFailure(Exception):
    pass


class DimensionMismatch(Exception):
    pass


LOG_WEIGHT_FLOOR = 0.01
POWER_ITER_TOL = 1e-10
POWER_ITER_MAX = 10_000


def edge_weight_hw(pipe: Pipe) -> float:
    """Raw Hazen-Williams conductance weight of a pipe (pre-normalization)."""
    if pipe.length <= 0 or pipe.diameter <= 0 or pipe.hw_coefficient <= 0:
        raise NonPositiveAttribute(f"pipe {pipe.name!r} has non-positive attributes")
    return 4.727 * pipe.hw_coefficient ** 1.852 * pipe.diameter ** 4.871 / pipe.length


def build_adjacency(net: Network, scheme: WeightScheme) -> sp.csr_matrix:
    """Symmetric weighted adjacency over all nodes.

    Parallel pipes between the same node pair combine by summing raw
    conductances before normalization. Any pair connected by a pump or a
    valve gets weight exactly 1 regardless of pipe weights.
    """
    scheme = WeightScheme(scheme)
    n = net.n_nodes
    if scheme is WeightScheme.BINARY:
        return adjacency_structure(net)

    raw: dict[tuple[int, int], float] = {}
    unit_pairs: set[tuple[int, int]] = set()
    for p in net.pipes:
        i, j = net.node_index[p.from_node], net.node_index[p.to_node]
        key = (min(i, j), max(i, j))
        raw[key] = raw.get(key, 0.0) + edge_weight_hw(p)
    for e in list(net.pumps) + list(net.valves):
        i, j = net.node_index[e.from_node], net.node_index[e.to_node]
        unit_pairs.add((min(i, j), max(i, j)))

    pipe_pairs = {k: v for k, v in raw.items() if k not in unit_pairs}
    weights: dict[tuple[int, int], float] = {k: 1.0 for k in unit_pairs}
    if pipe_pairs:
        if scheme is WeightScheme.WEIGHTED:
            wmax = max(pipe_pairs.values())
            weights.update({k: v / wmax for k, v in pipe_pairs.items()})
        else:  # logarithmic
            logs = {k: math.log10(v) for k, v in pipe_pairs.items()}
            lo, hi = min(logs.values()), max(logs.values())
            if hi > lo:
                span = hi - lo
                weights.update({
                    k: LOG_WEIGHT_FLOOR + (1.0 - LOG_WEIGHT_FLOOR) * (v - lo) / span
                    for k, v in logs.items()})
            else:
                weights.update({k: 1.0 for k in logs})

    ii, jj, vv = [], [], []
    for (i, j), w in weights.items():
        ii += [i, j]
        jj += [j, i]
        vv += [w, w]
    return sp.coo_matrix((vv, (ii, jj)), shape=(n, n)).tocsr()


@dataclass(frozen=True)
class ScaledLaplacian:
    """Scaled normalized Laplacian with spectrum in [-1, 1]."""

    matrix: sp.csr_matrix
    lambda_max: float
    scheme: WeightScheme

    @property
    def n_nodes(self) -> int:
        return self.matrix.shape[0]

    @property
    def op(self):
        """Multiplication operand: dense below 256 nodes (faster), sparse above."""
        cached = self.__dict__.get("_op")
        if cached is None:
            cached = self.matrix.toarray() if self.n_nodes <= 256 else self.matrix
            self.__dict__["_op"] = cached
        return cached


def _normalized_laplacian(adjacency: sp.spmatrix) -> sp.csr_matrix:
    adj = sp.csr_matrix(adjacency, dtype=np.float64)
    degrees = np.asarray(adj.sum(axis=1)).ravel()
    if np.any(degrees <= 0):
        bad = np.flatnonzero(degrees <= 0)
        raise IsolatedNode(f"node(s) with zero degree: {bad[:5].tolist()}")
    d_inv_sqrt = sp.diags(1.0 / np.sqrt(degrees))
    return (sp.identity(adj.shape[0], format="csr")
            - d_inv_sqrt @ adj @ d_inv_sqrt).tocsr()


def power_iteration_lambda_max(mat: sp.spmatrix, tol: float = POWER_ITER_TOL,
                               max_iter: int = POWER_ITER_MAX,
                               seed: int = 0) -> float:
    """Largest-magnitude eigenvalue of a symmetric sparse matrix.

    Converges on the residual norm ||Av - lambda v||; raises EigenFailure
    when it fails to reach `tol` within `max_iter` iterations.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(mat.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = mat @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v_new = w / norm
        lam = float(v_new @ (mat @ v_new))
        if np.linalg.norm(mat @ v_new - lam * v_new) <= tol:
            return lam
        v = v_new
    raise EigenFailure(f"power iteration did not converge in {max_iter} iterations")


def scaled_laplacian(adjacency: sp.spmatrix, scheme: WeightScheme,
                     lambda_max_method: str = "auto") -> ScaledLaplacian:
    """Build (2 / lambda_max) * L_norm - I from a weighted adjacency.

    lambda_max_method: "exact" (dense eigensolve), "power_iteration", or
    "auto" (exact up to 2048 nodes, power iteration beyond).

    Underestimating lambda_max would push the scaled spectrum above +1, so
    the power-iteration estimate carries a small safety margin; when the top
    eigenvalues are too close for power iteration to settle (long path-like
    networks are near-bipartite), the universal normalized-Laplacian bound
    of 2 is used instead.
    """
    l_norm = _normalized_laplacian(adjacency)
    n = l_norm.shape[0]
    method = lambda_max_method
    if method == "auto":
        method = "exact" if n <= 2048 else "power_iteration"
    if method == "exact":
        lam = float(np.linalg.eigvalsh(l_norm.toarray())[-1])
    elif method == "power_iteration":
        # L_norm is PSD, so the largest magnitude is the largest eigenvalue
        try:
            lam = min(power_iteration_lambda_max(l_norm) + 2.0 * POWER_ITER_TOL, 2.0)
        except EigenFailure:
            warnings.warn("power iteration stalled on near-degenerate top "
                          "eigenvalues; using the bound lambda_max = 2")
            lam = 2.0
    else:
        raise ValueError(f"unknown lambda_max_method {lambda_max_method!r}")
    mat = ((2.0 / lam) * l_norm - sp.identity(n, format="csr")).tocsr()
    return ScaledLaplacian(matrix=mat, lambda_max=lam, scheme=WeightScheme(scheme))


def laplacian_for(net: Network, scheme: WeightScheme,
                  lambda_max_method: str = "auto") -> ScaledLaplacian:
    return scaled_laplacian(build_adjacency(net, scheme), scheme, lambda_max_method)


def cheb_apply(lap: ScaledLaplacian, x: np.ndarray, order: int) -> list[np.ndarray]:
    """[T_0 x, T_1 x, ..., T_{order-1} x] via the three-term recursion.

    Works on (n,) vectors or (n, f) matrices without ever materializing a
    dense polynomial of the Laplacian.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != lap.n_nodes:
        raise DimensionMismatch(
            f"signal has {x.shape[0]} rows, Laplacian has {lap.n_nodes} nodes")
    mat = lap.op
    out = [x]
    if order > 1:
        out.append(mat @ x)
    for _ in range(2, order):
        out.append(2.0 * (mat @ out[-1]) - out[-2])
    return out


def cheb_weighted_sum(lap: ScaledLaplacian, terms) -> np.ndarray:
    """sum_k T_k(L) M_k by the Clenshaw backward recurrence (K matvecs)."""
    mat = lap.op
    b1 = np.zeros_like(terms[-1])
    b2 = np.zeros_like(terms[-1])
    for m_k in reversed(terms[1:]):
        b1, b2 = m_k + 2.0 * (mat @ b1) - b2, b1
    return terms[0] + (mat @ b1) - b2


def export_laplacian(lap: ScaledLaplacian, csv_path, header_path) -> None:
    """Dense row-major CSV dump plus a JSON header (for heatmap rendering)."""
    dense = lap.matrix.toarray()
    np.savetxt(csv_path, dense, delimiter=",", fmt="%.17g")
    header = {"n_nodes": int(dense.shape[0]),
              "lambda_max": lap.lambda_max,
              "scheme": lap.scheme.value}
    with open(header_path, "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
