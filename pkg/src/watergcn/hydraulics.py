"""Steady-state hydraulic solver: the ground-truth oracle for scene generation.

Solves per-junction continuity plus per-edge energy balance with
Hazen-Williams pipe losses and affinity-scaled pump curves, using a damped
Newton iteration on the flow/head unknowns (global-gradient style: the head
update comes from the Schur complement of the edge block).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .network import Network, NonPositiveAttribute, Pipe, Pump

HW_EXPONENT = 1.852
# fully open valves are short smooth pipes: loss 1e-8 ft at 10 cfs
VALVE_LOSS_COEFF = 1e-10


class NonConvergence(Exception):
    pass


class SingularSystem(Exception):
    pass


class InvalidBoundary(Exception):
    pass


@dataclass(frozen=True)
class BoundaryConditions:
    """Per-scene inputs: junction demands [cfs] and relative pump speeds."""

    demands: np.ndarray
    pump_speeds: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def validate(self, net: Network) -> None:
        d = np.asarray(self.demands, dtype=float)
        if d.shape != (net.n_junctions,):
            raise InvalidBoundary(
                f"demands shape {d.shape} != ({net.n_junctions},)")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise InvalidBoundary("demands must be finite and non-negative")
        w = np.asarray(self.pump_speeds, dtype=float)
        if w.shape != (len(net.pumps),):
            raise InvalidBoundary(
                f"pump_speeds shape {w.shape} != ({len(net.pumps)},)")
        for speed, pump in zip(w, net.pumps):
            lo, hi = pump.speed_bounds
            if not (lo <= speed <= hi):
                raise InvalidBoundary(
                    f"pump {pump.name!r} speed {speed} outside [{lo}, {hi}]")


@dataclass
class HydraulicState:
    heads: np.ndarray       # ft, all nodes
    flows: np.ndarray       # cfs, signed w.r.t. edge orientation
    pressures: np.ndarray   # ft of pressure head, junctions only
    residual_mass: float    # max junction continuity residual [cfs]
    residual_energy: float  # max edge energy residual [ft]
    iterations: int


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 200
    q_eps: float = 1e-6       # linearization window for |Q|^0.852 losses
    deriv_floor: float = 1e-8
    damping_tries: int = 10


def pipe_resistance(pipe: Pipe) -> float:
    """Hazen-Williams resistance: head loss = r * |Q|^0.852 * Q."""
    return (4.727 * pipe.hw_coefficient ** -HW_EXPONENT
            * pipe.diameter ** -4.871 * pipe.length)


def pipe_headloss(pipe: Pipe, q: float) -> float:
    """Signed Hazen-Williams head loss [ft] at flow q [cfs]."""
    return pipe_resistance(pipe) * abs(q) ** (HW_EXPONENT - 1.0) * q


@dataclass(frozen=True)
class PumpCurveFit:
    """H = speed^2 * (shutoff - coeff * (Q/speed)^exponent), clamped to [0, shutoff].

    Reverse flow sees the shutoff head plus a stiff quadratic resistance (a
    soft check valve); a flat clamp would make parallel pumps at different
    speeds unsolvable.
    """

    shutoff: float
    coeff: float
    exponent: float

    @property
    def cutoff(self) -> float:
        if self.coeff <= 0:
            return np.inf
        return (self.shutoff / self.coeff) ** (1.0 / self.exponent)

    @property
    def reverse_resist(self) -> float:
        return max(100.0, 25.0 * self.coeff)


def fit_pump_curve(points: tuple[tuple[float, float], ...]) -> PumpCurveFit:
    """Fit H = h0 - r*Q^nu to a head curve, EPANET-style.

    Single point (Qd, Hd): h0 = 4/3*Hd with zero gain at 2*Qd, nu = 2.
    Three points with Q1 = 0: analytic (h0, r, nu).
    Anything else: least squares with nu = 2.
    """
    pts = sorted(points)
    if len(pts) == 1:
        qd, hd = pts[0]
        if qd <= 0:
            raise NonPositiveAttribute("single-point pump curve needs Q > 0")
        h0 = 4.0 * hd / 3.0
        return PumpCurveFit(h0, h0 / (2.0 * qd) ** 2, 2.0)
    if len(pts) == 3 and pts[0][0] == 0.0:
        (q1, h1), (q2, h2), (q3, h3) = pts
        if h2 < h1 and h3 < h2 and q2 > 0:
            nu = np.log((h1 - h2) / (h1 - h3)) / np.log(q2 / q3)
            if nu > 0:
                return PumpCurveFit(h1, (h1 - h2) / q2 ** nu, nu)
    q = np.array([p[0] for p in pts])
    h = np.array([p[1] for p in pts])
    basis = np.stack([np.ones_like(q), -q ** 2], axis=1)
    (h0, r), *_ = np.linalg.lstsq(basis, h, rcond=None)
    return PumpCurveFit(float(h0), max(float(r), 0.0), 2.0)


def pump_headgain(pump: Pump, q: float, speed: float) -> float:
    """Head gain [ft] at flow q [cfs] and relative speed, from the fitted curve.

    Negative flow sees the shutoff head plus quadratic check-valve
    resistance; flow beyond the cutoff clamps to zero gain.
    """
    fit = fit_pump_curve(pump.curve)
    qn = q / speed
    if qn <= 0.0:
        return speed ** 2 * fit.shutoff + fit.reverse_resist * qn * qn
    if qn >= fit.cutoff:
        return 0.0
    return speed ** 2 * (fit.shutoff - fit.coeff * qn ** fit.exponent)


class _Assembly:
    """Per-network solver arrays, built once and reused across scenes."""

    def __init__(self, net: Network):
        if not net.fixed_head_nodes:
            raise InvalidBoundary("steady state needs at least one fixed-head node")
        self.net = net
        self.n_j = net.n_junctions
        self.n_nodes = net.n_nodes
        pairs = net.edge_index_pairs()
        self.n_e = pairs.shape[0]
        rows = np.repeat(np.arange(self.n_e), 2)
        cols = pairs.ravel()
        vals = np.tile([1.0, -1.0], self.n_e)
        self.incidence = sp.csr_matrix((vals, (rows, cols)),
                                       shape=(self.n_e, self.n_nodes))
        self.b_junc = self.incidence[:, :self.n_j].tocsr()
        self.b_junc_t = self.b_junc.T.tocsr()

        n_pipes, n_pumps = len(net.pipes), len(net.pumps)
        self.pipe_slice = slice(0, n_pipes)
        self.pump_slice = slice(n_pipes, n_pipes + n_pumps)
        self.valve_slice = slice(n_pipes + n_pumps, self.n_e)
        # pipes and valves share the r*|q|^(e-1)*q loss form
        self.pv_resist = np.concatenate([
            np.array([pipe_resistance(p) for p in net.pipes]),
            np.full(len(net.valves), VALVE_LOSS_COEFF)])
        self.pv_expn = np.concatenate([
            np.full(n_pipes, HW_EXPONENT), np.full(len(net.valves), 2.0)])
        self.pump_fits = [fit_pump_curve(p.curve) for p in net.pumps]

        self.fixed_heads = np.array([f.head for f in net.fixed_head_nodes])
        self.junction_elev = np.array([j.elevation for j in net.junctions])
        # initial flows: 1 ft/s through each pipe/valve cross-section
        areas = np.concatenate([
            np.array([np.pi * p.diameter ** 2 / 4.0 for p in net.pipes]),
            np.array([np.pi * v.diameter ** 2 / 4.0 for v in net.valves])])
        self.pv_q0 = np.maximum(areas, 1e-3)

    def loss_and_slope(self, q: np.ndarray, speeds: np.ndarray, opts: SolverOptions):
        """Edge head-loss vector f(q) and its flow derivative (floored)."""
        f = np.empty(self.n_e)
        df = np.empty(self.n_e)
        pv = np.concatenate([q[self.pipe_slice], q[self.valve_slice]])
        absq = np.abs(pv)
        small = absq < opts.q_eps
        secant = self.pv_resist * opts.q_eps ** (self.pv_expn - 1.0)
        f_pv = np.where(small, secant * pv,
                        self.pv_resist * absq ** (self.pv_expn - 1.0) * pv)
        df_pv = np.where(small, secant,
                         self.pv_expn * self.pv_resist * absq ** (self.pv_expn - 1.0))
        n_pipes = self.pipe_slice.stop
        f[self.pipe_slice], df[self.pipe_slice] = f_pv[:n_pipes], df_pv[:n_pipes]
        f[self.valve_slice], df[self.valve_slice] = f_pv[n_pipes:], df_pv[n_pipes:]
        for k, fit in enumerate(self.pump_fits):
            e = self.pump_slice.start + k
            w = speeds[k]
            qn = q[e] / w
            if qn <= 0.0:
                gain = w ** 2 * fit.shutoff + fit.reverse_resist * qn * qn
                slope = 2.0 * fit.reverse_resist * abs(qn) / w
            elif qn >= fit.cutoff:
                gain, slope = 0.0, 0.0
            else:
                gain = w ** 2 * (fit.shutoff - fit.coeff * qn ** fit.exponent)
                slope = w * fit.coeff * fit.exponent * qn ** (fit.exponent - 1.0)
            f[e], df[e] = -gain, slope
        np.maximum(df, opts.deriv_floor, out=df)
        return f, df

    def initial_state(self, bc: BoundaryConditions):
        q = np.empty(self.n_e)
        n_pipes = self.pipe_slice.stop
        q[self.pipe_slice] = self.pv_q0[:n_pipes]
        q[self.valve_slice] = self.pv_q0[n_pipes:]
        for k, fit in enumerate(self.pump_fits):
            w = bc.pump_speeds[k]
            cut = fit.cutoff if np.isfinite(fit.cutoff) else 1.0
            q[self.pump_slice.start + k] = w * cut / 2.0
        h = np.empty(self.n_nodes)
        h[:self.n_j] = self.fixed_heads.mean()
        h[self.n_j:] = self.fixed_heads
        return q, h


def _residuals(asm: _Assembly, q, h, f, demands):
    energy = asm.incidence @ h - f
    mass = asm.b_junc_t @ q + demands
    return energy, mass


def solve_steady_state(net: Network, bc: BoundaryConditions,
                       opts: SolverOptions | None = None,
                       _asm: _Assembly | None = None) -> HydraulicState:
    """Damped Newton solve of the continuity + energy system.

    Raises NonConvergence when residuals fail to meet `opts.tol` within
    `opts.max_iter` iterations, SingularSystem on a degenerate head update.
    """
    opts = opts or SolverOptions()
    bc.validate(net)
    asm = _asm if _asm is not None else _Assembly(net)
    demands = np.asarray(bc.demands, dtype=float)
    speeds = np.asarray(bc.pump_speeds, dtype=float)
    mass_scale = opts.tol * (demands.sum() + 1.0)
    energy_scale = opts.tol

    q, h = asm.initial_state(bc)
    f, df = asm.loss_and_slope(q, speeds, opts)
    energy, mass = _residuals(asm, q, h, f, demands)

    def merit(energy_r, mass_r):
        return (float(energy_r @ energy_r)
                + float(mass_r @ mass_r) / (demands.sum() + 1.0) ** 2)

    phi = merit(energy, mass)
    dense = asm.n_j <= 256
    for it in range(1, opts.max_iter + 1):
        if (np.abs(energy).max() <= energy_scale
                and np.abs(mass).max() <= mass_scale):
            return _finish(asm, net, q, h, demands, speeds, it - 1)
        w = 1.0 / df
        schur = (asm.b_junc_t @ sp.diags(w) @ asm.b_junc)
        rhs = -(mass + asm.b_junc_t @ (w * energy))
        try:
            if dense:
                dh = np.linalg.solve(schur.toarray(), rhs)
            else:
                dh = spla.spsolve(schur.tocsc(), rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
        if not np.all(np.isfinite(dh)):
            raise SingularSystem("non-finite head update")
        dq = w * (asm.b_junc @ dh + energy)

        alpha = 1.0
        for _ in range(opts.damping_tries):
            q_new, h_new = q + alpha * dq, h.copy()
            h_new[:asm.n_j] += alpha * dh
            f_new, df_new = asm.loss_and_slope(q_new, speeds, opts)
            energy_new, mass_new = _residuals(asm, q_new, h_new, f_new, demands)
            phi_new = merit(energy_new, mass_new)
            if phi_new <= phi or alpha <= 1.0 / 2 ** (opts.damping_tries - 1):
                break
            alpha *= 0.5
        q, h, f, df = q_new, h_new, f_new, df_new
        energy, mass, phi = energy_new, mass_new, phi_new

    if (np.abs(energy).max() <= energy_scale
            and np.abs(mass).max() <= mass_scale):
        return _finish(asm, net, q, h, demands, speeds, opts.max_iter)
    raise NonConvergence(
        f"residuals after {opts.max_iter} iterations: "
        f"energy {np.abs(energy).max():.3e} ft, mass {np.abs(mass).max():.3e} cfs")


def _finish(asm: _Assembly, net: Network, q, h, demands, speeds, iterations):
    # report residuals against the exact (non-linearized) loss laws
    f_exact = np.empty(asm.n_e)
    for i, p in enumerate(net.pipes):
        f_exact[i] = pipe_headloss(p, q[i])
    for k, p in enumerate(net.pumps):
        e = asm.pump_slice.start + k
        f_exact[e] = -pump_headgain(p, q[e], speeds[k])
    for k in range(asm.valve_slice.start, asm.n_e):
        f_exact[k] = VALVE_LOSS_COEFF * abs(q[k]) * q[k]
    energy, mass = _residuals(asm, q, h, f_exact, demands)
    pressures = h[:asm.n_j] - asm.junction_elev
    return HydraulicState(
        heads=h, flows=q, pressures=pressures,
        residual_mass=float(np.abs(mass).max()),
        residual_energy=float(np.abs(energy).max()),
        iterations=iterations)


@dataclass
class BatchResult:
    states: list[HydraulicState]
    indices: list[int]                 # scene index of each state
    failures: list[tuple[int, str]]    # (scene index, reason)


def batch_solve(net: Network, boundaries: list[BoundaryConditions],
                opts: SolverOptions | None = None) -> BatchResult:
    """Element-wise steady-state solves; failures recorded, not raised."""
    opts = opts or SolverOptions()
    asm = _Assembly(net)
    states, indices, failures = [], [], []
    for i, bc in enumerate(boundaries):
        try:
            states.append(solve_steady_state(net, bc, opts, _asm=asm))
            indices.append(i)
        except (NonConvergence, SingularSystem, InvalidBoundary) as exc:
            failures.append((i, f"{type(exc).__name__}: {exc}"))
    return BatchResult(states=states, indices=indices, failures=failures)
