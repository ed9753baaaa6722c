#!/usr/bin/env python3
"""Generate the bundled benchmark-style INP files in data/.

The original Anytown / C-Town / Richmond benchmark files are third-party data
and are not redistributed here. These stand-ins are built deterministically to
match the published topological statistics exactly:

    network    junctions  pipes  graph diameter
    anytown           22     41        5
    ctown            388    429       66
    richmond         865    949      234

Construction: a trunk path of `diameter` hops pins the diameter; all other
nodes hang in branch blobs attached to single interior trunk nodes with tree
depth <= min(i, D - i), which provably keeps every distance <= D while the
trunk endpoints realize exactly D (each blob meets the trunk at one
articulation node, so no path can bypass a trunk segment). Loop-forming extra
edges are restricted to pairs inside one blob, plus parallel edges, neither of
which can change any trunk distance. Pipe diameters are sized from the
aggregated subtree demand at ~3 ft/s; tank heads are calibrated by solving the
nominal scene first, so tanks float neutrally on the hydraulic grade line.

Run from the repository root:  python scripts/build_networks.py [--check-only]
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import networkx as nx
import numpy as np

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from watergcn.hydraulics import BoundaryConditions, batch_solve, solve_steady_state
from watergcn.network import parse_inp
from watergcn.scenegen import SceneConfig, sample_boundaries

STANDARD_DIAMETERS_IN = [4, 6, 8, 10, 12, 14, 16, 18, 20, 24, 30, 36]


@dataclass(frozen=True)
class NetSpec:
    name: str
    junctions: int
    pipes: int
    diameter: int
    tanks: int
    pumps: int          # 1 trunk pump + (pumps - 1) parallel twins
    valves: int
    total_demand_cfs: float
    flow_unit: str      # GPM or CFS
    trunk_length_ft: tuple[float, float]
    branch_length_ft: tuple[float, float]
    max_chain: int
    seed: int
    elev_walk_std: float = 6.0
    elev_clip: tuple[float, float] = (10.0, 90.0)
    loss_budget_ft: float = 30.0   # target friction loss along the longest path
    lift_margin_ft: float = 65.0   # pump design head above the highest node


SPECS = [
    NetSpec("anytown", 22, 41, 5, tanks=2, pumps=2, valves=1,
            total_demand_cfs=4.0, flow_unit="GPM",
            trunk_length_ft=(1500, 4000), branch_length_ft=(600, 2500),
            max_chain=2, seed=101),
    NetSpec("ctown", 388, 429, 66, tanks=7, pumps=3, valves=2,
            total_demand_cfs=8.0, flow_unit="CFS",
            trunk_length_ft=(300, 900), branch_length_ft=(150, 600),
            max_chain=6, seed=202, elev_walk_std=1.5, elev_clip=(10.0, 55.0)),
    NetSpec("richmond", 865, 949, 234, tanks=6, pumps=3, valves=2,
            total_demand_cfs=4.0, flow_unit="GPM",
            trunk_length_ft=(200, 600), branch_length_ft=(120, 500),
            max_chain=8, seed=303, elev_walk_std=0.8, elev_clip=(10.0, 50.0)),
]


def build_topology(spec: NetSpec, rng: np.random.Generator):
    """Tree + safe chords with the exact node/edge/diameter budget.

    Returns (parents, depth, attach_pos, chords, parallels) where node 0..D
    is the trunk and the rest hang in blobs.
    """
    d = spec.diameter
    n_total = spec.junctions + 1 + spec.tanks
    n_branch = n_total - (d + 1)
    assert n_branch >= spec.tanks, "not enough branch nodes to host the tanks"

    parents = {i: i - 1 for i in range(1, d + 1)}  # trunk chain
    depth = {i: 0 for i in range(d + 1)}
    attach = {i: i for i in range(d + 1)}          # trunk position of each node
    blobs: dict[int, list[int]] = {}               # position -> blob nodes

    interior = [i for i in range(1, d) if min(i, d - i) >= 1]
    next_id = d + 1
    for _ in range(n_branch):
        # grow at a random trunk position, extending existing blob nodes
        # while the depth cap allows
        pos = int(rng.choice(interior))
        cap = min(pos, d - pos, spec.max_chain)
        candidates = [pos] + [v for v in blobs.get(pos, []) if depth[v] < cap]
        parent = int(rng.choice(candidates))
        parents[next_id] = parent
        depth[next_id] = depth[parent] + 1
        attach[next_id] = pos
        blobs.setdefault(pos, []).append(next_id)
        next_id += 1

    tree_edges = [(parents[v], v) for v in sorted(parents)]
    n_extra = (spec.pipes + spec.pumps + spec.valves) - len(tree_edges)
    assert n_extra >= spec.valves + (spec.pumps - 1)

    existing = {tuple(sorted(e)) for e in tree_edges}
    chord_pool: list[tuple[int, int]] = []
    for pos, members in sorted(blobs.items()):
        group = [pos] + members
        for a_i in range(len(group)):
            for b_i in range(a_i + 1, len(group)):
                pair = tuple(sorted((group[a_i], group[b_i])))
                if pair not in existing:
                    chord_pool.append(pair)
    rng.shuffle(chord_pool)

    n_parallel_pumps = spec.pumps - 1
    n_chords_needed = n_extra - n_parallel_pumps
    chords = chord_pool[:n_chords_needed]
    parallels = []
    shortfall = n_chords_needed - len(chords)
    if shortfall > 0:  # duplicate random tree edges as parallel pipes
        picks = rng.choice(len(tree_edges), size=shortfall, replace=True)
        parallels = [tree_edges[int(k)] for k in picks]
    return parents, depth, attach, chords, parallels


def verify_diameter(n_total: int, edges, target: int):
    g = nx.Graph()
    g.add_nodes_from(range(n_total))
    g.add_edges_from(edges)
    assert nx.is_connected(g), "generated graph is disconnected"
    dia = nx.diameter(g)
    assert dia == target, f"diameter {dia} != target {target}"


def assign_attributes(spec: NetSpec, rng, parents, depth, attach, chords, parallels):
    d = spec.diameter
    n_total = spec.junctions + 1 + spec.tanks

    # terrain: smooth random walk along the trunk, branches follow the parent
    lo_e, hi_e = spec.elev_clip
    trunk_elev = np.empty(d + 1)
    trunk_elev[0] = 20.0
    for i in range(1, d + 1):
        trunk_elev[i] = np.clip(trunk_elev[i - 1] + rng.normal(0.0, spec.elev_walk_std),
                                lo_e, hi_e)
    elev = {}
    for v in range(n_total):
        if v <= d:
            elev[v] = float(trunk_elev[v])
        else:
            elev[v] = float(np.clip(elev[parents[v]]
                                    + rng.normal(0.0, spec.elev_walk_std * 0.7),
                                    lo_e - 2, hi_e + 5))

    # demands: gamma-weighted shares of the target total; a quarter are transit
    weights = rng.gamma(1.5, 1.0, size=n_total)
    weights[rng.random(n_total) < 0.25] = 0.0
    weights[0] = 0.0  # the source node
    if weights.sum() == 0:
        weights[1] = 1.0
    demand = spec.total_demand_cfs * weights / weights.sum()

    # tanks: leaves far from the source, spread over distinct trunk positions
    leaves = [v for v in range(d + 1, n_total)
              if v not in set(parents.values()) and depth[v] >= 1]
    leaves.sort(key=lambda v: (attach[v], v))
    tank_ids = []
    used_pos = set()
    for v in sorted(leaves, key=lambda v: -attach[v]):
        if attach[v] not in used_pos:
            tank_ids.append(v)
            used_pos.add(attach[v])
        if len(tank_ids) == spec.tanks:
            break
    assert len(tank_ids) == spec.tanks, "could not place all tanks"
    demand[tank_ids] = 0.0

    # subtree demand -> tree pipe sizing at ~3 ft/s
    children: dict[int, list[int]] = {}
    for v, p in parents.items():
        children.setdefault(p, []).append(v)
    subtree = demand.copy()
    for v in range(n_total - 1, 0, -1):  # children have larger ids than parents
        subtree[parents[v]] += subtree[v]

    # size for a friction-slope budget: the longest root-to-leaf path should
    # lose about loss_budget_ft in total
    mean_trunk = 0.5 * (spec.trunk_length_ft[0] + spec.trunk_length_ft[1])
    mean_branch = 0.5 * (spec.branch_length_ft[0] + spec.branch_length_ft[1])
    max_path_ft = spec.diameter * mean_trunk + spec.max_chain * mean_branch
    slope = spec.loss_budget_ft / max_path_ft  # ft per ft

    def size_for(flow_cfs: float) -> float:
        if flow_cfs <= 0:
            return 4.0
        d_ft = (4.727 * 110.0 ** -1.852 * flow_cfs ** 1.852 / slope) ** (1.0 / 4.871)
        d_in = d_ft * 12.0
        for std in STANDARD_DIAMETERS_IN:
            if std >= d_in:
                return float(std)
        return float(STANDARD_DIAMETERS_IN[-1])

    return elev, demand, tank_ids, subtree, size_for


def build_inp(spec: NetSpec) -> str:
    rng = np.random.default_rng(spec.seed)
    parents, depth, attach, chords, parallels = build_topology(spec, rng)
    d = spec.diameter
    n_total = spec.junctions + 1 + spec.tanks

    tree_edges = [(parents[v], v) for v in sorted(parents)]
    trunk_pump_edge = (0, 1)
    tree_pipe_edges = [e for e in tree_edges if e != trunk_pump_edge]
    pump_edges = [trunk_pump_edge] * spec.pumps  # duty + standby twins
    valve_edges = chords[:spec.valves]
    chord_pipe_edges = chords[spec.valves:] + parallels
    all_edges = tree_pipe_edges + chord_pipe_edges + pump_edges + valve_edges
    verify_diameter(n_total, all_edges, d)
    assert len(tree_pipe_edges) + len(chord_pipe_edges) == spec.pipes

    elev, demand, tank_ids, subtree, size_for = assign_attributes(
        spec, rng, parents, depth, attach, chords, parallels)

    # node naming: junctions J*, source R1, tanks T*
    tank_set = set(tank_ids)
    name = {}
    j = 0
    for v in range(n_total):
        if v == 0:
            name[v] = "R1"
        elif v in tank_set:
            name[v] = f"T{sorted(tank_set).index(v) + 1}"
        else:
            j += 1
            name[v] = f"J{j}"
    assert j == spec.junctions

    q_factor = 1.0 if spec.flow_unit == "CFS" else 448.83116883116884  # cfs -> GPM

    total = spec.total_demand_cfs
    lift = max(elev.values()) + spec.lift_margin_ft - 10.0  # HGL minus source head
    pump_q_design = 0.75 * total             # per pump, cfs
    pump_h_design = lift + spec.loss_budget_ft

    def pipe_line(pid, a, b, length, diam_in, c):
        return (f" {pid}\t{name[a]}\t{name[b]}\t{length:.1f}\t{diam_in:.0f}\t"
                f"{c:.0f}\t0\tOPEN")

    pipes = []
    pid = 0
    for a, b in tree_pipe_edges:
        pid += 1
        lo, hi = spec.trunk_length_ft if min(a, b) <= d and max(a, b) <= d \
            else spec.branch_length_ft
        length = rng.uniform(lo, hi)
        diam = size_for(subtree[max(a, b)] if max(a, b) > min(a, b) else 0.0)
        if max(a, b) in tank_set:
            diam = max(diam, 10.0)  # generous tank connections
        c = float(rng.integers(90, 131))
        pipes.append(pipe_line(f"P{pid}", a, b, length, diam, c))
    for a, b in chord_pipe_edges:
        pid += 1
        length = rng.uniform(*spec.branch_length_ft)
        diam = max(size_for(0.5 * (subtree[a] + subtree[b])), 6.0)
        c = float(rng.integers(90, 131))
        pipes.append(pipe_line(f"P{pid}", a, b, length, diam, c))

    lines = [
        "[TITLE]",
        f" {spec.name} benchmark-style network (synthesized stand-in)",
        "",
        "[JUNCTIONS]",
        ";ID\tElev\tDemand",
    ]
    for v in range(1, n_total):
        if v in tank_set:
            continue
        lines.append(f" {name[v]}\t{elev[v]:.2f}\t{demand[v] * q_factor:.4f}")
    lines += ["", "[RESERVOIRS]", ";ID\tHead", " R1\t10.00"]

    # placeholder tank levels; calibrated against the nominal solve below
    lines += ["", "[TANKS]", ";ID\tElev\tInitLvl\tMinLvl\tMaxLvl\tDiam\tMinVol"]
    for t_i, v in enumerate(sorted(tank_set), start=1):
        lines.append(f" T{t_i}\t{elev[v]:.2f}\t40.00\t5.00\t60.00\t40.0\t0")

    lines += ["", "[PIPES]", ";ID\tNode1\tNode2\tLength\tDiam\tRoughness\tMinorLoss\tStatus"]
    lines += pipes

    lines += ["", "[PUMPS]", ";ID\tNode1\tNode2\tParameters"]
    for k in range(spec.pumps):
        lines.append(f" PU{k + 1}\t{name[0]}\t{name[1]}\tHEAD\tC1")

    lines += ["", "[VALVES]", ";ID\tNode1\tNode2\tDiam\tType\tSetting\tMinorLoss"]
    for k, (a, b) in enumerate(valve_edges, start=1):
        lines.append(f" V{k}\t{name[a]}\t{name[b]}\t10\tTCV\t0\t0")

    lines += ["", "[CURVES]", ";ID\tFlow\tHead",
              f" C1\t{pump_q_design * q_factor:.4f}\t{pump_h_design:.2f}"]

    lines += ["", "[COORDINATES]", ";Node\tX\tY"]
    xy = {}
    for v in range(d + 1):
        xy[v] = (1000.0 * v, 200.0 * math.sin(v * 0.7))
    for v in sorted(parents):
        if v <= d:
            continue
        px, py = xy[parents[v]]
        side = 1.0 if (v % 2) else -1.0
        xy[v] = (px + rng.uniform(-300, 300), py + side * 600.0 * depth[v]
                 + rng.uniform(-150, 150))
    for v in range(n_total):
        lines.append(f" {name[v]}\t{xy[v][0]:.1f}\t{xy[v][1]:.1f}")

    lines += ["", "[OPTIONS]", f" Units\t{spec.flow_unit}", " Headloss\tH-W", "", "[END]", ""]
    return "\n".join(lines)


def calibrate_tanks(spec: NetSpec, text: str) -> str:
    """Set each tank's initial level so it floats on the nominal grade line."""
    # treat tanks as zero-demand junctions, solve the nominal scene
    probe_lines = []
    in_tanks = False
    tank_rows = []
    for line in text.splitlines():
        tag = line.strip().upper()
        if tag.startswith("["):
            in_tanks = tag == "[TANKS]"
            probe_lines.append(line)
            continue
        if in_tanks and line.strip() and not line.strip().startswith(";"):
            tank_rows.append(line.split())
            continue
        probe_lines.append(line)
    # move tanks into [JUNCTIONS]
    out = []
    for line in probe_lines:
        out.append(line)
        if line.strip().upper() == "[JUNCTIONS]":
            out.append(";tanks probed as junctions")
            for row in tank_rows:
                out.append(f" {row[0]}\t{row[1]}\t0")
    probe_net = parse_inp("\n".join(out))
    n_p = len(probe_net.pumps)
    bc = BoundaryConditions(
        demands=np.array([jn.base_demand for jn in probe_net.junctions]),
        pump_speeds=np.ones(n_p))
    state = solve_steady_state(probe_net, bc)
    heads = {jn.name: state.heads[probe_net.node_index[jn.name]]
             for jn in probe_net.junctions}

    fixed = []
    for row in tank_rows:
        tank_name, tank_elev = row[0], float(row[1])
        level = heads[tank_name] - tank_elev
        assert level > 1.0, f"tank {tank_name} would sit below its base ({level:.1f} ft)"
        fixed.append(f" {tank_name}\t{tank_elev:.2f}\t{level:.2f}\t"
                     f"{max(level - 20, 2):.2f}\t{level + 20:.2f}\t40.0\t0")
    final = []
    in_tanks = False
    for line in text.splitlines():
        tag = line.strip().upper()
        if tag.startswith("["):
            in_tanks = tag == "[TANKS]"
            final.append(line)
            if in_tanks:
                final.append(";ID\tElev\tInitLvl\tMinLvl\tMaxLvl\tDiam\tMinVol")
                final.extend(fixed)
            continue
        if in_tanks:
            continue
        final.append(line)
    return "\n".join(final)


def validate(spec: NetSpec, text: str, n_scenes: int = 60) -> dict:
    net = parse_inp(text)
    assert net.n_junctions == spec.junctions
    assert len(net.pipes) == spec.pipes
    g = nx.Graph()
    g.add_nodes_from(range(net.n_nodes))
    for e in net.edges():
        g.add_edge(net.node_index[e.from_node], net.node_index[e.to_node])
    dia = nx.diameter(g)
    assert dia == spec.diameter, f"{spec.name}: diameter {dia} != {spec.diameter}"

    cfg = SceneConfig(n_scenes=n_scenes, seed=7)
    result = batch_solve(net, sample_boundaries(net, cfg))
    assert not result.failures, f"{spec.name}: solver failures {result.failures[:3]}"
    pressures = np.stack([s.pressures for s in result.states])
    stats = {
        "junctions": net.n_junctions, "pipes": len(net.pipes),
        "diameter": dia,
        "min_pressure": float(pressures.min()),
        "max_pressure": float(pressures.max()),
        "mean_pressure": float(pressures.mean()),
        "max_mass_residual": float(max(s.residual_mass for s in result.states)),
        "max_energy_residual": float(max(s.residual_energy for s in result.states)),
        "max_iterations": max(s.iterations for s in result.states),
    }
    assert stats["min_pressure"] > 5.0, f"{spec.name}: low pressure {stats['min_pressure']:.1f}"
    assert stats["max_pressure"] < 400.0, f"{spec.name}: high pressure"
    return stats


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--check-only", action="store_true",
                    help="validate the committed files instead of regenerating")
    ap.add_argument("--scenes", type=int, default=60,
                    help="random scenes per network for the hydraulic check")
    args = ap.parse_args()

    data = REPO / "data"
    data.mkdir(exist_ok=True)
    for spec in SPECS:
        path = data / f"{spec.name}.inp"
        if args.check_only:
            text = path.read_text()
        else:
            text = calibrate_tanks(spec, build_inp(spec))
            path.write_text(text)
        stats = validate(spec, text, n_scenes=args.scenes)
        print(f"{spec.name}: {stats}")


if __name__ == "__main__":
    main()
