"""EPANET-style INP parsing and topology queries for water distribution networks.

Supports the subset of the INP format needed for steady-state work:
[TITLE], [JUNCTIONS], [RESERVOIRS], [TANKS], [PIPES], [PUMPS], [VALVES],
[CURVES], [DEMANDS], [COORDINATES], [OPTIONS]. Everything else is skipped
with a warning. All quantities are converted to US customary units at load
time (lengths/heads in ft, flows in cfs) because the Hazen-Williams
constants used downstream require them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path


class NetworkError(Exception):
    """Base class for INP parsing and network validation errors."""


class UnknownNodeReference(NetworkError):
    pass


class DuplicateName(NetworkError):
    pass


class DisconnectedGraph(NetworkError):
    pass


class NonPositiveAttribute(NetworkError):
    pass


class UnsupportedUnits(NetworkError):
    pass


class InpSyntaxError(NetworkError):
    pass


SUPPORTED_SECTIONS = {
    "TITLE", "JUNCTIONS", "RESERVOIRS", "TANKS", "PIPES", "PUMPS",
    "VALVES", "CURVES", "DEMANDS", "COORDINATES", "OPTIONS",
}

# exact unit conversions into cfs (US gallon = 231 in^3)
GPM_TO_CFS = 231.0 / (1728.0 * 60.0)
MGD_TO_CFS = 231.0e6 / (1728.0 * 86400.0)
FLOW_FACTORS = {"CFS": 1.0, "GPM": GPM_TO_CFS, "MGD": MGD_TO_CFS}

# relative pump speed range assumed when the file carries none
DEFAULT_SPEED_BOUNDS = (0.7, 1.2)


@dataclass(frozen=True)
class Junction:
    name: str
    elevation: float          # ft
    base_demand: float = 0.0  # cfs


@dataclass(frozen=True)
class FixedHeadNode:
    """Reservoir or tank collapsed to a fixed hydraulic head for steady state."""

    name: str
    head: float       # ft (tank: elevation + initial level)
    elevation: float  # ft
    kind: str = "reservoir"  # "reservoir" | "tank"


@dataclass(frozen=True)
class Pipe:
    name: str
    from_node: str
    to_node: str
    length: float          # ft
    diameter: float        # ft
    hw_coefficient: float  # Hazen-Williams C


@dataclass(frozen=True)
class Pump:
    name: str
    from_node: str
    to_node: str
    curve: tuple[tuple[float, float], ...]  # (flow cfs, head gain ft), flow-ascending
    speed_bounds: tuple[float, float] = DEFAULT_SPEED_BOUNDS


@dataclass(frozen=True)
class Valve:
    name: str
    from_node: str
    to_node: str
    diameter: float  # ft
    status: str = "open"


@dataclass(frozen=True)
class Network:
    """Validated hydraulic graph. Immutable; safe to share across workers."""

    junctions: tuple[Junction, ...]
    fixed_head_nodes: tuple[FixedHeadNode, ...]
    pipes: tuple[Pipe, ...]
    pumps: tuple[Pump, ...]
    valves: tuple[Valve, ...]
    node_index: dict[str, int]
    coordinates: dict[str, tuple[float, float]] = field(default_factory=dict)
    title: str = ""

    @property
    def n_nodes(self) -> int:
        return len(self.junctions) + len(self.fixed_head_nodes)

    @property
    def n_junctions(self) -> int:
        return len(self.junctions)

    @property
    def n_edges(self) -> int:
        return len(self.pipes) + len(self.pumps) + len(self.valves)

    def edges(self):
        """All edges in canonical order: pipes, then pumps, then valves."""
        for p in self.pipes:
            yield p
        for p in self.pumps:
            yield p
        for v in self.valves:
            yield v

    def edge_index_pairs(self) -> np.ndarray:
        """(n_edges, 2) array of dense (from, to) node indices."""
        pairs = [(self.node_index[e.from_node], self.node_index[e.to_node])
                 for e in self.edges()]
        return np.asarray(pairs, dtype=np.intp)


def _strip_comment(line: str) -> str:
    pos = line.find(";")
    return line if pos < 0 else line[:pos]


def _tokenize(text: str):
    """Yield (section, tokens) for every data line."""
    section = None
    for raw in text.splitlines():
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise InpSyntaxError(f"malformed section header: {raw.strip()!r}")
            section = line[1:-1].strip().upper()
            if section not in SUPPORTED_SECTIONS and section != "END":
                warnings.warn(f"skipping unsupported INP section [{section}]",
                              stacklevel=3)
            continue
        if section is None:
            raise InpSyntaxError(f"data before any section header: {raw.strip()!r}")
        yield section, line.split()


def _parse_float(tok: str, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise InpSyntaxError(f"expected a number for {what}, got {tok!r}") from None


def parse_inp(text: str) -> Network:
    """Parse INP text into a validated Network.

    Raises UnknownNodeReference, DuplicateName, DisconnectedGraph,
    NonPositiveAttribute, UnsupportedUnits or InpSyntaxError on bad input.
    """
    title_lines: list[str] = []
    junctions: list[list] = []      # [name, elev, demand]
    fixed: list[list] = []          # [name, head, elev, kind]
    pipes_raw: list[list] = []      # [name, n1, n2, L, d_in, C, status]
    pumps_raw: list[list] = []      # [name, n1, n2, props dict]
    valves_raw: list[list] = []     # [name, n1, n2, d_in]
    curves: dict[str, list[tuple[float, float]]] = {}
    demands: dict[str, float] = {}
    coords: dict[str, tuple[float, float]] = {}
    flow_unit = "GPM"  # EPANET default

    for section, tok in _tokenize(text):
        if section in ("TITLE", "END"):
            if section == "TITLE":
                title_lines.append(" ".join(tok))
            continue
        if section == "OPTIONS":
            if len(tok) >= 2 and tok[0].upper() == "UNITS":
                flow_unit = tok[1].upper()
            continue
        if section == "JUNCTIONS":
            name, elev = tok[0], _parse_float(tok[1], f"elevation of {tok[0]}")
            demand = _parse_float(tok[2], f"demand of {tok[0]}") if len(tok) > 2 else 0.0
            junctions.append([name, elev, demand])
        elif section == "RESERVOIRS":
            name, head = tok[0], _parse_float(tok[1], f"head of {tok[0]}")
            fixed.append([name, head, head, "reservoir"])
        elif section == "TANKS":
            if len(tok) < 3:
                raise InpSyntaxError(f"tank line too short: {tok!r}")
            name = tok[0]
            elev = _parse_float(tok[1], f"elevation of {name}")
            init = _parse_float(tok[2], f"initial level of {name}")
            fixed.append([name, elev + init, elev, "tank"])
        elif section == "PIPES":
            if len(tok) < 6:
                raise InpSyntaxError(f"pipe line too short: {tok!r}")
            status = tok[7].upper() if len(tok) > 7 else "OPEN"
            pipes_raw.append([tok[0], tok[1], tok[2],
                              _parse_float(tok[3], f"length of {tok[0]}"),
                              _parse_float(tok[4], f"diameter of {tok[0]}"),
                              _parse_float(tok[5], f"roughness of {tok[0]}"),
                              status])
        elif section == "PUMPS":
            if len(tok) < 5:
                raise InpSyntaxError(f"pump line too short: {tok!r}")
            props: dict[str, str] = {}
            for key, val in zip(tok[3::2], tok[4::2]):
                props[key.upper()] = val
            pumps_raw.append([tok[0], tok[1], tok[2], props])
        elif section == "VALVES":
            if len(tok) < 4:
                raise InpSyntaxError(f"valve line too short: {tok!r}")
            valves_raw.append([tok[0], tok[1], tok[2],
                               _parse_float(tok[3], f"diameter of {tok[0]}")])
        elif section == "CURVES":
            if len(tok) < 3:
                raise InpSyntaxError(f"curve line too short: {tok!r}")
            curves.setdefault(tok[0], []).append(
                (_parse_float(tok[1], "curve flow"), _parse_float(tok[2], "curve head")))
        elif section == "DEMANDS":
            name = tok[0]
            demands[name] = demands.get(name, 0.0) + _parse_float(tok[1], f"demand of {name}")
        elif section == "COORDINATES":
            coords[tok[0]] = (_parse_float(tok[1], "x"), _parse_float(tok[2], "y"))

    if flow_unit not in FLOW_FACTORS:
        raise UnsupportedUnits(
            f"flow unit {flow_unit!r} not supported (use CFS, GPM or MGD)")
    q_factor = FLOW_FACTORS[flow_unit]

    # node table, junctions first then fixed-head, each in file order
    node_index: dict[str, int] = {}
    junction_objs: list[Junction] = []
    for name, elev, demand in junctions:
        if name in node_index:
            raise DuplicateName(f"duplicate node name {name!r}")
        if name in demands:
            demand = demands[name]  # [DEMANDS] entries replace the junction value
        demand_cfs = demand * q_factor
        if demand_cfs < 0:
            raise NonPositiveAttribute(f"junction {name!r} has negative demand")
        node_index[name] = len(node_index)
        junction_objs.append(Junction(name, float(elev), demand_cfs))
    fixed_objs: list[FixedHeadNode] = []
    for name, head, elev, kind in fixed:
        if name in node_index:
            raise DuplicateName(f"duplicate node name {name!r}")
        node_index[name] = len(node_index)
        fixed_objs.append(FixedHeadNode(name, float(head), float(elev), kind))

    def check_endpoints(kind: str, name: str, n1: str, n2: str):
        for n in (n1, n2):
            if n not in node_index:
                raise UnknownNodeReference(f"{kind} {name!r} references missing node {n!r}")
        if n1 == n2:
            raise InpSyntaxError(f"{kind} {name!r} connects node {n1!r} to itself")

    link_names: set[str] = set()

    def check_link_name(name: str):
        if name in link_names:
            raise DuplicateName(f"duplicate link name {name!r}")
        link_names.add(name)

    pipe_objs: list[Pipe] = []
    for name, n1, n2, length, diam_in, c, status in pipes_raw:
        check_link_name(name)
        check_endpoints("pipe", name, n1, n2)
        if status == "CLOSED":
            warnings.warn(f"pipe {name!r} marked CLOSED; treated as open", stacklevel=2)
        if length <= 0 or diam_in <= 0 or c <= 0:
            raise NonPositiveAttribute(
                f"pipe {name!r} needs positive length, diameter and roughness")
        pipe_objs.append(Pipe(name, n1, n2, float(length), diam_in / 12.0, float(c)))

    pump_objs: list[Pump] = []
    for name, n1, n2, props in pumps_raw:
        check_link_name(name)
        check_endpoints("pump", name, n1, n2)
        if "HEAD" not in props:
            raise InpSyntaxError(f"pump {name!r}: only HEAD-curve pumps are supported")
        curve_id = props["HEAD"]
        if curve_id not in curves:
            raise UnknownNodeReference(f"pump {name!r} references missing curve {curve_id!r}")
        pts = tuple(sorted((q * q_factor, h) for q, h in curves[curve_id]))
        heads = [h for _, h in pts]
        if any(h2 > h1 for h1, h2 in zip(heads, heads[1:])):
            raise NonPositiveAttribute(
                f"pump {name!r}: head curve must be non-increasing in flow")
        if any(h <= 0 for h in heads):
            raise NonPositiveAttribute(f"pump {name!r}: curve head gains must be positive")
        pump_objs.append(Pump(name, n1, n2, pts))

    valve_objs: list[Valve] = []
    for name, n1, n2, diam_in in valves_raw:
        check_link_name(name)
        check_endpoints("valve", name, n1, n2)
        if diam_in <= 0:
            raise NonPositiveAttribute(f"valve {name!r} needs a positive diameter")
        valve_objs.append(Valve(name, n1, n2, diam_in / 12.0))

    net = Network(
        junctions=tuple(junction_objs),
        fixed_head_nodes=tuple(fixed_objs),
        pipes=tuple(pipe_objs),
        pumps=tuple(pump_objs),
        valves=tuple(valve_objs),
        node_index=node_index,
        coordinates={k: v for k, v in coords.items() if k in node_index},
        title=" / ".join(title_lines),
    )
    if net.n_nodes == 0:
        raise InpSyntaxError("no nodes defined")
    if net.n_edges == 0:
        raise InpSyntaxError("no edges defined")
    _check_connected(net)
    return net


def _check_connected(net: Network):
    adj = adjacency_structure(net)
    n = net.n_nodes
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    indptr, indices = adj.indptr, adj.indices
    while stack:
        u = stack.pop()
        for v in indices[indptr[u]:indptr[u + 1]]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    if not seen.all():
        names = [name for name, i in net.node_index.items() if not seen[i]]
        raise DisconnectedGraph(
            f"{len(names)} node(s) unreachable from {net.junctions[0].name!r}: "
            f"{names[:5]}{'...' if len(names) > 5 else ''}")


def adjacency_structure(net: Network) -> sp.csr_matrix:
    """Symmetric 0/1 adjacency pattern over all nodes; parallel edges collapse."""
    pairs = net.edge_index_pairs()
    i = np.concatenate([pairs[:, 0], pairs[:, 1]])
    j = np.concatenate([pairs[:, 1], pairs[:, 0]])
    n = net.n_nodes
    a = sp.coo_matrix((np.ones(i.size), (i, j)), shape=(n, n)).tocsr()
    a.data[:] = 1.0  # collapse parallel edges
    return a


def graph_diameter(net: Network) -> int:
    """Longest shortest unweighted path between any node pair, in hops."""
    adj = adjacency_structure(net)
    dist = shortest_path(adj, method="D", unweighted=True, directed=False)
    return int(dist.max())


def network_summary(net: Network) -> dict:
    """JSON-ready network description for export / plotting."""
    nodes = []
    for jn in net.junctions:
        nodes.append({"name": jn.name, "index": net.node_index[jn.name],
                      "kind": "junction", "elevation": jn.elevation,
                      "base_demand": jn.base_demand})
    for fh in net.fixed_head_nodes:
        nodes.append({"name": fh.name, "index": net.node_index[fh.name],
                      "kind": fh.kind, "head": fh.head, "elevation": fh.elevation})
    for node in nodes:
        xy = net.coordinates.get(node["name"])
        if xy is not None:
            node["x"], node["y"] = xy
    edges = []
    for p in net.pipes:
        edges.append({"name": p.name, "kind": "pipe", "from": p.from_node,
                      "to": p.to_node, "length": p.length, "diameter": p.diameter,
                      "hw_coefficient": p.hw_coefficient})
    for p in net.pumps:
        edges.append({"name": p.name, "kind": "pump", "from": p.from_node,
                      "to": p.to_node, "curve": [list(pt) for pt in p.curve],
                      "speed_bounds": list(p.speed_bounds)})
    for v in net.valves:
        edges.append({"name": v.name, "kind": "valve", "from": v.from_node,
                      "to": v.to_node, "diameter": v.diameter})
    return {
        "title": net.title,
        "counts": {"junctions": net.n_junctions,
                   "fixed_head_nodes": len(net.fixed_head_nodes),
                   "pipes": len(net.pipes), "pumps": len(net.pumps),
                   "valves": len(net.valves)},
        "nodes": nodes,
        "edges": edges,
    }
