import numpy as np
import networkx as nx
import pytest

from watergcn.network import (
    DisconnectedGraph, DuplicateName, GPM_TO_CFS, NonPositiveAttribute,
    UnknownNodeReference, UnsupportedUnits, adjacency_structure, graph_diameter,
    network_summary, parse_inp,
)

from conftest import MINIMAL_INP, path_inp


def test_minimal_network(minimal_net):
    assert minimal_net.n_junctions == 1
    assert len(minimal_net.fixed_head_nodes) == 1
    assert len(minimal_net.pipes) == 1
    assert minimal_net.n_nodes == 2
    # junctions come first in the dense index
    assert minimal_net.node_index == {"J1": 0, "R1": 1}
    # pipe diameter converted from inches to feet
    assert minimal_net.pipes[0].diameter == pytest.approx(1.0)


def test_unknown_node_reference():
    bad = MINIMAL_INP.replace(" P1  R1  J1", " P1  R1  J99")
    with pytest.raises(UnknownNodeReference):
        parse_inp(bad)


def test_duplicate_node_name():
    bad = MINIMAL_INP.replace("[RESERVOIRS]\n R1  100.0",
                              "[RESERVOIRS]\n R1  100.0\n J1  90.0")
    with pytest.raises(DuplicateName):
        parse_inp(bad)


def test_duplicate_link_name():
    bad = MINIMAL_INP.replace(
        " P1  R1  J1  1000.0  12  100  0  OPEN",
        " P1  R1  J1  1000.0  12  100  0  OPEN\n P1  J1  R1  500.0  12  100  0  OPEN")
    with pytest.raises(DuplicateName):
        parse_inp(bad)


def test_disconnected_graph():
    bad = MINIMAL_INP.replace("[JUNCTIONS]\n J1  50.0  1.0",
                              "[JUNCTIONS]\n J1  50.0  1.0\n J2  50.0  1.0\n J3  50.0  1.0")
    bad = bad.replace("[PIPES]\n P1  R1  J1  1000.0  12  100  0  OPEN",
                      "[PIPES]\n P1  R1  J1  1000.0  12  100  0  OPEN\n"
                      " P2  J2  J3  1000.0  12  100  0  OPEN")
    with pytest.raises(DisconnectedGraph):
        parse_inp(bad)


@pytest.mark.parametrize("line", [
    " P1  R1  J1  0  12  100",      # zero length
    " P1  R1  J1  1000.0  0  100",  # zero diameter
    " P1  R1  J1  1000.0  12  -5",  # negative roughness
])
def test_non_positive_pipe_attribute(line):
    bad = MINIMAL_INP.replace(" P1  R1  J1  1000.0  12  100  0  OPEN", line)
    with pytest.raises(NonPositiveAttribute):
        parse_inp(bad)


def test_negative_demand_rejected():
    with pytest.raises(NonPositiveAttribute):
        parse_inp(MINIMAL_INP.replace(" J1  50.0  1.0", " J1  50.0  -1.0"))


def test_metric_units_rejected():
    with pytest.raises(UnsupportedUnits):
        parse_inp(MINIMAL_INP.replace(" Units CFS", " Units LPS"))


def test_gpm_demand_conversion():
    text = MINIMAL_INP.replace(" Units CFS", " Units GPM")
    text = text.replace(" J1  50.0  1.0", " J1  50.0  448.83116883116884")
    net = parse_inp(text)
    assert net.junctions[0].base_demand == pytest.approx(1.0, abs=1e-14)
    assert GPM_TO_CFS == pytest.approx(231.0 / 103680.0)


def test_demands_section_overrides_junction_value():
    text = MINIMAL_INP.replace("[OPTIONS]", "[DEMANDS]\n J1 2.5\n[OPTIONS]")
    net = parse_inp(text)
    assert net.junctions[0].base_demand == pytest.approx(2.5)


def test_unsupported_section_warns():
    text = MINIMAL_INP.replace("[OPTIONS]", "[CONTROLS]\n LINK P1 OPEN\n[OPTIONS]")
    with pytest.warns(UserWarning, match="CONTROLS"):
        parse_inp(text)


def test_closed_pipe_warns_but_parses():
    text = MINIMAL_INP.replace("0  OPEN", "0  CLOSED")
    with pytest.warns(UserWarning, match="CLOSED"):
        net = parse_inp(text)
    assert len(net.pipes) == 1


def test_coordinates_kept():
    text = MINIMAL_INP.replace("[OPTIONS]",
                               "[COORDINATES]\n J1 10.0 20.0\n R1 0.0 0.0\n[OPTIONS]")
    net = parse_inp(text)
    assert net.coordinates["J1"] == (10.0, 20.0)


def test_parse_is_deterministic():
    a = parse_inp(MINIMAL_INP)
    b = parse_inp(MINIMAL_INP)
    assert a.node_index == b.node_index
    pa, pb = adjacency_structure(a), adjacency_structure(b)
    assert (pa != pb).nnz == 0


def test_path_graph_diameter():
    net = parse_inp(path_inp(4))
    assert graph_diameter(net) == 3


def test_triangle_adjacency_and_diameter():
    text = """
[JUNCTIONS]
 J1 10 0.2
 J2 10 0.2
[RESERVOIRS]
 R1 50
[PIPES]
 P1 R1 J1 100 12 100
 P2 J1 J2 100 12 100
 P3 J2 R1 100 12 100
[OPTIONS]
 Units CFS
"""
    net = parse_inp(text)
    adj = adjacency_structure(net)
    assert adj.nnz == 6
    assert np.all(np.asarray(adj.sum(axis=1)).ravel() == 2)
    assert graph_diameter(net) == 1


def test_parallel_pipes_collapse():
    text = MINIMAL_INP.replace(
        " P1  R1  J1  1000.0  12  100  0  OPEN",
        " P1  R1  J1  1000.0  12  100  0  OPEN\n P2  R1  J1  800.0  10  90  0  OPEN")
    net = parse_inp(text)
    adj = adjacency_structure(net)
    assert len(net.pipes) == 2
    assert adj.nnz == 2  # one symmetric pair
    assert adj.max() == 1.0


def test_two_node_adjacency_pattern(minimal_net):
    adj = adjacency_structure(minimal_net).toarray()
    assert np.array_equal(adj, np.array([[0.0, 1.0], [1.0, 0.0]]))


@pytest.mark.parametrize("name", ["anytown", "ctown", "richmond"])
def test_adjacency_symmetric_zero_diagonal(name, request):
    net = request.getfixturevalue(name)
    adj = adjacency_structure(net)
    assert (adj != adj.T).nnz == 0
    assert adj.diagonal().sum() == 0.0


@pytest.mark.parametrize("name", ["anytown", "ctown", "richmond"])
def test_diameter_matches_networkx_oracle(name, request):
    net = request.getfixturevalue(name)
    g = nx.Graph()
    g.add_nodes_from(range(net.n_nodes))
    for e in net.edges():
        g.add_edge(net.node_index[e.from_node], net.node_index[e.to_node])
    assert graph_diameter(net) == nx.diameter(g)


def test_diameter_bounds(anytown):
    dia = graph_diameter(anytown)
    assert 1 <= dia <= anytown.n_nodes - 1


def test_anytown_adjacency_entry_budget(anytown):
    # parallel edges collapse, so at most 2 entries per pipe/pump/valve
    adj = adjacency_structure(anytown)
    assert adj.nnz <= 2 * anytown.n_edges


def test_network_summary_roundtrips_counts(anytown):
    summary = network_summary(anytown)
    assert summary["counts"]["junctions"] == anytown.n_junctions
    assert len(summary["nodes"]) == anytown.n_nodes
    assert len(summary["edges"]) == anytown.n_edges
    kinds = {e["kind"] for e in summary["edges"]}
    assert kinds == {"pipe", "pump", "valve"}
