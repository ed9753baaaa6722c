import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from watergcn.network import Pipe, parse_inp
from watergcn.spectral import (
    DimensionMismatch, IsolatedNode, LOG_WEIGHT_FLOOR, WeightScheme,
    build_adjacency, cheb_apply, cheb_weighted_sum, edge_weight_hw,
    laplacian_for, power_iteration_lambda_max, scaled_laplacian,
)

from conftest import MINIMAL_INP, random_connected_adjacency

# hand-evaluated with mpmath at 40 digits: 4.727 * 100^1.852 / 1000
W_REFERENCE = 23.910331772887201


def _pipe(c=100.0, d=1.0, length=1000.0):
    return Pipe("p", "a", "b", length, d, c)


def test_edge_weight_reference_value():
    assert edge_weight_hw(_pipe()) == pytest.approx(W_REFERENCE, rel=1e-12)


def test_edge_weight_denominator_cancels():
    length = 4.727 * 100.0 ** 1.852
    assert edge_weight_hw(_pipe(length=length)) == 1.0


def test_edge_weight_inverse_in_length():
    assert edge_weight_hw(_pipe(length=2000.0)) == edge_weight_hw(_pipe()) / 2.0


@given(c=st.floats(10, 200), d=st.floats(0.1, 4.0), length=st.floats(10, 1e5))
def test_edge_weight_positive(c, d, length):
    assert edge_weight_hw(_pipe(c, d, length)) > 0


TWO_PIPE_INP = """
[JUNCTIONS]
 J1 10 0.5
 J2 10 0.5
[RESERVOIRS]
 R1 100
[PIPES]
 P1 R1 J1 2000 12 100
 P2 J1 J2 1000 12 100
[OPTIONS]
 Units CFS
"""


def test_weighted_scheme_normalizes_by_max():
    net = parse_inp(TWO_PIPE_INP)
    adj = build_adjacency(net, WeightScheme.WEIGHTED).toarray()
    i1, i2, ir = net.node_index["J1"], net.node_index["J2"], net.node_index["R1"]
    assert adj[ir, i1] == pytest.approx(0.5)   # twice the length, half the weight
    assert adj[i1, i2] == pytest.approx(1.0)
    assert np.array_equal(adj, adj.T)


def test_binary_scheme_is_adjacency_pattern(minimal_net):
    adj = build_adjacency(minimal_net, WeightScheme.BINARY).toarray()
    assert np.array_equal(adj, [[0.0, 1.0], [1.0, 0.0]])


def test_pump_entry_is_unit_weight():
    text = TWO_PIPE_INP.replace(
        "[OPTIONS]",
        "[PUMPS]\n PU1 R1 J2 HEAD C1\n[CURVES]\n C1 1.0 100\n[OPTIONS]")
    net = parse_inp(text)
    for scheme in WeightScheme:
        adj = build_adjacency(net, scheme).toarray()
        assert adj[net.node_index["R1"], net.node_index["J2"]] == 1.0


def test_weighted_entries_in_unit_interval(anytown):
    adj = build_adjacency(anytown, WeightScheme.WEIGHTED)
    assert adj.data.min() > 0.0
    assert adj.data.max() <= 1.0


def test_logarithmic_rescale_to_floor():
    net = parse_inp(TWO_PIPE_INP)
    adj = build_adjacency(net, WeightScheme.LOGARITHMIC).toarray()
    vals = sorted({adj[i, j] for i in range(3) for j in range(3) if adj[i, j] > 0})
    assert vals[0] == pytest.approx(LOG_WEIGHT_FLOOR)
    assert vals[-1] == pytest.approx(1.0)


def test_logarithmic_equal_weights_map_to_one():
    text = TWO_PIPE_INP.replace(" P1 R1 J1 2000 12 100", " P1 R1 J1 1000 12 100")
    net = parse_inp(text)
    adj = build_adjacency(net, WeightScheme.LOGARITHMIC)
    assert np.all(adj.data == 1.0)


def test_two_node_scaled_laplacian(minimal_net):
    lap = laplacian_for(minimal_net, WeightScheme.BINARY, "exact")
    assert lap.lambda_max == pytest.approx(2.0, abs=1e-12)
    assert np.allclose(lap.matrix.toarray(), [[0.0, -1.0], [-1.0, 0.0]], atol=1e-12)


def test_isolated_node_rejected():
    adj = sp.csr_matrix(np.array([[0.0, 1.0, 0.0],
                                  [1.0, 0.0, 0.0],
                                  [0.0, 0.0, 0.0]]))
    with pytest.raises(IsolatedNode):
        scaled_laplacian(adj, WeightScheme.BINARY)


@pytest.mark.parametrize("weighted", [False, True])
def test_eigenvalues_within_unit_band(weighted):
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(2, 13))
        adj = random_connected_adjacency(rng, n, weighted=weighted)
        lap = scaled_laplacian(adj, WeightScheme.WEIGHTED, "exact")
        eig = np.linalg.eigvalsh(lap.matrix.toarray())
        assert eig.min() >= -1.0 - 1e-9
        assert eig.max() <= 1.0 + 1e-9


def test_power_iteration_matches_dense():
    rng = np.random.default_rng(9)
    for _ in range(10):
        n = int(rng.integers(3, 30))
        adj = random_connected_adjacency(rng, n, weighted=True)
        exact = laplacian_for_adj(adj, "exact")
        power = laplacian_for_adj(adj, "power_iteration")
        assert power.lambda_max == pytest.approx(exact.lambda_max, abs=1e-8)


def laplacian_for_adj(adj, method):
    return scaled_laplacian(adj, WeightScheme.WEIGHTED, method)


def test_power_iteration_on_plain_matrix():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((12, 12))
    m = m + m.T
    dense = np.linalg.eigvalsh(m)
    target = dense[np.argmax(np.abs(dense))]
    est = power_iteration_lambda_max(sp.csr_matrix(m))
    assert est == pytest.approx(target, abs=1e-8)


def _dense_cheb_oracle(lap, x, order):
    """U T_k(Lambda) U^T x via a dense eigendecomposition."""
    dense = lap.matrix.toarray()
    lam, u = np.linalg.eigh(dense)
    outs = []
    t_prev, t_cur = np.ones_like(lam), lam.copy()
    for k in range(order):
        if k == 0:
            tk = t_prev
        elif k == 1:
            tk = t_cur
        else:
            t_prev, t_cur = t_cur, 2.0 * lam * t_cur - t_prev
            tk = t_cur
        outs.append(u @ (tk[:, None] * (u.T @ x)))
    return outs


def test_cheb_apply_first_terms(minimal_net):
    lap = laplacian_for(minimal_net, WeightScheme.BINARY, "exact")
    x = np.array([[1.0], [0.0]])
    terms = cheb_apply(lap, x, 2)
    assert np.array_equal(terms[0], x)
    assert np.allclose(terms[1], [[0.0], [-1.0]], atol=1e-12)


def test_cheb_apply_matches_dense_oracle():
    rng = np.random.default_rng(17)
    adj = random_connected_adjacency(rng, 6, weighted=True)
    lap = scaled_laplacian(adj, WeightScheme.WEIGHTED, "exact")
    x = rng.standard_normal((6, 3))
    terms = cheb_apply(lap, x, 5)
    oracle = _dense_cheb_oracle(lap, x, 5)
    for got, want in zip(terms, oracle):
        assert np.linalg.norm(got - want) <= 1e-10 * max(np.linalg.norm(want), 1.0)


def test_cheb_apply_dimension_mismatch(minimal_net):
    lap = laplacian_for(minimal_net, WeightScheme.BINARY)
    with pytest.raises(DimensionMismatch):
        cheb_apply(lap, np.zeros((3, 1)), 2)


def test_cheb_weighted_sum_matches_explicit():
    rng = np.random.default_rng(23)
    adj = random_connected_adjacency(rng, 7, weighted=True)
    lap = scaled_laplacian(adj, WeightScheme.WEIGHTED, "exact")
    terms = [rng.standard_normal((7, 4)) for _ in range(6)]
    got = cheb_weighted_sum(lap, terms)
    want = np.zeros_like(terms[0])
    for k in range(6):
        basis = cheb_apply(lap, terms[k], k + 1)
        want += basis[k]
    assert np.allclose(got, want, atol=1e-10)


def _diag_mass_fraction(lap):
    dense = np.abs(lap.matrix.toarray())
    return np.trace(dense) / dense.sum()


def test_weighted_scheme_suppresses_diagonal(anytown):
    binary = laplacian_for(anytown, WeightScheme.BINARY, "exact")
    weighted = laplacian_for(anytown, WeightScheme.WEIGHTED, "exact")
    logarithmic = laplacian_for(anytown, WeightScheme.LOGARITHMIC, "exact")
    assert _diag_mass_fraction(weighted) < _diag_mass_fraction(binary)
    # the log weighting restores the binary-like dominant self-connections
    assert _diag_mass_fraction(weighted) < _diag_mass_fraction(logarithmic)


def test_laplacian_sparsity_pattern(anytown):
    from watergcn.network import adjacency_structure
    lap = laplacian_for(anytown, WeightScheme.BINARY, "exact")
    pattern = set(zip(*lap.matrix.nonzero()))
    adj_pattern = set(zip(*adjacency_structure(anytown).nonzero()))
    diag = {(i, i) for i in range(anytown.n_nodes)}
    assert pattern <= (adj_pattern | diag)
    assert adj_pattern <= pattern  # every edge appears
