import numpy as np
import pytest
import scipy.sparse as sp

from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "data"

MINIMAL_INP = """
[TITLE]
 minimal two-node net
[JUNCTIONS]
 J1  50.0  1.0
[RESERVOIRS]
 R1  100.0
[PIPES]
 P1  R1  J1  1000.0  12  100  0  OPEN
[OPTIONS]
 Units CFS
[END]
"""


@pytest.fixture(scope="session")
def anytown():
    from watergcn.network import parse_inp
    return parse_inp((DATA / "anytown.inp").read_text())


@pytest.fixture(scope="session")
def ctown():
    from watergcn.network import parse_inp
    return parse_inp((DATA / "ctown.inp").read_text())


@pytest.fixture(scope="session")
def richmond():
    from watergcn.network import parse_inp
    return parse_inp((DATA / "richmond.inp").read_text())


@pytest.fixture(scope="session")
def minimal_net():
    from watergcn.network import parse_inp
    return parse_inp(MINIMAL_INP)


def random_connected_adjacency(rng, n, weighted=False):
    """Random connected symmetric adjacency: a random tree plus extra edges."""
    rows, cols = [], []
    for v in range(1, n):
        u = int(rng.integers(0, v))
        rows.append(u)
        cols.append(v)
    extra = int(rng.integers(0, max(n // 2, 1)))
    for _ in range(extra):
        u, v = rng.choice(n, size=2, replace=False)
        rows.append(int(min(u, v)))
        cols.append(int(max(u, v)))
    pairs = sorted(set(zip(rows, cols)))
    vals = rng.uniform(0.1, 1.0, len(pairs)) if weighted else np.ones(len(pairs))
    i = np.array([p[0] for p in pairs] + [p[1] for p in pairs])
    j = np.array([p[1] for p in pairs] + [p[0] for p in pairs])
    a = sp.coo_matrix((np.concatenate([vals, vals]), (i, j)), shape=(n, n))
    return a.tocsr()


def path_inp(n_nodes: int) -> str:
    """INP text for a path graph: reservoir, then a chain of junctions."""
    lines = ["[JUNCTIONS]"]
    for k in range(1, n_nodes):
        lines.append(f" J{k} 10.0 0.5")
    lines += ["[RESERVOIRS]", " R1 100.0", "[PIPES]"]
    prev = "R1"
    for k in range(1, n_nodes):
        lines.append(f" P{k} {prev} J{k} 500 12 100")
        prev = f"J{k}"
    lines += ["[OPTIONS]", " Units CFS"]
    return "\n".join(lines)
