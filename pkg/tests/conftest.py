import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mms.space import Space

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_connected(rng, n_vertices, n_edges, integer_lengths=False):
    """Random spanning tree plus extra edges (parallel edges allowed)."""
    edges = []
    order = rng.permutation(n_vertices)
    for k in range(1, n_vertices):
        a, b = int(order[k]), int(order[rng.integers(k)])
        edges.append((a, b))
    while len(edges) < n_edges:
        a, b = rng.choice(n_vertices, size=2, replace=False)
        edges.append((int(a), int(b)))
    if integer_lengths:
        lengths = rng.integers(1, 4, size=len(edges)).astype(float)
    else:
        lengths = rng.uniform(0.5, 2.0, size=len(edges))
    meas = rng.uniform(0.2, 2.0, size=len(edges))
    return Space([f"v{i}" for i in range(n_vertices)], rng.uniform(0.5, 2.0, n_vertices),
                 [(a, b, float(l), float(m)) for (a, b), l, m in zip(edges, lengths, meas)])


def all_simple_paths(space, x, y):
    """Every simple edge path from x to y, by depth-first search."""
    out = []

    def dfs(v, seen, path):
        if v == y:
            out.append(list(path))
            return
        for u, e in space.adjacency[v]:
            if u not in seen:
                seen.add(u)
                path.append(e)
                dfs(u, seen, path)
                path.pop()
                seen.discard(u)

    dfs(x, {x}, [])
    return out


@pytest.fixture
def path3():
    from mms.generators import path
    return path(3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_family(space, rng, count):
    """Simple paths between random pairs, cheapest under random edge weights."""
    from mms.curves import cheapest_capped_path

    curves = []
    V = space.n_vertices
    for _ in range(count):
        x, y = rng.choice(V, size=2, replace=False)
        w = rng.random(space.n_edges)
        _, c = cheapest_capped_path(space, w, int(x), int(y), 1e9)
        curves.append(c)
    return curves


def cvx_modulus(N, cost, p):
    """Dense convex-solver oracle for min sum cost rho^p s.t. N rho >= 1, rho >= 0."""
    import cvxpy as cp

    rho = cp.Variable(N.shape[1], nonneg=True)
    obj = cost @ rho if p == 1 else cost @ cp.power(rho, p)
    prob = cp.Problem(cp.Minimize(obj), [N @ rho >= 1])
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return prob.value


def atlas_spaces(max_edges=8, seed=2024):
    """Every connected graph of the networkx atlas (up to 7 vertices) with at most ``max_edges`` edges."""
    import networkx as nx
    from networkx.generators.atlas import graph_atlas_g

    rng = np.random.default_rng(seed)
    for k, G in enumerate(graph_atlas_g()):
        if not (1 <= G.number_of_edges() <= max_edges) or not nx.is_connected(G):
            continue
        nodes = sorted(G.nodes)
        edges = [(nodes.index(a), nodes.index(b), float(rng.integers(1, 4)), float(rng.uniform(0.2, 2)))
                 for a, b in G.edges]
        yield k, Space([f"v{i}" for i in nodes], np.ones(len(nodes)), edges)


def atlas_oracle_sweep(rng):
    """Compare the solver with the convex oracle on every atlas graph; returns (checked, worst relative error)."""
    from mms.curves import Curve, incidence_matrix
    from mms.modulus import mod_p

    checked, worst = 0, 0.0
    for k, s in atlas_spaces():
        V = s.n_vertices
        paths = []
        for a in range(V):
            for b in range(a + 1, V):
                paths.extend((a, p) for p in all_simple_paths(s, a, b))
        pick = rng.choice(len(paths), size=min(4, len(paths)), replace=False)
        fam = [Curve.from_edges(s, paths[i][0], paths[i][1]) for i in sorted(pick)]
        N = incidence_matrix(s, fam).toarray()
        for p in (1, 2):
            want = cvx_modulus(N, s.edge_measure, p)
            got = mod_p(s, fam, p).value
            worst = max(worst, abs(got - want) / max(abs(want), 1e-9))
        checked += 1
    return checked, worst


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
