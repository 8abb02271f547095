import numpy as np
import pytest
from hypothesis import given, strategies as st

from mms.curves import Curve, CurveFamily, enumerate_quasiconvex, incidence_matrix
from mms.errors import InputError
from mms.generators import grid, grid_horizontal_edge, grid_index, parallel_edges
from mms.modulus import (min_sup_among_optimal, mod_inf, mod_p, separation_oracle, uniform_inf_bound,
                         verify_admissible)
from mms.space import Space, ball

from conftest import atlas_oracle_sweep, cvx_modulus, random_connected, random_family



def test_single_edge():
    s = Space(["a", "b"], [1, 1], [(0, 1, 2.0, 3.0)])
    res = mod_p(s, [Curve.from_edges(s, 0, [0])], 1)
    assert res.value == pytest.approx(1.5)
    assert res.density[0] == pytest.approx(0.5)


def test_parallel_edges():
    s = parallel_edges()
    fam = [Curve.from_edges(s, 0, [0]), Curve.from_edges(s, 0, [1])]
    res = mod_p(s, fam, 1)
    assert res.value == pytest.approx(2.0)
    np.testing.assert_allclose(res.dual, [1.0, 1.0], atol=1e-12)


def test_staircases_p2_exact():
    g = grid(3)
    res = mod_p(g, CurveFamily.implicit(0, 15, 1.0), 2)
    assert res.value == pytest.approx(7 / 22, rel=1e-7)


def test_mod_inf_examples():
    s = Space(["a", "b"], [1, 1], [(0, 1, 2.0, 1.0)])
    assert mod_inf(s, [Curve.from_edges(s, 0, [0])]).value == pytest.approx(0.5)
    t = Space(["a", "b", "c", "d"], [1] * 4, [(0, 1, 1.0, 1.0), (2, 3, 4.0, 1.0), (1, 2, 1.0, 1.0)])
    fam = [Curve.from_edges(t, 0, [0]), Curve.from_edges(t, 2, [1])]
    res = mod_inf(t, fam)
    assert res.value == pytest.approx(1.0)
    assert uniform_inf_bound(fam) == pytest.approx(1.0)


def test_empty_family_rejected(path3):
    with pytest.raises(InputError):
        mod_p(path3, [], 1)
    with pytest.raises(InputError):
        mod_p(path3, [Curve.from_edges(path3, 0, [0])], 0.5)


def test_separation_oracle_examples():
    g = grid(3)
    c = separation_oracle(g, np.zeros(g.n_edges), 0, 15, g.distance(0, 15))
    assert c is not None and c.length == pytest.approx(g.distance(0, 15))
    big = np.full(g.n_edges, 1.0 / g.length.min())
    assert separation_oracle(g, big, 0, 15, 10.0) is None


def test_verify_admissible_examples():
    g = grid(2)
    fam = enumerate_quasiconvex(g, 0, 8, 1.0)
    assert verify_admissible(g, fam, np.full(g.n_edges, 10.0)).min_integral >= 1
    assert verify_admissible(g, fam, np.zeros(g.n_edges)).min_integral == 0
    res = mod_p(g, fam, 1)
    rep = verify_admissible(g, fam, res.density)
    assert abs(rep.min_integral - 1) <= 1e-7


@pytest.mark.slow
def test_brute_force_oracle_all_small_graphs():
    """Every connected graph with at most 7 vertices and 8 edges, families of up to 4 simple paths."""
    checked, worst = atlas_oracle_sweep(np.random.default_rng(7))
    assert checked == 199
    assert worst <= 1e-7


@pytest.mark.parametrize("seed", range(10))
def test_random_oracle_p(seed):
    rng = np.random.default_rng(seed)
    s = random_connected(rng, 8, 14)
    fam = random_family(s, rng, 6)
    N = incidence_matrix(s, CurveFamily(fam).curves).toarray()
    for p in (1.5, 2, 4):
        want = cvx_modulus(N, s.edge_measure, p)
        assert mod_p(s, fam, p).value == pytest.approx(want, rel=1e-6)


@given(st.integers(0, 100_000))
def test_duality_and_occupation(seed):
    rng = np.random.default_rng(seed)
    s = random_connected(rng, int(rng.integers(4, 20)), int(rng.integers(20, 60)))
    fam = random_family(s, rng, int(rng.integers(1, 15)))
    res = mod_p(s, fam, 1)
    primal = float(res.density @ s.edge_measure)
    assert abs(primal - res.dual_value) <= max(1e-8, 1e-6 * primal)
    assert np.all(res.occupation(s) <= s.edge_measure + 1e-9)
    assert res.min_integral >= 1 - 1e-7
    # complementary slackness
    assert np.all(res.integrals[res.dual > 1e-12] <= 1 + 1e-7)


@given(st.integers(0, 100_000))
def test_monotone_in_family(seed):
    rng = np.random.default_rng(seed)
    s = random_connected(rng, 8, 16)
    fam = CurveFamily(random_family(s, rng, 8)).curves
    keep = [c for c in fam if rng.random() < 0.5] or fam[:1]
    for p in (1, 2):
        assert mod_p(s, keep, p).value <= mod_p(s, fam, p).value * (1 + 1e-6) + 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_ball_chain(seed):
    """AM-estimate <= Mod_1 <= mu(B)^(1-1/p) Mod_p^(1/p) <= mu(B) Mod_inf for curves inside a ball."""
    rng = np.random.default_rng(seed)
    g = grid(4)
    c = grid_index(4, 2, 2)
    B = ball(g, c, 0.6)
    inside = np.zeros(g.n_vertices, bool)
    inside[B.members] = True
    emask = inside[g.edge_u] & inside[g.edge_v]
    sub = [int(v) for v in B.members]
    x, y = rng.choice(sub, 2, replace=False)
    fam = [cv for cv in enumerate_quasiconvex(g, int(x), int(y), 3.0) if all(emask[list(cv.edges)])]
    muB = g.edge_measure[emask].sum()
    m1 = mod_p(g, fam, 1).value
    # a constant density sequence is an AM upper estimate equal to Mod_1 here
    from mms.am import DensitySequence, am_upper
    am = am_upper(g, fam, DensitySequence.constant(mod_p(g, fam, 1).density), horizon=2).bound
    assert am >= m1 - 1e-6
    minf = mod_inf(g, fam).value
    for p in (1.5, 2, 4):
        mp = mod_p(g, fam, p).value
        mid = muB ** (1 - 1 / p) * mp ** (1 / p)
        assert m1 <= mid * (1 + 1e-6)
        assert mid <= muB * minf * (1 + 1e-6)


def test_rectangle_small():
    n = 16
    g = grid(n)
    fam = [Curve.from_edges(g, grid_index(n, 0, j), [grid_horizontal_edge(n, i, j) for i in range(n)])
           for j in range(n + 1)]
    assert mod_p(g, fam, 1).value == pytest.approx(1.0, abs=0.02)


def test_zero_cost_edges_flagged():
    s = Space(["a", "b", "c"], [1, 1, 1], [(0, 1, 1.0, 0.0), (1, 2, 1.0, 1.0)])
    res = mod_p(s, [Curve.from_edges(s, 0, [0]), Curve.from_edges(s, 1, [1])], 1)
    assert res.degenerate
    assert res.value == pytest.approx(1.0)


def test_explicit_cutting_planes_match_direct():
    g = grid(6)
    fam = enumerate_quasiconvex(g, 0, g.n_vertices - 1, 1.0)
    a = mod_p(g, fam, 1, direct_limit=10, batch=20)
    b = mod_p(g, fam, 1)
    assert a.value == pytest.approx(b.value, rel=1e-9)
    assert a.rounds > 1


def test_implicit_matches_explicit():
    g = grid(4)
    fam = enumerate_quasiconvex(g, 0, 24, 1.5)
    a = mod_p(g, fam, 1).value
    b = mod_p(g, CurveFamily.implicit(0, 24, 1.5), 1).value
    assert a == pytest.approx(b, rel=1e-9)


def test_min_sup_witness():
    s = parallel_edges()
    fam = [Curve.from_edges(s, 0, [0]), Curve.from_edges(s, 0, [1])]
    assert min_sup_among_optimal(s, fam, 2.0) == pytest.approx(1.0)


def test_result_json(path3):
    res = mod_p(path3, [Curve.from_edges(path3, 0, [0, 1])], 1)
    d = res.to_dict(path3)
    assert set(d) >= {"p", "value", "gap", "density", "dual"}
    assert d["dual"][0]["curve"] == ["v0", "v1", "v2"]
