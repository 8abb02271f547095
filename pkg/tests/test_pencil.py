import numpy as np
import pytest
from hypothesis import given, strategies as st

from mms.curves import enumerate_quasiconvex, incidence_matrix
from mms.errors import InputError
from mms.generators import grid, grid_index, parallel_edges, path, theta
from mms.pencil import (Pencil, build_pencil, default_f_grid, minmax_gap, pencil_edge_measure,
                        pencil_line_integral_bound, random_edge_sets, verify_pencil)

from conftest import random_connected


def test_parallel_edges_even_split():
    s = parallel_edges()
    P = build_pencil(s, 0, 1, 1.0)
    np.testing.assert_array_equal(P.weights, [0.5, 0.5])
    # kernel is 1 at both ends, so mubar = 1 per edge and the modulus is 2
    assert P.modulus == pytest.approx(2.0)
    assert P.constant == pytest.approx(0.5)
    assert P.semmes_constant == 1.0


def test_path_single_curve():
    s = path(4)
    P = build_pencil(s, 0, 3, 1.0)
    assert len(P.curves) == 1 and P.weights.tolist() == [1.0]
    # kernel 1, 2, 2, 1 at the vertices; endpoint means 1.5, 2, 1.5; modulus 1.5
    np.testing.assert_allclose(P.mubar, [1.5, 2.0, 1.5])
    assert P.constant == pytest.approx(2 / 3)


def test_grid_corner_pencil():
    g = grid(16)
    y = g.n_vertices - 1
    P = build_pencil(g, 0, y, 2.0)
    d = g.distance(0, y)
    assert all(c.length <= 2.0 * d for c in P.curves)
    assert P.weights.sum() == pytest.approx(1.0, abs=1e-12)
    audit = verify_pencil(g, P, random_edge_sets(g, 1000, seed=0))
    assert audit.passes and audit.checked + audit.skipped == 1000
    # occupation is bounded by mubar times the constant on every single edge
    assert np.all(P.occupation(g) <= P.constant * P.mubar * (1 + 1e-6) + 1e-12)


def test_swap_symmetry():
    g = grid(8)
    a, b = grid_index(8, 1, 2), grid_index(8, 6, 5)
    assert build_pencil(g, a, b, 2.0).constant == pytest.approx(build_pencil(g, b, a, 2.0).constant, rel=1e-9)


def test_auto_C_doubles_until_nontrivial():
    P = build_pencil(theta(3, 2), 0, 1)
    assert P.C >= 1 and P.constant > 0


def test_errors():
    s = path(3)
    with pytest.raises(InputError):
        build_pencil(s, 0, 0, 1.0)
    with pytest.raises(InputError):
        build_pencil(s, 0, 2, 0.5)


def test_roundtrip(path3):
    P = build_pencil(path3, 0, 2, 1.0)
    Q = Pencil.from_dict(path3, P.to_dict(path3))
    assert Q.constant == P.constant and Q.x == P.x and Q.y == P.y
    np.testing.assert_array_equal(Q.weights, P.weights)
    np.testing.assert_allclose(Q.mubar, P.mubar, rtol=1e-15)
    with pytest.raises(InputError):
        Pencil.from_dict(path3, {"x": "v0"})


def test_edge_measure_matches_pencil():
    g = grid(4)
    mubar, window = pencil_edge_measure(g, 0, 24, 1.5)
    P = build_pencil(g, 0, 24, 1.5)
    np.testing.assert_array_equal(mubar, P.mubar)
    np.testing.assert_array_equal(window, P.window)


@given(st.integers(0, 100_000))
def test_line_integral_bound_random(seed):
    rng = np.random.default_rng(seed)
    s = random_connected(rng, 7, 11)
    x, y = 0, int(rng.integers(1, 7))
    P = build_pencil(s, x, y, 2.0)
    for _ in range(5):
        g = rng.random(s.n_edges) * (rng.random(s.n_edges) < 0.7)
        b = pencil_line_integral_bound(s, P, g)
        assert b.holds
    audit = verify_pencil(s, P, random_edge_sets(s, 50, seed))
    assert audit.passes


def test_verify_detects_a_bad_constant():
    g = grid(4)
    P = build_pencil(g, 0, 24, 2.0)
    P.constant *= 0.5
    single = [np.flatnonzero(P.occupation(g) > 0)[:1]]
    assert not verify_pencil(g, P, single).passes


def test_verify_accepts_index_lists_and_skips_empty():
    s = parallel_edges()
    P = build_pencil(s, 0, 1, 1.0)
    audit = verify_pencil(s, P, [[0], [1], np.zeros(2, bool)])
    assert audit.max_ratio == pytest.approx(0.5) and audit.skipped == 1


@pytest.mark.parametrize("pair", [(0, 80), (grid_index(8, 2, 1), grid_index(8, 5, 6)), (10, 11)])
def test_minmax_gap_grid(pair):
    g = grid(8)
    x, y = pair
    rep = minmax_gap(g, x, y, 2.0, default_f_grid(g, 30, seed=1))
    assert rep.gap <= 1e-8
    assert rep.min_F_sigma >= -1e-7 and rep.passes


def test_minmax_single_row_and_column():
    s = parallel_edges()
    rep = minmax_gap(s, 0, 1, 1.0, [[1.0, 0.0]])
    assert rep.gap == 0.0
    p = path(3)
    rep = minmax_gap(p, 0, 2, 1.0, default_f_grid(p, 5))
    assert rep.shape[1] == 1 and rep.gap == 0.0


def test_minmax_value_against_pure_strategies():
    g = grid(3)
    f = default_f_grid(g, 6, seed=3)
    rep = minmax_gap(g, 0, 15, 1.5, f)
    P = build_pencil(g, 0, 15, 1.5)
    curves = enumerate_quasiconvex(g, 0, 15, 1.5).curves
    M = P.constant * (f @ P.mubar)[:, None] - (incidence_matrix(g, curves) @ f.T).T
    # mixed value lies between the pure maximin and minimax
    assert M.min(axis=0).max() - 1e-12 <= rep.sup_inf
    assert rep.inf_sup <= M.max(axis=1).min() + 1e-12


def test_minmax_rejects_bad_grid():
    g = grid(2)
    with pytest.raises(InputError):
        minmax_gap(g, 0, 8, 1.0, np.full((2, g.n_edges), 2.0))
