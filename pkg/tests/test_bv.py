import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mms.am import DensitySequence
from mms.bv import (audit_bvam, bump_sequence, counterexample_space, crossing_family, default_audit_family,
                    discrete_convolution, separated_centers, total_variation)
from mms.errors import InputError
from mms.generators import circle_weighted_grid, grid
from mms.poincare import minimal_upper_gradient
from mms.space import Space

from conftest import random_connected


@pytest.mark.parametrize("n", [4, 16])
def test_tv_examples(n):
    g = grid(n)
    x = g.pos[:, 0]
    # a vertical interface of unit length, and slope-one ramps
    assert total_variation(g, (x < 0.5).astype(float)).value == pytest.approx(1.0, rel=1e-12)
    assert total_variation(g, x).value == pytest.approx(1.0, rel=1e-12)
    assert total_variation(g, np.ones(g.n_vertices)).value == 0.0


def test_tv_path(path3):
    assert total_variation(path3, [0.0, 2.0, 1.0]).value == 3.0


def test_tv_errors(path3):
    with pytest.raises(InputError):
        total_variation(path3, [0.0, np.nan, 1.0])
    with pytest.raises(InputError):
        total_variation(path3, [0.0, 1.0, 1.0], method="other")


@given(st.integers(0, 100_000))
def test_tv_homogeneity_and_triangle(seed):
    rng = np.random.default_rng(seed)
    s = random_connected(rng, 8, 14)
    u, v = rng.standard_normal((2, 8))
    t = float(rng.uniform(-4, 4))
    tv = lambda w: total_variation(s, w).value
    assert tv(t * u) == pytest.approx(abs(t) * tv(u), rel=1e-12, abs=1e-15)
    assert tv(u + v) <= tv(u) + tv(v) + 1e-12
    assert tv(u + 3.0) == pytest.approx(tv(u), rel=1e-12)


@given(st.integers(0, 100_000))
def test_relaxation_not_below_direct(seed):
    rng = np.random.default_rng(seed)
    s = random_connected(rng, 8, 14)
    u = rng.standard_normal(8)
    d = total_variation(s, u).value
    r = total_variation(s, u, method="relaxation")
    assert r.value >= d - r.error_bound - 1e-12 * max(1.0, d)
    assert r.error_bound <= 2.0 ** -30 * 4 * max(1.0, d)
    assert r.value == pytest.approx(d, rel=1e-7)


def test_audit_minimal_gradient_is_valid():
    g = grid(5)
    u = np.random.default_rng(0).standard_normal(g.n_vertices)
    cert = audit_bvam(g, u, DensitySequence.constant(minimal_upper_gradient(g, u)))
    assert cert.valid and not cert.exceptional
    assert cert.liminf_mass == pytest.approx(total_variation(g, u).value)


def test_audit_half_gradient_fails():
    g = grid(5)
    u = g.pos[:, 0]
    cert = audit_bvam(g, u, DensitySequence.constant(0.5 * minimal_upper_gradient(g, u)))
    assert not cert.valid and cert.exceptional and cert.worst_excess > 0


def test_audit_null_exceptional_set():
    # u jumps across a zero-measure edge; the gradient there is not charged,
    # and every curve crossing it is AM-null
    s = Space(["a", "b", "c", "d"], [1] * 4, [(0, 1, 1.0, 1.0), (1, 2, 1.0, 0.0), (2, 3, 1.0, 1.0)])
    u = np.array([0.0, 0.0, 1.0, 1.0])
    cert = audit_bvam(s, u, DensitySequence.constant(np.zeros(3)))
    assert cert.valid and cert.null_certified and cert.exceptional
    assert cert.liminf_mass == 0.0


def test_bump_sequence_certifies_by_divergence():
    s = Space(["a", "b", "c", "d"], [1] * 4, [(0, 1, 1.0, 1.0), (1, 2, 1.0, 0.0), (2, 3, 1.0, 1.0)])
    u = np.array([0.0, 0.0, 1.0, 1.0])
    seq = bump_sequence(s, np.zeros(3), [1])
    cert = audit_bvam(s, u, seq)
    assert cert.valid and not cert.exceptional
    assert seq.mass(s, 10) == 0.0


def test_horizon_limited_audit_flagged(path3):
    u = np.array([0.0, 1.0, 2.0])
    seq = DensitySequence(lambda i: np.full(2, 1.0 + 2.0 ** -i))
    cert = audit_bvam(path3, u, seq, horizon=6)
    assert cert.valid and "horizon-limited" in cert.flags


def test_default_audit_family_covers_all_pairs_on_small_spaces(path3):
    fam = default_audit_family(path3, walks=0)
    assert sorted((c.vertices[0], c.vertices[-1]) for c in fam) == [(0, 1), (0, 2), (1, 2)]


def test_separated_centers():
    g = grid(8)
    cs = separated_centers(g, 0.25)
    D = g.distance_matrix()
    sub = D[np.ix_(cs, cs)]
    assert np.all(sub[~np.eye(len(cs), dtype=bool)] >= 0.25)
    # maximal: every vertex is within eps of a center
    assert np.all(D[:, cs].min(axis=1) < 0.25)


@pytest.mark.parametrize("seed", range(3))
def test_smoothing_estimate(seed):
    g = grid(32)
    h = 1 / 32
    rng = np.random.default_rng(seed)
    u = ((g.pos - 0.5) @ rng.standard_normal(2) > rng.uniform(-0.1, 0.1)).astype(float)
    errs = []
    for eps in (4 * h, 8 * h):
        ue, lip, rep = discrete_convolution(g, u, eps)
        assert rep.ratio <= 10
        assert lip @ g.edge_measure == pytest.approx(rep.lip_mass)
        errs.append(rep.l1_error)
    assert errs[0] <= errs[1] * 1.1


def test_smoothing_preserves_constants_and_rejects_small_eps():
    g = grid(8)
    ue, lip, rep = discrete_convolution(g, np.full(g.n_vertices, 2.0), 0.25)
    np.testing.assert_allclose(ue, 2.0, rtol=1e-14)
    assert rep.lip_mass == pytest.approx(0.0, abs=1e-12)
    assert rep.ratio == 0.0
    with pytest.raises(InputError):
        discrete_convolution(g, np.zeros(g.n_vertices), 1 / 16)


def test_counterexample_small():
    s, u, rep = counterexample_space(32)
    assert rep["circle_mass"] == pytest.approx(2 * math.pi, rel=1e-9)
    assert 0.9 <= rep["tv_over_2pi"] <= 1.1
    assert rep["circle_adjacent_share"] == 1.0 and rep["tv_far_from_circle"] == 0.0
    assert rep["crossing_mod1"] >= 0.5
    fam = crossing_family(s, 32)
    assert all(abs(u[c.vertices[0]] - u[c.vertices[len(c.vertices) // 2]]) == 1.0 for c in fam)
    with pytest.raises(InputError):
        counterexample_space(8)


def test_circle_grid_measure():
    s = circle_weighted_grid(32)
    base = grid(32)
    # the lattice on [-2,2]^2 has area 16; the circle adds its arclength
    assert s.vertex_measure.sum() == pytest.approx(16 + 2 * math.pi, rel=1e-9)
    assert s.n_vertices == base.n_vertices
