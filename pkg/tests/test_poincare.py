import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mms.am import DensitySequence
from mms.errors import InadmissibleSequenceError, InputError
from mms.generators import bowtie, bowtie_lobes, grid, path
from mms.pencil import build_pencil
from mms.poincare import (am_pi_check, default_balls, default_functions, dyadic_radii, edge_mass_to_vertices,
                          hajlasz_gradient, minimal_upper_gradient, pencil_to_pi, pi_constant, pi_ratio,
                          riesz_potential, sample_pairs, weak_type_constant)

from conftest import random_connected


def test_path_example(path3):
    # ball of radius 2 around the middle holds all three vertices: mean 1/3,
    # mean deviation 4/9, gradient average 1/2
    u = [0.0, 0.0, 1.0]
    assert pi_ratio(path3, u, 1, 2.0) == pytest.approx(4 / 9, rel=1e-15)
    rep = pi_constant(path3, [u])
    assert rep.constant == pytest.approx(4 / 9, rel=1e-15)
    assert rep.witnesses[0][2:] == (1, 2.0)


def test_constant_function_gives_zero():
    g = grid(4)
    rep = pi_constant(g, [np.full(g.n_vertices, 3.0)])
    assert rep.constant == 0.0 and rep.evaluated == 0


def test_lambda_below_one_rejected(path3):
    with pytest.raises(InputError):
        pi_constant(path3, [[0, 1, 2]], lam=0.5)


def test_zero_gradient_inside_ball_is_a_failure():
    # u jumps across an edge of zero measure, so the gradient average over
    # balls straddling it vanishes while the oscillation does not
    from mms.space import Space
    s = Space(["a", "b", "c"], [1, 1, 1], [(0, 1, 1.0, 0.0), (1, 2, 1.0, 1.0)])
    rep = pi_constant(s, [[1.0, 0.0, 0.0]], balls=[(0, 1.5)])
    assert math.isinf(rep.constant) and rep.failures == 1


def test_hajlasz_examples(path3):
    np.testing.assert_array_equal(hajlasz_gradient(path3, [0.0, 1.0, 0.0], 1.5), [0.5, 1.0, 0.5])
    np.testing.assert_array_equal(hajlasz_gradient(path3, path3.vertex_measure, 5.0), [1.0, 1.0, 1.0])
    assert hajlasz_gradient(path3, [0.0, 1.0, 0.0], 1.5, vertices=["v1"]).tolist() == [1.0]
    with pytest.raises(InputError):
        hajlasz_gradient(path3, [0.0, 1.0, 0.0], 0.0)


def test_riesz_potential_point_mass(path3):
    assert riesz_potential(path3, [0.0, 1.0, 0.0], [0, 1, 2], 0) == pytest.approx(1.0)
    assert riesz_potential(path3, [0.0, 1.0, 0.0], [0, 2], 0) == 0.0
    assert riesz_potential(path3, [1.0, 0.0, 0.0], [0, 1, 2], 0) == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_riesz_potential_double_sum(seed):
    rng = np.random.default_rng(seed)
    s = random_connected(rng, 9, 14)
    D = s.distance_matrix()
    mu = s.vertex_measure
    m = rng.random(9)
    A = rng.random(9) < 0.6
    for x in range(9):
        want = 0.0
        for z in range(9):
            if A[z] and z != x:
                want += m[z] * D[x, z] / mu[D[x] < D[x, z]].sum() * mu[z]
        assert riesz_potential(s, m, A, x) == pytest.approx(want, rel=1e-13)


def test_weak_type():
    g = grid(8)
    nu = np.zeros(g.n_vertices)
    nu[40] = 1.0
    h = hajlasz_gradient(g, nu, 1.0)
    c = weak_type_constant(g, h, 1.0)
    assert 0 < c < 10
    assert weak_type_constant(g, np.zeros(g.n_vertices), 1.0) == 0.0


def test_edge_mass_to_vertices_conserves_mass():
    g = grid(4)
    e = np.random.default_rng(1).random(g.n_edges)
    assert edge_mass_to_vertices(g, e).sum() == pytest.approx(e @ g.edge_measure, rel=1e-14)


@pytest.mark.parametrize("s_len", [2.0, 10.0])
def test_scale_invariance(s_len):
    g = grid(6)
    U = default_functions(g, 6, seed=2)
    base = pi_constant(g, U).constant
    scaled = g.scaled(length_factor=s_len)
    assert pi_constant(scaled, U).constant == pytest.approx(base, rel=1e-9)
    both = g.scaled(vertex_factor=s_len, edge_factor=s_len)
    assert pi_constant(both, U).constant == pytest.approx(base, rel=1e-9)


@given(st.integers(0, 10_000))
def test_witnesses_reevaluate(seed):
    rng = np.random.default_rng(seed)
    s = random_connected(rng, 10, 16)
    U = default_functions(s, 4, seed=seed)
    lam = float(rng.choice([1.0, 2.0, 3.5]))
    rep = pi_constant(s, U, lam=lam)
    for ratio, f, c, r in rep.witnesses:
        assert pi_ratio(s, U[f], c, r, lam) == pytest.approx(ratio, rel=1e-9)


def test_lambda_monotonicity_fails_for_averages():
    # enlarging the denominator ball can lower the gradient average, so the
    # constant is not monotone in lambda; the mass form is
    g = grid(8)
    U = default_functions(g, 12, seed=0)
    a = pi_constant(g, U, lam=1.0).constant
    b = pi_constant(g, U, lam=5.0).constant
    assert b > a


def test_dyadic_radii_and_balls():
    g = grid(4)
    radii = dyadic_radii(g)
    assert radii[0] == g.diameter() and radii[-1] >= g.length.min()
    balls = default_balls(g, max_centers=5, seed=1)
    assert len(balls) == 5 * len(radii)
    assert balls == default_balls(g, max_centers=5, seed=1)


def test_sample_pairs():
    g = grid(8)
    pairs = sample_pairs(g, 10, seed=3, max_distance=0.3)
    assert len(pairs) == 10 and all(a != b and g.distance(a, b) <= 0.3 for a, b in pairs)
    assert pairs == sample_pairs(g, 10, seed=3, max_distance=0.3)
    from mms.space import Space
    with pytest.raises(InputError):
        sample_pairs(Space(["a"], [1.0], []), 1)


def test_am_pi_constant_sequence_equals_pi():
    g = grid(6)
    u = default_functions(g, 3, seed=4)[2]
    balls = default_balls(g)
    seq = DensitySequence.constant(minimal_upper_gradient(g, u))
    assert am_pi_check(g, u, seq, balls).constant == pytest.approx(pi_constant(g, [u], balls).constant, rel=1e-12)


def test_am_pi_rejects_non_upper_bound():
    g = grid(4)
    u = default_functions(g, 1, seed=0)[0]
    seq = DensitySequence.constant(0.5 * minimal_upper_gradient(g, u))
    with pytest.raises(InadmissibleSequenceError):
        am_pi_check(g, u, seq)


def test_am_pi_larger_sequence_lowers_constant():
    g = grid(6)
    u = default_functions(g, 2, seed=1)[1]
    gu = minimal_upper_gradient(g, u)
    base = am_pi_check(g, u, DensitySequence.constant(gu)).constant
    assert am_pi_check(g, u, DensitySequence.constant(2 * gu)).constant == pytest.approx(base / 2, rel=1e-12)


def test_chain_on_path_is_tight():
    s = path(6)
    u = np.arange(6, dtype=float)
    rep = pencil_to_pi(s, u, None, [(0, 5), (1, 3)], C=1.0)
    # the only curve is the path itself, so the line integral equals the increment
    assert rep.stages["stage1"] == pytest.approx(1.0, rel=1e-12)
    assert rep.stages["stage2"] == pytest.approx(rep.stages["potential"], rel=1e-12)
    assert rep.stages["pencil_bound_holds"]


def test_chain_derived_dominates_direct():
    g = grid(8)
    U = np.array(default_functions(g, 6, seed=5))
    pairs = sample_pairs(g, 5, seed=5)
    balls = default_balls(g)
    rep = pencil_to_pi(g, U, None, pairs, balls)
    direct = pi_constant(g, U, balls, rep.lam)
    assert rep.lam == rep.stages["tau"] == 5.0
    assert rep.constant >= direct.constant - 1e-9
    for k, v in enumerate(U):
        assert rep.stages["per_function"][k] >= pi_constant(g, [v], balls, rep.lam).constant - 1e-9
    for key in ("stage1", "stage2", "potential", "hajlasz", "ball"):
        assert math.isfinite(rep.stages[key])


def test_chain_uses_provider_and_sequences():
    g = grid(4)
    U = np.array(default_functions(g, 2, seed=0))
    seen = []

    def provider(x, y):
        seen.append((x, y))
        return build_pencil(g, x, y, 2.0)

    seqs = [DensitySequence.constant(2 * minimal_upper_gradient(g, v)) for v in U]
    a = pencil_to_pi(g, U, seqs, [(0, 24)], pencil_provider=provider)
    b = pencil_to_pi(g, U, None, [(0, 24)])
    assert seen == [(0, 24)]
    # doubling the gradient halves every stage ratio
    assert a.stages["stage1"] == pytest.approx(b.stages["stage1"] / 2, rel=1e-12)
    with pytest.raises(InputError):
        pencil_to_pi(g, U, seqs[:1], [(0, 24)])


def test_bowtie_lobes_have_large_constant():
    b = bowtie(4)
    u = bowtie_lobes(b)
    rep = pi_constant(b, [u])
    g = pi_constant(grid(8), default_functions(grid(8), 6)).constant
    assert rep.constant > 2 * g
