"""1-Poincaré measurement, Riesz potentials, Hajłasz gradients, and the
pencil-to-Poincaré chain on finite spaces.

Ball averages of vertex functions use the vertex measure; ball averages of
edge fields use the edge measure over edges with both endpoints in the
(open) ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InadmissibleSequenceError, InputError
from .space import Space

_EPS = 1e-12


def minimal_upper_gradient(space: Space, u) -> np.ndarray:
    """``|u(a) - u(b)| / length(e)`` per edge."""
    u = np.asarray(u, dtype=float)
    if u.shape != (space.n_vertices,):
        raise InputError("u must have one value per vertex")
    return np.abs(u[space.edge_u] - u[space.edge_v]) / space.length


def smooth_once(space: Space, u) -> np.ndarray:
    """Measure-weighted average over closed graph neighbourhoods."""
    u = np.asarray(u, dtype=float)
    mu = space.vertex_measure
    num = mu * u
    den = mu.copy()
    np.add.at(num, space.edge_u, mu[space.edge_v] * u[space.edge_v])
    np.add.at(num, space.edge_v, mu[space.edge_u] * u[space.edge_u])
    np.add.at(den, space.edge_u, mu[space.edge_v])
    np.add.at(den, space.edge_v, mu[space.edge_u])
    return num / np.where(den > 0, den, 1.0)


def default_functions(space: Space, count: int = 20, seed: int = 0, extra=()) -> list[np.ndarray]:
    """Seeded test functions: random fields, distance functions, and once-smoothed
    Voronoi indicators ``1{d(z,a) < d(z,b)}``, cycled in that order, then ``extra``."""
    rng = np.random.default_rng(seed)
    out = []
    V = space.n_vertices
    for k in range(count):
        kind = k % 3
        if kind == 0:
            out.append(rng.standard_normal(V))
        elif kind == 1:
            out.append(space.distances_from(int(rng.integers(V))).copy())
        else:
            a, b = rng.choice(V, size=2, replace=False) if V > 1 else (0, 0)
            ind = (space.distances_from(int(a)) < space.distances_from(int(b))).astype(float)
            out.append(smooth_once(space, ind))
    out.extend(np.asarray(f, dtype=float) for f in extra)
    return out


def dyadic_radii(space: Space, min_radius: float | None = None) -> list[float]:
    """``diam / 2^k`` down to the smallest edge length."""
    diam = space.diameter()
    lo = float(space.length.min()) if min_radius is None else min_radius
    radii = []
    r = diam
    while r >= lo * (1 - 1e-12) and len(radii) < 64:
        radii.append(r)
        r /= 2
    return radii


def default_balls(space: Space, max_centers: int = 256, seed: int = 0, radii=None) -> list[tuple[int, float]]:
    """All centers (or a seeded sample of ``max_centers``) times dyadic radii."""
    V = space.n_vertices
    if V <= max_centers:
        centers = np.arange(V)
    else:
        centers = np.sort(np.random.default_rng(seed).choice(V, size=max_centers, replace=False))
    radii = dyadic_radii(space) if radii is None else list(radii)
    return [(int(c), float(r)) for c in centers for r in radii]


class _BallTables:
    """Per-center sorted distances and prefix sums for O(1) ball measures."""

    def __init__(self, space: Space, center: int):
        d = space.distances_from(center)
        self.order = np.argsort(d, kind="stable")
        self.sd = d[self.order]
        self.cum_mu = np.concatenate([[0.0], np.cumsum(space.vertex_measure[self.order])])
        emax = np.maximum(d[space.edge_u], d[space.edge_v])
        self.eorder = np.argsort(emax, kind="stable")
        self.esd = emax[self.eorder]
        self.cum_emu = np.concatenate([[0.0], np.cumsum(space.edge_measure[self.eorder])])

    def count(self, r: float) -> int:
        return int(np.searchsorted(self.sd, r, side="left"))

    def ecount(self, r: float) -> int:
        return int(np.searchsorted(self.esd, r, side="left"))


@dataclass
class PIReport:
    constant: float
    lam: float
    mode: str
    witnesses: list = field(default_factory=list)
    evaluated: int = 0
    skipped: int = 0
    failures: int = 0
    stages: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"constant": self.constant, "lambda": self.lam, "mode": self.mode,
                "witnesses": [list(w) for w in self.witnesses[:5]], "evaluated": self.evaluated,
                "skipped": self.skipped, "failures": self.failures, "stages": self.stages, "notes": self.notes}


def _ball_ratios(space: Space, U: np.ndarray, G: np.ndarray, balls, lam: float,
                 denominators: Callable | None = None):
    """Yield ``(num, den_avg, k_func, center, radius)`` for each ball and function.

    ``U`` is (F, V), ``G`` is (F, E).  ``num = avg_B |u - u_B|``,
    ``den_avg = avg_{lam B} g``.
    """
    mu = space.vertex_measure
    emu = space.edge_measure
    by_center: dict[int, list[float]] = {}
    for c, r in balls:
        by_center.setdefault(int(c), []).append(float(r))
    for c in sorted(by_center):
        t = _BallTables(space, c)
        gmu = (G * emu)[:, t.eorder]
        cum_g = np.concatenate([np.zeros((G.shape[0], 1)), np.cumsum(gmu, axis=1)], axis=1)
        for r in by_center[c]:
            k = t.count(r)
            if k == 0 or t.cum_mu[k] <= 0:
                yield None, None, None, c, r
                continue
            mem = t.order[:k]
            w = mu[mem]
            mb = t.cum_mu[k]
            ub = (U[:, mem] @ w) / mb
            num = (np.abs(U[:, mem] - ub[:, None]) @ w) / mb
            ke = t.ecount(lam * r)
            em = t.cum_emu[ke]
            den = cum_g[:, ke] / em if em > 0 else np.zeros(G.shape[0])
            yield num, den, None, c, r


def _collect(space, U, G, balls, lam, mode) -> PIReport:
    best = 0.0
    wit = []
    evaluated = skipped = failures = 0
    for num, den, _, c, r in _ball_ratios(space, U, G, balls, lam):
        if num is None:
            skipped += 1
            continue
        for f in range(U.shape[0]):
            n_, d_ = float(num[f]), float(den[f])
            if n_ <= _EPS * max(1.0, float(np.abs(U[f]).max())):
                skipped += 1
                continue
            evaluated += 1
            ratio = math.inf if d_ <= 0 else n_ / (r * d_)
            if math.isinf(ratio):
                failures += 1
            wit.append((ratio, f, int(c), r))
    wit.sort(key=lambda w: (-w[0], w[1], w[2], w[3]))
    best = wit[0][0] if wit else 0.0
    return PIReport(best, lam, mode, wit[:20], evaluated, skipped, failures)


def _as_matrix(space: Space, functions) -> np.ndarray:
    U = np.atleast_2d(np.asarray(functions, dtype=float))
    if U.shape[1] != space.n_vertices:
        raise InputError("functions must be vertex fields")
    if not np.all(np.isfinite(U)):
        raise InputError("functions must be finite")
    return U


def pi_constant(space: Space, functions, balls=None, lam: float = 1.0) -> PIReport:
    """Largest ``avg_B |u - u_B| / (rad(B) avg_{lam B} g_u)`` over functions and balls.

    Balls with zero numerator are skipped; a positive numerator over a zero
    denominator is a failure and makes the constant infinite.
    """
    if lam < 1:
        raise InputError("lambda must be at least 1")
    U = _as_matrix(space, functions)
    balls = default_balls(space) if balls is None else balls
    G = np.stack([minimal_upper_gradient(space, u) for u in U])
    return _collect(space, U, G, balls, lam, "PI")


def pi_ratio(space: Space, u, center, radius: float, lam: float = 1.0, g=None) -> float:
    """The Poincaré ratio of a single ball, recomputed from scratch."""
    u = np.asarray(u, dtype=float)
    g = minimal_upper_gradient(space, u) if g is None else np.asarray(g, dtype=float)
    d = space.distances_from(center)
    inside = d < radius
    mu = space.vertex_measure
    if mu[inside].sum() <= 0:
        return math.nan
    ub = (u[inside] * mu[inside]).sum() / mu[inside].sum()
    num = (np.abs(u[inside] - ub) * mu[inside]).sum() / mu[inside].sum()
    big = d < lam * radius
    em = big[space.edge_u] & big[space.edge_v]
    emu = space.edge_measure[em]
    if emu.sum() <= 0:
        return math.inf if num > 0 else math.nan
    den = (g[em] * emu).sum() / emu.sum()
    if num == 0:
        return 0.0
    return math.inf if den <= 0 else num / (radius * den)


def sequence_denominator_fields(sequence, horizon: int) -> list[np.ndarray]:
    idx = sequence.evaluated_indices(horizon)
    return [sequence.term(i) for i in idx]


def am_pi_check(space: Space, u, sequence, balls=None, lam: float = 1.0, horizon: int = 16,
                family=None) -> PIReport:
    """Poincaré ratios with ``liminf_i avg_{lam B} g_i`` in the denominator.

    The sequence must first pass the BV_AM upper-bound audit for ``u``.
    """
    from .bv import audit_bvam

    u = np.asarray(u, dtype=float)
    cert = audit_bvam(space, u, sequence, family, horizon)
    if not cert.valid:
        raise InadmissibleSequenceError(
            f"sequence is not a BV_AM upper bound of u: {len(cert.exceptional)} exceptional curves",
            curve_index=cert.exceptional[0] if cert.exceptional else None)
    balls = default_balls(space) if balls is None else balls
    terms = sequence_denominator_fields(sequence, horizon)
    # the liminf is read off the last term for described tails, else the late half
    used = terms[-1:] if sequence.tail in ("constant", "nondecreasing") else terms[len(terms) // 2:]
    G = np.stack(used)
    U = np.repeat(u[None, :], len(used), axis=0)
    wit = []
    evaluated = skipped = failures = 0
    scale = _EPS * max(1.0, float(np.abs(u).max()))
    for num, den, _, c, r in _ball_ratios(space, U, G, balls, lam):
        if num is None or num[0] <= scale:
            skipped += 1
            continue
        d = float(den.min())
        evaluated += 1
        ratio = math.inf if d <= 0 else float(num[0]) / (r * d)
        failures += math.isinf(ratio)
        wit.append((ratio, 0, int(c), r))
    wit.sort(key=lambda w: (-w[0], w[2], w[3]))
    rep = PIReport(wit[0][0] if wit else 0.0, lam, "AM-PI", wit[:20], evaluated, skipped, failures)
    if sequence.tail == "none":
        rep.notes.append("horizon-limited liminf")
    return rep


# --------------------------------------------------------------------------
# potentials and Hajłasz gradients


def riesz_potential(space: Space, mass, A, x) -> float:
    """``sum_{z in A} mass(z) d(x,z)/mu(B(x,d(x,z))) mu(z)``; the ``z = x`` term is 0."""
    m = np.asarray(mass, dtype=float)
    if m.shape != (space.n_vertices,):
        raise InputError("mass must be a vertex field")
    if np.any(m < 0):
        raise InputError("mass must be nonnegative")
    if isinstance(A, np.ndarray) and A.dtype == bool:
        mask = A
    else:
        mask = np.zeros(space.n_vertices, dtype=bool)
        mask[[space.index(a) for a in A]] = True
    row = space.kernel_row(x)
    return float(np.sum((m * row * space.vertex_measure)[mask]))


def hajlasz_gradient(space: Space, nu, CR: float, vertices=None) -> np.ndarray:
    """``h(x) = max nu(B(x,r)) / mu(B(x,r))`` over the distinct open balls with ``0 < r <= CR``."""
    nu = np.asarray(nu, dtype=float)
    if CR <= 0:
        raise InputError("CR must be positive")
    V = space.n_vertices
    verts = range(V) if vertices is None else [space.index(v) for v in vertices]
    out = np.zeros(V) if vertices is None else np.zeros(len(verts))
    for k, x in enumerate(verts):
        d = space.distances_from(x)
        order = np.argsort(d, kind="stable")
        sd = d[order]
        cm = np.cumsum(space.vertex_measure[order])
        cn = np.cumsum(nu[order])
        # prefix ending at a tie-group boundary with distance < CR
        last = np.r_[sd[1:] != sd[:-1], True]
        ok = last & (sd < CR) & (cm > 0)
        vals = cn[ok] / cm[ok]
        out[k if vertices is not None else x] = float(vals.max()) if vals.size else 0.0
    return out


def weak_type_constant(space: Space, h, nu_total: float, ts=None) -> float:
    """``max_t t mu({h > t}) / nu_total`` over a log-spaced ``t`` grid."""
    h = np.asarray(h, dtype=float)
    if nu_total <= 0:
        return 0.0
    pos = h[h > 0]
    if pos.size == 0:
        return 0.0
    if ts is None:
        ts = np.geomspace(pos.min() / 2, pos.max(), 64)
    mu = space.vertex_measure
    return float(max(t * mu[h > t].sum() for t in ts) / nu_total)


def edge_mass_to_vertices(space: Space, g) -> np.ndarray:
    """``nu(z) = sum_{e ∋ z} g(e) mu(e) / 2``: the vertex measure carrying the mass of ``g mu``."""
    gm = np.asarray(g, dtype=float) * space.edge_measure / 2
    nu = np.zeros(space.n_vertices)
    np.add.at(nu, space.edge_u, gm)
    np.add.at(nu, space.edge_v, gm)
    return nu


def late_average(sequence, horizon: int) -> np.ndarray:
    """Average of the terms in the last quarter of the evaluated horizon."""
    idx = sequence.evaluated_indices(horizon)
    tail = idx[len(idx) - max(1, len(idx) // 4):]
    return np.mean([sequence.term(i) for i in tail], axis=0)


def _max_pair_ratio(u: np.ndarray, f: np.ndarray) -> float:
    """``max_{x,y} |u(x) - u(y)| / (f(x) + f(y))`` by Dinkelbach iteration."""
    if u.size < 2 or np.ptp(u) == 0:
        return 0.0
    zero = f <= 0
    if zero.sum() >= 2 and np.ptp(u[zero]) > 0:
        return math.inf
    K = 0.0
    for _ in range(200):
        a = u - K * f
        b = -u - K * f
        i, j = int(np.argmax(a)), int(np.argmax(b))
        if a[i] + b[j] <= 1e-15 * max(1.0, abs(K)):
            break
        den = f[i] + f[j]
        if den <= 0:
            return math.inf
        K = (u[i] - u[j]) / den
    return float(K)


def _hajlasz_at(space: Space, NU: np.ndarray, x: int, CR: float) -> np.ndarray:
    """Hajłasz gradient at ``x`` for each column of ``NU`` (V x F)."""
    d = space.distances_from(x)
    order = np.argsort(d, kind="stable")
    sd = d[order]
    cm = np.cumsum(space.vertex_measure[order])
    cn = np.cumsum(NU[order], axis=0)
    last = np.r_[sd[1:] != sd[:-1], True]
    ok = last & (sd < CR) & (cm > 0)
    if not ok.any():
        return np.zeros(NU.shape[1])
    return (cn[ok] / cm[ok][:, None]).max(axis=0)


def pencil_to_pi(space: Space, u, sequence=None, pairs=(), balls=None, *, C: float = 2.0, lam: float | None = None,
                 horizon: int = 16, pencil_provider: Callable | None = None, family=None) -> PIReport:
    """Run the pencil -> potential -> Hajłasz -> ball chain and derive a PI constant.

    ``u`` is one vertex field or a stack of them; ``sequence`` is a density
    sequence (or one per function) that must pass the BV_AM audit, and
    defaults to the constant sequence of minimal upper gradients.  With ``g``
    the late-horizon average of the sequence and ``nu`` the vertex measure
    carrying ``g mu``, each sampled pair reports

    * stage 1: ``|u(x)-u(y)| / sum sigma int_gamma g``,
    * stage 2: ``|u(x)-u(y)| / sum_e g mubar`` (with the pencil inequality
      ``sum sigma int_gamma g <= C_pencil sum g mubar`` checked),
    * potential: ``|u(x)-u(y)| / (I_W nu(x) + I_W nu(y))``, equal to stage 2,
    * Hajłasz: ``|u(x)-u(y)| / (d(x,y) (h(x) + h(y)))`` with ``h`` over radii ``<= C d(x,y)``.

    For a ball ``B = B(c, R)`` and ``f = I_{tau B} nu`` with ``tau = 1 + 2C``,
    every pair in ``B`` satisfies ``|u(x)-u(y)| <= K (f(x) + f(y))`` where
    ``K`` is the larger of the sampled pencil constants and the exact pair
    constant over ``B``; averaging gives ``avg_B |u - u_B| <= 2 K avg_B f``.
    Since ``avg_B f`` is controlled by ``R nu(tau B) / mu(B)`` in a doubling
    space, the natural right-hand side lives on ``tau B``: the derived PI
    constant is the largest ``2 K avg_B f / (R avg_{lam B} g)`` with
    ``lam = tau`` by default, and it dominates the direct PI ratio with the
    same ``g`` and ``lam`` by construction.  The ball stage
    ``avg_B |u-u_B| / (R nu(lam B)/mu(lam B))`` is reported too.
    """
    from .am import DensitySequence
    from .bv import audit_bvam
    from .curves import incidence_matrix
    from .pencil import build_pencil

    U = _as_matrix(space, u)
    Fn = U.shape[0]
    if sequence is None:
        seqs = [DensitySequence.constant(minimal_upper_gradient(space, v)) for v in U]
    elif isinstance(sequence, (list, tuple)):
        seqs = list(sequence)
    else:
        seqs = [sequence] * Fn
    if len(seqs) != Fn:
        raise InputError("need one sequence per function")
    for k, (v, sq) in enumerate(zip(U, seqs)):
        cert = audit_bvam(space, v, sq, family, horizon)
        if not cert.valid:
            raise InadmissibleSequenceError(f"sequence {k} is not a BV_AM upper bound of its function")
    G = np.stack([late_average(sq, horizon) for sq in seqs])
    NU = np.stack([edge_mass_to_vertices(space, g) for g in G], axis=1)
    mu = space.vertex_measure
    provider = pencil_provider or (lambda x, y: build_pencil(space, x, y, C))
    K = space.kernel_matrix()
    names = ("stage1", "stage2", "potential", "hajlasz")
    worst = {nm: np.zeros(Fn) for nm in names}
    pencil_consts = []
    chain_ok = True

    def ratio(num, den):
        out = np.zeros_like(num)
        nz = num > 0
        out[nz] = np.where(den[nz] > 0, num[nz] / np.where(den[nz] > 0, den[nz], 1.0), np.inf)
        return out

    for x, y in pairs:
        x, y = space.index(x), space.index(y)
        du = np.abs(U[:, x] - U[:, y])
        P = provider(x, y)
        pencil_consts.append(P.semmes_constant)
        integ = (incidence_matrix(space, P.curves) @ G.T).T @ P.weights
        rhs2 = G @ P.mubar
        chain_ok &= bool(np.all(integ <= P.constant * rhs2 * (1 + 1e-6) + 1e-9))
        pot = ((K[x] + K[y]) * P.window) @ NU
        dxy = space.distance(x, y)
        hx = _hajlasz_at(space, NU, x, P.C * dxy)
        hy = _hajlasz_at(space, NU, y, P.C * dxy)
        for nm, den in zip(names, (integ, rhs2, pot, dxy * (hx + hy))):
            worst[nm] = np.maximum(worst[nm], ratio(du, den))
    balls = default_balls(space) if balls is None else balls
    tau = 1.0 + 2.0 * C
    lam = tau if lam is None else float(lam)
    if lam < 1:
        raise InputError("lambda must be at least 1")
    rows = []
    k_pair = np.zeros(Fn)
    for c, R in balls:
        d = space.distances_from(c)
        inB = d < R
        if mu[inB].sum() <= 0:
            continue
        live = np.ptp(U[:, inB], axis=1) > 0
        if not live.any():
            continue
        big = d < tau * R
        Fm = K[inB] @ (NU * big[:, None])
        for f in np.flatnonzero(live):
            k_pair[f] = max(k_pair[f], _max_pair_ratio(U[f, inB], Fm[:, f]))
        rows.append((c, R, inB, Fm, live))
    pmax = max(pencil_consts) if pencil_consts else 0.0
    c_chain = np.maximum(k_pair, pmax)
    derived = np.zeros(Fn)
    ball_stage = np.zeros(Fn)
    wit = []
    for c, R, inB, Fm, live in rows:
        d = space.distances_from(c)
        w = mu[inB]
        ub = (U[:, inB] @ w) / w.sum()
        lhs = (np.abs(U[:, inB] - ub[:, None]) @ w) / w.sum()
        avg_f = (w @ Fm) / w.sum()
        big = d < lam * R
        em = big[space.edge_u] & big[space.edge_v]
        emu = space.edge_measure[em]
        gav = (G[:, em] @ emu) / emu.sum() if emu.sum() > 0 else np.zeros(Fn)
        val = np.where(live, ratio(c_chain * 2 * avg_f, R * gav), 0.0)
        nub = NU[big].sum(axis=0) / mu[big].sum()
        bs = np.where(live, ratio(lhs, R * nub), 0.0)
        ball_stage = np.maximum(ball_stage, bs)
        for f in np.flatnonzero(val > derived):
            derived[f] = val[f]
        wit.extend((float(val[f]), int(f), int(c), float(R)) for f in np.flatnonzero(live))
    wit.sort(key=lambda t: (-t[0], t[1], t[2], t[3]))
    stages = {nm: float(worst[nm].max()) for nm in names}
    stages.update({"ball": float(ball_stage.max()), "pencil_bound_holds": bool(chain_ok),
                   "pair_constant": float(k_pair.max()), "chain_constant": float(c_chain.max()),
                   "max_semmes_constant": pmax, "tau": tau, "pairs": len(pairs), "balls": len(rows),
                   "per_function": [float(v) for v in derived]})
    const = float(derived.max()) if Fn else 0.0
    rep = PIReport(const, lam, "pencil-derived", wit[:20], len(wit), 0, int(np.isinf(derived).sum()), stages)
    rep.notes.append("nu is the late-horizon average of each audited sequence")
    return rep


def sample_pairs(space: Space, count: int, seed: int = 0, max_distance: float | None = None) -> list[tuple[int, int]]:
    """Seeded distinct vertex pairs, optionally at distance at most ``max_distance``."""
    rng = np.random.default_rng(seed)
    V = space.n_vertices
    if V < 2:
        raise InputError("need at least two vertices")
    out = []
    tries = 0
    while len(out) < count:
        a, b = rng.integers(V, size=2)
        tries += 1
        if tries > 1000 * max(count, 1):
            raise InputError("could not sample pairs within max_distance")
        if a == b:
            continue
        if max_distance is not None and space.distance(int(a), int(b)) > max_distance:
            continue
        out.append((int(a), int(b)))
    return out
