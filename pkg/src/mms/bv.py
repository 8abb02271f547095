"""Total variation, BV_AM upper-bound audits, partition-of-unity smoothing,
and the circle-weighted counterexample fixture."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .am import DensitySequence, am_null_certificate
from .curves import Curve
from .errors import InputError
from .generators import circle_arc_weights, circle_weighted_grid
from .modulus import mod_p
from .poincare import minimal_upper_gradient, smooth_once
from .space import Space


@dataclass
class TVResult:
    value: float
    per_edge: np.ndarray
    method: str
    ladder: list = field(default_factory=list)
    error_bound: float = 0.0


def total_variation(space: Space, u, method: str = "direct", ladder: int = 30) -> TVResult:
    """``sum_e mu(e) |u(a) - u(b)| / length(e)``.

    ``method="relaxation"`` evaluates the same functional along the ladder
    ``u_k = u + 2^-k (S u - u)`` (``S`` one neighbourhood-averaging step),
    which converges to ``u``, and reports the last rung as the liminf.  By
    the triangle inequality the last rung is within
    ``error_bound = 2^-ladder TV(S u - u)`` of the limit.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise InputError("u must be finite")
    if method == "direct":
        per = space.edge_measure * minimal_upper_gradient(space, u)
        return TVResult(float(per.sum()), per, "direct")
    if method != "relaxation":
        raise InputError("method must be 'direct' or 'relaxation'")
    su = smooth_once(space, u)
    values = []
    per = None
    for k in range(ladder + 1):
        uk = u + 2.0 ** (-k) * (su - u)
        per = space.edge_measure * minimal_upper_gradient(space, uk)
        values.append(float(per.sum()))
    err = 2.0 ** (-ladder) * float(space.edge_measure @ minimal_upper_gradient(space, su - u))
    return TVResult(values[-1], per, "relaxation", values, err)


@dataclass
class BVAMCertificate:
    sequence: str
    horizon: int
    curves: int
    liminf_mass: float
    exceptional: list
    null_certified: bool
    valid: bool
    worst_excess: float
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"sequence": self.sequence, "horizon": self.horizon, "curves": self.curves,
                "liminf_mass": self.liminf_mass, "exceptional": list(self.exceptional),
                "null_certified": self.null_certified, "valid": self.valid, "worst_excess": self.worst_excess,
                "flags": list(self.flags)}


def default_audit_family(space: Space, max_pairs: int = 200, walks: int = 50, walk_len: int = 12,
                         seed: int = 0) -> list[Curve]:
    """Geodesics between vertex pairs (all pairs on small spaces, a seeded sample otherwise) plus random walks."""
    rng = np.random.default_rng(seed)
    V = space.n_vertices
    if V * (V - 1) // 2 <= max_pairs:
        pairs = [(a, b) for a in range(V) for b in range(a + 1, V)]
    else:
        pairs = []
        seen = set()
        while len(pairs) < max_pairs:
            a, b = sorted(int(t) for t in rng.integers(V, size=2))
            if a != b and (a, b) not in seen:
                seen.add((a, b))
                pairs.append((a, b))
    curves = []
    by_src: dict[int, list[int]] = {}
    for a, b in pairs:
        by_src.setdefault(a, []).append(b)
    graph = space._min_length_graph()
    for a in sorted(by_src):
        _, pred = dijkstra(graph, indices=a, return_predecessors=True)
        for b in by_src[a]:
            seq = [b]
            while seq[-1] != a:
                seq.append(int(pred[seq[-1]]))
            curves.append(Curve.from_vertices(space, seq[::-1]))
    for _ in range(walks):
        v = int(rng.integers(V))
        edges = []
        for _ in range(walk_len):
            nb = space.adjacency[v]
            if not nb:
                break
            w, e = nb[int(rng.integers(len(nb)))]
            edges.append(e)
            v = w
        if edges:
            curves.append(_walk(space, edges))
    return curves


def _walk(space: Space, edges) -> Curve:
    a, b = space.endpoints(edges[0])
    for s in (a, b):
        try:
            return Curve.from_edges(space, s, edges)
        except InputError:
            continue
    raise InputError("edges do not form a walk")


def _subcurve_excess(u_path: np.ndarray, prefix: np.ndarray, divergent_prefix: np.ndarray | None) -> float:
    """``max_{s<t} |u_t - u_s| - (P_t - P_s)`` over breakpoints, ignoring pieces through divergent edges."""
    du = np.abs(u_path[None, :] - u_path[:, None])
    dp = prefix[None, :] - prefix[:, None]
    m = du - dp
    iu = np.triu_indices(len(u_path), 1)
    vals = m[iu]
    if divergent_prefix is not None:
        hit = (divergent_prefix[None, :] - divergent_prefix[:, None])[iu] > 0
        vals = vals[~hit]
    return float(vals.max()) if vals.size else -math.inf


def audit_bvam(space: Space, u, sequence: DensitySequence, family=None, horizon: int = 16,
               tol: float = 1e-9) -> BVAMCertificate:
    """Check ``|u(gamma(t)) - u(gamma(s))| <= liminf_i int_{gamma|[s,t]} g_i`` at all breakpoint pairs.

    Curves failing the check are exceptional; the certificate is valid when
    there are none or when they form an AM-null set (each runs through an
    edge of zero measure).
    """
    u = np.asarray(u, dtype=float)
    curves = default_audit_family(space) if family is None else list(family)
    idx = sequence.evaluated_indices(horizon)
    terms = [sequence.term(i) for i in idx]
    flags = []
    if sequence.tail == "constant" or sequence.tail == "nondecreasing":
        use = [terms[-1]]
    else:
        use = terms[len(terms) // 2:]
        flags.append("horizon-limited")
    div = sequence.divergent_edges if sequence.tail == "nondecreasing" else None
    scale = max(1.0, float(np.abs(u).max()))
    exceptional = []
    worst = -math.inf
    for k, c in enumerate(curves):
        e = np.asarray(c.edges)
        up = u[np.asarray(c.vertices)]
        dprefix = None
        if div is not None:
            dprefix = np.concatenate([[0], np.cumsum(div[e].astype(int))])
        if len(use) == 1:
            prefix = np.concatenate([[0.0], np.cumsum(use[0][e] * space.length[e])])
            ex = _subcurve_excess(up, prefix, dprefix)
        else:
            # liminf over the window of each sub-curve integral: min over terms
            mats = []
            for g in use:
                prefix = np.concatenate([[0.0], np.cumsum(g[e] * space.length[e])])
                mats.append(prefix[None, :] - prefix[:, None])
            low = np.min(mats, axis=0)
            du = np.abs(up[None, :] - up[:, None])
            iu = np.triu_indices(len(up), 1)
            ex = float((du - low)[iu].max())
        worst = max(worst, ex)
        if ex > tol * scale:
            exceptional.append(k)
    null_ok = True
    if exceptional:
        null_ok = am_null_certificate(space, [curves[k] for k in exceptional]).null
    masses = [float(t @ space.edge_measure) for t in terms]
    if sequence.tail == "constant":
        lm = masses[-1]
    else:
        lm = min(masses[len(masses) // 2:])
        flags.append("horizon-limited mass")
    return BVAMCertificate(sequence.name, len(idx), len(curves), lm, exceptional, null_ok and bool(exceptional),
                           (not exceptional) or null_ok, worst, flags)


def bump_sequence(space: Space, g, bump_edges, eps: float = 0.1) -> DensitySequence:
    """``g_i = g + eps 2^i 1_bump``: line integrals through the bump edges diverge.

    Curves meeting the bump edges are certified by divergence, all others
    must be covered by ``g`` alone.  The extra mass vanishes only when the
    bump edges carry zero measure.
    """
    g = np.asarray(g, dtype=float)
    mask = np.zeros(space.n_edges, dtype=bool)
    mask[list(bump_edges)] = True
    return DensitySequence(lambda i: g + eps * (2.0 ** i) * mask, tail="nondecreasing", tail_start=0,
                           divergent_edges=mask, name="bump")


# --------------------------------------------------------------------------
# partition-of-unity smoothing


@dataclass
class ConvolutionReport:
    eps: float
    centers: int
    l1_error: float
    lip_mass: float
    tv: float
    ratio: float

    def to_dict(self):
        return dict(self.__dict__)


def separated_centers(space: Space, eps: float) -> list[int]:
    """Greedy maximal ``eps``-separated set in vertex order."""
    dmin = np.full(space.n_vertices, np.inf)
    centers = []
    for v in range(space.n_vertices):
        if dmin[v] >= eps:
            centers.append(v)
            dmin = np.minimum(dmin, space.distances_from(v))
    return centers


def discrete_convolution(space: Space, u, eps: float):
    """Partition-of-unity smoothing at scale ``eps``.

    Tent profiles ``psi_i = max(0, 1 - d(., c_i)/(2 eps))`` around a maximal
    ``eps``-separated set are normalized to ``phi_i``; ``u_eps = sum_i u_{B_i} phi_i``
    with ``B_i = B(c_i, eps)``.  Returns ``(u_eps, lip, report)`` where ``lip``
    is the minimal upper gradient of ``u_eps``.
    """
    u = np.asarray(u, dtype=float)
    if eps < 2 * float(space.length.max()):
        raise InputError("eps must be at least twice the largest edge length")
    centers = separated_centers(space, eps)
    mu = space.vertex_measure
    psi = np.zeros((len(centers), space.n_vertices))
    avgs = np.zeros(len(centers))
    for k, c in enumerate(centers):
        d = space.distances_from(c)
        psi[k] = np.maximum(0.0, 1.0 - d / (2 * eps))
        inside = d < eps
        avgs[k] = (u[inside] @ mu[inside]) / mu[inside].sum()
    tot = psi.sum(axis=0)
    phi = psi / tot
    u_eps = avgs @ phi
    lip = minimal_upper_gradient(space, u_eps)
    tv = total_variation(space, u).value
    lm = float(lip @ space.edge_measure)
    # rounding leaves a tiny gradient on smoothed constants
    flat = lm <= 1e-12 * max(1.0, float(np.abs(u).max())) * float(space.edge_measure.sum())
    ratio = lm / tv if tv > 0 else (0.0 if flat else math.inf)
    rep = ConvolutionReport(float(eps), len(centers), float(np.abs(u - u_eps) @ mu), lm, tv, ratio)
    return u_eps, lip, rep


# --------------------------------------------------------------------------
# counterexample fixture


def disk_indicator(space: Space) -> np.ndarray:
    p = space.pos
    return ((p[:, 0] ** 2 + p[:, 1] ** 2) < 1.0).astype(float)


def crossing_family(space: Space, n: int) -> list[Curve]:
    """Full-height vertical grid lines with ``|x| < 1`` on the ``[-2,2]^2`` lattice."""
    from .generators import grid_index, grid_vertical_edge

    h = 4.0 / n
    out = []
    for i in range(n + 1):
        x = -2.0 + i * h
        if abs(x) < 1.0 - 1e-12:
            out.append(Curve.from_edges(space, grid_index(n, i, 0), [grid_vertical_edge(n, i, j) for j in range(n)]))
    return out


def counterexample_space(n: int = 128):
    """Lattice on ``[-2,2]^2`` with arclength of the unit circle added to vertex measures.

    Returns ``(space, u, report)`` with ``u`` the disk indicator.  The report
    has the total variation of ``u`` (compare ``2 pi``), Mod_1 of the vertical
    lines crossing the disk, and the share of the variation carried by
    edges touching a circle-weighted vertex.
    """
    if n < 16:
        raise InputError("n must be at least 16")
    space = circle_weighted_grid(n)
    u = disk_indicator(space)
    tv = total_variation(space, u)
    arc = circle_arc_weights(n)
    touch = (arc[space.edge_u] > 0) | (arc[space.edge_v] > 0)
    share = float(tv.per_edge[touch].sum() / tv.value) if tv.value > 0 else 0.0
    fam = crossing_family(space, n)
    mod = mod_p(space, fam, 1)
    p = space.pos
    far = (np.hypot(p[:, 0], p[:, 1]) > 1.0 + 4.0 * 4.0 / n)
    far_edges = far[space.edge_u] & far[space.edge_v]
    report = {
        "n": n,
        "tv": tv.value,
        "tv_over_2pi": tv.value / (2 * math.pi),
        "circle_mass": float(arc.sum()),
        "crossing_curves": len(fam),
        "crossing_mod1": mod.value,
        "circle_adjacent_share": share,
        "tv_far_from_circle": float(tv.per_edge[far_edges].sum()),
        "jump_witness": "u jumps by 1 across the circle on every crossing line",
    }
    return space, u, report
