"""Pencils of quasiconvex curves from the dual of a kernel-weighted 1-modulus.

For a pair ``(x, y)`` the edge measure ``mubar = Rbar * mu`` (kernel
averaged over edge endpoints, zero outside the window) weights the
1-modulus of all ``x -> y`` paths of length ``<= C d(x, y)``.  The LP dual
weights ``lambda`` satisfy ``sum_gamma lambda_gamma l(gamma ∩ e) <= mubar(e)``,
so ``sigma = lambda / sum(lambda)`` is a probability on curves with
``sum_gamma sigma_gamma l(gamma ∩ A) <= mubar(A) / sum(lambda)`` for every
edge set ``A``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .curves import Curve, CurveFamily, enumerate_quasiconvex, incidence_matrix
from .errors import InputError, MMSError
from .modulus import mod_p
from .space import Space, riesz_kernel

PENCIL_RTOL = 1e-6
OCC_TOL = 1e-9


@dataclass
class Pencil:
    x: int
    y: int
    C: float
    curves: list
    weights: np.ndarray
    window: np.ndarray
    mubar: np.ndarray
    modulus: float
    constant: float
    gap: float = 0.0
    truncated: bool = False
    notes: list = field(default_factory=list)

    @property
    def semmes_constant(self) -> float:
        """One constant serving both as quasiconvexity and pencil constant."""
        return max(self.C, self.constant)

    def occupation(self, space: Space) -> np.ndarray:
        return incidence_matrix(space, self.curves).T @ self.weights

    def to_dict(self, space: Space) -> dict:
        return {
            "x": space.ids[self.x],
            "y": space.ids[self.y],
            "C": self.C,
            "constant": self.constant,
            "modulus": self.modulus,
            "gap": self.gap,
            "truncated": self.truncated,
            "curves": [{"path": c.ids(space), "weight": float(w)} for c, w in zip(self.curves, self.weights)],
        }

    @classmethod
    def from_dict(cls, space: Space, data: dict) -> "Pencil":
        try:
            x, y = space.index(data["x"]), space.index(data["y"])
            C = float(data["C"])
            curves = [Curve.from_vertices(space, c["path"]) for c in data["curves"]]
            w = np.array([float(c["weight"]) for c in data["curves"]])
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed pencil: {exc}") from None
        k = riesz_kernel(space, x, y, C)
        return cls(x, y, C, curves, w, k.window, k.edge_values(space) * space.edge_measure,
                   float(data.get("modulus", math.nan)), float(data["constant"]), float(data.get("gap", 0.0)),
                   bool(data.get("truncated", False)))


def pencil_edge_measure(space: Space, x, y, C: float) -> tuple[np.ndarray, np.ndarray]:
    """``(mubar, window)``: windowed endpoint-mean kernel times edge measure."""
    k = riesz_kernel(space, x, y, C)
    return k.edge_values(space) * space.edge_measure, k.window


def build_pencil(space: Space, x, y, C: float | None = None, *, max_count: int = 100_000,
                 floor: float = 1e-6, max_C: float = 64.0) -> Pencil:
    """Normalized dual of the kernel-weighted Mod_1 of ``C``-quasiconvex ``x -> y`` paths.

    With ``C=None`` start at 1 and double until the modulus exceeds ``floor``.
    """
    i, j = space.index(x), space.index(y)
    if i == j:
        raise InputError("x and y must differ")
    if C is not None and C < 1:
        raise InputError("C must be at least 1")
    trial = 1.0 if C is None else float(C)
    while True:
        k = riesz_kernel(space, i, j, trial)
        w = k.edge_values(space)
        fam = CurveFamily.implicit(i, j, trial, max_count)
        res = mod_p(space, fam, 1, weight=w)
        if C is not None or res.dual_value > floor or trial >= max_C:
            break
        trial *= 2
    lam = res.dual
    total = float(lam.sum())
    if total <= 0:
        raise MMSError("kernel-weighted modulus vanished; no pencil")
    keep = lam > 0
    curves = [c for c, kk in zip(res.curves, keep) if kk]
    sigma = lam[keep] / total
    sigma = sigma / sigma.sum()
    notes = list(res.notes)
    truncated = "curve budget reached" in notes
    if truncated:
        notes.append("lower-confidence: curve budget reached before separation converged")
    return Pencil(i, j, trial, curves, sigma, k.window, w * space.edge_measure, res.value, 1.0 / total,
                  res.gap, truncated, notes)


def random_edge_sets(space: Space, count: int, seed: int = 0) -> list[np.ndarray]:
    """Seeded random edge masks: Bernoulli subsets of random density and induced edges of random balls."""
    rng = np.random.default_rng(seed)
    D = space.distance_matrix()
    out = []
    for t in range(count):
        if t % 2 == 0:
            out.append(rng.random(space.n_edges) < rng.uniform(0.02, 0.6))
        else:
            c = int(rng.integers(space.n_vertices))
            r = rng.uniform(0, space.diameter())
            vm = D[c] < r
            out.append(vm[space.edge_u] & vm[space.edge_v])
    return out


@dataclass
class PencilAudit:
    max_ratio: float
    worst: int | None
    constant: float
    passes: bool
    checked: int
    skipped: int
    ratios: list

    def to_dict(self):
        return {"max_ratio": self.max_ratio, "worst": self.worst, "constant": self.constant, "passes": self.passes,
                "checked": self.checked, "skipped": self.skipped}


def verify_pencil(space: Space, pencil: Pencil, edge_sets, rtol: float = PENCIL_RTOL) -> PencilAudit:
    """Max over edge sets of ``sum sigma l(gamma ∩ A) / mubar(A)``; 0/0 sets are skipped."""
    occ = pencil.occupation(space)
    ratios = []
    worst, best = None, -math.inf
    skipped = 0
    for k, A in enumerate(edge_sets):
        A = np.asarray(A)
        if A.dtype != bool:
            mask = np.zeros(space.n_edges, dtype=bool)
            mask[A.astype(int)] = True
            A = mask
        lhs = float(occ[A].sum())
        rhs = float(pencil.mubar[A].sum())
        if lhs == 0 and rhs == 0:
            skipped += 1
            ratios.append(math.nan)
            continue
        r = math.inf if rhs == 0 else lhs / rhs
        ratios.append(r)
        if r > best:
            best, worst = r, k
    best = 0.0 if worst is None else best
    return PencilAudit(best, worst, pencil.constant, best <= pencil.constant * (1 + rtol),
                       len(ratios) - skipped, skipped, ratios)


@dataclass
class PencilIntegralBound:
    lhs: float
    rhs: float
    constant: float
    holds: bool


def pencil_line_integral_bound(space: Space, pencil: Pencil, density, tol: float = OCC_TOL) -> PencilIntegralBound:
    """``sum_gamma sigma_gamma int_gamma g  <=  C_pencil * sum_e g(e) mubar(e)``."""
    g = np.asarray(density, dtype=float)
    if np.any(g < 0):
        raise InputError("density must be nonnegative")
    lhs = float(pencil.weights @ (incidence_matrix(space, pencil.curves) @ g))
    rhs = float(g @ pencil.mubar)
    return PencilIntegralBound(lhs, rhs, pencil.constant, lhs <= pencil.constant * rhs * (1 + PENCIL_RTOL) + tol)


def default_f_grid(space: Space, count: int = 50, seed: int = 0, indicators=()) -> np.ndarray:
    """``[0,1]``-valued edge functions: seeded uniform fields plus given edge indicators."""
    rng = np.random.default_rng(seed)
    rows = [rng.random(space.n_edges) for _ in range(count)]
    for e in indicators:
        f = np.zeros(space.n_edges)
        f[e] = 1.0
        rows.append(f)
    return np.array(rows)


@dataclass
class MinMaxReport:
    inf_sup: float
    sup_inf: float
    gap: float
    min_F_sigma: float
    game_constant: float
    shape: tuple
    passes: bool

    def to_dict(self):
        return {"inf_sup": self.inf_sup, "sup_inf": self.sup_inf, "gap": self.gap, "min_F_sigma": self.min_F_sigma,
                "game_constant": self.game_constant, "shape": list(self.shape), "passes": self.passes}


def _game_values(M: np.ndarray) -> tuple[float, float]:
    """Mixed values of the matrix game where rows minimize and columns maximize ``p^T M a``."""
    r, c = M.shape
    if r == 1:
        v = float(M[0].max())
        return v, v
    if c == 1:
        v = float(M[:, 0].min())
        return v, v
    # inf_p sup_a: min v  s.t.  M^T p <= v,  sum p = 1
    obj = np.zeros(r + 1)
    obj[-1] = 1.0
    A = np.hstack([M.T, -np.ones((c, 1))])
    Aeq = np.concatenate([np.ones(r), [0.0]])[None, :]
    bounds = [(0, None)] * r + [(None, None)]
    up = linprog(obj, A_ub=A, b_ub=np.zeros(c), A_eq=Aeq, b_eq=[1.0], bounds=bounds, method="highs")
    # sup_a inf_p: max w  s.t.  M a >= w,  sum a = 1
    obj2 = np.zeros(c + 1)
    obj2[-1] = -1.0
    A2 = np.hstack([-M, np.ones((r, 1))])
    Aeq2 = np.concatenate([np.ones(c), [0.0]])[None, :]
    bounds2 = [(0, None)] * c + [(None, None)]
    lo = linprog(obj2, A_ub=A2, b_ub=np.zeros(r), A_eq=Aeq2, b_eq=[1.0], bounds=bounds2, method="highs")
    if up.status != 0 or lo.status != 0:
        raise MMSError("game LP failed")
    return float(up.x[-1]), float(lo.x[-1])


def minmax_gap(space: Space, x, y, C: float, f_grid, *, pencil: Pencil | None = None, curves=None,
               game_constant: float | None = None, max_count: int = 20_000, tol: float = 1e-7) -> MinMaxReport:
    """Finite bilinear game ``F(f, a) = K sum f mubar - sum_gamma a_gamma int_gamma f``.

    Rows are mixtures of the ``f_grid`` functions, columns are probability
    vectors on the curves.  Both mixed values are computed by separate LPs and
    their difference is reported; ``F(f, sigma_pencil) >= -tol`` is checked
    for every ``f``.  ``K`` defaults to the pencil constant.
    """
    f_grid = np.atleast_2d(np.asarray(f_grid, dtype=float))
    if f_grid.shape[1] != space.n_edges:
        raise InputError("f_grid rows must be edge functions")
    if np.any(f_grid < 0) or np.any(f_grid > 1):
        raise InputError("f_grid values must lie in [0, 1]")
    if pencil is None:
        pencil = build_pencil(space, x, y, C)
    K = pencil.constant if game_constant is None else float(game_constant)
    if curves is None:
        curves = enumerate_quasiconvex(space, x, y, C, max_count).curves
    N = incidence_matrix(space, curves)
    M = K * (f_grid @ pencil.mubar)[:, None] - (N @ f_grid.T).T
    a, b = _game_values(M)
    occ = pencil.occupation(space)
    F_sigma = K * (f_grid @ pencil.mubar) - f_grid @ occ
    mf = float(F_sigma.min())
    gap = abs(a - b)
    return MinMaxReport(a, b, gap, mf, K, M.shape, gap <= 1e-8 and mf >= -tol)
