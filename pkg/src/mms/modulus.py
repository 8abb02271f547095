"""Discrete p-modulus of curve families with certified duality gaps.

Densities live on edges.  For ``p = 1`` the modulus is the LP

    min  sum_e c_e rho_e   s.t.  N rho >= 1,  rho >= 0,      c = w * mu

with ``N[gamma, e]`` the length of ``gamma`` on ``e``; its dual
``max sum(lambda)  s.t.  N^T lambda <= c`` gives the curve weights.  For
``p > 1`` the smooth concave dual is maximized by an accelerated projected
gradient method and the primal bound comes from rescaling the induced
density.  Large or implicit families are handled by constraint generation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix, hstack, vstack, eye as speye

from .curves import Curve, CurveFamily, cheapest_capped_path, incidence_matrix
from .errors import InputError, MMSError
from .space import Space

TOL_ADMIS = 1e-7
TOL_SEP = 1e-7
GAP_TOL = 1e-6


@dataclass
class ModulusResult:
    p: float
    value: float
    density: np.ndarray
    curves: list
    dual: np.ndarray
    gap: float
    integrals: np.ndarray
    weight: np.ndarray | None = None
    degenerate: bool = False
    truncated: bool = False
    rounds: int = 0
    iterations: int = 0
    min_integral: float = 1.0
    notes: list = field(default_factory=list)

    @property
    def dual_value(self) -> float:
        return float(self.dual.sum())

    @property
    def active(self) -> list[int]:
        """Indices (into ``curves``) of binding admissibility constraints."""
        return [k for k, v in enumerate(self.integrals) if v <= 1 + TOL_ADMIS]

    def dual_weights(self, threshold: float = 0.0) -> list[tuple[Curve, float]]:
        return [(c, float(w)) for c, w in zip(self.curves, self.dual) if w > threshold]

    def occupation(self, space: Space) -> np.ndarray:
        """``sum_gamma lambda_gamma * l(gamma ∩ {e})`` per edge."""
        if not self.curves:
            return np.zeros(space.n_edges)
        return incidence_matrix(space, self.curves).T @ self.dual

    def to_dict(self, space: Space) -> dict:
        return {
            "p": "inf" if math.isinf(self.p) else self.p,
            "value": self.value,
            "gap": self.gap,
            "degenerate": self.degenerate,
            "truncated": self.truncated,
            "density": {space.edge_key(e): float(v) for e, v in enumerate(self.density)},
            "dual": [{"curve": c.ids(space), "weight": w} for c, w in self.dual_weights()],
        }


def _as_family(family) -> CurveFamily:
    if isinstance(family, CurveFamily):
        return family
    return CurveFamily(list(family))


def _cost(space: Space, weight) -> np.ndarray:
    if weight is None:
        return space.edge_measure.astype(float)
    w = np.asarray(weight, dtype=float)
    if w.shape != (space.n_edges,):
        raise InputError("weight must have one value per edge")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InputError("weight must be finite and nonnegative")
    return w * space.edge_measure


# --------------------------------------------------------------------------
# restricted master problems


@dataclass
class _Master:
    rho: np.ndarray
    lam: np.ndarray
    primal: float
    dual: float
    degenerate: bool
    iterations: int = 0


def _split_free(N: csr_matrix, c: np.ndarray, lengths: np.ndarray):
    """Curves touching a zero-cost edge are satisfied for free by ``rho = 1/length`` there."""
    zero = c <= 0
    rho = np.zeros(len(c))
    if not zero.any():
        return rho, np.ones(N.shape[0], dtype=bool)
    touch = (N @ zero.astype(float)) > 0
    if touch.any():
        used = np.unique(N[touch].indices)
        used = used[zero[used]]
        rho[used] = 1.0 / lengths[used]
    return rho, ~touch


def _master_lp1(N: csr_matrix, c: np.ndarray, lengths: np.ndarray) -> _Master:
    k = N.shape[0]
    rho, keep = _split_free(N, c, lengths)
    lam = np.zeros(k)
    degenerate = not keep.all()
    if keep.any():
        Nk = N[keep]
        cols = np.unique(Nk.indices)
        A = Nk[:, cols]
        res = linprog(c[cols], A_ub=-A, b_ub=-np.ones(A.shape[0]), bounds=(0, None), method="highs")
        if res.status != 0:
            raise MMSError(f"LP solver failed: {res.message}")
        x = np.maximum(res.x, 0.0)
        integ = A @ x
        m = integ.min()
        if m < 1:
            x = x / m
        rho[cols] = x
        lk = np.maximum(-res.ineqlin.marginals, 0.0)
        occ = A.T @ lk
        pos = occ > 0
        if pos.any():
            s = min(1.0, float(np.min(c[cols][pos] / occ[pos])))
            lk = lk * s
        lam[keep] = lk
    primal = float(c @ rho)
    return _Master(rho, lam, primal, float(lam.sum()), degenerate)


def _master_inf(N: csr_matrix, mu: np.ndarray, lengths: np.ndarray) -> _Master:
    k = N.shape[0]
    rho, keep = _split_free(N, mu, lengths)
    lam = np.zeros(k)
    degenerate = not keep.all()
    t = 0.0
    if keep.any():
        Nk = N[keep]
        cols = np.unique(Nk.indices)
        A = Nk[:, cols]
        m = len(cols)
        obj = np.zeros(m + 1)
        obj[-1] = 1.0
        top = hstack([-A, csr_matrix((A.shape[0], 1))])
        bottom = hstack([speye(m, format="csr"), -np.ones((m, 1))])
        A_ub = vstack([top, bottom]).tocsr()
        b_ub = np.concatenate([-np.ones(A.shape[0]), np.zeros(m)])
        res = linprog(obj, A_ub=A_ub, b_ub=b_ub, bounds=(0, None), method="highs")
        if res.status != 0:
            raise MMSError(f"LP solver failed: {res.message}")
        x = np.maximum(res.x[:m], 0.0)
        integ = A @ x
        mn = integ.min()
        if mn < 1:
            x = x / mn
        rho[cols] = x
        t = float(x.max())
        lk = np.maximum(-res.ineqlin.marginals[: A.shape[0]], 0.0)
        # dual feasibility: sum_e (N^T lam)_e <= 1
        tot = float((A.T @ lk).sum())
        if tot > 1:
            lk = lk / tot
        lam[keep] = lk
    return _Master(rho, lam, t, float(lam.sum()), degenerate)


def _master_p(N: csr_matrix, c: np.ndarray, lengths: np.ndarray, p: float, gap_tol: float,
              max_iter: int, lam0: np.ndarray | None) -> _Master:
    """Accelerated projected gradient ascent on the smooth dual.

    ``D(lam) = sum(lam) - (p-1) sum_e c_e (a_e / (p c_e))^q`` with
    ``a = N^T lam`` and ``q = p/(p-1)``; the induced density is
    ``rho = (a / (p c))^(1/(p-1))`` and ``grad D = 1 - N rho``.
    """
    k = N.shape[0]
    rho_full, keep = _split_free(N, c, lengths)
    lam_full = np.zeros(k)
    degenerate = not keep.all()
    if not keep.any():
        return _Master(rho_full, lam_full, 0.0, 0.0, degenerate)
    Nk = N[keep]
    cols = np.unique(Nk.indices)
    A = Nk[:, cols].tocsr()
    AT = A.T.tocsr()
    cc = c[cols]
    q = p / (p - 1.0)
    r = 1.0 / (p - 1.0)

    # the positive part comes from rho >= 0; it keeps extrapolated points well defined
    def rho_of(lam):
        return (np.maximum(AT @ lam, 0.0) / (p * cc)) ** r

    def dual(lam):
        a = np.maximum(AT @ lam, 0.0)
        return float(lam.sum() - (p - 1.0) * np.sum(cc * (a / (p * cc)) ** q))

    def upper(lam):
        rho = rho_of(lam)
        integ = A @ rho
        m = float(integ.min())
        if m <= 0:
            return math.inf, rho
        rho = rho / m
        return float(np.sum(cc * rho ** p)), rho

    kk = A.shape[0]
    if lam0 is not None and lam0[keep].sum() > 0:
        lam = np.maximum(lam0[keep], 0.0)
    else:
        ones = np.ones(kk)
        big_a = float((p - 1.0) * np.sum(cc * (AT @ ones / (p * cc)) ** q))
        tstar = (kk / (q * big_a)) ** (1.0 / (q - 1.0))
        lam = tstar * ones
    y = lam.copy()
    theta = 1.0
    L = 1.0
    d_lam = dual(lam)
    best_ub, best_rho = upper(lam)
    best_gap, last_gain = math.inf, 0
    it = 0
    for it in range(1, max_iter + 1):
        gy = 1.0 - A @ rho_of(y)
        dy = dual(y)
        while True:
            new = np.maximum(y + gy / L, 0.0)
            step = new - y
            d_new = dual(new)
            if d_new >= dy + gy @ step - 0.5 * L * (step @ step) - 1e-14 * abs(dy):
                break
            if not math.isfinite(d_new) or L > 1e300:
                raise MMSError("dual ascent diverged")
            L *= 2.0
        if d_new < d_lam and theta > 1.0:
            # function-value restart
            y = lam.copy()
            theta = 1.0
        else:
            theta_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
            y = new + ((theta - 1.0) / theta_next) * (new - lam)
            if d_new >= d_lam:
                lam, d_lam = new, d_new
            theta = theta_next
            L *= 0.9
        if it % 5 == 0:
            ub, rho = upper(lam)
            if ub < best_ub:
                best_ub, best_rho = ub, rho
            gap = best_ub - d_lam
            if gap <= gap_tol * max(best_ub, 1e-300):
                break
            if gap < 0.99 * best_gap:
                best_gap, last_gain = gap, it
            elif it - last_gain > 2000:
                # the primal bound is limited by rounding in the dual value
                break
    # Newton polish on the curves that carry dual mass: solves A_S rho(lam_S) = 1
    if best_ub - d_lam > gap_tol * max(best_ub, 1e-300):
        cand = lam.copy()
        for _ in range(40):
            act = np.flatnonzero(cand > 1e-12 * cand.max())
            a = np.maximum(AT @ cand, 0.0)
            rho = (a / (p * cc)) ** r
            res = A[act] @ rho - 1.0
            if np.abs(res).max() <= 1e-14:
                break
            drho = np.where(a > 0, r * rho / np.where(a > 0, a, 1.0), 0.0)
            As = A[act]
            J = (As.multiply(drho[None, :]) @ As.T).toarray()
            step = np.linalg.lstsq(J, -res, rcond=1e-13)[0]
            neg = step < 0
            t = min(1.0, 0.99 * float(np.min(-cand[act][neg] / step[neg]))) if neg.any() else 1.0
            if t <= 0.0:
                break
            cand[act] = np.maximum(cand[act] + t * step, 0.0)
        d_c = dual(cand)
        if math.isfinite(d_c) and d_c > d_lam:
            lam, d_lam = cand, d_c
    ub, rho = upper(lam)
    if ub < best_ub:
        best_ub, best_rho = ub, rho
    rho_full[cols] = best_rho
    lam_full[keep] = lam
    primal = float(np.sum(c * rho_full ** p))
    return _Master(rho_full, lam_full, primal, d_lam, degenerate, it)


# --------------------------------------------------------------------------
# separation


def separation_oracle(space: Space, density, x, y, length_cap: float, tol: float = TOL_SEP) -> Curve | None:
    """A path ``x -> y`` of length ``<= length_cap`` whose ``rho``-integral is below ``1 - tol``."""
    rho = np.asarray(density, dtype=float)
    cost, curve = cheapest_capped_path(space, rho * space.length, x, y, length_cap)
    if curve is None or cost >= 1 - tol:
        return None
    return curve


@dataclass
class AdmissibilityReport:
    min_integral: float
    index: int | None
    curve: Curve | None

    @property
    def admissible(self) -> bool:
        return self.min_integral >= 1 - TOL_ADMIS


def verify_admissible(space: Space, family, density) -> AdmissibilityReport:
    """Minimum line integral of ``density`` over the family and its argmin."""
    fam = _as_family(family)
    rho = np.asarray(density, dtype=float)
    if fam.is_implicit:
        cost, curve = cheapest_capped_path(space, rho * space.length, fam.x, fam.y, fam.length_cap(space))
        return AdmissibilityReport(cost, None, curve)
    if len(fam) == 0:
        return AdmissibilityReport(math.inf, None, None)
    integ = fam.incidence(space) @ rho
    k = int(np.argmin(integ))
    return AdmissibilityReport(float(integ[k]), k, fam[k])


# --------------------------------------------------------------------------
# drivers


def _solve(space: Space, family, p: float, c: np.ndarray, *, tol_sep: float, gap_tol: float,
           batch: int, max_rounds: int, max_iter: int, direct_limit: int, implicit_batch: int = 8) -> tuple:
    fam = _as_family(family)
    lengths = space.length
    notes = []

    def master(N, lam0):
        if p == 1:
            return _master_lp1(N, c, lengths)
        if math.isinf(p):
            return _master_inf(N, c, lengths)
        # iterate well past the certified tolerance: the stagnation guard ends runs
        # that hit rounding first, and the reported value stays a primal upper bound
        return _master_p(N, c, lengths, p, gap_tol * 1e-3, max_iter, lam0)

    rounds = 0
    if not fam.is_implicit:
        if len(fam) == 0:
            raise InputError("curve family is empty")
        Nfull = fam.incidence(space)
        lens = fam.lengths()
        if len(fam) <= direct_limit:
            sel = np.arange(len(fam))
            res = master(Nfull, None)
            rounds = 1
        else:
            sel = np.zeros(0, dtype=np.int64)
            rho = np.zeros(space.n_edges)
            res = None
            lam_prev = None
            while True:
                integ = Nfull @ rho
                viol = np.flatnonzero(integ < 1 - tol_sep)
                if res is not None:
                    viol = np.setdiff1d(viol, sel, assume_unique=True)
                if viol.size == 0:
                    break
                if rounds >= max_rounds:
                    notes.append("round limit reached")
                    break
                order = np.lexsort((viol, lens[viol], integ[viol]))
                add = viol[order[:batch]]
                sel = np.concatenate([sel, add])
                lam0 = None if lam_prev is None else np.concatenate([lam_prev, np.zeros(add.size)])
                res = master(Nfull[sel], lam0)
                lam_prev = res.lam
                rho = res.rho
                rounds += 1
        curves = [fam[int(k)] for k in sel]
        integ_all = Nfull @ res.rho
        min_int = float(integ_all.min())
        integrals = integ_all[sel]
    else:
        cap = fam.length_cap(space)
        curves: list[Curve] = []
        seen = set()
        rho = np.zeros(space.n_edges)
        res = None
        while True:
            cost, cand = cheapest_capped_path(space, rho * lengths, fam.x, fam.y, cap)
            if cand is None:
                if res is None:
                    raise InputError("no curve in the family; increase C")
                break
            if cost >= 1 - tol_sep:
                break
            key = (cand.vertices, cand.edges)
            if key in seen:
                notes.append("separation returned a known curve")
                break
            if rounds >= max_rounds:
                notes.append("round limit reached")
                break
            seen.add(key)
            curves.append(cand)
            added = 1
            # more violated curves in the same round: penalize edges already picked
            w_mod = rho * lengths
            for _ in range(implicit_batch - 1):
                if fam.max_count is not None and len(curves) >= fam.max_count:
                    break
                w_mod = w_mod.copy()
                w_mod[list(cand.edges)] += lengths[list(cand.edges)] / cand.length
                _, extra = cheapest_capped_path(space, w_mod, fam.x, fam.y, cap)
                if extra is None:
                    break
                ekey = (extra.vertices, extra.edges)
                true_cost = float(np.dot(rho[list(extra.edges)], lengths[list(extra.edges)]))
                if ekey in seen or true_cost >= 1 - tol_sep:
                    break
                seen.add(ekey)
                curves.append(extra)
                cand = extra
                added += 1
            N = incidence_matrix(space, curves)
            lam0 = None if res is None else np.concatenate([res.lam, np.zeros(added)])
            res = master(N, lam0)
            rho = res.rho
            rounds += 1
            if fam.max_count is not None and len(curves) >= fam.max_count:
                notes.append("curve budget reached")
                break
        min_int = float(cost) if cand is not None else math.inf
        integrals = incidence_matrix(space, curves) @ res.rho
    rho = res.rho
    if 0 < min_int < 1:
        rho = rho / min_int
        integrals = integrals / min_int
        min_int = 1.0
    return fam, res, rho, curves, integrals, min_int, rounds, notes


def mod_p(space: Space, family, p: float = 1.0, weight=None, *, tol_sep: float = TOL_SEP,
          gap_tol: float = GAP_TOL, batch: int = 500, max_rounds: int = 10_000, max_iter: int = 50_000,
          direct_limit: int = 2000) -> ModulusResult:
    """Mod_p of ``family`` for the edge measure ``weight * mu``.

    ``family`` is a :class:`CurveFamily` (explicit or implicit) or a list of
    curves.  Explicit families above ``direct_limit`` curves and implicit
    families are solved by constraint generation; the returned density is
    rescaled to be admissible on the whole family and the dual weights stay
    exactly feasible, so ``gap`` is a certified bound.
    """
    p = float(p)
    if not (p >= 1) or math.isinf(p):
        raise InputError("p must lie in [1, inf); use mod_inf for p = inf")
    c = _cost(space, weight)
    fam, res, rho, curves, integrals, min_int, rounds, notes = _solve(
        space, family, p, c, tol_sep=tol_sep, gap_tol=gap_tol, batch=batch, max_rounds=max_rounds,
        max_iter=max_iter, direct_limit=direct_limit)
    value = float(c @ rho) if p == 1 else float(np.sum(c * rho ** p))
    gap = max(0.0, value - res.dual) if p > 1 else abs(value - res.dual)
    if res.degenerate:
        notes.append("zero-cost edges satisfy some curves for free")
    if gap > gap_tol * max(value, 1e-300) and gap > 1e-8:
        notes.append("duality gap above tolerance")
    return ModulusResult(p, value, rho, curves, res.lam, gap, np.asarray(integrals),
                         None if weight is None else np.asarray(weight, dtype=float), res.degenerate,
                         bool(fam.truncated), rounds, res.iterations, min_int, notes)


def mod_inf(space: Space, family, *, tol_sep: float = TOL_SEP, batch: int = 500, max_rounds: int = 10_000,
            direct_limit: int = 2000) -> ModulusResult:
    """``min ||rho||_inf`` over admissible densities, sup taken over edges of positive measure."""
    c = space.edge_measure.astype(float)
    fam, res, rho, curves, integrals, min_int, rounds, notes = _solve(
        space, family, math.inf, c, tol_sep=tol_sep, gap_tol=GAP_TOL, batch=batch, max_rounds=max_rounds,
        max_iter=0, direct_limit=direct_limit)
    pos = c > 0
    value = float(rho[pos].max()) if pos.any() else 0.0
    if res.degenerate:
        notes.append("zero-measure edges satisfy some curves for free")
    return ModulusResult(math.inf, value, rho, curves, res.lam, abs(value - res.dual), np.asarray(integrals),
                         None, res.degenerate, bool(fam.truncated), rounds, 0, min_int, notes)


def uniform_inf_bound(family: Sequence[Curve]) -> float:
    """``1 / min length``: the sup norm of the cheapest constant admissible density."""
    return 1.0 / min(c.length for c in family)


def min_sup_among_optimal(space: Space, curves: Sequence[Curve], value: float, weight=None,
                          rel_slack: float = 1e-9) -> float:
    """``min ||rho||_inf`` over densities admissible for ``curves`` with cost ``<= value``.

    When ``curves`` is a subfamily of the family whose Mod_1 is ``value``,
    every optimal density of the full family is feasible here, so the result
    is a lower bound on the sup norm of all of them.
    """
    c = _cost(space, weight)
    N = incidence_matrix(space, list(curves))
    cols = np.unique(N.indices)
    A = N[:, cols]
    m = len(cols)
    obj = np.zeros(m + 1)
    obj[-1] = 1.0
    rows = [hstack([-A, csr_matrix((A.shape[0], 1))]),
            hstack([speye(m, format="csr"), -np.ones((m, 1))]),
            csr_matrix(np.concatenate([c[cols], [0.0]])[None, :])]
    b = np.concatenate([-np.ones(A.shape[0]), np.zeros(m), [value * (1 + rel_slack)]])
    res = linprog(obj, A_ub=vstack(rows).tocsr(), b_ub=b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise MMSError(f"LP solver failed: {res.message}")
    return float(res.x[-1])
