"""Certificates for the approximate (sequence-relaxed) 1-modulus.

AM is an infimum over density *sequences*, so it is never optimized here
directly.  Upper bounds come from explicit sequences whose liminf line
integrals are audited curve by curve; lower bounds come from a Fubini
slicing estimate over pairwise disjoint parallel fibers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import csr_matrix

from .curves import Curve, CurveFamily
from .errors import InadmissibleSequenceError, InputError
from .generators import grid, grid_index, grid_vertical_edge
from .modulus import TOL_ADMIS, _as_family, min_sup_among_optimal, mod_inf, mod_p
from .space import Space

TAIL_KINDS = ("constant", "nondecreasing", "none")


class DensitySequence:
    """Lazily evaluated densities ``rho_0, rho_1, ...`` with a tail description.

    ``tail="constant"``: ``rho_i = rho_{tail_start}`` for ``i >= tail_start``.
    ``tail="nondecreasing"``: every line integral is nondecreasing from
    ``tail_start`` on, and integrals over curves meeting ``divergent_edges``
    tend to infinity.  ``tail="none"``: only the evaluated horizon is known;
    certificates built on such sequences are flagged horizon-limited.
    """

    def __init__(self, term: Callable[[int], np.ndarray], *, tail: str = "none", tail_start: int | None = None,
                 divergent_edges=None, name: str = ""):
        if tail not in TAIL_KINDS:
            raise InputError(f"tail must be one of {TAIL_KINDS}")
        if tail != "none" and tail_start is None:
            raise InputError("a tail description needs tail_start")
        self._term = term
        self.tail = tail
        self.tail_start = tail_start
        self.divergent_edges = None if divergent_edges is None else np.asarray(divergent_edges, dtype=bool)
        self.name = name
        self._cache: dict[int, np.ndarray] = {}

    def term(self, i: int) -> np.ndarray:
        if self.tail == "constant" and i > self.tail_start:
            i = self.tail_start
        if i not in self._cache:
            rho = np.asarray(self._term(i), dtype=float)
            if np.any(rho < 0) or not np.all(np.isfinite(rho)):
                raise InputError(f"term {i} is not a finite nonnegative density")
            self._cache[i] = rho
        return self._cache[i]

    def mass(self, space: Space, i: int) -> float:
        return float(self.term(i) @ space.edge_measure)

    def evaluated_indices(self, horizon: int) -> list[int]:
        if self.tail == "constant":
            return list(range(self.tail_start + 1))
        return list(range(horizon))

    @classmethod
    def constant(cls, rho, name: str = "constant") -> "DensitySequence":
        rho = np.asarray(rho, dtype=float)
        return cls(lambda i: rho, tail="constant", tail_start=0, name=name)

    @classmethod
    def from_terms(cls, terms: Sequence, name: str = "") -> "DensitySequence":
        terms = [np.asarray(t, dtype=float) for t in terms]
        return cls(lambda i: terms[min(i, len(terms) - 1)], tail="constant", tail_start=len(terms) - 1, name=name)


def strip_sequence(n: int) -> DensitySequence:
    """Bottom-strip densities on ``grid(n)``.

    Term ``i`` has strip height ``k = max(1, n >> i)`` rows and value
    ``1/(k h)`` on the vertical edges of those rows, so every term carries
    unit mass and vertical curves from the bottom of length ``>= k h`` see
    integral ``>= 1``.  From ``k = 1`` on the sequence is constant.
    """
    n = int(n)
    h = 1.0 / n
    n_edges = 2 * n * (n + 1)
    last = max(0, n.bit_length() - 1)

    def term(i):
        k = max(1, n >> i)
        rho = np.zeros(n_edges)
        rows = np.arange(k)
        cols = np.arange(n + 1)
        idx = grid_vertical_edge(n, cols[None, :], rows[:, None]).ravel()
        rho[idx] = 1.0 / (k * h)
        return rho

    return DensitySequence(term, tail="constant", tail_start=last, name=f"strip({n})")


@dataclass
class AMCertificate:
    kind: str
    bound: float
    certified: bool
    evidence: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        ev = {k: v for k, v in self.evidence.items() if isinstance(v, (int, float, str, bool, list))}
        return {"kind": self.kind, "bound": self.bound, "certified": self.certified, "flags": list(self.flags),
                "evidence": ev}


def _integral_table(space: Space, fam: CurveFamily, seq: DensitySequence, idx: list[int]) -> np.ndarray:
    N = fam.incidence(space)
    return np.stack([N @ seq.term(i) for i in idx]) if idx else np.zeros((0, len(fam)))


def sequence_liminf(space: Space, family, seq: DensitySequence, horizon: int) -> tuple[np.ndarray, np.ndarray, bool]:
    """Per-curve liminf of line integrals and of masses as far as the tail description certifies.

    Returns ``(liminf_per_curve, masses, certified)``.
    """
    fam = _as_family(family)
    idx = seq.evaluated_indices(horizon)
    table = _integral_table(space, fam, seq, idx)
    masses = np.array([seq.mass(space, i) for i in idx])
    if seq.tail == "constant":
        return table[-1], masses, True
    if seq.tail == "nondecreasing":
        lim = table[-1].copy()
        if seq.divergent_edges is not None:
            hit = (fam.incidence(space) @ seq.divergent_edges.astype(float)) > 0
            lim[hit] = math.inf
        return lim, masses, True
    lo = max(0, len(idx) // 2)
    return table[lo:].min(axis=0), masses, False


def am_upper(space: Space, family, sequence: DensitySequence, horizon: int = 16, tol: float = TOL_ADMIS) -> AMCertificate:
    """Upper bound ``liminf_i sum_e rho_i mu`` for an audited admissible sequence."""
    if horizon < 2:
        raise InputError("horizon must be at least 2")
    fam = _as_family(family)
    if fam.is_implicit:
        raise InputError("am_upper audits explicit families")
    if len(fam) == 0:
        return AMCertificate("upper", 0.0, True, {"curves": 0})
    lim, masses, certified = sequence_liminf(space, fam, sequence, horizon)
    bad = np.flatnonzero(lim < 1 - tol)
    if bad.size:
        k = int(bad[np.argmin(lim[bad])])
        raise InadmissibleSequenceError(
            f"curve {k} has liminf line integral {lim[k]:.6g} < 1", curve_index=k, liminf=float(lim[k]))
    flags = []
    if sequence.tail == "constant":
        bound = float(masses[-1])
    else:
        bound = float(masses[len(masses) // 2:].min())
        flags.append("horizon-limited mass")
    if not certified:
        flags.append("horizon-limited")
    ev = {"curves": len(fam), "terms": len(masses), "masses": masses.tolist(), "sequence": sequence.name,
          "min_liminf": float(lim.min())}
    return AMCertificate("upper", bound, certified and not flags, ev, flags)


def am_lower_fubini(space: Space, fibers: Sequence[Curve]) -> AMCertificate:
    """Fubini lower bound for a family containing pairwise edge-disjoint fibers of equal length.

    For any admissible sequence, ``sum_e rho_i(e) mu(e) >= sum_f m_f int_f rho_i``
    with ``m_f = min_{e in f} mu(e)/length(e)``, and Fatou gives
    ``AM >= sum_f m_f``.
    """
    fibers = list(fibers)
    if not fibers:
        raise InputError("slab has no fibers")
    used: set[int] = set()
    L = fibers[0].length
    m = []
    for f in fibers:
        if f.length != L:
            raise InputError("fibers must have equal length")
        if len(set(f.edges)) != len(f.edges) or used.intersection(f.edges):
            raise InputError("fibers must be simple and pairwise edge-disjoint")
        used.update(f.edges)
        e = np.asarray(f.edges)
        m.append(float(np.min(space.edge_measure[e] / space.length[e])))
    bound = float(sum(m))
    return AMCertificate("lower", bound, True, {"fibers": len(fibers), "fiber_length": L, "transverse": m})


@dataclass
class AMInfReport:
    sup_norm: float
    mod_inf: float
    min_integral: float
    admissible: bool
    holds: bool

    def to_dict(self):
        return dict(self.__dict__)


def am_inf_check(space: Space, family, sequence: DensitySequence, horizon: int = 16, tol: float = 1e-9) -> AMInfReport:
    """Pointwise sup of the evaluated terms is admissible and its sup norm dominates Mod_inf."""
    fam = _as_family(family)
    if not fam.is_implicit and len(fam) == 0:
        return AMInfReport(0.0, 0.0, math.inf, True, True)
    idx = sequence.evaluated_indices(horizon)
    rho = np.max(np.stack([sequence.term(i) for i in idx]), axis=0)
    integ = fam.incidence(space) @ rho
    pos = space.edge_measure > 0
    sup = float(rho[pos].max()) if pos.any() else 0.0
    mi = mod_inf(space, fam).value
    mn = float(integ.min())
    adm = mn >= 1 - TOL_ADMIS
    return AMInfReport(sup, mi, mn, adm, adm and sup >= mi - tol)


@dataclass
class NullCertificate:
    null: bool
    witness_edges: list
    failing: list

    def sequence(self, space: Space) -> DensitySequence:
        """``rho_i = i / length`` on the zero-measure witness edges: zero mass, divergent integrals."""
        mask = np.zeros(space.n_edges, dtype=bool)
        mask[self.witness_edges] = True
        base = np.where(mask, 1.0 / space.length, 0.0)
        return DensitySequence(lambda i: (i + 1) * base, tail="nondecreasing", tail_start=0,
                               divergent_edges=mask, name="null")


def am_null_certificate(space: Space, curves: Sequence[Curve]) -> NullCertificate:
    """A finite curve set is AM-null when every curve runs through an edge of zero measure."""
    zero = space.edge_measure <= 0
    witness, failing = set(), []
    for k, c in enumerate(curves):
        hit = [e for e in c.edges if zero[e]]
        if hit:
            witness.add(hit[0])
        else:
            failing.append(k)
    return NullCertificate(not failing, sorted(witness), failing)


# --------------------------------------------------------------------------
# vertical segment families on the unit square


def vertical_family(space: Space, n: int, min_rows: int = 1) -> CurveFamily:
    """Vertical paths on ``grid(n)`` starting at the bottom row, ``k >= min_rows`` edges long.

    Ordered by column, then length.  The incidence matrix is assembled
    directly since the family is large.
    """
    cols = np.arange(n + 1)
    vcol = [tuple(int(grid_index(n, i, j)) for j in range(n + 1)) for i in cols]
    ecol = [tuple(int(grid_vertical_edge(n, i, j)) for j in range(n)) for i in cols]
    curves = []
    rows_idx, cols_idx = [], []
    r = 0
    for i in cols:
        e = np.asarray(ecol[i])
        cum = np.cumsum(space.length[e])
        for k in range(min_rows, n + 1):
            curves.append(Curve(vcol[i][: k + 1], ecol[i][:k], float(cum[k - 1])))
        ks = np.arange(min_rows, n + 1)
        cnt = ks
        rows_idx.append(np.repeat(np.arange(r, r + ks.size), cnt))
        cols_idx.append(np.concatenate([e[:k] for k in ks]))
        r += ks.size
    rows = np.concatenate(rows_idx)
    colsi = np.concatenate(cols_idx)
    N = csr_matrix((space.length[colsi], (rows, colsi)), shape=(len(curves), space.n_edges))
    fam = CurveFamily.__new__(CurveFamily)
    fam.x = fam.y = fam.C = fam.max_count = None
    fam.truncated = False
    fam.curves = curves
    fam._incidence = N
    return fam


def _subfamily(space: Space, fam: CurveFamily, keep: np.ndarray) -> CurveFamily:
    sub = CurveFamily.__new__(CurveFamily)
    sub.x = sub.y = sub.C = sub.max_count = None
    sub.truncated = False
    idx = np.flatnonzero(keep)
    sub.curves = [fam.curves[k] for k in idx]
    sub._incidence = fam.incidence(space)[idx]
    return sub


def vertical_segment_suite(n: int = 256, deltas: Sequence[float] = (0.5, 0.25, 0.125), horizon: int = 16) -> dict:
    """Vertical segment families on the unit-square grid: Mod_1 per length floor, AM bounds.

    ``Gamma`` is every vertical bottom-anchored grid path; ``Gamma_delta``
    keeps those of length ``>= delta``.  Reports Mod_1 and the sup norm of
    the optimal density per delta (which must blow up like ``1/delta``), the
    strip-sequence upper bound on the whole family, and the Fubini lower
    bound from the length-1/2 fibers.
    """
    n = int(n)
    if n < 2:
        raise InputError("n must be at least 2")
    space = grid(n)
    h = 1.0 / n
    full = vertical_family(space, n)
    lengths = full.lengths()
    rows = []
    for d in deltas:
        if not (0 < d <= 1):
            raise InputError("deltas must lie in (0, 1]")
        sub = _subfamily(space, full, lengths >= d - 1e-12)
        res = mod_p(space, sub, 1)
        sup = float(res.density.max())
        lmin = min(c.length for c in res.curves)
        shortest = [c for c in res.curves if c.length == lmin]
        floor = min_sup_among_optimal(space, shortest, res.value)
        rows.append({"delta": float(d), "curves": len(sub), "mod1": res.value, "gap": res.gap, "sup_norm": sup,
                     "min_sup_over_optimal": floor,
                     "inv_delta": 1.0 / d, "sup_times_delta": sup * d, "rounds": res.rounds})
    full_res = mod_p(space, full, 1)
    upper = am_upper(space, full, strip_sequence(n), horizon)
    half = n // 2
    fibers = [c for c in full.curves if len(c.edges) == half]
    lower = am_lower_fubini(space, fibers)
    return {
        "n": n,
        "h": h,
        "family_size": len(full),
        "mod1_table": rows,
        "mod1_full_family": {"value": full_res.value, "sup_norm": float(full_res.density.max()),
                             "note": "discrete shortest curves have length h, so the sup norm grows like n"},
        "am_upper": upper.to_dict(),
        "am_lower": lower.to_dict() | {"fiber_rows": half},
        "am_interval": [lower.bound, upper.bound],
        "am_relative_width": (upper.bound - lower.bound) / upper.bound,
    }
