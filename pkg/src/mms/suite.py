"""Refinement-ladder experiment comparing the Poincaré inequality, pencil
constants, the pencil-derived Poincaré constant and the AM-Poincaré constant.

On one finite space every inequality holds with some constant, so the
comparison is made across a ladder of refinements: a constant is
``bounded`` when its largest and smallest values differ by at most
``band``, and ``growing`` when it increases by at least ``growth`` at
every step.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .am import DensitySequence
from .errors import InputError
from .generators import bowtie_lobes, generate
from .pencil import build_pencil
from .poincare import (am_pi_check, default_balls, default_functions, minimal_upper_gradient, pencil_to_pi,
                       pi_constant, sample_pairs)
from .space import Space

SERIES = ("pi", "derived", "am_pi")


@dataclass
class ExperimentSpec:
    """Generator, ladder and sampling parameters; ``seed`` fixes every random choice."""

    generator: str
    ladder: list
    ladder_param: str = "n"
    params: dict = field(default_factory=dict)
    seed: int = 0
    functions: int = 12
    pairs: int = 6
    pair_distance: float = 0.25
    max_centers: int = 48
    C: float = 2.0
    lam: float = 1.0
    horizon: int = 8
    band: float = 3.0
    growth: float = 1.5
    tol: float = 1e-9
    output: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown spec fields: {sorted(unknown)}")
        if "generator" not in data or "ladder" not in data:
            raise InputError("spec needs 'generator' and 'ladder'")
        spec = cls(**data)
        if len(spec.ladder) < 2:
            raise InputError("a ladder needs at least two levels")
        if spec.C < 1 or spec.lam < 1:
            raise InputError("C and lam must be at least 1")
        return spec

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def witness_functions(space: Space, generator: str) -> list[np.ndarray]:
    """Generator-specific extremal functions added to the random sample."""
    if generator == "bowtie":
        return [bowtie_lobes(space)]
    if space.pos is not None:
        x = np.array([p[0] for p in space.pos])
        return [(x < np.median(x)).astype(float)]
    return []


def relaxing_sequence(space: Space, u, seed: int = 0) -> DensitySequence:
    """``g_i = g_u + 2^{-i} m r`` with seeded ``r`` in ``[0, 1)`` and ``m`` the mean of ``g_u``.

    Every term dominates the minimal upper gradient, so the sequence is a
    valid BV_AM upper bound whose liminf is ``g_u``; only a horizon of it is seen.
    """
    g = minimal_upper_gradient(space, u)
    r = np.random.default_rng(seed).random(space.n_edges) * float(g.mean())
    return DensitySequence(lambda i: g + 2.0 ** (-i) * r, tail="none", name="relaxing")


def run_level(spec: ExperimentSpec, value) -> dict:
    params = dict(spec.params)
    params[spec.ladder_param] = value
    space = generate(spec.generator, params)
    seed = spec.seed
    U = np.array(default_functions(space, spec.functions, seed, witness_functions(space, spec.generator)))
    balls = default_balls(space, max_centers=spec.max_centers, seed=seed)
    reach = max(spec.pair_distance * space.diameter(), float(space.length.max()))
    pairs = sample_pairs(space, spec.pairs, seed, max_distance=reach)
    pencils = {}

    def provider(x, y):
        if (x, y) not in pencils:
            pencils[(x, y)] = build_pencil(space, x, y, spec.C)
        return pencils[(x, y)]

    pi = pi_constant(space, U, balls, spec.lam)
    chain = pencil_to_pi(space, U, None, pairs, balls, C=spec.C, pencil_provider=provider)
    tau = chain.stages["tau"]
    pi_tau = pi_constant(space, U, balls, tau)
    am = 0.0
    for k, u in enumerate(U):
        rep = am_pi_check(space, u, relaxing_sequence(space, u, seed + k), balls, spec.lam, spec.horizon)
        am = max(am, rep.constant)
    pc = [pencils[p].constant for p in pairs]
    return {
        "level": value,
        "vertices": space.n_vertices,
        "edges": space.n_edges,
        "pi": pi.constant,
        "pi_tau": pi_tau.constant,
        "am_pi": am,
        "derived": chain.constant,
        "pencil_max": max(pc),
        "pencil_median": float(np.median(pc)),
        "tau": tau,
        "stages": {k: chain.stages[k] for k in ("stage1", "stage2", "potential", "hajlasz", "ball",
                                                   "pencil_bound_holds", "chain_constant")},
        "coherent": bool(chain.constant >= pi_tau.constant - spec.tol),
        "pi_failures": pi.failures,
    }


def classify(values, band: float, growth: float) -> str:
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return "n/a"
    if np.all(np.isfinite(v)) and v.min() > 0 and v.max() / v.min() <= band:
        return "bounded"
    if np.all(v[1:] >= growth * v[:-1]):
        return "growing"
    return "indeterminate"


def combine(verdicts: dict) -> str:
    kinds = set(verdicts.values())
    if kinds == {"bounded"}:
        return "PI-like"
    if kinds == {"growing"}:
        return "PI-failing"
    if kinds == {"n/a"}:
        return "n/a"
    return "mixed: inspect"


def _threads() -> int:
    raw = os.environ.get("MMS_THREADS", "")
    try:
        return max(1, int(raw)) if raw else min(4, os.cpu_count() or 1)
    except ValueError:
        raise InputError("MMS_THREADS must be an integer") from None


def equivalence_suite(spec) -> dict:
    """Run every ladder level and classify the three constants.

    Levels run in a thread pool capped by ``MMS_THREADS``; the report is
    assembled in ladder order and contains no timings, so it is a pure
    function of the spec.  Each row also carries the verdict of the prefix
    of the ladder ending at that level.
    """
    if isinstance(spec, dict):
        spec = ExperimentSpec.from_dict(spec)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        rows = list(pool.map(lambda v: run_level(spec, v), spec.ladder))
    for k, row in enumerate(rows):
        pref = {s: classify([r[s] for r in rows[:k + 1]], spec.band, spec.growth) for s in SERIES}
        row["verdict"] = combine(pref)
    verdicts = {s: classify([r[s] for r in rows], spec.band, spec.growth) for s in SERIES}
    return {
        "spec": spec.to_dict(),
        "levels": rows,
        "series_verdicts": verdicts,
        "verdict": combine(verdicts),
        "coherent": all(r["coherent"] for r in rows),
        "pencil_verdict": classify([r["pencil_max"] for r in rows], spec.band, spec.growth),
    }


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2)


CSV_COLUMNS = ("level", "vertices", "edges", "pi", "pi_tau", "derived", "am_pi", "pencil_max", "pencil_median",
               "tau", "coherent", "verdict")


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in report["levels"]:
        w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in CSV_COLUMNS])
    return buf.getvalue()
