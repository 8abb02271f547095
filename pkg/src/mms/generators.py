"""Deterministic fixture spaces.

Grid measures use clipped dual cells on ``[0, side]^2`` with spacing ``h``:
a vertex carries the area of its Voronoi cell clipped to the square, and an
edge carries the area of the cell swept by the edge (``h`` along the edge,
the clipped width across it).  Interior edges and vertices therefore carry
``h^2``, boundary ones ``h^2/2`` and corner vertices ``h^2/4``; the total
vertex measure is the area and each edge direction also carries the area.
``weighting="crofton"`` multiplies edge measures by ``pi/4``, which makes
cut sums approximate Euclidean length averaged over directions.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InputError
from .space import Space

EDGE_WEIGHTINGS = {"cell": 1.0, "split": 0.5, "crofton": math.pi / 4}


def path(n: int = 3, length: float = 1.0, vertex_measure: float = 1.0, edge_measure: float = 1.0) -> Space:
    """Path ``v0 - v1 - ... - v(n-1)`` with uniform data."""
    n = int(n)
    if n < 1:
        raise InputError("path needs at least one vertex")
    ids = [f"v{i}" for i in range(n)]
    edges = [(i, i + 1, length, edge_measure) for i in range(n - 1)]
    pos = [[i * length, 0.0] for i in range(n)]
    return Space(ids, [vertex_measure] * n, edges, pos=pos, name=f"path({n})")


def parallel_edges(length: float = 1.0, measure: float = 1.0) -> Space:
    """Two vertices ``x`` and ``y`` joined by two parallel edges."""
    return Space(["x", "y"], [1.0, 1.0], [(0, 1, length, measure), (0, 1, length, measure)],
                 pos=[[0.0, 0.0], [length, 0.0]], name="parallel_edges")


def theta(k: int = 3, m: int = 2) -> Space:
    """``k`` internally disjoint paths of ``m`` unit edges between ``x`` and ``y``."""
    k, m = int(k), int(m)
    if k < 1 or m < 1:
        raise InputError("theta needs k >= 1 and m >= 1")
    ids = ["x", "y"]
    edges = []
    for branch in range(k):
        prev = 0
        for step in range(1, m):
            ids.append(f"b{branch}_{step}")
            cur = len(ids) - 1
            edges.append((prev, cur, 1.0, 1.0))
            prev = cur
        edges.append((prev, 1, 1.0, 1.0))
    return Space(ids, [1.0] * len(ids), edges, name=f"theta({k},{m})")


def grid_index(n: int, i: int, j: int) -> int:
    """Vertex index of grid point ``(i, j)`` in :func:`grid` (row-major in ``j``)."""
    return j * (n + 1) + i


def _grid_parts(n, h, origin, weighting, prefix=""):
    if weighting not in EDGE_WEIGHTINGS:
        raise InputError(f"unknown edge weighting {weighting!r}")
    factor = EDGE_WEIGHTINGS[weighting]
    w = np.full(n + 1, h)
    w[0] = w[-1] = h / 2
    ids, meas, pos = [], [], []
    for j in range(n + 1):
        for i in range(n + 1):
            ids.append(f"{prefix}{i},{j}")
            meas.append(w[i] * w[j])
            pos.append([origin[0] + i * h, origin[1] + j * h])
    edges = []
    for j in range(n + 1):
        for i in range(n):
            edges.append((grid_index(n, i, j), grid_index(n, i + 1, j), h, factor * h * w[j]))
    for j in range(n):
        for i in range(n + 1):
            edges.append((grid_index(n, i, j), grid_index(n, i, j + 1), h, factor * h * w[i]))
    return ids, meas, edges, pos


def grid(n: int, side: float = 1.0, weighting: str = "cell") -> Space:
    """``(n+1) x (n+1)`` lattice on ``[0, side]^2`` with spacing ``side/n``.

    Horizontal edges come first (index ``j*n + i`` for ``(i,j)-(i+1,j)``),
    then vertical edges (``n(n+1) + j(n+1) + i`` for ``(i,j)-(i,j+1)``).
    """
    n = int(n)
    if n < 1:
        raise InputError("grid needs n >= 1")
    ids, meas, edges, pos = _grid_parts(n, side / n, (0.0, 0.0), weighting)
    return Space(ids, meas, edges, pos=pos, name=f"grid({n})")


def grid_vertical_edge(n: int, i: int, j: int) -> int:
    return n * (n + 1) + j * (n + 1) + i


def grid_horizontal_edge(n: int, i: int, j: int) -> int:
    return j * n + i


def bowtie(n: int, weighting: str = "cell") -> Space:
    """Two copies of ``grid(n)`` on ``[0,1]^2`` and ``[1,2]^2`` sharing the corner ``(1,1)``."""
    n = int(n)
    if n < 1:
        raise InputError("bowtie needs n >= 1")
    h = 1.0 / n
    ids_a, meas_a, edges_a, pos_a = _grid_parts(n, h, (0.0, 0.0), weighting, prefix="a")
    ids_b, meas_b, edges_b, pos_b = _grid_parts(n, h, (1.0, 1.0), weighting, prefix="b")
    shared_a = grid_index(n, n, n)
    shared_b = grid_index(n, 0, 0)
    offset = len(ids_a)
    remap = {}
    k = offset
    for idx in range(len(ids_b)):
        if idx == shared_b:
            remap[idx] = shared_a
        else:
            remap[idx] = k
            k += 1
    ids = list(ids_a)
    meas = list(meas_a)
    pos = list(pos_a)
    ids[shared_a] = "hub"
    meas[shared_a] += meas_b[shared_b]
    for idx in range(len(ids_b)):
        if idx != shared_b:
            ids.append(ids_b[idx])
            meas.append(meas_b[idx])
            pos.append(pos_b[idx])
    edges = list(edges_a) + [(remap[a], remap[b], l, m) for a, b, l, m in edges_b]
    return Space(ids, meas, edges, pos=pos, name=f"bowtie({n})")


def bowtie_lobes(space: Space) -> np.ndarray:
    """``+1`` on the first lobe, ``-1`` on the second, ``0`` at the hub."""
    u = np.array([1.0 if v.startswith("a") else -1.0 for v in space.ids])
    u[space.index("hub")] = 0.0
    return u


def slit_grid(n: int, weighting: str = "cell") -> Space:
    """``grid(n)`` with the horizontal edges crossing ``x = 1/2 + h/2`` removed for ``y >= 1/2``."""
    n = int(n)
    if n < 2 or n % 2:
        raise InputError("slit_grid needs an even n >= 2")
    ids, meas, edges, pos = _grid_parts(n, 1.0 / n, (0.0, 0.0), weighting)
    cut = set()
    for j in range(n // 2, n + 1):
        cut.add(grid_horizontal_edge(n, n // 2, j))
    edges = [e for k, e in enumerate(edges) if k not in cut]
    return Space(ids, meas, edges, pos=pos, name=f"slit_grid({n})")


def circle_weighted_grid(n: int, samples: int | None = None) -> Space:
    """Lattice on ``[-2, 2]^2`` with ``n`` cells per side and extra measure on the unit circle.

    Edges carry Crofton-weighted cell areas.  Each vertex additionally carries
    the arclength of the unit circle lying inside its Voronoi cell, so the
    added vertex mass totals ``2*pi``.  Edge measures are not augmented.
    """
    n = int(n)
    if n < 4:
        raise InputError("circle_weighted_grid needs n >= 4")
    h = 4.0 / n
    ids, meas, edges, pos = _grid_parts(n, h, (-2.0, -2.0), "crofton")
    meas = np.array(meas)
    meas += circle_arc_weights(n, samples)
    return Space(ids, meas, edges, pos=pos, name=f"circle_weighted_grid({n})")


def circle_arc_weights(n: int, samples: int | None = None) -> np.ndarray:
    """Arclength of the unit circle falling in each vertex cell of the ``[-2,2]^2`` lattice."""
    h = 4.0 / n
    m = samples or max(20000, 64 * n)
    t = (np.arange(m) + 0.5) * (2 * math.pi / m)
    i = np.rint((np.cos(t) + 2.0) / h).astype(int)
    j = np.rint((np.sin(t) + 2.0) / h).astype(int)
    out = np.zeros((n + 1) * (n + 1))
    np.add.at(out, j * (n + 1) + i, 2 * math.pi / m)
    return out


GENERATORS = {
    "path": path,
    "grid": grid,
    "parallel_edges": parallel_edges,
    "theta": theta,
    "bowtie": bowtie,
    "slit_grid": slit_grid,
    "circle_weighted_grid": circle_weighted_grid,
}


def generate(name: str, params: dict | None = None) -> Space:
    params = dict(params or {})
    try:
        fn = GENERATORS[name]
    except KeyError:
        raise InputError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}") from None
    try:
        return fn(**params)
    except TypeError as exc:
        raise InputError(f"invalid parameters for {name}: {exc}") from None
