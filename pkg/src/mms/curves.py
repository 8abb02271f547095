"""Curves as edge walks, line integrals, and quasiconvex path families."""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import DisconnectedError, InputError
from .space import Space

# relative slack used only for pruning; final length checks are exact
_PRUNE_SLACK = 1e-12


@dataclass(frozen=True)
class Curve:
    """An edge walk ``vertices[0] -e0- vertices[1] -e1- ...``.

    ``length`` is the left-to-right floating sum of edge lengths, which is
    the same summation order Dijkstra uses, so geodesics compare exactly
    against graph distances.
    """

    vertices: tuple
    edges: tuple
    length: float

    @property
    def start(self) -> int:
        return self.vertices[0]

    @property
    def end(self) -> int:
        return self.vertices[-1]

    def reversed(self, space: Space) -> "Curve":
        return Curve.from_edges(space, self.end, tuple(reversed(self.edges)))

    @classmethod
    def from_edges(cls, space: Space, start, edges: Sequence[int]) -> "Curve":
        if not len(edges):
            raise InputError("a curve needs at least one edge")
        cur = space.index(start)
        verts = [cur]
        total = 0.0
        for e in edges:
            e = int(e)
            a, b = space.endpoints(e)
            if cur == a:
                cur = b
            elif cur == b:
                cur = a
            else:
                raise InputError(f"edge {e} is not incident to vertex {space.ids[cur]!r}")
            verts.append(cur)
            total += float(space.length[e])
        return cls(tuple(verts), tuple(int(e) for e in edges), total)

    @classmethod
    def from_vertices(cls, space: Space, vertices: Sequence) -> "Curve":
        """Walk through the given vertices, using the shortest edge between neighbours."""
        idx = [space.index(v) for v in vertices]
        if len(idx) < 2:
            raise InputError("a curve needs at least two vertices")
        edges = [space.edge_between(a, b) for a, b in zip(idx[:-1], idx[1:])]
        return cls.from_edges(space, idx[0], edges)

    def ids(self, space: Space) -> list[str]:
        return [space.ids[v] for v in self.vertices]


def line_integral(space: Space, curve: Curve, density) -> float:
    """``sum_e rho(e) * length(e)`` over the edges of ``curve`` with multiplicity."""
    rho = np.asarray(density, dtype=float)
    if rho.shape != (space.n_edges,):
        raise InputError("density must have one value per edge")
    e = np.fromiter(curve.edges, dtype=np.int64, count=len(curve.edges))
    return float(np.dot(rho[e], space.length[e]))


def _edge_mask(space: Space, edge_set) -> np.ndarray:
    if isinstance(edge_set, np.ndarray) and edge_set.dtype == bool:
        if edge_set.shape != (space.n_edges,):
            raise InputError("edge mask has wrong length")
        return edge_set
    mask = np.zeros(space.n_edges, dtype=bool)
    idx = np.fromiter((int(e) for e in edge_set), dtype=np.int64)
    mask[idx] = True
    return mask


def intersection_length(space: Space, curve: Curve, edge_set) -> float:
    """Length of ``curve`` inside ``edge_set``, counting repeated traversals."""
    mask = _edge_mask(space, edge_set)
    e = np.fromiter(curve.edges, dtype=np.int64, count=len(curve.edges))
    return float(space.length[e][mask[e]].sum())


def induced_edges(space: Space, vertex_set) -> np.ndarray:
    """Boolean mask of edges with both endpoints in ``vertex_set``."""
    vm = np.zeros(space.n_vertices, dtype=bool)
    if isinstance(vertex_set, np.ndarray) and vertex_set.dtype == bool:
        vm = vertex_set
    else:
        vm[[space.index(v) for v in vertex_set]] = True
    return vm[space.edge_u] & vm[space.edge_v]


class CurveFamily:
    """Either an explicit duplicate-free list of curves or an implicit
    endpoint-pair family (all simple paths ``x -> y`` with length ``<= C d(x,y)``).
    """

    def __init__(self, curves: Iterable[Curve] | None = None, *, x=None, y=None, C: float | None = None,
                 max_count: int | None = None, truncated: bool = False):
        self.x, self.y, self.C, self.max_count = x, y, C, max_count
        self.truncated = truncated
        self._incidence = None
        if curves is None:
            if x is None or y is None or C is None:
                raise InputError("implicit families need x, y and C")
            self.curves = None
        else:
            seen = set()
            out = []
            for c in curves:
                key = (c.vertices, c.edges)
                if key not in seen:
                    seen.add(key)
                    out.append(c)
            self.curves = out

    @classmethod
    def implicit(cls, x: int, y: int, C: float, max_count: int | None = None) -> "CurveFamily":
        return cls(None, x=x, y=y, C=C, max_count=max_count)

    @property
    def is_implicit(self) -> bool:
        return self.curves is None

    def __len__(self):
        if self.curves is None:
            raise TypeError("implicit family has no definite size")
        return len(self.curves)

    def __iter__(self):
        if self.curves is None:
            raise TypeError("cannot iterate an implicit family; enumerate it first")
        return iter(self.curves)

    def __getitem__(self, k):
        return self.curves[k]

    def length_cap(self, space: Space) -> float:
        return self.C * space.distance(self.x, self.y)

    def incidence(self, space: Space) -> csr_matrix:
        """Sparse ``(curves x edges)`` matrix of ``l(gamma ∩ {e})``."""
        if self._incidence is None:
            self._incidence = incidence_matrix(space, self.curves)
        return self._incidence

    def lengths(self) -> np.ndarray:
        return np.array([c.length for c in self.curves])


def incidence_matrix(space: Space, curves: Sequence[Curve]) -> csr_matrix:
    counts = np.fromiter((len(c.edges) for c in curves), dtype=np.int64, count=len(curves))
    total = int(counts.sum())
    cols = np.fromiter((e for c in curves for e in c.edges), dtype=np.int64, count=total)
    rows = np.repeat(np.arange(len(curves)), counts)
    vals = space.length[cols]
    m = csr_matrix((vals, (rows, cols)), shape=(len(curves), space.n_edges))
    m.sum_duplicates()
    return m


def enumerate_quasiconvex(space: Space, x, y, C: float = 1.0, max_count: int = 100_000) -> CurveFamily:
    """Simple paths ``x -> y`` of length ``<= C d(x, y)`` in (length, vertex-sequence) order.

    Best-first search with the exact remaining distance as heuristic, so
    complete paths come out in nondecreasing length.  Stops after
    ``max_count`` paths and sets ``truncated`` when more exist.
    """
    i, j = space.index(x), space.index(y)
    if i == j:
        raise InputError("x and y must differ")
    if C < 1:
        raise InputError("C must be at least 1")
    to_y = space.distances_from(j)
    dxy = to_y[i]
    if not np.isfinite(dxy):
        raise DisconnectedError("no path joins x and y")
    cap = C * dxy
    prune = cap * (1 + _PRUNE_SLACK)
    heap = [(float(to_y[i]), (i,), (), 0.0)]
    found: list[Curve] = []
    truncated = False
    while heap:
        f, verts, edges, g = heapq.heappop(heap)
        v = verts[-1]
        if v == j:
            if g <= cap:
                if len(found) == max_count:
                    truncated = True
                    break
                found.append(Curve(verts, edges, g))
            continue
        on_path = set(verts)
        for w, e in space.adjacency[v]:
            if w in on_path:
                continue
            g2 = g + float(space.length[e])
            if g2 + to_y[w] > prune:
                continue
            heapq.heappush(heap, (g2 + float(to_y[w]), verts + (w,), edges + (e,), g2))
    found.sort(key=lambda c: (c.length, c.vertices, c.edges))
    fam = CurveFamily(found, x=i, y=j, C=C, max_count=max_count, truncated=truncated)
    return fam


@dataclass(order=True)
class _Label:
    cost: float
    length: float
    seq: int
    vertex: int = field(compare=False)
    edge: int = field(compare=False)
    parent: "_Label | None" = field(compare=False)
    alive: bool = field(default=True, compare=False)


def cheapest_capped_path(space: Space, weights, x, y, cap: float) -> tuple[float, Curve | None]:
    """Minimum of ``sum_e weights[e]`` over walks ``x -> y`` of length ``<= cap``.

    Label setting over ``(cost, length)`` with Pareto dominance, ordered by
    cost plus the uncapped cheapest remaining cost (a consistent bound); surviving
    labels are simple paths because every cycle adds positive length at
    nonnegative cost.  Ties break by length, then creation order, which is
    deterministic.  Returns ``(inf, None)`` when no walk fits under the cap.
    """
    w = np.asarray(weights, dtype=float)
    i, j = space.index(x), space.index(y)
    to_y = space.distances_from(j)
    prune = cap * (1 + _PRUNE_SLACK)
    if to_y[i] > prune:
        return float("inf"), None
    # exact remaining-cost lower bound (cap ignored) turns the search into A*
    lb = dijkstra(space.min_weight_graph(w), directed=False, indices=j).tolist()
    labels: dict[int, list[_Label]] = defaultdict(list)
    seq = 0
    root = _Label(0.0, 0.0, seq, i, -1, None)
    labels[i].append(root)
    heap = [(0.0, 0.0, 0, root)]
    lengths = space.length.tolist()
    wl = w.tolist()
    adjacency = space.adjacency
    while heap:
        lab = heapq.heappop(heap)[3]
        if not lab.alive:
            continue
        v = lab.vertex
        if v == j:
            curve = _unwind(space, lab)
            if curve.length <= cap:
                return lab.cost, curve
            continue
        for u, e in adjacency[v]:
            length = lab.length + lengths[e]
            if length + to_y[u] > prune:
                continue
            cost = lab.cost + wl[e]
            bucket = labels[u]
            if any(o.cost <= cost and o.length <= length for o in bucket):
                continue
            for o in bucket:
                if cost <= o.cost and length <= o.length:
                    o.alive = False
            bucket[:] = [o for o in bucket if o.alive]
            seq += 1
            new = _Label(cost, length, seq, u, e, lab)
            bucket.append(new)
            heapq.heappush(heap, (cost + lb[u], length, seq, new))
    return float("inf"), None


def _unwind(space: Space, lab: _Label) -> Curve:
    edges = []
    node = lab
    while node.parent is not None:
        edges.append(node.edge)
        node = node.parent
    edges.reverse()
    return Curve.from_edges(space, node.vertex, edges)
