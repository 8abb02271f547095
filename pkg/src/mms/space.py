"""Finite metric measure spaces carried by weighted graphs.

A :class:`Space` has a measure on vertices (used for balls and averages) and,
independently, a measure and a length on every edge (used for line integrals
and densities).  The metric is the shortest-path distance induced by the edge
lengths.  Balls are open: ``B(x, r) = {z : d(x, z) < r}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import DisconnectedError, InputError, UnknownVertexError


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


class Space:
    """Immutable weighted graph with vertex measure, edge measure and lengths.

    Parameters
    ----------
    ids : sequence of str
        Vertex identifiers; the position in this sequence is the vertex index
        used by every numerical routine.
    vertex_measure : array_like
        Nonnegative measure of each vertex.
    edges : sequence of (u, v, length, measure)
        Endpoints given as vertex indices.  Parallel edges are allowed.
    pos : array_like, optional
        ``(n_vertices, 2)`` coordinates, used by generators and plotting only.
    """

    def __init__(self, ids: Sequence[str], vertex_measure, edges, pos=None, name: str = ""):
        ids = [str(v) for v in ids]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate vertex ids")
        if not ids:
            raise InputError("space has no vertices")
        self.ids = tuple(ids)
        self.name = name
        self._index = {v: i for i, v in enumerate(ids)}
        self.vertex_measure = _frozen(vertex_measure, float)
        if self.vertex_measure.shape != (len(ids),):
            raise InputError("vertex_measure has wrong length")
        edges = list(edges)
        eu = [int(e[0]) for e in edges]
        ev = [int(e[1]) for e in edges]
        self.edge_u = _frozen(eu, np.int64)
        self.edge_v = _frozen(ev, np.int64)
        self.length = _frozen([e[2] for e in edges], float)
        self.edge_measure = _frozen([e[3] for e in edges], float)
        self.pos = None if pos is None else _frozen(pos, float)
        self._validate()

        adj: list[list[tuple[int, int]]] = [[] for _ in ids]
        for k, (a, b) in enumerate(zip(eu, ev)):
            adj[a].append((b, k))
            adj[b].append((a, k))
        self.adjacency = tuple(tuple(sorted(nb)) for nb in adj)
        self._dist_rows: dict[int, np.ndarray] = {}
        self._kernel_rows: dict[int, np.ndarray] = {}
        self._dist_matrix = None
        self._kernel_matrix = None
        self._graph = self._min_length_graph()

    # -- construction checks ---------------------------------------------
    def _validate(self):
        n = self.n_vertices
        for name, arr in (("vertex measure", self.vertex_measure),
                          ("edge length", self.length),
                          ("edge measure", self.edge_measure)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"non-finite {name}")
            if np.any(arr < 0):
                raise InputError(f"negative {name}")
        if np.any(self.length <= 0):
            raise InputError("edge lengths must be positive")
        if self.n_edges:
            if self.edge_u.min() < 0 or self.edge_v.min() < 0 or max(self.edge_u.max(), self.edge_v.max()) >= n:
                raise InputError("edge endpoint out of range")
            if np.any(self.edge_u == self.edge_v):
                raise InputError("self-loops are not allowed")
        if self.vertex_measure.sum() <= 0:
            raise InputError("total vertex measure must be positive")
        if n > 1:
            g = csr_matrix((np.ones(self.n_edges), (self.edge_u, self.edge_v)), shape=(n, n))
            ncomp, _ = connected_components(g, directed=False)
            if ncomp != 1:
                raise DisconnectedError("space is not connected")

    def _min_length_graph(self):
        return self.min_weight_graph(self.length)

    def min_weight_graph(self, weights) -> csr_matrix:
        """Symmetric sparse graph keeping the smallest weight among parallel edges.

        Zero weights are stored explicitly and remain edges for ``csgraph``.
        """
        n = self.n_vertices
        if not self.n_edges:
            return csr_matrix((n, n))
        a = np.minimum(self.edge_u, self.edge_v)
        b = np.maximum(self.edge_u, self.edge_v)
        w = np.asarray(weights, dtype=float)
        order = np.lexsort((w, b, a))
        a, b, w = a[order], b[order], w[order]
        first = np.r_[True, (a[1:] != a[:-1]) | (b[1:] != b[:-1])]
        a, b, w = a[first], b[first], w[first]
        rows = np.concatenate([a, b])
        cols = np.concatenate([b, a])
        vals = np.concatenate([w, w])
        return csr_matrix((vals, (rows, cols)), shape=(n, n))

    # -- basic accessors --------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.ids)

    @property
    def n_edges(self) -> int:
        return len(self.length)

    def index(self, v) -> int:
        """Vertex index of ``v`` (an id string or an index)."""
        if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
            if 0 <= int(v) < self.n_vertices:
                return int(v)
            raise UnknownVertexError(f"vertex index {v} out of range")
        try:
            return self._index[str(v)]
        except KeyError:
            raise UnknownVertexError(f"unknown vertex id {v!r}") from None

    def endpoints(self, e: int) -> tuple[int, int]:
        return int(self.edge_u[e]), int(self.edge_v[e])

    def edge_between(self, a: int, b: int) -> int:
        """Shortest edge joining ``a`` and ``b`` (lowest index on ties)."""
        cands = [(self.length[k], k) for (w, k) in self.adjacency[a] if w == b]
        if not cands:
            raise InputError(f"vertices {self.ids[a]!r} and {self.ids[b]!r} are not adjacent")
        return min(cands)[1]

    def edge_key(self, e: int) -> str:
        a, b = self.endpoints(e)
        return f"{self.ids[a]}|{self.ids[b]}|{e}"

    # -- metric -----------------------------------------------------------
    def distances_from(self, x) -> np.ndarray:
        i = self.index(x)
        row = self._dist_rows.get(i)
        if row is None:
            if self._dist_matrix is not None:
                row = self._dist_matrix[i]
            else:
                row = dijkstra(self._graph, directed=False, indices=i)
                row.setflags(write=False)
            self._dist_rows[i] = row
        return row

    def distance(self, x, y) -> float:
        return float(self.distances_from(x)[self.index(y)])

    def distance_matrix(self) -> np.ndarray:
        """All-pairs distances; quadratic memory, cached."""
        if self._dist_matrix is None:
            m = dijkstra(self._graph, directed=False)
            m.setflags(write=False)
            self._dist_matrix = m
        return self._dist_matrix

    def diameter(self) -> float:
        if self.n_vertices <= 2000:
            return float(self.distance_matrix().max())
        # double sweep gives a lower bound; exact is quadratic
        d0 = self.distances_from(0)
        far = int(np.argmax(d0))
        return float(self.distances_from(far).max())

    # -- kernels ----------------------------------------------------------
    def kernel_row(self, x) -> np.ndarray:
        """``z -> d(x,z) / mu(B(x, d(x,z)))`` with the ``z = x`` entry set to 0."""
        i = self.index(x)
        row = self._kernel_rows.get(i)
        if row is None:
            d = self.distances_from(i)
            order = np.argsort(d, kind="stable")
            sd = d[order]
            cum = np.concatenate([[0.0], np.cumsum(self.vertex_measure[order])])
            # measure of the open ball of radius d(x,z): vertices strictly closer
            mb = cum[np.searchsorted(sd, d, side="left")]
            with np.errstate(divide="ignore", invalid="ignore"):
                row = np.where(d > 0, d / mb, 0.0)
            row[i] = 0.0
            row.setflags(write=False)
            self._kernel_rows[i] = row
        return row

    def kernel_matrix(self) -> np.ndarray:
        """All kernel rows at once; quadratic memory, cached."""
        if self._kernel_matrix is None:
            D = self.distance_matrix()
            order = np.argsort(D, axis=1, kind="stable")
            sd = np.take_along_axis(D, order, axis=1)
            cum = np.concatenate([np.zeros((len(D), 1)), np.cumsum(self.vertex_measure[order], axis=1)], axis=1)
            V = len(D)
            # start of each tie group in sorted order: open-ball measure at that radius
            new = np.ones_like(sd, dtype=bool)
            new[:, 1:] = sd[:, 1:] != sd[:, :-1]
            start = np.maximum.accumulate(np.where(new, np.arange(V)[None, :], 0), axis=1)
            mb_sorted = np.take_along_axis(cum, start, axis=1)
            mb = np.empty_like(D)
            np.put_along_axis(mb, order, mb_sorted, axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                K = np.where(D > 0, D / mb, 0.0)
            K.setflags(write=False)
            self._kernel_matrix = K
        return self._kernel_matrix

    # -- derived spaces ---------------------------------------------------
    def scaled(self, length_factor: float = 1.0, vertex_factor: float = 1.0, edge_factor: float = 1.0) -> "Space":
        edges = [(a, b, l * length_factor, m * edge_factor)
                 for a, b, l, m in zip(self.edge_u.tolist(), self.edge_v.tolist(),
                                       self.length.tolist(), self.edge_measure.tolist())]
        return Space(self.ids, self.vertex_measure * vertex_factor, edges, pos=self.pos, name=self.name)

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        verts = []
        for i, vid in enumerate(self.ids):
            rec = {"id": vid, "measure": float(self.vertex_measure[i])}
            if self.pos is not None:
                rec["pos"] = [float(self.pos[i, 0]), float(self.pos[i, 1])]
            verts.append(rec)
        edges = [{"u": self.ids[a], "v": self.ids[b], "length": float(l), "measure": float(m)}
                 for a, b, l, m in zip(self.edge_u.tolist(), self.edge_v.tolist(),
                                       self.length.tolist(), self.edge_measure.tolist())]
        return {"vertices": verts, "edges": edges}

    @classmethod
    def from_dict(cls, data: dict, name: str = "") -> "Space":
        try:
            verts = data["vertices"]
            raw_edges = data["edges"]
        except (KeyError, TypeError):
            raise InputError("space JSON needs 'vertices' and 'edges'") from None
        ids = []
        meas = []
        pos = []
        for v in verts:
            ids.append(str(v["id"]))
            meas.append(_number(v.get("measure"), "vertex measure"))
            if "pos" in v:
                pos.append([_number(c, "position", signed=True) for c in v["pos"]])
        if pos and len(pos) != len(ids):
            raise InputError("either all or no vertices carry 'pos'")
        index = {v: i for i, v in enumerate(ids)}
        edges = []
        for e in raw_edges:
            try:
                a, b = index[str(e["u"])], index[str(e["v"])]
            except KeyError as exc:
                raise UnknownVertexError(f"edge refers to unknown vertex {exc}") from None
            if a == b:
                raise InputError("self-loops are not allowed")
            edges.append((a, b, _number(e.get("length"), "edge length"),
                          _number(e.get("measure"), "edge measure")))
        return cls(ids, meas, edges, pos=pos or None, name=name)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_json(cls, path) -> "Space":
        try:
            with open(path) as fh:
                data = json.load(fh, parse_constant=_reject_constant)
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid JSON in {path}: {exc}") from None
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc.strerror}") from None
        return cls.from_dict(data, name=str(path))

    def __repr__(self):
        return f"Space({self.name or 'anonymous'}: {self.n_vertices} vertices, {self.n_edges} edges)"


def _reject_constant(token):
    raise InputError(f"non-finite number {token} in input")


def _number(x, what, signed: bool = False) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise InputError(f"{what} must be a number, got {x!r}")
    x = float(x)
    if not math.isfinite(x):
        raise InputError(f"{what} must be finite")
    if x < 0 and not signed:
        raise InputError(f"{what} must be nonnegative")
    return x


@dataclass(frozen=True)
class Ball:
    center: int
    radius: float
    members: np.ndarray
    measure: float

    def __contains__(self, v) -> bool:
        return int(v) in set(self.members.tolist())


def ball(space: Space, center, radius: float) -> Ball:
    """Open metric ball ``{z : d(center, z) < radius}``.

    A zero radius gives the empty ball rather than an error.
    """
    if radius < 0:
        raise InputError("radius must be nonnegative")
    c = space.index(center)
    d = space.distances_from(c)
    members = np.flatnonzero(d < radius)
    return Ball(c, float(radius), members, float(space.vertex_measure[members].sum()))


def ball_mask(space: Space, center, radius: float) -> np.ndarray:
    return space.distances_from(center) < radius


@dataclass(frozen=True)
class RieszKernelField:
    x: int
    y: int
    C: float
    values: np.ndarray
    window: np.ndarray  # boolean vertex mask of B(x, C d) U B(y, C d)

    def windowed(self) -> np.ndarray:
        return np.where(self.window, self.values, 0.0)

    def edge_values(self, space: Space) -> np.ndarray:
        """Edge kernel: mean of the windowed endpoint values."""
        w = self.windowed()
        return 0.5 * (w[space.edge_u] + w[space.edge_v])


def riesz_kernel(space: Space, x, y, C: float = 1.0) -> RieszKernelField:
    """Riesz kernel ``R_xy(z) = d(x,z)/mu(B(x,d(x,z))) + d(y,z)/mu(B(y,d(y,z)))``.

    Summands with ``d = 0`` are 0, so the field is finite whenever every
    vertex has positive measure.  The window is ``B(x, C d(x,y)) U B(y, C d(x,y))``.
    """
    i, j = space.index(x), space.index(y)
    if i == j:
        raise InputError("riesz_kernel needs two distinct vertices")
    if C < 1:
        raise InputError("C must be at least 1")
    dxy = space.distances_from(i)[j]
    if not np.isfinite(dxy):
        raise DisconnectedError("vertices are not connected")
    values = space.kernel_row(i) + space.kernel_row(j)
    values = np.array(values)
    values.setflags(write=False)
    r = C * dxy
    window = (space.distances_from(i) < r) | (space.distances_from(j) < r)
    return RieszKernelField(i, j, float(C), values, window)


@dataclass
class DoublingEstimate:
    value: float
    witness: tuple | None
    skipped: int
    evaluated: int


def doubling_constant(space: Space, radii: Iterable[float], centers=None) -> DoublingEstimate:
    """Largest ``mu(B(x,2r)) / mu(B(x,r))`` over the sampled centers and radii.

    This is a lower estimate of the doubling constant.  Pairs whose inner
    ball has zero measure are skipped and counted.
    """
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii):
        raise InputError("radii must be a nonempty list of positive numbers")
    centers = range(space.n_vertices) if centers is None else [space.index(c) for c in centers]
    best, witness, skipped, count = 1.0, None, 0, 0
    for c in centers:
        d = space.distances_from(c)
        order = np.argsort(d, kind="stable")
        sd = d[order]
        cum = np.concatenate([[0.0], np.cumsum(space.vertex_measure[order])])
        for r in radii:
            inner = cum[np.searchsorted(sd, r, side="left")]
            outer = cum[np.searchsorted(sd, 2 * r, side="left")]
            if inner <= 0:
                skipped += 1
                continue
            count += 1
            ratio = outer / inner
            if ratio > best:
                best, witness = float(ratio), (int(c), r)
    return DoublingEstimate(best, witness, skipped, count)
