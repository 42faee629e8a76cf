"""Cortical mesh graphs: Laplacians, parcellation, diffusion kernels, patches."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .core import matrix_exp


class DisconnectedGraphError(ValueError):
    pass


@dataclass(frozen=True)
class CortexGraph:
    """Undirected mesh graph with sparse adjacency, degree and Laplacian."""

    n_vertices: int
    edges: np.ndarray
    positions: np.ndarray | None = None
    adjacency: sparse.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        K = self.n_vertices
        data = np.ones(2 * len(e))
        A = sparse.csr_matrix(
            (data, (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(K, K)
        )
        A.data[:] = 1.0
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "adjacency", A)

    @property
    def degree(self):
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    @property
    def laplacian(self):
        return (sparse.diags(self.degree) - self.adjacency).tocsr()

    def neighbors(self, v):
        A = self.adjacency
        return A.indices[A.indptr[v]:A.indptr[v + 1]]

    def is_connected(self, vertices=None):
        if vertices is None:
            A = self.adjacency
        else:
            idx = np.asarray(vertices, dtype=int)
            if idx.size == 0:
                return False
            A = self.adjacency[idx][:, idx]
        n, _ = csgraph.connected_components(A, directed=False)
        return n == 1

    def subgraph_laplacian(self, vertices):
        """Dense Laplacian of the subgraph induced by ``vertices`` (in the given order)."""
        idx = np.asarray(vertices, dtype=int)
        A = self.adjacency[idx][:, idx].toarray()
        return np.diag(A.sum(axis=1)) - A

    def distances_from(self, sources):
        """Hop distances from each source vertex, shape ``(len(sources), K)``."""
        return csgraph.shortest_path(
            self.adjacency, directed=False, unweighted=True, indices=np.atleast_1d(sources)
        )


def build_graph(vertices, faces):
    """Graph whose edges are the deduplicated edges of the triangles in ``faces``."""
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=int).reshape(-1, 3)
    K = len(vertices)
    if faces.size and (faces.min() < 0 or faces.max() >= K):
        raise ValueError("face index out of range")
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    e = e[e[:, 0] != e[:, 1]]
    e = np.unique(e, axis=0)
    g = CortexGraph(K, e, vertices)
    if not g.is_connected():
        raise DisconnectedGraphError("mesh graph is not connected")
    return g


def path_graph(K):
    """Path 0 - 1 - ... - (K-1); handy for tests and 1-D toy problems."""
    e = np.column_stack([np.arange(K - 1), np.arange(1, K)])
    return CortexGraph(K, e, np.column_stack([np.arange(K), np.zeros(K), np.zeros(K)]))


def icosphere(subdivisions=3):
    """Unit-sphere triangle mesh from a subdivided icosahedron.

    Returns ``(vertices, faces)`` with ``10 * 4**subdivisions + 2`` vertices.
    """
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts), np.array(faces, dtype=int)


def parcellate(g, P, rng):
    """Split the graph into ``P`` connected parcels.

    Seeds come from farthest-point sampling in hop distance (the first seed
    is the vertex farthest from a random start).  Every vertex joins its
    nearest seed, ties going to the lower seed index, which keeps each
    parcel connected.  Returns a list of sorted vertex-index arrays.
    """
    K = g.n_vertices
    if not 1 <= P <= K:
        raise ValueError(f"P must lie in [1, {K}], got {P}")
    start = int(rng.integers(K))
    seeds = [int(np.argmax(g.distances_from(start)[0]))]
    mind = g.distances_from(seeds[0])[0]
    while len(seeds) < P:
        nxt = int(np.argmax(mind))
        seeds.append(nxt)
        mind = np.minimum(mind, g.distances_from(nxt)[0])
    dist = g.distances_from(seeds)
    owner = np.argmin(dist, axis=0)
    parcels = [np.flatnonzero(owner == p) for p in range(P)]
    for p, parcel in enumerate(parcels):
        if not g.is_connected(parcel):
            raise DisconnectedGraphError(f"parcel {p} is not connected")
    return parcels


def parcel_covariance(g, parcel, rho):
    """Diffusion kernel ``exp(-rho * Lap_p)`` on the subgraph induced by ``parcel``."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    parcel = np.asarray(parcel, dtype=int)
    if not g.is_connected(parcel):
        raise DisconnectedGraphError("parcel does not induce a connected subgraph")
    return matrix_exp(-rho * g.subgraph_laplacian(parcel))


def grow_patch(g, seed, size, rng):
    """Connected vertex set of ``size`` vertices grown breadth-first from ``seed``.

    Each BFS frontier is admitted in an order shuffled by ``rng``, so the
    last, partially admitted frontier is a random subset.
    """
    K = g.n_vertices
    if not 0 <= size <= K:
        raise ValueError(f"size must lie in [0, {K}], got {size}")
    if size == 0:
        return np.array([], dtype=int)
    chosen = [int(seed)]
    seen = {int(seed)}
    frontier = [int(seed)]
    while len(chosen) < size:
        nxt = sorted({int(u) for v in frontier for u in g.neighbors(v)} - seen)
        if not nxt:
            raise DisconnectedGraphError("patch cannot grow: component exhausted")
        nxt = [nxt[i] for i in rng.permutation(len(nxt))]
        take = nxt[: size - len(chosen)]
        chosen += take
        seen.update(nxt)
        frontier = nxt
    return np.array(sorted(chosen), dtype=int)
