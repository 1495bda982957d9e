"""Weighted cellular sheaves on undirected simple graphs.

A cellular sheaf attaches a vector space (stalk) to every vertex and every
edge of a graph, together with a linear restriction map from each vertex
stalk into the stalk of every incident edge.  The coboundary operator takes
edge-wise differences of transported endpoint data; the sheaf Laplacian is
its Gram operator.

Block ordering is canonical throughout the package: vertex blocks are stacked
in ascending vertex id, edge blocks in lexicographic order of the normalized
endpoint pair ``(min, max)``.  The coboundary sign convention is
``(min endpoint) - (max endpoint)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

Edge = tuple[int, int]

# Dense operators are fine at desk scale; beyond this vertex count the
# assembly helpers switch to CSR automatically.
SPARSE_VERTEX_THRESHOLD = 200


def normalize_edge(edge: Sequence[int]) -> Edge:
    """Return the (min, max) form of an undirected edge."""
    i, j = int(edge[0]), int(edge[1])
    if i == j:
        raise ValueError(f"self-loop at vertex {i} is not allowed")
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    """Static undirected simple graph on vertices ``0..vertex_count-1``."""

    vertex_count: int
    edges: tuple[Edge, ...] = field(default=())
    adjacency: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        if self.vertex_count < 1:
            raise ValueError("graph needs at least one vertex")
        seen = set()
        for raw in self.edges:
            e = normalize_edge(raw)
            if not (0 <= e[0] < self.vertex_count and 0 <= e[1] < self.vertex_count):
                raise ValueError(f"edge {e} references an unknown vertex")
            if e in seen:
                raise ValueError(f"duplicate edge {e}")
            seen.add(e)
        object.__setattr__(self, "edges", tuple(sorted(seen)))
        nbrs: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        object.__setattr__(self, "adjacency", tuple(tuple(sorted(n)) for n in nbrs))

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adjacency[i]

    def has_edge(self, i: int, j: int) -> bool:
        return normalize_edge((i, j)) in set(self.edges)

    def edge_index(self) -> dict[Edge, int]:
        """Position of each edge in the canonical (lexicographic) order."""
        return {e: k for k, e in enumerate(self.edges)}

    def induced_subgraph(self, vertices: Iterable[int]) -> tuple["Graph", dict[int, int]]:
        """Subgraph on ``vertices``; also returns the old->new vertex map."""
        keep = sorted(set(int(v) for v in vertices))
        if not keep:
            raise ValueError("induced subgraph needs at least one vertex")
        for v in keep:
            if not 0 <= v < self.vertex_count:
                raise ValueError(f"unknown vertex {v}")
        remap = {v: k for k, v in enumerate(keep)}
        kept = set(keep)
        edges = tuple((remap[i], remap[j]) for i, j in self.edges if i in kept and j in kept)
        return Graph(len(keep), edges), remap

    def is_connected(self) -> bool:
        if self.vertex_count == 1:
            return True
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in self.adjacency[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.vertex_count


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CellularSheaf:
    """A weighted cellular sheaf: stalk dimensions plus restriction maps.

    ``restrictions`` maps ``(vertex, edge)`` to the matrix transporting that
    vertex's stalk into the edge stalk; every edge carries exactly two, one
    per endpoint.  Matrices are stored read-only, so instances are safe to
    share across threads.
    """

    graph: Graph
    vertex_dims: tuple[int, ...]
    edge_dims: tuple[int, ...]
    restrictions: Mapping[tuple[int, Edge], np.ndarray]

    def __post_init__(self):
        g = self.graph
        dims = tuple(int(d) for d in self.vertex_dims)
        edims = tuple(int(d) for d in self.edge_dims)
        if len(dims) != g.vertex_count:
            raise ValueError("one stalk dimension per vertex required")
        if any(d < 1 for d in dims) or any(d < 1 for d in edims):
            raise ValueError("stalk dimensions must be positive")
        if len(edims) != len(g.edges):
            raise ValueError("one stalk dimension per edge required")
        rest = {}
        for key, mat in self.restrictions.items():
            v, e = key[0], normalize_edge(key[1])
            if v not in e:
                raise ValueError(f"restriction key {key}: vertex not on edge")
            rest[(v, e)] = _frozen(mat)
        for k, e in enumerate(g.edges):
            for v in e:
                mat = rest.get((v, e))
                if mat is None:
                    raise ValueError(f"edge {e}: missing restriction map for vertex {v}")
                want = (edims[k], dims[v])
                if mat.shape != want:
                    raise ValueError(
                        f"edge {e}: restriction from vertex {v} has shape "
                        f"{mat.shape}, expected {want}"
                    )
        if len(rest) != 2 * len(g.edges):
            raise ValueError("exactly two restriction maps per edge required")
        object.__setattr__(self, "vertex_dims", dims)
        object.__setattr__(self, "edge_dims", edims)
        object.__setattr__(self, "restrictions", rest)

    def restriction(self, vertex: int, edge: Sequence[int]) -> np.ndarray:
        return self.restrictions[(vertex, normalize_edge(edge))]

    @cached_property
    def vertex_offsets(self) -> np.ndarray:
        """Start offset of each vertex block in a flattened 0-cochain."""
        return np.concatenate(([0], np.cumsum(self.vertex_dims)))

    @cached_property
    def edge_offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.edge_dims))) if self.edge_dims else np.zeros(1, dtype=int)

    @property
    def total_vertex_dim(self) -> int:
        return int(self.vertex_offsets[-1])

    @property
    def total_edge_dim(self) -> int:
        return int(self.edge_offsets[-1])

    def vertex_slice(self, i: int) -> slice:
        off = self.vertex_offsets
        return slice(int(off[i]), int(off[i + 1]))

    def edge_slice(self, k: int) -> slice:
        off = self.edge_offsets
        return slice(int(off[k]), int(off[k + 1]))

    def vertex_block(self, x: np.ndarray, i: int) -> np.ndarray:
        return np.asarray(x)[self.vertex_slice(i)]


@dataclass(frozen=True)
class Cochain:
    """A 0- or 1-cochain: one vector per vertex (degree 0) or edge (degree 1).

    The flattened ``vector`` view concatenates blocks in the canonical order
    (vertices ascending / edges lexicographic), matching all assembled
    operator matrices.
    """

    sheaf: CellularSheaf
    degree: int
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.degree not in (0, 1):
            raise ValueError("cochain degree must be 0 or 1")
        dims = self.sheaf.vertex_dims if self.degree == 0 else self.sheaf.edge_dims
        blocks = tuple(_frozen(np.atleast_1d(b)) for b in self.blocks)
        if len(blocks) != len(dims):
            raise ValueError(f"degree-{self.degree} cochain needs {len(dims)} blocks")
        for k, (b, d) in enumerate(zip(blocks, dims)):
            if b.shape != (d,):
                raise ValueError(f"block {k} has shape {b.shape}, expected ({d},)")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_vector(cls, sheaf: CellularSheaf, degree: int, vec: np.ndarray) -> "Cochain":
        vec = np.asarray(vec, dtype=float).ravel()
        dims = sheaf.vertex_dims if degree == 0 else sheaf.edge_dims
        total = sum(dims)
        if vec.shape != (total,):
            raise ValueError(f"vector has shape {vec.shape}, expected ({total},)")
        offsets = np.concatenate(([0], np.cumsum(dims)))
        blocks = tuple(vec[offsets[k]:offsets[k + 1]] for k in range(len(dims)))
        return cls(sheaf, degree, blocks)

    @classmethod
    def zero(cls, sheaf: CellularSheaf, degree: int) -> "Cochain":
        dims = sheaf.vertex_dims if degree == 0 else sheaf.edge_dims
        return cls(sheaf, degree, tuple(np.zeros(d) for d in dims))

    @property
    def vector(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate(self.blocks)

    def block(self, k: int) -> np.ndarray:
        return self.blocks[k]


def as_vertex_vector(sheaf: CellularSheaf, x) -> np.ndarray:
    """Coerce a 0-cochain or flat array to the flattened canonical layout."""
    if isinstance(x, Cochain):
        if x.degree != 0:
            raise ValueError("expected a 0-cochain")
        return x.vector
    vec = np.asarray(x, dtype=float).ravel()
    if vec.shape != (sheaf.total_vertex_dim,):
        raise ValueError(
            f"0-cochain vector has shape {vec.shape}, expected ({sheaf.total_vertex_dim},)"
        )
    return vec


def constant_sheaf(graph: Graph, k: int) -> CellularSheaf:
    """Constant sheaf: every stalk is R^k, every restriction the identity."""
    if k < 1:
        raise ValueError("stalk dimension k must be >= 1")
    eye = np.eye(k)
    rest = {}
    for e in graph.edges:
        rest[(e[0], e)] = eye
        rest[(e[1], e)] = eye
    return CellularSheaf(
        graph=graph,
        vertex_dims=(k,) * graph.vertex_count,
        edge_dims=(k,) * len(graph.edges),
        restrictions=rest,
    )


def induced_subsheaf(sheaf: CellularSheaf, vertices: Iterable[int]) -> CellularSheaf:
    """Restriction of the sheaf to the subgraph induced by ``vertices``."""
    sub, remap = sheaf.graph.induced_subgraph(vertices)
    inv = {new: old for old, new in remap.items()}
    old_index = sheaf.graph.edge_index()
    edge_dims = []
    rest = {}
    for i, j in sub.edges:
        oe = normalize_edge((inv[i], inv[j]))
        edge_dims.append(sheaf.edge_dims[old_index[oe]])
        rest[(i, (i, j))] = sheaf.restrictions[(inv[i], oe)]
        rest[(j, (i, j))] = sheaf.restrictions[(inv[j], oe)]
    return CellularSheaf(
        graph=sub,
        vertex_dims=tuple(sheaf.vertex_dims[inv[v]] for v in range(sub.vertex_count)),
        edge_dims=tuple(edge_dims),
        restrictions=rest,
    )


def _want_sparse(sheaf: CellularSheaf, sparse: bool | None) -> bool:
    if sparse is None:
        return sheaf.graph.vertex_count > SPARSE_VERTEX_THRESHOLD
    return bool(sparse)


def coboundary(sheaf: CellularSheaf, sparse: bool | None = None):
    """Matrix of the coboundary operator from 0-cochains to 1-cochains.

    Edge block for ``e = (i, j)`` with ``i < j`` is
    ``F_[i|e] x_i - F_[j|e] x_j``.
    """
    rows, cols = sheaf.total_edge_dim, sheaf.total_vertex_dim
    if _want_sparse(sheaf, sparse):
        blocks_i, blocks_j, blocks_v = [], [], []
        for k, (i, j) in enumerate(sheaf.graph.edges):
            for v, sign in ((i, 1.0), (j, -1.0)):
                mat = sign * sheaf.restrictions[(v, (i, j))]
                r0, c0 = sheaf.edge_offsets[k], sheaf.vertex_offsets[v]
                rr, cc = np.nonzero(mat)
                blocks_i.append(rr + r0)
                blocks_j.append(cc + c0)
                blocks_v.append(mat[rr, cc])
        if blocks_i:
            data = (np.concatenate(blocks_v), (np.concatenate(blocks_i), np.concatenate(blocks_j)))
            return sp.csr_array(sp.coo_array(data, shape=(rows, cols)))
        return sp.csr_array((rows, cols))
    delta = np.zeros((rows, cols))
    for k, (i, j) in enumerate(sheaf.graph.edges):
        rs = sheaf.edge_slice(k)
        delta[rs, sheaf.vertex_slice(i)] = sheaf.restrictions[(i, (i, j))]
        delta[rs, sheaf.vertex_slice(j)] = -sheaf.restrictions[(j, (i, j))]
    return delta


def coboundary_apply(sheaf: CellularSheaf, x) -> Cochain:
    """Apply the coboundary edge-by-edge without assembling the matrix."""
    vec = as_vertex_vector(sheaf, x)
    blocks = []
    for i, j in sheaf.graph.edges:
        e = (i, j)
        xi = vec[sheaf.vertex_slice(i)]
        xj = vec[sheaf.vertex_slice(j)]
        blocks.append(sheaf.restrictions[(i, e)] @ xi - sheaf.restrictions[(j, e)] @ xj)
    if not blocks:
        return Cochain(sheaf, 1, ())
    return Cochain(sheaf, 1, tuple(blocks))


def sheaf_laplacian(sheaf: CellularSheaf, sparse: bool | None = None):
    """Assemble the sheaf Laplacian blockwise.

    Diagonal block i: sum over incident edges of ``F_[i|e]^T F_[i|e]``;
    off-diagonal block (i, j) on an edge: ``-F_[i|e]^T F_[j|e]``.  Equals the
    Gram matrix of the coboundary to round-off.
    """
    n = sheaf.total_vertex_dim
    if _want_sparse(sheaf, sparse):
        delta = coboundary(sheaf, sparse=True)
        return sp.csr_array(delta.T @ delta)
    lap = np.zeros((n, n))
    for i, j in sheaf.graph.edges:
        e = (i, j)
        fi = sheaf.restrictions[(i, e)]
        fj = sheaf.restrictions[(j, e)]
        si, sj = sheaf.vertex_slice(i), sheaf.vertex_slice(j)
        lap[si, si] += fi.T @ fi
        lap[sj, sj] += fj.T @ fj
        coupling = fi.T @ fj
        lap[si, sj] -= coupling
        lap[sj, si] -= coupling.T
    return lap


def laplacian_apply_local(sheaf: CellularSheaf, x, i: int) -> np.ndarray:
    """Vertex block i of ``L x`` using only ``x_i`` and neighbor blocks.

    This is the vertexwise form
    ``sum_j F_[i|ij]^T (F_[i|ij] x_i - F_[j|ij] x_j)`` and is the quantity a
    decentralized node can evaluate from local measurements.
    """
    if not 0 <= i < sheaf.graph.vertex_count:
        raise ValueError(f"unknown vertex {i}")
    vec = as_vertex_vector(sheaf, x)
    xi = vec[sheaf.vertex_slice(i)]
    out = np.zeros(sheaf.vertex_dims[i])
    for j in sheaf.graph.neighbors(i):
        e = normalize_edge((i, j))
        fi = sheaf.restrictions[(i, e)]
        fj = sheaf.restrictions[(j, e)]
        out += fi.T @ (fi @ xi - fj @ vec[sheaf.vertex_slice(j)])
    return out
