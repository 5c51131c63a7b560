"""Strength of connection, CF splitting, and interpolation sparsity
patterns.

The strength measure is the symmetric scaling |a_ij| / sqrt(a_ii a_jj),
which stays in [0, 1] for SPD matrices and keeps the graph symmetric
for both benchmark problems.  The splitting is a greedy first pass:
the vertex adjacent to the most F points goes coarse next (ties to the
lowest index), and its strong neighbors become fine.  Starting from an
all-zero measure this sweeps a frontier outward from vertex 0.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

__all__ = [
    "StrengthGraph",
    "BlockSplit",
    "SparsityPattern",
    "strength_graph",
    "cf_split",
    "pattern_distance_k",
]


@dataclass(frozen=True)
class StrengthGraph:
    """Symmetric strength adjacency (values in [0, 1], no diagonal)."""

    adjacency: sparse.csr_matrix
    theta_strength: float


@dataclass(frozen=True)
class BlockSplit:
    """A CF partition of 0..n-1.

    c_points and f_points are sorted index arrays; is_c marks the side
    of each index and `local` gives its position within its side.  The
    split induces the block views A_ff, A_fc, A_cf, A_cc.
    """

    c_points: np.ndarray
    f_points: np.ndarray
    is_c: np.ndarray
    local: np.ndarray

    @classmethod
    def from_c_points(cls, n, c_points):
        c = np.unique(np.asarray(c_points, dtype=np.int64))
        if len(c) and (c.min() < 0 or c.max() >= n):
            raise ValueError("C-point index out of range")
        is_c = np.zeros(n, dtype=bool)
        is_c[c] = True
        f = np.flatnonzero(~is_c)
        local = np.empty(n, dtype=np.int64)
        local[c] = np.arange(len(c))
        local[f] = np.arange(len(f))
        return cls(c, f, is_c, local)

    @property
    def n(self):
        return len(self.is_c)

    @property
    def n_c(self):
        return len(self.c_points)

    @property
    def n_f(self):
        return len(self.f_points)

    def blocks(self, A):
        """The four block views of A in this splitting's local orderings."""
        f, c = self.f_points, self.c_points
        Af = A[f]
        Ac = A[c]
        return (Af[:, f].tocsr(), Af[:, c].tocsr(),
                Ac[:, f].tocsr(), Ac[:, c].tocsr())

    def cf_permutation(self):
        """Original indices in CF order (all F points, then all C points)."""
        return np.concatenate([self.f_points, self.c_points])


@dataclass(frozen=True)
class SparsityPattern:
    """Allowed (F-local, C-local) positions of the interpolation weights,
    stored row-wise like a PatternMatrix layout.

    empty_f_rows flags F points that reach no C point within the given
    graph distance; callers decide whether that is an error.
    """

    nf: int
    nc: int
    indptr: np.ndarray
    cols: np.ndarray
    degree: int
    empty_f_rows: np.ndarray

    @property
    def shape(self):
        return (self.nf, self.nc)

    @property
    def nnz(self):
        return len(self.cols)


def strength_graph(A, theta_strength):
    """Symmetrically scaled strength-of-connection graph.

    Edge (i, j) survives iff
        |a_ij| / sqrt(a_ii a_jj) >= theta * max_k |a_ik| / sqrt(a_ii a_kk),
    and the result is symmetrized by union.
    """
    if not (0.0 <= theta_strength <= 1.0):
        raise ValueError("theta_strength must lie in [0, 1]")
    A = A.tocsr()
    n = A.shape[0]
    d = A.diagonal()
    if np.any(d <= 0.0):
        raise ValueError("strength measure requires a positive diagonal")

    C = A.tocoo()
    off = C.row != C.col
    rows, cols = C.row[off], C.col[off]
    vals = np.abs(C.data[off]) / np.sqrt(d[rows] * d[cols])
    keep0 = vals > 0.0
    rows, cols, vals = rows[keep0], cols[keep0], vals[keep0]

    row_max = np.zeros(n)
    np.maximum.at(row_max, rows, vals)
    kept = vals >= theta_strength * row_max[rows]

    S = sparse.coo_matrix((vals[kept], (rows[kept], cols[kept])), shape=(n, n)).tocsr()
    # union symmetrization; overlapping entries carry the same scaled value
    S = S.maximum(S.T).tocsr()
    S.sort_indices()
    return StrengthGraph(S, theta_strength)


def cf_split(S):
    """Greedy first-pass CF splitting of a strength graph.

    Repeatedly picks the unassigned vertex adjacent to the most strong
    F points (ties to the lowest index), makes it C and its strong
    neighbors F.  Vertices with no strong edges become C points.
    """
    adj = S.adjacency
    n = adj.shape[0]
    indptr, indices = adj.indptr, adj.indices
    degree = np.diff(indptr)

    state = np.zeros(n, dtype=np.int8)  # 0 unassigned, 1 C, -1 F
    isolated = degree == 0
    state[isolated] = 1

    measure = np.zeros(n, dtype=np.int64)
    measure[state != 0] = -1
    remaining = int(np.sum(state == 0))
    while remaining > 0:
        v = int(np.argmax(measure))  # argmax takes the lowest tied index
        state[v] = 1
        measure[v] = -1
        remaining -= 1
        for u in indices[indptr[v]:indptr[v + 1]]:
            if state[u] == 0:
                state[u] = -1
                measure[u] = -1
                remaining -= 1
                nbrs = indices[indptr[u]:indptr[u + 1]]
                live = nbrs[state[nbrs] == 0]
                measure[live] += 1

    return BlockSplit.from_c_points(n, np.flatnonzero(state == 1))


def pattern_distance_k(S, split, k):
    """Interpolation pattern reaching C points within k strength edges.

    (i, j) is allowed iff F point i is reachable from C point j by a
    path of at most k edges in the strength graph.
    """
    if k < 1:
        raise ValueError("pattern degree must be at least 1")
    adj = (S.adjacency != 0).astype(np.int8).tocsr()
    reach = adj.copy()
    acc = adj.copy()
    for _ in range(k - 1):
        reach = ((reach @ adj) != 0).astype(np.int8).tocsr()
        acc = ((acc + reach) != 0).astype(np.int8).tocsr()

    block = acc[split.f_points][:, split.c_points].tocsr()
    block.sort_indices()
    indptr = block.indptr.astype(np.int64)
    cols = block.indices.astype(np.int64)
    empty = np.flatnonzero(np.diff(indptr) == 0)
    return SparsityPattern(split.n_f, split.n_c, indptr, cols, k, empty)
