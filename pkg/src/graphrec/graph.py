"""User-item bipartite interaction graph and its normalized propagation operator.

The graph is built once from a list of (user, item) interaction pairs and is
immutable afterwards. The propagation operator ``S`` is an (M+N) x (M+N)
sparse matrix whose only nonzero blocks are user->item and item->user; one
propagation step computes ``H + S @ H`` (self term plus normalized neighbor
aggregation).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

NORM_MODES = ("symmetric", "row")


class BipartiteGraph:
    """Immutable bipartite interaction graph over M users and N items.

    Attributes:
        num_users: M.
        num_items: N.
        user_items: list of M sorted int arrays, the items each user interacted with.
        item_users: list of N sorted int arrays, the users of each item.
        edges: (E, 2) int array of unique (user, item) pairs, lexicographically sorted.
        S: (M+N) x (M+N) CSR propagation operator (normalized adjacency, no self loops).
        norm_mode: "symmetric" (D^-1/2 A D^-1/2) or "row" (D^-1 A).
    """

    def __init__(self, num_users, num_items, user_items, item_users, edges, S, norm_mode):
        self.num_users = num_users
        self.num_items = num_items
        self.user_items = user_items
        self.item_users = item_users
        self.edges = edges
        self.S = S
        self.norm_mode = norm_mode

    @property
    def num_nodes(self):
        return self.num_users + self.num_items

    def __repr__(self):
        return (f"BipartiteGraph(M={self.num_users}, N={self.num_items}, "
                f"edges={len(self.edges)}, norm={self.norm_mode!r})")


def build_graph(interactions, num_users, num_items, norm_mode="symmetric"):
    """Build a :class:`BipartiteGraph` from (user, item) index pairs.

    Duplicate pairs are collapsed to a single edge. Under symmetric
    normalization each nonzero of ``S`` equals 1/sqrt(deg(u) * deg(v)); under
    row normalization each nonzero in the row of node v equals 1/deg(v).
    Rows of degree-zero nodes are all zero.

    Raises:
        ValueError: on an out-of-range pair, empty user/item set, or an
            unknown normalization mode.
    """
    if num_users <= 0 or num_items <= 0:
        raise ValueError(f"empty graph: num_users={num_users}, num_items={num_items}")
    if norm_mode not in NORM_MODES:
        raise ValueError(f"unknown norm_mode {norm_mode!r}, expected one of {NORM_MODES}")

    pairs = np.asarray(list(interactions), dtype=np.int64).reshape(-1, 2)
    if len(pairs):
        bad = ((pairs[:, 0] < 0) | (pairs[:, 0] >= num_users)
               | (pairs[:, 1] < 0) | (pairs[:, 1] >= num_items))
        if bad.any():
            u, i = pairs[np.argmax(bad)]
            raise ValueError(f"interaction ({u}, {i}) out of range for M={num_users}, N={num_items}")
        pairs = np.unique(pairs, axis=0)

    M, N = num_users, num_items
    R = sp.csr_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(M, N), dtype=np.float64
    )

    user_items = [R.indices[R.indptr[a]:R.indptr[a + 1]].copy() for a in range(M)]
    Rc = R.tocsc()
    item_users = [np.sort(Rc.indices[Rc.indptr[i]:Rc.indptr[i + 1]]) for i in range(N)]

    A = sp.bmat(
        [[None, R], [R.T, None]], format="csr", dtype=np.float64
    ) if len(pairs) else sp.csr_matrix((M + N, M + N), dtype=np.float64)

    deg = np.asarray(A.sum(axis=1)).ravel()
    if norm_mode == "symmetric":
        with np.errstate(divide="ignore"):
            d_inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
        D = sp.diags(d_inv_sqrt)
        S = (D @ A @ D).tocsr()
    else:
        with np.errstate(divide="ignore"):
            d_inv = np.where(deg > 0, 1.0 / deg, 0.0)
        S = (sp.diags(d_inv) @ A).tocsr()

    return BipartiteGraph(M, N, user_items, item_users, pairs, S, norm_mode)


def propagate(graph, H):
    """One propagation step: ``H + S @ H``.

    ``H`` must have M+N rows. Degree-zero nodes pass their row through
    unchanged. The output is freshly allocated.
    """
    H = np.asarray(H)
    if H.shape[0] != graph.num_nodes:
        raise ValueError(
            f"H has {H.shape[0]} rows, expected M+N={graph.num_nodes}"
        )
    return H + graph.S @ H
