"""Model parameters and the linear-convolution forward pass.

Per-node input is the concatenation of a free embedding (dim d) and a
projected attribute vector (dim d_a). K propagation layers apply
``H_{k+1} = (H_k + S @ H_k) @ W_k`` with no nonlinearity anywhere. Rating
scores are inner products of final user/item embeddings; attribute heads map
final embeddings to per-field probabilities (softmax per single-label field,
elementwise logistic per multi-label dimension).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import propagate


@dataclass
class ModelParams:
    """All trainable matrices.

    P: (M, d) user free embeddings; Q: (N, d) item free embeddings.
    W_u: (d_x, d_a), W_v: (d_y, d_a) attribute projections.
    W: list of K ((d+d_a), (d+d_a)) per-layer propagation weights.
    W_x: ((d+d_a), d_x), W_y: ((d+d_a), d_y) attribute inference heads.
    """

    P: np.ndarray
    Q: np.ndarray
    W_u: np.ndarray
    W_v: np.ndarray
    W: list
    W_x: np.ndarray
    W_y: np.ndarray

    def as_dict(self):
        d = {"P": self.P, "Q": self.Q, "W_u": self.W_u, "W_v": self.W_v,
             "W_x": self.W_x, "W_y": self.W_y}
        for k, Wk in enumerate(self.W):
            d[f"W_{k + 1}"] = Wk
        return d

    @classmethod
    def from_dict(cls, d, K):
        return cls(P=d["P"], Q=d["Q"], W_u=d["W_u"], W_v=d["W_v"],
                   W=[d[f"W_{k + 1}"] for k in range(K)],
                   W_x=d["W_x"], W_y=d["W_y"])

    def copy(self):
        return ModelParams(self.P.copy(), self.Q.copy(), self.W_u.copy(),
                           self.W_v.copy(), [w.copy() for w in self.W],
                           self.W_x.copy(), self.W_y.copy())

    def check_finite(self):
        for name, arr in self.as_dict().items():
            if not np.isfinite(arr).all():
                raise FloatingPointError(f"non-finite values in parameter {name}")

    @property
    def num_layers(self):
        return len(self.W)


def init_params(num_users, num_items, d, d_a, d_x, d_y, K, seed, init_std=0.01):
    """Gaussian(0, init_std) initialization; layer weights get an identity offset."""
    rng = np.random.default_rng(seed)
    D = d + d_a
    return ModelParams(
        P=rng.normal(0.0, init_std, (num_users, d)),
        Q=rng.normal(0.0, init_std, (num_items, d)),
        W_u=rng.normal(0.0, init_std, (d_x, d_a)),
        W_v=rng.normal(0.0, init_std, (d_y, d_a)),
        W=[np.eye(D) + rng.normal(0.0, init_std, (D, D)) for _ in range(K)],
        W_x=rng.normal(0.0, init_std, (D, d_x)),
        W_y=rng.normal(0.0, init_std, (D, d_y)),
    )


@dataclass
class ForwardTrace:
    """Cached intermediates of one forward pass (inputs to backprop).

    h0: fused input ((M+N) x (d+d_a)); zs[k] = h_k + S @ h_k (pre-weight);
    hs[k] = zs[k] @ W_k (post-weight). hs[-1] (or h0 when K=0) holds the
    final embeddings.
    """

    h0: np.ndarray
    zs: list
    hs: list
    num_users: int

    @property
    def final(self):
        return self.hs[-1] if self.hs else self.h0

    @property
    def user_embeddings(self):
        return self.final[: self.num_users]

    @property
    def item_embeddings(self):
        return self.final[self.num_users:]


def fuse(params, X, Y):
    """Concatenate free embeddings with projected attributes: rows [p_a, x_a W_u]."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape != (params.P.shape[0], params.W_u.shape[0]):
        raise ValueError(f"user attribute matrix has shape {X.shape}, "
                         f"expected {(params.P.shape[0], params.W_u.shape[0])}")
    if Y.shape != (params.Q.shape[0], params.W_v.shape[0]):
        raise ValueError(f"item attribute matrix has shape {Y.shape}, "
                         f"expected {(params.Q.shape[0], params.W_v.shape[0])}")
    users = np.hstack([params.P, X @ params.W_u])
    items = np.hstack([params.Q, Y @ params.W_v])
    return np.vstack([users, items])


def forward(params, graph, X, Y):
    """Run the fused input through all K propagation layers; cache intermediates."""
    h = fuse(params, X, Y)
    trace = ForwardTrace(h0=h, zs=[], hs=[], num_users=graph.num_users)
    for k, Wk in enumerate(params.W):
        z = propagate(graph, h)
        h = z @ Wk
        if not np.isfinite(h).all():
            raise FloatingPointError(f"non-finite activations after layer {k + 1}")
        trace.zs.append(z)
        trace.hs.append(h)
    return trace


def predict_rating(trace, a, i):
    """Inner-product preference score of user a for item i."""
    if not 0 <= a < trace.num_users:
        raise IndexError(f"user index {a} out of range")
    V = trace.item_embeddings
    if not 0 <= i < V.shape[0]:
        raise IndexError(f"item index {i} out of range")
    return float(trace.user_embeddings[a] @ V[i])


def score_all(trace):
    """Full (M x N) score matrix U @ V^T."""
    return trace.user_embeddings @ trace.item_embeddings.T


def normalize_logits(logits, schema):
    """Per-field head normalization: softmax on single-label blocks, logistic
    on multi-label blocks. Output entries lie in (0, 1)."""
    out = np.empty_like(logits)
    for f in schema:
        block = logits[:, f.block]
        if f.kind == "single":
            shifted = block - block.max(axis=1, keepdims=True)
            e = np.exp(shifted)
            out[:, f.block] = e / e.sum(axis=1, keepdims=True)
        else:
            out[:, f.block] = 1.0 / (1.0 + np.exp(-block))
    return out


def infer_attributes(trace, params, side, schema):
    """Predicted attribute probability matrix for one side ("user" or "item")."""
    if side == "user":
        emb, head = trace.user_embeddings, params.W_x
    elif side == "item":
        emb, head = trace.item_embeddings, params.W_y
    else:
        raise ValueError(f"side must be 'user' or 'item', got {side!r}")
    if head.shape[1] != schema.total_dim:
        raise ValueError(
            f"head width {head.shape[1]} does not match schema dim {schema.total_dim}"
        )
    return normalize_logits(emb @ head, schema)
