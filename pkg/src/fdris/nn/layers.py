"""Graph attention building blocks on top of the autodiff tensor.

All functions accept a leading batch axis: node-feature inputs may be
``(P, F)`` or ``(batch, P, F)``.  The adjacency matrix is a constant
``(P, P)`` binary array shared across the batch.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class DegenerateRowError(ValueError):
    """A node has an empty attention neighborhood, so its softmax row is undefined."""


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero entries with probability ``rate``, rescale the rest.

    ``rate`` 0 is the identity (same object, no mask drawn).  Callers apply
    this in train mode only.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if rate == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(mask)


def attention_logits(
    x_proj,
    attn_kernel,
    edge_attr: np.ndarray | None = None,
    edge_kernel=None,
) -> Tensor:
    """Pairwise pre-softmax attention scores.

    ``logits[i, j] = relu(a . concat(x_proj[i], x_proj[j]))``, evaluated for
    every ordered node pair.  The kernel ``a`` has length ``2F'``; its first
    half scores the source node, the second half the destination.  When an
    ``edge_kernel`` is given, the per-pair edge vector ``edge_attr[i, j]``
    contributes an additional inner product inside the relu.
    """
    x_proj = _as_tensor(x_proj)
    attn_kernel = _as_tensor(attn_kernel)
    feat = x_proj.shape[-1]
    if attn_kernel.shape != (2 * feat,):
        raise ValueError(
            f"attention kernel must have shape ({2 * feat},), got {attn_kernel.shape}"
        )
    src_scores = x_proj @ attn_kernel[:feat].reshape((feat, 1))      # (..., P, 1)
    dst_scores = x_proj @ attn_kernel[feat:].reshape((feat, 1))      # (..., P, 1)
    logits = src_scores + dst_scores.swapaxes(-1, -2)                # (..., P, P)
    if edge_kernel is not None:
        if edge_attr is None:
            raise ValueError("edge_kernel given without edge_attr")
        edge_kernel = _as_tensor(edge_kernel)
        if isinstance(edge_attr, Tensor):
            edge_attr = edge_attr.data
        edge = np.asarray(edge_attr, dtype=np.float64)
        p, span = edge.shape[0], edge.shape[-1]
        if edge.shape != (p, p, span) or edge_kernel.shape != (span,):
            raise ValueError("edge_attr must be (P, P, S) with a length-S edge_kernel")
        pair_scores = (Tensor(edge.reshape(p * p, span)) @ edge_kernel.reshape((span, 1)))
        logits = logits + pair_scores.reshape((p, p))
    return logits.relu()


def masked_softmax(logits, adjacency: np.ndarray, self_loops: bool = True) -> Tensor:
    """Row-wise softmax restricted to each node's neighborhood.

    Entries outside the neighborhood are exactly zero; each remaining row
    sums to one.  With ``self_loops`` the neighborhood of ``i`` includes
    ``i`` itself in addition to the adjacency.
    """
    logits = _as_tensor(logits)
    adjacency = np.asarray(adjacency)
    p = adjacency.shape[0]
    if adjacency.shape != (p, p) or logits.shape[-2:] != (p, p):
        raise ValueError("adjacency and logits disagree on the node count")
    mask = adjacency != 0
    if self_loops:
        mask = mask | np.eye(p, dtype=bool)
    empty = ~mask.any(axis=1)
    if empty.any():
        raise DegenerateRowError(f"nodes {np.flatnonzero(empty).tolist()} have no neighbors")

    mask_f = mask.astype(np.float64)
    # Shift by the per-row masked maximum (a constant) for a safe exp; the
    # shift also zeroes masked slots before exp so they cannot overflow.
    row_max = np.max(np.where(mask, logits.data, -np.inf), axis=-1, keepdims=True)
    shifted = (logits - Tensor(row_max)) * Tensor(mask_f)
    scores = shifted.exp() * Tensor(mask_f)
    return scores / scores.sum(axis=-1, keepdims=True)


def gat_layer(
    x,
    adjacency: np.ndarray,
    params,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    self_loops: bool = True,
    edge_attr: np.ndarray | None = None,
) -> Tensor:
    """One graph attention layer: project, attend over neighbors, add bias, relu.

    In train mode, dropout at ``params.dropout_rate`` is applied to the input
    features and to the normalized attention coefficients (two independent
    masks, drawn in that order).  ``edge_attr`` only enters the attention
    scores when the layer carries an edge kernel.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    x = _as_tensor(x)
    if x.shape[-1] != params.weight.shape[0]:
        raise ValueError(
            f"input features {x.shape[-1]} do not match weight rows {params.weight.shape[0]}"
        )
    train = mode == "train"
    if train:
        x = dropout(x, params.dropout_rate, rng)
    projected = x @ params.weight
    edge_kernel = getattr(params, "edge_kernel", None)
    logits = attention_logits(
        projected,
        params.attn_kernel,
        edge_attr=edge_attr if edge_kernel is not None else None,
        edge_kernel=edge_kernel,
    )
    alpha = masked_softmax(logits, adjacency, self_loops=self_loops)
    if train:
        alpha = dropout(alpha, params.dropout_rate, rng)
    return (alpha @ projected + params.bias).relu()


def global_attention_pool(x, params) -> Tensor:
    """Gated sum over nodes: ``sum_i sigmoid(x W1 + b1) * (x W2 + b2)``.

    Collapses the node axis, returning a single feature vector per graph.
    """
    x = _as_tensor(x)
    if x.shape[-1] != params.gate_weight.shape[0]:
        raise ValueError(
            f"input features {x.shape[-1]} do not match pool weight rows "
            f"{params.gate_weight.shape[0]}"
        )
    gate = (x @ params.gate_weight + params.gate_bias).sigmoid()
    value = x @ params.value_weight + params.value_bias
    return (gate * value).sum(axis=-2)
