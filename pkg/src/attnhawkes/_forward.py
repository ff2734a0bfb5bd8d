"""Vectorized forward and backward passes over one sequence.

Everything here works on a per-sequence basis: the caller batches by
summing objective values and gradient arrays.  The forward pass produces
pre-activations for the event log-terms and for every grid point and type;
the backward pass turns cotangents of those pre-activations into parameter
gradients.  Gradients are exact for the discretized objective.

Index conventions: ``L`` events, ``N`` grid evaluation nodes, ``M``
embedding dim, ``K`` types, values of width ``M_V``.  ``h[n]`` is the
history size at node ``n``: grid points that coincide with an event carry
two nodes, one excluding the event (left limit) and one including it
(right limit), weighted by the half-intervals on the matching sides.
"""

from __future__ import annotations

import math

import numpy as np

from .domain import EventSequence, IntegrationGrid
from .errors import DegenerateAnchor
from .model import (
    VARIANT_EXTRAPOLATION,
    ModelConfig,
    ModelParams,
    SCORE_FLUSH,
    temporal_embedding,
)

__all__ = ["SequenceCache", "Forward", "forward", "backward", "event_pre_all_types"]


class SequenceCache:
    """Parameter-independent arrays for one (sequence, grid) pair."""

    def __init__(self, cfg: ModelConfig, seq: EventSequence, grid: IntegrationGrid | None = None):
        self.seq = seq
        self.times = seq.times
        self.types = seq.types
        length = len(seq)
        self.length = length
        self.z_ev = temporal_embedding(self.times, cfg.embed_dim)  # (L, M)
        self.onehot = np.zeros((length, cfg.num_types))
        if length:
            self.onehot[np.arange(length), self.types] = 1.0
        self.causal = np.tril(np.ones((length, length), dtype=bool), -1)
        if cfg.variant == VARIANT_EXTRAPOLATION and length and self.times[0] == 0.0:
            raise DegenerateAnchor("first event at t=0 cannot anchor extrapolation")
        if cfg.variant == VARIANT_EXTRAPOLATION:
            self.rel_elapsed_ev = np.zeros(length)
            if length > 1:
                self.rel_elapsed_ev[1:] = (self.times[1:] - self.times[:-1]) / self.times[:-1]
        if grid is None:
            self.grid = None
            return
        self.grid = grid
        pts = grid.times
        ev_pos = np.searchsorted(pts, self.times)
        if length and not np.array_equal(pts[ev_pos], self.times):
            raise ValueError("grid does not contain every event time of the sequence")
        dg = np.diff(pts)
        left_half = np.zeros(len(pts))
        right_half = np.zeros(len(pts))
        if len(dg):
            left_half[1:] = dg / 2.0
            right_half[:-1] = dg / 2.0
        is_ev_pt = np.zeros(len(pts), dtype=bool)
        is_ev_pt[ev_pos] = True
        # The intensity jumps at events, so each event grid point is
        # evaluated twice: a left-limit copy closes the segment before it
        # and a right-limit copy opens the one after.  Every segment's
        # integrand is then smooth end to end and the trapezoid rule keeps
        # its second-order convergence across event boundaries.
        g = np.concatenate([pts, pts[is_ev_pt]])
        self.g = g
        self.h = np.concatenate(
            [
                np.searchsorted(self.times, pts, side="left"),
                np.searchsorted(self.times, pts[is_ev_pt], side="right"),
            ]
        )
        self.quad = np.concatenate(
            [np.where(is_ev_pt, left_half, left_half + right_half), right_half[is_ev_pt]]
        )
        self.z_gr = temporal_embedding(g, cfg.embed_dim)  # (N, M)
        if cfg.variant == VARIANT_EXTRAPOLATION:
            anchored = self.h > 0
            a = np.maximum(self.h - 1, 0)
            rel = np.zeros(len(g))
            if length:
                t_a = self.times[a]
                rel[anchored] = (g[anchored] - t_a[anchored]) / t_a[anchored]
            self.anchor = a
            self.anchored = anchored
            self.rel_elapsed_gr = rel


def _softmax_rows(raw: np.ndarray, mask: np.ndarray):
    """Row softmax under a boolean mask; fully masked rows give zero rows."""
    neg = np.where(mask, raw, -np.inf)
    mx = neg.max(axis=1, keepdims=True, initial=-np.inf)
    d = neg - np.where(np.isfinite(mx), mx, 0.0)
    w = np.exp(d)
    w[d < -SCORE_FLUSH] = 0.0
    norm = w.sum(axis=1, keepdims=True)
    return w / np.where(norm > 0.0, norm, 1.0)


class Forward:
    """Bag of forward-pass arrays kept for the backward pass."""

    __slots__ = (
        "x_ev", "gram", "values", "value_read", "attn_ev", "pre_ev",
        "attn_gr", "pre_gr", "attn_out", "mlp_pre", "mlp_hidden", "hidden_read",
    )


def forward(params: ModelParams, cfg: ModelConfig, cache: SequenceCache) -> Forward:
    length, m = cache.length, cfg.embed_dim
    scale = math.sqrt(2.0 * m)
    c = cache.types
    f = Forward()
    f.x_ev = np.concatenate([cache.z_ev, params.type_embed[:, c].T], axis=1)  # (L, 2M)
    f.gram = params.type_embed.T @ params.type_embed  # (K, K)
    f.values = f.x_ev @ params.value_proj  # (L, M_V)
    f.value_read = f.values @ params.readout.T  # (L, K)
    raw_ev = (cache.z_ev @ cache.z_ev.T + f.gram[c[:, None], c[None, :]]) / scale
    f.attn_ev = _softmax_rows(raw_ev, cache.causal) if length else np.zeros((0, 0))

    if cfg.variant == VARIANT_EXTRAPOLATION:
        f.attn_out = f.attn_ev @ f.values  # (L, M_V)
        f.mlp_pre = f.attn_out @ params.mlp_w1 + params.mlp_b1  # (L, M_H)
        f.mlp_hidden = np.maximum(f.mlp_pre, 0.0)
        hidden = f.mlp_hidden @ params.mlp_w2 + params.mlp_b2  # (L, M)
        f.hidden_read = hidden @ params.extrap_readout.T  # (L, K)
        pre_ev = params.bias[c].copy()
        if length > 1:
            pre_ev[1:] += (
                params.extrap_coef[c[1:]] * cache.rel_elapsed_ev[1:]
                + f.hidden_read[np.arange(length - 1), c[1:]]
            )
        f.pre_ev = pre_ev
        if cache.grid is not None:
            n = len(cache.g)
            pre_gr = np.tile(params.bias, (n, 1))
            if length:
                a, on = cache.anchor, cache.anchored
                pre_gr[on] += (
                    params.extrap_coef[None, :] * cache.rel_elapsed_gr[on, None]
                    + f.hidden_read[a[on]]
                )
            f.pre_gr = pre_gr
        else:
            f.pre_gr = None
        return f

    aggregated = f.attn_ev @ f.value_read  # (L, K)
    pre_ev = aggregated[np.arange(length), c] + params.bias[c] if length else np.zeros(0)
    if cfg.skip_connection and length:
        pre_ev = pre_ev + np.einsum("ij,ij->i", f.x_ev, params.readout[c])
    f.pre_ev = pre_ev

    if cache.grid is not None:
        n = len(cache.g)
        raw_zt = cache.z_gr @ cache.z_ev.T  # (N, L)
        col_mask = np.arange(length)[None, :] < cache.h[:, None]
        pre_gr = np.empty((n, cfg.num_types))
        f.attn_gr = []
        for k in range(cfg.num_types):
            raw_k = (raw_zt + f.gram[k, c][None, :]) / scale
            a_k = _softmax_rows(raw_k, col_mask) if length else np.zeros((n, 0))
            f.attn_gr.append(a_k)
            pre_gr[:, k] = a_k @ f.value_read[:, k] + params.bias[k]
            if cfg.skip_connection:
                pre_gr[:, k] += cache.z_gr @ params.readout[k, :m] + (
                    params.type_embed[:, k] @ params.readout[k, m:]
                )
        f.pre_gr = pre_gr
    else:
        f.attn_gr = None
        f.pre_gr = None
    return f


def _softmax_backward(attn, d_attn):
    inner = (attn * d_attn).sum(axis=1, keepdims=True)
    return attn * (d_attn - inner)


def backward(
    params: ModelParams,
    cfg: ModelConfig,
    cache: SequenceCache,
    f: Forward,
    d_pre_ev: np.ndarray,
    d_pre_gr: np.ndarray | None,
) -> dict[str, np.ndarray]:
    """Parameter gradients given cotangents of the pre-activations."""
    length, m, k_types = cache.length, cfg.embed_dim, cfg.num_types
    scale = math.sqrt(2.0 * m)
    c = cache.types
    idx = np.arange(length)
    grads = {
        "type_embed": np.zeros_like(params.type_embed),
        "value_proj": np.zeros_like(params.value_proj),
        "readout": np.zeros_like(params.readout),
        "bias": np.zeros_like(params.bias),
    }
    d_gram = np.zeros((k_types, k_types))
    d_values = np.zeros((length, cfg.value_dim))
    d_attn_ev = np.zeros((length, length))

    grads["bias"] += np.bincount(c, weights=d_pre_ev, minlength=k_types)
    if d_pre_gr is not None:
        grads["bias"] += d_pre_gr.sum(axis=0)

    if cfg.variant == VARIANT_EXTRAPOLATION:
        for name in ("mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2", "extrap_coef", "extrap_readout"):
            grads[name] = np.zeros_like(getattr(params, name))
        d_hidden_read = np.zeros((length, k_types))
        if length > 1:
            rel = cache.rel_elapsed_ev[1:]
            grads["extrap_coef"] += np.bincount(
                c[1:], weights=d_pre_ev[1:] * rel, minlength=k_types
            )
            np.add.at(d_hidden_read, (idx[:-1], c[1:]), d_pre_ev[1:])
        if d_pre_gr is not None and length:
            on = cache.anchored
            grads["extrap_coef"] += cache.rel_elapsed_gr[on] @ d_pre_gr[on]
            np.add.at(d_hidden_read, cache.anchor[on], d_pre_gr[on])
        hidden = f.mlp_hidden @ params.mlp_w2 + params.mlp_b2
        grads["extrap_readout"] += d_hidden_read.T @ hidden
        d_hidden = d_hidden_read @ params.extrap_readout  # (L, M)
        grads["mlp_b2"] += d_hidden.sum(axis=0)
        grads["mlp_w2"] += f.mlp_hidden.T @ d_hidden
        d_mlp_pre = (d_hidden @ params.mlp_w2.T) * (f.mlp_pre > 0.0)
        grads["mlp_b1"] += d_mlp_pre.sum(axis=0)
        grads["mlp_w1"] += f.attn_out.T @ d_mlp_pre
        d_attn_out = d_mlp_pre @ params.mlp_w1.T  # (L, M_V)
        d_attn_ev += d_attn_out @ f.values.T
        d_values += f.attn_ev.T @ d_attn_out
    else:
        # event queries: pre[i] = sum_j A[i, j] value_read[j, c_i] + bias
        d_value_read = np.zeros((length, k_types))
        if length:
            weighted = cache.onehot * d_pre_ev[:, None]  # (L, K)
            d_attn_ev += d_pre_ev[:, None] * f.value_read.T[c]
            d_value_read += f.attn_ev.T @ weighted
            if cfg.skip_connection:
                grads["readout"] += weighted.T @ f.x_ev
                d_x_skip = d_pre_ev[:, None] * params.readout[c]
                grads["type_embed"] += d_x_skip[:, m:].T @ cache.onehot
        if d_pre_gr is not None:
            for k in range(k_types):
                if length:
                    a_k = f.attn_gr[k]
                    d_a_k = d_pre_gr[:, k][:, None] * f.value_read[:, k][None, :]
                    d_value_read[:, k] += a_k.T @ d_pre_gr[:, k]
                    d_raw_k = _softmax_backward(a_k, d_a_k) / scale
                    d_gram[k] += np.bincount(c, weights=d_raw_k.sum(axis=0), minlength=k_types)
                if cfg.skip_connection:
                    s = d_pre_gr[:, k]
                    grads["readout"][k, :m] += s @ cache.z_gr
                    grads["readout"][k, m:] += s.sum() * params.type_embed[:, k]
                    grads["type_embed"][:, k] += s.sum() * params.readout[k, m:]
        grads["readout"] += d_value_read.T @ f.values
        # value_read = values @ readout.T, so cotangents flow straight back
        d_values += d_value_read @ params.readout

    if length:
        d_raw_ev = _softmax_backward(f.attn_ev, d_attn_ev) / scale
        d_gram += cache.onehot.T @ d_raw_ev @ cache.onehot
        grads["value_proj"] += f.x_ev.T @ d_values
        d_x = d_values @ params.value_proj.T  # (L, 2M)
        grads["type_embed"] += d_x[:, m:].T @ cache.onehot
    grads["type_embed"] += params.type_embed @ (d_gram + d_gram.T)
    return grads


def event_pre_all_types(params: ModelParams, cfg: ModelConfig, cache: SequenceCache) -> np.ndarray:
    """Pre-activations (L, K) treating each event time as a query of every type."""
    length, m = cache.length, cfg.embed_dim
    if length == 0:
        return np.zeros((0, cfg.num_types))
    scale = math.sqrt(2.0 * m)
    c = cache.types
    x_ev = np.concatenate([cache.z_ev, params.type_embed[:, c].T], axis=1)
    gram = params.type_embed.T @ params.type_embed
    values = x_ev @ params.value_proj
    value_read = values @ params.readout.T  # (L, K)
    if cfg.variant == VARIANT_EXTRAPOLATION:
        attn = _softmax_rows(
            (cache.z_ev @ cache.z_ev.T + gram[c[:, None], c[None, :]]) / scale, cache.causal
        )
        mlp_hidden = np.maximum((attn @ values) @ params.mlp_w1 + params.mlp_b1, 0.0)
        hidden_read = (mlp_hidden @ params.mlp_w2 + params.mlp_b2) @ params.extrap_readout.T
        pre = np.tile(params.bias, (length, 1))
        if length > 1:
            pre[1:] += (
                params.extrap_coef[None, :] * cache.rel_elapsed_ev[1:, None]
                + hidden_read[:-1]
            )
        return pre
    zz = cache.z_ev @ cache.z_ev.T
    pre = np.empty((length, cfg.num_types))
    for k in range(cfg.num_types):
        a_k = _softmax_rows((zz + gram[k, c][None, :]) / scale, cache.causal)
        pre[:, k] = a_k @ value_read[:, k] + params.bias[k]
        if cfg.skip_connection:
            pre[:, k] += cache.z_ev @ params.readout[k, :m] + (
                params.type_embed[:, k] @ params.readout[k, m:]
            )
    return pre
