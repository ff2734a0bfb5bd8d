"""Attention-based intensity models over event sequences.

The intensity of type ``k`` at time ``t`` attends over the embedded history
with the query and key roles played by the event embeddings themselves; only
the value side carries a learned projection.  Event embeddings concatenate a
sinusoidal encoding of time with a learned type embedding, which makes the
attention score split exactly into a shift-invariant temporal part and a
type-pair part.

Two variants share the parameter container: the attention variant evaluates
fresh attention at every query time, while the extrapolation variant reuses
the attention output of the most recent event and extrapolates linearly in
relative elapsed time through a small MLP head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .domain import EventSequence, IntegrationGrid
from .errors import (
    DegenerateAnchor,
    NonCausalHistory,
    NoPriorEvent,
    OddDimension,
    OutOfWindow,
)
from .numerics import softplus

__all__ = [
    "VARIANT_ATTENTION",
    "VARIANT_EXTRAPOLATION",
    "ModelConfig",
    "ModelParams",
    "AttentionMap",
    "param_fields",
    "param_shapes",
    "zeros_params",
    "flatten_params",
    "unflatten_params",
    "temporal_embedding",
    "type_embedding",
    "event_embedding",
    "attention_weights",
    "intensity_at",
    "intensity_all_types",
    "trigger_contribution",
    "ex_intensity_at",
    "attention_matrix",
]

VARIANT_ATTENTION = "ithp"
VARIANT_EXTRAPOLATION = "ex-ithp"

# Attention scores this far below the row maximum flush to exactly zero
# weight; exp(-50) is below any tolerance used downstream.
SCORE_FLUSH = 50.0


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters shared by both variants."""

    num_types: int
    embed_dim: int  # M, must be even
    value_dim: int | None = None  # defaults to 2 * embed_dim
    hidden_dim: int | None = None  # extrapolation MLP width, defaults to embed_dim
    variant: str = VARIANT_ATTENTION
    grid_subdivisions: int = 10
    skip_connection: bool = False

    def __post_init__(self):
        if self.embed_dim < 2 or self.embed_dim % 2:
            raise OddDimension(f"embed_dim must be even and >= 2, got {self.embed_dim}")
        if self.num_types < 1:
            raise ValueError(f"num_types must be at least 1, got {self.num_types}")
        if self.variant not in (VARIANT_ATTENTION, VARIANT_EXTRAPOLATION):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.value_dim is None:
            object.__setattr__(self, "value_dim", 2 * self.embed_dim)
        if self.value_dim < 1:
            raise ValueError(f"value_dim must be positive, got {self.value_dim}")
        if self.hidden_dim is None:
            object.__setattr__(self, "hidden_dim", self.embed_dim)
        if self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be positive, got {self.hidden_dim}")
        if self.grid_subdivisions < 1:
            raise ValueError(
                f"grid_subdivisions must be at least 1, got {self.grid_subdivisions}"
            )
        if self.skip_connection and self.value_dim != 2 * self.embed_dim:
            raise ValueError("skip_connection requires value_dim == 2 * embed_dim")


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Learnable parameters.  MLP and extrapolation fields are only present
    for the extrapolation variant."""

    type_embed: np.ndarray  # (M, K)
    value_proj: np.ndarray  # (2M, M_V)
    readout: np.ndarray  # (K, M_V)
    bias: np.ndarray  # (K,)
    mlp_w1: np.ndarray | None = None  # (M_V, M_H)
    mlp_b1: np.ndarray | None = None  # (M_H,)
    mlp_w2: np.ndarray | None = None  # (M_H, M)
    mlp_b2: np.ndarray | None = None  # (M,)
    extrap_coef: np.ndarray | None = None  # (K,)
    extrap_readout: np.ndarray | None = None  # (K, M)

    def __post_init__(self):
        for name in PARAM_FIELDS_ALL:
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, np.asarray(value, dtype=np.float64))


PARAM_FIELDS_BASE = ("type_embed", "value_proj", "readout", "bias")
PARAM_FIELDS_EXTRA = (
    "mlp_w1",
    "mlp_b1",
    "mlp_w2",
    "mlp_b2",
    "extrap_coef",
    "extrap_readout",
)
PARAM_FIELDS_ALL = PARAM_FIELDS_BASE + PARAM_FIELDS_EXTRA


def param_fields(cfg: ModelConfig) -> tuple[str, ...]:
    if cfg.variant == VARIANT_EXTRAPOLATION:
        return PARAM_FIELDS_ALL
    return PARAM_FIELDS_BASE


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    m, k = cfg.embed_dim, cfg.num_types
    mv, mh = cfg.value_dim, cfg.hidden_dim
    shapes = {
        "type_embed": (m, k),
        "value_proj": (2 * m, mv),
        "readout": (k, mv),
        "bias": (k,),
    }
    if cfg.variant == VARIANT_EXTRAPOLATION:
        shapes.update(
            mlp_w1=(mv, mh),
            mlp_b1=(mh,),
            mlp_w2=(mh, m),
            mlp_b2=(m,),
            extrap_coef=(k,),
            extrap_readout=(k, m),
        )
    return shapes


def validate_params(params: ModelParams, cfg: ModelConfig) -> None:
    for name, shape in param_shapes(cfg).items():
        value = getattr(params, name)
        if value is None:
            raise ValueError(f"missing parameter {name} for variant {cfg.variant}")
        if value.shape != shape:
            raise ValueError(f"{name} has shape {value.shape}, expected {shape}")


def zeros_params(cfg: ModelConfig) -> ModelParams:
    return ModelParams(**{n: np.zeros(s) for n, s in param_shapes(cfg).items()})


def flatten_params(params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    return np.concatenate(
        [np.asarray(getattr(params, n), dtype=np.float64).ravel() for n in param_fields(cfg)]
    )


def unflatten_params(vec: np.ndarray, cfg: ModelConfig) -> ModelParams:
    shapes = param_shapes(cfg)
    out, pos = {}, 0
    for name in param_fields(cfg):
        size = int(np.prod(shapes[name])) if shapes[name] else 1
        out[name] = np.array(vec[pos : pos + size], dtype=np.float64).reshape(shapes[name])
        pos += size
    if pos != vec.size:
        raise ValueError(f"vector has {vec.size} entries, parameters need {pos}")
    return ModelParams(**out)


def perturb_param(params: ModelParams, name: str, index: tuple[int, ...], delta: float) -> ModelParams:
    """Copy ``params`` with one scalar entry shifted by ``delta``."""
    arr = np.array(getattr(params, name), dtype=np.float64)
    arr[index] += delta
    return replace(params, **{name: arr})


def temporal_embedding(t, embed_dim: int) -> np.ndarray:
    """Sinusoidal time encoding with M/2 frequency pairs.

    Entry ``2m`` is ``sin(t * w_m)`` and entry ``2m + 1`` is ``cos(t * w_m)``
    with ``w_m = 10000 ** (-2m / M)``, so the squared norm is always M/2 and
    inner products depend on time differences only.
    """
    m = int(embed_dim)
    if m < 2 or m % 2:
        raise OddDimension(f"embed_dim must be even and >= 2, got {m}")
    t = np.asarray(t, dtype=np.float64)
    freq = np.power(10000.0, -2.0 * np.arange(m // 2) / m)
    args = t[..., None] * freq
    out = np.empty(t.shape + (m,), dtype=np.float64)
    out[..., 0::2] = np.sin(args)
    out[..., 1::2] = np.cos(args)
    return out


def type_embedding(params: ModelParams, k: int) -> np.ndarray:
    """Column ``k`` of the learned type embedding matrix."""
    return np.asarray(params.type_embed[:, int(k)])


def event_embedding(params: ModelParams, cfg: ModelConfig, t, k: int) -> np.ndarray:
    """Concatenation of the temporal encoding and the type embedding."""
    return np.concatenate([temporal_embedding(t, cfg.embed_dim), type_embedding(params, k)])


def _embed_many(params, cfg, times, types) -> np.ndarray:
    z = temporal_embedding(np.asarray(times, dtype=np.float64), cfg.embed_dim)
    e = params.type_embed[:, np.asarray(types, dtype=np.int64)].T
    return np.concatenate([z, e], axis=1)


def _masked_softmax(scores: np.ndarray) -> np.ndarray:
    """Softmax of a score vector with the far-tail flush to exact zero."""
    d = scores - scores.max()
    w = np.exp(d)
    w[d < -SCORE_FLUSH] = 0.0
    return w / w.sum()


def attention_weights(
    params: ModelParams,
    cfg: ModelConfig,
    query_time: float,
    query_type: int,
    hist_times,
    hist_types,
) -> np.ndarray:
    """Softmax attention of a query ``(t, k)`` over strictly earlier events.

    Returns one weight per history event; an empty history gives an empty
    vector.  Raises ``NonCausalHistory`` if any history event does not
    strictly precede the query time.
    """
    hist_times = np.asarray(hist_times, dtype=np.float64)
    hist_types = np.asarray(hist_types, dtype=np.int64)
    if hist_times.size == 0:
        return np.zeros(0)
    if not (hist_times < query_time).all():
        bad = int(np.argmax(hist_times >= query_time))
        raise NonCausalHistory(
            f"history event {bad} at t={hist_times[bad]} does not precede query t={query_time}"
        )
    x_hist = _embed_many(params, cfg, hist_times, hist_types)
    x_query = event_embedding(params, cfg, float(query_time), int(query_type))
    scores = x_hist @ x_query / math.sqrt(2.0 * cfg.embed_dim)
    return _masked_softmax(scores)


def _check_window(seq: EventSequence, t: float) -> None:
    if not (0.0 <= t <= seq.horizon):
        raise OutOfWindow(f"query time {t} outside [0, {seq.horizon}]")


def _attention_pre(params, cfg, seq, t, k):
    """Pre-activation of the attention variant at query ``(t, k)``."""
    n = int(np.searchsorted(seq.times, t, side="left"))
    pre = float(params.bias[k])
    if n:
        a = attention_weights(params, cfg, t, k, seq.times[:n], seq.types[:n])
        values = _embed_many(params, cfg, seq.times[:n], seq.types[:n]) @ params.value_proj
        pre += float(a @ (values @ params.readout[k]))
    if cfg.skip_connection:
        x_query = event_embedding(params, cfg, float(t), int(k))
        pre += float(x_query @ params.readout[k])
    return pre


def intensity_at(params: ModelParams, cfg: ModelConfig, seq: EventSequence, t: float, k: int) -> float:
    """Attention-variant intensity of type ``k`` at time ``t``.

    The history is every event strictly before ``t``; with no history the
    intensity is ``softplus(bias_k)``.  Query times must lie in ``[0, T]``.
    """
    if cfg.variant != VARIANT_ATTENTION:
        raise ValueError("intensity_at applies to the attention variant")
    _check_window(seq, t)
    return float(softplus(_attention_pre(params, cfg, seq, float(t), int(k))))


def trigger_contribution(
    params: ModelParams,
    cfg: ModelConfig,
    seq: EventSequence,
    event_index: int,
    t: float,
    k: int,
) -> float:
    """Single-event summand of the pre-activation at query ``(t, k)``.

    This is the attention weight of event ``event_index`` times its value
    readout; summing over the history and adding the bias reproduces the
    intensity through softplus.  May be negative.
    """
    if cfg.variant != VARIANT_ATTENTION:
        raise ValueError("trigger_contribution applies to the attention variant")
    _check_window(seq, t)
    i = int(event_index)
    if not 0 <= i < len(seq):
        raise IndexError(f"event index {i} outside sequence of length {len(seq)}")
    if not seq.times[i] < t:
        raise NonCausalHistory(f"event {i} at t={seq.times[i]} does not precede query t={t}")
    n = int(np.searchsorted(seq.times, t, side="left"))
    a = attention_weights(params, cfg, t, k, seq.times[:n], seq.types[:n])
    values = _embed_many(params, cfg, seq.times[:n], seq.types[:n]) @ params.value_proj
    return float(a[i] * (values[i] @ params.readout[k]))


def _attention_output(params, cfg, seq, i):
    """Attention value vector of event ``i`` over its strict predecessors."""
    if i == 0:
        return np.zeros(cfg.value_dim)
    t, k = float(seq.times[i]), int(seq.types[i])
    a = attention_weights(params, cfg, t, k, seq.times[:i], seq.types[:i])
    values = _embed_many(params, cfg, seq.times[:i], seq.types[:i]) @ params.value_proj
    return a @ values


def _extrap_hidden(params, s):
    """MLP head mapping an attention output to the extrapolation feature."""
    h = np.maximum(s @ params.mlp_w1 + params.mlp_b1, 0.0)
    return h @ params.mlp_w2 + params.mlp_b2


def ex_intensity_at(params: ModelParams, cfg: ModelConfig, seq: EventSequence, t: float, k: int) -> float:
    """Extrapolation-variant intensity of type ``k`` at time ``t``.

    Anchored at the most recent event before ``t``: the anchor's attention
    output feeds an MLP, and elapsed time enters as a linear term in
    ``(t - t_anchor) / t_anchor``.  Raises ``NoPriorEvent`` with no anchor
    and ``DegenerateAnchor`` when the anchor sits at exactly t = 0.
    """
    if cfg.variant != VARIANT_EXTRAPOLATION:
        raise ValueError("ex_intensity_at applies to the extrapolation variant")
    _check_window(seq, t)
    n = int(np.searchsorted(seq.times, t, side="left"))
    if n == 0:
        raise NoPriorEvent(f"no event precedes query t={t}")
    anchor = n - 1
    t_a = float(seq.times[anchor])
    if t_a == 0.0:
        raise DegenerateAnchor("anchor event at t=0 makes the relative elapsed time undefined")
    hidden = _extrap_hidden(params, _attention_output(params, cfg, seq, anchor))
    pre = (
        float(params.extrap_coef[k]) * (float(t) - t_a) / t_a
        + float(params.extrap_readout[k] @ hidden)
        + float(params.bias[k])
    )
    return float(softplus(pre))


def intensity_all_types(params: ModelParams, cfg: ModelConfig, seq: EventSequence, t: float) -> np.ndarray:
    """Vector of intensities over all types at ``t``, dispatching on variant.

    For the extrapolation variant, query times with no prior event fall back
    to the bias rate ``softplus(bias_k)`` so the whole window is covered.
    """
    _check_window(seq, t)
    k_range = range(cfg.num_types)
    if cfg.variant == VARIANT_ATTENTION:
        return np.array([intensity_at(params, cfg, seq, t, k) for k in k_range])
    n = int(np.searchsorted(seq.times, t, side="left"))
    if n == 0:
        return softplus(np.asarray(params.bias, dtype=np.float64)).copy()
    return np.array([ex_intensity_at(params, cfg, seq, t, k) for k in k_range])


@dataclass(frozen=True, eq=False)
class AttentionMap:
    """Dense attention weights over the chronological union of grid and event times."""

    times: np.ndarray  # (N,) query/source times, ascending
    is_event: np.ndarray  # (N,) bool, True where the time is an event of the sequence
    query_types: np.ndarray  # (N,) type id used for each row's query
    matrix: np.ndarray  # (N, N) rows attend over strictly earlier event columns


def attention_matrix(
    params: ModelParams, cfg: ModelConfig, seq: EventSequence, grid: IntegrationGrid
) -> AttentionMap:
    """Attention weights of every grid or event time over the event history.

    Row ``n`` holds the attention of a query at ``times[n]`` across events
    strictly earlier, placed in the matching columns.  Grid-only columns are
    zero everywhere, as are the diagonal and upper triangle.  Event rows use
    the event's own type as query type; grid rows use the most frequent
    event type of the sequence.
    """
    points = grid.times
    n_points = len(points)
    event_cols = np.searchsorted(points, seq.times)
    if len(seq) and not np.array_equal(points[event_cols], seq.times):
        raise ValueError("grid does not contain every event time of the sequence")
    is_event = np.zeros(n_points, dtype=bool)
    is_event[event_cols] = True
    if len(seq):
        modal = int(np.argmax(np.bincount(seq.types, minlength=cfg.num_types)))
    else:
        modal = 0
    query_types = np.full(n_points, modal, dtype=np.int64)
    query_types[event_cols] = seq.types
    matrix = np.zeros((n_points, n_points))
    for row in range(n_points):
        h = int(np.searchsorted(seq.times, points[row], side="left"))
        if h == 0:
            continue
        a = attention_weights(
            params, cfg, float(points[row]), int(query_types[row]), seq.times[:h], seq.types[:h]
        )
        matrix[row, event_cols[:h]] = a
    return AttentionMap(times=points.copy(), is_event=is_event, query_types=query_types, matrix=matrix)
