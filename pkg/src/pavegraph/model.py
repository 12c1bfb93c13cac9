"""The spatio-temporal residual graph-attention model and its ablations.

Architecture (full variant), applied per time step with shared weights:

1. multi-head attention over each node's neighborhood (self-loop included):
   per head k, ``e_ij = leaky_relu(a_k . [W_k x_i || W_k x_j])``, normalized
   with a per-destination softmax, aggregated as ``h_i = elu(sum_j a_ij W_k x_j)``
   and concatenated over heads;
2. residual projection of the raw features added back in,
   ``z = elu(h + W_r x)``, followed by layer normalization and dropout;
3. a GRU over the per-step spatial embeddings (final hidden state only);
4. a two-layer regression head producing one standardized PCI per node.

Variants reuse the same pieces: ``st_gat`` drops the residual projection,
``resgat`` drops the GRU (last time step only), ``vanilla`` is the bare
attention encoder on the last step, and ``mlp`` is the head alone on the
flattened window (no graph at all).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels
from . import autodiff as ad
from .dataset import TemporalSample
from .graph import MessageLayout, RoadGraph, build_message_layout

VARIANTS: tuple[str, ...] = ("full", "resgat", "st_gat", "vanilla", "mlp")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Architecture dimensions and fixed nonlinearity constants."""

    heads: int = 4
    d_head: int = 64
    gru_hidden: int = 256
    head_hidden: int = 128
    dropout: float = 0.0
    leaky_slope: float = 0.2

    def __post_init__(self):
        if min(self.heads, self.d_head, self.gru_hidden, self.head_hidden) < 1:
            raise ModelError(f"dimensions must be positive: {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError(f"dropout must lie in [0, 1): {self.dropout}")

    @property
    def d_spatial(self) -> int:
        return self.heads * self.d_head


@dataclass
class GatLayerParams:
    """Per-head transform matrices (F, d_head) and attention vectors (2*d_head,)."""

    weights: list[np.ndarray]
    attn: list[np.ndarray]
    leaky_slope: float


@dataclass
class ResidualParams:
    """Residual projection (None for the no-residual variant) plus layer norm."""

    projection: np.ndarray | None
    ln_gain: np.ndarray
    ln_bias: np.ndarray
    dropout: float


@dataclass
class GruParams:
    w_z: np.ndarray
    u_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    u_h: np.ndarray
    b_h: np.ndarray


@dataclass
class HeadParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    dropout: float


@dataclass
class ModelParams:
    """All learnable state plus the routing flag and input dimensions."""

    variant: str
    f_in: int
    t0: int
    seed: int
    config: ModelConfig
    gat: GatLayerParams | None
    residual: ResidualParams | None
    gru: GruParams | None
    head: HeadParams

    def tensor_dict(self) -> dict[str, np.ndarray]:
        """Flat name -> array view of every active parameter (fixed order)."""
        out: dict[str, np.ndarray] = {}
        if self.gat is not None:
            for k, (w, a) in enumerate(zip(self.gat.weights, self.gat.attn)):
                out[f"gat.head{k}.weight"] = w
                out[f"gat.head{k}.attn"] = a
        if self.residual is not None:
            if self.residual.projection is not None:
                out["residual.projection"] = self.residual.projection
            out["residual.ln_gain"] = self.residual.ln_gain
            out["residual.ln_bias"] = self.residual.ln_bias
        if self.gru is not None:
            for name in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"):
                out[f"gru.{name}"] = getattr(self.gru, name)
        out["head.w1"] = self.head.w1
        out["head.b1"] = self.head.b1
        out["head.w2"] = self.head.w2
        out["head.b2"] = self.head.b2
        return out

    def set_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        """Overwrite parameter arrays in place from a flat dict."""
        own = self.tensor_dict()
        if set(own) != set(tensors):
            raise ModelError(
                f"parameter names mismatch: {sorted(set(own) ^ set(tensors))}"
            )
        for name, arr in own.items():
            if arr.shape != tensors[name].shape:
                raise ModelError(f"shape mismatch for {name}")
            arr[...] = tensors[name]

    def copy_tensors(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.tensor_dict().items()}


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(
    variant: str,
    f_in: int,
    t0: int,
    config: ModelConfig = ModelConfig(),
    seed: int = 0,
) -> ModelParams:
    """Draw fresh parameters, uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].

    Deterministic per seed: tensors are drawn in a fixed order from one
    generator. Only the components the variant actually uses are created.
    """
    if variant not in VARIANTS:
        raise ModelError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if f_in < 1 or t0 < 1:
        raise ModelError(f"f_in and t0 must be positive, got {f_in}, {t0}")
    rng = np.random.default_rng(seed)
    d_spatial = config.d_spatial

    gat = residual = gru = None
    if variant != "mlp":
        weights = [_uniform(rng, (f_in, config.d_head), f_in) for _ in range(config.heads)]
        attn = [
            _uniform(rng, (2 * config.d_head,), 2 * config.d_head)
            for _ in range(config.heads)
        ]
        gat = GatLayerParams(weights=weights, attn=attn, leaky_slope=config.leaky_slope)
    if variant in ("full", "resgat", "st_gat"):
        projection = None
        if variant != "st_gat":
            projection = _uniform(rng, (f_in, d_spatial), f_in)
        residual = ResidualParams(
            projection=projection,
            ln_gain=np.ones(d_spatial),
            ln_bias=np.zeros(d_spatial),
            dropout=config.dropout,
        )
    if variant in ("full", "st_gat"):
        h = config.gru_hidden
        gru = GruParams(
            w_z=_uniform(rng, (d_spatial, h), d_spatial),
            u_z=_uniform(rng, (h, h), h),
            b_z=np.zeros(h),
            w_r=_uniform(rng, (d_spatial, h), d_spatial),
            u_r=_uniform(rng, (h, h), h),
            b_r=np.zeros(h),
            w_h=_uniform(rng, (d_spatial, h), d_spatial),
            u_h=_uniform(rng, (h, h), h),
            b_h=np.zeros(h),
        )

    if variant == "mlp":
        head_in = t0 * f_in
    elif variant in ("full", "st_gat"):
        head_in = config.gru_hidden
    else:
        head_in = d_spatial
    head = HeadParams(
        w1=_uniform(rng, (head_in, config.head_hidden), head_in),
        b1=np.zeros(config.head_hidden),
        w2=_uniform(rng, (config.head_hidden, 1), config.head_hidden),
        b2=np.zeros(1),
        dropout=config.dropout,
    )
    return ModelParams(
        variant=variant,
        f_in=f_in,
        t0=t0,
        seed=seed,
        config=config,
        gat=gat,
        residual=residual,
        gru=gru,
        head=head,
    )


def _leaf_map(params: ModelParams) -> dict[str, ad.Tensor]:
    return {name: ad.Tensor(arr, name=name) for name, arr in params.tensor_dict().items()}


def _dropout(x: ad.Tensor, p: float, rng: np.random.Generator | None) -> ad.Tensor:
    if rng is None or p <= 0.0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return ad.mul(x, ad.constant(keep))


def _gat_forward_t(
    leaves: dict[str, ad.Tensor],
    gat: GatLayerParams,
    x: ad.Tensor,
    layout: MessageLayout,
    arc_mask: ad.Tensor | None = None,
) -> ad.Tensor:
    """Multi-head attention step on the arc layout; returns (N, heads*d_head)."""
    d = gat.weights[0].shape[1]
    head_outputs = []
    for k in range(len(gat.weights)):
        w = leaves[f"gat.head{k}.weight"]
        a = ad.reshape(leaves[f"gat.head{k}.attn"], (2 * d, 1))
        wx = ad.matmul(x, w)
        # a . [wx_i || wx_j] splits into destination and source halves.
        s_dst = ad.reshape(ad.matmul(wx, ad.slice_axis(a, 0, 0, d)), (x.shape[0],))
        s_src = ad.reshape(ad.matmul(wx, ad.slice_axis(a, 0, d, 2 * d)), (x.shape[0],))
        scores = ad.add(
            ad.gather_rows(s_dst, layout.dst), ad.gather_rows(s_src, layout.src)
        )
        scores = ad.leaky_relu(scores, gat.leaky_slope)
        alpha = ad.segment_softmax(scores, layout.seg_ptr, layout.seg_ids)
        if arc_mask is not None:
            alpha = ad.mul(alpha, arc_mask)
        messages = ad.scale_rows(ad.gather_rows(wx, layout.src), alpha)
        head_outputs.append(
            ad.elu(ad.segment_sum(messages, layout.seg_ptr, layout.seg_ids))
        )
    return head_outputs[0] if len(head_outputs) == 1 else ad.concat(head_outputs, axis=1)


def _residual_forward_t(
    leaves: dict[str, ad.Tensor],
    residual: ResidualParams,
    h: ad.Tensor,
    x: ad.Tensor,
    rng: np.random.Generator | None,
) -> ad.Tensor:
    if residual.projection is not None:
        z = ad.elu(ad.add(h, ad.matmul(x, leaves["residual.projection"])))
    else:
        z = h
    z = ad.layer_norm(z, leaves["residual.ln_gain"], leaves["residual.ln_bias"])
    return _dropout(z, residual.dropout, rng)


def _gru_forward_t(
    leaves: dict[str, ad.Tensor], sequence: Sequence[ad.Tensor], hidden: int
) -> ad.Tensor:
    """Run the gated recurrence over the step embeddings; h_0 = 0."""
    n = sequence[0].shape[0]
    h = ad.constant(np.zeros((n, hidden)))
    for x_t in sequence:
        z_t = ad.sigmoid(
            ad.add_bias(
                ad.add(ad.matmul(x_t, leaves["gru.w_z"]), ad.matmul(h, leaves["gru.u_z"])),
                leaves["gru.b_z"],
            )
        )
        r_t = ad.sigmoid(
            ad.add_bias(
                ad.add(ad.matmul(x_t, leaves["gru.w_r"]), ad.matmul(h, leaves["gru.u_r"])),
                leaves["gru.b_r"],
            )
        )
        h_cand = ad.tanh(
            ad.add_bias(
                ad.add(
                    ad.matmul(x_t, leaves["gru.w_h"]),
                    ad.matmul(ad.mul(r_t, h), leaves["gru.u_h"]),
                ),
                leaves["gru.b_h"],
            )
        )
        ones = ad.constant(np.ones_like(z_t.value))
        h = ad.add(ad.mul(ad.sub(ones, z_t), h), ad.mul(z_t, h_cand))
    return h


def _head_forward_t(
    leaves: dict[str, ad.Tensor],
    head: HeadParams,
    h: ad.Tensor,
    rng: np.random.Generator | None,
) -> ad.Tensor:
    hidden = ad.relu(ad.add_bias(ad.matmul(h, leaves["head.w1"]), leaves["head.b1"]))
    hidden = _dropout(hidden, head.dropout, rng)
    out = ad.add_bias(ad.matmul(hidden, leaves["head.w2"]), leaves["head.b2"])
    return ad.reshape(out, (h.shape[0],))


def forward(
    params: ModelParams,
    inputs: np.ndarray,
    layout: MessageLayout | None,
    feature_mask: ad.Tensor | None = None,
    edge_mask: ad.Tensor | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[ad.Tensor, dict[str, ad.Tensor]]:
    """Build the prediction graph for one window.

    ``inputs`` is the standardized (N, T0, F) window. ``feature_mask`` (F,)
    and ``edge_mask`` (num_edges,) hook in the explainer: features are
    multiplied elementwise at every node and step, edge masks multiply the
    normalized attention coefficients of both arcs of an undirected edge
    (self-loops stay unmasked). ``rng`` enables dropout; None means
    evaluation mode. Returns the (N,) prediction tensor plus the parameter
    leaves so callers can read gradients after ``backward``.
    """
    if inputs.ndim != 3:
        raise ModelError(f"inputs must be (N, T0, F), got {inputs.shape}")
    n, t0, f_in = inputs.shape
    if f_in != params.f_in:
        raise ModelError(f"feature dim {f_in} != model f_in {params.f_in}")
    leaves = _leaf_map(params)

    def step_features(k: int) -> ad.Tensor:
        x = ad.constant(np.ascontiguousarray(inputs[:, k, :]))
        if feature_mask is not None:
            x = ad.scale_cols(x, feature_mask)
        return x

    if params.variant == "mlp":
        if feature_mask is not None:
            flat = ad.concat([step_features(k) for k in range(t0)], axis=1)
        else:
            flat = ad.constant(inputs.reshape(n, t0 * f_in))
        return _head_forward_t(leaves, params.head, flat, rng), leaves

    if layout is None:
        raise ModelError(f"variant {params.variant!r} requires a graph layout")
    arc_mask = None
    if edge_mask is not None:
        # Map undirected edge mask onto arcs; the trailing constant 1 feeds
        # the self-loop sentinel index.
        extended = ad.concat([edge_mask, ad.constant(np.ones(1))], axis=0)
        arc_mask = ad.gather_rows(extended, layout.arc_edge)

    def spatial(k: int) -> ad.Tensor:
        x = step_features(k)
        h = _gat_forward_t(leaves, params.gat, x, layout, arc_mask)
        if params.residual is not None:
            h = _residual_forward_t(leaves, params.residual, h, x, rng)
        return h

    if params.variant in ("full", "st_gat"):
        sequence = [spatial(k) for k in range(t0)]
        h_final = _gru_forward_t(leaves, sequence, params.config.gru_hidden)
    else:  # resgat, vanilla: last step only, no recurrence
        h_final = spatial(t0 - 1)
    return _head_forward_t(leaves, params.head, h_final, rng), leaves


def predict(
    params: ModelParams,
    sample: TemporalSample,
    graph: RoadGraph | MessageLayout | None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Standardized PCI prediction for every node of one window."""
    layout = None
    if isinstance(graph, MessageLayout):
        layout = graph
    elif isinstance(graph, RoadGraph):
        layout = build_message_layout(graph)
    pred, _ = forward(params, sample.inputs, layout, rng=rng)
    return pred.value


def gat_forward(params: ModelParams, node_features: np.ndarray, graph: RoadGraph) -> np.ndarray:
    """One attention step on raw (N, F) features; returns (N, heads*d_head)."""
    if params.gat is None:
        raise ModelError(f"variant {params.variant!r} has no attention encoder")
    layout = build_message_layout(graph)
    leaves = _leaf_map(params)
    x = ad.constant(np.asarray(node_features, dtype=np.float64))
    return _gat_forward_t(leaves, params.gat, x, layout).value


def residual_forward(
    params: ModelParams, attention_out: np.ndarray, raw_features: np.ndarray
) -> np.ndarray:
    """Residual add + layer norm on top of an attention output (eval mode)."""
    if params.residual is None:
        raise ModelError(f"variant {params.variant!r} has no residual module")
    leaves = _leaf_map(params)
    return _residual_forward_t(
        leaves, params.residual, ad.constant(attention_out), ad.constant(raw_features), None
    ).value


def gru_forward(params: ModelParams, sequence: np.ndarray) -> np.ndarray:
    """Final hidden state for an (N, T0, d_spatial) embedding sequence."""
    if params.gru is None:
        raise ModelError(f"variant {params.variant!r} has no temporal module")
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 3:
        raise ModelError(f"sequence must be (N, T0, d), got {seq.shape}")
    leaves = _leaf_map(params)
    steps = [ad.constant(np.ascontiguousarray(seq[:, k, :])) for k in range(seq.shape[1])]
    return _gru_forward_t(leaves, steps, params.config.gru_hidden).value


def attention_coefficients(
    params: ModelParams, node_features: np.ndarray, graph: RoadGraph
) -> tuple[np.ndarray, MessageLayout]:
    """Raw per-arc attention coefficients (A, heads) for inspection/tests."""
    if params.gat is None:
        raise ModelError(f"variant {params.variant!r} has no attention encoder")
    layout = build_message_layout(graph)
    x = np.asarray(node_features, dtype=np.float64)
    cols = []
    for w, a in zip(params.gat.weights, params.gat.attn):
        d = w.shape[1]
        wx = x @ w
        scores = wx[layout.dst] @ a[:d] + wx[layout.src] @ a[d:]
        scores = np.where(scores >= 0, scores, params.gat.leaky_slope * scores)
        cols.append(
            _kernels.segment_softmax_forward(scores, layout.seg_ptr, layout.seg_ids)
        )
    return np.stack(cols, axis=1), layout
