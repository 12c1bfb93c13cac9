"""Model explanation: permutation importance and learned feature/edge masks.

Two complementary views of a trained model:

* global — permutation importance: shuffle one feature column across nodes
  (same shuffle at every time step), measure the MSE increase on the
  original PCI scale, average over repeats, normalize the non-negative
  scores to shares;
* local — mask optimization in the style of subgraph explainers: sigmoid
  feature and edge masks are gradient-descended to preserve one node's
  prediction under L1 and entropy sparsity pressure. For regression the
  prediction-preservation squared error replaces the classification
  mutual-information objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .dataset import Standardizer, TemporalSample
from .graph import MessageLayout, RoadGraph, build_message_layout
from .model import ModelParams, forward
from .training import AdamState, adam_step


class ExplainError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureImportance:
    feature_names: tuple[str, ...]
    raw: np.ndarray
    normalized: np.ndarray

    def ranked(self) -> list[tuple[str, float]]:
        order = np.argsort(-self.normalized)
        return [(self.feature_names[i], float(self.normalized[i])) for i in order]


@dataclass(frozen=True)
class ExplainConfig:
    """Mask-optimization settings.

    Masks start near one (``init_logit``) so optimization prunes away from
    the full graph: the L1 terms pull every mask down and only entries whose
    removal damages the node's prediction resist. An entropy-dominant
    weighting is bistable around 0.5 and ranks features by initialization
    noise instead of importance, so the L1 weights deliberately dominate the
    entropy weight here.
    """

    feature_l1: float = 0.05
    feature_entropy: float = 0.01
    edge_l1: float = 0.05
    steps: int = 100
    learning_rate: float = 0.05
    init_logit: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if min(self.feature_l1, self.feature_entropy, self.edge_l1) < 0:
            raise ExplainError("regularization weights must be >= 0")
        if self.steps < 1 or self.learning_rate <= 0:
            raise ExplainError("steps and learning rate must be positive")


@dataclass(frozen=True)
class ExplanationMasks:
    feature_mask: np.ndarray
    edge_mask: np.ndarray
    node_index: int
    objective: float
    objective_trace: tuple[float, ...]


def temporal_wrapper(static_features: np.ndarray, t0: int) -> np.ndarray:
    """Repeat an (N, F) matrix across the time axis into (N, T0, F)."""
    x = np.asarray(static_features, dtype=np.float64)
    if x.ndim != 2:
        raise ExplainError(f"expected (N, F) features, got {x.shape}")
    return np.repeat(x[:, None, :], t0, axis=1)


def permutation_importance(
    params: ModelParams,
    standardizer: Standardizer,
    sample: TemporalSample,
    graph: RoadGraph | MessageLayout | None,
    actual: np.ndarray,
    seed: int = 0,
    repeats: int = 10,
    feature_names: tuple[str, ...] | None = None,
) -> FeatureImportance:
    """Global importance of each input feature for a standardized window.

    Raw score per feature: mean over repeats of (permuted MSE - baseline
    MSE) on the original PCI scale. Negative scores (permutation noise) are
    clamped to zero before normalizing to shares.
    """
    if repeats < 1:
        raise ExplainError("repeats must be >= 1")
    layout = (
        build_message_layout(graph) if isinstance(graph, RoadGraph) else graph
    )
    actual = np.asarray(actual, dtype=np.float64)
    n, _, f = sample.inputs.shape
    if actual.shape != (n,):
        raise ExplainError(f"actual shape {actual.shape} != ({n},)")

    def mse_of(inputs: np.ndarray) -> float:
        pred, _ = forward(params, inputs, layout)
        raw = standardizer.inverse_transform_target(pred.value)
        return float(np.mean((raw - actual) ** 2))

    base = mse_of(sample.inputs)
    rng = np.random.default_rng(seed)
    scores = np.zeros(f)
    for _ in range(repeats):
        for col in range(f):
            perm = rng.permutation(n)
            perturbed = np.array(sample.inputs)
            perturbed[:, :, col] = perturbed[perm][:, :, col]
            scores[col] += mse_of(perturbed) - base
    scores /= repeats

    clamped = np.maximum(scores, 0.0)
    total = clamped.sum()
    normalized = clamped / total if total > 0 else np.zeros_like(clamped)
    names = feature_names or tuple(f"feature_{i}" for i in range(f))
    return FeatureImportance(feature_names=tuple(names), raw=scores, normalized=normalized)


def explain_node(
    params: ModelParams,
    sample: TemporalSample,
    graph: RoadGraph | MessageLayout | None,
    node_index: int,
    config: ExplainConfig = ExplainConfig(),
) -> ExplanationMasks:
    """Optimize feature and edge masks that preserve one node's prediction.

    Objective: (masked - unmasked prediction)^2 for the node, plus L1 and
    elementwise-entropy penalties on the feature mask and L1 on the edge
    mask. Masks are sigmoids of free logits (initialized at ``init_logit``,
    near one) updated with Adam; the procedure is fully deterministic.
    """
    layout = (
        build_message_layout(graph) if isinstance(graph, RoadGraph) else graph
    )
    n, _, f = sample.inputs.shape
    if not 0 <= node_index < n:
        raise ExplainError(f"node index {node_index} out of range for {n} nodes")
    num_edges = layout.num_edges if layout is not None else 0

    base_pred, _ = forward(params, sample.inputs, layout)
    target = float(base_pred.value[node_index])
    node_idx = np.array([node_index])

    logits = {
        "feature": np.full(f, config.init_logit),
        "edge": np.full(num_edges, config.init_logit),
    }
    state = AdamState.for_params(logits)
    eps = 1e-6
    trace = []
    for _ in range(config.steps):
        feat_leaf = ad.Tensor(logits["feature"], name="feature_logits")
        edge_leaf = ad.Tensor(logits["edge"], name="edge_logits")
        m_f = ad.sigmoid(feat_leaf)
        m_e = ad.sigmoid(edge_leaf) if num_edges else None
        pred, _ = forward(
            params, sample.inputs, layout, feature_mask=m_f, edge_mask=m_e
        )
        diff = ad.sub(ad.gather_rows(pred, node_idx), ad.constant(np.array([target])))
        loss = ad.tensor_sum(ad.mul(diff, diff))
        loss = ad.add(loss, ad.scale(ad.tensor_sum(m_f), config.feature_l1))
        m_c = ad.clip(m_f, eps, 1.0 - eps)
        one = ad.constant(np.ones(f))
        entropy = ad.scale(
            ad.tensor_sum(
                ad.add(
                    ad.mul(m_c, ad.log(m_c)),
                    ad.mul(ad.sub(one, m_c), ad.log(ad.sub(one, m_c))),
                )
            ),
            -1.0,
        )
        loss = ad.add(loss, ad.scale(entropy, config.feature_entropy))
        if m_e is not None:
            loss = ad.add(loss, ad.scale(ad.tensor_sum(m_e), config.edge_l1))
        ad.backward(loss)
        trace.append(float(loss.value))
        grads = {"feature": feat_leaf.grad, "edge": edge_leaf.grad}
        if grads["edge"] is None:
            grads["edge"] = np.zeros(num_edges)
        adam_step(logits, grads, state, config.learning_rate)

    def squash(z: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-z))

    return ExplanationMasks(
        feature_mask=squash(logits["feature"]),
        edge_mask=squash(logits["edge"]),
        node_index=node_index,
        objective=trace[-1],
        objective_trace=tuple(trace),
    )
