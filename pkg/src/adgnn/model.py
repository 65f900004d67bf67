"""Adaptive-depth message passing.

Each node gets its own aggregation budget.  A per-edge same-label
probability (learned head, degree product, or a structural heuristic)
yields an estimated signal-preservation factor per node, which scales
into a log-domain depth-benefit score.  Scores are min-max normalized
and cut against a monotone learnable threshold curve to assign a
stopping depth T(v).  The trunk then runs t_max gated convolutions:
a node whose budget is spent keeps its embedding frozen, while active
neighbors keep reading that frozen row.  Hard gating selects rows
exactly; soft gating blends through a temperature sigmoid so the
scoring parameters receive gradients.

With every stopping depth at t_max the gated trunk is bit-identical to
``backbones.plain_forward`` on the same parameters; ``trunk_params``
extracts the shared spine.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .autodiff import (
    Tensor,
    abs_diff,
    add,
    binary_cross_entropy,
    clamp_min,
    concat_cols,
    div,
    elementwise_mul,
    log,
    matmul,
    relu,
    row_gather,
    scalar_mul,
    segment_sum,
    sigmoid,
    softplus,
    sub,
    tensor,
    vec_max,
    vec_min,
    where_rows,
)
from .backbones import BackboneConfig, dense_forward, glorot, layer_forward
from .graph import Graph, degrees
from .heuristics import HEURISTIC_NAMES, degree_similarity, heuristic_similarity

__all__ = [
    "VARIANTS",
    "GATING_MODES",
    "SimilarityHead",
    "ThresholdFunction",
    "DepthPlan",
    "AdGnnConfig",
    "ForwardResult",
    "init_adgnn_params",
    "similarity_head",
    "threshold_function",
    "trunk_params",
    "pair_probability",
    "expected_label_counts",
    "estimated_alpha",
    "log_benefit_scores",
    "minmax_normalize",
    "threshold_values",
    "assign_stopping_depths",
    "forward",
    "regularization_loss",
    "total_loss",
    "degree_similarity",
    "heuristic_similarity",
]

VARIANTS = ("learned", "fast_degree", "heuristic", "modified")
GATING_MODES = ("hard", "soft")

# graph -> {score name -> per-arc values}; lives exactly as long as the graph
_STRUCTURAL_SCORES: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()

# Floor for |alpha| on the differentiable score path; the plan itself uses
# an exact -inf sentinel instead.
_ALPHA_FLOOR = 1e-12

# Threshold curve init: raw slope/intercept chosen so the pre-mixture
# sigmoid sits near 0.11 at layer 1, 0.30 at layer 2, and saturates by
# layer 7.  Early thresholds stay low because a frozen raw row is the one
# input the classifier rarely trains on; the fast rise caps practical
# depth at single digits no matter how tall the trunk is.
_INIT_SLOPE_RAW = 0.90395
_INIT_INTERCEPT_RAW = -3.33500


@dataclass(frozen=True)
class SimilarityHead:
    """Two-layer map from symmetric pair features to a same-label
    probability.  Inputs are |h_u - h_v| concatenated with h_u * h_v, so
    the output cannot depend on argument order."""

    w1: Tensor
    w2: Tensor

    def __post_init__(self) -> None:
        if self.w1.shape[0] % 2 != 0:
            raise ValueError("w1 consumes two stacked feature blocks")
        if self.w2.shape != (self.w1.shape[1], 1):
            raise ValueError("w2 must map the hidden layer to one logit")


@dataclass(frozen=True)
class ThresholdFunction:
    """Monotone per-layer acceptance threshold.

    tau(t) = lam + (1 - lam) * sigmoid(softplus(slope_raw) * t +
    intercept_raw).  The softplus keeps the slope nonnegative for any raw
    value, so tau never decreases with depth; lam is the floor every
    threshold stays above.
    """

    lambda_weight: float
    slope_raw: Tensor
    intercept_raw: Tensor

    def __post_init__(self) -> None:
        if not 0.0 <= self.lambda_weight <= 1.0:
            raise ValueError("lambda_weight must lie in [0, 1]")
        if self.slope_raw.shape != (1, 1) or self.intercept_raw.shape != (1, 1):
            raise ValueError("threshold parameters are (1, 1) scalars")


@dataclass(frozen=True)
class DepthPlan:
    """Stopping depths plus the normalized scores that produced them."""

    stopping_depth: np.ndarray
    normalized_scores: np.ndarray
    t_max: int

    def __post_init__(self) -> None:
        depth = np.asarray(self.stopping_depth)
        scores = np.asarray(self.normalized_scores)
        if depth.shape != scores.shape or depth.ndim != 1:
            raise ValueError("per-node depth and score vectors must align")
        if depth.size and (depth.min() < 0 or depth.max() > self.t_max):
            raise ValueError("stopping depths must lie in [0, t_max]")

    def _check_layer(self, t: int) -> None:
        if not 1 <= t <= self.t_max:
            raise ValueError(f"layer index {t} outside 1..{self.t_max}")

    def active_nodes(self, t: int) -> np.ndarray:
        """Nodes still receiving fresh aggregates at layer t."""
        self._check_layer(t)
        return self.stopping_depth >= t

    def active_edges(self, graph: Graph, t: int) -> np.ndarray:
        """Mask over graph.edges() of edges carrying a fresh message at
        layer t, i.e. both endpoints active."""
        self._check_layer(t)
        act = self.active_nodes(t)
        edges = graph.edges()
        return act[edges[:, 0]] & act[edges[:, 1]]

    def mean_depth(self) -> float:
        return float(self.stopping_depth.mean()) if self.stopping_depth.size else 0.0

    def depth_histogram(self) -> np.ndarray:
        """Node counts per stopping depth, length t_max + 1 (depth 0 first)."""
        return np.bincount(self.stopping_depth, minlength=self.t_max + 1)


@dataclass(frozen=True)
class AdGnnConfig:
    t_max: int
    backbone: BackboneConfig
    lambda_weight: float = 0.0
    variant: str = "learned"
    heuristic_name: str = "common_neighbors"
    gating: str = "hard"
    temperature: float = 0.1
    head_hidden: int = 16
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")
        if self.backbone.layers != self.t_max:
            raise ValueError("backbone.layers must equal t_max; the trunk is "
                             "one conv per allowable depth")
        if not 0.0 <= self.lambda_weight <= 1.0:
            raise ValueError("lambda_weight must lie in [0, 1]")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant == "heuristic" and self.heuristic_name not in HEURISTIC_NAMES:
            raise ValueError(f"heuristic_name must be one of {HEURISTIC_NAMES}")
        if self.gating not in GATING_MODES:
            raise ValueError(f"gating must be one of {GATING_MODES}")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.head_hidden < 1:
            raise ValueError("head_hidden must be positive")
        if self.beta <= 0.0 or self.gamma <= 0.0:
            raise ValueError("calibration factors must be positive")


@dataclass(frozen=True)
class ForwardResult:
    logits: Tensor
    plan: DepthPlan
    arc_probs: Tensor
    h0: Tensor


def init_adgnn_params(
    cfg: AdGnnConfig, in_dim: int, num_classes: int, seed: int
) -> dict[str, Tensor]:
    """Glorot weights for the full model.

    Spine: dense0 embeds features, conv1..conv{t_max} aggregate at uniform
    width (stopped rows must stay shape-compatible across layers), and
    dense{t_max + 1} classifies.  Similarity-head and threshold parameters
    ride alongside under non-spine names.
    """
    if in_dim < 1 or num_classes < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    hidden = cfg.backbone.hidden_dim
    params: dict[str, Tensor] = {"dense0.weight": glorot(rng, in_dim, hidden)}
    for t in range(1, cfg.t_max + 1):
        params[f"conv{t}.weight"] = glorot(rng, hidden, hidden)
        if cfg.backbone.kind == "sage_mean":
            params[f"conv{t}.weight_nbr"] = glorot(rng, hidden, hidden)
    params[f"dense{cfg.t_max + 1}.weight"] = glorot(rng, hidden, num_classes)
    params["head.w1"] = glorot(rng, 2 * hidden, cfg.head_hidden)
    params["head.w2"] = glorot(rng, cfg.head_hidden, 1)
    params["threshold.slope_raw"] = tensor([[_INIT_SLOPE_RAW]], requires_grad=True)
    params["threshold.intercept_raw"] = tensor(
        [[_INIT_INTERCEPT_RAW]], requires_grad=True
    )
    return params


def similarity_head(params: dict[str, Tensor]) -> SimilarityHead:
    return SimilarityHead(params["head.w1"], params["head.w2"])


def threshold_function(cfg: AdGnnConfig, params: dict[str, Tensor]) -> ThresholdFunction:
    return ThresholdFunction(
        cfg.lambda_weight,
        params["threshold.slope_raw"],
        params["threshold.intercept_raw"],
    )


def trunk_params(params: dict[str, Tensor]) -> dict[str, Tensor]:
    """The dense/conv spine alone, runnable by backbones.plain_forward."""
    return {k: v for k, v in params.items() if k.startswith(("dense", "conv"))}


def pair_probability(head: SimilarityHead, h_u: Tensor, h_v: Tensor) -> Tensor:
    """Same-label probability per row pair, in (0, 1), symmetric in its
    arguments."""
    if h_u.shape != h_v.shape:
        raise ValueError(f"pair shapes differ: {h_u.shape} vs {h_v.shape}")
    if 2 * h_u.shape[1] != head.w1.shape[0]:
        raise ValueError("embedding width does not match the head")
    feats = concat_cols(abs_diff(h_u, h_v), elementwise_mul(h_u, h_v))
    return sigmoid(matmul(relu(matmul(feats, head.w1)), head.w2))


def expected_label_counts(
    graph: Graph, arc_probs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Expected same-label and opposite-label neighbor counts per node.

    arc_probs holds one probability per directed arc, aligned with
    graph.csr_neighbors.  The two counts sum to the degree exactly.
    """
    p = np.asarray(arc_probs, dtype=np.float64).reshape(-1)
    if p.shape != graph.csr_neighbors.shape:
        raise ValueError("need one probability per directed arc")
    d_plus = np.bincount(
        graph.arc_sources(), weights=p, minlength=graph.num_nodes
    )
    return d_plus, degrees(graph) - d_plus


def estimated_alpha(
    d_plus_hat: np.ndarray, d_minus_hat: np.ndarray, degree: np.ndarray
) -> np.ndarray:
    """Signal-preservation estimate (1 + d+ - d-) / (d + 1).

    A continuous relaxation: with indicator-exact counts it reproduces the
    label-based factor; an isolated node gets 1.
    """
    dp = np.asarray(d_plus_hat, dtype=np.float64)
    dm = np.asarray(d_minus_hat, dtype=np.float64)
    deg = np.asarray(degree, dtype=np.float64)
    return (1.0 + dp - dm) / (deg + 1.0)


def log_benefit_scores(
    alpha_hat: np.ndarray,
    degree: np.ndarray,
    t_max: int,
    beta: np.ndarray | float = 1.0,
    gamma: np.ndarray | float = 1.0,
) -> np.ndarray:
    """Log-domain depth benefit over t_max layers per node.

    t_max * (2 ln|alpha| + ln(d + 1) + ln beta - ln gamma); alpha of zero
    yields the -inf sentinel.  Log domain keeps t_max = 32 finite and is
    rank-preserving, which is all min-max normalization needs.
    """
    a = np.abs(np.asarray(alpha_hat, dtype=np.float64))
    deg = np.asarray(degree, dtype=np.float64)
    with np.errstate(divide="ignore"):
        per_layer = (
            2.0 * np.log(a)
            + np.log(deg + 1.0)
            + np.log(np.asarray(beta, dtype=np.float64))
            - np.log(np.asarray(gamma, dtype=np.float64))
        )
    return t_max * per_layer


def minmax_normalize(scores: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1].  -inf sentinels map to 0; the finite entries are
    min-max scaled among themselves; all-equal finite input maps to all 1
    (no discriminative information, nothing gets filtered)."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise ValueError("no scores to normalize")
    out = np.zeros_like(s)
    finite = np.isfinite(s)
    if not finite.any():
        return out
    lo, hi = s[finite].min(), s[finite].max()
    if hi == lo:
        out[finite] = 1.0
    else:
        out[finite] = (s[finite] - lo) / (hi - lo)
    return out


def threshold_values(tf: ThresholdFunction, t_max: int) -> np.ndarray:
    """tau(1..t_max), monotone non-decreasing within [lambda_weight, 1]."""
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    t = np.arange(1, t_max + 1, dtype=np.float64)
    slope = np.logaddexp(0.0, tf.slope_raw.item())
    theta = expit(slope * t + tf.intercept_raw.item())
    return tf.lambda_weight + (1.0 - tf.lambda_weight) * theta


def assign_stopping_depths(
    normalized_scores: np.ndarray, thresholds: np.ndarray
) -> DepthPlan:
    """T(v) = largest layer t with score_v >= tau(t), 0 when none.

    Computed as a literal max so arbitrary threshold arrays behave; with a
    monotone tau this equals the count of accepted layers.
    """
    eps = np.asarray(normalized_scores, dtype=np.float64).reshape(-1)
    tau = np.asarray(thresholds, dtype=np.float64).reshape(-1)
    hit = eps[:, None] >= tau[None, :]
    any_hit = hit.any(axis=1)
    last = tau.size - np.argmax(hit[:, ::-1], axis=1)
    depth = np.where(any_hit, last, 0).astype(np.int64)
    return DepthPlan(depth, eps, int(tau.size))


def _per_node_calibration(
    cfg: AdGnnConfig,
    num_nodes: int,
    calibration: tuple[np.ndarray, np.ndarray] | None,
) -> tuple[np.ndarray, np.ndarray]:
    if cfg.variant != "modified":
        if calibration is not None:
            raise ValueError("per-node calibration is a modified-variant input")
        return np.ones(num_nodes), np.ones(num_nodes)
    if calibration is None:
        return np.full(num_nodes, cfg.beta), np.full(num_nodes, cfg.gamma)
    beta = np.asarray(calibration[0], dtype=np.float64).reshape(-1)
    gamma = np.asarray(calibration[1], dtype=np.float64).reshape(-1)
    if beta.shape != (num_nodes,) or gamma.shape != (num_nodes,):
        raise ValueError("calibration arrays must carry one value per node")
    if (beta <= 0).any() or (gamma <= 0).any():
        raise ValueError("calibration factors must be positive")
    return beta, gamma


def _arc_probabilities(
    cfg: AdGnnConfig, params: dict[str, Tensor], graph: Graph, h0: Tensor
) -> Tensor:
    if cfg.variant in ("learned", "modified"):
        head = similarity_head(params)
        h_u = row_gather(h0, graph.arc_sources())
        h_v = row_gather(h0, graph.csr_neighbors)
        return pair_probability(head, h_u, h_v)
    # structural scores depend only on the graph; cache per graph so a
    # training loop pays for betweenness and friends once, not per epoch
    cached = _STRUCTURAL_SCORES.setdefault(graph, {})
    key = "degree" if cfg.variant == "fast_degree" else cfg.heuristic_name
    if key not in cached:
        if cfg.variant == "fast_degree":
            cached[key] = degree_similarity(graph)
        else:
            cached[key] = heuristic_similarity(graph, cfg.heuristic_name)
    return tensor(cached[key].reshape(-1, 1))


def _soft_scores(
    arc_probs: Tensor,
    graph: Graph,
    deg: np.ndarray,
    t_max: int,
    beta: np.ndarray,
    gamma: np.ndarray,
) -> Tensor:
    """Differentiable twin of the plan's score path.

    |alpha| is floored instead of sent to -inf so the tape stays finite;
    the degenerate all-equal guard reads detached values only.
    """
    n = graph.num_nodes
    d_plus = segment_sum(arc_probs, graph.arc_sources(), n)
    alpha = elementwise_mul(
        add(scalar_mul(d_plus, 2.0), tensor((1.0 - deg).reshape(-1, 1))),
        tensor((1.0 / (deg + 1.0)).reshape(-1, 1)),
    )
    log_abs = log(clamp_min(abs_diff(alpha, tensor(np.zeros((n, 1)))), _ALPHA_FLOOR))
    const_col = np.log(deg + 1.0) + np.log(beta) - np.log(gamma)
    score = scalar_mul(
        add(scalar_mul(log_abs, 2.0), tensor(const_col.reshape(-1, 1))),
        float(t_max),
    )
    if score.values.max() - score.values.min() <= 0.0:
        return tensor(np.ones((n, 1)))
    lo, hi = vec_min(score), vec_max(score)
    return div(sub(score, lo), sub(hi, lo))


def _soft_threshold(
    tf: ThresholdFunction, slope: Tensor, t: int
) -> Tensor:
    theta = sigmoid(add(scalar_mul(slope, float(t)), tf.intercept_raw))
    return add(
        tensor([[tf.lambda_weight]]),
        scalar_mul(theta, 1.0 - tf.lambda_weight),
    )


def forward(
    cfg: AdGnnConfig,
    params: dict[str, Tensor],
    graph: Graph,
    x: Tensor,
    dropout_rng: np.random.Generator | None = None,
    depth_override: np.ndarray | None = None,
    calibration: tuple[np.ndarray, np.ndarray] | None = None,
) -> ForwardResult:
    """Full gated pass: embed, score, plan, t_max gated convs, classify.

    Stopped nodes keep frozen rows that active neighbors continue to read,
    so an active node always aggregates its entire neighborhood at full
    normalization; filtering decides who receives fresh messages, not what
    they read.  depth_override forces the plan (hard gating only);
    calibration supplies per-node score corrections for the modified
    variant, defaulting to the config's global pair.
    """
    if x.shape[0] != graph.num_nodes:
        raise ValueError("feature rows must match node count")
    if depth_override is not None and cfg.gating == "soft":
        raise ValueError("forced depth plans run hard gating")

    bb = cfg.backbone
    h0 = dense_forward(
        bb, {"weight": params["dense0.weight"]}, x, True, dropout_rng
    )
    arc_probs = _arc_probabilities(cfg, params, graph, h0)

    deg = degrees(graph).astype(np.float64)
    beta, gamma = _per_node_calibration(cfg, graph.num_nodes, calibration)
    d_plus, d_minus = expected_label_counts(graph, arc_probs.values)
    alpha_hat = estimated_alpha(d_plus, d_minus, deg)
    eps_plan = minmax_normalize(
        log_benefit_scores(alpha_hat, deg, cfg.t_max, beta, gamma)
    )
    tf = threshold_function(cfg, params)
    if depth_override is not None:
        plan = DepthPlan(
            np.asarray(depth_override, dtype=np.int64), eps_plan, cfg.t_max
        )
    else:
        plan = assign_stopping_depths(eps_plan, threshold_values(tf, cfg.t_max))

    soft = cfg.gating == "soft"
    if soft:
        eps_soft = _soft_scores(arc_probs, graph, deg, cfg.t_max, beta, gamma)
        slope = softplus(tf.slope_raw)
        ones_row = tensor(np.ones((1, bb.hidden_dim)))

    h = h0
    for t in range(1, cfg.t_max + 1):
        layer = {"weight": params[f"conv{t}.weight"]}
        if bb.kind == "sage_mean":
            layer["weight_nbr"] = params[f"conv{t}.weight_nbr"]
        update = layer_forward(bb, layer, graph, None, h, True, dropout_rng)
        if soft:
            gate = sigmoid(
                scalar_mul(
                    sub(eps_soft, _soft_threshold(tf, slope, t)),
                    1.0 / cfg.temperature,
                )
            )
            tiled = matmul(gate, ones_row)
            h = add(h, elementwise_mul(tiled, sub(update, h)))
        else:
            h = where_rows(plan.active_nodes(t), update, h)

    logits = dense_forward(
        bb,
        {"weight": params[f"dense{cfg.t_max + 1}.weight"]},
        h,
        False,
        dropout_rng,
    )
    return ForwardResult(logits, plan, arc_probs, h0)


def regularization_loss(
    head: SimilarityHead,
    h0: Tensor,
    train_edges: np.ndarray,
    labels: np.ndarray,
) -> Tensor:
    """Mean binary cross-entropy of predicted same-label probabilities
    against the label-agreement indicator, over train-train edges.  Empty
    edge sets contribute a constant zero."""
    edges = np.asarray(train_edges, dtype=np.int64).reshape(-1, 2)
    if edges.shape[0] == 0:
        return tensor([[0.0]])
    y = np.asarray(labels)
    h_u = row_gather(h0, edges[:, 0])
    h_v = row_gather(h0, edges[:, 1])
    probs = pair_probability(head, h_u, h_v)
    target = (y[edges[:, 0]] == y[edges[:, 1]]).astype(np.float64).reshape(-1, 1)
    return binary_cross_entropy(probs, target)


def total_loss(task_loss: Tensor, reg_loss: Tensor, variant: str) -> Tensor:
    """Task loss plus unweighted pair loss for the variants that train a
    head; task loss alone otherwise."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if variant in ("learned", "modified"):
        return add(task_loss, reg_loss)
    return task_loss
