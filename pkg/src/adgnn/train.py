"""Training loop, evaluation metrics, and multi-seed aggregation.

Trains either a plain backbone or the adaptive-depth model with Adam on
the combined objective, selects the parameter snapshot at the best
validation accuracy, and reports per-seed test accuracy with mean and
population standard deviation across seeds.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import (
    Tape,
    Tensor,
    adam_step,
    backward,
    init_optimizer,
    softmax_cross_entropy,
    tensor,
)
from .backbones import BackboneConfig, init_params, plain_forward
from .graph import Graph, LabelVector, SplitMask, train_edge_set
from .model import (
    AdGnnConfig,
    ForwardResult,
    forward,
    init_adgnn_params,
    regularization_loss,
    similarity_head,
    total_loss,
)

__all__ = [
    "TrainConfig",
    "SeedResult",
    "RunResult",
    "annealed_temperature",
    "accuracy",
    "fit_model",
    "train_model",
    "multi_seed",
]

# Soft-gate temperature schedule: halve every 100 epochs, never below 1e-3.
# Anneal fast enough that a default-length run reaches the near-hard
# regime with room to spare.  Evaluation is always hard; a checkpoint
# selected while the gates are still warm feeds the classifier blended
# rows, and the frozen rows it meets at eval time look nothing like them.
_ANNEAL_EVERY = 25
_ANNEAL_FACTOR = 0.5
_TEMPERATURE_FLOOR = 1e-3

# Soft-gated training starts with this many hard-gated epochs.  Letting
# task gradients reach the similarity head through the gates from epoch 0
# is a seed lottery on tall trunks: the task briefly prefers everyone
# shallow while the deep layers are random, and that pressure either
# saturates the head or shoves it past the zero-agreement singularity,
# where depth assignments blow up and the run never recovers.  Hard gates
# cost nothing here: the head still learns from its own edge loss, the
# trunk still learns from the task, and the gates only start steering
# once both are worth listening to.
_GATE_WARMUP_EPOCHS = 30

# The two depth-policy scalars step at a tenth of the trunk rate.  While
# the deep layers are still random the task loss prefers stopping every
# node shallow; at the full rate that early verdict drags the thresholds
# up faster than the trunk can earn its keep, and best-val selection then
# freezes the crippled gate.
_POLICY_LR_SCALE = 0.1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 0.01
    weight_decay: float = 0.0
    dropout: float = 0.0
    hidden_dim: int = 16
    seeds: tuple[int, ...] = (0,)
    early_stop_patience: int | None = None

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be positive")
        if len(self.seeds) == 0:
            raise ValueError("at least one seed required")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValueError("patience must be positive when set")


@dataclass(frozen=True)
class SeedResult:
    seed: int
    test_accuracy: float
    best_val_epoch: int
    best_val_accuracy: float
    val_history: tuple[float, ...]
    mean_stopping_depth: float
    depth_histogram: tuple[int, ...]

    def csv_row(self) -> dict:
        return {
            "seed": self.seed,
            "test_accuracy": self.test_accuracy,
            "best_val_epoch": self.best_val_epoch,
            "best_val_accuracy": self.best_val_accuracy,
            "mean_stopping_depth": self.mean_stopping_depth,
        }


@dataclass(frozen=True)
class RunResult:
    seed_results: tuple[SeedResult, ...]

    def __post_init__(self) -> None:
        if len(self.seed_results) == 0:
            raise ValueError("a run needs at least one seed result")

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.test_accuracy for r in self.seed_results])

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std(self) -> float:
        """Population standard deviation over seeds."""
        return float(self.accuracies.std())

    def as_json_dict(self) -> dict:
        return {
            "accuracy_mean": self.mean,
            "accuracy_std": self.std,
            "seeds": [
                {
                    **r.csv_row(),
                    "depth_histogram": list(r.depth_histogram),
                }
                for r in self.seed_results
            ],
        }


def annealed_temperature(base: float, epoch_index: int) -> float:
    return max(base * _ANNEAL_FACTOR ** (epoch_index // _ANNEAL_EVERY),
               _TEMPERATURE_FLOOR)


def accuracy(logits, labels: np.ndarray, mask: np.ndarray) -> float:
    """Argmax match rate over the masked rows; argmax takes the lowest
    class index on ties."""
    vals = logits.values if isinstance(logits, Tensor) else np.asarray(logits)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty evaluation mask")
    pred = np.argmax(vals[mask], axis=1)
    return float((pred == np.asarray(labels)[mask]).mean())


def _init(cfg, in_dim: int, num_classes: int, seed: int) -> dict[str, Tensor]:
    if isinstance(cfg, AdGnnConfig):
        return init_adgnn_params(cfg, in_dim, num_classes, seed)
    return init_params(cfg, in_dim, num_classes, seed)


def _train_output(cfg, params, graph, x, rng, depth_override, calibration):
    if isinstance(cfg, AdGnnConfig):
        return forward(
            cfg, params, graph, x,
            dropout_rng=rng, depth_override=depth_override,
            calibration=calibration,
        )
    return plain_forward(cfg, params, graph, x, dropout_rng=rng)


def _eval_logits(cfg, params, graph, x, depth_override, calibration):
    if isinstance(cfg, AdGnnConfig):
        hard = dataclasses.replace(cfg, gating="hard")
        return forward(
            hard, params, graph, x,
            depth_override=depth_override, calibration=calibration,
        )
    return plain_forward(cfg, params, graph, x)


def _decay_weights(params: dict[str, Tensor], lr: float, wd: float) -> None:
    # decoupled decay, applied to weight matrices before the Adam update;
    # the threshold scalars are left alone
    if wd == 0.0:
        return
    for name, p in params.items():
        if not name.startswith("threshold."):
            p.values *= 1.0 - lr * wd


def fit_model(
    cfg: AdGnnConfig | BackboneConfig,
    data: tuple[Graph, np.ndarray, LabelVector],
    split: SplitMask,
    tc: TrainConfig,
    seed: int,
    depth_override: np.ndarray | None = None,
    calibration: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[SeedResult, dict[str, np.ndarray]]:
    """Train one seed and return its result plus the selected parameter
    values (the snapshot at the best validation epoch)."""
    graph, features, labels = data
    x = tensor(np.asarray(features, dtype=np.float64))
    y = labels.labels
    num_classes = labels.num_classes
    adaptive = isinstance(cfg, AdGnnConfig)
    params = _init(cfg, x.shape[1], num_classes, seed)
    policy = {n: p for n, p in params.items() if n.startswith("threshold.")}
    trunk = {n: p for n, p in params.items() if n not in policy}
    state = init_optimizer(trunk, lr=tc.lr)
    policy_state = (
        init_optimizer(policy, lr=tc.lr * _POLICY_LR_SCALE) if policy else None
    )
    rng = np.random.default_rng(seed)
    needs_reg = adaptive and cfg.variant in ("learned", "modified")
    train_edges = train_edge_set(graph, split) if needs_reg else None

    best_val = -1.0
    best_epoch = -1
    best_values: dict[str, np.ndarray] = {}
    history: list[float] = []
    for epoch in range(tc.epochs):
        epoch_cfg = cfg
        if adaptive and cfg.gating == "soft":
            if epoch < _GATE_WARMUP_EPOCHS:
                epoch_cfg = dataclasses.replace(cfg, gating="hard")
            else:
                epoch_cfg = dataclasses.replace(
                    cfg,
                    temperature=annealed_temperature(
                        cfg.temperature, epoch - _GATE_WARMUP_EPOCHS
                    ),
                )
        with Tape() as tape:
            out = _train_output(
                epoch_cfg, params, graph, x, rng, depth_override, calibration
            )
            logits = out.logits if isinstance(out, ForwardResult) else out
            task = softmax_cross_entropy(logits, y, split.train)
            if needs_reg:
                reg = regularization_loss(
                    similarity_head(params), out.h0, train_edges, y
                )
                loss = total_loss(task, reg, cfg.variant)
            else:
                loss = task
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            raise RuntimeError(
                f"training diverged: non-finite loss {loss_value!r} at epoch "
                f"{epoch} (seed {seed}, lr {tc.lr})"
            )
        leaf_grads = backward(tape, loss)
        named_grads = {
            name: leaf_grads[p] for name, p in params.items() if p in leaf_grads
        }
        _decay_weights(params, tc.lr, tc.weight_decay)
        adam_step(trunk, named_grads, state)
        if policy_state is not None:
            adam_step(policy, named_grads, policy_state)

        val_out = _eval_logits(cfg, params, graph, x, depth_override, calibration)
        val_logits = val_out.logits if isinstance(val_out, ForwardResult) else val_out
        val_acc = accuracy(val_logits, y, split.val)
        history.append(val_acc)
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_values = {k: p.values.copy() for k, p in params.items()}
        elif (
            tc.early_stop_patience is not None
            and epoch - best_epoch >= tc.early_stop_patience
        ):
            break

    for k, p in params.items():
        p.values[:] = best_values[k]
    final = _eval_logits(cfg, params, graph, x, depth_override, calibration)
    if isinstance(final, ForwardResult):
        test_acc = accuracy(final.logits, y, split.test)
        mean_depth = final.plan.mean_depth()
        hist = tuple(int(c) for c in final.plan.depth_histogram())
    else:
        test_acc = accuracy(final, y, split.test)
        mean_depth = float("nan")
        hist = ()
    result = SeedResult(
        seed=seed,
        test_accuracy=test_acc,
        best_val_epoch=best_epoch,
        best_val_accuracy=best_val,
        val_history=tuple(history),
        mean_stopping_depth=mean_depth,
        depth_histogram=hist,
    )
    return result, best_values


def train_model(
    cfg: AdGnnConfig | BackboneConfig,
    data: tuple[Graph, np.ndarray, LabelVector],
    split: SplitMask,
    tc: TrainConfig,
    seed: int,
    depth_override: np.ndarray | None = None,
    calibration: tuple[np.ndarray, np.ndarray] | None = None,
) -> SeedResult:
    return fit_model(cfg, data, split, tc, seed, depth_override, calibration)[0]


def multi_seed(
    run_one: Callable[[int], SeedResult], seeds: Sequence[int]
) -> RunResult:
    if len(seeds) == 0:
        raise ValueError("at least one seed required")
    return RunResult(tuple(run_one(int(s)) for s in seeds))
