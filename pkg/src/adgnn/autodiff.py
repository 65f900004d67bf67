"""Dense 2-d tensors with reverse-mode differentiation.

Just enough machinery to train the models in this package: a Tensor wraps a
float64 numpy array, primitives record their backward rules onto an active
Tape, and backward() replays the tape once in reverse.  Graph aggregation is
the only sparse piece; it is expressed as multiplication by a scipy.sparse
operator, so its backward rule is multiplication by the transpose.

Tensors are strictly 2-d.  The only broadcasting rule is that the binary
elementwise ops accept a (1, 1) second operand.  A Tape belongs to a single
forward/backward cycle on a single worker; tensors created outside any tape
are plain immutable values.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .graph import Graph

__all__ = [
    "Tensor",
    "Tape",
    "OptimizerState",
    "tensor",
    "set_debug",
    "backward",
    "matmul",
    "add",
    "sub",
    "elementwise_mul",
    "div",
    "scalar_mul",
    "relu",
    "sigmoid",
    "softplus",
    "log",
    "clamp_min",
    "abs_diff",
    "concat_cols",
    "row_gather",
    "segment_sum",
    "mean_all",
    "vec_min",
    "vec_max",
    "where_rows",
    "dropout",
    "spmm_mean_self",
    "spmm_mean_nbr",
    "spmm_symnorm",
    "softmax_cross_entropy",
    "binary_cross_entropy",
    "init_optimizer",
    "adam_step",
    "zero_grad",
    "PROB_EPS",
]

# clamp applied to probabilities before any log
PROB_EPS = 1e-7

_DEBUG = False
_ACTIVE_TAPE: "Tape | None" = None


def set_debug(enabled: bool) -> None:
    """When enabled, every primitive checks its output for NaN/Inf."""
    global _DEBUG
    _DEBUG = bool(enabled)


class Tensor:
    """A 2-d float64 value, optionally tracked for differentiation."""

    __slots__ = ("values", "requires_grad", "grad", "tape_id")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ValueError("tensors are 2-d (rows, cols)")
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.tape_id: int | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError("item() on a non-scalar tensor")
        return float(self.values.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor(values, requires_grad: bool = False) -> Tensor:
    return Tensor(values, requires_grad=requires_grad)


class Tape:
    """Recording of primitive applications in execution (topological) order.

    Use as a context manager around the forward pass; only one tape may be
    recording at a time.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("another tape is already recording")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> None:
        out.tape_id = len(self._nodes)
        self._nodes.append((out, inputs, backward_fn))


def _emit(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    if _DEBUG and not np.all(np.isfinite(out.values)):
        raise FloatingPointError("primitive produced non-finite values")
    if _ACTIVE_TAPE is not None and out.requires_grad and not _ACTIVE_TAPE._consumed:
        _ACTIVE_TAPE._record(out, inputs, backward_fn)
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    # rebind-only accumulation; closures must never mutate a grad in place
    t.grad = g if t.grad is None else t.grad + g


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Propagate d(loss)/d(tensor) through the tape, newest node first.

    Populates .grad on every tensor reached and returns the gradients of the
    requires_grad leaves.  The tape is consumed: a second backward raises.
    """
    if tape._consumed:
        raise RuntimeError("tape already consumed by a previous backward")
    if not tape._nodes:
        raise RuntimeError("backward before any forward was recorded")
    if loss.shape != (1, 1):
        raise ValueError("loss must be a (1, 1) scalar tensor")
    if loss.tape_id is None:
        raise RuntimeError("loss was not produced on this tape")
    loss.grad = np.ones((1, 1))
    leaves: dict[Tensor, np.ndarray] = {}
    for out, inputs, backward_fn in reversed(tape._nodes):
        if out.grad is None:
            continue
        backward_fn(out.grad)
        for t in inputs:
            if t.requires_grad and t.tape_id is None and t.grad is not None:
                leaves[t] = t.grad
    tape._consumed = True
    tape._nodes.clear()
    return leaves


def zero_grad(params: dict[str, Tensor]) -> None:
    for t in params.values():
        t.grad = None
        t.tape_id = None


def _out(values: np.ndarray, *inputs: Tensor) -> Tensor:
    t = Tensor(values, requires_grad=any(i.requires_grad for i in inputs))
    return t


def _check_scalar_or_same(a: Tensor, b: Tensor, op: str) -> bool:
    """True when b broadcasts as a (1, 1) scalar."""
    if b.shape == (1, 1) and a.shape != (1, 1):
        return True
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")
    return False


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dims {a.shape} vs {b.shape}")
    out = _out(a.values @ b.values, a, b)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g @ b.values.T)
        if b.requires_grad:
            _accum(b, a.values.T @ g)

    return _emit(out, (a, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    scalar_b = _check_scalar_or_same(a, b, "add")
    out = _out(a.values + b.values, a, b)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, g.sum().reshape(1, 1) if scalar_b else g)

    return _emit(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    scalar_b = _check_scalar_or_same(a, b, "sub")
    out = _out(a.values - b.values, a, b)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, -(g.sum().reshape(1, 1)) if scalar_b else -g)

    return _emit(out, (a, b), bwd)


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    scalar_b = _check_scalar_or_same(a, b, "elementwise_mul")
    out = _out(a.values * b.values, a, b)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g * b.values)
        if b.requires_grad:
            gb = g * a.values
            _accum(b, gb.sum().reshape(1, 1) if scalar_b else gb)

    return _emit(out, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    scalar_b = _check_scalar_or_same(a, b, "div")
    out = _out(a.values / b.values, a, b)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g / b.values)
        if b.requires_grad:
            gb = -g * a.values / (b.values * b.values)
            _accum(b, gb.sum().reshape(1, 1) if scalar_b else gb)

    return _emit(out, (a, b), bwd)


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = _out(a.values * c, a)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g * c)

    return _emit(out, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0
    out = _out(np.where(mask, a.values, 0.0), a)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g * mask)

    return _emit(out, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    s = expit(a.values)
    out = _out(s, a)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g * s * (1.0 - s))

    return _emit(out, (a,), bwd)


def softplus(a: Tensor) -> Tensor:
    out = _out(np.logaddexp(0.0, a.values), a)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g * expit(a.values))

    return _emit(out, (a,), bwd)


def log(a: Tensor) -> Tensor:
    """Natural log; callers clamp first when inputs can touch zero."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = _out(np.log(a.values), a)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g / a.values)

    return _emit(out, (a,), bwd)


def clamp_min(a: Tensor, floor: float) -> Tensor:
    floor = float(floor)
    open_mask = a.values > floor
    out = _out(np.where(open_mask, a.values, floor), a)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g * open_mask)

    return _emit(out, (a,), bwd)


def abs_diff(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"abs_diff: shape mismatch {a.shape} vs {b.shape}")
    diff = a.values - b.values
    sign = np.sign(diff)
    out = _out(np.abs(diff), a, b)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g * sign)
        if b.requires_grad:
            _accum(b, -g * sign)

    return _emit(out, (a, b), bwd)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[0] != b.shape[0]:
        raise ValueError("concat_cols: row counts differ")
    ca = a.shape[1]
    out = _out(np.hstack([a.values, b.values]), a, b)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g[:, :ca])
        if b.requires_grad:
            _accum(b, g[:, ca:])

    return _emit(out, (a, b), bwd)


def row_gather(a: Tensor, indices: np.ndarray) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("row_gather: indices must be 1-d")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ValueError("row_gather: index out of range")
    out = _out(a.values[idx], a)

    def bwd(g):
        if a.requires_grad:
            acc = np.zeros_like(a.values)
            np.add.at(acc, idx, g)
            _accum(a, acc)

    return _emit(out, (a,), bwd)


def segment_sum(a: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of `a` into `num_segments` buckets given per-row ids."""
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.shape != (a.shape[0],):
        raise ValueError("segment_sum: one segment id per row required")
    if seg.size and (seg.min() < 0 or seg.max() >= num_segments):
        raise ValueError("segment_sum: segment id out of range")
    acc = np.zeros((num_segments, a.shape[1]))
    np.add.at(acc, seg, a.values)
    out = _out(acc, a)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g[seg])

    return _emit(out, (a,), bwd)


def mean_all(a: Tensor) -> Tensor:
    size = a.values.size
    if size == 0:
        raise ValueError("mean_all of an empty tensor")
    out = _out(np.array([[a.values.mean()]]), a)

    def bwd(g):
        if a.requires_grad:
            _accum(a, np.full(a.shape, g[0, 0] / size))

    return _emit(out, (a,), bwd)


def _vec_extreme(a: Tensor, argpick) -> Tensor:
    if a.values.size == 0:
        raise ValueError("extreme of an empty tensor")
    flat_idx = int(argpick(a.values))
    out = _out(np.array([[a.values.reshape(-1)[flat_idx]]]), a)

    def bwd(g):
        if a.requires_grad:
            acc = np.zeros_like(a.values)
            acc.reshape(-1)[flat_idx] = g[0, 0]
            _accum(a, acc)

    return _emit(out, (a,), bwd)


def vec_min(a: Tensor) -> Tensor:
    """Minimum over all entries; subgradient flows to the first minimizer."""
    return _vec_extreme(a, np.argmin)


def vec_max(a: Tensor) -> Tensor:
    return _vec_extreme(a, np.argmax)


def where_rows(row_condition: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Per-row exact selection: row v of `a` where the condition holds,
    row v of `b` elsewhere.  Gradients route to the selected branch only."""
    cond = np.asarray(row_condition, dtype=bool)
    if a.shape != b.shape:
        raise ValueError("where_rows: shape mismatch")
    if cond.shape != (a.shape[0],):
        raise ValueError("where_rows: one condition per row required")
    sel = cond[:, None]
    out = _out(np.where(sel, a.values, b.values), a, b)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g * sel)
        if b.requires_grad:
            _accum(b, g * ~sel)

    return _emit(out, (a, b), bwd)


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout with the mask drawn from `rng` and saved for backward."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if rate == 0.0:
        return a
    keep = rng.random(a.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    out = _out(a.values * keep * scale, a)

    def bwd(g):
        if a.requires_grad:
            _accum(a, g * keep * scale)

    return _emit(out, (a,), bwd)


# ---------------------------------------------------------------------------
# sparse aggregation


def _masked_adjacency(graph: Graph, arc_mask: np.ndarray | None) -> tuple[sp.csr_matrix, np.ndarray]:
    src = graph.arc_sources()
    dst = graph.csr_neighbors
    if arc_mask is not None:
        mask = np.asarray(arc_mask, dtype=bool)
        if mask.shape != (dst.shape[0],):
            raise ValueError("arc mask must cover every directed arc")
        src, dst = src[mask], dst[mask]
    n = graph.num_nodes
    adj = sp.csr_matrix(
        (np.ones(src.shape[0]), (src, dst)), shape=(n, n)
    )
    deg = np.bincount(src, minlength=n).astype(np.float64)
    return adj, deg


_full_operator_cache: "weakref.WeakKeyDictionary[Graph, dict[str, sp.csr_matrix]]" = weakref.WeakKeyDictionary()


def _operator(graph: Graph, arc_mask: np.ndarray | None, kind: str) -> sp.csr_matrix:
    if arc_mask is None:
        cached = _full_operator_cache.get(graph, {}).get(kind)
        if cached is not None:
            return cached
    adj, deg = _masked_adjacency(graph, arc_mask)
    n = graph.num_nodes
    if kind == "mean_self":
        op = sp.diags(1.0 / (deg + 1.0)) @ (sp.eye(n, format="csr") + adj)
    elif kind == "mean_nbr":
        inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        op = sp.diags(inv) @ adj
    elif kind == "symnorm":
        inv_sqrt = 1.0 / np.sqrt(deg + 1.0)
        d = sp.diags(inv_sqrt)
        op = d @ (sp.eye(n, format="csr") + adj) @ d
    else:
        raise ValueError(f"unknown aggregation kind {kind!r}")
    op = op.tocsr()
    if arc_mask is None:
        _full_operator_cache.setdefault(graph, {})[kind] = op
    return op


def _spmm(graph: Graph, arc_mask: np.ndarray | None, h: Tensor, kind: str) -> Tensor:
    if h.shape[0] != graph.num_nodes:
        raise ValueError("feature rows must match node count")
    op = _operator(graph, arc_mask, kind)
    out = _out(op @ h.values, h)
    op_t = op.T.tocsr()

    def bwd(g):
        if h.requires_grad:
            _accum(h, op_t @ g)

    return _emit(out, (h,), bwd)


def spmm_mean_self(graph: Graph, arc_mask: np.ndarray | None, h: Tensor) -> Tensor:
    """Self-inclusive mean over active neighbors:
    out_v = (h_v + sum of active neighbor rows) / (active degree + 1).
    Rows with no active arcs pass through unchanged."""
    return _spmm(graph, arc_mask, h, "mean_self")


def spmm_mean_nbr(graph: Graph, arc_mask: np.ndarray | None, h: Tensor) -> Tensor:
    """Plain neighbor mean without the self term; isolated rows become 0."""
    return _spmm(graph, arc_mask, h, "mean_nbr")


def spmm_symnorm(graph: Graph, arc_mask: np.ndarray | None, h: Tensor) -> Tensor:
    """Symmetric-normalized propagation with an implicit self loop,
    restricted to the active arcs."""
    return _spmm(graph, arc_mask, h, "symnorm")


# ---------------------------------------------------------------------------
# losses


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean cross-entropy of row-softmax against integer labels, over the
    rows selected by `mask`."""
    y = np.asarray(labels, dtype=np.int64)
    m = np.asarray(mask, dtype=bool)
    if y.shape != (logits.shape[0],) or m.shape != y.shape:
        raise ValueError("labels and mask must be 1-d with one entry per row")
    count = int(m.sum())
    if count == 0:
        raise ValueError("loss over an empty mask")
    z = logits.values
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax + np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))
    logp = z - lse
    rows = np.nonzero(m)[0]
    out = _out(np.array([[-logp[rows, y[rows]].mean()]]), logits)

    def bwd(g):
        if logits.requires_grad:
            grad = np.exp(logp)
            grad[rows, y[rows]] -= 1.0
            grad *= m[:, None] / count
            _accum(logits, grad * g[0, 0])

    return _emit(out, (logits,), bwd)


def binary_cross_entropy(probs: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy with probabilities clamped to
    [PROB_EPS, 1 - PROB_EPS] before the logs."""
    t = np.asarray(targets, dtype=np.float64)
    if t.ndim == 1:
        t = t.reshape(-1, 1)
    if t.shape != probs.shape:
        raise ValueError("targets must match probability shape")
    if probs.values.size == 0:
        raise ValueError("loss over an empty probability set")
    p = np.clip(probs.values, PROB_EPS, 1.0 - PROB_EPS)
    inside = (probs.values > PROB_EPS) & (probs.values < 1.0 - PROB_EPS)
    value = -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)).mean()
    out = _out(np.array([[value]]), probs)

    def bwd(g):
        if probs.requires_grad:
            grad = (p - t) / (p * (1.0 - p)) / p.size
            _accum(probs, grad * inside * g[0, 0])

    return _emit(out, (probs,), bwd)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    """Adam accumulators; one slot per parameter name."""

    lr: float
    beta1: float
    beta2: float
    eps: float
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def init_optimizer(
    params: dict[str, Tensor],
    lr: float = 0.01,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> OptimizerState:
    state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name, p in params.items():
        state.first_moment[name] = np.zeros_like(p.values)
        state.second_moment[name] = np.zeros_like(p.values)
    return state


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    weight_decay: float = 0.0,
) -> dict[str, Tensor]:
    """One bias-corrected Adam update, in place.

    Parameters with no gradient entry are skipped.  weight_decay adds the
    classic L2 term g + wd * p before the moment updates.
    """
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.values.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        if weight_decay:
            g = g + weight_decay * p.values
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p.values -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params
