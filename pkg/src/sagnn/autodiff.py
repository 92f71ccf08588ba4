"""Dense numerical core with reverse-mode differentiation.

Covers exactly the operations the skip-aggregation network needs: matrix
product, column concatenation, rectified linear, logistic, row L2
normalization, row gather/select, segmented aggregation, and binary
cross-entropy. Values are 2-D float64 arrays (float32 storage is available
for deployment via ``set_default_dtype``; tests require float64).

Ops executed inside a ``with Tape():`` block record a backward closure; the
reverse sweep visits closures in exact reverse execution order and a tape
can be swept once. Without an active tape, ops are plain numpy evaluations.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError, ValidationError

_DTYPE = np.float64

PROB_EPS = 1e-7  # clamp for probabilities entering the log loss

_CHECKPOINT_MAGIC = b"SAGW"
_CHECKPOINT_VERSION = 1


def set_default_dtype(dtype) -> None:
    """Switch value storage between float64 (default) and float32."""
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise ValidationError("dtype must be float32 or float64")
    _DTYPE = dtype.type


def default_dtype():
    return _DTYPE


def _require_finite(name: str, arr: np.ndarray) -> None:
    # Fast path: a finite sum implies finite entries; confirm before raising
    # so a merely overflowing sum of finite values does not false-alarm.
    if not np.isfinite(arr.sum()) and not np.isfinite(arr).all():
        raise ValueError(f"{name}: non-finite values in input")


class Tensor:
    """A 2-D float matrix with a gradient slot."""

    __slots__ = ("value", "grad")

    def __init__(self, value, check: bool = True):
        arr = np.asarray(value, dtype=_DTYPE)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
        self.value = np.ascontiguousarray(arr)
        self.grad = None
        if check:
            _require_finite("tensor", self.value)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, dtype={self.value.dtype})"


class Parameter(Tensor):
    """A trainable matrix with optimizer state."""

    __slots__ = ("adam_m", "adam_v", "step_count", "name")

    def __init__(self, value, name: str = ""):
        super().__init__(value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)
        self.step_count = 0
        self.name = name

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of executed primitives, swept once in reverse.

    One tape is active per process; data-parallel training runs one worker
    process per tape and reduces gradients in fixed worker order.
    """

    current: "Tape | None" = None

    def __init__(self):
        self._steps = []
        self._consumed = False

    def __enter__(self):
        if Tape.current is not None:
            raise RuntimeError("a tape is already active; tapes do not nest")
        Tape.current = self
        return self

    def __exit__(self, exc_type, exc, tb):
        Tape.current = None
        return False

    def record(self, fn) -> None:
        self._steps.append(fn)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(input) into every recorded input's grad."""
        if self._consumed:
            raise RuntimeError("tape already backpropagated; run a new forward")
        if loss.value.size != 1:
            raise ValueError("backward requires a scalar loss")
        self._consumed = True
        loss.grad = np.ones_like(loss.value)
        for fn in reversed(self._steps):
            fn()
        self._steps.clear()


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=t.value.dtype)
    else:
        t.grad += g


def _record(fn) -> None:
    if Tape.current is not None:
        Tape.current.record(fn)


# --- primitives --------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.shape[1] != b.value.shape[0]:
        raise ValueError(
            f"matmul shape mismatch: {a.value.shape} @ {b.value.shape}")
    _require_finite("matmul lhs", a.value)
    _require_finite("matmul rhs", b.value)
    out = Tensor(a.value @ b.value, check=False)

    def backward():
        if out.grad is None:
            return
        _accumulate(a, out.grad @ b.value.T)
        _accumulate(b, a.value.T @ out.grad)

    _record(backward)
    return out


def concat_cols(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.shape[0] != b.value.shape[0]:
        raise ValueError(
            f"concat_cols row mismatch: {a.value.shape} vs {b.value.shape}")
    split = a.value.shape[1]
    out = Tensor(np.hstack([a.value, b.value]), check=False)

    def backward():
        if out.grad is None:
            return
        _accumulate(a, out.grad[:, :split])
        _accumulate(b, out.grad[:, split:])

    _record(backward)
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    _require_finite("relu", a.value)
    out = Tensor(np.maximum(a.value, 0.0), check=False)

    def backward():
        if out.grad is None:
            return
        _accumulate(a, out.grad * (a.value > 0.0))

    _record(backward)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    _require_finite("sigmoid", a.value)
    x = a.value
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    out = Tensor(s, check=False)

    def backward():
        if out.grad is None:
            return
        _accumulate(a, out.grad * s * (1.0 - s))

    _record(backward)
    return out


def row_l2_normalize(a) -> Tensor:
    """Scale every row to unit L2 norm; all-zero rows pass through unchanged."""
    a = as_tensor(a)
    _require_finite("row_l2_normalize", a.value)
    norms = np.linalg.norm(a.value, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    out = Tensor(a.value / safe, check=False)

    def backward():
        if out.grad is None:
            return
        g = out.grad
        inner = np.sum(g * out.value, axis=1, keepdims=True)
        _accumulate(a, (g - out.value * inner) / safe)

    _record(backward)
    return out


def gather_rows(a, indices) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("gather_rows indices must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= a.value.shape[0]):
        raise ValueError("gather_rows index out of range")
    out = Tensor(a.value[idx], check=False)

    def backward():
        if out.grad is None:
            return
        ga = np.zeros_like(a.value)
        np.add.at(ga, idx, out.grad)
        _accumulate(a, ga)

    _record(backward)
    return out


def select_rows(a, b, take_a) -> Tensor:
    """Per-row choice: row i of ``a`` where ``take_a[i]``, else row i of ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.value.shape != b.value.shape:
        raise ValueError(
            f"select_rows shape mismatch: {a.value.shape} vs {b.value.shape}")
    mask = np.asarray(take_a, dtype=bool)
    if mask.shape != (a.value.shape[0],):
        raise ValueError("select_rows mask must have one entry per row")
    col_mask = mask[:, None]
    out = Tensor(np.where(col_mask, a.value, b.value), check=False)

    def backward():
        if out.grad is None:
            return
        _accumulate(a, out.grad * col_mask)
        _accumulate(b, out.grad * ~col_mask)

    _record(backward)
    return out


def add_bias(a, bias) -> Tensor:
    """Add a 1-row bias to every row."""
    a, bias = as_tensor(a), as_tensor(bias)
    if bias.value.shape != (1, a.value.shape[1]):
        raise ValueError(
            f"bias shape {bias.value.shape} does not broadcast over"
            f" {a.value.shape}")
    out = Tensor(a.value + bias.value, check=False)

    def backward():
        if out.grad is None:
            return
        _accumulate(a, out.grad)
        _accumulate(bias, out.grad.sum(axis=0, keepdims=True))

    _record(backward)
    return out


AGGREGATOR_KINDS = ("mean", "max", "sum", "weighted_sum")


def segment_aggregate(rows, segment_ids, num_segments: int, kind: str = "mean",
                      weights=None) -> Tensor:
    """Aggregate row groups into one row per segment.

    ``segment_ids`` must be sorted ascending and cover every segment in
    [0, num_segments); empty segments are an error. ``mean`` runs through the
    weighted path with uniform weights, so it is exactly a uniform
    weighted_sum. Gradient of ``max`` routes to the lowest-index row among
    column ties.
    """
    rows = as_tensor(rows)
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.ndim != 1 or seg.shape[0] != rows.value.shape[0]:
        raise ValueError("segment_ids must be 1-D with one entry per row")
    if rows.value.shape[0] == 0:
        raise ValueError("cannot aggregate zero rows")
    if np.any(seg[1:] < seg[:-1]):
        raise ValueError("segment_ids must be sorted ascending")
    if kind not in AGGREGATOR_KINDS:
        raise ValueError(f"unknown aggregator {kind!r}; expected one of"
                         f" {AGGREGATOR_KINDS}")
    _require_finite("segment_aggregate", rows.value)

    starts = np.flatnonzero(np.r_[True, seg[1:] != seg[:-1]])
    seg_of_start = seg[starts]
    if len(starts) != num_segments or seg_of_start[0] != 0 or \
            seg_of_start[-1] != num_segments - 1:
        raise ValueError("every segment in [0, num_segments) must be non-empty")
    counts = np.diff(np.append(starts, len(seg)))

    if kind == "weighted_sum":
        if weights is None:
            raise ValueError("weighted_sum requires weights")
        w = np.asarray(weights, dtype=rows.value.dtype).reshape(-1)
        if w.shape[0] != rows.value.shape[0]:
            raise ValueError("weights must have one entry per row")
        sums = np.add.reduceat(w, starts)
        if not np.allclose(sums, 1.0, atol=1e-8):
            raise ValueError("weighted_sum weights must sum to 1 per segment")
    elif kind == "mean":
        w = np.repeat(1.0 / counts, counts).astype(rows.value.dtype)
    else:
        w = None

    if kind in ("mean", "weighted_sum"):
        out = Tensor(np.add.reduceat(rows.value * w[:, None], starts),
                     check=False)

        def backward():
            if out.grad is None:
                return
            _accumulate(rows, out.grad[seg] * w[:, None])

    elif kind == "sum":
        out = Tensor(np.add.reduceat(rows.value, starts), check=False)

        def backward():
            if out.grad is None:
                return
            _accumulate(rows, out.grad[seg])

    else:  # max
        maxed = np.maximum.reduceat(rows.value, starts)
        pos = np.arange(rows.value.shape[0], dtype=np.int64)[:, None]
        hit = np.where(rows.value == maxed[seg], pos, rows.value.shape[0])
        first = np.minimum.reduceat(hit, starts)
        route = hit == first[seg]
        out = Tensor(maxed, check=False)

        def backward():
            if out.grad is None:
                return
            _accumulate(rows, out.grad[seg] * route)

    _record(backward)
    return out


def aggregate(rows, kind: str = "mean", weights=None) -> Tensor:
    """Collapse all rows into a single row (one-segment aggregation)."""
    rows = as_tensor(rows)
    if rows.value.shape[0] == 0:
        raise ValueError("cannot aggregate zero rows")
    seg = np.zeros(rows.value.shape[0], dtype=np.int64)
    return segment_aggregate(rows, seg, 1, kind=kind, weights=weights)


def bce_loss(probabilities, labels) -> Tensor:
    """Mean binary cross-entropy over a column of probabilities.

    Probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] before the logs;
    the gradient is exact for the clamped composite (zero where the clamp is
    active). Labels must be exactly 0 or 1.
    """
    p = as_tensor(probabilities)
    if p.value.shape[1] != 1:
        raise ValueError("probabilities must be a single column")
    y = np.asarray(labels, dtype=p.value.dtype).reshape(-1, 1)
    if y.shape[0] != p.value.shape[0]:
        raise ValueError("labels length must match probabilities")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be exactly 0 or 1")
    _require_finite("bce_loss", p.value)

    pc = np.clip(p.value, PROB_EPS, 1.0 - PROB_EPS)
    per_item = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    out = Tensor([[per_item.mean()]], check=False)
    batch = p.value.shape[0]

    def backward():
        if out.grad is None:
            return
        inside = (p.value > PROB_EPS) & (p.value < 1.0 - PROB_EPS)
        dp = (pc - y) / (pc * (1.0 - pc)) / batch
        _accumulate(p, out.grad[0, 0] * dp * inside)

    _record(backward)
    return out


# --- checkpoints --------------------------------------------------------------
#
# Layout (little-endian): magic "SAGW", u32 version, u32 tensor count, then
# per tensor sorted by name: u32 name byte length, UTF-8 name, u64 rows,
# u64 cols, row-major float64 data.


def save_checkpoint(path, tensors: dict) -> None:
    """Write named tensors (Parameter, Tensor, or ndarray values)."""
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", _CHECKPOINT_VERSION, len(tensors)))
        for name in sorted(tensors):
            value = tensors[name]
            if isinstance(value, Tensor):
                value = value.value
            arr = np.ascontiguousarray(value, dtype="<f8")
            if arr.ndim != 2:
                raise ValidationError(f"tensor {name!r} must be 2-D")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict:
    def need(fh, n, what):
        data = fh.read(n)
        if len(data) != n:
            raise FormatError(f"truncated checkpoint while reading {what}")
        return data

    out = {}
    with open(path, "rb") as fh:
        if need(fh, 4, "magic") != _CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: not a checkpoint file (bad magic)")
        version, count = struct.unpack("<II", need(fh, 8, "header"))
        if version != _CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<I", need(fh, 4, "name length"))
            name = need(fh, name_len, "name").decode("utf-8")
            rows, cols = struct.unpack("<QQ", need(fh, 16, "shape"))
            raw = need(fh, rows * cols * 8, f"tensor {name!r}")
            out[name] = np.frombuffer(raw, dtype="<f8").reshape(
                rows, cols).astype(np.float64, copy=True)
    return out
