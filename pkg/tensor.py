"""
Dense float64 tensors with a minimal reverse-mode gradient tape.

Every value in the models is a Tensor. A Tensor is immutable; when one of
the inputs of an operation is attached to a Tape, the operation records a
node holding the input handles, the output handle and a backward rule.
`backward` replays those nodes in reverse and returns the gradient of a
scalar loss with respect to every parameter registered with `Tape.watch`.

Conventions: row-major, batch dimension first. Elementwise operations
accept equal shapes, or a trailing 1-D vector broadcast over all leading
dimensions (the bias rule). Nothing else broadcasts.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ContractError, DimensionError

logger = logging.getLogger(__name__)

Shape = Tuple[int, ...]
BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]


class Tensor:
    """Immutable float64 array, optionally linked to a node on a Tape"""

    __slots__ = ("data", "tape", "handle")

    def __init__(self, data: ArrayLike, tape: Optional["Tape"] = None, handle: Optional[int] = None):
        if isinstance(data, Tensor):
            data = data.data
        array = np.array(data, dtype=np.float64)
        array.flags.writeable = False
        self.data = array
        self.tape = tape
        self.handle = handle

    @classmethod
    def wrap(cls, array: np.ndarray, tape: Optional["Tape"] = None, handle: Optional[int] = None) -> "Tensor":
        """Wrap a freshly computed array without copying it"""
        obj = cls.__new__(cls)
        array = np.asarray(array, dtype=np.float64)
        if array.flags.writeable:
            array.flags.writeable = False
        obj.data = array
        obj.tape = tape
        obj.handle = handle
        return obj

    @property
    def shape(self) -> Shape:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def attached(self) -> bool:
        return self.tape is not None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor.wrap(self.data)

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __repr__(self) -> str:
        where = f", handle={self.handle}" if self.tape is not None else ""
        return f"Tensor(shape={self.shape}{where})"


@dataclass(frozen=True)
class TapeNode:
    op: str
    inputs: Tuple[Optional[int], ...]
    output: int
    backward: BackwardRule


class Tape:
    """Ordered recording of primitive operations; confined to one thread"""

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self._shapes: List[Shape] = []
        self.parameters: Dict[int, str] = {}

    def _new_handle(self, shape: Shape) -> int:
        self._shapes.append(tuple(shape))
        return len(self._shapes) - 1

    def watch(self, value: ArrayLike, name: Optional[str] = None) -> Tensor:
        """Register a parameter leaf and return it attached to this tape"""
        value = as_tensor(value)
        handle = self._new_handle(value.shape)
        self.parameters[handle] = name if name is not None else f"param_{handle}"
        return Tensor.wrap(value.data, self, handle)

    def record(self, op: str, inputs: Sequence[Tensor], value: np.ndarray, rule: BackwardRule) -> Tensor:
        handle = self._new_handle(np.shape(value))
        input_handles = tuple(t.handle if t.tape is self else None for t in inputs)
        self.nodes.append(TapeNode(op, input_handles, handle, rule))
        return Tensor.wrap(value, self, handle)

    def shape_of(self, handle: int) -> Shape:
        return self._shapes[handle]

    def __len__(self) -> int:
        return len(self.nodes)


def as_tensor(value: ArrayLike) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _common_tape(inputs: Sequence[Tensor]) -> Optional[Tape]:
    tape = None
    for t in inputs:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise ContractError("operands are attached to different tapes")
    return tape


def record_op(op: str, inputs: Sequence[Tensor], value: np.ndarray, rule: BackwardRule) -> Tensor:
    """Return `value` as a Tensor, recording `rule` when any input is tape-attached.

    `rule(grad_out)` must return one gradient (or None) per input, each
    shaped like that input.
    """
    tape = _common_tape(inputs)
    if tape is None:
        return Tensor.wrap(value)
    return tape.record(op, inputs, value, rule)


def backward(tape: Tape, loss: Tensor) -> Dict[int, Tensor]:
    """Gradient of the scalar `loss` with respect to every watched parameter.

    Returns {parameter handle: gradient}. Parameters that do not influence
    the loss get zero gradients. Contributions from repeated use of a
    parameter (e.g. across timesteps) are summed.
    """
    if loss.size != 1:
        raise ContractError(f"loss must be a scalar, got shape {loss.shape}")
    if loss.tape is not tape or loss.handle is None:
        raise ContractError("loss was not recorded on this tape")

    grads: Dict[int, np.ndarray] = {loss.handle: np.ones(loss.shape)}
    for node in reversed(tape.nodes):
        if node.output > loss.handle:
            continue
        grad_out = grads.pop(node.output, None)
        if grad_out is None:
            continue
        for handle, grad_in in zip(node.inputs, node.backward(grad_out)):
            if handle is None or grad_in is None:
                continue
            if handle in grads:
                grads[handle] = grads[handle] + grad_in
            else:
                grads[handle] = grad_in

    return {
        handle: Tensor.wrap(grads[handle] if handle in grads else np.zeros(tape.shape_of(handle)))
        for handle in tape.parameters
    }


# ---------------------------------------------------------------- construction

def zeros(shape: Sequence[int]) -> Tensor:
    return Tensor.wrap(np.zeros(tuple(shape)))


def ones(shape: Sequence[int]) -> Tensor:
    return Tensor.wrap(np.ones(tuple(shape)))


def full(shape: Sequence[int], value: float) -> Tensor:
    return Tensor.wrap(np.full(tuple(shape), float(value)))


def eye(n: int) -> Tensor:
    return Tensor.wrap(np.eye(n))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed for a named sub-stream of `seed`"""
    return int(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(1)[0])


def _generator(seed: int) -> np.random.Generator:
    # PCG64 gives identical streams for identical seeds on every platform.
    return np.random.Generator(np.random.PCG64(int(seed)))


def rng_uniform(seed: int, shape: Sequence[int], low: float, high: float) -> Tensor:
    """Uniform draws in [low, high) from a PCG64 stream seeded with `seed`"""
    if not low < high:
        raise ContractError(f"rng_uniform needs low < high, got low={low}, high={high}")
    values = _generator(seed).uniform(low, high, size=tuple(shape))
    # low + (high - low) * u can round up to high when the range is tiny
    values = np.minimum(values, np.nextafter(high, low))
    return Tensor.wrap(values)


def glorot_uniform(seed: int, n_in: int, n_out: int, shape: Optional[Sequence[int]] = None) -> Tensor:
    bound = float(np.sqrt(6.0 / (n_in + n_out)))
    return rng_uniform(seed, shape if shape is not None else (n_in, n_out), -bound, bound)


def orthogonal(seed: int, n_rows: int, n_cols: int) -> Tensor:
    """Orthogonal matrix (QR of a Gaussian draw, sign-corrected)"""
    flat = _generator(seed).normal(0.0, 1.0, size=(max(n_rows, n_cols), min(n_rows, n_cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if n_rows < n_cols:
        q = q.T
    return Tensor.wrap(np.ascontiguousarray(q[:n_rows, :n_cols]))


# ---------------------------------------------------------------- primitives

def _bias_side(a: Tensor, b: Tensor, op: str) -> Optional[str]:
    """Which operand (if any) is a trailing vector broadcast over the other"""
    if a.shape == b.shape:
        return None
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return "b"
    if a.ndim == 1 and b.ndim >= 1 and b.shape[-1] == a.shape[0]:
        return "a"
    raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not conform")


def _reduce_to(grad: np.ndarray, shape: Shape) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return grad.reshape(-1, shape[0]).sum(axis=0)


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    value = a.data @ b.data

    def rule(g):
        return g @ b.data.T, a.data.T @ g

    return record_op("matmul", (a, b), value, rule)


def transpose(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {a.shape}")
    return record_op("transpose", (a,), np.ascontiguousarray(a.data.T), lambda g: (g.T,))


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bias_side(a, b, "add")

    def rule(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return record_op("add", (a, b), a.data + b.data, rule)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bias_side(a, b, "sub")

    def rule(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return record_op("sub", (a, b), a.data - b.data, rule)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bias_side(a, b, "mul")

    def rule(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return record_op("mul", (a, b), a.data * b.data, rule)


def scale(a: ArrayLike, factor: float) -> Tensor:
    a = as_tensor(a)
    factor = float(factor)
    return record_op("scale", (a,), a.data * factor, lambda g: (g * factor,))


def one_minus(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return record_op("one_minus", (a,), 1.0 - a.data, lambda g: (-g,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return record_op("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))


def tanh(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return record_op("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))


def silu(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return record_op("silu", (x,), x.data * s, lambda g: (g * (s + x.data * s * (1.0 - s)),))


def square(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return record_op("square", (x,), x.data * x.data, lambda g: (2.0 * g * x.data,))


def sum_all(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return record_op("sum", (x,), np.asarray(x.data.sum()), lambda g: (np.full(x.shape, float(g)),))


def mean_all(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    n = x.size
    return record_op("mean", (x,), np.asarray(x.data.mean()), lambda g: (np.full(x.shape, float(g) / n),))


def concat(parts: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("concat needs at least one tensor")
    try:
        value = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {[p.shape for p in parts]} ({exc})") from exc
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def rule(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record_op("concat", parts, value, rule)


def take_step(x: ArrayLike, t: int) -> Tensor:
    """Slice timestep t out of a [batch × T × d] tensor"""
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"take_step needs [batch × T × d], got shape {x.shape}")

    def rule(g):
        full_grad = np.zeros(x.shape)
        full_grad[:, t, :] = g
        return (full_grad,)

    return record_op("take_step", (x,), x.data[:, t, :], rule)


def stack_steps(steps: Sequence[ArrayLike]) -> Tensor:
    """Stack T tensors of [batch × d] into [batch × T × d]"""
    steps = [as_tensor(s) for s in steps]
    if not steps:
        raise ContractError("stack_steps needs at least one tensor")
    shapes = {s.shape for s in steps}
    if len(shapes) != 1:
        raise DimensionError(f"stack_steps: mixed shapes {sorted(shapes)}")
    value = np.stack([s.data for s in steps], axis=1)

    def rule(g):
        return tuple(g[:, i, :] for i in range(len(steps)))

    return record_op("stack_steps", steps, value, rule)
