"""
Recurrent cells: the RKAN sublayer, the TKAN cell, LSTM/GRU baselines,
sequence unrolling and the dense output layer.

Activations are row vectors and parameters right-multiply them (x @ W), so
an input kernel has shape [d × units] and a recurrent kernel [units × units].
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from errors import ContractError, DimensionError
from splines import DEFAULT_DOMAIN, DEFAULT_GRID_SIZE, KanLayer, kan_layer_forward, kan_layer_init
from tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    derive_seed,
    eye,
    full,
    glorot_uniform,
    matmul,
    mul,
    one_minus,
    orthogonal,
    scale,
    sigmoid,
    stack_steps,
    take_step,
    tanh,
    zeros,
)

logger = logging.getLogger(__name__)

CANDIDATE_ACTIVATIONS = ("sigmoid", "tanh")
MEMORY_MODES = ("vector", "matrix")


def _collect(obj, names: Sequence[str], prefix: str) -> Dict[str, Tensor]:
    return {f"{prefix}{name}": getattr(obj, name) for name in names}


def _rebuild(obj, names: Sequence[str], params: Mapping[str, Tensor], prefix: str):
    return replace(obj, **{name: params[f"{prefix}{name}"] for name in names})


def _check_rows(x: Tensor, width: int, what: str):
    if x.ndim != 2 or x.shape[1] != width:
        raise DimensionError(f"{what}: expected [batch × {width}], got {x.shape}")


def _affine(x: Tensor, W: Tensor, h: Tensor, U: Tensor, b: Tensor) -> Tensor:
    return add(add(matmul(x, W), matmul(h, U)), b)


# ---------------------------------------------------------------- RKAN sublayer

@dataclass(frozen=True)
class RkanSublayer:
    W_x: Tensor = field(repr=False)
    W_h: Tensor = field(repr=False)
    phi: KanLayer
    w_hh: Tensor = field(repr=False)
    w_hz: Tensor = field(repr=False)

    TENSORS = ("W_x", "W_h", "w_hh", "w_hz")

    def __post_init__(self):
        kan_in, kan_out = self.phi.n_in, self.phi.n_out
        if self.W_x.ndim != 2 or self.W_x.shape[1] != kan_in:
            raise DimensionError(f"W_x shape {self.W_x.shape} does not end in KAN_in={kan_in}")
        if self.W_h.shape != (kan_out, kan_in):
            raise DimensionError(f"W_h shape {self.W_h.shape} != {(kan_out, kan_in)}")
        expected = (kan_out,) if self.w_hh.ndim == 1 else (kan_out, kan_out)
        if self.w_hh.shape != expected or self.w_hz.shape != expected:
            raise DimensionError(f"sub-memory weights {self.w_hh.shape}/{self.w_hz.shape} != {expected}")

    @property
    def input_dim(self) -> int:
        return self.W_x.shape[0]

    @property
    def kan_out(self) -> int:
        return self.phi.n_out

    @property
    def memory_mode(self) -> str:
        return "vector" if self.w_hh.ndim == 1 else "matrix"

    def parameters(self, prefix: str = "") -> Dict[str, Tensor]:
        params = _collect(self, self.TENSORS, prefix)
        params.update(self.phi.parameters(f"{prefix}phi."))
        return params

    def with_parameters(self, params: Mapping[str, Tensor], prefix: str = "") -> "RkanSublayer":
        rebuilt = _rebuild(self, self.TENSORS, params, prefix)
        return replace(rebuilt, phi=self.phi.with_parameters(params, f"{prefix}phi."))


def rkan_sublayer_step(x_t: Tensor, sub_prev: Tensor, layer: RkanSublayer) -> Tuple[Tensor, Tensor]:
    """One RKAN step: returns (KAN output, updated sub-memory)"""
    x_t, sub_prev = as_tensor(x_t), as_tensor(sub_prev)
    _check_rows(x_t, layer.input_dim, "RKAN input")
    _check_rows(sub_prev, layer.kan_out, "RKAN sub-memory")
    if sub_prev.shape[0] != x_t.shape[0]:
        raise DimensionError(f"RKAN batch mismatch: input {x_t.shape} vs sub-memory {sub_prev.shape}")

    mixed = add(matmul(x_t, layer.W_x), matmul(sub_prev, layer.W_h))
    out = kan_layer_forward(mixed, layer.phi)
    if layer.memory_mode == "vector":
        sub = add(mul(sub_prev, layer.w_hh), mul(out, layer.w_hz))
    else:
        sub = add(matmul(sub_prev, layer.w_hh), matmul(out, layer.w_hz))
    return out, sub


def rkan_sublayer_init(
    input_dim: int,
    kan_in: int,
    kan_out: int,
    order: int,
    seed: int,
    grid_size: int = DEFAULT_GRID_SIZE,
    domain: Sequence[float] = DEFAULT_DOMAIN,
    use_base: bool = True,
    memory_mode: str = "vector",
) -> RkanSublayer:
    if memory_mode not in MEMORY_MODES:
        raise ContractError(f"memory_mode must be one of {MEMORY_MODES}, got {memory_mode!r}")
    phi = kan_layer_init(kan_in, kan_out, grid_size, order, derive_seed(seed, 2), domain, use_base)
    if memory_mode == "vector":
        w_hh, w_hz = full((kan_out,), 1.0), full((kan_out,), 0.5)
    else:
        w_hh, w_hz = eye(kan_out), scale(eye(kan_out), 0.5)
    return RkanSublayer(
        W_x=glorot_uniform(derive_seed(seed, 0), input_dim, kan_in),
        W_h=glorot_uniform(derive_seed(seed, 1), kan_out, kan_in),
        phi=phi,
        w_hh=w_hh,
        w_hz=w_hz,
    )


# ---------------------------------------------------------------- TKAN cell

@dataclass(frozen=True)
class TkanState:
    h: Tensor
    c: Tensor
    sub: Tuple[Tensor, ...]


@dataclass(frozen=True)
class TkanCell:
    sublayers: Tuple[RkanSublayer, ...]
    W_f: Tensor = field(repr=False)
    U_f: Tensor = field(repr=False)
    b_f: Tensor = field(repr=False)
    W_i: Tensor = field(repr=False)
    U_i: Tensor = field(repr=False)
    b_i: Tensor = field(repr=False)
    W_c: Tensor = field(repr=False)
    U_c: Tensor = field(repr=False)
    b_c: Tensor = field(repr=False)
    W_o: Tensor = field(repr=False)
    b_o: Tensor = field(repr=False)
    candidate_activation: str = "sigmoid"

    TENSORS = ("W_f", "U_f", "b_f", "W_i", "U_i", "b_i", "W_c", "U_c", "b_c", "W_o", "b_o")

    def __post_init__(self):
        if not self.sublayers:
            raise ContractError("a TKAN cell needs at least one RKAN sublayer")
        if self.candidate_activation not in CANDIDATE_ACTIVATIONS:
            raise ContractError(f"candidate_activation must be one of {CANDIDATE_ACTIVATIONS}")
        d, units = self.W_f.shape
        for name in ("W_f", "W_i", "W_c"):
            if getattr(self, name).shape != (d, units):
                raise DimensionError(f"{name} shape {getattr(self, name).shape} != {(d, units)}")
        for name in ("U_f", "U_i", "U_c"):
            if getattr(self, name).shape != (units, units):
                raise DimensionError(f"{name} shape {getattr(self, name).shape} != {(units, units)}")
        for name in ("b_f", "b_i", "b_c", "b_o"):
            if getattr(self, name).shape != (units,):
                raise DimensionError(f"{name} shape {getattr(self, name).shape} != {(units,)}")
        concat_width = sum(s.kan_out for s in self.sublayers)
        if self.W_o.shape != (concat_width, units):
            raise DimensionError(f"W_o shape {self.W_o.shape} != {(concat_width, units)}")
        for s in self.sublayers:
            if s.input_dim != d:
                raise DimensionError(f"sublayer input dim {s.input_dim} != cell input dim {d}")

    @property
    def input_dim(self) -> int:
        return self.W_f.shape[0]

    @property
    def units(self) -> int:
        return self.W_f.shape[1]

    def zero_state(self, batch: int) -> TkanState:
        return TkanState(
            h=zeros((batch, self.units)),
            c=zeros((batch, self.units)),
            sub=tuple(zeros((batch, s.kan_out)) for s in self.sublayers),
        )

    def step(self, x_t: Tensor, state: TkanState) -> Tuple[Tensor, TkanState]:
        return tkan_cell_step(x_t, state, self)

    def parameters(self, prefix: str = "") -> Dict[str, Tensor]:
        params = _collect(self, self.TENSORS, prefix)
        for index, sub in enumerate(self.sublayers):
            params.update(sub.parameters(f"{prefix}sub{index}."))
        return params

    def with_parameters(self, params: Mapping[str, Tensor], prefix: str = "") -> "TkanCell":
        rebuilt = _rebuild(self, self.TENSORS, params, prefix)
        subs = tuple(s.with_parameters(params, f"{prefix}sub{i}.") for i, s in enumerate(self.sublayers))
        return replace(rebuilt, sublayers=subs)

    def metadata(self) -> Dict:
        return {
            "kind": "tkan",
            "candidate_activation": self.candidate_activation,
            "sublayers": [dict(s.phi.metadata(), memory_mode=s.memory_mode) for s in self.sublayers],
        }


def tkan_cell_gates(x_t: Tensor, state: TkanState, cell: TkanCell) -> Dict[str, object]:
    """Every intermediate of one TKAN step, keyed by its role"""
    x_t = as_tensor(x_t)
    _check_rows(x_t, cell.input_dim, "TKAN input")
    _check_rows(state.h, cell.units, "TKAN hidden state")
    _check_rows(state.c, cell.units, "TKAN cell state")
    if len(state.sub) != len(cell.sublayers):
        raise DimensionError(f"state carries {len(state.sub)} sub-memories, cell has {len(cell.sublayers)} sublayers")

    f = sigmoid(_affine(x_t, cell.W_f, state.h, cell.U_f, cell.b_f))
    i = sigmoid(_affine(x_t, cell.W_i, state.h, cell.U_i, cell.b_i))
    candidate_pre = _affine(x_t, cell.W_c, state.h, cell.U_c, cell.b_c)
    candidate = sigmoid(candidate_pre) if cell.candidate_activation == "sigmoid" else tanh(candidate_pre)

    outs: List[Tensor] = []
    subs: List[Tensor] = []
    for layer, sub_prev in zip(cell.sublayers, state.sub):
        out, sub = rkan_sublayer_step(x_t, sub_prev, layer)
        outs.append(out)
        subs.append(sub)
    r = concat(outs, axis=-1)
    o = sigmoid(add(matmul(r, cell.W_o), cell.b_o))

    c = add(mul(f, state.c), mul(i, candidate))
    h = mul(o, tanh(c))
    return {"f": f, "i": i, "candidate": candidate, "r": r, "o": o, "c": c, "h": h, "sub": tuple(subs)}


def tkan_cell_step(x_t: Tensor, state: TkanState, cell: TkanCell) -> Tuple[Tensor, TkanState]:
    gates = tkan_cell_gates(x_t, state, cell)
    return gates["h"], TkanState(h=gates["h"], c=gates["c"], sub=gates["sub"])


def tkan_cell_init(
    input_dim: int,
    units: int,
    spline_orders: Sequence[int] = (0, 1, 2, 3, 4),
    seed: int = 0,
    grid_size: int = DEFAULT_GRID_SIZE,
    domain: Sequence[float] = DEFAULT_DOMAIN,
    use_base: bool = True,
    kan_in: Optional[int] = None,
    kan_out: Optional[int] = None,
    candidate_activation: str = "sigmoid",
    memory_mode: str = "vector",
) -> TkanCell:
    if input_dim < 1 or units < 1:
        raise ContractError(f"TKAN sizes must be >= 1, got input_dim={input_dim}, units={units}")
    if not spline_orders:
        raise ContractError("a TKAN cell needs at least one spline order")
    kan_in = kan_in or units
    kan_out = kan_out or units
    sublayers = tuple(
        rkan_sublayer_init(input_dim, kan_in, kan_out, order, derive_seed(seed, 100 + index),
                           grid_size, domain, use_base, memory_mode)
        for index, order in enumerate(spline_orders)
    )
    kernels = {}
    for index, gate in enumerate("fic"):
        kernels[f"W_{gate}"] = glorot_uniform(derive_seed(seed, index), input_dim, units)
        kernels[f"U_{gate}"] = orthogonal(derive_seed(seed, 10 + index), units, units)
        kernels[f"b_{gate}"] = zeros((units,))
    return TkanCell(
        sublayers=sublayers,
        W_o=glorot_uniform(derive_seed(seed, 20), kan_out * len(sublayers), units),
        b_o=zeros((units,)),
        candidate_activation=candidate_activation,
        **kernels,
    )


# ---------------------------------------------------------------- LSTM / GRU

@dataclass(frozen=True)
class LstmState:
    h: Tensor
    c: Tensor


@dataclass(frozen=True)
class LstmCell:
    W_i: Tensor = field(repr=False)
    U_i: Tensor = field(repr=False)
    b_i: Tensor = field(repr=False)
    W_f: Tensor = field(repr=False)
    U_f: Tensor = field(repr=False)
    b_f: Tensor = field(repr=False)
    W_c: Tensor = field(repr=False)
    U_c: Tensor = field(repr=False)
    b_c: Tensor = field(repr=False)
    W_o: Tensor = field(repr=False)
    U_o: Tensor = field(repr=False)
    b_o: Tensor = field(repr=False)

    TENSORS = ("W_i", "U_i", "b_i", "W_f", "U_f", "b_f", "W_c", "U_c", "b_c", "W_o", "U_o", "b_o")

    @property
    def input_dim(self) -> int:
        return self.W_i.shape[0]

    @property
    def units(self) -> int:
        return self.W_i.shape[1]

    def zero_state(self, batch: int) -> LstmState:
        return LstmState(h=zeros((batch, self.units)), c=zeros((batch, self.units)))

    def step(self, x_t: Tensor, state: LstmState) -> Tuple[Tensor, LstmState]:
        return lstm_cell_step(x_t, state, self)

    def parameters(self, prefix: str = "") -> Dict[str, Tensor]:
        return _collect(self, self.TENSORS, prefix)

    def with_parameters(self, params: Mapping[str, Tensor], prefix: str = "") -> "LstmCell":
        return _rebuild(self, self.TENSORS, params, prefix)

    def metadata(self) -> Dict:
        return {"kind": "lstm"}


def lstm_cell_step(x_t: Tensor, state: LstmState, cell: LstmCell) -> Tuple[Tensor, LstmState]:
    x_t = as_tensor(x_t)
    _check_rows(x_t, cell.input_dim, "LSTM input")
    _check_rows(state.h, cell.units, "LSTM hidden state")
    i = sigmoid(_affine(x_t, cell.W_i, state.h, cell.U_i, cell.b_i))
    f = sigmoid(_affine(x_t, cell.W_f, state.h, cell.U_f, cell.b_f))
    candidate = tanh(_affine(x_t, cell.W_c, state.h, cell.U_c, cell.b_c))
    o = sigmoid(_affine(x_t, cell.W_o, state.h, cell.U_o, cell.b_o))
    c = add(mul(f, state.c), mul(i, candidate))
    h = mul(o, tanh(c))
    return h, LstmState(h=h, c=c)


def lstm_cell_init(input_dim: int, units: int, seed: int = 0, forget_bias: float = 1.0) -> LstmCell:
    if input_dim < 1 or units < 1:
        raise ContractError(f"LSTM sizes must be >= 1, got input_dim={input_dim}, units={units}")
    kernels = {}
    for index, gate in enumerate("ifco"):
        kernels[f"W_{gate}"] = glorot_uniform(derive_seed(seed, index), input_dim, units)
        kernels[f"U_{gate}"] = orthogonal(derive_seed(seed, 10 + index), units, units)
        kernels[f"b_{gate}"] = full((units,), forget_bias) if gate == "f" else zeros((units,))
    return LstmCell(**kernels)


@dataclass(frozen=True)
class GruState:
    h: Tensor


@dataclass(frozen=True)
class GruCell:
    W_z: Tensor = field(repr=False)
    U_z: Tensor = field(repr=False)
    b_z: Tensor = field(repr=False)
    W_r: Tensor = field(repr=False)
    U_r: Tensor = field(repr=False)
    b_r: Tensor = field(repr=False)
    W_h: Tensor = field(repr=False)
    U_h: Tensor = field(repr=False)
    b_h: Tensor = field(repr=False)

    TENSORS = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")

    @property
    def input_dim(self) -> int:
        return self.W_z.shape[0]

    @property
    def units(self) -> int:
        return self.W_z.shape[1]

    def zero_state(self, batch: int) -> GruState:
        return GruState(h=zeros((batch, self.units)))

    def step(self, x_t: Tensor, state: GruState) -> Tuple[Tensor, GruState]:
        return gru_cell_step(x_t, state, self)

    def parameters(self, prefix: str = "") -> Dict[str, Tensor]:
        return _collect(self, self.TENSORS, prefix)

    def with_parameters(self, params: Mapping[str, Tensor], prefix: str = "") -> "GruCell":
        return _rebuild(self, self.TENSORS, params, prefix)

    def metadata(self) -> Dict:
        return {"kind": "gru"}


def gru_cell_step(x_t: Tensor, state: GruState, cell: GruCell) -> Tuple[Tensor, GruState]:
    """h_t = (1 - z) * h_{t-1} + z * tanh(x W_h + (r * h_{t-1}) U_h + b_h)

    With the update gate z at 0 the previous state passes through unchanged.
    """
    x_t = as_tensor(x_t)
    _check_rows(x_t, cell.input_dim, "GRU input")
    _check_rows(state.h, cell.units, "GRU hidden state")
    z = sigmoid(_affine(x_t, cell.W_z, state.h, cell.U_z, cell.b_z))
    r = sigmoid(_affine(x_t, cell.W_r, state.h, cell.U_r, cell.b_r))
    candidate = tanh(_affine(x_t, cell.W_h, mul(r, state.h), cell.U_h, cell.b_h))
    h = add(mul(one_minus(z), state.h), mul(z, candidate))
    return h, GruState(h=h)


def gru_cell_init(input_dim: int, units: int, seed: int = 0) -> GruCell:
    if input_dim < 1 or units < 1:
        raise ContractError(f"GRU sizes must be >= 1, got input_dim={input_dim}, units={units}")
    kernels = {}
    for index, gate in enumerate("zrh"):
        kernels[f"W_{gate}"] = glorot_uniform(derive_seed(seed, index), input_dim, units)
        kernels[f"U_{gate}"] = orthogonal(derive_seed(seed, 10 + index), units, units)
        kernels[f"b_{gate}"] = zeros((units,))
    return GruCell(**kernels)


Cell = Union[TkanCell, LstmCell, GruCell]


# ---------------------------------------------------------------- sequences

def unroll(cell: Cell, X: Tensor, return_sequences: bool = False) -> Tensor:
    """Run `cell` left to right over X [batch × T × d] from the zero state.

    Returns every hidden state [batch × T × units] or only the last one
    [batch × units].
    """
    X = as_tensor(X)
    if X.ndim != 3:
        raise DimensionError(f"unroll expects [batch × T × d], got {X.shape}")
    batch, steps, _ = X.shape
    if steps == 0:
        raise ContractError("unroll needs at least one timestep")
    state = cell.zero_state(batch)
    hidden: List[Tensor] = []
    for t in range(steps):
        h, state = cell.step(take_step(X, t), state)
        hidden.append(h)
    if return_sequences:
        return stack_steps(hidden)
    return hidden[-1]


@dataclass(frozen=True)
class DenseLayer:
    W: Tensor = field(repr=False)
    b: Tensor = field(repr=False)

    TENSORS = ("W", "b")

    def __call__(self, x: Tensor) -> Tensor:
        return dense_forward(x, self.W, self.b)

    def parameters(self, prefix: str = "") -> Dict[str, Tensor]:
        return _collect(self, self.TENSORS, prefix)

    def with_parameters(self, params: Mapping[str, Tensor], prefix: str = "") -> "DenseLayer":
        return _rebuild(self, self.TENSORS, params, prefix)


def dense_forward(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """Affine map x @ W + b with linear activation"""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if b.shape != (W.shape[-1],):
        raise DimensionError(f"dense bias shape {b.shape} does not match kernel {W.shape}")
    return add(matmul(x, W), b)


def dense_init(n_in: int, n_out: int, seed: int = 0) -> DenseLayer:
    if n_in < 1 or n_out < 1:
        raise ContractError(f"dense sizes must be >= 1, got {n_in}, {n_out}")
    return DenseLayer(W=glorot_uniform(seed, n_in, n_out), b=zeros((n_out,)))
