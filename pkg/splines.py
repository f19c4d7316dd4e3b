"""
B-spline bases and the KAN layer.

A KAN layer maps n_in inputs to n_out outputs through a matrix of learnable
univariate functions: output j is the sum over inputs i of
phi_{j,i}(x_i), each phi a B-spline on a shared uniform knot grid plus an
optional silu residual with its own weight.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from errors import ContractError, DimensionError
from tensor import (
    Tensor,
    add,
    as_tensor,
    derive_seed,
    glorot_uniform,
    matmul,
    record_op,
    rng_uniform,
    silu,
    transpose,
)

logger = logging.getLogger(__name__)

MAX_ORDER = 8
DEFAULT_DOMAIN = (-1.0, 1.0)
DEFAULT_GRID_SIZE = 5


@dataclass(frozen=True)
class KnotGrid:
    """Uniform knots on [domain_low, domain_high], extended `order` knots past each end"""

    domain_low: float = DEFAULT_DOMAIN[0]
    domain_high: float = DEFAULT_DOMAIN[1]
    grid_size: int = DEFAULT_GRID_SIZE
    order: int = 3

    def __post_init__(self):
        if self.grid_size < 1:
            raise ContractError(f"grid_size must be >= 1, got {self.grid_size}")
        if not 0 <= self.order <= MAX_ORDER:
            raise ContractError(f"spline order must be in [0, {MAX_ORDER}], got {self.order}")
        if not self.domain_low < self.domain_high:
            raise ContractError(f"empty spline domain [{self.domain_low}, {self.domain_high}]")

    @property
    def spacing(self) -> float:
        return (self.domain_high - self.domain_low) / self.grid_size

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.order

    @cached_property
    def knots(self) -> np.ndarray:
        k = self.order
        knots = np.arange(-k, self.grid_size + k + 1, dtype=np.float64) * self.spacing + self.domain_low
        knots.flags.writeable = False
        return knots

    def to_dict(self) -> Dict[str, float]:
        return {
            "domain_low": self.domain_low,
            "domain_high": self.domain_high,
            "grid_size": self.grid_size,
            "order": self.order,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "KnotGrid":
        return cls(
            domain_low=float(data["domain_low"]),
            domain_high=float(data["domain_high"]),
            grid_size=int(data["grid_size"]),
            order=int(data["order"]),
        )


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # 0/0 (repeated knots) is taken as 0
    nonzero = den != 0
    return np.where(nonzero, num / np.where(nonzero, den, 1.0), 0.0)


def _basis_levels(x: np.ndarray, grid: KnotGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Bases of order k and k-1 (the latter is None when k == 0)"""
    t = grid.knots
    x = np.asarray(x, dtype=np.float64)[..., None]
    bases = ((x >= t[:-1]) & (x < t[1:])).astype(np.float64)
    if grid.order == 0:
        # the last interval is closed so domain_high still sums to 1
        bases[..., -1] = np.where((x[..., 0] >= t[-1]) & (x[..., 0] <= grid.domain_high), 1.0, bases[..., -1])
    previous = None
    for k in range(1, grid.order + 1):
        previous = bases
        left = _safe_div(x - t[: -(k + 1)], t[k:-1] - t[: -(k + 1)])
        right = _safe_div(t[k + 1:] - x, t[k + 1:] - t[1:-k])
        bases = left * bases[..., :-1] + right * bases[..., 1:]
    return bases, previous


def bspline_basis(x, grid: KnotGrid) -> np.ndarray:
    """Cox-de Boor values B_{r,k}(x), shape x.shape + (G + k,).

    Inputs outside the domain are evaluated by the same recursion (no
    clamping); inside [domain_low, domain_high] every row sums to 1.
    """
    return _basis_levels(x, grid)[0]


def _derivative(bases: np.ndarray, previous: np.ndarray, grid: KnotGrid) -> np.ndarray:
    k = grid.order
    if k == 0:
        return np.zeros_like(bases)
    t = grid.knots
    left = _safe_div(previous[..., :-1], t[k:-1] - t[: -(k + 1)])
    right = _safe_div(previous[..., 1:], t[k + 1:] - t[1:-k])
    return k * (left - right)


def bspline_basis_derivative(x, grid: KnotGrid) -> np.ndarray:
    """d/dx of `bspline_basis`; identically zero for order 0"""
    return _derivative(*_basis_levels(x, grid), grid)


def spline_basis(x: Tensor, grid: KnotGrid) -> Tensor:
    """Tape-aware basis expansion [batch × n_in] -> [batch × n_in × (G + k)]"""
    x = as_tensor(x)
    bases, previous = _basis_levels(x.data, grid)

    def rule(g):
        return ((g * _derivative(bases, previous, grid)).sum(axis=-1),)

    return record_op("spline_basis", (x,), bases, rule)


def spline_contract(bases: Tensor, coeffs: Tensor) -> Tensor:
    """y[b, j] = sum_i sum_r coeffs[j, i, r] * bases[b, i, r]"""
    bases, coeffs = as_tensor(bases), as_tensor(coeffs)
    if bases.ndim != 3 or coeffs.ndim != 3 or bases.shape[1:] != coeffs.shape[1:]:
        raise DimensionError(f"spline_contract: bases {bases.shape} vs coefficients {coeffs.shape}")
    batch, n_out = bases.shape[0], coeffs.shape[0]
    flat_b = bases.data.reshape(batch, -1)
    flat_c = coeffs.data.reshape(n_out, -1)

    def rule(g):
        return (g @ flat_c).reshape(bases.shape), (g.T @ flat_b).reshape(coeffs.shape)

    return record_op("spline_contract", (bases, coeffs), flat_b @ flat_c.T, rule)


@dataclass(frozen=True)
class KanLayer:
    n_in: int
    n_out: int
    grid: KnotGrid
    spline_coeffs: Tensor = field(repr=False)
    base_weight: Tensor = field(repr=False)
    use_base: bool = True

    def __post_init__(self):
        if self.spline_coeffs.shape != (self.n_out, self.n_in, self.grid.n_basis):
            raise DimensionError(
                f"spline_coeffs shape {self.spline_coeffs.shape} != "
                f"{(self.n_out, self.n_in, self.grid.n_basis)}"
            )
        if self.base_weight.shape != (self.n_out, self.n_in):
            raise DimensionError(f"base_weight shape {self.base_weight.shape} != {(self.n_out, self.n_in)}")

    def __call__(self, x: Tensor) -> Tensor:
        return kan_layer_forward(x, self)

    def parameters(self, prefix: str = "") -> Dict[str, Tensor]:
        return {f"{prefix}spline_coeffs": self.spline_coeffs, f"{prefix}base_weight": self.base_weight}

    def with_parameters(self, params: Mapping[str, Tensor], prefix: str = "") -> "KanLayer":
        return replace(
            self,
            spline_coeffs=params[f"{prefix}spline_coeffs"],
            base_weight=params[f"{prefix}base_weight"],
        )

    def metadata(self) -> Dict:
        return {"n_in": self.n_in, "n_out": self.n_out, "use_base": self.use_base, "grid": self.grid.to_dict()}


def kan_layer_forward(x: Tensor, layer: KanLayer) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != layer.n_in:
        raise DimensionError(f"KAN layer expects [batch × {layer.n_in}], got {x.shape}")
    y = spline_contract(spline_basis(x, layer.grid), layer.spline_coeffs)
    if layer.use_base:
        y = add(y, matmul(silu(x), transpose(layer.base_weight)))
    return y


def kan_layer_init(
    n_in: int,
    n_out: int,
    grid_size: int = DEFAULT_GRID_SIZE,
    order: int = 3,
    seed: int = 0,
    domain: Sequence[float] = DEFAULT_DOMAIN,
    use_base: bool = True,
) -> KanLayer:
    """Spline coefficients ~ U(-s, s) with s = 0.1 / sqrt(G + k); Glorot-uniform base weights"""
    if n_in < 1 or n_out < 1:
        raise ContractError(f"KAN layer sizes must be >= 1, got n_in={n_in}, n_out={n_out}")
    grid = KnotGrid(float(domain[0]), float(domain[1]), int(grid_size), int(order))
    sigma = 0.1 / np.sqrt(grid.n_basis)
    coeffs = rng_uniform(derive_seed(seed, 0), (n_out, n_in, grid.n_basis), -sigma, sigma)
    base = glorot_uniform(derive_seed(seed, 1), n_in, n_out, shape=(n_out, n_in))
    return KanLayer(n_in, n_out, grid, coeffs, base, use_base)


def kan_stack_forward(x: Tensor, layers: Sequence[KanLayer]) -> Tensor:
    if not layers:
        raise ContractError("kan_stack_forward needs at least one layer")
    for upper, lower in zip(layers, layers[1:]):
        if upper.n_out != lower.n_in:
            raise DimensionError(f"KAN stack breaks: layer with n_out={upper.n_out} feeds n_in={lower.n_in}")
    for layer in layers:
        x = kan_layer_forward(x, layer)
    return x
