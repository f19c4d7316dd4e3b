"""
Reference implementations written independently of the library: scalar
Cox-de Boor recursion, single-sample cell equations with explicit loops, and
central finite differences. They trade speed for transparency.
"""

import math
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np


def special_div(num: float, den: float) -> float:
    return 0.0 if den == 0 else num / den


def cox_de_boor(j: int, k: int, x: float, knots: Sequence[float]) -> float:
    """B_{j,k}(x) by the textbook recursion on half-open intervals"""
    if k == 0:
        return 1.0 if knots[j] <= x < knots[j + 1] else 0.0
    left = special_div(x - knots[j], knots[j + k] - knots[j]) * cox_de_boor(j, k - 1, x, knots)
    right = special_div(knots[j + k + 1] - x, knots[j + k + 1] - knots[j + 1]) * cox_de_boor(j + 1, k - 1, x, knots)
    return left + right


def uniform_knots(low: float, high: float, grid_size: int, order: int) -> List[float]:
    h = (high - low) / grid_size
    return [low + (i - order) * h for i in range(grid_size + 2 * order + 1)]


def sigmoid(v: float) -> float:
    return 1.0 / (1.0 + math.exp(-v))


def silu(v: float) -> float:
    return v * sigmoid(v)


def vec_mat(x: Sequence[float], W: np.ndarray) -> List[float]:
    """Row vector times matrix, one column at a time"""
    rows, cols = W.shape
    return [sum(x[i] * W[i, j] for i in range(rows)) for j in range(cols)]


def kan_layer(x: Sequence[float], coeffs: np.ndarray, base: np.ndarray, knots: Sequence[float],
              order: int, use_base: bool = True) -> List[float]:
    n_out, n_in, n_basis = coeffs.shape
    out = []
    for j in range(n_out):
        total = 0.0
        for i in range(n_in):
            for r in range(n_basis):
                total += coeffs[j, i, r] * cox_de_boor(r, order, x[i], knots)
            if use_base:
                total += base[j, i] * silu(x[i])
        out.append(total)
    return out


def rkan_step(x: Sequence[float], sub_prev: Sequence[float], p: Dict[str, np.ndarray], knots: Sequence[float],
              order: int, use_base: bool = True) -> Tuple[List[float], List[float]]:
    """Mix input and sub-memory, apply the KAN layer, update the sub-memory"""
    mixed = [a + b for a, b in zip(vec_mat(x, p["W_x"]), vec_mat(sub_prev, p["W_h"]))]
    out = kan_layer(mixed, p["phi.spline_coeffs"], p["phi.base_weight"], knots, order, use_base)
    if p["w_hh"].ndim == 1:
        sub = [p["w_hh"][k] * sub_prev[k] + p["w_hz"][k] * out[k] for k in range(len(out))]
    else:
        sub = [a + b for a, b in zip(vec_mat(sub_prev, p["w_hh"]), vec_mat(out, p["w_hz"]))]
    return out, sub


def tkan_step(x, h_prev, c_prev, subs_prev, p: Dict[str, np.ndarray], sublayer_knots, sublayer_orders,
              candidate: str = "sigmoid", use_base: bool = True):
    """One TKAN step for a single sample; `p` uses the cell's flat parameter names"""
    units = len(h_prev)

    def gate(name):
        wx = vec_mat(x, p[f"W_{name}"])
        uh = vec_mat(h_prev, p[f"U_{name}"])
        return [wx[j] + uh[j] + p[f"b_{name}"][j] for j in range(units)]

    f = [sigmoid(v) for v in gate("f")]
    i = [sigmoid(v) for v in gate("i")]
    act = sigmoid if candidate == "sigmoid" else math.tanh
    c_tilde = [act(v) for v in gate("c")]

    outs, subs = [], []
    for index, (knots, order) in enumerate(zip(sublayer_knots, sublayer_orders)):
        prefix = f"sub{index}."
        sp = {k[len(prefix):]: v for k, v in p.items() if k.startswith(prefix)}
        out, sub = rkan_step(x, subs_prev[index], sp, knots, order, use_base)
        outs.extend(out)
        subs.append(sub)
    ro = vec_mat(outs, p["W_o"])
    o = [sigmoid(ro[j] + p["b_o"][j]) for j in range(units)]
    c = [f[j] * c_prev[j] + i[j] * c_tilde[j] for j in range(units)]
    h = [o[j] * math.tanh(c[j]) for j in range(units)]
    return h, c, subs


def lstm_step(x, h_prev, c_prev, p: Dict[str, np.ndarray]):
    units = len(h_prev)

    def gate(name):
        wx = vec_mat(x, p[f"W_{name}"])
        uh = vec_mat(h_prev, p[f"U_{name}"])
        return [wx[j] + uh[j] + p[f"b_{name}"][j] for j in range(units)]

    i = [sigmoid(v) for v in gate("i")]
    f = [sigmoid(v) for v in gate("f")]
    g = [math.tanh(v) for v in gate("c")]
    o = [sigmoid(v) for v in gate("o")]
    c = [f[j] * c_prev[j] + i[j] * g[j] for j in range(units)]
    h = [o[j] * math.tanh(c[j]) for j in range(units)]
    return h, c


def gru_step(x, h_prev, p: Dict[str, np.ndarray]):
    units = len(h_prev)
    wz, uz = vec_mat(x, p["W_z"]), vec_mat(h_prev, p["U_z"])
    wr, ur = vec_mat(x, p["W_r"]), vec_mat(h_prev, p["U_r"])
    z = [sigmoid(wz[j] + uz[j] + p["b_z"][j]) for j in range(units)]
    r = [sigmoid(wr[j] + ur[j] + p["b_r"][j]) for j in range(units)]
    gated = [r[j] * h_prev[j] for j in range(units)]
    wh, uh = vec_mat(x, p["W_h"]), vec_mat(gated, p["U_h"])
    candidate = [math.tanh(wh[j] + uh[j] + p["b_h"][j]) for j in range(units)]
    return [(1.0 - z[j]) * h_prev[j] + z[j] * candidate[j] for j in range(units)]


def central_difference(loss: Callable[[Dict[str, np.ndarray]], float], params: Dict[str, np.ndarray],
                       name: str, index: Tuple[int, ...], h: float = 1e-5) -> float:
    """(L(p + h e) - L(p - h e)) / 2h for one entry of one parameter"""
    plus = {k: v.copy() for k, v in params.items()}
    minus = {k: v.copy() for k, v in params.items()}
    plus[name][index] += h
    minus[name][index] -= h
    return (loss(plus) - loss(minus)) / (2.0 * h)


def gradients_agree(analytic: float, numeric: float, rtol: float = 1e-4, atol: float = 1e-8) -> bool:
    return abs(analytic - numeric) <= rtol * max(abs(analytic), abs(numeric)) + atol
