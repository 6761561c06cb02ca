"""Dense/sparse kernels, layers with hand-derived gradients, and Adam."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
import scipy.sparse as sp

ACTIVATIONS = ("relu", "identity", "sigmoid")


def spmm(op, h: np.ndarray) -> np.ndarray:
    """Sparse (CSR) times dense; rows are accumulated sequentially in CSR order."""
    h = np.asarray(h, dtype=np.float64)
    if op.shape[1] != h.shape[0]:
        raise ValueError(f"spmm dimension mismatch: operator {op.shape}, dense {h.shape}")
    if not sp.isspmatrix_csr(op):
        op = sp.csr_matrix(op)
    return np.asarray(op @ h)


def activate(x: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(x, 0.0)
    if activation == "identity":
        return x
    if activation == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * x))
    raise ValueError(f"unknown activation {activation!r}")


def activation_grad(pre: np.ndarray, out: np.ndarray, grad_out: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return grad_out * (pre > 0)
    if activation == "identity":
        return grad_out
    if activation == "sigmoid":
        return grad_out * out * (1.0 - out)
    raise ValueError(f"unknown activation {activation!r}")


@dataclass
class LayerCache:
    inputs: np.ndarray
    propagated: Optional[np.ndarray]
    pre: np.ndarray
    out: np.ndarray
    activation: str


@dataclass
class LayerGradients:
    weight: np.ndarray
    inputs: np.ndarray
    bias: Optional[np.ndarray] = None


def gcn_layer(op, h: np.ndarray, w: np.ndarray, activation: str = "relu", propagated=None):
    """activation(op @ h @ w). Returns (output, cache) for :func:`gcn_layer_backward`.

    The sparse product is taken on the narrower side of ``w``. A precomputed
    ``propagated = op @ h`` (fixed inputs) skips the sparse product entirely.
    """
    if h.shape[1] != w.shape[0]:
        raise ValueError(f"gcn_layer shape mismatch: H {h.shape}, W {w.shape}")
    if propagated is not None:
        if propagated.shape != h.shape:
            raise ValueError(f"propagated shape {propagated.shape} does not match H {h.shape}")
        pre = propagated @ w
    elif w.shape[0] <= w.shape[1]:
        propagated = spmm(op, h)
        pre = propagated @ w
    else:
        propagated = None
        pre = spmm(op, h @ w)
    out = activate(pre, activation)
    return out, LayerCache(h, propagated, pre, out, activation)


def gcn_layer_backward(op, w: np.ndarray, cache: LayerCache, grad_out: np.ndarray, op_t=None,
                       need_inputs: bool = True) -> LayerGradients:
    """Gradients of :func:`gcn_layer`; pass ``op_t`` to reuse a precomputed transpose.

    With ``need_inputs=False`` (first layer) the input gradient is left as ``None``.
    """
    g = activation_grad(cache.pre, cache.out, grad_out, cache.activation)
    if cache.propagated is not None:
        grad_w = cache.propagated.T @ g
        if not need_inputs:
            return LayerGradients(grad_w, None)
        op_t = op.T.tocsr() if op_t is None else op_t
        grad_h = spmm(op_t, g @ w.T)
    else:
        op_t = op.T.tocsr() if op_t is None else op_t
        back = spmm(op_t, g)
        grad_w = cache.inputs.T @ back
        grad_h = back @ w.T
    return LayerGradients(grad_w, grad_h)


def mlp_layer(h: np.ndarray, w: np.ndarray, b: np.ndarray, activation: str = "relu"):
    """activation(h @ w + b). Returns (output, cache) for :func:`mlp_layer_backward`."""
    if h.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ValueError(f"mlp_layer shape mismatch: H {h.shape}, W {w.shape}, b {b.shape}")
    pre = h @ w + b
    out = activate(pre, activation)
    return out, LayerCache(h, None, pre, out, activation)


def mlp_layer_backward(w: np.ndarray, cache: LayerCache, grad_out: np.ndarray, need_inputs: bool = True) -> LayerGradients:
    g = activation_grad(cache.pre, cache.out, grad_out, cache.activation)
    return LayerGradients(cache.inputs.T @ g, g @ w.T if need_inputs else None, g.sum(axis=0))


def init_weight(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update. Returns new (params, state); inputs are not mutated."""
    if params.keys() != grads.keys():
        raise ValueError("params and grads must have the same keys")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r} {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    step = state.step + 1
    bc1 = 1.0 - state.beta1**step
    bc2 = 1.0 - state.beta2**step
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_params[name] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_m[name], new_v[name] = m, v
    new_state = AdamState(state.lr, state.beta1, state.beta2, state.eps, step, new_m, new_v)
    return new_params, new_state


# ---------------------------------------------------------------- verification


def finite_diff_check(
    loss_and_grad: Callable[[Dict[str, np.ndarray]], tuple],
    params: Dict[str, np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Compare analytic gradients with central differences.

    ``loss_and_grad(params)`` returns ``(loss, grads)``. For each parameter
    array the error is ``||analytic - central|| / (||central|| + 1e-8)``; the
    maximum over parameters is returned.
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    loss, grads = loss_and_grad(params)
    if not np.isfinite(loss):
        raise FloatingPointError("loss is not finite at the check point")
    worst = 0.0
    for name, p in params.items():
        central = np.zeros_like(p)
        flat = p.reshape(-1)
        out = central.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_and_grad(params)[0]
            flat[i] = orig - eps
            down = loss_and_grad(params)[0]
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError(f"loss became non-finite while perturbing {name!r}")
            out[i] = (up - down) / (2.0 * eps)
        err = np.linalg.norm(grads[name] - central) / (np.linalg.norm(central) + 1e-8)
        worst = max(worst, float(err))
    return worst
