"""
Adam, as a pure function over named parameters.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from partsim.errors import ShapeError
from partsim.nn.tensor import Tensor


@dataclass(frozen=True)
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def _array(value):
    return value.data if isinstance(value, Tensor) else np.asarray(value)


def adam_step(params: dict, grads: dict, state: AdamState):
    """One bias-corrected Adam update.

    `params` maps names to Tensors (or arrays); returns new params of the same
    kind and a new state. Inputs are left untouched.
    """
    step = state.step + 1
    m_hat_scale = 1.0 / (1.0 - state.beta1 ** step)
    v_hat_scale = 1.0 / (1.0 - state.beta2 ** step)
    new_params, new_m, new_v = {}, {}, {}
    for name, param in params.items():
        value = _array(param)
        grad = np.asarray(grads[name], dtype=value.dtype)
        if grad.shape != value.shape:
            raise ShapeError(f'adam_step[{name}]', value.shape, grad.shape)
        m_prev = state.m.get(name, np.zeros_like(value))
        v_prev = state.v.get(name, np.zeros_like(value))
        if m_prev.shape != value.shape:
            raise ShapeError(f'adam_step[{name}]', value.shape, m_prev.shape)
        m = state.beta1 * m_prev + (1.0 - state.beta1) * grad
        v = state.beta2 * v_prev + (1.0 - state.beta2) * grad * grad
        update = state.lr * (m * m_hat_scale) / (np.sqrt(v * v_hat_scale) + state.eps)
        updated = (value - update).astype(value.dtype)
        new_m[name], new_v[name] = m.astype(value.dtype), v.astype(value.dtype)
        if isinstance(param, Tensor):
            new_params[name] = Tensor(updated, requires_grad=param.requires_grad, name=param.name, dtype=value.dtype)
        else:
            new_params[name] = updated
    return new_params, replace(state, step=step, m=new_m, v=new_v)
