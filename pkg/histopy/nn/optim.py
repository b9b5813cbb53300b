"""Adam optimizer."""
from dataclasses import dataclass, field

import numpy as np

from histopy.errors import ShapeError


@dataclass
class OptimizerState:
    """State of the Adam optimizer.

    Attributes
    ----------
    lr : float
        Learning rate
    beta1, beta2 : float
        Decay rates of the first and second moments
    eps : float
        Term added to the denominator
    step : int
        Number of steps performed
    m, v : dict
        First and second moments of each parameter (created on first use)
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        assert self.lr > 0, "learning rate should be positive"
        assert 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1
        assert self.step >= 0


def adam_step(params, grads, state):
    """Perform a single Adam update with bias correction.

    Parameters
    ----------
    params : NetworkParams | dict
        Parameters to update
    grads : dict
        Gradients of the parameters to update. Parameters without a gradient
        are left untouched (same arrays)
    state : OptimizerState
        Optimizer state, updated in place

    Returns
    -------
    params : NetworkParams | dict
        Updated parameters (same type as the input)
    state : OptimizerState
        The optimizer state
    """
    state.step += 1
    t = state.step
    c1, c2 = 1. - state.beta1 ** t, 1. - state.beta2 ** t
    updates = dict()
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"gradient of unknown parameter {name}")
        p = params[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient of {name} has shape {g.shape}, "
                             f"parameter has shape {p.shape}")
        dt = p.dtype.type
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        if m.shape != p.shape:
            raise ShapeError(f"moments of {name} do not match its shape")
        m = dt(state.beta1) * m + dt(1. - state.beta1) * g
        v = dt(state.beta2) * v + dt(1. - state.beta2) * (g * g)
        m_hat = m / dt(c1)
        v_hat = v / dt(c2)
        updates[name] = p - dt(state.lr) * m_hat / (np.sqrt(v_hat) +
                                                    dt(state.eps))
        state.m[name], state.v[name] = m, v
    if isinstance(params, dict):
        new = type(params)(params)
        new.update(updates)
        return new, state
    return params.replace(updates), state
