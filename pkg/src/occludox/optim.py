"""First-order optimizers over named parameter tensors.

Supports plain SGD, SGD with classical momentum (v <- mu*v + g, p <- p - lr*v)
and Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8 defaults).
``ascent=True`` negates the step so the same machinery drives attacks that
maximize a loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

VALID_KINDS = ("sgd", "sgd-momentum", "adam")


@dataclass
class OptimState:
    kind: str
    lr: float
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ContractError(f"unknown optimizer kind {self.kind!r}")

    def _slot(self, name: str, key: str, like: np.ndarray) -> np.ndarray:
        store = self.slots.setdefault(name, {})
        if key not in store:
            store[key] = np.zeros_like(like)
        return store[key]


def optimizer_step(params: dict, grads: dict, state: OptimState,
                   ascent: bool = False) -> dict:
    """One update over a name->tensor dict; returns new tensors, mutates state.

    Every parameter must have a gradient; moment slots are allocated lazily and
    shape-checked against their parameters.
    """
    missing = [k for k in params if k not in grads]
    if missing:
        raise ContractError(f"missing gradient for parameter(s): {', '.join(missing)}")
    state.step += 1
    sign = -1.0 if ascent else 1.0
    out = {}
    for name, p in params.items():
        g = sign * np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        if state.kind == "sgd":
            out[name] = p - state.lr * g
        elif state.kind == "sgd-momentum":
            v = state._slot(name, "v", p)
            v *= state.momentum
            v += g
            out[name] = p - state.lr * v
        else:  # adam
            m = state._slot(name, "m", p)
            v = state._slot(name, "v", p)
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            mhat = m / (1.0 - state.beta1 ** state.step)
            vhat = v / (1.0 - state.beta2 ** state.step)
            out[name] = p - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return out
