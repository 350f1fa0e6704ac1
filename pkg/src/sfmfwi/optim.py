"""AdamW, box projection, and smoothed isotropic total variation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, NumericError
from .model import VelocityModel


@dataclass
class AdamWState:
    """Optimizer state for a list of parameter blocks (numpy arrays or torch tensors).

    Weight decay is decoupled: parameters are scaled by ``1 - lr*wd`` before the
    bias-corrected adaptive step.
    """

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m1: list = field(default_factory=list)
    m2: list = field(default_factory=list)

    def __post_init__(self):
        if not (self.lr > 0 and 0 < self.beta1 < 1 and 0 < self.beta2 < 1 and self.eps > 0):
            raise InvalidArgument("AdamW needs lr > 0, betas in (0, 1) and eps > 0")
        if self.weight_decay < 0:
            raise InvalidArgument("weight_decay must be >= 0")


def _all_finite(g):
    if isinstance(g, np.ndarray):
        return bool(np.all(np.isfinite(g)))
    return bool(g.isfinite().all())


def adamw_step(state: AdamWState, params, grads, names=None):
    """Update ``params`` in place and return them.

    ``params`` and ``grads`` are parallel lists of arrays (numpy or torch, not
    mixed within a block). Torch parameters should be passed as ``p.data``.
    """
    if len(params) != len(grads):
        raise InvalidArgument(f"{len(params)} parameter blocks but {len(grads)} gradient blocks")
    for i, (p, g) in enumerate(zip(params, grads)):
        if tuple(p.shape) != tuple(g.shape):
            raise InvalidArgument(f"block {i}: param shape {tuple(p.shape)} vs grad shape {tuple(g.shape)}")
        if not _all_finite(g):
            name = names[i] if names else f"#{i}"
            raise NumericError(f"non-finite gradient in parameter block {name}")
    if not state.m1:
        state.m1 = [g * 0 for g in grads]
        state.m2 = [g * 0 for g in grads]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    decay = 1.0 - state.lr * state.weight_decay
    for i, (p, g) in enumerate(zip(params, grads)):
        m1 = state.m1[i] * b1 + g * (1.0 - b1)
        m2 = state.m2[i] * b2 + (g * g) * (1.0 - b2)
        state.m1[i], state.m2[i] = m1, m2
        update = (m1 / bc1) / ((m2 / bc2) ** 0.5 + state.eps)
        if state.weight_decay:
            p *= decay
        p -= state.lr * update
    return params


@dataclass(frozen=True)
class Bounds:
    c_min: float
    c_max: float | None = None

    def __post_init__(self):
        if not self.c_min > 0:
            raise InvalidArgument(f"c_min must be positive, got {self.c_min}")
        if self.c_max is not None and not self.c_max > self.c_min:
            raise InvalidArgument(f"c_max={self.c_max} must exceed c_min={self.c_min}")


def clamp(values, bounds: Bounds):
    return np.clip(values, bounds.c_min, bounds.c_max if bounds.c_max is not None else np.inf)


def project_bounds(model: VelocityModel, bounds: Bounds):
    """Euclidean projection onto the box ``c_min <= v <= c_max``."""
    return model.with_values(clamp(model.values, bounds))


def tv_array(values, dx, dz, epsilon):
    """Smoothed isotropic TV of a raw array and its exact gradient.

    Forward differences per meter; the last column/row has zero difference.
    """
    if not epsilon > 0:
        raise InvalidArgument(f"epsilon must be positive, got {epsilon}")
    m = np.asarray(values, dtype=np.float64)
    gx = np.zeros_like(m)
    gz = np.zeros_like(m)
    gx[:, :-1] = (m[:, 1:] - m[:, :-1]) / dx
    gz[:-1, :] = (m[1:, :] - m[:-1, :]) / dz
    r = np.sqrt(gx * gx + gz * gz + epsilon * epsilon)
    px = gx / r
    pz = gz / r
    grad = np.zeros_like(m)
    # transpose of the forward-difference operators
    grad[:, :-1] -= px[:, :-1] / dx
    grad[:, 1:] += px[:, :-1] / dx
    grad[:-1, :] -= pz[:-1, :] / dz
    grad[1:, :] += pz[:-1, :] / dz
    return float(r.sum()), grad


def tv_value_and_grad(model: VelocityModel, epsilon=1e-3):
    return tv_array(model.values, model.grid.dx, model.grid.dz, epsilon)
