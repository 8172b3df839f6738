"""Backprop vs central finite differences."""

from __future__ import annotations

import numpy as np

from .layers import Layer
from .model import Model
from .train import bce_grad, bce_loss


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def _param_subset(params, n_params, rng):
    coords = [(pi, idx) for pi, p in enumerate(params) for idx in np.ndindex(p.value.shape)]
    if n_params is not None and n_params < len(coords):
        pick = rng.choice(len(coords), size=n_params, replace=False)
        coords = [coords[i] for i in sorted(pick)]
    return coords


def grad_check(model: Model, x, y, n_params: int | None = 60, h: float = 1e-4, seed: int = 0) -> float:
    """Max relative error between backprop and finite-difference gradients of
    the BCE loss over a random subset of parameters.  Use a float64 model."""
    rng = np.random.default_rng(seed)
    params = model.params()
    model.zero_grad()
    p = model.forward(x)
    model.backward(bce_grad(p, y))
    analytic = [q.grad.copy() for q in params]

    worst = 0.0
    for pi, idx in _param_subset(params, n_params, rng):
        v = params[pi].value
        orig = v[idx]
        v[idx] = orig + h
        up = bce_loss(model.forward(x), y)
        v[idx] = orig - h
        down = bce_loss(model.forward(x), y)
        v[idx] = orig
        worst = max(worst, _rel_err(analytic[pi][idx], (up - down) / (2 * h)))
    return worst


def grad_check_layer(layer: Layer, x, n_params: int | None = 60, n_inputs: int = 40,
                     h: float = 1e-4, seed: int = 0) -> float:
    """Same check for one layer under the loss sum(out * R), R random.

    Covers parameter gradients and a random subset of input gradients.
    """
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)
    out = layer.forward(x)
    R = rng.standard_normal(out.shape)

    def loss(inp):
        return float(np.sum(layer.forward(inp) * R))

    layer.zero_grad()
    layer.forward(x)
    dx = layer.backward(R)
    params = layer.params()
    analytic = [q.grad.copy() for q in params]

    worst = 0.0
    for pi, idx in _param_subset(params, n_params, rng):
        v = params[pi].value
        orig = v[idx]
        v[idx] = orig + h
        up = loss(x)
        v[idx] = orig - h
        down = loss(x)
        v[idx] = orig
        worst = max(worst, _rel_err(analytic[pi][idx], (up - down) / (2 * h)))

    flat = rng.choice(x.size, size=min(n_inputs, x.size), replace=False)
    for f in flat:
        idx = np.unravel_index(f, x.shape)
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        worst = max(worst, _rel_err(dx[idx], (loss(xp) - loss(xm)) / (2 * h)))
    return worst
