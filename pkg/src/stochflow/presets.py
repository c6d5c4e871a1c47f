"""Named drifts, diffusions and test functions, addressable from JSON configs.

A config entry is either a bare name (``"ou"``) or an object
``{"kind": "ou", "rate": 2.0}`` whose extra keys are keyword arguments.
"""

from __future__ import annotations

import numpy as np

from .fields import DiffusionSpec, DriftSpec


def zero(dim=1):
    return DriftSpec.zero(dim)


def ou(dim=1, rate=1.0):
    eye = np.eye(dim)
    return DriftSpec(lambda t, x: -rate * x, dim, np.inf, np.inf, "closed-form",
                     lambda t, x: np.broadcast_to(-rate * eye, x.shape + (dim,)), "ou")


def linear(matrix):
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    d = A.shape[0]
    return DriftSpec(lambda t, x: x @ A.T, d, np.inf, np.inf, "closed-form",
                     lambda t, x: np.broadcast_to(A, x.shape + (d,)), "linear")


def rotation(rate=1.0):
    d = linear([[0.0, -rate], [rate, 0.0]])
    return DriftSpec(d.fn, 2, np.inf, np.inf, "closed-form", d.grad, "rotation")


def shear(rate=1.0):
    d = linear([[0.0, rate], [0.0, 0.0]])
    return DriftSpec(d.fn, 2, np.inf, np.inf, "closed-form", d.grad, "shear")


def gaussian_bump(dim=1, amplitude=0.5, width=1.0, center=None, direction=None, p=2.0, q=4.0):
    """b(x) = amplitude * exp(-|x - c|^2 / width^2) * direction."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    e = np.ones(dim) if direction is None else np.asarray(direction, dtype=float)

    def fn(t, x):
        g = amplitude * np.exp(-np.sum((x - c) ** 2, axis=-1) / width**2)
        return g[..., None] * e

    def grad(t, x):
        g = amplitude * np.exp(-np.sum((x - c) ** 2, axis=-1) / width**2)
        dg = (-2.0 / width**2) * g[..., None] * (x - c)
        return e[:, None] * dg[..., None, :]

    return DriftSpec(fn, dim, p, q, "closed-form", grad, "gaussian_bump")


def indicator_ball(dim=2, radius=1.0, center=None, direction=None, p=2.0, q=4.0):
    """b(x) = 1{|x - c| < radius} * direction: a bounded, discontinuous drift."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    e = np.eye(dim)[0] if direction is None else np.asarray(direction, dtype=float)

    def fn(t, x):
        inside = np.sum((x - c) ** 2, axis=-1) < radius**2
        return inside[..., None] * e

    return DriftSpec(fn, dim, p, q, "closed-form", None, "indicator_ball")


def smooth_2d(strength=0.5):
    """b(x) = (-x1 + s sin x2, -x2 + s cos x1)."""
    def fn(t, x):
        return np.stack([-x[..., 0] + strength * np.sin(x[..., 1]),
                         -x[..., 1] + strength * np.cos(x[..., 0])], axis=-1)

    def grad(t, x):
        g = np.zeros(x.shape + (2,))
        g[..., 0, 0] = -1.0
        g[..., 0, 1] = strength * np.cos(x[..., 1])
        g[..., 1, 0] = -strength * np.sin(x[..., 0])
        g[..., 1, 1] = -1.0
        return g

    return DriftSpec(fn, 2, np.inf, np.inf, "closed-form", grad, "smooth_2d")


def scalar_diffusion(dim=1, scale=1.0):
    return DiffusionSpec.scalar(scale, dim)


def constant_diffusion(matrix):
    return DiffusionSpec.constant(matrix)


def multiplicative(dim=1, amplitude=0.3):
    """sigma(x) = (1 + a sin x_1) I, elliptic with K = 1 / (1 - a)."""
    eye = np.eye(dim)

    def fn(t, x):
        return (1.0 + amplitude * np.sin(x[..., 0]))[..., None, None] * eye

    def grad(t, x):
        g = np.zeros(x.shape[:-1] + (dim, dim, dim))
        g[..., 0] = (amplitude * np.cos(x[..., 0]))[..., None, None] * eye
        return g

    return DiffusionSpec(fn, dim, 1.0 / (1.0 - amplitude), 0.5, False, grad, "multiplicative")


TEST_FUNCTIONS = {
    "sin": lambda x: np.sin(x[..., 0]),
    "coord0": lambda x: x[..., 0],
    "square": lambda x: np.sum(x * x, axis=-1),
    "gaussian": lambda x: np.exp(-np.sum(x * x, axis=-1)),
}

DRIFTS = {
    "zero": zero,
    "ou": ou,
    "linear": linear,
    "rotation": rotation,
    "shear": shear,
    "gaussian_bump": gaussian_bump,
    "indicator_ball": indicator_ball,
    "smooth_2d": smooth_2d,
}

DIFFUSIONS = {
    "scalar": scalar_diffusion,
    "constant": constant_diffusion,
    "multiplicative": multiplicative,
}


def _build(table, spec, what):
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in table:
        raise ValueError(f"unknown {what} {kind!r}; choose from {sorted(table)}")
    return table[kind](**spec)


def drift(spec) -> DriftSpec:
    return _build(DRIFTS, spec, "drift")


def diffusion(spec) -> DiffusionSpec:
    return _build(DIFFUSIONS, spec, "diffusion")


def named_function(name: str):
    if name not in TEST_FUNCTIONS:
        raise ValueError(f"unknown test function {name!r}; choose from {sorted(TEST_FUNCTIONS)}")
    return TEST_FUNCTIONS[name]
