"""Coefficient fields, mollification and mixed space-time Lebesgue norms.

Fields are vectorised: ``drift(t, x)`` takes points of shape (n, d) and
returns (n, d); ``diffusion(t, x)`` returns (n, d, d). Gradients follow the
convention ``grad_b[..., a, j] = d b^a / d x_j`` and
``grad_sigma[..., a, m, j] = d sigma^{a m} / d x_j``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from . import defaults
from .errors import FieldEvaluationError
from .grids import GridField

FD_STEP = defaults.FD_STEP


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x, single


def fd_gradient(fn: Callable, t: float, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of ``fn(t, x)`` in x; a new trailing axis indexes the direction."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    cols = []
    for j in range(d):
        h = step * np.maximum(1.0, np.abs(x[..., j]))
        e = np.zeros_like(x)
        e[..., j] = h
        diff = np.asarray(fn(t, x + e)) - np.asarray(fn(t, x - e))
        h = h.reshape(h.shape + (1,) * (diff.ndim - h.ndim))
        cols.append(diff / (2 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True, eq=False)
class DriftSpec:
    """Time-dependent drift b(t, x) on R^d with integrability exponents (p, q)."""

    fn: Callable
    dim: int
    p: float = np.inf
    q: float = np.inf
    kind: str = "closed-form"
    grad: Callable | None = None
    name: str = "drift"

    def __call__(self, t, x):
        return self.eval(t, x)

    def eval(self, t, x) -> np.ndarray:
        x, single = _as_points(x, self.dim)
        out = np.asarray(self.fn(t, x), dtype=float).reshape(x.shape)
        return out[0] if single else out

    def gradient(self, t, x, mode: str = "auto") -> np.ndarray:
        """Jacobian of b in x, shape (n, d, d); ``mode`` is auto, closed or fd."""
        x, single = _as_points(x, self.dim)
        if mode not in ("auto", "closed", "fd"):
            raise ValueError(f"unknown gradient mode {mode!r}")
        if mode == "closed" and self.grad is None:
            raise ValueError(f"drift {self.name!r} has no closed-form gradient")
        if self.grad is not None and mode != "fd":
            g = np.asarray(self.grad(t, x), dtype=float).reshape(x.shape + (self.dim,))
        else:
            g = fd_gradient(self.eval, t, x)
        return g[0] if single else g

    def _combine(self, other, a, b, name):
        if isinstance(other, DriftSpec):
            if other.dim != self.dim:
                raise ValueError("drift dimensions differ")

            def fn(t, x):
                return a * self.eval(t, x) + b * other.eval(t, x)

            grad = None
            if self.grad is not None and other.grad is not None:
                def grad(t, x):
                    return a * self.gradient(t, x) + b * other.gradient(t, x)
            return DriftSpec(fn, self.dim, self.p, self.q, "composite", grad, name)
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0, f"{self.name}+{getattr(other, 'name', '?')}")

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0, f"{self.name}-{getattr(other, 'name', '?')}")

    def scaled(self, c: float) -> "DriftSpec":
        grad = None if self.grad is None else (lambda t, x: c * self.gradient(t, x))
        return DriftSpec(lambda t, x: c * self.eval(t, x), self.dim, self.p, self.q,
                         self.kind, grad, f"{c!r}*{self.name}")

    def __mul__(self, c):
        return self.scaled(float(c))

    __rmul__ = __mul__

    @classmethod
    def from_grid(cls, grid: GridField, p=np.inf, q=np.inf, name="sampled") -> "DriftSpec":
        """Grid-sampled drift: multilinear between nodes, zero outside a non-periodic box."""
        if grid.ncomp != grid.dim:
            raise ValueError("a drift grid needs one component per spatial dimension")
        return cls(lambda t, x: grid(x), grid.dim, p, q, "grid-sampled", None, name)

    @classmethod
    def zero(cls, dim: int, p=np.inf, q=np.inf) -> "DriftSpec":
        return cls(lambda t, x: np.zeros_like(x), dim, p, q, "closed-form",
                   lambda t, x: np.zeros(x.shape + (dim,)), "zero")


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    """Diffusion matrix sigma(t, x) with ellipticity constant K and Hoelder index alpha."""

    fn: Callable
    dim: int
    K: float = 1.0
    alpha: float = 0.5
    constant_in_x: bool = False
    grad: Callable | None = None
    name: str = "diffusion"
    matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("ellipticity constant K must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("Hoelder index alpha must lie in (0, 1)")

    @classmethod
    def constant(cls, matrix, K=None, name="constant") -> "DiffusionSpec":
        m = np.atleast_2d(np.asarray(matrix, dtype=float)).copy()
        m.setflags(write=False)
        d = m.shape[0]
        sv = np.linalg.svd(m, compute_uv=False)
        if K is None:
            K = max(1.0, sv.max(), 1.0 / sv.min())
        return cls(lambda t, x: np.broadcast_to(m, x.shape[:-1] + (d, d)), d, float(K), 0.5,
                   True, lambda t, x: np.zeros(x.shape[:-1] + (d, d, d)), name, m)

    @classmethod
    def scalar(cls, c: float, dim: int) -> "DiffusionSpec":
        return cls.constant(c * np.eye(dim), name=f"{c!r}*I")

    def __call__(self, t, x):
        return self.eval(t, x)

    def eval(self, t, x) -> np.ndarray:
        x, single = _as_points(x, self.dim)
        out = np.asarray(self.fn(t, x), dtype=float).reshape(x.shape[:-1] + (self.dim, self.dim))
        return out[0] if single else out

    def gradient(self, t, x, mode: str = "auto") -> np.ndarray:
        """Shape (n, d, d, d): [a, m, j] = d sigma^{a m} / d x_j."""
        x, single = _as_points(x, self.dim)
        if mode not in ("auto", "closed", "fd"):
            raise ValueError(f"unknown gradient mode {mode!r}")
        if mode == "closed" and self.grad is None:
            raise ValueError(f"diffusion {self.name!r} has no closed-form gradient")
        if self.grad is not None and mode != "fd":
            g = np.asarray(self.grad(t, x), dtype=float).reshape(x.shape[:-1] + (self.dim,) * 3)
        else:
            g = fd_gradient(self.eval, t, x)
        return g[0] if single else g

    def check_ellipticity(self, times, points) -> tuple[float, float]:
        """Extreme singular values over the samples; raises if outside [1/K, K]."""
        lo, hi = np.inf, 0.0
        for t in np.atleast_1d(times):
            sv = np.linalg.svd(self.eval(t, points), compute_uv=False)
            lo, hi = min(lo, sv.min()), max(hi, sv.max())
        if lo < 1.0 / self.K - 1e-12 or hi > self.K + 1e-12:
            raise ValueError(f"singular values in [{lo:.4g}, {hi:.4g}] violate K={self.K}")
        return lo, hi


@functools.lru_cache(maxsize=None)
def bump_normalization(dim: int) -> float:
    """c with c * integral_{|x|<1} exp(-1/(1-|x|^2)) dx = 1, by radial quadrature."""
    sphere = 2 * np.pi ** (dim / 2) / special.gamma(dim / 2)
    radial, _ = integrate.quad(lambda r: r ** (dim - 1) * np.exp(-1.0 / (1.0 - r * r)), 0.0, 1.0,
                               epsabs=1e-15, epsrel=1e-13, limit=200)
    return 1.0 / (sphere * radial)


def bump(x: np.ndarray) -> np.ndarray:
    """The unit-mass smooth bump on the unit ball; x has shape (..., d)."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return bump_normalization(x.shape[-1]) * out


def bump_gradient(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    fac = np.zeros_like(r2)
    inside = r2 < 1.0
    fac[inside] = -2.0 / (1.0 - r2[inside]) ** 2
    return (bump(x) * fac)[..., None] * x


@dataclass(frozen=True)
class MollifierSpec:
    """rho_n(x) = n^d rho(n x) with quadrature ``nodes`` per axis over its support."""

    level: int
    dim: int
    nodes: int = defaults.MOLLIFIER_NODES

    def __post_init__(self):
        if self.level <= 0:
            raise ValueError(f"mollifier level must be positive, got {self.level}")
        if self.nodes < 2:
            raise ValueError("need at least two quadrature nodes per axis")

    @property
    def radius(self) -> float:
        return 1.0 / self.level

    def kernel(self, x) -> np.ndarray:
        n = self.level
        return n**self.dim * bump(n * np.asarray(x, dtype=float))

    def kernel_gradient(self, x) -> np.ndarray:
        n = self.level
        return n ** (self.dim + 1) * bump_gradient(n * np.asarray(x, dtype=float))

    def quadrature(self):
        """Midpoint nodes y_j on the support cube with weights summing to one."""
        h = 2.0 * self.radius / self.nodes
        ax = -self.radius + h * (np.arange(self.nodes) + 0.5)
        y = np.array(list(itertools.product(ax, repeat=self.dim)))
        w = self.kernel(y) * h**self.dim
        keep = w > 0
        y, w = y[keep], w[keep]
        total = w.sum()
        gw = self.kernel_gradient(y) * h**self.dim / total
        return y, w / total, gw


def mollify(b: DriftSpec, m: MollifierSpec) -> DriftSpec:
    """Quadrature approximation of (rho_n * b(t, .))(x), with its x-gradient."""
    if m.dim != b.dim:
        raise ValueError("mollifier and drift dimensions differ")
    y, w, gw = m.quadrature()

    def shifted(t, x):
        pts = x[:, None, :] - y[None, :, :]
        return b.eval(t, pts.reshape(-1, b.dim)).reshape(pts.shape)

    def fn(t, x):
        return np.einsum("nqa,q->na", shifted(t, x), w)

    def grad(t, x):
        # d/dx (rho * b)(x) = integral b(x - y) grad rho(y) dy
        return np.einsum("nqa,qj->naj", shifted(t, x), gw)

    return DriftSpec(fn, b.dim, b.p, b.q, "mollified", grad, f"rho_{m.level}*{b.name}")


def _midpoints(lo, hi, n):
    h = (hi - lo) / n
    return lo + h * (np.arange(n) + 0.5), h


def lq_lp_norm(f, box, time=(0.0, 1.0), p=None, q=None, nodes: int = defaults.LQ_NODES,
               time_nodes: int = defaults.LQ_NODES) -> float:
    """(int_T^S (int_box |f(t,x)|^p dx)^{q/p} dt)^{1/q} by tensor midpoint quadrature.

    ``f`` is a DriftSpec (exponents default to its own) or a callable
    f(t, x) returning (n,) or (n, k) values.
    """
    if isinstance(f, DriftSpec):
        p = f.p if p is None else p
        q = f.q if q is None else q
        fn = f.eval
    else:
        fn = f
    if p is None or q is None or not (np.isfinite(p) and np.isfinite(q)):
        raise ValueError("lq_lp_norm needs finite exponents p and q")
    if p < 1 or q < 1:
        raise ValueError("exponents must be >= 1")
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("zero-volume box")
    T, S = map(float, time)
    if S <= T:
        raise ValueError("empty time interval")
    axes, cell = [], 1.0
    for lo, hi in box:
        ax, h = _midpoints(lo, hi, nodes)
        axes.append(ax)
        cell *= h
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    ts, dt = _midpoints(T, S, time_nodes)
    inner = np.empty(time_nodes)
    for i, t in enumerate(ts):
        v = np.asarray(fn(t, pts), dtype=float)
        if not np.all(np.isfinite(v)):
            raise FieldEvaluationError("field returned non-finite values", time=float(t))
        mag = np.abs(v) if v.ndim == 1 else np.sqrt(np.sum(v * v, axis=-1))
        inner[i] = np.sum(mag**p) * cell
    return float((np.sum(inner ** (q / p)) * dt) ** (1.0 / q))


def divergence(b: DriftSpec, t, x) -> np.ndarray:
    g = b.gradient(t, np.atleast_2d(x))
    return np.trace(g, axis1=-2, axis2=-1)


def check_divergence_free(b: DriftSpec, points, times=(0.0,), tol: float = 1e-6) -> float:
    """Largest |div b| over the spot samples; raises ValueError above ``tol``."""
    worst = max(float(np.max(np.abs(divergence(b, t, points)))) for t in times)
    if worst > tol:
        raise ValueError(f"drift {b.name!r} is not divergence-free: |div b| = {worst:.3g}")
    return worst
