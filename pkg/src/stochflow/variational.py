"""Jacobian flow, Malliavin directional derivatives, Malliavin covariance and
Bismut-Elworthy-Li gradient weights along stored Euler-Maruyama ensembles.

All recursions are explicit Euler steps on the same increments that
produced the paths:

    J[k+1]  = J[k]  + grad b(X[k]) J[k] dt  + sum_m grad sigma^{.m}(X[k]) J[k] dW^m[k]
    D[k+1]  = D[k]  + grad b(X[k]) D[k] dt  + sum_m grad sigma^{.m}(X[k]) D[k] dW^m[k]
                    + sigma(X[k]) hdot[k] dt
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import DiffusionSpec, DriftSpec
from .paths import BrownianEnsemble, PathEnsemble
from .solver import euler_maruyama, map_chunks


@dataclass(eq=False)
class JacobianEnsemble:
    J: np.ndarray
    paths: PathEnsemble

    @property
    def final(self) -> np.ndarray:
        return self.J[:, -1]


@dataclass(eq=False)
class MalliavinPath:
    direction: np.ndarray
    DhX: np.ndarray
    covariance: np.ndarray | None = None


@dataclass(frozen=True)
class GradientEstimate:
    point: np.ndarray
    horizon: float
    estimate: np.ndarray
    std_error: np.ndarray
    n_paths: int
    dt: float
    n_flagged: int = 0
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_json(self) -> dict:
        return {
            "point": [float(v) for v in np.atleast_1d(self.point)],
            "horizon": float(self.horizon),
            "estimate": [float(v) for v in self.estimate],
            "std_error": [float(v) for v in self.std_error],
            "n_paths": int(self.n_paths),
            "dt": float(self.dt),
        }


def _check_grid(paths: PathEnsemble, noise: BrownianEnsemble):
    paths.require_full()
    if paths.grid != noise.grid or paths.n_paths != noise.n_paths:
        raise ValueError("paths and noise are on different grids or path counts")


def _linear_step(Z, t, X, dW, dt, b, sigma, grad_b, grad_sigma):
    """Z + grad b Z dt + sum_m grad sigma^{.m} Z dW^m for Z of shape (n, d, c)."""
    gb = b.gradient(t, X, grad_b)
    out = Z + np.einsum("naj,njc->nac", gb, Z) * dt
    if sigma.matrix is None:
        gs = sigma.gradient(t, X, grad_sigma)
        out += np.einsum("namj,njc,nm->nac", gs, Z, dW)
    return out


def jacobian_flow(paths: PathEnsemble, b: DriftSpec, sigma: DiffusionSpec, noise: BrownianEnsemble,
                  grad_b: str = "auto", grad_sigma: str = "auto", initial=None,
                  workers: int = 1) -> JacobianEnsemble:
    """Jacobian J = dX/dx along ``paths`` (recorded at every node).

    ``grad_b``/``grad_sigma`` choose closed-form ("closed"), finite-difference
    ("fd") or whichever is available ("auto") coefficient gradients.
    ``initial`` replaces the identity start, (d, d) or (N, d, d).
    """
    _check_grid(paths, noise)
    d, grid = paths.dim, paths.grid
    J0 = np.eye(d) if initial is None else np.asarray(initial, dtype=float)

    def block(p0, p1):
        J = np.empty((p1 - p0, grid.steps + 1, d, d))
        J[:, 0] = J0 if J0.ndim == 2 else J0[p0:p1]
        dW = noise.increments(p0=p0, p1=p1)
        for k in range(grid.steps):
            t = grid.t_start + k * grid.dt
            J[:, k + 1] = _linear_step(J[:, k], t, paths.X[p0:p1, k], dW[:, k], grid.dt,
                                       b, sigma, grad_b, grad_sigma)
        return J

    return JacobianEnsemble(np.concatenate(map_chunks(block, paths.n_paths, workers)), paths)


def malliavin_derivative(paths: PathEnsemble, b: DriftSpec, sigma: DiffusionSpec,
                         noise: BrownianEnsemble, hdot, jac: JacobianEnsemble | None = None,
                         grad_b: str = "auto", grad_sigma: str = "auto") -> MalliavinPath:
    """D_h X along the adapted direction with derivative ``hdot`` ((M, d) or (N, M, d))."""
    _check_grid(paths, noise)
    d, grid = paths.dim, paths.grid
    hdot = np.asarray(hdot, dtype=float)
    if hdot.shape[-2:] != (grid.steps, d) or hdot.ndim not in (2, 3):
        raise ValueError(f"direction must have shape (M, d) or (N, M, d) with M={grid.steps}, d={d}")
    if hdot.ndim == 3 and hdot.shape[0] != paths.n_paths:
        raise ValueError("per-path direction has the wrong number of paths")
    if not np.all(np.isfinite(hdot)):
        raise ValueError("direction is not square-summable")
    n = paths.n_paths
    D = np.zeros((n, grid.steps + 1, d))
    dW = noise.materialize()
    for k in range(grid.steps):
        t = grid.t_start + k * grid.dt
        X = paths.X[:, k]
        Z = _linear_step(D[:, k, :, None], t, X, dW[:, k], grid.dt, b, sigma, grad_b, grad_sigma)
        h = hdot[k] if hdot.ndim == 2 else hdot[:, k]
        src = np.einsum("nam,nm->na", sigma.eval(t, X), np.broadcast_to(h, (n, d)))
        D[:, k + 1] = Z[..., 0] + src * grid.dt
    cov = malliavin_covariance(paths, jac, sigma) if jac is not None else None
    return MalliavinPath(hdot, D, cov)


def malliavin_covariance(paths: PathEnsemble, jac: JacobianEnsemble, sigma: DiffusionSpec) -> np.ndarray:
    """Sigma = sum_k (J_M J_k^{-1} sigma_k)(J_M J_k^{-1} sigma_k)^T dt, per path."""
    grid = paths.grid
    JM = jac.J[:, -1]
    cov = np.zeros((paths.n_paths, paths.dim, paths.dim))
    for k in range(grid.steps):
        t = grid.t_start + k * grid.dt
        A = JM @ np.linalg.solve(jac.J[:, k], sigma.eval(t, paths.X[:, k]))
        cov += A @ np.swapaxes(A, 1, 2) * grid.dt
    return 0.5 * (cov + np.swapaxes(cov, 1, 2))


def gradient_direction(paths: PathEnsemble, jac: JacobianEnsemble, sigma: DiffusionSpec, v) -> np.ndarray:
    """hdot_v[k] = sigma^{-1}(X_k) J_k v / (s - t): D along it reproduces J v at the horizon."""
    grid = paths.grid
    v = np.asarray(v, dtype=float)
    out = np.empty((paths.n_paths, grid.steps, paths.dim))
    for k in range(grid.steps):
        t = grid.t_start + k * grid.dt
        out[:, k] = np.linalg.solve(sigma.eval(t, paths.X[:, k]), (jac.J[:, k] @ v)[..., None])[..., 0]
    return out / grid.horizon


def bel_weights(paths: PathEnsemble, jac: JacobianEnsemble, sigma: DiffusionSpec,
                noise: BrownianEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Ito sums sum_k J_k^T sigma_k^{-T} dW_k (left endpoints) and a singular-sigma flag per path."""
    _check_grid(paths, noise)
    grid = paths.grid
    w = np.zeros((paths.n_paths, paths.dim))
    flagged = paths.flagged.copy()
    limit = 10.0 * sigma.K
    dW = noise.materialize()
    inv_const = None if sigma.matrix is None else np.linalg.inv(sigma.matrix)
    for k in range(grid.steps):
        t = grid.t_start + k * grid.dt
        if inv_const is not None:
            inv = np.broadcast_to(inv_const, (paths.n_paths,) + inv_const.shape)
        else:
            inv = np.linalg.inv(sigma.eval(t, paths.X[:, k]))
            flagged |= np.linalg.norm(inv, ord=2, axis=(1, 2)) > limit
        y = np.einsum("nma,nm->na", inv, dW[:, k])
        w += np.einsum("nab,na->nb", jac.J[:, k], y)
    return w, flagged


def bel_gradient(paths: PathEnsemble, jac: JacobianEnsemble, sigma: DiffusionSpec, f,
                 noise: BrownianEnsemble) -> GradientEstimate:
    """grad_x E f(X_s(x)) ~ mean of f(X_s) * weight / (s - t) over unflagged paths."""
    w, flagged = bel_weights(paths, jac, sigma, noise)
    fx = np.asarray(f(paths.final), dtype=float)
    samples = (fx[:, None] * w / paths.grid.horizon)[~flagged]
    n = samples.shape[0]
    return GradientEstimate(paths.initial[0].copy(), paths.grid.horizon, samples.mean(axis=0),
                            samples.std(axis=0, ddof=1) / np.sqrt(n), n, paths.grid.dt,
                            int(flagged.sum()), samples)


def fd_gradient_mc(x0, b: DriftSpec, sigma: DiffusionSpec, f, noise: BrownianEnsemble,
                   step: float = 1e-3) -> GradientEstimate:
    """Central finite difference of E f(X_s(x)) with common random numbers."""
    x0 = np.asarray(x0, dtype=float)
    cols = []
    for j in range(x0.size):
        e = np.zeros_like(x0)
        e[j] = step
        up = euler_maruyama(x0 + e, b, sigma, noise, record="final")
        dn = euler_maruyama(x0 - e, b, sigma, noise, record="final")
        ok = ~(up.flagged | dn.flagged)
        cols.append(((f(up.final) - f(dn.final)) / (2 * step))[ok])
    samples = np.stack(cols, axis=1)
    n = samples.shape[0]
    return GradientEstimate(x0, noise.grid.horizon, samples.mean(axis=0),
                            samples.std(axis=0, ddof=1) / np.sqrt(n), n, noise.grid.dt,
                            noise.n_paths - n, samples)


def jacobian_moment(jac: JacobianEnsemble, power: float) -> tuple[float, float]:
    """E sup_k |J_k|^power (Hilbert-Schmidt norm) and its standard error."""
    norms = np.sqrt(np.sum(jac.J**2, axis=(2, 3)))
    vals = norms.max(axis=1) ** power
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(vals.size))
