"""Stochastic-Lagrangian Navier-Stokes on the periodic torus.

The backward system on [T, 0] (T < 0) with terminal data phi:

    X_{t,s}(x) = x + int_t^s u_r(X_{t,r}(x)) dr + sqrt(2 nu) (W_s - W_t),
    u_t(x)     = P E[ grad X_{t,0}(x)^T phi(X_{t,0}(x)) ],

is solved as a fixed point of the right-hand map (the transport operator)
with the noise frozen across iterations. All grid nodes share one set of
Brownian paths, so each realization is a stochastic flow of the box.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from numba import njit, prange

from . import defaults
from .errors import HorizonTooLongError
from .grids import GridField
from .paths import TimeGrid, generate

# prefer OpenMP or the work queue over an incompatible TBB install
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

__all__ = [
    "GridField", "divergence", "curl", "leray_project", "biot_savart", "biot_savart_free",
    "k3_kernel", "heat_decay", "taylor_green", "VelocityLevels", "NsState",
    "pushforward_velocity", "fixed_point_solve", "vorticity_representation",
    "random_vortex", "RandomVortexRun", "w1p_norm",
]


# spectral calculus on the torus

def divergence(v: GridField) -> GridField:
    """Scalar field sum_j d_j v_j, shape (1, *shape)."""
    if v.ncomp != v.dim:
        raise ValueError("divergence needs a d-component field")
    iks = v.derivative_symbols()
    vhat = v.fft()
    out = sum(iks[j] * vhat[j] for j in range(v.dim))
    return GridField(v.lo, v.hi, np.real(np.fft.ifftn(out))[None], True)


def curl(v: GridField) -> GridField:
    """Scalar vorticity (1, *shape) in 2-D, vector (3, *shape) in 3-D."""
    if v.ncomp != v.dim or v.dim not in (2, 3):
        raise ValueError("curl needs a 2-D or 3-D vector field")
    ik = v.derivative_symbols()
    vh = v.fft()
    if v.dim == 2:
        out = (ik[0] * vh[1] - ik[1] * vh[0])[None]
    else:
        out = np.stack([ik[1] * vh[2] - ik[2] * vh[1],
                        ik[2] * vh[0] - ik[0] * vh[2],
                        ik[0] * vh[1] - ik[1] * vh[0]])
    return v.from_fft(out)


def leray_project(v: GridField) -> GridField:
    """v_hat(k) - k (k . v_hat(k)) / |k|^2 for k != 0; the mean is kept."""
    if not v.periodic:
        raise ValueError("leray_project needs a periodic field")
    if v.ncomp != v.dim:
        raise ValueError("leray_project needs a d-component field")
    ks = v.wavenumbers()
    k2 = sum(k * k for k in ks)
    k2[(0,) * v.dim] = 1.0
    vh = v.fft()
    kv = sum(ks[j] * vh[j] for j in range(v.dim)) / k2
    return v.from_fft(np.stack([vh[j] - ks[j] * kv for j in range(v.dim)]))


def _check_mean_zero(omega: GridField):
    scale = np.abs(omega.values).max()
    mean = np.abs(omega.values.reshape(omega.ncomp, -1).mean(axis=1)).max()
    if mean > 1e-10 * scale + 1e-14:
        raise ValueError(f"vorticity has nonzero mean {mean:.3g}; the torus problem is unsolvable")


def biot_savart(omega: GridField) -> GridField:
    """Mean-zero velocity with curl u = omega on the torus (omega divergence-free in 3-D)."""
    if not omega.periodic:
        raise ValueError("use biot_savart_free for non-periodic data")
    d = omega.dim
    if (d, omega.ncomp) not in ((2, 1), (3, 3)):
        raise ValueError("need scalar vorticity in 2-D or a 3-vector in 3-D")
    _check_mean_zero(omega)
    ik = omega.derivative_symbols()
    ks = omega.wavenumbers()
    k2 = sum(k * k for k in ks)
    k2[(0,) * d] = 1.0
    wh = omega.fft() / k2
    if d == 2:
        uh = np.stack([ik[1] * wh[0], -ik[0] * wh[0]])
    else:
        uh = np.stack([ik[1] * wh[2] - ik[2] * wh[1],
                       ik[2] * wh[0] - ik[0] * wh[2],
                       ik[0] * wh[1] - ik[1] * wh[0]])
    return GridField(omega.lo, omega.hi, np.real(np.fft.ifftn(uh, axes=tuple(range(1, d + 1)))), True)


def k3_kernel(x, h) -> np.ndarray:
    """(1 / 4 pi) (x cross h) / |x|^3."""
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.cross(x, h) / (4 * np.pi * r**3)


def biot_savart_free(omega: GridField, targets, delta: float | None = None,
                     chunk: int = 2048) -> np.ndarray:
    """Free-space velocity at ``targets`` from gridded vorticity, by direct vortex-blob summation.

    Blob factors: 1 - exp(-r^2/delta^2) in 2-D, 1 - exp(-(r/delta)^3) in 3-D.
    ``delta`` defaults to two grid spacings.
    """
    d = omega.dim
    if (d, omega.ncomp) not in ((2, 1), (3, 3)):
        raise ValueError("need scalar vorticity in 2-D or a 3-vector in 3-D")
    delta = defaults.BLOB_SPACINGS * float(omega.spacing.max()) if delta is None else float(delta)
    w = np.moveaxis(omega.values, 0, -1).reshape(-1, omega.ncomp) * omega.cell_volume
    keep = np.any(w != 0.0, axis=1)
    src, w = omega.points()[keep], w[keep]
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    out = np.zeros((len(targets), d))
    for a in range(0, len(targets), chunk):
        r = targets[a:a + chunk, None, :] - src[None]
        r2 = np.sum(r * r, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            if d == 2:
                fac = np.where(r2 > 0, -np.expm1(-r2 / delta**2) / (2 * np.pi * r2), 0.0)
                out[a:a + chunk, 0] = -np.sum(fac * r[..., 1] * w[:, 0], axis=1)
                out[a:a + chunk, 1] = np.sum(fac * r[..., 0] * w[:, 0], axis=1)
            else:
                rr = np.sqrt(r2)
                fac = np.where(rr > 0, -np.expm1(-(rr / delta) ** 3) / (4 * np.pi * rr**3), 0.0)
                out[a:a + chunk] = np.sum(fac[..., None] * np.cross(r, w[None]), axis=1)
    return out


def heat_decay(f: GridField, nu: float, t: float) -> GridField:
    """exp(nu |t| Laplacian) f, the backward heat flow from time 0 to t <= 0."""
    ks = f.wavenumbers()
    k2 = sum(k * k for k in ks)
    return f.from_fft(f.fft() * np.exp(-nu * abs(t) * k2))


def taylor_green(m: int) -> GridField:
    """(sin x cos y, -cos x sin y) on [0, 2 pi)^2."""
    g = GridField.periodic_box(2 * np.pi, (m, m), np.zeros((2, m, m)))
    x, y = g.mesh()
    return g.with_values(np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)]))


def w1p_norm(f: GridField, p: float = 4.0) -> float:
    """(||f||_p^p + ||grad f||_p^p)^(1/p) by grid quadrature."""
    g = f.gradient().reshape((-1,) + f.shape)
    mag = np.sqrt(np.sum(f.values**2, axis=0))
    gmag = np.sqrt(np.sum(g**2, axis=0))
    return float(((np.sum(mag**p) + np.sum(gmag**p)) * f.cell_volume) ** (1.0 / p))


# particle kernel

@njit(cache=True)
def _interp(F, lev, shape, x, base, frac, out):
    """Multilinear interpolation of F[lev] (cells, C) at x given in cell units inside [0, shape)."""
    d = x.shape[0]
    C = F.shape[2]
    for c in range(C):
        out[c] = 0.0
    for i in range(d):
        b = int(x[i])
        frac[i] = x[i] - b
        base[i] = b - shape[i] if b >= shape[i] else b
    for corner in range(1 << d):
        wt = 1.0
        flat = 0
        for i in range(d):
            idx = base[i]
            if (corner >> i) & 1:
                wt *= frac[i]
                idx += 1
                if idx == shape[i]:
                    idx = 0
            else:
                wt *= 1.0 - frac[i]
            flat = flat * shape[i] + idx
        for c in range(C):
            out[c] += wt * F[lev, flat, c]


@njit(cache=True)
def _wrap(v, m):
    if v >= m:
        v -= m
    elif v < 0.0:
        v += m
    if 0.0 <= v < m:
        return v
    if not math.isfinite(v):
        return 0.0  # the value is poisoned through J or the velocity anyway
    v -= m * math.floor(v / m)
    return v if v < m else 0.0


@njit(cache=True)
def _finish(J, fv, mode, val):
    d = J.shape[0]
    C = fv.shape[0]
    if mode == 0:
        for i in range(C):
            acc = 0.0
            for a in range(d):
                acc += J[a, i] * fv[a]
            val[i] = acc
    elif mode == 1:
        for i in range(C):
            val[i] = fv[i]
    else:
        Ji = np.linalg.inv(J)
        det = np.linalg.det(J)
        for i in range(C):
            acc = 0.0
            for a in range(d):
                acc += Ji[i, a] * fv[a]
            val[i] = det * acc


@njit(parallel=True, cache=True)
def _transport(nodes, vel, phi, shape, h, noise, k_start, stride, dt, mode):
    """Per node: mean and mean square over paths of
    mode 0: J^T phi(X);  mode 1: phi(X);  mode 2: det(J) J^{-1} phi(X),
    where X, J are the Euler flow and Jacobian from step k_start to the end.
    Positions are in cell units relative to the box corner and kept in [0, shape)."""
    n, d = nodes.shape
    n_paths, M = noise.shape[0], noise.shape[1]
    C = phi.shape[2]
    mean = np.zeros((n, C))
    msq = np.zeros((n, C))
    for q in prange(n):
        base = np.empty(d, np.int64)
        frac = np.empty(d)
        buf = np.empty(vel.shape[2])
        fv = np.empty(C)
        x = np.empty(d)
        J = np.empty((d, d))
        JN = np.empty((d, d))
        val = np.empty(C)
        for p in range(n_paths):
            for i in range(d):
                x[i] = nodes[q, i]
                for j in range(d):
                    J[i, j] = 1.0 if i == j else 0.0
            for k in range(k_start, M):
                _interp(vel, k // stride, shape, x, base, frac, buf)
                if mode != 1:
                    for a in range(d):
                        for c in range(d):
                            acc = 0.0
                            for j in range(d):
                                acc += buf[d + a * d + j] * J[j, c]
                            JN[a, c] = J[a, c] + acc * dt
                    for a in range(d):
                        for c in range(d):
                            J[a, c] = JN[a, c]
                for i in range(d):
                    x[i] = _wrap(x[i] + (buf[i] * dt + noise[p, k, i]) / h[i], shape[i])
            _interp(phi, 0, shape, x, base, frac, fv)
            _finish(J, fv, mode, val)
            for i in range(C):
                mean[q, i] += val[i]
                msq[q, i] += val[i] * val[i]
        for i in range(C):
            mean[q, i] /= n_paths
            msq[q, i] /= n_paths
    return mean, msq


@njit(parallel=True, cache=True)
def _transport2(nodes, vel, phi, shape, h, noise, k_start, stride, dt, mode):
    """Two-dimensional specialization of _transport with the same conventions."""
    n = nodes.shape[0]
    n_paths, M = noise.shape[0], noise.shape[1]
    C = phi.shape[2]
    m0, m1 = shape[0], shape[1]
    ih0, ih1 = 1.0 / h[0], 1.0 / h[1]
    mean = np.zeros((n, C))
    msq = np.zeros((n, C))
    for q in prange(n):
        base = np.empty(2, np.int64)
        frac = np.empty(2)
        fv = np.empty(C)
        xv = np.empty(2)
        J = np.empty((2, 2))
        val = np.empty(C)
        for p in range(n_paths):
            x0, x1 = nodes[q, 0], nodes[q, 1]
            j00, j01, j10, j11 = 1.0, 0.0, 0.0, 1.0
            for k in range(k_start, M):
                lev = k // stride
                b0 = int(x0)
                b1 = int(x1)
                a = x0 - b0
                c = x1 - b1
                if b0 >= m0:
                    b0 -= m0
                if b1 >= m1:
                    b1 -= m1
                e0 = b0 + 1 if b0 + 1 < m0 else 0
                e1 = b1 + 1 if b1 + 1 < m1 else 0
                w00 = (1.0 - a) * (1.0 - c)
                w01 = (1.0 - a) * c
                w10 = a * (1.0 - c)
                w11 = a * c
                r00 = b0 * m1 + b1
                r01 = b0 * m1 + e1
                r10 = e0 * m1 + b1
                r11 = e0 * m1 + e1
                F = vel[lev]
                u0 = w00 * F[r00, 0] + w01 * F[r01, 0] + w10 * F[r10, 0] + w11 * F[r11, 0]
                u1 = w00 * F[r00, 1] + w01 * F[r01, 1] + w10 * F[r10, 1] + w11 * F[r11, 1]
                if mode != 1:
                    g00 = w00 * F[r00, 2] + w01 * F[r01, 2] + w10 * F[r10, 2] + w11 * F[r11, 2]
                    g01 = w00 * F[r00, 3] + w01 * F[r01, 3] + w10 * F[r10, 3] + w11 * F[r11, 3]
                    g10 = w00 * F[r00, 4] + w01 * F[r01, 4] + w10 * F[r10, 4] + w11 * F[r11, 4]
                    g11 = w00 * F[r00, 5] + w01 * F[r01, 5] + w10 * F[r10, 5] + w11 * F[r11, 5]
                    n00 = j00 + (g00 * j00 + g01 * j10) * dt
                    n01 = j01 + (g00 * j01 + g01 * j11) * dt
                    n10 = j10 + (g10 * j00 + g11 * j10) * dt
                    n11 = j11 + (g10 * j01 + g11 * j11) * dt
                    j00, j01, j10, j11 = n00, n01, n10, n11
                x0 = _wrap(x0 + (u0 * dt + noise[p, k, 0]) * ih0, m0)
                x1 = _wrap(x1 + (u1 * dt + noise[p, k, 1]) * ih1, m1)
            xv[0] = x0
            xv[1] = x1
            _interp(phi, 0, shape, xv, base, frac, fv)
            J[0, 0], J[0, 1], J[1, 0], J[1, 1] = j00, j01, j10, j11
            _finish(J, fv, mode, val)
            for i in range(C):
                mean[q, i] += val[i]
                msq[q, i] += val[i] * val[i]
        for i in range(C):
            mean[q, i] /= n_paths
            msq[q, i] /= n_paths
    return mean, msq


def _nodes_major(values: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(values, 0, -1).reshape(-1, values.shape[0]))


def _set_threads(workers: int):
    numba.set_num_threads(max(1, min(int(workers), numba.config.NUMBA_NUM_THREADS)))


@dataclass(eq=False)
class VelocityLevels:
    """Velocity iterate at times T = t_0 < ... < t_L = 0, values (L+1, d, *shape)."""
    times: np.ndarray
    values: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def zeros(cls, grid: GridField, times) -> "VelocityLevels":
        times = np.asarray(times, dtype=float)
        return cls(times, np.zeros((len(times), grid.dim) + grid.shape), grid.lo, grid.hi)

    @property
    def n_levels(self) -> int:
        return len(self.times)

    def at(self, j: int) -> GridField:
        return GridField(self.lo, self.hi, self.values[j], True)

    def packed(self) -> np.ndarray:
        """(L+1, cells, d + d*d): velocity and its spectral gradient per node."""
        out = []
        for j in range(self.n_levels):
            f = self.at(j)
            out.append(np.concatenate([_nodes_major(f.values),
                                       _nodes_major(f.gradient().reshape((-1,) + f.shape))], axis=1))
        return np.ascontiguousarray(np.stack(out))

    def distance(self, other: "VelocityLevels", p: float = 2.0) -> float:
        return max(self.at(j).with_values(self.values[j] - other.values[j]).norm(p)
                   for j in range(self.n_levels))


def _frozen_noise(levels: VelocityLevels, n_paths: int, seed: int, steps_per_level: int,
                  nu: float) -> np.ndarray:
    d = levels.values.shape[1]
    grid = TimeGrid(float(levels.times[0]), float(levels.times[-1]), steps_per_level * (levels.n_levels - 1))
    return np.ascontiguousarray(generate(seed, n_paths, d, grid).materialize() * np.sqrt(2.0 * nu))


def _run(levels: VelocityLevels, phi: GridField, j: int, noise: np.ndarray, stride: int,
         mode: int, workers: int, packed=None, generic: bool = False):
    g = levels.at(0)
    dt = (levels.times[-1] - levels.times[0]) / noise.shape[1]
    _set_threads(workers)
    packed = levels.packed() if packed is None else packed
    kernel = _transport2 if g.dim == 2 and not generic else _transport
    cells = np.stack([c.ravel() for c in np.meshgrid(*[np.arange(m, dtype=float) for m in g.shape],
                                                      indexing="ij")], axis=1)
    mean, msq = kernel(cells, packed, _nodes_major(phi.values)[None], np.array(g.shape, np.int64),
                       g.spacing, noise, j * stride, stride, dt, mode)
    shape = (phi.ncomp,) + g.shape
    se = np.sqrt(np.maximum(msq - mean**2, 0.0) / max(noise.shape[0] - 1, 1))
    return mean.T.reshape(shape), se.T.reshape(shape)


def pushforward_velocity(b: VelocityLevels, phi: GridField, level: int, noise: np.ndarray,
                         stride: int, workers: int = 1, return_se: bool = False, packed=None,
                         generic: bool = False):
    """P E[grad X_{t,0}^T phi(X_{t,0})] at t = b.times[level].

    ``noise`` holds the scaled increments sqrt(2 nu) dW, shape (N, M, d),
    with M = stride * (levels - 1). The velocity is taken at the level at or
    before the current step and interpolated multilinearly in space.
    """
    if noise.shape[1] != stride * (b.n_levels - 1):
        raise ValueError("noise steps do not match the velocity levels and stride")
    mean, se = _run(b, phi, level, noise, stride, 0, workers, packed, generic)
    out = leray_project(phi.with_values(mean))
    return (out, phi.with_values(se)) if return_se else out


def transport_operator(b: VelocityLevels, phi: GridField, noise: np.ndarray, stride: int,
                       workers: int = 1) -> VelocityLevels:
    packed = b.packed()
    vals = np.stack([pushforward_velocity(b, phi, j, noise, stride, workers, packed=packed).values
                     for j in range(b.n_levels)])
    return VelocityLevels(b.times, vals, b.lo, b.hi)


@dataclass(eq=False)
class NsState:
    velocity: VelocityLevels
    phi: GridField
    nu: float
    n_paths: int
    dt: float
    stride: int
    seed: int
    distances: list = field(default_factory=list)
    phi_w1p: float = np.nan
    history: list = field(default_factory=list, repr=False)

    @property
    def iterations(self) -> int:
        return len(self.distances)

    @property
    def horizon(self) -> float:
        return float(self.velocity.times[0])

    def contraction_ratios(self) -> np.ndarray:
        d = np.asarray(self.distances)
        return d[1:] / d[:-1]

    def manifest(self) -> dict:
        g = self.phi
        return {"nu": self.nu, "T": self.horizon, "grid": list(g.shape), "box": [list(map(float, g.lo)),
                list(map(float, g.hi))], "n_paths": self.n_paths, "dt": self.dt, "stride": self.stride,
                "seed": self.seed, "distances": [float(x) for x in self.distances],
                "phi_w1p": float(self.phi_w1p), "times": [float(t) for t in self.velocity.times]}

    def export(self, out_dir, fmt: str = "bin") -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = []
        for j in range(self.velocity.n_levels):
            path = out_dir / f"velocity_{j:03d}.{'csv' if fmt == 'csv' else 'sfg'}"
            self.velocity.at(j).save(path)
            files.append(path)
        man = out_dir / "nse_manifest.json"
        man.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True))
        return files + [man]


def fixed_point_solve(phi: GridField, nu: float, horizon: float, n_paths: int, dt: float,
                      stride: int = 5, tol: float = defaults.NSE_TOL, max_iter: int = defaults.NSE_MAX_ITER, seed: int = 0,
                      workers: int = 1, p: float = 2.0, keep_history: bool = False) -> NsState:
    """Iterate the transport operator from the heat-decayed data on [-|horizon|, 0].

    Stops when max over levels of ||u^{m+1} - u^m||_p < tol. Raises
    HorizonTooLongError when the distance fails to decrease three times
    in a row.
    """
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    steps = int(round(abs(horizon) / dt))
    if steps < 1 or steps % stride:
        raise ValueError(f"|T|/dt = {abs(horizon) / dt:g} must be a positive multiple of stride {stride}")
    T = -abs(horizon)
    times = T + stride * dt * np.arange(steps // stride + 1)
    times[-1] = 0.0
    u = VelocityLevels(times, np.stack([leray_project(heat_decay(phi, nu, t)).values for t in times]),
                       phi.lo, phi.hi)
    noise = _frozen_noise(u, n_paths, seed, stride, nu)
    state = NsState(u, phi, nu, n_paths, dt, stride, seed, phi_w1p=w1p_norm(phi, 4.0))
    stalls = 0
    for _ in range(max_iter):
        new = transport_operator(u, phi, noise, stride, workers)
        if not np.all(np.isfinite(new.values)):
            raise HorizonTooLongError(f"fixed-point iterate overflowed on [{T}, 0]; try |T|/2",
                                      distances=state.distances, horizon=T)
        dist = u.distance(new, p)
        if state.distances and dist >= state.distances[-1]:
            stalls += 1
        else:
            stalls = 0
        state.distances.append(dist)
        if keep_history:
            state.history.append(u)
        u = new
        state.velocity = u
        if stalls >= 3:
            raise HorizonTooLongError(f"fixed-point distances stopped decreasing on [{T}, 0]; try |T|/2",
                                      distances=state.distances, horizon=T)
        if dist < tol:
            break
    return state


def vorticity_representation(state: NsState, omega0: GridField | None = None, level: int = 0,
                             n_paths: int | None = None, seed: int | None = None,
                             workers: int = 1) -> GridField:
    """Vorticity at state.velocity.times[level] transported by the stochastic flow.

    2-D: E[omega0(X_{t,0}(x))]. 3-D: E[det(J) J^{-1} omega0(X_{t,0}(x))], which
    is costly and warns. ``omega0`` defaults to curl phi.
    """
    omega0 = curl(state.phi) if omega0 is None else omega0
    d = state.phi.dim
    if d == 3:
        warnings.warn("3-D vorticity representation inverts a Jacobian per path; expect a high cost",
                      RuntimeWarning, stacklevel=2)
    noise = _frozen_noise(state.velocity, n_paths or state.n_paths,
                          state.seed if seed is None else seed, state.stride, state.nu)
    mean, _ = _run(state.velocity, omega0, level, noise, state.stride, 1 if d == 2 else 2, workers)
    return omega0.with_values(mean)


# random vortex particles (free space, 2-D)

@dataclass(eq=False)
class RandomVortexRun:
    positions: np.ndarray
    circulation: np.ndarray
    delta: float
    dt: float

    def velocity(self, x, step: int = -1) -> np.ndarray:
        return _blob_velocity(np.atleast_2d(x), self.positions[step], self.circulation, self.delta)


def _blob_velocity(x, src, gam, delta):
    r = x[:, None, :] - src[None]
    r2 = np.sum(r * r, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(r2 > 0, -np.expm1(-r2 / delta**2) / (2 * np.pi * r2), 0.0) * gam
    return np.stack([-np.sum(fac * r[..., 1], axis=1), np.sum(fac * r[..., 0], axis=1)], axis=1)


def random_vortex(omega0: GridField, nu: float, horizon: float, dt: float, seed: int = 0,
                  delta: float | None = None, cutoff: float = 0.0) -> RandomVortexRun:
    """Interacting vortex-blob particles dX_i = sum_j G_j K_delta(X_i - X_j) dt + sqrt(2 nu) dW_i.

    Particles start at the grid nodes where |omega0| > cutoff, with
    circulation omega0 * cell volume.
    """
    if omega0.dim != 2 or omega0.ncomp != 1:
        raise ValueError("random_vortex handles scalar 2-D vorticity")
    delta = defaults.BLOB_SPACINGS * float(omega0.spacing.max()) if delta is None else float(delta)
    w = omega0.values[0].ravel()
    keep = np.abs(w) > cutoff
    X = omega0.points()[keep]
    gam = w[keep] * omega0.cell_volume
    grid = TimeGrid(0.0, float(horizon), max(1, int(round(horizon / dt))))
    dW = generate(seed, len(X), 2, grid).materialize() * np.sqrt(2.0 * nu)
    pos = np.empty((grid.steps + 1,) + X.shape)
    pos[0] = X
    for k in range(grid.steps):
        X = X + _blob_velocity(X, X, gam, delta) * grid.dt + dW[:, k]
        pos[k + 1] = X
    return RandomVortexRun(pos, gam, delta, grid.dt)
