"""Zvonkin corrector for constant diffusions.

For sigma constant in x the backward problem

    d_t u + 1/2 tr(sigma sigma^T grad^2 u) + b . grad u + b = 0,  u(s0) = 0

is solved component-wise by Picard iteration on its mild form

    u(t) = int_t^{s0} T_{t,s}[b . grad u + b](s) ds,

where T_{t,s} is convolution with the Gaussian of covariance
A_{t,s} = int_t^s sigma sigma^T dr, applied spectrally on a periodic box.
The box stands in for R^d and must be large enough for b to decay.
Then Phi(t, x) = x + u(t, x) removes the drift: Y = Phi(X) is a martingale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import defaults
from .errors import IntervalTooLongError
from .fields import DiffusionSpec, DriftSpec
from .grids import GridField, multilinear
from .paths import BrownianEnsemble, PathEnsemble

PICARD_TOL = defaults.PICARD_TOL
PICARD_MAX_ITER = defaults.PICARD_MAX_ITER
LIPSCHITZ_BOUND = 0.5


def covariance(sigma: DiffusionSpec, t: float, s: float, nodes: int = 16) -> np.ndarray:
    """A_{t,s} = int_t^s sigma_r sigma_r^T dr (midpoint rule; exact for time-constant sigma)."""
    if not sigma.constant_in_x:
        raise ValueError("the Gaussian heat kernel needs a diffusion constant in x")
    if sigma.matrix is not None:
        return (s - t) * sigma.matrix @ sigma.matrix.T
    h = (s - t) / nodes
    origin = np.zeros((1, sigma.dim))
    A = np.zeros((sigma.dim, sigma.dim))
    for r in t + h * (np.arange(nodes) + 0.5):
        m = sigma.eval(r, origin)[0]
        A += m @ m.T * h
    return A


def _heat_symbol(grid: GridField, A: np.ndarray) -> np.ndarray:
    ks = grid.wavenumbers()
    quad = sum(A[i, j] * ks[i] * ks[j] for i in range(grid.dim) for j in range(grid.dim))
    return np.exp(-0.5 * quad)


def _spatial_axes(grid: GridField, lead: int):
    return tuple(range(lead, lead + grid.dim))


def heat_propagate(f: GridField, t: float, s: float, sigma: DiffusionSpec) -> GridField:
    """T_{t,s} f: Gaussian smoothing with covariance A_{t,s}, computed spectrally."""
    if s <= t:
        raise ValueError(f"need s > t, got t={t}, s={s}")
    if not f.periodic:
        raise ValueError("heat_propagate works on periodic grids")
    sym = _heat_symbol(f, covariance(sigma, t, s))
    return f.from_fft(f.fft() * sym)


@dataclass(eq=False)
class ZvonkinSolution:
    times: np.ndarray
    u: np.ndarray
    grid: GridField
    drift: DriftSpec
    sigma: DiffusionSpec
    iterations: int
    gaps: list = field(default_factory=list)
    residual: float = np.nan

    @property
    def interval(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.grid.dim

    def _bracket(self, t: float):
        t0, s0 = self.interval
        if not t0 - 1e-12 <= t <= s0 + 1e-12:
            raise ValueError(f"time {t} outside the corrector interval [{t0}, {s0}]")
        dt = self.times[1] - self.times[0]
        pos = min(max((t - t0) / dt, 0.0), len(self.times) - 1.0)
        j = min(int(np.floor(pos)), len(self.times) - 2)
        return j, pos - j

    def corrector(self, t: float) -> GridField:
        j, w = self._bracket(t)
        return self.grid.with_values((1 - w) * self.u[j] + w * self.u[j + 1])

    def phi(self, t: float, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x + self.corrector(t)(x)

    def _grad_u(self) -> np.ndarray:
        if not hasattr(self, "_gu"):
            self._gu = np.stack([self.grid.with_values(uj).gradient() for uj in self.u])
        return self._gu

    def grad_phi(self, t: float, x) -> np.ndarray:
        """(n, d, d) Jacobian of Phi(t, .) interpolated from spectral derivatives."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        j, w = self._bracket(t)
        g = self._grad_u()
        d = self.dim
        vals = ((1 - w) * g[j] + w * g[j + 1]).reshape((d * d,) + self.grid.shape)
        return np.eye(d) + multilinear(vals, self.grid.lo, self.grid.spacing, x, True).reshape(-1, d, d)

    def lipschitz_u(self) -> float:
        """sup_t max_x ||grad u(t, x)||_op on the grid."""
        g = np.moveaxis(self._grad_u(), (1, 2), (-2, -1))
        return float(np.linalg.norm(g, ord=2, axis=(-2, -1)).max())

    def lipschitz_grad_phi(self) -> float:
        """sup over the grid of the Hilbert-Schmidt norm of the Hessian of u."""
        worst = 0.0
        for gj in self._grad_u():
            hess = np.stack([self.grid.with_values(gj[:, i]).gradient() for i in range(self.dim)], axis=1)
            worst = max(worst, float(np.sqrt(np.sum(hess**2, axis=(0, 1, 2))).max()))
        return worst


def _sample_drift(b: DriftSpec, grid: GridField, times) -> np.ndarray:
    pts = grid.points()
    return np.stack([b.eval(t, pts).T.reshape((b.dim,) + grid.shape) for t in times])


def solve_corrector(b: DriftSpec, sigma: DiffusionSpec, t0: float, s0: float, grid: GridField,
                    n_times: int = 100, tol: float = PICARD_TOL,
                    max_iter: int = PICARD_MAX_ITER) -> ZvonkinSolution:
    """Picard iteration for the corrector u on ``n_times`` steps of [t0, s0].

    ``grid`` supplies the periodic box and resolution (its values are
    ignored). Raises IntervalTooLongError if the successive-iterate gap
    grows three times in a row.
    """
    if not sigma.constant_in_x:
        raise ValueError("solve_corrector handles diffusions constant in x only")
    if b.dim != grid.dim or sigma.dim != grid.dim:
        raise ValueError("drift, diffusion and grid dimensions differ")
    if s0 <= t0:
        raise ValueError("need t0 < s0")
    times = t0 + (s0 - t0) * np.arange(n_times + 1) / n_times
    dt = times[1] - times[0]
    B = _sample_drift(b, grid, times)
    if not np.all(np.isfinite(B)):
        raise ValueError("drift is not bounded on the grid; mollify it first")
    syms = [_heat_symbol(grid, covariance(sigma, times[j], times[j + 1])) for j in range(n_times)]
    ax = _spatial_axes(grid, 1)
    iks = grid.derivative_symbols()
    d = grid.dim
    u = np.zeros((n_times + 1, d) + grid.shape)
    gaps, growth = [], 0
    for it in range(1, max_iter + 1):
        uh = np.fft.fftn(u, axes=_spatial_axes(grid, 2))
        src = B.copy()
        for i in range(d):
            du_i = np.real(np.fft.ifftn(uh * iks[i], axes=_spatial_axes(grid, 2)))
            src += B[:, i:i + 1] * du_i
        new = np.zeros_like(u)
        for j in range(n_times - 1, -1, -1):
            carried = np.fft.fftn(new[j + 1] + 0.5 * dt * src[j + 1], axes=ax) * syms[j]
            new[j] = np.real(np.fft.ifftn(carried, axes=ax)) + 0.5 * dt * src[j]
        gap = float(np.max(np.abs(new - u)))
        growth = growth + 1 if gaps and gap > gaps[-1] else 0
        gaps.append(gap)
        u = new
        if growth >= 3 or not np.isfinite(gap):
            raise IntervalTooLongError(
                f"Picard iteration diverging on [{t0}, {s0}]; shorten the interval",
                interval=(t0, s0), gaps=gaps)
        if gap < tol:
            break
    sol = ZvonkinSolution(times, u, grid.with_values(np.zeros((d,) + grid.shape)), b, sigma, it, gaps)
    lip = sol.lipschitz_u()
    if lip > LIPSCHITZ_BOUND:
        raise IntervalTooLongError(
            f"corrector gradient reaches {lip:.3g} > {LIPSCHITZ_BOUND} on [{t0}, {s0}]; shorten the interval",
            interval=(t0, s0), lipschitz=lip)
    sol.residual = pde_residual(sol)
    return sol


def solve_corrector_adaptive(b: DriftSpec, sigma: DiffusionSpec, t0: float, s0: float,
                             grid: GridField, n_times: int = 100,
                             max_halvings: int = 8) -> ZvonkinSolution:
    """Halve [t0, s0] from the right until Picard contracts and sup |grad u| <= 1/2."""
    s = s0
    for _ in range(max_halvings + 1):
        try:
            return solve_corrector(b, sigma, t0, s, grid, n_times)
        except IntervalTooLongError:
            pass
        s = t0 + 0.5 * (s - t0)
    raise IntervalTooLongError("no workable interval found", interval=(t0, s0))


def _fd_first(u, axis, h):
    return (np.roll(u, -1, axis) - np.roll(u, 1, axis)) / (2 * h)


def pde_residual(sol: ZvonkinSolution) -> float:
    """sup |d_t u + 1/2 tr(a grad^2 u) + b . grad u + b| at interior time nodes (finite differences)."""
    u, times, grid = sol.u, sol.times, sol.grid
    dt = times[1] - times[0]
    h = grid.spacing
    d = grid.dim
    B = _sample_drift(sol.drift, grid, times)
    worst = 0.0
    for j in range(1, len(times) - 1):
        a = covariance(sol.sigma, times[j], times[j] + 1.0, nodes=1)
        uj = u[j]
        res = (u[j + 1] - u[j - 1]) / (2 * dt) + B[j]
        for i in range(d):
            ai = 1 + i
            res += B[j, i:i + 1] * _fd_first(uj, ai, h[i])
            res += 0.5 * a[i, i] * (np.roll(uj, -1, ai) - 2 * uj + np.roll(uj, 1, ai)) / h[i] ** 2
            for k in range(i + 1, d):
                if a[i, k] != 0.0:
                    res += a[i, k] * _fd_first(_fd_first(uj, ai, h[i]), 1 + k, h[k])
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


def sample_pairs(sol: ZvonkinSolution, n: int, seed: int = 0, scales=(1e-3, 1e-2, 0.1, 1.0),
                 margin: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    """Random point pairs inside the box (shrunk by ``margin`` of its length) at several separations."""
    rng = np.random.Generator(np.random.Philox(seed))
    lo = sol.grid.lo + margin * sol.grid.lengths
    hi = sol.grid.hi - margin * sol.grid.lengths
    x = rng.uniform(lo, hi, size=(n, sol.dim))
    r = np.asarray(scales)[rng.integers(len(scales), size=n)]
    step = rng.normal(size=(n, sol.dim))
    step *= (r / np.linalg.norm(step, axis=1))[:, None]
    return x, x + step


def bilipschitz_check(sol: ZvonkinSolution, pairs, times=None) -> tuple[float, float]:
    """Extremes of |Phi_t(x) - Phi_t(y)| / |x - y| over the pairs and times."""
    x, y = (np.atleast_2d(np.asarray(p, dtype=float)) for p in pairs)
    times = sol.times[:: max(1, len(sol.times) // 10)] if times is None else np.atleast_1d(times)
    dist = np.linalg.norm(x - y, axis=1)
    lo, hi = np.inf, -np.inf
    for t in times:
        ratio = np.linalg.norm(sol.phi(t, x) - sol.phi(t, y), axis=1) / dist
        lo, hi = min(lo, ratio.min()), max(hi, ratio.max())
    return float(lo), float(hi)


@dataclass(frozen=True)
class DriftRemovalReport:
    bin_centers: np.ndarray
    drift_x: np.ndarray
    drift_y: np.ndarray
    se_x: np.ndarray
    se_y: np.ndarray
    counts: np.ndarray
    excluded: int

    @property
    def sup_x(self) -> float:
        return float(np.max(np.linalg.norm(self.drift_x, axis=-1)))

    @property
    def sup_y(self) -> float:
        return float(np.max(np.linalg.norm(self.drift_y, axis=-1)))

    @property
    def sup_y_se(self) -> float:
        """Standard error of the bin attaining sup_y."""
        i = int(np.argmax(np.linalg.norm(self.drift_y, axis=-1)))
        return float(np.linalg.norm(self.se_y[i]))

    @property
    def reduction(self) -> float:
        return self.sup_y / self.sup_x


def drift_removal_check(sol: ZvonkinSolution, paths: PathEnsemble, noise: BrownianEnsemble,
                        region=None, bins: int = 16, min_count: int = 200,
                        margin: float = 0.1) -> DriftRemovalReport:
    """Binned empirical drifts of X and of Y = Phi(X).

    The drift in a state-space bin is the mean of
    (dZ - grad Phi sigma dW) / dt over steps starting there, with
    Z = X (grad Phi = I) or Z = Y. Subtracting the Ito increment, which has
    conditional mean zero, leaves the conditional drift with far less noise.
    Paths leaving the box (shrunk by ``margin`` of its length) are excluded.
    """
    paths.require_full()
    grid = paths.grid
    t0, s0 = sol.interval
    if grid.t_start < t0 - 1e-12 or grid.t_end > s0 + 1e-12:
        raise ValueError("paths extend beyond the corrector interval")
    if paths.grid != noise.grid or paths.n_paths != noise.n_paths:
        raise ValueError("paths and noise are on different grids")
    lo = sol.grid.lo + margin * sol.grid.lengths
    hi = sol.grid.hi - margin * sol.grid.lengths
    inside = np.all((paths.X >= lo) & (paths.X <= hi), axis=(1, 2)) & ~paths.flagged
    X = paths.X[inside]
    dW = noise.materialize()[inside]
    d = sol.dim
    region = np.asarray(region if region is not None else np.stack([lo, hi], 1), dtype=float).reshape(d, 2)
    edges = [np.linspace(a, b, bins + 1) for a, b in region]
    n_bins = bins**d
    sums = {key: np.zeros((n_bins, d)) for key in ("x", "y")}
    sq = {key: np.zeros((n_bins, d)) for key in ("x", "y")}
    counts = np.zeros(n_bins, dtype=np.int64)
    dt = grid.dt
    Y_prev = None
    for k in range(grid.steps):
        t = grid.t_start + k * dt
        Xk, Xn = X[:, k], X[:, k + 1]
        sig_dw = np.einsum("nam,nm->na", sol.sigma.eval(t, Xk), dW[:, k])
        Yk = sol.phi(t, Xk) if Y_prev is None else Y_prev
        Yn = sol.phi(t + dt, Xn)
        Y_prev = Yn
        rx = (Xn - Xk - sig_dw) / dt
        ry = (Yn - Yk - np.einsum("nab,nb->na", sol.grad_phi(t, Xk), sig_dw)) / dt
        idx = np.zeros(len(Xk), dtype=np.int64)
        ok = np.ones(len(Xk), dtype=bool)
        for i in range(d):
            bi = np.searchsorted(edges[i], Xk[:, i], side="right") - 1
            ok &= (bi >= 0) & (bi < bins)
            idx = idx * bins + np.clip(bi, 0, bins - 1)
        idx = idx[ok]
        counts += np.bincount(idx, minlength=n_bins)
        for key, r in (("x", rx[ok]), ("y", ry[ok])):
            for c in range(d):
                sums[key][:, c] += np.bincount(idx, r[:, c], minlength=n_bins)
                sq[key][:, c] += np.bincount(idx, r[:, c] ** 2, minlength=n_bins)
    keep = counts >= min_count
    if not keep.any():
        raise ValueError(f"no state-space bin has {min_count} samples; enlarge the ensemble or the region")
    cnt = counts[keep][:, None].astype(float)
    out = {}
    for key in ("x", "y"):
        mean = sums[key][keep] / cnt
        var = np.maximum(sq[key][keep] / cnt - mean**2, 0.0) * cnt / (cnt - 1)
        out[key] = (mean, np.sqrt(var / cnt))
    centers = [0.5 * (e[1:] + e[:-1]) for e in edges]
    grid_c = np.stack([g.ravel() for g in np.meshgrid(*centers, indexing="ij")], axis=1)[keep]
    return DriftRemovalReport(grid_c, out["x"][0], out["y"][0], out["x"][1], out["y"][1],
                              counts[keep], int((~inside).sum()))
