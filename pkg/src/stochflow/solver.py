"""Euler-Maruyama integration of dX = b(t, X) dt + sigma(t, X) dW and experiment harnesses."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import defaults
from .fields import DiffusionSpec, DriftSpec, check_divergence_free, lq_lp_norm
from .paths import BrownianEnsemble, PathEnsemble, TimeGrid

BLOW_UP_RADIUS = defaults.BLOW_UP_RADIUS
_STEP_BLOCK = 128


def path_chunks(n: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(int(workers), n))
    edges = np.linspace(0, n, workers + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def map_chunks(fn, n: int, workers: int = 1) -> list:
    """Apply ``fn(p0, p1)`` to contiguous path blocks, possibly on a thread pool."""
    chunks = path_chunks(n, workers)
    if len(chunks) == 1:
        return [fn(*chunks[0])]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        return list(pool.map(lambda c: fn(*c), chunks))


def record_nodes(steps: int, record) -> np.ndarray:
    if record == "all":
        return np.arange(steps + 1)
    if record == "final":
        return np.array([0, steps])
    stride = int(record)
    if stride < 1:
        raise ValueError("record stride must be >= 1")
    return np.union1d(np.arange(0, steps + 1, stride), [steps])


def diffuse(diffusion: DiffusionSpec, t: float, x: np.ndarray, dW: np.ndarray) -> np.ndarray:
    """sigma(t, x) dW for a batch of points."""
    if diffusion.matrix is not None:
        return dW @ diffusion.matrix.T
    return np.einsum("nam,nm->na", diffusion.eval(t, x), dW)


def _initial(x0, n, dim):
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        if x0.size != dim:
            raise ValueError(f"initial point has dimension {x0.size}, expected {dim}")
        return np.broadcast_to(x0, (n, dim)).copy()
    if x0.shape != (n, dim):
        raise ValueError(f"per-path initial points need shape {(n, dim)}, got {x0.shape}")
    return x0.copy()


def _check_compatible(b: DriftSpec, sigma: DiffusionSpec, noise: BrownianEnsemble):
    if not (b.dim == sigma.dim == noise.dim):
        raise ValueError(f"dimension mismatch: drift {b.dim}, diffusion {sigma.dim}, noise {noise.dim}")


def _integrate_block(x0, b, sigma, noise, p0, p1, nodes, radius):
    grid = noise.grid
    dt = grid.dt
    X = _initial(x0 if np.ndim(x0) == 1 else np.asarray(x0)[p0:p1], p1 - p0, b.dim)
    flagged = ~np.all(np.isfinite(X), axis=1)
    out = np.empty((p1 - p0, len(nodes), b.dim))
    out[:, 0] = X
    slot = {int(k): j for j, k in enumerate(nodes)}
    for k0 in range(0, grid.steps, _STEP_BLOCK):
        k1 = min(grid.steps, k0 + _STEP_BLOCK)
        dW = noise.increments(k0, k1, p0, p1)
        for k in range(k0, k1):
            t = grid.t_start + k * dt
            with np.errstate(all="ignore"):
                Xn = X + b.eval(t, X) * dt + diffuse(sigma, t, X, dW[:, k - k0])
                bad = ~np.all(np.isfinite(Xn), axis=1) | (np.sqrt(np.sum(Xn * Xn, axis=1)) > radius)
            flagged |= bad
            if flagged.any():
                Xn[flagged] = X[flagged]
            X = Xn
            j = slot.get(k + 1)
            if j is not None:
                out[:, j] = X
    return out, flagged


def euler_maruyama(x0, b: DriftSpec, sigma: DiffusionSpec, noise: BrownianEnsemble,
                   record="all", radius: float = BLOW_UP_RADIUS, workers: int = 1) -> PathEnsemble:
    """X[k+1] = X[k] + b(t_k, X[k]) dt + sigma(t_k, X[k]) dW[k] on every path of ``noise``.

    ``x0`` is one shared point (d,) or per-path points (N, d). ``record`` is
    "all", "final" or an integer stride. Paths that leave the ball of
    ``radius`` or become non-finite are frozen and flagged.
    """
    _check_compatible(b, sigma, noise)
    _initial(x0, noise.n_paths, b.dim)
    nodes = record_nodes(noise.steps, record)
    parts = map_chunks(lambda p0, p1: _integrate_block(x0, b, sigma, noise, p0, p1, nodes, radius),
                       noise.n_paths, workers)
    X = np.concatenate([p[0] for p in parts])
    flagged = np.concatenate([p[1] for p in parts])
    prov = {"drift": b.name, "diffusion": sigma.name, "seed": noise.seed,
            "path_offset": noise.path_offset, "grid": noise.grid}
    return PathEnsemble(X, noise.grid, nodes, flagged, prov)


@dataclass(frozen=True)
class StabilityRow:
    distance: float
    gap: float
    std_error: float


def sup_squared_gap(a: PathEnsemble, b: PathEnsemble) -> tuple[float, float, np.ndarray]:
    """Mean over unflagged paths of max_k |X^a_k - X^b_k|^2, its standard error, per-path values."""
    if a.X.shape != b.X.shape or not np.array_equal(a.nodes, b.nodes):
        raise ValueError("path ensembles are on different grids")
    ok = ~(a.flagged | b.flagged)
    per_path = np.max(np.sum((a.X - b.X) ** 2, axis=2), axis=1)[ok]
    se = float(per_path.std(ddof=1) / np.sqrt(per_path.size)) if per_path.size > 1 else 0.0
    return float(per_path.mean()), se, per_path


def stability_experiment(b: DriftSpec, perturbations, sigma: DiffusionSpec, noise: BrownianEnsemble,
                         x0, box, nodes: int = defaults.LQ_NODES, workers: int = 1) -> list[StabilityRow]:
    """Distance ||b - b'|| in L^q_p over ``box`` x [t_start, t_end] against E sup_k |X^b - X^b'|^2.

    Every system is driven by the same increments.
    """
    for bp in perturbations:
        if bp.dim != b.dim:
            raise ValueError("perturbed drift has a different dimension")
        if (bp.p, bp.q) != (b.p, b.q):
            raise ValueError("all drifts must share the integrability exponents (p, q)")
    base = euler_maruyama(x0, b, sigma, noise, workers=workers)
    time = (noise.grid.t_start, noise.grid.t_end)
    rows = []
    for bp in perturbations:
        other = euler_maruyama(x0, bp, sigma, noise, workers=workers)
        gap, se, _ = sup_squared_gap(base, other)
        dist = lq_lp_norm(b - bp, box, time, b.p, b.q, nodes=nodes, time_nodes=16)
        rows.append(StabilityRow(dist, gap, se))
    return rows


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def strong_self_convergence(x0, b: DriftSpec, sigma: DiffusionSpec, noise: BrownianEnsemble,
                            levels: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """E sup |X^dt - X^{dt/2}|^2 over the coarse nodes for ``levels`` successive step sizes.

    ``noise`` is the finest ensemble; coarser ones are obtained by summing
    increments, so every level sees the same Brownian path.
    """
    ensembles = [noise]
    for _ in range(levels):
        ensembles.append(ensembles[-1].coarsen(2))
    ensembles = ensembles[::-1]
    runs = [euler_maruyama(x0, b, sigma, e) for e in ensembles]
    dts, gaps = [], []
    for coarse, fine in zip(runs[:-1], runs[1:]):
        sub = PathEnsemble(fine.X[:, ::2], coarse.grid, coarse.nodes, fine.flagged)
        gaps.append(sup_squared_gap(coarse, sub)[0])
        dts.append(coarse.grid.dt)
    return np.array(dts), np.array(gaps)


@dataclass(frozen=True)
class VolumeCheck:
    lhs: float
    rhs: float
    gap: float
    mc_error: float
    quadrature_error: float

    @property
    def combined_error(self) -> float:
        return float(np.hypot(self.mc_error, self.quadrature_error))


def _midpoint_grid(box, nodes):
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    axes, cell = [], 1.0
    for lo, hi in box:
        h = (hi - lo) / nodes
        axes.append(lo + h * (np.arange(nodes) + 0.5))
        cell *= h
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    return pts, cell


def volume_preservation_check(b: DriftSpec, nu: float, f, box, noise: BrownianEnsemble,
                              nodes: int = 40, workers: int = 1) -> VolumeCheck:
    """Compare integral_box E f(X_{t,s}(x)) dx with integral_box f(x) dx.

    The initial points are the midpoints of a ``nodes``^d grid on ``box``;
    each owns ``noise.n_paths / nodes^d`` consecutive noise paths. The
    quadrature error is estimated from the change in the integral of f when
    the grid is coarsened by two.
    """
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    pts, cell = _midpoint_grid(box, nodes)
    per_node, rem = divmod(noise.n_paths, len(pts))
    if per_node < 2 or rem:
        raise ValueError(f"noise.n_paths must be a multiple (>= 2x) of the {len(pts)} grid nodes")
    check_divergence_free(b, pts[:: max(1, len(pts) // 64)], times=(noise.grid.t_start,))
    sigma = DiffusionSpec.scalar(np.sqrt(2.0 * nu), b.dim)
    x0 = np.repeat(pts, per_node, axis=0)
    run = euler_maruyama(x0, b, sigma, noise, record="final", workers=workers)
    vals = np.asarray(f(run.final), dtype=float).reshape(len(pts), per_node)
    lhs = float(vals.mean(axis=1).sum() * cell)
    mc = float(np.sqrt(np.sum(vals.var(axis=1, ddof=1) / per_node)) * cell)
    rhs = float(np.sum(f(pts)) * cell)
    coarse_pts, coarse_cell = _midpoint_grid(box, nodes // 2)
    quad = abs(rhs - float(np.sum(f(coarse_pts)) * coarse_cell))
    return VolumeCheck(lhs, rhs, lhs - rhs, mc, quad)


def time_grid_for(horizon: float, dt: float, t_start: float = 0.0) -> TimeGrid:
    steps = int(round(horizon / dt))
    return TimeGrid(t_start, t_start + horizon, max(1, steps))
