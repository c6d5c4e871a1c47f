"""Time grids, seeded Brownian ensembles and stored path ensembles.

Brownian increments come from a counter-based generator: the increment of
path ``i`` at step ``k`` in component ``c`` depends only on ``(seed, i, k, c)``.
Any block of paths or steps can therefore be regenerated independently, in
any order and by any number of workers, with bit-identical results.

Binary ensemble layout (little endian)::

    magic  b"SFBE"            4 bytes
    version                    uint32 (= 1)
    seed                       uint64
    n_paths, n_steps, dim      3 x uint64
    path_offset                uint64
    t_start, t_end             2 x float64
    increments                 n_paths * n_steps * dim float64, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._philox import standard_normals

_MAGIC = b"SFBE"
_HEADER = struct.Struct("<4sIQQQQQdd")


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    steps: int

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError(f"need t_start < t_end, got {self.t_start} >= {self.t_end}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.steps

    @property
    def horizon(self) -> float:
        return self.t_end - self.t_start

    @property
    def nodes(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.steps + 1)

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.t_start, self.t_end, self.steps * factor)


@dataclass(frozen=True, eq=False)
class BrownianEnsemble:
    """Increments dW[i, k] ~ N(0, dt I) for ``n_paths`` paths on ``grid``.

    Increments are generated on demand unless the ensemble was loaded from
    disk or built by :meth:`coarsen`, in which case ``data`` holds them.
    """

    seed: int
    n_paths: int
    dim: int
    grid: TimeGrid
    path_offset: int = 0
    data: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.data is not None:
            self.data.setflags(write=False)

    @property
    def dt(self) -> float:
        return self.grid.dt

    @property
    def steps(self) -> int:
        return self.grid.steps

    def increments(self, k0: int = 0, k1: int | None = None,
                   p0: int = 0, p1: int | None = None) -> np.ndarray:
        """Increments for paths [p0, p1) and steps [k0, k1), shape (paths, steps, dim)."""
        k1 = self.steps if k1 is None else k1
        p1 = self.n_paths if p1 is None else p1
        if not (0 <= k0 <= k1 <= self.steps and 0 <= p0 <= p1 <= self.n_paths):
            raise IndexError(f"block steps [{k0},{k1}) paths [{p0},{p1}) out of range")
        if self.data is not None:
            return self.data[p0:p1, k0:k1]
        z = standard_normals(self.seed, self.path_offset + p0, p1 - p0, k0, k1 - k0, self.dim)
        z *= np.sqrt(self.dt)
        return z

    def materialize(self) -> np.ndarray:
        return self.increments()

    def brownian_motion(self, p0: int = 0, p1: int | None = None) -> np.ndarray:
        """W at the grid nodes, W[:, 0] = 0."""
        dW = self.increments(p0=p0, p1=p1)
        W = np.zeros((dW.shape[0], self.steps + 1, self.dim))
        np.cumsum(dW, axis=1, out=W[:, 1:])
        return W

    def subset(self, p0: int, p1: int) -> "BrownianEnsemble":
        """The same noise restricted to paths [p0, p1)."""
        if self.data is not None:
            return BrownianEnsemble(self.seed, p1 - p0, self.dim, self.grid,
                                    self.path_offset + p0, self.data[p0:p1])
        return BrownianEnsemble(self.seed, p1 - p0, self.dim, self.grid, self.path_offset + p0)

    def coarsen(self, factor: int) -> "BrownianEnsemble":
        """Sum consecutive increments: same Brownian path on a grid ``factor`` times coarser."""
        if self.steps % factor:
            raise ValueError(f"{self.steps} steps not divisible by {factor}")
        dW = self.materialize().reshape(self.n_paths, self.steps // factor, factor, self.dim)
        grid = TimeGrid(self.grid.t_start, self.grid.t_end, self.steps // factor)
        return BrownianEnsemble(self.seed, self.n_paths, self.dim, grid,
                                self.path_offset, dW.sum(axis=2))

    def save(self, path) -> None:
        dW = np.ascontiguousarray(self.materialize(), dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, 1, self.seed, self.n_paths, self.steps, self.dim,
                                  self.path_offset, self.grid.t_start, self.grid.t_end))
            fh.write(dW.tobytes())

    @classmethod
    def load(cls, path) -> "BrownianEnsemble":
        raw = Path(path).read_bytes()
        magic, version, seed, n, m, d, offset, t0, t1 = _HEADER.unpack_from(raw)
        if magic != _MAGIC or version != 1:
            raise ValueError(f"{path}: not a Brownian ensemble file")
        data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        if data.size != n * m * d:
            raise ValueError(f"{path}: expected {n * m * d} values, found {data.size}")
        return cls(seed, n, d, TimeGrid(t0, t1, m), offset, data.reshape(n, m, d).copy())


def generate(seed: int, n_paths: int, dim: int, grid: TimeGrid) -> BrownianEnsemble:
    return BrownianEnsemble(int(seed), int(n_paths), int(dim), grid)


@dataclass(eq=False)
class PathEnsemble:
    """States X[i, j] at grid nodes ``nodes[j]`` for each path ``i``.

    ``nodes`` are node indices into ``grid``; a full record has
    ``nodes == arange(steps + 1)``. Paths that blew up (non-finite or beyond
    the bounding radius) are frozen at their last good state and flagged.
    """

    X: np.ndarray
    grid: TimeGrid
    nodes: np.ndarray
    flagged: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[2]

    @property
    def final(self) -> np.ndarray:
        if self.nodes[-1] != self.grid.steps:
            raise ValueError("final node was not recorded")
        return self.X[:, -1]

    @property
    def initial(self) -> np.ndarray:
        return self.X[:, 0]

    @property
    def is_full(self) -> bool:
        return len(self.nodes) == self.grid.steps + 1

    def require_full(self) -> None:
        if not self.is_full:
            raise ValueError("operation needs every grid node recorded (record='all')")

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes[self.nodes]
