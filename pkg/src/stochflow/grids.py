"""Sampled fields on uniform grids: interpolation, spectral calculus, file I/O.

A :class:`GridField` stores ``values`` with shape ``(ncomp, m_1, ..., m_d)``.
Non-periodic grids have nodes ``linspace(lo, hi, m)`` and extend by zero
outside the box. Periodic grids cover ``[lo, hi)`` with nodes
``lo + j (hi - lo) / m``.

File layouts (one node per record, nodes in row-major order, components
contiguous):

binary, little endian::

    magic b"SFGF", version uint32, d uint32, ncomp uint32, periodic uint32,
    lo d*float64, hi d*float64, shape d*uint64, values float64...

CSV::

    # stochflow-grid d=<d> ncomp=<c> periodic=<0|1>
    # lo=<lo_1>,...,<lo_d>
    # hi=<hi_1>,...,<hi_d>
    # shape=<m_1>,...,<m_d>
    v_1,...,v_c          (one line per node)
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_MAGIC = b"SFGF"
_HEAD = struct.Struct("<4sIIII")


def multilinear(values: np.ndarray, lo, spacing, x: np.ndarray, periodic: bool) -> np.ndarray:
    """Interpolate ``values`` (C, *shape) at points ``x`` (n, d); returns (n, C)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    shape = np.array(values.shape[1:])
    d = len(shape)
    s = (x - lo) / spacing
    if periodic:
        i0 = np.floor(s).astype(np.int64)
        frac = s - i0
        i0 %= shape
        valid = None
    else:
        valid = np.all((s >= 0) & (s <= shape - 1), axis=1)
        i0 = np.clip(np.floor(s).astype(np.int64), 0, shape - 2)
        frac = s - i0
    out = np.zeros((x.shape[0], values.shape[0]))
    for corner in itertools.product((0, 1), repeat=d):
        c = np.array(corner)
        w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
        idx = i0 + c
        if periodic:
            idx %= shape
        else:
            idx = np.minimum(idx, shape - 1)
        out += w[:, None] * values[(slice(None),) + tuple(idx.T)].T
    if valid is not None:
        out[~valid] = 0.0
    return out


@dataclass(frozen=True, eq=False)
class GridField:
    lo: np.ndarray
    hi: np.ndarray
    values: np.ndarray
    periodic: bool = True

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        values = np.asarray(self.values, dtype=float)
        if values.ndim != lo.size + 1 or hi.size != lo.size:
            raise ValueError(f"values shape {values.shape} does not match a {lo.size}-d box")
        if np.any(hi <= lo):
            raise ValueError("zero-volume box")
        if min(values.shape[1:]) < 2:
            raise ValueError("need at least two nodes per axis")
        values.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "values", values)

    @classmethod
    def periodic_box(cls, length, shape, values) -> "GridField":
        shape = tuple(shape)
        length = np.broadcast_to(np.asarray(length, dtype=float), (len(shape),))
        return cls(np.zeros(len(shape)), length.copy(), values, periodic=True)

    @classmethod
    def sample(cls, fn, lo, hi, shape, periodic=True) -> "GridField":
        """Evaluate ``fn(x)`` (n, d) -> (n, ncomp) or (n,) at the grid nodes."""
        tmp = cls(lo, hi, np.zeros((1,) + tuple(shape)), periodic)
        pts = tmp.points()
        vals = np.asarray(fn(pts), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return cls(tmp.lo, tmp.hi, vals.T.reshape((vals.shape[1],) + tuple(shape)), periodic)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def ncomp(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple:
        return self.values.shape[1:]

    @property
    def lengths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def spacing(self) -> np.ndarray:
        m = np.array(self.shape)
        return self.lengths / (m if self.periodic else m - 1)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [self.lo[i] + self.spacing[i] * np.arange(m) for i, m in enumerate(self.shape)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self) -> np.ndarray:
        return np.stack([g.ravel() for g in self.mesh()], axis=1)

    def with_values(self, values) -> "GridField":
        return GridField(self.lo, self.hi, values, self.periodic)

    def __call__(self, x) -> np.ndarray:
        return multilinear(self.values, self.lo, self.spacing, x, self.periodic)

    # spectral calculus (periodic grids only)

    def wavenumbers(self) -> list[np.ndarray]:
        if not self.periodic:
            raise ValueError("spectral operations need a periodic grid")
        ks = [2 * np.pi * np.fft.fftfreq(m, d=L / m) for m, L in zip(self.shape, self.lengths)]
        return np.meshgrid(*ks, indexing="ij")

    def derivative_symbols(self) -> list[np.ndarray]:
        """i k_j with the Nyquist mode of each even axis zeroed."""
        ks = self.wavenumbers()
        out = []
        for j, k in enumerate(ks):
            k = k.copy()
            m = self.shape[j]
            if m % 2 == 0:
                sl = [slice(None)] * self.dim
                sl[j] = m // 2
                k[tuple(sl)] = 0.0
            out.append(1j * k)
        return out

    def fft(self) -> np.ndarray:
        axes = tuple(range(1, self.dim + 1))
        return np.fft.fftn(self.values, axes=axes)

    def from_fft(self, vhat: np.ndarray) -> "GridField":
        axes = tuple(range(1, self.dim + 1))
        return self.with_values(np.real(np.fft.ifftn(vhat, axes=axes)))

    def gradient(self) -> np.ndarray:
        """Spectral gradient, shape (ncomp, d, *shape) with [a, j] = d_j v_a."""
        vhat = self.fft()
        axes = tuple(range(2, self.dim + 2))
        g = np.stack([vhat * ik for ik in self.derivative_symbols()], axis=1)
        return np.real(np.fft.ifftn(g, axes=axes))

    def norm(self, p: float = 2.0) -> float:
        mag = np.sqrt(np.sum(self.values**2, axis=0))
        if np.isinf(p):
            return float(mag.max())
        return float((np.sum(mag**p) * self.cell_volume) ** (1.0 / p))

    # file I/O

    def save(self, path) -> None:
        path = Path(path)
        nodes_major = np.moveaxis(self.values, 0, -1).reshape(-1, self.ncomp)
        if path.suffix.lower() == ".csv":
            head = [
                f"stochflow-grid d={self.dim} ncomp={self.ncomp} periodic={int(self.periodic)}",
                "lo=" + ",".join(repr(float(v)) for v in self.lo),
                "hi=" + ",".join(repr(float(v)) for v in self.hi),
                "shape=" + ",".join(str(m) for m in self.shape),
            ]
            np.savetxt(path, nodes_major, delimiter=",", fmt="%.17g",
                       header="\n".join(head), comments="# ")
            return
        with open(path, "wb") as fh:
            fh.write(_HEAD.pack(_MAGIC, 1, self.dim, self.ncomp, int(self.periodic)))
            fh.write(np.asarray(self.lo, "<f8").tobytes())
            fh.write(np.asarray(self.hi, "<f8").tobytes())
            fh.write(np.asarray(self.shape, "<u8").tobytes())
            fh.write(np.ascontiguousarray(nodes_major, "<f8").tobytes())

    @classmethod
    def load(cls, path) -> "GridField":
        path = Path(path)
        if path.suffix.lower() == ".csv":
            meta = {}
            with open(path) as fh:
                for line in fh:
                    if not line.startswith("#"):
                        break
                    for tok in line[1:].split():
                        if "=" in tok:
                            key, val = tok.split("=", 1)
                            meta[key] = val
            d, ncomp = int(meta["d"]), int(meta["ncomp"])
            lo = np.array([float(v) for v in meta["lo"].split(",")])
            hi = np.array([float(v) for v in meta["hi"].split(",")])
            shape = tuple(int(v) for v in meta["shape"].split(","))
            data = np.loadtxt(path, delimiter=",", ndmin=2)
            periodic = bool(int(meta["periodic"]))
        else:
            raw = path.read_bytes()
            if len(raw) < _HEAD.size:
                raise ValueError(f"{path}: not a grid field file")
            magic, version, d, ncomp, periodic = _HEAD.unpack_from(raw)
            if magic != _MAGIC or version != 1:
                raise ValueError(f"{path}: not a grid field file")
            off = _HEAD.size
            lo = np.frombuffer(raw, "<f8", d, off)
            hi = np.frombuffer(raw, "<f8", d, off + 8 * d)
            shape = tuple(int(v) for v in np.frombuffer(raw, "<u8", d, off + 16 * d))
            data = np.frombuffer(raw, "<f8", offset=off + 24 * d)
        data = np.asarray(data, dtype=float)
        if data.size != int(np.prod(shape)) * ncomp or len(shape) != d:
            raise ValueError(f"{path}: header does not match payload size")
        values = np.moveaxis(data.reshape(tuple(shape) + (ncomp,)), -1, 0)
        return cls(lo.copy(), hi.copy(), values.copy(), bool(periodic))
