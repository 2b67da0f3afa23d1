"""Evaluation meshes and mesh-backed vector functions."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numba
import numpy as np

from .errors import ConfigError
from .regions import Region


@dataclass(frozen=True, eq=False)
class Mesh:
    """Structured tensor grid (``axes``) or an explicit point list.

    Structured points are flattened in C order (last axis fastest).
    """

    points: np.ndarray
    axes: tuple[np.ndarray, ...] | None = None

    @classmethod
    def grid(cls, *axes: Sequence[float]) -> "Mesh":
        axes_t = tuple(np.asarray(a, dtype=float) for a in axes)
        if not 1 <= len(axes_t) <= 3:
            raise ConfigError("structured meshes support 1 to 3 dimensions")
        for a in axes_t:
            if a.ndim != 1 or len(a) < 2 or np.any(np.diff(a) <= 0):
                raise ConfigError("grid axes must be strictly increasing with >= 2 nodes")
            a.setflags(write=False)
        pts = np.stack([g.ravel() for g in np.meshgrid(*axes_t, indexing="ij")], axis=1)
        pts.setflags(write=False)
        return cls(pts, axes_t)

    @classmethod
    def interval(cls, lo: float, hi: float, n: int) -> "Mesh":
        return cls.grid(np.linspace(lo, hi, n))

    @classmethod
    def from_points(cls, points) -> "Mesh":
        pts = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        if pts.ndim != 2 or len(pts) == 0:
            raise ConfigError("point list must be a non-empty (M, d) array")
        pts.setflags(write=False)
        return cls(pts, None)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def structured(self) -> bool:
        return self.axes is not None

    def __len__(self) -> int:
        return len(self.points)

    def cell_volumes(self) -> np.ndarray:
        """Lebesgue weight of each node (trapezoid rule; equal weights for point lists)."""
        if self.axes is None:
            lo, hi = self.points.min(axis=0), self.points.max(axis=0)
            vol = float(np.prod(np.where(hi > lo, hi - lo, 1.0)))
            return np.full(len(self), vol / len(self))
        w = np.ones(1)
        for a in self.axes:
            h = np.diff(a)
            wa = np.zeros(len(a))
            wa[:-1] += 0.5 * h
            wa[1:] += 0.5 * h
            w = np.multiply.outer(w, wa)
        return w.ravel()

    def coarsened(self) -> "Mesh":
        """Every other node along each axis (used for interpolation-error budgets)."""
        if self.axes is None:
            return Mesh.from_points(self.points[::2])
        return Mesh.grid(*[a[::2] if len(a) >= 3 else a for a in self.axes])


class GridFunction:
    """A function ``E -> R^N`` given by its values on a mesh.

    Structured meshes interpolate multilinearly (constant extrapolation past the
    hull), point lists use nearest-neighbour lookup.  Outside ``domain`` the
    value is 0 (functions vanish at the cemetery state).
    """

    def __init__(self, mesh: Mesh, values, domain: Region | None = None):
        vals = np.asarray(values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != len(mesh):
            raise ConfigError(f"{vals.shape[0]} values for a mesh of {len(mesh)} points")
        if domain is not None:
            vals = np.where(domain.contains(mesh.points)[:, None], vals, 0.0)
        self.mesh = mesh
        self.values = vals.copy()
        self.values.setflags(write=False)
        self.domain = domain
        self._tree = None
        self._uniform = None

    @classmethod
    def from_callable(cls, mesh: Mesh, fn: Callable[[np.ndarray], np.ndarray],
                      domain: Region | None = None) -> "GridFunction":
        return cls(mesh, np.asarray(fn(mesh.points), dtype=float), domain)

    @classmethod
    def zeros(cls, mesh: Mesh, n_comp: int = 1, domain: Region | None = None) -> "GridFunction":
        return cls(mesh, np.zeros((len(mesh), n_comp)), domain)

    @property
    def n_comp(self) -> int:
        return self.values.shape[1]

    @property
    def points(self) -> np.ndarray:
        return self.mesh.points

    @property
    def interpolation(self) -> str:
        return "multilinear" if self.mesh.structured else "nearest_neighbor"

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.mesh, values, self.domain)

    def component(self, i: int) -> "GridFunction":
        return GridFunction(self.mesh, self.values[:, i], self.domain)

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1))) if len(self.values) else 0.0

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.mesh.dim:
            raise ValueError(f"evaluation points have dimension {x.shape[1]}, mesh {self.mesh.dim}")
        out = self._multilinear(x) if self.mesh.structured else self._nearest(x)
        if self.domain is not None:
            out = out * self.domain.contains(x)[:, None]
        return out

    def _multilinear(self, x):
        axes = self.mesh.axes
        if len(axes) == 1:
            out = np.empty((len(x), self.n_comp))
            if self._uniform is None:
                a = axes[0]
                self._uniform = bool(np.allclose(np.diff(a), (a[-1] - a[0]) / (len(a) - 1),
                                                 rtol=1e-12, atol=0))
            _interp_1d(axes[0], self.values, np.ascontiguousarray(x[:, 0]), out, self._uniform)
            return out
        shape = tuple(len(a) for a in axes)
        lo_idx, frac = [], []
        for j, a in enumerate(axes):
            xj = np.clip(x[:, j], a[0], a[-1])
            i = np.clip(np.searchsorted(a, xj, side="right") - 1, 0, len(a) - 2)
            lo_idx.append(i)
            frac.append((xj - a[i]) / (a[i + 1] - a[i]))
        out = np.zeros((len(x), self.n_comp))
        strides = np.cumprod((1,) + shape[::-1])[:-1][::-1]
        for corner in itertools.product((0, 1), repeat=len(axes)):
            flat = np.zeros(len(x), dtype=np.int64)
            w = np.ones(len(x))
            for j, c in enumerate(corner):
                flat += (lo_idx[j] + c) * strides[j]
                w *= frac[j] if c else 1.0 - frac[j]
            out += w[:, None] * self.values[flat]
        return out

    def _nearest(self, x):
        if self._tree is None:
            from scipy.spatial import cKDTree
            self._tree = cKDTree(self.mesh.points)
        _, idx = self._tree.query(x)
        return self.values[idx]

    def to_csv(self, path, header_prefix: str = "u") -> None:
        d = self.mesh.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x_{j + 1}" for j in range(d)]
                       + [f"{header_prefix}_{i + 1}" for i in range(self.n_comp)])
            for p, v in zip(self.mesh.points, self.values):
                w.writerow([repr(float(a)) for a in p] + [repr(float(b)) for b in v])


@numba.njit(cache=True, nogil=True)
def _interp_1d(axis, values, x, out, uniform):
    m = len(axis)
    lo, hi = axis[0], axis[m - 1]
    inv_h = (m - 1) / (hi - lo)
    for r in range(len(x)):
        xr = min(max(x[r], lo), hi)
        if uniform:
            a = min(int((xr - lo) * inv_h), m - 2)
            # guard against rounding at node values
            if axis[a] > xr and a > 0:
                a -= 1
            elif axis[a + 1] <= xr and a < m - 2:
                a += 1
            b = a + 1
        else:
            a, b = 0, m - 1
            while b - a > 1:
                c = (a + b) >> 1
                if axis[c] <= xr:
                    a = c
                else:
                    b = c
        f = (xr - axis[a]) / (axis[b] - axis[a])
        for k in range(values.shape[1]):
            out[r, k] = values[a, k] * (1.0 - f) + values[b, k] * f


def as_field(f) -> Callable[[np.ndarray], np.ndarray]:
    """Normalise a GridFunction, callable or constant into ``x -> (n, C)``."""
    if isinstance(f, GridFunction):
        return f
    if callable(f):
        def field(x, _f=f):
            v = np.asarray(_f(x), dtype=float)
            if v.ndim == 0:
                v = np.full(len(x), float(v))
            return v[:, None] if v.ndim == 1 else v
        return field
    c = np.atleast_1d(np.asarray(f, dtype=float))
    return lambda x: np.broadcast_to(c, (len(x), len(c)))
