"""Killing and stopping regions: open boxes, open balls and set algebra on them.

Membership tests take an ``(n, d)`` array of states and return a boolean
``(n,)`` array.  ``Box`` and ``Ball`` are open sets; their complements are
closed.  Interior and closure tests are needed by the zero-time rules of the
stopping times (a start point strictly outside ``B`` leaves ``B`` at time 0).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError


class Region:
    dim: int | None = None

    def contains(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def interior_contains(self, x: np.ndarray) -> np.ndarray:
        return self.contains(x)

    def closure_contains(self, x: np.ndarray) -> np.ndarray:
        return self.contains(x)

    def complement(self) -> "Region":
        return Complement(self)

    def check_dim(self, d: int) -> None:
        if self.dim is not None and self.dim != d:
            raise ConfigError(f"{self!r} lives in dimension {self.dim}, process has d={d}")


def _tuple(v) -> tuple[float, ...]:
    return tuple(float(a) for a in np.atleast_1d(np.asarray(v, dtype=float)))


@dataclass(frozen=True)
class Box(Region):
    """Open axis-aligned box ``lo < x < hi``; bounds may be infinite."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __init__(self, lo, hi):
        lo_t, hi_t = _tuple(lo), _tuple(hi)
        if len(lo_t) != len(hi_t):
            raise ConfigError("box bounds have different lengths")
        if any(a > b for a, b in zip(lo_t, hi_t)):
            raise ConfigError(f"box has lo > hi: {lo_t} {hi_t}")
        object.__setattr__(self, "lo", lo_t)
        object.__setattr__(self, "hi", hi_t)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            return (x[:, 0] > self.lo[0]) & (x[:, 0] < self.hi[0])
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.all((x > lo) & (x < hi), axis=1)

    def closure_contains(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.all((x >= lo) & (x <= hi), axis=1)


@dataclass(frozen=True)
class Ball(Region):
    """Open Euclidean ball."""

    center: tuple[float, ...]
    radius: float

    def __init__(self, center, radius):
        if not radius > 0:
            raise ConfigError(f"ball radius must be positive, got {radius}")
        object.__setattr__(self, "center", _tuple(center))
        object.__setattr__(self, "radius", float(radius))

    @property
    def dim(self) -> int:
        return len(self.center)

    def _r2(self, x):
        return np.sum((np.asarray(x, dtype=float) - np.asarray(self.center)) ** 2, axis=1)

    def contains(self, x):
        return self._r2(x) < self.radius**2

    def closure_contains(self, x):
        return self._r2(x) <= self.radius**2


@dataclass(frozen=True)
class Whole(Region):
    """The full state space."""

    def contains(self, x):
        return np.ones(len(x), dtype=bool)


@dataclass(frozen=True)
class Empty(Region):
    def contains(self, x):
        return np.zeros(len(x), dtype=bool)


@dataclass(frozen=True)
class Complement(Region):
    inner: Region

    @property
    def dim(self):
        return self.inner.dim

    def contains(self, x):
        return ~self.inner.contains(x)

    def interior_contains(self, x):
        return ~self.inner.closure_contains(x)

    def closure_contains(self, x):
        return ~self.inner.interior_contains(x)

    def complement(self) -> Region:
        return self.inner


@dataclass(frozen=True)
class Intersection(Region):
    parts: tuple[Region, ...]

    @property
    def dim(self):
        dims = {p.dim for p in self.parts if p.dim is not None}
        return dims.pop() if len(dims) == 1 else None

    def contains(self, x):
        out = np.ones(len(x), dtype=bool)
        for p in self.parts:
            out &= p.contains(x)
        return out

    def interior_contains(self, x):
        out = np.ones(len(x), dtype=bool)
        for p in self.parts:
            out &= p.interior_contains(x)
        return out

    def closure_contains(self, x):
        out = np.ones(len(x), dtype=bool)
        for p in self.parts:
            out &= p.closure_contains(x)
        return out


def intersect(a: Region | None, b: Region | None) -> Region | None:
    """Intersection that avoids nesting duplicates (keeps restriction idempotent)."""
    if a is None:
        return b
    if b is None or a == b or isinstance(b, Whole):
        return a
    if isinstance(a, Whole):
        return b
    parts_a = a.parts if isinstance(a, Intersection) else (a,)
    if b in parts_a:
        return a
    return Intersection(parts_a + (b,))


def region_from_dict(obj: Any) -> Region:
    """Build a region from a config record.

    Accepted forms: ``"whole"``, ``"empty"``, ``{box = {lo = [..], hi = [..]}}``,
    ``{ball = {center = [..], radius = r}}``, ``{complement = <region>}``.
    """
    if isinstance(obj, Region):
        return obj
    if isinstance(obj, str):
        if obj == "whole":
            return Whole()
        if obj == "empty":
            return Empty()
        raise ConfigError(f"unknown region {obj!r}")
    if not isinstance(obj, Mapping) or len(obj) != 1:
        raise ConfigError(f"region record must have exactly one key, got {obj!r}")
    (kind, body), = obj.items()
    try:
        if kind == "box":
            return Box(body["lo"], body["hi"])
        if kind == "ball":
            return Ball(body["center"], body["radius"])
        if kind == "complement":
            return Complement(region_from_dict(body))
    except KeyError as exc:
        raise ConfigError(f"region {kind!r} missing field {exc}") from None
    raise ConfigError(f"unknown region kind {kind!r}")
