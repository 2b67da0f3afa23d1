"""Smooth measures and their additive functionals along paths.

A density component ``f`` stands for ``f * m`` with ``m`` Lebesgue measure and
contributes ``sum_k exp(-alpha t_k) f(X_k) dt``.  A Dirac atom at ``a`` (1-d
Brownian motion only) is handled through the occupation-time approximation of
local time: ``w / (2 eps) * sum_k exp(-alpha t_k) 1{|X_k - a| < eps} dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .ensemble import PathEnsemble
from .errors import ConfigError, NumericError
from .process import ProcessSpec


@dataclass(frozen=True)
class Density:
    f: Callable[[np.ndarray], np.ndarray] | float
    label: str = ""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if callable(self.f):
            return np.asarray(self.f(x), dtype=float).reshape(len(x))
        return np.full(len(x), float(self.f))

    def abs(self) -> "Density":
        return Density(lambda x, g=self: np.abs(g(x)), f"|{self.label}|")


@dataclass(frozen=True)
class DiracAtoms:
    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        atoms = tuple((float(a), float(w)) for a, w in self.atoms)
        if any(not w > 0 for _, w in atoms):
            raise ConfigError("Dirac weights must be strictly positive")
        object.__setattr__(self, "atoms", atoms)

    def band(self, x: np.ndarray, eps: float) -> np.ndarray:
        out = np.zeros(len(x))
        for a, w in self.atoms:
            out += (w / (2.0 * eps)) * (np.abs(x[:, 0] - a) < eps)
        return out

    def abs(self) -> "DiracAtoms":
        return self


@dataclass(frozen=True)
class MeasureSpec:
    components: tuple[Density | DiracAtoms, ...]
    band_width: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ConfigError("a measure needs at least one component")
        if self.band_width is not None and not self.band_width > 0:
            raise ConfigError("Dirac band width must be positive")

    @classmethod
    def zero(cls, n: int = 1) -> "MeasureSpec":
        return cls(tuple(Density(0.0, "0") for _ in range(n)))

    @classmethod
    def densities(cls, *fs) -> "MeasureSpec":
        return cls(tuple(f if isinstance(f, Density) else Density(f) for f in fs))

    @classmethod
    def dirac(cls, atoms: Sequence[tuple[float, float]], band_width: float | None = None):
        return cls((DiracAtoms(tuple(atoms)),), band_width)

    @classmethod
    def linear_combination(cls, terms: Sequence[tuple[float, "MeasureSpec"]]) -> "MeasureSpec":
        """``sum_i c_i mu_i`` component-wise; atoms need ``c_i > 0``."""
        n = {len(mu.components) for _, mu in terms}
        if len(n) != 1:
            raise ConfigError("measures in a combination must have the same number of components")
        comps = []
        for i in range(n.pop()):
            dens = [(c, mu.components[i]) for c, mu in terms if isinstance(mu.components[i], Density)]
            atoms = [(c, mu.components[i]) for c, mu in terms if isinstance(mu.components[i], DiracAtoms)]
            if dens and atoms:
                raise ConfigError("cannot mix densities and atoms in one component")
            if dens:
                comps.append(Density(lambda x, dens=dens: sum(c * g(x) for c, g in dens)))
            else:
                comps.append(DiracAtoms(tuple((a, c * w) for c, g in atoms for a, w in g.atoms)))
        bw = {mu.band_width for _, mu in terms} - {None}
        return cls(tuple(comps), bw.pop() if len(bw) == 1 else None)

    @property
    def n_comp(self) -> int:
        return len(self.components)

    @property
    def has_atoms(self) -> bool:
        return any(isinstance(c, DiracAtoms) for c in self.components)

    @property
    def is_zero(self) -> bool:
        return all(isinstance(c, Density) and not callable(c.f) and float(c.f) == 0.0
                   for c in self.components)

    def abs(self) -> "MeasureSpec":
        return MeasureSpec(tuple(c.abs() for c in self.components), self.band_width)

    def eps(self, dt: float) -> float:
        return self.band_width if self.band_width is not None else 2.0 * math.sqrt(dt)

    def validate(self, spec: ProcessSpec | None) -> None:
        if self.has_atoms and spec is not None and not (spec.kind == "brownian" and spec.dimension == 1):
            raise ConfigError("Dirac atoms are supported for 1-d Brownian motion only")

    def integrand(self, dt: float) -> Callable[[np.ndarray], np.ndarray]:
        """Per-state rate ``x -> (n, N)`` whose time integral is the additive functional."""
        eps = self.eps(dt)

        def rate(x):
            cols = [c(x) if isinstance(c, Density) else c.band(x, eps) for c in self.components]
            return np.stack(cols, axis=1)
        return rate


@dataclass(frozen=True)
class FunctionalSample:
    values: np.ndarray
    censored: np.ndarray
    alpha: float
    component: int

    def mean(self) -> float:
        return float(self.values.mean())

    def stderr(self) -> float:
        n = len(self.values)
        return float(self.values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def accumulate(ens: PathEnsemble, mu: MeasureSpec, alpha: float = 0.0) -> list[FunctionalSample]:
    """Discounted additive functional of ``mu`` along every stored path, per component."""
    if alpha < 0:
        raise ConfigError("discount must be non-negative")
    mu.validate(ens.spec)
    if mu.has_atoms and ens.dimension != 1:
        raise ConfigError("Dirac atoms are supported for 1-d Brownian motion only")
    last = np.zeros(len(ens.times), dtype=bool)
    last[ens.offsets[1:] - 1] = True
    use = ~last
    x = ens.states[use]
    rate = mu.integrand(ens.dt)(x)
    bad = ~np.all(np.isfinite(rate), axis=1)
    if bad.any():
        raise NumericError(f"non-finite density at state {x[np.flatnonzero(bad)[0]].tolist()}")
    w = np.exp(-alpha * ens.times[use]) * ens.dt
    pid = ens.path_index[use]
    censored = ~ens.exited
    return [FunctionalSample(np.bincount(pid, weights=w * rate[:, i], minlength=ens.n_paths),
                             censored, alpha, i) for i in range(mu.n_comp)]
