"""Process descriptions and exact one-step transition samplers.

Supported kinds (generator in brackets):

* ``brownian``           -- ``0.5 * scale**2 * Laplacian``
* ``alpha_stable``       -- rotation invariant stable process with
  ``E exp(i<xi, X_t>) = exp(-t |xi|**alpha)``; ``alpha = 2`` is Brownian motion
  with generator ``Laplacian``
* ``ornstein_uhlenbeck`` -- ``dX = drift X dt + noise**(1/2) dW``
* ``black_scholes``      -- ``dX_i = (rate - div_i) X_i dt + X_i sum_j vol_ij dW_j``
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np
import scipy.linalg

from . import rng
from .errors import ConfigError
from .regions import Box, Region, intersect

KINDS = ("brownian", "alpha_stable", "ornstein_uhlenbeck", "black_scholes")


@dataclass(frozen=True, eq=False)
class ProcessSpec:
    kind: str
    dimension: int
    params: Mapping[str, Any] = field(default_factory=dict)
    domain: Region | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown process kind {self.kind!r}; expected one of {KINDS}")
        if not (isinstance(self.dimension, (int, np.integer)) and self.dimension >= 1):
            raise ConfigError(f"dimension must be a positive integer, got {self.dimension!r}")
        params = {k: (np.array(v, dtype=float) if isinstance(v, (list, tuple, np.ndarray)) else v)
                  for k, v in dict(self.params).items()}
        for v in params.values():
            if isinstance(v, np.ndarray):
                v.setflags(write=False)
        object.__setattr__(self, "params", MappingProxyType(params))
        getattr(self, f"_check_{self.kind}")()
        if self.domain is not None:
            self.domain.check_dim(self.dimension)

    # -- constructors -----------------------------------------------------
    @classmethod
    def brownian(cls, dimension: int = 1, scale: float = 1.0, domain: Region | None = None):
        return cls("brownian", dimension, {"scale": scale}, domain)

    @classmethod
    def alpha_stable(cls, alpha: float, dimension: int = 1, domain: Region | None = None):
        return cls("alpha_stable", dimension, {"alpha": alpha}, domain)

    @classmethod
    def ornstein_uhlenbeck(cls, drift, noise, domain: Region | None = None):
        drift = np.atleast_2d(np.asarray(drift, dtype=float))
        return cls("ornstein_uhlenbeck", drift.shape[0], {"drift": drift, "noise": noise}, domain)

    @classmethod
    def black_scholes(cls, rate: float, dividends, volatility, domain: Region | None = None):
        vol = np.atleast_2d(np.asarray(volatility, dtype=float))
        return cls("black_scholes", vol.shape[0],
                   {"rate": rate, "dividends": dividends, "volatility": vol}, domain)

    # -- validation -------------------------------------------------------
    def _check_brownian(self):
        scale = float(self.params.get("scale", 1.0))
        if not scale > 0:
            raise ConfigError(f"brownian scale must be positive, got {scale}")

    def _check_alpha_stable(self):
        alpha = self.params.get("alpha")
        if alpha is None or not (0.0 < float(alpha) <= 2.0):
            raise ConfigError(f"stability index must lie in (0, 2], got {alpha!r}")

    def _matrix(self, name, shape):
        m = self.params.get(name)
        if m is None:
            raise ConfigError(f"{self.kind} requires parameter {name!r}")
        m = np.atleast_2d(np.asarray(m, dtype=float))
        if m.shape != shape:
            raise ConfigError(f"{name} must have shape {shape}, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ConfigError(f"{name} has non-finite entries")
        return m

    def _check_ornstein_uhlenbeck(self):
        d = self.dimension
        self._matrix("drift", (d, d))
        q = self._matrix("noise", (d, d))
        if not np.allclose(q, q.T, atol=1e-12):
            raise ConfigError("OU noise covariance must be symmetric")
        if np.linalg.eigvalsh(q).min() < -1e-10 * max(1.0, np.abs(q).max()):
            raise ConfigError("OU noise covariance must be positive semidefinite")

    def _check_black_scholes(self):
        d = self.dimension
        self._matrix("volatility", (d, d))
        div = np.atleast_1d(np.asarray(self.params.get("dividends", np.zeros(d)), dtype=float))
        if div.shape != (d,):
            raise ConfigError(f"dividends must have length {d}")
        if not math.isfinite(float(self.params.get("rate", 0.0))):
            raise ConfigError("rate must be finite")
        # the set {x_i = 0} is treated as a killing boundary
        orthant = Box(np.zeros(d), np.full(d, np.inf))
        object.__setattr__(self, "domain", intersect(self.domain, orthant))

    @property
    def conservative(self) -> bool:
        return self.domain is None

    def with_domain(self, domain: Region | None) -> "ProcessSpec":
        return ProcessSpec(self.kind, self.dimension, dict(self.params), domain)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dimension": int(self.dimension)}
        for k, v in self.params.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


@dataclass(frozen=True)
class MCParams:
    """Monte Carlo budget: paths per evaluation point, time step, horizon, seed."""

    n_paths: int = 2000
    dt: float = 1e-3
    horizon: float = 10.0
    seed: int = rng.DEFAULT_SEED
    stream: int = 0
    workers: int | None = None
    tail_tol: float = 1e-3

    def __post_init__(self):
        if not (isinstance(self.n_paths, (int, np.integer)) and self.n_paths >= 1):
            raise ConfigError(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.horizon >= 0:
            raise ConfigError(f"horizon must be non-negative, got {self.horizon}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.horizon / self.dt + 1e-9))

    def replace(self, **kw) -> "MCParams":
        from dataclasses import replace
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# transition samplers


def ou_transition(drift, noise, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean map ``exp(t drift)`` and covariance ``int_0^t e^{s drift} noise e^{s drift^T} ds``.

    Closed form for diagonal drift, Van Loan's block exponential otherwise.
    """
    a = np.atleast_2d(np.asarray(drift, dtype=float))
    q = np.atleast_2d(np.asarray(noise, dtype=float))
    d = a.shape[0]
    mean_map = scipy.linalg.expm(t * a)
    if np.count_nonzero(a - np.diag(np.diag(a))) == 0:
        s = np.add.outer(np.diag(a), np.diag(a))
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(np.abs(s) > 1e-14, np.expm1(s * t) / s, t)
        cov = q * w
    else:
        block = np.zeros((2 * d, 2 * d))
        block[:d, :d] = -a
        block[:d, d:] = q
        block[d:, d:] = a.T
        e = scipy.linalg.expm(t * block)
        cov = e[d:, d:].T @ e[:d, d:]
        cov = 0.5 * (cov + cov.T)
    return mean_map, cov


def _psd_factor(c: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(c)
    return v * np.sqrt(np.clip(w, 0.0, None))


class Stepper:
    """Samples ``X_{t+dt}`` given ``X_t`` for a batch of paths.

    Step ``k`` of a path reads counter slots ``[k * slots, (k + 1) * slots)``.
    """

    slots: int

    def __init__(self, spec: ProcessSpec, dt: float):
        self.spec = spec
        self.d = spec.dimension
        self.dt = dt

    def normals(self, keys, k, m, offset=0):
        out = np.empty((len(keys), m))
        rng.fill_normals(keys, k * self.slots + offset, out)
        return out

    def uniforms(self, keys, k, m, offset=0):
        out = np.empty((len(keys), m))
        rng.fill_uniforms(keys, k * self.slots + offset, out)
        return out

    def step(self, x: np.ndarray, keys: np.ndarray, k: int) -> np.ndarray:
        raise NotImplementedError


class _Brownian(Stepper):
    def __init__(self, spec, dt, variance_rate=None):
        super().__init__(spec, dt)
        if variance_rate is None:
            variance_rate = float(spec.params.get("scale", 1.0)) ** 2
        self.sd = math.sqrt(variance_rate * dt)
        self.slots = rng.normal_slots(self.d)

    def step(self, x, keys, k):
        return x + self.sd * self.normals(keys, k, self.d)


def symmetric_stable(alpha: float, u: np.ndarray) -> np.ndarray:
    """Chambers-Mallows-Stuck: symmetric stable with E exp(i xi S) = exp(-|xi|^alpha).

    ``u`` has two columns of independent uniforms on (0, 1).
    """
    v = np.pi * (u[:, 0] - 0.5)
    w = -np.log(u[:, 1])
    if alpha == 1.0:
        return np.tan(v)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))


def positive_stable(rho: float, u: np.ndarray) -> np.ndarray:
    """Kanter's sampler: positive S with E exp(-lam S) = exp(-lam^rho), 0 < rho < 1."""
    v = np.pi * u[:, 0]
    w = -np.log(u[:, 1])
    a = (np.sin((1.0 - rho) * v) * np.sin(rho * v) ** (rho / (1.0 - rho))
         / np.sin(v) ** (1.0 / (1.0 - rho)))
    return (a / w) ** ((1.0 - rho) / rho)


class _Stable(Stepper):
    def __init__(self, spec, dt):
        super().__init__(spec, dt)
        self.alpha = float(spec.params["alpha"])
        self.scale = dt ** (1.0 / self.alpha)
        self.slots = 2 + (rng.normal_slots(self.d) if self.d > 1 else 0)

    def step(self, x, keys, k):
        if self.d == 1:
            s = symmetric_stable(self.alpha, self.uniforms(keys, k, 2))
            return x + self.scale * s[:, None]
        # Gaussian subordination: sqrt(A) * N(0, 2 I) with A positive (alpha/2)-stable
        sub = positive_stable(0.5 * self.alpha, self.uniforms(keys, k, 2))
        g = self.normals(keys, k, self.d, offset=2)
        return x + (self.scale * math.sqrt(2.0)) * np.sqrt(sub)[:, None] * g


class _OU(Stepper):
    def __init__(self, spec, dt):
        super().__init__(spec, dt)
        mean_map, cov = ou_transition(spec.params["drift"], spec.params["noise"], dt)
        self.mean_t = np.ascontiguousarray(mean_map.T)
        self.chol_t = np.ascontiguousarray(_psd_factor(cov).T)
        self.slots = rng.normal_slots(self.d)

    def step(self, x, keys, k):
        return x @ self.mean_t + self.normals(keys, k, self.d) @ self.chol_t


class _BlackScholes(Stepper):
    def __init__(self, spec, dt):
        super().__init__(spec, dt)
        vol = np.asarray(spec.params["volatility"], dtype=float)
        div = np.atleast_1d(np.asarray(spec.params.get("dividends", np.zeros(self.d)), dtype=float))
        rate = float(spec.params.get("rate", 0.0))
        self.log_drift = (rate - div - 0.5 * np.sum(vol**2, axis=1)) * dt
        self.vol_t = np.ascontiguousarray(vol.T) * math.sqrt(dt)
        self.slots = rng.normal_slots(self.d)

    def step(self, x, keys, k):
        return x * np.exp(self.log_drift + self.normals(keys, k, self.d) @ self.vol_t)


def make_stepper(spec: ProcessSpec, dt: float) -> Stepper:
    if spec.kind == "brownian":
        return _Brownian(spec, dt)
    if spec.kind == "alpha_stable":
        if float(spec.params["alpha"]) == 2.0:
            return _Brownian(spec, dt, variance_rate=2.0)
        return _Stable(spec, dt)
    if spec.kind == "ornstein_uhlenbeck":
        return _OU(spec, dt)
    return _BlackScholes(spec, dt)
