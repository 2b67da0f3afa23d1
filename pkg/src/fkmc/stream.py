"""Streaming path integrator.

Every operator of the package is some functional of the paths started at the
evaluation points: a discounted left-endpoint integral along the path, a
value at a stopping time, or a value at a fixed time.  ``run_paths`` computes
all of these in one pass without storing the paths, so it scales to 10^5
paths per point.

Termination rules, applied at grid times ``t_k = k * dt``:

* killed: first ``k >= 1`` with ``X_k`` outside the process domain;
* hit: first ``k >= 1`` with ``X_k`` inside ``stop`` (not counted when the
  same step kills the path); additionally the hit happens at time 0 when
  ``X_0`` lies in the interior of ``stop`` and ``X_1`` is in ``stop``;
* censored: alive at ``k = n_steps``.

Integrals sum ``exp(-a t_k) h(X_k) dt`` over ``t_k`` strictly before the end
time.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import rng
from .errors import NumericError
from .process import MCParams, ProcessSpec, make_stepper
from .regions import Region

CENSORED, KILLED, HIT = 0, 1, 2

Field = Callable[[np.ndarray], np.ndarray]

_COMPACT_RATIO = 0.85


@dataclass
class PathOutcome:
    """Per-path results, leading axes ``(n_points, n_paths)``."""

    integrals: np.ndarray | None  # (M, n, A, C)
    terminal: np.ndarray | None  # (M, n, C); zero unless set by on_hit / on_horizon
    end_time: np.ndarray  # (M, n)
    reason: np.ndarray  # (M, n) int8

    @property
    def censored(self) -> np.ndarray:
        return self.reason == CENSORED


def _eval(fn: Field, x: np.ndarray, what: str, point_of, path_of) -> np.ndarray:
    v = np.asarray(fn(x), dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if not np.all(np.isfinite(v)):
        i = int(np.flatnonzero(~np.all(np.isfinite(v), axis=1))[0])
        raise NumericError(
            f"non-finite {what} at state {x[i].tolist()} "
            f"(point {point_of(i)}, path {path_of(i)})")
    return v


def _run_chunk(spec: ProcessSpec, starts, indices, mc: MCParams, integrand, discounts,
               n_comp, stop, on_hit, hit_discount, on_horizon, term_comp):
    m, d = starts.shape
    n = mc.n_paths
    e = m * n
    stepper = make_stepper(spec, mc.dt)
    dt = mc.dt
    n_steps = mc.n_steps
    domain = spec.domain
    disc = np.asarray(discounts, dtype=float)
    a_count = len(disc)

    integrals = np.zeros((e, a_count, n_comp)) if integrand is not None else None
    terminal = np.zeros((e, term_comp)) if term_comp else None
    end_time = np.full(e, float(n_steps) * dt)
    reason = np.zeros(e, dtype=np.int8)

    keys = np.concatenate([rng.path_keys(rng.point_key(mc.seed, mc.stream, int(i)), 0, n)
                           for i in indices]) if m else np.zeros(0, dtype=np.uint64)
    x = np.repeat(starts, n, axis=0)
    slot = np.arange(e)
    active = np.ones(e, dtype=bool)
    acc = np.zeros((e, a_count, n_comp)) if integrand is not None else None
    deferred = None
    interior0 = None

    def point_of(i):
        return int(indices[slot[i] // n])

    def path_of(i):
        return int(slot[i] % n)

    def finish(mask, why, t):
        idx = slot[mask]
        reason[idx] = why
        end_time[idx] = t
        if acc is not None:
            integrals[idx] = acc[mask]

    for k in range(n_steps + 1):
        if not active.any():
            break
        t = k * dt
        if k == n_steps:
            finish(active, CENSORED, t)
            if on_horizon is not None:
                terminal[slot[active]] = _eval(on_horizon, x[active], "terminal value",
                                               point_of, path_of)
            break
        if integrand is not None:
            h = _eval_active(integrand, x, active, point_of, path_of)
            weights = np.exp(-disc * t) * dt
            contrib = weights[None, :, None] * h[:, None, :]
            if k == 0 and stop is not None:
                deferred = contrib
            else:
                acc += contrib
        if k == 0 and stop is not None:
            interior0 = stop.interior_contains(x)
        x_new = stepper.step(x, keys, k)
        if not np.all(np.isfinite(x_new[active])):
            bad = np.flatnonzero(active & ~np.all(np.isfinite(x_new), axis=1))[0]
            raise NumericError(f"non-finite state at step {k + 1} "
                               f"(point {point_of(bad)}, path {path_of(bad)})")
        alive = active if domain is None else active & domain.contains(x_new)
        killed = active & ~alive
        hit = None
        if stop is not None:
            hit = alive & stop.contains(x_new)
            if k == 0:
                zero = hit & interior0
                if acc is not None:
                    acc += np.where(zero[:, None, None], 0.0, deferred)
                    deferred = None
                if zero.any():
                    finish(zero, HIT, 0.0)
                    if on_hit is not None:
                        terminal[slot[zero]] = _eval(on_hit, x[zero], "hit value",
                                                     point_of, path_of)
                    hit &= ~zero
                    alive &= ~zero
            if hit.any():
                finish(hit, HIT, t + dt)
                if on_hit is not None:
                    terminal[slot[hit]] = math.exp(-hit_discount * (t + dt)) * _eval(
                        on_hit, x_new[hit], "hit value", point_of, path_of)
                alive &= ~hit
        if killed.any():
            finish(killed, KILLED, t + dt)
        x = x_new
        active = alive
        n_active = int(np.count_nonzero(active))
        if n_active < _COMPACT_RATIO * len(active):
            keep = np.flatnonzero(active)
            x, keys, slot, active = x[keep], keys[keep], slot[keep], active[keep]
            if acc is not None:
                acc = acc[keep]

    shape = (m, n)
    return PathOutcome(
        integrals=None if integrals is None else integrals.reshape(shape + (a_count, n_comp)),
        terminal=None if terminal is None else terminal.reshape(shape + (term_comp,)),
        end_time=end_time.reshape(shape),
        reason=reason.reshape(shape),
    )


def _eval_active(fn, x, active, point_of, path_of):
    """Evaluate on the whole batch; only active rows must be finite, the rest are zeroed."""
    with np.errstate(all="ignore"):
        v = np.asarray(fn(x), dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    ok = np.isfinite(v).all(axis=1)
    if ok.all():
        return v if active.all() else v * active[:, None]
    bad = active & ~ok
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        err = NumericError(f"non-finite integrand at state {x[i].tolist()} "
                           f"(point {point_of(i)}, path {path_of(i)})")
        err.state = x[i].copy()
        raise err
    return np.where(active[:, None], v, 0.0)


def _width(fn: Field | None, probe_at: np.ndarray) -> int:
    if fn is None:
        return 0
    probe = np.asarray(fn(probe_at), dtype=float)
    return 1 if probe.ndim == 1 else probe.shape[1]


def run_paths(spec: ProcessSpec, starts, mc: MCParams, *,
              indices: Sequence[int] | None = None,
              integrand: Field | None = None,
              discounts: Sequence[float] = (0.0,),
              stop: Region | None = None,
              on_hit: Field | None = None,
              hit_discount: float = 0.0,
              on_horizon: Field | None = None) -> PathOutcome:
    """Simulate ``mc.n_paths`` paths from every start point and collect path functionals.

    ``indices`` give the evaluation-point numbers used to derive each point's
    ensemble key; they default to ``0 .. M-1``.  Results do not depend on
    ``mc.workers``.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    m, d = starts.shape
    if d != spec.dimension:
        raise ValueError(f"start points have dimension {d}, process has {spec.dimension}")
    indices = np.arange(m) if indices is None else np.asarray(indices, dtype=np.int64)
    n_comp = max(_width(integrand, starts[:1]), 1)
    term_comp = max(_width(on_hit, starts[:1]), _width(on_horizon, starts[:1]))
    workers = mc.workers or os.cpu_count() or 1
    workers = max(1, min(int(workers), m))
    args = (mc, integrand, discounts, n_comp, stop, on_hit, hit_discount, on_horizon, term_comp)
    if workers == 1 or m <= 1:
        return _run_chunk(spec, starts, indices, *args)
    bounds = np.linspace(0, m, workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda ab: _run_chunk(spec, starts[ab[0]:ab[1]],
                                                    indices[ab[0]:ab[1]], *args),
                              zip(bounds[:-1], bounds[1:])))
    cat = lambda name: (None if getattr(parts[0], name) is None
                        else np.concatenate([getattr(p, name) for p in parts]))
    return PathOutcome(cat("integrals"), cat("terminal"), cat("end_time"), cat("reason"))
