"""Stored path ensembles, stopping times and part processes.

A ``PathEnsemble`` keeps every grid state of every path in flat arrays.  For an
exited path the last recorded state is the first one outside the domain (the
process is at the cemetery from then on); for a censored path the last state is
the one at the horizon.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigError, NumericError
from .process import MCParams, ProcessSpec, make_stepper
from .regions import Region, intersect

MAGIC = b"FKE1"
_HEADER = struct.Struct("<QddQQ")
_LEN = struct.Struct("<Q")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    n_paths: int
    dt: float
    horizon: float
    seed: int
    start: np.ndarray
    times: np.ndarray  # (T,)
    states: np.ndarray  # (T, d)
    offsets: np.ndarray  # (n_paths + 1,)
    lifetime: np.ndarray  # (n_paths,)
    exited: np.ndarray  # (n_paths,) bool
    domain: Region | None = None
    spec: ProcessSpec | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("start", "times", "states", "offsets", "lifetime", "exited"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def dimension(self) -> int:
        return self.states.shape[1]

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def path_index(self) -> np.ndarray:
        """Path number of every flat entry."""
        return np.repeat(np.arange(self.n_paths), self.lengths)

    @property
    def step_index(self) -> np.ndarray:
        """Grid step of every flat entry."""
        return np.arange(len(self.times)) - np.repeat(self.offsets[:-1], self.lengths)

    @property
    def exit_flag(self) -> np.ndarray:
        return np.where(self.exited, "exited", "censored_at_horizon")

    def path(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.offsets[i], self.offsets[i + 1]
        return self.times[a:b], self.states[a:b]

    def alive_mask(self) -> np.ndarray:
        """Flat mask of entries strictly before the lifetime (i.e. not the cemetery state)."""
        last = np.zeros(len(self.times), dtype=bool)
        last[self.offsets[1:] - 1] = True
        return ~(last & np.repeat(self.exited, self.lengths))

    def final_states(self) -> np.ndarray:
        return self.states[self.offsets[1:] - 1]

    def same_paths(self, other: "PathEnsemble") -> bool:
        return (np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.states, other.states)
                and np.array_equal(self.lifetime, other.lifetime)
                and np.array_equal(self.exited, other.exited))

    # -- binary replay format -------------------------------------------
    def dump(self, path) -> None:
        """Write the ``FKE1`` little-endian columnar file.

        Layout: magic, header ``(n_paths u64, dt f64, horizon f64, seed u64, d u64)``,
        then per path three length-prefixed float64 arrays: times, states
        (row-major, ``length * d`` values) and ``[lifetime, exited]``.
        """
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(_HEADER.pack(self.n_paths, self.dt, self.horizon, self.seed, self.dimension))
            for i in range(self.n_paths):
                t, s = self.path(i)
                for arr in (t, s.ravel(), np.array([self.lifetime[i], float(self.exited[i])])):
                    fh.write(_LEN.pack(len(arr)))
                    fh.write(np.asarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "PathEnsemble":
        with open(path, "rb") as fh:
            buf = fh.read()
        if buf[:4] != MAGIC:
            raise ConfigError(f"{path}: not an FKE1 ensemble file")
        n, dt, horizon, seed, d = _HEADER.unpack_from(buf, 4)
        pos = 4 + _HEADER.size

        def read():
            nonlocal pos
            (length,) = _LEN.unpack_from(buf, pos)
            pos += _LEN.size
            arr = np.frombuffer(buf, dtype="<f8", count=length, offset=pos)
            pos += 8 * length
            return arr

        times, states, life, ex = [], [], np.empty(n), np.empty(n, dtype=bool)
        for i in range(n):
            times.append(read())
            states.append(read().reshape(-1, d))
            life[i], flag = read()
            ex[i] = flag != 0.0
        offsets = np.concatenate([[0], np.cumsum([len(t) for t in times])]).astype(np.int64)
        return cls(n, dt, horizon, seed, states[0][0].copy(), np.concatenate(times),
                   np.concatenate(states), offsets, life, ex)


@dataclass(frozen=True, eq=False)
class StoppingTimeSample:
    kind: str  # "exit" | "hitting" | "debut"
    values: np.ndarray  # time units, inf when censored
    censored: np.ndarray
    step: np.ndarray  # grid step of the stopping state, -1 when censored

    def mean(self) -> float:
        return float(np.mean(self.values[~self.censored])) if (~self.censored).any() else np.nan


def simulate_ensemble(spec: ProcessSpec, start, mc: MCParams, index: int = 0) -> PathEnsemble:
    """Simulate and store ``mc.n_paths`` paths from ``start``.

    ``index`` selects the evaluation-point key; the paths are identical to the
    ones the streaming operators use for point ``index`` with the same
    ``(seed, stream)``.
    """
    start = np.atleast_1d(np.asarray(start, dtype=float))
    d = spec.dimension
    if start.shape != (d,):
        raise ConfigError(f"start must have shape ({d},), got {start.shape}")
    if spec.domain is not None and not spec.domain.contains(start[None])[0]:
        raise ConfigError(f"start point {start.tolist()} lies outside the process domain")
    n, dt, n_steps = mc.n_paths, mc.dt, mc.n_steps
    stepper = make_stepper(spec, dt)
    keys = rng.path_keys(rng.point_key(mc.seed, mc.stream, index), 0, n)
    x = np.tile(start, (n, 1))
    slot = np.arange(n)
    rec_slot, rec_step, rec_x = [slot], [np.zeros(n, dtype=np.int64)], [x]
    lifetime = np.full(n, np.inf if spec.domain is None else n_steps * dt)
    exited = np.zeros(n, dtype=bool)
    for k in range(n_steps):
        if len(slot) == 0:
            break
        x_new = stepper.step(x, keys, k)
        finite = np.all(np.isfinite(x_new), axis=1)
        if not finite.all():
            raise NumericError(f"non-finite state at step {k + 1} in path {int(slot[~finite][0])}")
        rec_slot.append(slot)
        rec_step.append(np.full(len(slot), k + 1, dtype=np.int64))
        rec_x.append(x_new)
        if spec.domain is None:
            x = x_new
            continue
        alive = spec.domain.contains(x_new)
        dead = slot[~alive]
        lifetime[dead] = (k + 1) * dt
        exited[dead] = True
        x, keys, slot = x_new[alive], keys[alive], slot[alive]
    all_slot = np.concatenate(rec_slot)
    all_step = np.concatenate(rec_step)
    order = np.lexsort((all_step, all_slot))
    offsets = np.concatenate([[0], np.cumsum(np.bincount(all_slot, minlength=n))]).astype(np.int64)
    return PathEnsemble(n, dt, mc.horizon, mc.seed, start, all_step[order] * dt,
                        np.concatenate(rec_x)[order], offsets, lifetime, exited,
                        spec.domain, spec)


def _first_per_path(ens: PathEnsemble, cand: np.ndarray):
    """Flat position of the first candidate in every path (-1 if none)."""
    pos = np.full(ens.n_paths, -1, dtype=np.int64)
    idx = np.flatnonzero(cand)
    if len(idx):
        pid = ens.path_index[idx]
        uniq, first = np.unique(pid, return_index=True)
        pos[uniq] = idx[first]
    return pos


def _sample(ens: PathEnsemble, kind: str, pos: np.ndarray, zero: np.ndarray) -> StoppingTimeSample:
    censored = (pos < 0) & ~zero
    values = np.where(censored, np.inf, 0.0)
    step = np.full(ens.n_paths, -1, dtype=np.int64)
    found = (pos >= 0) & ~zero
    values[found] = ens.times[pos[found]]
    step[found] = ens.step_index[pos[found]]
    step[zero] = 0
    return StoppingTimeSample(kind, values, censored, step)


def _second_entry(ens: PathEnsemble, mask_flat: np.ndarray) -> np.ndarray:
    """Per path: has a second (alive) entry and ``mask_flat`` holds there."""
    has = ens.lengths >= 2
    out = np.zeros(ens.n_paths, dtype=bool)
    i1 = ens.offsets[:-1][has] + 1
    out[has] = mask_flat[i1]
    return out


def exit_time(ens: PathEnsemble, region: Region) -> StoppingTimeSample:
    """First grid time ``t > 0`` with ``X_t`` outside ``region``; the cemetery counts as outside.

    A start strictly outside the closure of ``region`` whose next state is also
    outside gives 0.
    """
    region.check_dim(ens.dimension)
    alive = ens.alive_mask()
    step = ens.step_index
    inside = region.contains(ens.states)
    cand = (step >= 1) & (~inside | ~alive)
    x0 = ens.states[ens.offsets[:-1]]
    zero = ~region.closure_contains(x0) & _second_entry(ens, ~inside | ~alive)
    return _sample(ens, "exit", _first_per_path(ens, cand), zero)


def hitting_time(ens: PathEnsemble, region: Region) -> StoppingTimeSample:
    """First grid time ``t > 0`` with ``X_t`` in ``region`` before the lifetime.

    A start in the interior of ``region`` whose next (alive) state is in
    ``region`` gives 0.
    """
    region.check_dim(ens.dimension)
    alive = ens.alive_mask()
    inside = region.contains(ens.states) & alive
    cand = (ens.step_index >= 1) & inside
    x0 = ens.states[ens.offsets[:-1]]
    zero = region.interior_contains(x0) & _second_entry(ens, inside)
    return _sample(ens, "hitting", _first_per_path(ens, cand), zero)


def debut_time(ens: PathEnsemble, region: Region) -> StoppingTimeSample:
    """First grid time ``t >= 0`` with ``X_t`` in ``region`` before the lifetime."""
    region.check_dim(ens.dimension)
    cand = region.contains(ens.states) & ens.alive_mask()
    return _sample(ens, "debut", _first_per_path(ens, cand), np.zeros(ens.n_paths, dtype=bool))


def restrict_to_part(ens: PathEnsemble, region: Region) -> PathEnsemble:
    """Kill every path at its debut in the complement of ``region``."""
    region.check_dim(ens.dimension)
    cand = ~region.contains(ens.states) & ens.alive_mask()
    pos = _first_per_path(ens, cand)
    cut = pos >= 0
    new_len = ens.lengths.copy()
    new_len[cut] = pos[cut] - ens.offsets[:-1][cut] + 1
    keep = np.arange(len(ens.times)) - np.repeat(ens.offsets[:-1], ens.lengths) \
        < np.repeat(new_len, ens.lengths)
    lifetime = ens.lifetime.copy()
    lifetime[cut] = ens.times[pos[cut]]
    exited = ens.exited | cut
    offsets = np.concatenate([[0], np.cumsum(new_len)]).astype(np.int64)
    spec = ens.spec
    domain = intersect(ens.domain, region)
    if spec is not None:
        spec = spec.with_domain(domain)
    return PathEnsemble(ens.n_paths, ens.dt, ens.horizon, ens.seed, ens.start,
                        ens.times[keep], ens.states[keep], offsets, lifetime, exited,
                        domain, spec)
