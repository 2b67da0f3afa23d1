"""Run configuration: a TOML document, validated field by field.

Schema (every section optional unless a command needs it)::

    command = "solve"              # simulate | resolvent | solve | diagnose | verify
    entry = "manufactured-sine"    # catalog entry; inline sections override its parts
    seed = 1234567
    out = "fkmc_out"

    [entry_params]                 # keyword overrides passed to the catalog builder
    [mc]        n_paths, dt, horizon, workers, tail_tol
    [mesh]      lo = [..], hi = [..], points = [..]   |   nodes = [[..], ..]
    [process]   kind, dimension, scale | alpha | drift, noise | rate, dividends, volatility,
                domain = <region record>
    [measure]   densities = [<field record>, ..]  |  atoms = [[x, w], ..], band_width
    [nonlinearity]  linear = c  |  polynomial = [c0, c1, ..], sign_bound, monotone
    [resolvent] operator = "resolvent" | "semigroup", alpha, t, f = <field record>
    [solve]     damping, max_iters, tol_fix, truncation, truncation_weight, alpha_shift,
                bsde_horizon, bsde_paths, revalidate, initial = "zero" | "envelope"
    [diagnose]  family = "sine" | "constant", K, alpha, eps = [..], t_grid = [..], m1_tol
    [simulate]  start = [..]
    [verify]    entries = [..], checks = [..]

The output directory resolves as the ``--out`` flag, then ``FKMC_OUT``, then the ``out``
key, then ``fkmc_out``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .catalog import CatalogEntry, instantiate
from .errors import ConfigError
from .fields import field_from_record
from .grid import Mesh
from .measures import MeasureSpec
from .process import KINDS, MCParams, ProcessSpec
from .regions import region_from_dict
from .rng import DEFAULT_SEED
from .solver import Nonlinearity

COMMANDS = ("simulate", "resolvent", "solve", "diagnose", "verify")
OUT_ENV = "FKMC_OUT"

_SECTIONS: dict[str, set[str]] = {
    "mc": {"n_paths", "dt", "horizon", "workers", "tail_tol"},
    "mesh": {"lo", "hi", "points", "nodes"},
    "process": {"kind", "dimension", "scale", "alpha", "drift", "noise", "rate", "dividends",
                "volatility", "domain"},
    "measure": {"densities", "atoms", "band_width"},
    "nonlinearity": {"linear", "polynomial", "sign_bound", "monotone"},
    "resolvent": {"operator", "alpha", "t", "f"},
    "solve": {"damping", "max_iters", "tol_fix", "truncation", "truncation_weight",
              "alpha_shift", "bsde_horizon", "bsde_paths", "revalidate", "initial"},
    "diagnose": {"family", "K", "alpha", "eps", "t_grid", "m1_tol"},
    "simulate": {"start"},
    "verify": {"entries", "checks"},
    "entry_params": None,  # free-form
    "tolerances": None,
}
_TOP = {"command", "entry", "seed", "out"}


@dataclass
class RunConfig:
    command: str
    entry: CatalogEntry | None = None
    spec: ProcessSpec | None = None
    F: Nonlinearity | None = None
    mu: MeasureSpec | None = None
    mc: MCParams = field(default_factory=MCParams)
    mesh: Mesh | None = None
    out_dir: str = "fkmc_out"
    sections: dict[str, dict[str, Any]] = field(default_factory=dict)
    mc_overrides: dict[str, Any] = field(default_factory=dict)

    def section(self, name: str) -> dict[str, Any]:
        return self.sections.get(name, {})

    def require(self, what: str):
        val = getattr(self, what)
        if val is None:
            section = {"spec": "process", "mu": "measure", "F": "nonlinearity"}.get(what, what)
            raise ConfigError(f"command {self.command!r} needs an entry or a [{section}] section")
        return val


def _num(table: Mapping, key: str, where: str, kind=float, positive=False, nonneg=False,
         default=None):
    if key not in table:
        return default
    v = table[key]
    ok = isinstance(v, (int, float)) and not isinstance(v, bool)
    if kind is int:
        ok = isinstance(v, int) and not isinstance(v, bool)
    if not ok:
        raise ConfigError(f"{where}.{key}: expected {'integer' if kind is int else 'number'}, "
                          f"got {v!r}")
    v = kind(v)
    if positive and not v > 0:
        raise ConfigError(f"{where}.{key}: must be positive, got {v!r}")
    if nonneg and not v >= 0:
        raise ConfigError(f"{where}.{key}: must be non-negative, got {v!r}")
    return v


def _check_keys(doc: Mapping[str, Any]) -> None:
    for key, val in doc.items():
        if key in _TOP:
            continue
        if key not in _SECTIONS:
            raise ConfigError(f"unknown top-level key {key!r}")
        if not isinstance(val, Mapping):
            raise ConfigError(f"[{key}] must be a table")
        allowed = _SECTIONS[key]
        if allowed is not None:
            for k in val:
                if k not in allowed:
                    raise ConfigError(f"[{key}]: unknown key {k!r}; allowed: {sorted(allowed)}")


def load_document(path: str) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: TOML parse error: {err}") from None


def parse_process(tab: Mapping[str, Any]) -> ProcessSpec:
    where = "process"
    kind = tab.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"process.kind: expected one of {list(KINDS)}, got {kind!r}")
    dim = _num(tab, "dimension", where, int, positive=True, default=1)
    domain = region_from_dict(tab["domain"]) if "domain" in tab else None
    if kind == "brownian":
        return ProcessSpec.brownian(dim, _num(tab, "scale", where, positive=True, default=1.0),
                                    domain)
    if kind == "alpha_stable":
        if "alpha" not in tab:
            raise ConfigError("process.alpha: required for alpha_stable")
        return ProcessSpec.alpha_stable(_num(tab, "alpha", where), dim, domain)
    if kind == "ornstein_uhlenbeck":
        for k in ("drift", "noise"):
            if k not in tab:
                raise ConfigError(f"process.{k}: required for ornstein_uhlenbeck")
        return ProcessSpec.ornstein_uhlenbeck(tab["drift"], tab["noise"], domain)
    for k in ("rate", "volatility"):
        if k not in tab:
            raise ConfigError(f"process.{k}: required for black_scholes")
    return ProcessSpec.black_scholes(_num(tab, "rate", where), tab.get("dividends", 0.0),
                                     tab["volatility"], domain)


def parse_measure(tab: Mapping[str, Any]) -> MeasureSpec:
    bw = _num(tab, "band_width", "measure", positive=True)
    if "densities" in tab and "atoms" in tab:
        raise ConfigError("measure: give either densities or atoms, not both")
    if "atoms" in tab:
        atoms = tab["atoms"]
        if not isinstance(atoms, list) or not all(isinstance(a, list) and len(a) == 2 for a in atoms):
            raise ConfigError("measure.atoms: expected a list of [position, weight] pairs")
        return MeasureSpec.dirac([(float(a), float(w)) for a, w in atoms], bw)
    dens = tab.get("densities")
    if not isinstance(dens, list) or not dens:
        raise ConfigError("measure.densities: expected a non-empty list of field records")
    return MeasureSpec.densities(*[field_from_record(r) for r in dens])


def parse_nonlinearity(tab: Mapping[str, Any]) -> Nonlinearity:
    where = "nonlinearity"
    if "linear" in tab:
        c = _num(tab, "linear", where)
        if c > 0:
            raise ConfigError("nonlinearity.linear: coefficient must be <= 0 (sign condition)")
        return Nonlinearity(1, lambda x, y: c * y, 0.0, True,
                            lambda r, x: np.full(len(x), abs(c) * r), f"linear{c:g}")
    if "polynomial" in tab:
        coeffs = tab["polynomial"]
        if not isinstance(coeffs, list) or not coeffs:
            raise ConfigError("nonlinearity.polynomial: expected a list of coefficients")
        p = np.asarray(coeffs, dtype=float)[::-1]
        G = _num(tab, "sign_bound", where, nonneg=True)
        if G is None:
            raise ConfigError("nonlinearity.sign_bound: required with a polynomial nonlinearity")
        mono = tab.get("monotone", False)
        if not isinstance(mono, bool):
            raise ConfigError("nonlinearity.monotone: expected true or false")
        return Nonlinearity(1, lambda x, y: np.polyval(p, y), G, mono, None, "polynomial")
    raise ConfigError("nonlinearity: expected 'linear' or 'polynomial'")


def parse_mesh(tab: Mapping[str, Any]) -> Mesh:
    if "nodes" in tab:
        return Mesh.from_points(tab["nodes"])
    try:
        lo, hi, pts = tab["lo"], tab["hi"], tab["points"]
    except KeyError as exc:
        raise ConfigError(f"mesh: missing field {exc} (or give 'nodes')") from None
    if not (isinstance(lo, list) and isinstance(hi, list) and isinstance(pts, list)
            and len(lo) == len(hi) == len(pts)):
        raise ConfigError("mesh: lo, hi and points must be lists of equal length")
    for n in pts:
        if not isinstance(n, int) or n < 2:
            raise ConfigError(f"mesh.points: each entry must be an integer >= 2, got {n!r}")
    return Mesh.grid(*[np.linspace(a, b, n) for a, b, n in zip(lo, hi, pts)])


def parse_mc(tab: Mapping[str, Any], base: MCParams, seed: int) -> MCParams:
    kw: dict[str, Any] = {"seed": seed}
    for key, kind, pos in (("n_paths", int, True), ("dt", float, True),
                           ("horizon", float, False), ("workers", int, True),
                           ("tail_tol", float, True)):
        v = _num(tab, key, "mc", kind, positive=pos, nonneg=not pos)
        if v is not None:
            kw[key] = v
    return base.replace(**kw)


def build(doc: Mapping[str, Any], command: str | None = None, *, seed: int | None = None,
          n_paths: int | None = None, dt: float | None = None, out: str | None = None,
          workers: int | None = None) -> RunConfig:
    """Validate a parsed document plus command-line overrides into a :class:`RunConfig`."""
    _check_keys(doc)
    cmd = command or doc.get("command")
    if cmd not in COMMANDS:
        raise ConfigError(f"command: expected one of {list(COMMANDS)}, got {cmd!r}")
    seed_v = seed if seed is not None else doc.get("seed", DEFAULT_SEED)
    if not isinstance(seed_v, int) or isinstance(seed_v, bool) or not 0 <= seed_v < 2**64:
        raise ConfigError(f"seed: expected an unsigned 64-bit integer, got {seed_v!r}")
    entry = None
    if "entry" in doc:
        params = dict(doc.get("entry_params", {}))
        entry = instantiate(doc["entry"], **params)
    elif "entry_params" in doc:
        raise ConfigError("entry_params given without an entry")
    base = MCParams(seed=seed_v)
    overrides: dict[str, Any] = {}
    if entry is not None:
        for k in ("n_paths", "dt"):
            if k in entry.defaults:
                base = base.replace(**{k: entry.defaults[k]})
    mc = parse_mc(doc.get("mc", {}), base, seed_v)
    for k in ("n_paths", "dt", "workers"):
        if k in doc.get("mc", {}):
            overrides[k] = getattr(mc, k)
    if n_paths is not None:
        mc = mc.replace(n_paths=n_paths)
        overrides["n_paths"] = n_paths
    if dt is not None:
        mc = mc.replace(dt=dt)
        overrides["dt"] = dt
    if workers is not None:
        mc = mc.replace(workers=workers)
        overrides["workers"] = workers
    spec = parse_process(doc["process"]) if "process" in doc else (entry.spec if entry else None)
    mu = parse_measure(doc["measure"]) if "measure" in doc else (entry.mu if entry else None)
    F = parse_nonlinearity(doc["nonlinearity"]) if "nonlinearity" in doc else \
        (entry.F if entry else None)
    if "mesh" in doc:
        mesh = parse_mesh(doc["mesh"])
    elif entry is not None and "mesh_points" in entry.defaults:
        mesh = entry.mesh()
    else:
        mesh = None
    out_dir = out or os.environ.get(OUT_ENV) or doc.get("out", "fkmc_out")
    if not isinstance(out_dir, str):
        raise ConfigError(f"out: expected a path string, got {out_dir!r}")
    sections = {k: dict(v) for k, v in doc.items() if isinstance(v, Mapping)}
    return RunConfig(cmd, entry, spec, F, mu, mc, mesh, out_dir, sections, overrides)
