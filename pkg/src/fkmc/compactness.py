"""Empirical smoothing diagnostics for bounded function families.

On a finite mesh every bounded family is relatively compact, so nothing here
returns a bare "compact" verdict.  What is reported is how much the resolvent
shrinks a family: covering numbers before and after, the diameter ratio, and
how fast image distances decay along the family index.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError
from .grid import GridFunction, Mesh
from .operators import resolvent_apply, semigroup_apply
from .process import MCParams, ProcessSpec
from .regions import Region


@dataclass(frozen=True, eq=False)
class FunctionFamily:
    """Scalar mesh functions ``u_1..u_K`` with ``0 <= u_k <= v`` on the mesh.

    ``fields`` optionally gives the members in closed form, ``x -> (n, K)``; it
    is used along paths instead of mesh interpolation, which matters for
    oscillating members on coarse meshes.
    """

    members: tuple[GridFunction, ...]
    envelope: GridFunction
    fields: Callable[[np.ndarray], np.ndarray] | None = None
    atol: float = 1e-12

    def __post_init__(self):
        if len(self.members) == 0:
            raise ConfigError("a function family needs at least one member")
        mesh = self.envelope.mesh
        for u in self.members:
            if u.mesh is not mesh and not np.array_equal(u.mesh.points, mesh.points):
                raise ConfigError("family members and envelope must share one mesh")
            if u.n_comp != 1:
                raise ConfigError("family members must be scalar")
        vals = self.values
        env = self.envelope.values[:, :1]
        bad = np.argwhere((vals < -self.atol) | (vals > env + self.atol))
        if len(bad):
            listed = ", ".join(f"member {k} at {mesh.points[i].tolist()}" for i, k in bad[:10])
            raise ConfigError(f"envelope violated at {len(bad)} (point, member) pairs: {listed}")

    @property
    def mesh(self) -> Mesh:
        return self.envelope.mesh

    @property
    def values(self) -> np.ndarray:
        """``(M, K)`` member values."""
        return np.concatenate([u.values for u in self.members], axis=1)

    def __len__(self) -> int:
        return len(self.members)

    def stacked(self):
        """The family as one ``K``-component field for path evaluation."""
        if self.fields is not None:
            return self.fields
        return GridFunction(self.mesh, self.values, self.members[0].domain)

    def scaled(self, c: float) -> "FunctionFamily":
        if not c > 0:
            raise ConfigError("scale factor must be positive")
        f = None if self.fields is None else (lambda x, _f=self.fields: c * _f(x))
        return FunctionFamily(tuple(u.with_values(c * u.values) for u in self.members),
                              self.envelope.with_values(c * self.envelope.values), f, self.atol)

    def permuted(self, order: Sequence[int]) -> "FunctionFamily":
        order = list(order)
        if sorted(order) != list(range(len(self))):
            raise ConfigError("order must be a permutation of the member indices")
        f = None if self.fields is None else (lambda x, _f=self.fields: _f(x)[:, order])
        return FunctionFamily(tuple(self.members[i] for i in order), self.envelope, f, self.atol)

    @classmethod
    def from_values(cls, mesh: Mesh, values, envelope=1.0,
                    domain: Region | None = None) -> "FunctionFamily":
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != len(mesh):
            raise ConfigError("values must be an (M, K) array on the mesh")
        env = np.broadcast_to(np.asarray(envelope, dtype=float), (len(mesh),))
        return cls(tuple(GridFunction(mesh, vals[:, k], domain) for k in range(vals.shape[1])),
                   GridFunction(mesh, env, domain))

    @classmethod
    def sine(cls, mesh: Mesh, K: int = 20, domain: Region | None = None,
             axis: int = 0) -> "FunctionFamily":
        """``u_k = (1 + sin(k pi x)) / 2`` for ``k = 1..K`` with envelope 1."""
        ks = np.arange(1, K + 1)

        def fields(x):
            return 0.5 * (1.0 + np.sin(np.pi * np.outer(x[:, axis], ks)))
        vals = fields(mesh.points)
        fam = cls.from_values(mesh, vals, 1.0, domain)
        return cls(fam.members, fam.envelope, fields)


def l1_distances(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Pairwise weighted L1 distances between the columns of ``values``."""
    diff = np.abs(values[:, :, None] - values[:, None, :])
    return np.einsum("m,mjk->jk", weights, diff)


def covering_numbers(dist: np.ndarray, eps_grid: Sequence[float]) -> np.ndarray:
    """Greedy covering counts by groups of diameter ``<= 2 eps``.

    Members join the first group (lowest index first) whose every member lies
    within ``2 eps``.  The counts are made non-increasing in ``eps`` by a running
    minimum over the sorted grid, which keeps ``N(eps) = 1`` exactly when the
    diameter is at most ``2 eps``.
    """
    eps = np.asarray(eps_grid, dtype=float)
    order = np.argsort(eps, kind="stable")
    raw = np.empty(len(eps), dtype=int)
    for j, e in enumerate(eps):
        groups: list[list[int]] = []
        for i in range(len(dist)):
            for g in groups:
                if all(dist[i, k] <= 2 * e for k in g):
                    g.append(i)
                    break
            else:
                groups.append([i])
        raw[j] = len(groups)
    out = np.empty_like(raw)
    out[order] = np.minimum.accumulate(raw[order])
    return out


def tail_diameters(dist: np.ndarray) -> np.ndarray:
    """``delta_j = max_{k, l >= j} d(k, l)`` for ``j = 0..K-2``."""
    K = len(dist)
    return np.array([dist[j:, j:].max() for j in range(K - 1)])


def decay_slope(dist: np.ndarray, first: int = 1) -> float:
    """Least-squares slope of ``log delta_j`` against ``log j`` (1-based family index)."""
    delta = tail_diameters(dist)
    j = np.arange(1, len(delta) + 1)
    keep = (j >= first) & (delta > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(j[keep]), np.log(delta[keep]), 1)[0])


@dataclass(frozen=True)
class Chain:
    indices: tuple[int, ...]
    eps: float
    diagnostic: str = ""

    @property
    def length(self) -> int:
        return len(self.indices)


@dataclass(eq=False)
class CompactnessReport:
    alpha: float
    eps_grid: np.ndarray
    weights: np.ndarray
    input_distances: np.ndarray
    image_distances: np.ndarray
    images: np.ndarray  # (M, K)
    image_se: np.ndarray
    input_covering: np.ndarray
    image_covering: np.ndarray
    censored_fraction: float
    chains: dict[float, Chain] = field(default_factory=dict)

    @property
    def input_diameter(self) -> float:
        return float(self.input_distances.max())

    @property
    def image_diameter(self) -> float:
        return float(self.image_distances.max())

    @property
    def smoothing_ratio(self) -> float | None:
        if self.input_diameter == 0:
            return None
        return self.image_diameter / self.input_diameter

    @property
    def decay_slope(self) -> float:
        return decay_slope(self.image_distances)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "members": int(len(self.image_distances)),
            "input_diameter": self.input_diameter,
            "image_diameter": self.image_diameter,
            "smoothing_ratio": self.smoothing_ratio,
            "decay_slope": self.decay_slope,
            "tail_diameters": tail_diameters(self.image_distances).tolist()
            if len(self.image_distances) > 1 else [],
            "covering_numbers": [{"eps": float(e), "input": int(a), "image": int(b)}
                                 for e, a, b in zip(self.eps_grid, self.input_covering,
                                                    self.image_covering)],
            "chains": [{"eps": float(e), "indices": list(c.indices), "length": c.length,
                        "diagnostic": c.diagnostic} for e, c in sorted(self.chains.items())],
            "censored_fraction": self.censored_fraction,
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write_csv(self, prefix) -> list[str]:
        """Distance matrices and covering numbers as CSV files; returns the paths."""
        paths = []
        for name, mat in (("input_distances", self.input_distances),
                          ("image_distances", self.image_distances)):
            p = f"{prefix}_{name}.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["member"] + [f"u_{k + 1}" for k in range(len(mat))])
                for k, row in enumerate(mat):
                    w.writerow([f"u_{k + 1}"] + [repr(float(v)) for v in row])
            paths.append(p)
        p = f"{prefix}_covering.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "input_covering", "image_covering"])
            for e, a, b in zip(self.eps_grid, self.input_covering, self.image_covering):
                w.writerow([repr(float(e)), int(a), int(b)])
        paths.append(p)
        return paths


def order_compactness_test(spec: ProcessSpec, family: FunctionFamily, alpha: float,
                           eps_grid: Sequence[float], mc: MCParams,
                           weights: np.ndarray | None = None) -> CompactnessReport:
    """Images ``R_alpha u_k`` on one shared ensemble and their L1 geometry on the mesh.

    ``weights`` defaults to the mesh cell volumes (Lebesgue reference measure).
    """
    eps = np.asarray(eps_grid, dtype=float)
    if eps.ndim != 1 or len(eps) == 0 or np.any(eps <= 0):
        raise ConfigError("eps_grid must be a non-empty list of positive numbers")
    mesh = family.mesh
    w = mesh.cell_volumes() if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(mesh),) or np.any(w < 0):
        raise ConfigError("weights must be non-negative, one per mesh point")
    est = resolvent_apply(spec, family.stacked(), alpha, mc, points=mesh)
    d_in = l1_distances(family.values, w)
    d_img = l1_distances(est.mean, w)
    report = CompactnessReport(alpha, eps, w, d_in, d_img, est.mean, est.stderr,
                               covering_numbers(d_in, eps), covering_numbers(d_img, eps),
                               float(est.censored_fraction.max()) if len(mesh) else 0.0)
    for e in eps:
        report.chains[float(e)] = extract_subsequence(report, float(e))
    return report


def extract_subsequence(report: CompactnessReport, eps: float) -> Chain:
    """Longest greedy chain of members whose image distances are pairwise ``<= eps``.

    From every start, the candidate whose largest distance to the chain is
    smallest joins next (lowest index on ties) while that distance stays within
    ``eps``.  The longest chain wins, earliest start on ties.
    """
    d = report.image_distances
    K = len(d)
    best: list[int] = [0]
    for s in range(K):
        chain = [s]
        worst = d[s].copy()
        worst[s] = np.inf
        while True:
            k = int(np.argmin(worst))  # argmin picks the lowest index on ties
            if not worst[k] <= eps:
                break
            chain.append(k)
            worst = np.maximum(worst, d[k])
            worst[chain] = np.inf
        if len(chain) > len(best):
            best = chain
    best = sorted(best)
    diag = "" if len(best) >= 2 else f"no pair of images within eps = {eps:g}"
    return Chain(tuple(best), eps, diag)


@dataclass(eq=False)
class M1Profile:
    times: np.ndarray
    sup_dev: np.ndarray  # (T, M): max_k |p_t u_k(x) - u_k(x)|
    stderr: np.ndarray  # (T, M): SE of the maximising member
    tol: float
    inside: np.ndarray

    @property
    def pass_fraction(self) -> float:
        k = int(np.argmin(self.times))
        ok = self.sup_dev[k][self.inside] <= self.tol
        return float(ok.mean()) if ok.size else 1.0

    @property
    def passed(self) -> bool:
        return self.pass_fraction >= 0.95

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "tol": self.tol,
                "pass_fraction": self.pass_fraction, "passed": self.passed,
                "sup_over_points": self.sup_dev.max(axis=1).tolist(),
                "median_over_points": np.median(self.sup_dev[:, self.inside], axis=1).tolist()
                if self.inside.any() else [0.0] * len(self.times)}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "point_index", "sup_deviation", "stderr"])
            for ti, t in enumerate(self.times):
                for i in range(self.sup_dev.shape[1]):
                    w.writerow([repr(float(t)), i, repr(float(self.sup_dev[ti, i])),
                                repr(float(self.stderr[ti, i]))])


def check_m1(spec: ProcessSpec, family: FunctionFamily, t_grid: Sequence[float], mc: MCParams,
             tol: float = 0.05) -> M1Profile:
    """``s(t, x) = max_k |p_t u_k(x) - u_k(x)|`` over ``t_grid``; PASS needs ``s(t_min) <= tol``
    on at least 95% of the interior mesh points."""
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or len(times) == 0 or np.any(times < 0):
        raise ConfigError("t_grid must be a non-empty list of non-negative times")
    mesh = family.mesh
    vals = family.values
    field = family.stacked()
    dev = np.empty((len(times), len(mesh)))
    se = np.empty_like(dev)
    for ti, t in enumerate(times):
        # a fixed stream per family keeps profiles at different t on common paths
        est = semigroup_apply(spec, field, float(t), mc, points=mesh)
        gap = np.abs(est.mean - vals)
        k = np.argmax(gap, axis=1)
        dev[ti] = gap[np.arange(len(mesh)), k]
        se[ti] = est.stderr[np.arange(len(mesh)), k]
    inside = np.ones(len(mesh), dtype=bool) if spec.domain is None else \
        spec.domain.contains(mesh.points)
    return M1Profile(times, dev, se, float(tol), inside)
