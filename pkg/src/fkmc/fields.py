"""Scalar fields from structured config records (constants, polynomials, sines)."""
from __future__ import annotations

from typing import Any, Callable, Mapping

import numpy as np

from .errors import ConfigError

ScalarField = Callable[[np.ndarray], np.ndarray]

PRESETS: dict[str, ScalarField] = {
    "zero": lambda x: np.zeros(len(x)),
    "one": lambda x: np.ones(len(x)),
    "sin-pi": lambda x: np.sin(np.pi * x[:, 0]),
    "manufactured-sine-source": lambda x: (0.5 * np.pi**2 + 1.0) * np.sin(np.pi * x[:, 0]),
}


def field_from_record(rec: Any) -> ScalarField:
    """Build ``x -> (n,)`` from a record.

    Forms: a number; ``{constant = c}``; ``{polynomial = {coeffs = [c0, c1, ..], axis = 0}}``;
    ``{sine = {amplitude = a, mode = k, phase = p, axis = 0}}`` meaning
    ``a * sin(k * pi * x + p)`` (``cosine`` likewise); ``{sum = [..]}``;
    ``{product = [..]}``; ``{preset = "name"}``.
    """
    if isinstance(rec, (int, float)):
        c = float(rec)
        return lambda x: np.full(len(x), c)
    if not isinstance(rec, Mapping) or len(rec) != 1:
        raise ConfigError(f"field record must be a number or a one-key table, got {rec!r}")
    (kind, body), = rec.items()
    if kind == "constant":
        return field_from_record(float(body))
    if kind == "preset":
        if body not in PRESETS:
            raise ConfigError(f"unknown field preset {body!r}; known: {sorted(PRESETS)}")
        return PRESETS[body]
    if kind in ("polynomial", "sine", "cosine") and not isinstance(body, Mapping):
        raise ConfigError(f"{kind} field: expected a table, got {body!r}")
    if kind in ("sum", "product") and (not isinstance(body, list) or not body):
        raise ConfigError(f"{kind} field: expected a non-empty list of records, got {body!r}")
    if kind == "polynomial":
        coeffs = np.asarray(body.get("coeffs", []), dtype=float)[::-1]
        axis = int(body.get("axis", 0))
        return lambda x: np.polyval(coeffs, x[:, axis]) if len(coeffs) else np.zeros(len(x))
    if kind in ("sine", "cosine"):
        amp = float(body.get("amplitude", 1.0))
        mode = float(body.get("mode", 1.0))
        phase = float(body.get("phase", 0.0))
        axis = int(body.get("axis", 0))
        fn = np.sin if kind == "sine" else np.cos
        return lambda x: amp * fn(mode * np.pi * x[:, axis] + phase)
    if kind in ("sum", "product"):
        parts = [field_from_record(r) for r in body]
        if kind == "sum":
            return lambda x: np.sum([p(x) for p in parts], axis=0)
        return lambda x: np.prod([p(x) for p in parts], axis=0)
    raise ConfigError(f"unknown field kind {kind!r}")
