"""Input checks shared by the functional API and the estimator wrappers."""
from __future__ import annotations

import math

import numpy as np

from .caseio import NetworkCase, validate_case


class EmptyVector(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


def check_vector(values, name: str = "array") -> np.ndarray:
    """Return ``values`` as a non-empty, finite, 1-D float array."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise EmptyVector(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_vband(vband) -> tuple[float, float]:
    vmin, vmax = (float(v) for v in vband)
    if not vmin < vmax:
        raise ValueError(f"voltage band must satisfy vmin < vmax, got ({vmin}, {vmax})")
    return vmin, vmax


def check_case(case) -> NetworkCase:
    if not isinstance(case, NetworkCase):
        raise TypeError(f"expected a NetworkCase, got {type(case).__name__}")
    problems = validate_case(case)
    if problems:
        from .powerflow import InvalidCase

        raise InvalidCase(problems)
    return case


def check_noise(sigma: float) -> float:
    sigma = float(sigma)
    if not (0.0 <= sigma < 1.0) or math.isnan(sigma):
        raise ValueError(f"noise amplitude must lie in [0, 1), got {sigma}")
    return sigma


def check_same_shape(a, b):
    """Both logs must have the same step count and bus/gen layout."""
    if len(a.frames) != len(b.frames):
        raise ShapeMismatch(f"step counts differ: {len(a.frames)} vs {len(b.frames)}")
    if list(a.bus_ids) != list(b.bus_ids):
        raise ShapeMismatch("bus ids differ between runs")
    if a.n_gens != b.n_gens:
        raise ShapeMismatch(f"generator counts differ: {a.n_gens} vs {b.n_gens}")
