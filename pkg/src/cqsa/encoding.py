"""Mapping between model-update coordinates and GHZ phases.

Every client reports the largest magnitude in its update; the server
broadcasts the global maximum ``w_max`` and clients encode coordinate
``w`` as ``S * w`` with ``S = pi / (k * w_max)``. A cluster of ``k`` clients
can then never push a coordinate's phase sum outside [-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScaling, ProtocolViolation

BOUND_TOL = 1e-9


@dataclass(frozen=True)
class ModelUpdate:
    weights: np.ndarray
    client_id: object = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("model update must be a non-empty 1-d vector")
        if not np.all(np.isfinite(w)):
            raise ValueError("model update contains non-finite entries")
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class ScalingContext:
    w_max: float
    k: int
    S: float

    @property
    def degenerate(self) -> bool:
        return self.S == 0.0

    @property
    def phase_bound(self) -> float:
        return math.pi / self.k


def _weights(update) -> np.ndarray:
    if isinstance(update, ModelUpdate):
        return update.weights
    w = np.asarray(update, dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise ValueError("model update must be a non-empty 1-d vector")
    return w


def local_max(update) -> float:
    return float(np.max(np.abs(_weights(update))))


def global_max(local_maxima) -> float:
    values = [float(v) for v in local_maxima]
    if not values:
        raise ValueError("global_max of an empty list")
    if any(v < 0 or math.isnan(v) for v in values):
        raise ValueError("local maxima must be nonnegative")
    return max(values)


def make_scaling(k: int, w_max: float) -> ScalingContext:
    if k < 1:
        raise ValueError(f"cluster size must be >= 1, got {k}")
    if w_max < 0 or not math.isfinite(w_max):
        raise ValueError(f"w_max must be a finite nonnegative number, got {w_max}")
    if w_max == 0:
        return ScalingContext(0.0, int(k), 0.0)
    return ScalingContext(float(w_max), int(k), math.pi / (k * w_max))


def encode_update(update, ctx: ScalingContext) -> np.ndarray:
    """Phase vector ``S * w``; raises if any coordinate exceeds ``w_max``."""
    w = _weights(update)
    excess = np.abs(w) - ctx.w_max
    if np.any(excess > BOUND_TOL):
        bad = np.flatnonzero(excess > BOUND_TOL).tolist()
        client = getattr(update, "client_id", None)
        raise ProtocolViolation(
            f"client {client!r} exceeds declared bound {ctx.w_max} at coordinates {bad}"
        )
    if ctx.degenerate:
        return np.zeros_like(w)
    # divide first: S itself overflows for subnormal w_max
    return (w / ctx.w_max) * ctx.phase_bound


def decode_sum(theta_sum, ctx: ScalingContext):
    """Weight-space sum for a phase-space sum (scalar or vector)."""
    theta = np.asarray(theta_sum, dtype=np.float64)
    if ctx.degenerate:
        if np.any(theta != 0):
            raise DegenerateScaling("nonzero phase sum under a zero-magnitude round")
        out = np.zeros_like(theta)
    else:
        out = (theta / ctx.phase_bound) * ctx.w_max
    return float(out) if out.ndim == 0 else out


def clip_to_bound(update, w_max: float) -> tuple[np.ndarray, int]:
    """Clip coordinates into [-w_max, w_max]; returns (clipped, n_clipped)."""
    w = _weights(update)
    clipped = np.clip(w, -w_max, w_max)
    return clipped, int(np.count_nonzero(clipped != w))
