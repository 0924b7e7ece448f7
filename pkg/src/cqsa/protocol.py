"""GHZ-based blind summation.

The server prepares a k-qubit GHZ state, every client rotates its own qubit
by its private phase, and the server decodes and measures qubit 0. Reading
qubit 0 directly gives ``P(0) = (1 + cos S) / 2`` for the phase sum ``S``;
a second configuration with a server-side ``Rz(-pi/2)`` on qubit 0 gives
``(1 + sin S) / 2``, and ``atan2`` of the two recovers ``S`` on [-pi, pi].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .quantum import (
    IDEAL,
    MAX_QUBITS,
    NoiseModel,
    StateVector,
    apply_cnot,
    apply_h,
    apply_noisy_cnot,
    apply_pauli_pair,
    apply_rz,
    frame_inject_depolarizing,
    frame_propagate_cnot,
    new_zero_state,
    qubit_zero_probability,
    sample_counts,
)
from .rng import derive_rng

PHASE_ATOL = 1e-9


class DecodeBasis(enum.Enum):
    COS = "cos"
    SIN = "sin"


@dataclass(frozen=True)
class ProtocolConfig:
    cluster_size: int
    shots: int = 100_000
    noise: NoiseModel = IDEAL
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.cluster_size <= MAX_QUBITS:
            raise ValueError(f"cluster_size must be in [1, {MAX_QUBITS}], got {self.cluster_size}")
        if self.shots < 2:
            raise ValueError(f"shots must be >= 2 (split over two configurations), got {self.shots}")


@dataclass(frozen=True)
class SumEstimate:
    """Server-side view of one blind summation: only measured frequencies."""

    sigma_hat: float
    p0_cos: float
    p0_sin: float
    shots_used: int
    low_confidence: bool = False

    def to_dict(self) -> dict:
        return {
            "sigma_hat": self.sigma_hat,
            "p0_cos": self.p0_cos,
            "p0_sin": self.p0_sin,
            "shots_used": self.shots_used,
            "low_confidence": self.low_confidence,
        }


def _check_k(k: int) -> None:
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= MAX_QUBITS:
        raise ValueError(f"GHZ size must be an integer in [1, {MAX_QUBITS}], got {k!r}")


def preparation_cnots(k: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(k - 1)]


def decoding_cnots(k: int) -> list[tuple[int, int]]:
    return [(0, i) for i in range(1, k)]


def build_ghz(k: int) -> StateVector:
    _check_k(k)
    state = apply_h(new_zero_state(k), 0)
    for c, t in preparation_cnots(k):
        state = apply_cnot(state, c, t)
    return state


def noisy_build_ghz(k: int, noise: NoiseModel, rng: np.random.Generator) -> StateVector:
    """One trajectory of the GHZ preparation circuit."""
    _check_k(k)
    state = apply_h(new_zero_state(k), 0)
    for c, t in preparation_cnots(k):
        state = apply_noisy_cnot(state, c, t, noise, rng)
    return state


def encode_phases(state: StateVector, thetas) -> StateVector:
    thetas = list(thetas)
    if len(thetas) != state.num_qubits:
        raise ValueError(f"expected {state.num_qubits} phases, got {len(thetas)}")
    for qubit, theta in enumerate(thetas):
        state = apply_rz(state, qubit, float(theta))
    return state


def decode(
    state: StateVector,
    noise: NoiseModel | None = None,
    rng: np.random.Generator | None = None,
) -> StateVector:
    """Fan-out CNOT(0 -> i) for i >= 1, then H on qubit 0.

    With ``noise`` and ``rng`` given, the decoding CNOTs are noisy.
    """
    for c, t in decoding_cnots(state.num_qubits):
        if noise is None:
            state = apply_cnot(state, c, t)
        else:
            state = apply_noisy_cnot(state, c, t, noise, rng)
    return apply_h(state, 0)


def _check_sum(thetas) -> float:
    total = math.fsum(float(t) for t in thetas)
    if abs(total) > math.pi + PHASE_ATOL:
        raise ValueError(f"phase sum {total:.6g} outside [-pi, pi]; rescale the encoding")
    return total


def run_protocol_trajectory(
    thetas,
    config: ProtocolConfig,
    decode_basis: DecodeBasis,
    rng: np.random.Generator,
) -> int:
    """One noisy shot of the full circuit; returns the qubit-0 bit."""
    thetas = list(thetas)
    _check_sum(thetas)
    if len(thetas) != config.cluster_size:
        raise ValueError(f"expected {config.cluster_size} phases, got {len(thetas)}")
    state = noisy_build_ghz(config.cluster_size, config.noise, rng)
    state = encode_phases(state, thetas)
    if DecodeBasis(decode_basis) is DecodeBasis.SIN:
        state = apply_rz(state, 0, -math.pi / 2)
    state = decode(state, config.noise, rng)
    (bits,) = sample_counts(state, 1, rng)
    return int(bits[0])


def _circuit_sites(k: int) -> list[tuple[int, int]]:
    return preparation_cnots(k) + decoding_cnots(k)


def _final_state(thetas, basis: DecodeBasis, injections=()) -> StateVector:
    """Full circuit with a fixed set of Pauli injections.

    ``injections`` holds one entry per CNOT site: 0 for none, otherwise
    1 + index into the 15 two-qubit Paulis.
    """
    k = len(thetas)
    sites = _circuit_sites(k)
    codes = list(injections) or [0] * len(sites)
    n_prep = k - 1
    state = apply_h(new_zero_state(k), 0)
    for (c, t), code in zip(sites[:n_prep], codes[:n_prep]):
        state = apply_cnot(state, c, t)
        if code:
            state = apply_pauli_pair(state, c, t, code - 1)
    state = encode_phases(state, thetas)
    if basis is DecodeBasis.SIN:
        state = apply_rz(state, 0, -math.pi / 2)
    for (c, t), code in zip(sites[n_prep:], codes[n_prep:]):
        state = apply_cnot(state, c, t)
        if code:
            state = apply_pauli_pair(state, c, t, code - 1)
    return apply_h(state, 0)


def count_zeros(thetas, basis: DecodeBasis, shots: int, noise: NoiseModel, rng: np.random.Generator) -> int:
    """Number of qubit-0 zeros over ``shots`` independent noisy trajectories.

    Trajectories are grouped by their sampled injection pattern; each
    distinct pattern is simulated once and its shots drawn binomially.
    """
    thetas = [float(t) for t in thetas]
    if noise.is_ideal:
        p0 = qubit_zero_probability(_final_state(thetas, basis))
        return int(rng.binomial(shots, min(max(p0, 0.0), 1.0)))

    n_sites = 2 * (len(thetas) - 1)
    hit = rng.random((shots, n_sites)) < noise.p
    which = rng.integers(15, size=(shots, n_sites))
    codes = np.where(hit, which + 1, 0)
    patterns, counts = np.unique(codes, axis=0, return_counts=True)
    zeros = 0
    for pattern, count in zip(patterns, counts):
        p0 = qubit_zero_probability(_final_state(thetas, basis, pattern.tolist()))
        zeros += int(rng.binomial(int(count), min(max(p0, 0.0), 1.0)))
    return zeros


def estimate_sum(thetas, config: ProtocolConfig) -> SumEstimate:
    """Estimate the phase sum from shot statistics.

    Shots are split evenly between the cos and sin configurations. Each
    configuration draws from its own stream derived from ``config.seed``.
    """
    thetas = list(thetas)
    _check_sum(thetas)
    if len(thetas) != config.cluster_size:
        raise ValueError(f"expected {config.cluster_size} phases, got {len(thetas)}")
    n_cos = config.shots // 2
    n_sin = config.shots - n_cos
    z_cos = count_zeros(thetas, DecodeBasis.COS, n_cos, config.noise,
                        derive_rng(config.seed, "estimate", DecodeBasis.COS.value))
    z_sin = count_zeros(thetas, DecodeBasis.SIN, n_sin, config.noise,
                        derive_rng(config.seed, "estimate", DecodeBasis.SIN.value))
    return estimate_from_counts(z_cos, n_cos, z_sin, n_sin)


def estimate_from_counts(z_cos: int, n_cos: int, z_sin: int, n_sin: int) -> SumEstimate:
    p0_cos = z_cos / n_cos
    p0_sin = z_sin / n_sin
    c = 2.0 * p0_cos - 1.0
    s = 2.0 * p0_sin - 1.0
    if c == 0.0 and s == 0.0:
        return SumEstimate(0.0, p0_cos, p0_sin, n_cos + n_sin, low_confidence=True)
    sigma = min(max(math.atan2(s, c), -math.pi), math.pi)
    return SumEstimate(sigma, p0_cos, p0_sin, n_cos + n_sin)


def population(state: StateVector) -> float:
    """Probability mass on |0...0> and |1...1>."""
    a = state.amplitudes
    return float(abs(a[0]) ** 2 + abs(a[-1]) ** 2)


def ghz_population_samples(
    k: int,
    noise: NoiseModel,
    num_trajectories: int,
    rng: np.random.Generator,
    backend: str = "frame",
) -> np.ndarray:
    """Per-trajectory GHZ population of the noisy preparation circuit.

    ``backend="statevector"`` simulates each trajectory explicitly;
    ``backend="frame"`` tracks the accumulated Pauli of every trajectory
    through the (Clifford) preparation circuit, which is exact and scales to
    any k. Each trajectory's population is 0 or 1 either way.
    """
    _check_k(k)
    if num_trajectories < 1:
        raise ValueError("num_trajectories must be >= 1")
    if backend == "statevector":
        return np.array(
            [population(noisy_build_ghz(k, noise, rng)) for _ in range(num_trajectories)]
        )
    if backend != "frame":
        raise ValueError(f"unknown backend {backend!r}")
    x = np.zeros((num_trajectories, k), dtype=bool)
    z = np.zeros((num_trajectories, k), dtype=bool)
    if not noise.is_ideal:
        for c, t in preparation_cnots(k):
            frame_propagate_cnot(x, z, c, t)
            frame_inject_depolarizing(x, z, c, t, noise.p, rng)
    # X-part all-zero or all-one maps {|0..0>, |1..1>} onto itself
    same = np.all(x == x[:, :1], axis=1)
    return same.astype(np.float64)


def ghz_population_fidelity(
    k: int,
    noise: NoiseModel,
    num_trajectories: int,
    rng: np.random.Generator,
    backend: str = "frame",
) -> float:
    return float(np.mean(ghz_population_samples(k, noise, num_trajectories, rng, backend)))
