"""Minimal state-vector simulator: H, CNOT, Rz, Paulis and depolarizing CNOTs.

Qubit 0 is the most significant bit of the basis-state index, so the state
``|q0 q1 ... q_{n-1}>`` lives at index ``int("q0q1...", 2)``.

Noise is realized by trajectories: a noisy CNOT applies the ideal gate and
then, with probability ``p``, one of the 15 non-identity two-qubit Paulis
chosen uniformly. RNG contract for :func:`apply_noisy_cnot`: exactly one
``rng.random()`` draw per call decides injection (drawn even when p == 0);
one ``rng.integers(15)`` draw follows only when a Pauli is injected.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

MAX_QUBITS = 24
NORM_ATOL = 1e-10


class PauliLabel(enum.Enum):
    I = "I"
    X = "X"
    Y = "Y"
    Z = "Z"

    @property
    def has_x(self) -> bool:
        return self in (PauliLabel.X, PauliLabel.Y)

    @property
    def has_z(self) -> bool:
        return self in (PauliLabel.Z, PauliLabel.Y)


# Index order of the 15 depolarizing terms: lexicographic over I, X, Y, Z
# on (control, target) with II removed.
TWO_QUBIT_PAULIS: tuple[tuple[PauliLabel, PauliLabel], ...] = tuple(
    pair for pair in itertools.product(PauliLabel, repeat=2)
    if pair != (PauliLabel.I, PauliLabel.I)
)

_PAIR_X = np.array([[a.has_x, b.has_x] for a, b in TWO_QUBIT_PAULIS], dtype=bool)
_PAIR_Z = np.array([[a.has_z, b.has_z] for a, b in TWO_QUBIT_PAULIS], dtype=bool)


@dataclass(frozen=True)
class NoiseModel:
    """Two-qubit depolarizing probability attached to every CNOT."""

    two_qubit_depolarizing_p: float = 0.0

    def __post_init__(self):
        p = self.two_qubit_depolarizing_p
        if not (0.0 <= p <= 1.0) or math.isnan(p):
            raise ValueError(f"depolarizing probability must be in [0, 1], got {p}")

    @property
    def p(self) -> float:
        return self.two_qubit_depolarizing_p

    @property
    def is_ideal(self) -> bool:
        return self.two_qubit_depolarizing_p == 0.0


IDEAL = NoiseModel(0.0)


@dataclass(frozen=True, eq=False)
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_size(self.num_qubits)
        if self.amplitudes.shape != (1 << self.num_qubits,):
            raise ValueError(
                f"expected {1 << self.num_qubits} amplitudes, got shape {self.amplitudes.shape}"
            )

    @classmethod
    def from_amplitudes(cls, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=np.complex128).copy()
        n = amps.size.bit_length() - 1
        if amps.ndim != 1 or amps.size != 1 << n:
            raise ValueError("amplitude count must be a power of two")
        if abs(np.sum(np.abs(amps) ** 2) - 1.0) > NORM_ATOL:
            raise ValueError("amplitudes are not normalized")
        return cls(n, amps)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sum(self.probabilities()))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.num_qubits)

    def allclose(self, other: "StateVector", atol: float = 1e-10) -> bool:
        return self.num_qubits == other.num_qubits and np.allclose(
            self.amplitudes, other.amplitudes, rtol=0.0, atol=atol
        )


def _check_size(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"num_qubits must be an integer in [1, {MAX_QUBITS}], got {n!r}")


def _check_qubit(state: StateVector, qubit: int) -> None:
    if not isinstance(qubit, (int, np.integer)) or not 0 <= qubit < state.num_qubits:
        raise IndexError(f"qubit {qubit!r} out of range for {state.num_qubits}-qubit state")


def _split(state: StateVector, qubit: int) -> np.ndarray:
    # (high bits, target bit, low bits) view of a fresh copy
    n = state.num_qubits
    return state.amplitudes.copy().reshape(1 << qubit, 2, 1 << (n - qubit - 1))


def _wrap(state: StateVector, view: np.ndarray) -> StateVector:
    return StateVector(state.num_qubits, view.reshape(-1))


def new_zero_state(num_qubits: int) -> StateVector:
    _check_size(num_qubits)
    amps = np.zeros(1 << num_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(int(num_qubits), amps)


def apply_h(state: StateVector, qubit: int) -> StateVector:
    _check_qubit(state, qubit)
    v = _split(state, qubit)
    a0 = v[:, 0, :].copy()
    a1 = v[:, 1, :]
    v[:, 0, :] = (a0 + a1) / math.sqrt(2.0)
    v[:, 1, :] = (a0 - a1) / math.sqrt(2.0)
    return _wrap(state, v)


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    _check_qubit(state, control)
    _check_qubit(state, target)
    if control == target:
        raise ValueError("control and target must differ")
    t = state.amplitudes.copy().reshape((2,) * state.num_qubits)
    index = [slice(None)] * state.num_qubits
    index[control] = 1
    index = tuple(index)
    # the control axis is dropped from the sliced view
    axis = target if target < control else target - 1
    t[index] = np.flip(t[index], axis=axis).copy()
    return StateVector(state.num_qubits, t.reshape(-1))


def apply_rz(state: StateVector, qubit: int, angle: float) -> StateVector:
    """diag(1, e^{i angle}) on ``qubit``."""
    _check_qubit(state, qubit)
    if not math.isfinite(angle):
        raise ValueError(f"rotation angle must be finite, got {angle}")
    v = _split(state, qubit)
    v[:, 1, :] *= complex(math.cos(angle), math.sin(angle))
    return _wrap(state, v)


def apply_pauli(state: StateVector, qubit: int, pauli: PauliLabel) -> StateVector:
    _check_qubit(state, qubit)
    pauli = PauliLabel(pauli)
    v = _split(state, qubit)
    if pauli is PauliLabel.X:
        v = v[:, ::-1, :].copy()
    elif pauli is PauliLabel.Z:
        v[:, 1, :] *= -1.0
    elif pauli is PauliLabel.Y:
        a0 = v[:, 0, :].copy()
        v[:, 0, :] = -1j * v[:, 1, :]
        v[:, 1, :] = 1j * a0
    return _wrap(state, v)


def apply_pauli_pair(state: StateVector, control: int, target: int, index: int) -> StateVector:
    """Apply the ``index``-th entry of :data:`TWO_QUBIT_PAULIS` to (control, target)."""
    pc, pt = TWO_QUBIT_PAULIS[index]
    return apply_pauli(apply_pauli(state, control, pc), target, pt)


def apply_noisy_cnot(
    state: StateVector,
    control: int,
    target: int,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> StateVector:
    out = apply_cnot(state, control, target)
    if rng.random() < noise.p:
        out = apply_pauli_pair(out, control, target, int(rng.integers(15)))
    return out


def sample_counts(state: StateVector, shots: int, rng: np.random.Generator) -> dict[str, int]:
    """Histogram of ``shots`` computational-basis measurements.

    Keys are bitstrings with qubit 0 first; outcomes never observed are
    omitted.
    """
    if not isinstance(shots, (int, np.integer)) or shots < 1:
        raise ValueError(f"shots must be a positive integer, got {shots!r}")
    probs = state.probabilities()
    counts = rng.multinomial(int(shots), probs / probs.sum())
    n = state.num_qubits
    return {format(int(i), f"0{n}b"): int(counts[i]) for i in np.flatnonzero(counts)}


def qubit_zero_probability(state: StateVector, qubit: int = 0) -> float:
    """Marginal probability of reading 0 on ``qubit``."""
    _check_qubit(state, qubit)
    v = state.probabilities().reshape(1 << qubit, 2, -1)
    return float(v[:, 0, :].sum() / v.sum())


# -- Pauli-frame propagation ------------------------------------------------
#
# For Clifford-only circuits (H/CNOT) a trajectory's final state is
# P * (ideal output) for an accumulated Pauli P. Tracking the X and Z bits
# of P for many trajectories at once is exact and costs O(trajectories *
# qubits) instead of O(2^n).

def frame_propagate_cnot(x: np.ndarray, z: np.ndarray, control: int, target: int) -> None:
    """Conjugate the batch of frames in place through CNOT(control -> target)."""
    x[:, target] ^= x[:, control]
    z[:, control] ^= z[:, target]


def frame_inject_depolarizing(
    x: np.ndarray,
    z: np.ndarray,
    control: int,
    target: int,
    p: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample a depolarizing event on (control, target) for every frame.

    Draws one uniform array and one categorical array of length
    ``len(x)``. Returns the boolean injection mask.
    """
    count = x.shape[0]
    hit = rng.random(count) < p
    which = rng.integers(15, size=count)
    sel = hit[:, None]
    x[:, [control, target]] ^= _PAIR_X[which] & sel
    z[:, [control, target]] ^= _PAIR_Z[which] & sel
    return hit
