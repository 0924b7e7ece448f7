"""Fidelity scaling of global versus clustered GHZ preparation.

Small systems (n <= ``direct_cap``) are simulated directly; larger ones are
extrapolated from the largest direct size with ``F_n = F_{n-1} (1 - p)^2``.
A clustered deployment of N clients in clusters of k succeeds only if every
cluster does, so its fidelity is ``F(k) ** (N / k)``.

Note the two models disagree: population fidelity ignores Z-type errors,
so direct simulation decays more slowly than the recurrence predicts. Both
are reported as-is.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .protocol import ghz_population_samples
from .quantum import MAX_QUBITS, NoiseModel
from .rng import derive_rng

DEFAULT_DIRECT_CAP = 20
DEFAULT_TRAJECTORIES = 50_000
FIG1_P = (0.005, 0.01)
FIG2_P = (0.0, 0.005, 0.01, 0.015, 0.02)
FIG2_N = (4, 8, 20, 40, 100)
CSV_HEADER = ("method", "n", "k", "p", "fidelity", "stderr", "trajectories")


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float


@dataclass(frozen=True)
class FidelityRow:
    method: str  # Direct | Extrapolated | Analytic | CqsaProduct
    n: int
    k: int
    p: float
    fidelity: float
    stderr: float
    trajectories: int


@dataclass
class FidelityCurve:
    rows: list = field(default_factory=list)

    def sorted(self) -> "FidelityCurve":
        order = {"CqsaProduct": 0, "Direct": 1, "Extrapolated": 1, "Analytic": 2}
        return FidelityCurve(sorted(self.rows, key=lambda r: (r.p, r.k, r.n, order[r.method], r.method)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([r.method, r.n, r.k, repr(float(r.p)), repr(float(r.fidelity)),
                             repr(float(r.stderr)), r.trajectories])
        return buf.getvalue()

    def select(self, **kw) -> list:
        return [r for r in self.rows if all(getattr(r, a) == v for a, v in kw.items())]


def _stderr(samples: np.ndarray) -> float:
    if samples.size < 2:
        return 0.0
    return float(np.std(samples, ddof=1) / math.sqrt(samples.size))


def direct_fidelity(
    n: int,
    p: float,
    trajectories: int,
    rng: np.random.Generator,
    direct_cap: int = DEFAULT_DIRECT_CAP,
    backend: str = "frame",
) -> Estimate:
    """Monte-Carlo GHZ population fidelity with its standard error."""
    if not 1 <= direct_cap <= MAX_QUBITS:
        raise ValueError(f"direct_cap must be in [1, {MAX_QUBITS}]")
    if n > direct_cap:
        raise ValueError(f"n={n} exceeds the direct-simulation cap {direct_cap}")
    samples = ghz_population_samples(n, NoiseModel(p), trajectories, rng, backend)
    return Estimate(float(np.mean(samples)), _stderr(samples))


def extrapolated_fidelity(n: int, p: float, base: tuple[int, float]) -> float:
    n0, f0 = base
    if n <= n0:
        raise ValueError(f"extrapolation target n={n} must exceed the base size {n0}")
    return f0 * (1.0 - p) ** (2 * (n - n0))


def analytic_fidelity(N: int, epsilon: float) -> float:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    return (1.0 - epsilon) ** N


def _size_fidelity(n, p, trajectories, rng, direct_cap, backend, pure_recurrence) -> tuple[Estimate, str]:
    if pure_recurrence:
        if n == 1:
            return Estimate(1.0, 0.0), "Extrapolated"
        return Estimate(extrapolated_fidelity(n, p, (1, 1.0)), 0.0), "Extrapolated"
    if n <= direct_cap:
        return direct_fidelity(n, p, trajectories, rng, direct_cap, backend), "Direct"
    base = direct_fidelity(direct_cap, p, trajectories, rng, direct_cap, backend)
    factor = extrapolated_fidelity(n, p, (direct_cap, 1.0))
    return Estimate(base.value * factor, base.stderr * factor), "Extrapolated"


def cluster_count(N: int, k: int) -> tuple[int, bool]:
    """(number of clusters, exact division?)"""
    if not 1 <= k <= N:
        raise ValueError(f"cluster size must be in [1, N], got k={k}, N={N}")
    return -(-N // k), N % k == 0


def _product(cluster: Estimate, m: int) -> Estimate:
    value = cluster.value ** m
    stderr = m * cluster.value ** (m - 1) * cluster.stderr if m > 1 else cluster.stderr
    return Estimate(value, stderr)


def global_fidelity(
    N: int,
    p: float,
    trajectories: int,
    rng: np.random.Generator,
    direct_cap: int = DEFAULT_DIRECT_CAP,
    backend: str = "frame",
    pure_recurrence: bool = False,
) -> Estimate:
    """Fidelity of a single N-qubit GHZ state (direct or hybrid)."""
    return _size_fidelity(N, p, trajectories, rng, direct_cap, backend, pure_recurrence)[0]


def cqsa_total_fidelity(
    N: int,
    k: int,
    p: float,
    trajectories: int,
    rng: np.random.Generator,
    direct_cap: int = DEFAULT_DIRECT_CAP,
    backend: str = "frame",
    pure_recurrence: bool = False,
) -> Estimate:
    """``F_cluster(k) ** M`` with ``M = ceil(N / k)``.

    Use :func:`cluster_count` to learn whether ``k`` divides ``N``.
    """
    m, _ = cluster_count(N, k)
    cluster = _size_fidelity(k, p, trajectories, rng, direct_cap, backend, pure_recurrence)[0]
    return _product(cluster, m)


@dataclass
class FidelityStudy:
    """Shared settings plus a cache of per-(size, p) cluster fidelities.

    Each (size, p) point draws from its own stream derived from ``seed``, so
    a clustered and a global curve that need the same size reuse one
    estimate, and results do not depend on evaluation order.
    """

    trajectories: int = DEFAULT_TRAJECTORIES
    seed: int = 0
    direct_cap: int = DEFAULT_DIRECT_CAP
    backend: str = "frame"
    pure_recurrence: bool = False
    threads: int = 1
    _cache: dict = field(default_factory=dict, repr=False)

    def size_fidelity(self, n: int, p: float) -> tuple[Estimate, str]:
        key = (int(n), float(p))
        if key not in self._cache:
            self._cache[key] = self._compute(*key)
        return self._cache[key]

    def prefetch(self, points) -> None:
        points = sorted({(int(n), float(p)) for n, p in points} - set(self._cache))
        if self.threads > 1 and len(points) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                results = list(pool.map(lambda np_: self._compute(*np_), points))
            for point, res in zip(points, results):
                self._cache[point] = res
        else:
            for n, p in points:
                self.size_fidelity(n, p)

    def _compute(self, n, p):
        # keyed by the directly simulated size so hybrid points share the base run
        base_n = min(n, self.direct_cap) if not self.pure_recurrence else n
        rng = derive_rng(self.seed, "fidelity", base_n, float(p))
        return _size_fidelity(n, p, self.trajectories, rng, self.direct_cap, self.backend,
                              self.pure_recurrence)

    def global_row(self, N: int, p: float, k: int) -> FidelityRow:
        est, method = self.size_fidelity(N, p)
        return FidelityRow(method, N, k, p, est.value, est.stderr, self._traj(method))

    def cqsa_row(self, N: int, k: int, p: float) -> FidelityRow:
        m, _ = cluster_count(N, k)
        cluster, _ = self.size_fidelity(k, p)
        est = _product(cluster, m)
        return FidelityRow("CqsaProduct", N, k, p, est.value, est.stderr, self.trajectories)

    def _traj(self, method: str) -> int:
        return 0 if self.pure_recurrence else self.trajectories

    def seam_gap(self, p: float) -> dict:
        """Direct value at the cap against one recurrence step from cap - 1."""
        cap = self.direct_cap
        below = direct_fidelity(cap - 1, p, self.trajectories, derive_rng(self.seed, "seam", cap - 1, p),
                                cap, self.backend)
        at = direct_fidelity(cap, p, self.trajectories, derive_rng(self.seed, "seam", cap, p),
                             cap, self.backend)
        predicted = extrapolated_fidelity(cap, p, (cap - 1, below.value))
        sigma = math.hypot(at.stderr, below.stderr * (1 - p) ** 2)
        gap = at.value - predicted
        return {"p": p, "direct": at.value, "extrapolated": predicted, "gap": gap,
                "sigma": sigma, "z": gap / sigma if sigma > 0 else 0.0}


def factors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def scan_figure1(
    study: FidelityStudy,
    N: int = 60,
    p_list=FIG1_P,
    k_list=None,
) -> FidelityCurve:
    """Clustered and global fidelity against cluster size, one pair of rows per (p, k)."""
    k_list = factors(N) if k_list is None else list(k_list)
    study.prefetch([(k, p) for p in p_list for k in k_list] + [(N, p) for p in p_list])
    rows = []
    for p in p_list:
        for k in k_list:
            rows.append(study.cqsa_row(N, k, p))
            rows.append(study.global_row(N, p, k))
    return FidelityCurve(rows)


def scan_figure2(
    study: FidelityStudy,
    k: int = 4,
    p_grid=FIG2_P,
    N_grid=FIG2_N,
) -> FidelityCurve:
    """Clustered and global surfaces over (p, N) for a fixed cluster size."""
    if any(not 0.0 <= p <= 0.02 for p in p_grid):
        raise ValueError("figure-2 noise grid must lie in [0, 0.02]")
    study.prefetch([(k, p) for p in p_grid] + [(N, p) for p in p_grid for N in N_grid])
    rows = []
    for p in p_grid:
        for N in N_grid:
            rows.append(study.cqsa_row(N, k, p))
            rows.append(study.global_row(N, p, k))
    return FidelityCurve(rows)


def analytic_rows(N: int, k_list, epsilon: float) -> list[FidelityRow]:
    """Per-qubit error model ``(1 - eps)^n`` for each cluster size."""
    return [FidelityRow("Analytic", k, k, epsilon, analytic_fidelity(k, epsilon), 0.0, 0)
            for k in k_list] + [FidelityRow("Analytic", N, N, epsilon, analytic_fidelity(N, epsilon), 0.0, 0)]
