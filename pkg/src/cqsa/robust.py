"""Inter-cluster verification and Byzantine-robust aggregation rules.

All rules take a 2-d array (one row per cluster) of per-cluster *mean*
updates, see :func:`normalize_for_comparison`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import RoundFailure, UndefinedSimilarity


class KrumGuaranteeWarning(UserWarning):
    """Fewer than 2f + 3 candidates: Krum runs but its robustness bound does not hold."""


@dataclass(frozen=True)
class ClusterAggregate:
    cluster_index: int
    theta_sum: np.ndarray
    weight_sum: np.ndarray
    member_count: int


@dataclass(frozen=True)
class FilterVerdict:
    accepted: frozenset
    rejected: frozenset
    scores: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return not self.accepted

    def to_dict(self) -> dict:
        return {
            "accepted": sorted(self.accepted),
            "rejected": sorted(self.rejected),
            "scores": {k: [float(v) for v in vals] for k, vals in self.scores.items()},
        }


def normalize_for_comparison(aggregate: ClusterAggregate) -> np.ndarray:
    return np.asarray(aggregate.weight_sum, dtype=np.float64) / aggregate.member_count


def _matrix(vectors) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("expected a non-empty list of equal-length vectors")
    return x


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedSimilarity("cosine similarity of a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def euclidean_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def pairwise_sq_distances(vectors) -> np.ndarray:
    x = _matrix(vectors)
    diff = x[:, None, :] - x[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def krum_scores(vectors, f: int) -> np.ndarray:
    """Sum of squared distances to the ``n - f - 2`` nearest other candidates."""
    x = _matrix(vectors)
    n = x.shape[0]
    if f < 0:
        raise ValueError("f must be nonnegative")
    neighbours = n - f - 2
    if neighbours < 1:
        raise ValueError(f"Krum needs n - f - 2 >= 1, got n={n}, f={f}")
    if n < 2 * f + 3:
        warnings.warn(f"n={n} < 2f+3={2 * f + 3}", KrumGuaranteeWarning, stacklevel=2)
    d = pairwise_sq_distances(x)
    scores = np.empty(n)
    for i in range(n):
        others = np.sort(np.delete(d[i], i))
        scores[i] = others[:neighbours].sum()
    return scores


def krum(vectors, f: int) -> int:
    scores = krum_scores(vectors, f)
    return int(np.argsort(scores, kind="stable")[0])


def multi_krum(vectors, f: int, m: int) -> list[int]:
    """Indices of the ``m`` lowest Krum scores (ties to the lower index)."""
    x = _matrix(vectors)
    if not 1 <= m <= x.shape[0] - f - 2:
        raise ValueError(f"m must be in [1, n - f - 2], got m={m}")
    scores = krum_scores(x, f)
    return [int(i) for i in np.argsort(scores, kind="stable")[:m]]


def coordinate_median(vectors) -> np.ndarray:
    return np.median(_matrix(vectors), axis=0)


def trimmed_mean(vectors, beta: float) -> np.ndarray:
    x = _matrix(vectors)
    n = x.shape[0]
    if not 0 <= beta < 0.5:
        raise ValueError(f"beta must be in [0, 0.5), got {beta}")
    t = int(math.floor(beta * n))
    if n - 2 * t < 1:
        raise ValueError(f"trimming {t} from each tail of {n} values leaves nothing")
    return np.sort(x, axis=0)[t:n - t].mean(axis=0)


def fltrust_trust_scores(vectors, root_update) -> np.ndarray:
    x = _matrix(vectors)
    root = np.asarray(root_update, dtype=np.float64)
    if np.linalg.norm(root) == 0:
        raise UndefinedSimilarity("FLTrust root update is zero")
    scores = np.zeros(x.shape[0])
    for i, v in enumerate(x):
        if np.linalg.norm(v) > 0:
            scores[i] = max(0.0, cosine_similarity(v, root))
    return scores


def fltrust_aggregate(vectors, root_update) -> np.ndarray:
    """Trust-weighted average of candidates rescaled to the root-update norm."""
    x = _matrix(vectors)
    root = np.asarray(root_update, dtype=np.float64)
    trust = fltrust_trust_scores(x, root)
    if trust.sum() == 0:
        raise RoundFailure("FLTrust: no candidate has positive trust")
    root_norm = np.linalg.norm(root)
    out = np.zeros_like(root)
    for t, v in zip(trust, x):
        if t > 0:
            out += t * v * (root_norm / np.linalg.norm(v))
    return out / trust.sum()


MULTI_STAT_INDICATORS = ("distance", "cosine", "variance", "min", "max", "count")


def multi_stat_indicators(vectors) -> dict[str, np.ndarray]:
    x = _matrix(vectors)
    ref = np.median(x, axis=0)
    dev = x - ref
    mad = np.median(np.abs(dev), axis=0)
    ref_norm = np.linalg.norm(ref)
    cos = np.empty(x.shape[0])
    for i, v in enumerate(x):
        nv = np.linalg.norm(v)
        if nv == 0 or ref_norm == 0:
            cos[i] = 1.0 if nv == ref_norm else 0.0
        else:
            cos[i] = cosine_similarity(v, ref)
    return {
        "distance": np.linalg.norm(dev, axis=1),
        "cosine": cos,
        "variance": np.var(x, axis=1),
        "min": np.min(x, axis=1),
        "max": np.max(x, axis=1),
        "count": np.sum(np.abs(dev) > 3.0 * mad, axis=1).astype(np.float64),
    }


def tukey_outliers(values, whisker: float = 1.5) -> np.ndarray:
    """Mask of values outside median +/- whisker * IQR."""
    v = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    spread = whisker * (q3 - q1)
    return (v < med - spread) | (v > med + spread)


def multi_stat_filter(vectors) -> FilterVerdict:
    """Reject any candidate that is a Tukey outlier on one of six indicators.

    Verdict indices are row positions in ``vectors``.
    """
    x = _matrix(vectors)
    if x.shape[0] < 3:
        raise ValueError("multi-statistic filter needs at least 3 candidates")
    indicators = multi_stat_indicators(x)
    rejected = np.zeros(x.shape[0], dtype=bool)
    for values in indicators.values():
        rejected |= tukey_outliers(values)
    idx = range(x.shape[0])
    return FilterVerdict(
        accepted=frozenset(i for i in idx if not rejected[i]),
        rejected=frozenset(i for i in idx if rejected[i]),
        scores={name: values.tolist() for name, values in indicators.items()},
    )


# -- harness-facing dispatch ------------------------------------------------

FILTERS = ("accept_all", "krum", "multi_krum", "median", "trimmed_mean", "fltrust", "multi_stat")


@dataclass(frozen=True)
class FilterConfig:
    name: str = "accept_all"
    f: int = 1
    m: int = 2
    beta: float = 0.2

    def __post_init__(self):
        if self.name not in FILTERS:
            raise ValueError(f"unknown filter {self.name!r}; choose from {', '.join(FILTERS)}")


def weighted_mean(means: np.ndarray, counts, selected) -> np.ndarray:
    selected = sorted(selected)
    w = np.asarray([counts[i] for i in selected], dtype=np.float64)
    return (w[:, None] * means[selected]).sum(axis=0) / w.sum()


def robust_aggregate(
    config: FilterConfig,
    aggregates: list[ClusterAggregate],
    root_update=None,
) -> tuple[np.ndarray | None, FilterVerdict]:
    """Apply ``config`` to cluster aggregates.

    Selection rules (accept_all, krum, multi_krum, multi_stat) combine the
    accepted cluster means weighted by member count. Median, trimmed mean
    and FLTrust return their own combined vector. Verdict indices are
    ``cluster_index`` values. Returns ``(None, verdict)`` when every cluster
    is rejected.
    """
    if not aggregates:
        return None, FilterVerdict(frozenset(), frozenset())
    means = np.stack([normalize_for_comparison(a) for a in aggregates])
    counts = [a.member_count for a in aggregates]
    ids = [a.cluster_index for a in aggregates]
    positions = range(len(aggregates))
    name = config.name

    def verdict(accepted_pos, scores=None):
        acc = frozenset(ids[i] for i in accepted_pos)
        return FilterVerdict(acc, frozenset(ids) - acc, scores or {})

    if name == "accept_all":
        return weighted_mean(means, counts, positions), verdict(positions)
    if name == "krum":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", KrumGuaranteeWarning)
            scores = krum_scores(means, config.f)
        chosen = [int(np.argsort(scores, kind="stable")[0])]
        return weighted_mean(means, counts, chosen), verdict(chosen, {"krum": scores.tolist()})
    if name == "multi_krum":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", KrumGuaranteeWarning)
            scores = krum_scores(means, config.f)
        m = min(config.m, len(aggregates) - config.f - 2)
        chosen = [int(i) for i in np.argsort(scores, kind="stable")[:m]]
        return weighted_mean(means, counts, chosen), verdict(chosen, {"krum": scores.tolist()})
    if name == "median":
        return coordinate_median(means), verdict(positions)
    if name == "trimmed_mean":
        return trimmed_mean(means, config.beta), verdict(positions)
    if name == "fltrust":
        trust = fltrust_trust_scores(means, root_update)
        kept = [i for i in positions if trust[i] > 0]
        v = verdict(kept, {"trust": trust.tolist()})
        if not kept:
            return None, v
        return fltrust_aggregate(means, root_update), v
    if name == "multi_stat":
        inner = multi_stat_filter(means)
        v = verdict(sorted(inner.accepted), inner.scores)
        if not inner.accepted:
            return None, v
        return weighted_mean(means, counts, inner.accepted), v
    raise ValueError(f"unknown filter {name!r}")
