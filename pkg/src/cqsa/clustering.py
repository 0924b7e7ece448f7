"""Per-round random partition of clients into small clusters."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .quantum import MAX_QUBITS


@dataclass(frozen=True)
class ClusterAssignment:
    round: int
    clusters: tuple[tuple, ...]
    target_size: int
    invalid: frozenset = field(default_factory=frozenset)

    @property
    def num_clusters(self) -> int:
        return len(self.clusters)

    @property
    def valid_indices(self) -> list[int]:
        return [j for j in range(len(self.clusters)) if j not in self.invalid]

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.clusters]

    def members(self) -> list:
        return [cid for cluster in self.clusters for cid in cluster]

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "target_size": self.target_size,
            "clusters": [list(c) for c in self.clusters],
            "sizes": self.sizes,
            "invalid": sorted(self.invalid),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def fisher_yates(items, rng: np.random.Generator) -> list:
    """Uniform random permutation (Durstenfeld's in-place variant)."""
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = int(rng.integers(i + 1))
        out[i], out[j] = out[j], out[i]
    return out


def max_cluster_size(n: int, k: int) -> int:
    """Largest cluster that :func:`fisher_yates_partition` can produce."""
    return k + 1 if n % k == 1 and n > k else k


def fisher_yates_partition(client_ids, k: int, rng: np.random.Generator, round: int = 0) -> ClusterAssignment:
    """Shuffle, slice into groups of ``k``; a trailing singleton joins the previous group."""
    ids = list(client_ids)
    n = len(ids)
    if n < 2:
        raise ValueError(f"need at least 2 clients, got {n}")
    if len(set(ids)) != n:
        raise ValueError("client ids must be unique")
    if not 2 <= k <= min(n, MAX_QUBITS):
        raise ValueError(f"cluster size must be in [2, {min(n, MAX_QUBITS)}], got {k}")
    perm = fisher_yates(ids, rng)
    groups = [perm[i:i + k] for i in range(0, n, k)]
    if len(groups[-1]) == 1:
        last = groups.pop()
        groups[-1].extend(last)
    return ClusterAssignment(round, tuple(tuple(g) for g in groups), k)


def apply_dropouts(assignment: ClusterAssignment, dropped) -> ClusterAssignment:
    """Invalidate every cluster that lost a member."""
    dropped = set(dropped)
    hit = {j for j, cluster in enumerate(assignment.clusters) if dropped.intersection(cluster)}
    return ClusterAssignment(
        assignment.round,
        assignment.clusters,
        assignment.target_size,
        frozenset(assignment.invalid | hit),
    )
