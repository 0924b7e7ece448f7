"""Desk-scale federated learning with clustered quantum secure aggregation.

The learning task is linear regression with squared loss; each client holds
its own Gaussian design matrix. Each round runs the full pipeline:

    broadcast -> local gradient steps -> attacks -> w_max exchange ->
    random partition -> per-coordinate blind summation per cluster ->
    decode -> robust filter -> global step

Per-client updates exist only inside :func:`run_round`; reports carry
cluster-level quantities only.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .clustering import apply_dropouts, fisher_yates_partition, max_cluster_size
from .encoding import ModelUpdate, clip_to_bound, decode_sum, encode_update, global_max, local_max, make_scaling
from .errors import ConfigError
from .protocol import ProtocolConfig, estimate_sum
from .quantum import MAX_QUBITS, NoiseModel
from .rng import derive_rng, derive_seed
from .robust import ClusterAggregate, FilterConfig, FilterVerdict, FILTERS, robust_aggregate

ATTACKS = ("none", "sign_flip", "scaled_noise", "constant_drift")
CHANNELS = ("exact", "shot_noise", "noisy")
DECLARE_POLICIES = ("honest", "attacked")


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "none"
    magnitude: float = 1.0
    byzantine_ids: frozenset = frozenset()
    # what Byzantine clients report in the w_max exchange: the bound of
    # their honest update (attack gets clipped) or of the attacked one
    declare: str = "honest"

    def __post_init__(self):
        if self.kind not in ATTACKS:
            raise ConfigError(f"unknown attack kind {self.kind!r}", "attack.kind")
        if self.declare not in DECLARE_POLICIES:
            raise ConfigError(f"unknown declare policy {self.declare!r}", "attack.declare")
        object.__setattr__(self, "byzantine_ids", frozenset(self.byzantine_ids))


@dataclass(frozen=True)
class FLConfig:
    num_clients: int = 20
    cluster_size: int = 4
    dim: int = 8
    rounds: int = 50
    learning_rate: float = 0.1
    samples_per_client: int = 50
    server_samples: int = 20
    label_noise: float = 0.01
    channel: str = "exact"
    shots: int = 100_000
    noise_p: float = 0.0
    dropout_prob: float = 0.0
    seed: int = 0
    attack: AttackConfig = field(default_factory=AttackConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)

    def __post_init__(self):
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(f"{key}: {msg}", key)

        need(self.num_clients >= 2, "num_clients", "must be >= 2")
        need(2 <= self.cluster_size <= min(self.num_clients, MAX_QUBITS), "cluster_size",
             f"must be in [2, min(num_clients, {MAX_QUBITS})]")
        need(self.dim >= 1, "dim", "must be >= 1")
        need(self.rounds >= 1, "rounds", "must be >= 1")
        need(self.learning_rate > 0, "learning_rate", "must be positive")
        need(self.samples_per_client >= 1, "samples_per_client", "must be >= 1")
        need(self.server_samples >= 1, "server_samples", "must be >= 1")
        need(self.label_noise >= 0, "label_noise", "must be nonnegative")
        need(self.channel in CHANNELS, "channel", f"must be one of {CHANNELS}")
        need(self.shots >= 2, "shots", "must be >= 2")
        need(0 <= self.noise_p <= 1, "noise_p", "must be in [0, 1]")
        need(0 <= self.dropout_prob < 1, "dropout_prob", "must be in [0, 1)")
        need(max_cluster_size(self.num_clients, self.cluster_size) <= MAX_QUBITS, "cluster_size",
             "remainder merge would exceed the simulator cap")
        bad = [c for c in self.attack.byzantine_ids if not 0 <= c < self.num_clients]
        need(not bad, "attack.byzantine_ids", f"unknown client ids {bad}")

    @property
    def noise(self) -> NoiseModel:
        return NoiseModel(self.noise_p if self.channel == "noisy" else 0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attack"]["byzantine_ids"] = sorted(self.attack.byzantine_ids)
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "FLConfig":
        """Build from a JSON-style mapping; unknown or mistyped keys raise ConfigError."""
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw = dict(raw)
        attack = _section(raw.pop("attack", {}), "attack", AttackConfig, extra=("num_byzantine",))
        filt = _section(raw.pop("filter", {}), "filter", FilterConfig)
        kwargs = _typed_fields(raw, cls, "", skip=("attack", "filter"))
        try:
            filt_cfg = FilterConfig(**filt)
        except ValueError as exc:
            raise ConfigError(str(exc), "filter.name") from None
        return cls(attack=_build_attack(attack), filter=filt_cfg, **kwargs)


def _typed_fields(raw: dict, cls, prefix: str, skip=(), extra=()) -> dict:
    known = {f.name: f for f in fields(cls) if f.name not in skip}
    out = {}
    for key, value in raw.items():
        if key in extra:
            out[key] = value
            continue
        if key not in known:
            raise ConfigError(f"unknown config key {prefix + key!r}", prefix + key)
        default = known[key].default
        if isinstance(default, bool) or isinstance(value, bool):
            ok = isinstance(value, bool) and isinstance(default, bool)
        elif isinstance(default, int):
            ok = isinstance(value, int)
        elif isinstance(default, float):
            ok = isinstance(value, (int, float))
            value = float(value) if ok else value
        elif isinstance(default, str):
            ok = isinstance(value, str)
        else:
            ok = isinstance(value, list)
        if not ok:
            raise ConfigError(f"config key {prefix + key!r} has wrong type {type(value).__name__}",
                              prefix + key)
        out[key] = value
    return out


def _section(raw, name, cls, extra=()) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{name!r} must be an object", name)
    return _typed_fields(raw, cls, name + ".", extra=extra)


def _build_attack(options: dict) -> AttackConfig:
    options = dict(options)
    n_byz = options.pop("num_byzantine", None)
    if n_byz is not None:
        if "byzantine_ids" in options:
            raise ConfigError("give either attack.num_byzantine or attack.byzantine_ids", "attack.num_byzantine")
        if not isinstance(n_byz, int) or isinstance(n_byz, bool) or n_byz < 0:
            raise ConfigError("attack.num_byzantine must be a nonnegative integer", "attack.num_byzantine")
        options["byzantine_ids"] = range(n_byz)
    return AttackConfig(**options)


def load_config(path: str) -> FLConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return FLConfig.from_dict(raw)


# -- task ---------------------------------------------------------------------

@dataclass(frozen=True)
class ClientData:
    client_id: int
    features: np.ndarray
    targets: np.ndarray


@dataclass(frozen=True)
class SyntheticTask:
    true_weights: np.ndarray
    clients: tuple
    server: ClientData
    label_noise: float

    @classmethod
    def generate(cls, config: FLConfig) -> "SyntheticTask":
        rng = derive_rng(config.seed, "task")
        w_star = rng.standard_normal(config.dim)

        def make(cid, n):
            x = rng.standard_normal((n, config.dim))
            y = x @ w_star + config.label_noise * rng.standard_normal(n)
            return ClientData(cid, x, y)

        clients = tuple(make(c, config.samples_per_client) for c in range(config.num_clients))
        server = make(-1, config.server_samples)
        return cls(w_star, clients, server, config.label_noise)

    def loss(self, w) -> float:
        """Mean squared error over the union of client data."""
        x = np.concatenate([c.features for c in self.clients])
        y = np.concatenate([c.targets for c in self.clients])
        r = x @ w - y
        return float(np.mean(r * r))


def mse_gradient(data: ClientData, w) -> np.ndarray:
    x, y = data.features, data.targets
    if len(y) == 0:
        raise ValueError(f"client {data.client_id} has no data")
    return (2.0 / len(y)) * (x.T @ (x @ w - y))


def local_update(client: ClientData, w_t, learning_rate: float) -> ModelUpdate:
    """One full-batch gradient step: ``-lr * grad MSE(w_t)``."""
    return ModelUpdate(-learning_rate * mse_gradient(client, np.asarray(w_t, dtype=np.float64)),
                       client.client_id)


def apply_attack(update: ModelUpdate, attack: AttackConfig, rng: np.random.Generator) -> ModelUpdate:
    if attack.kind == "none" or update.client_id not in attack.byzantine_ids:
        return update
    w = update.weights
    bound = local_max(w)
    if attack.kind == "sign_flip":
        out = -attack.magnitude * w
    elif attack.kind == "scaled_noise":
        out = attack.magnitude * bound * rng.choice([-1.0, 1.0], size=w.size)
    else:
        out = attack.magnitude * bound * np.ones_like(w)
    return ModelUpdate(out, update.client_id)


# -- rounds -------------------------------------------------------------------

@dataclass(frozen=True)
class RoundReport:
    round: int
    global_loss: float
    verdict: FilterVerdict
    cluster_sums: dict
    cluster_sizes: dict
    estimation_error: dict
    dropouts: tuple
    invalid_clusters: tuple
    w_max: float
    clipped_coordinates: int
    failed: bool

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "global_loss": self.global_loss,
            "verdict": self.verdict.to_dict(),
            "cluster_sums": {str(k): list(map(float, v)) for k, v in self.cluster_sums.items()},
            "cluster_sizes": {str(k): v for k, v in self.cluster_sizes.items()},
            "estimation_error": self.estimation_error,
            "dropouts": list(self.dropouts),
            "invalid_clusters": list(self.invalid_clusters),
            "w_max": self.w_max,
            "clipped_coordinates": self.clipped_coordinates,
            "failed": self.failed,
        }


def _phase_sums(thetas: np.ndarray, config: FLConfig, t: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """(estimated, exact) per-coordinate phase sums for one cluster."""
    exact = np.array([math.fsum(col) for col in thetas.T])
    if config.channel == "exact":
        return exact, exact
    k = thetas.shape[0]
    est = np.empty_like(exact)
    for i in range(thetas.shape[1]):
        pc = ProtocolConfig(k, config.shots, config.noise, derive_seed(config.seed, "qsa", t, j, i))
        est[i] = estimate_sum(thetas[:, i], pc).sigma_hat
    return est, exact


def run_round(
    w_t: np.ndarray,
    t: int,
    config: FLConfig,
    task: SyntheticTask,
    threads: int = 1,
) -> tuple[np.ndarray, RoundReport]:
    """Execute round ``t`` from global model ``w_t``; returns ``(w_{t+1}, report)``."""
    n = config.num_clients
    drop_rng = derive_rng(config.seed, "dropout", t)
    dropped = tuple(c for c in range(n) if drop_rng.random() < config.dropout_prob)

    honest = [local_update(client, w_t, config.learning_rate) for client in task.clients]
    submitted = [apply_attack(u, config.attack, derive_rng(config.seed, "attack", t, u.client_id))
                 for u in honest]

    declared = []
    for h, s in zip(honest, submitted):
        byz = s.client_id in config.attack.byzantine_ids
        declared.append(local_max(h) if byz and config.attack.declare == "honest" else local_max(s))
    w_max = global_max(declared)
    clipped, n_clipped = [], 0
    for s in submitted:
        c, k = clip_to_bound(s, w_max)
        clipped.append(ModelUpdate(c, s.client_id))
        n_clipped += k

    assignment = fisher_yates_partition(range(n), config.cluster_size,
                                        derive_rng(config.seed, "partition", t), round=t)
    assignment = apply_dropouts(assignment, dropped)
    ctx = make_scaling(max_cluster_size(n, config.cluster_size), w_max)

    def aggregate_cluster(j):
        members = assignment.clusters[j]
        thetas = np.stack([encode_update(clipped[c], ctx) for c in members])
        est, exact = _phase_sums(thetas, config, t, j)
        agg = ClusterAggregate(j, est, decode_sum(est, ctx), len(members))
        return agg, est - exact

    valid = assignment.valid_indices
    if ctx.degenerate:
        results = [(ClusterAggregate(j, np.zeros(config.dim), np.zeros(config.dim),
                                     len(assignment.clusters[j])), np.zeros(config.dim)) for j in valid]
    elif threads > 1 and len(valid) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(aggregate_cluster, valid))
    else:
        results = [aggregate_cluster(j) for j in valid]
    aggregates = [r[0] for r in results]
    errors = np.concatenate([r[1] for r in results]) if results else np.zeros(0)

    root = None
    if config.filter.name == "fltrust":
        root = -config.learning_rate * mse_gradient(task.server, w_t)
    try:
        combined, verdict = robust_aggregate(config.filter, aggregates, root)
    except ValueError:
        # too few surviving clusters for the chosen rule
        combined, verdict = None, FilterVerdict(frozenset(), frozenset(a.cluster_index for a in aggregates))

    failed = combined is None
    w_next = w_t.copy() if failed else w_t + combined
    report = RoundReport(
        round=t,
        global_loss=task.loss(w_next),
        verdict=verdict,
        cluster_sums={a.cluster_index: a.weight_sum.copy() for a in aggregates},
        cluster_sizes={j: len(c) for j, c in enumerate(assignment.clusters)},
        estimation_error=_error_stats(errors),
        dropouts=dropped,
        invalid_clusters=tuple(sorted(assignment.invalid)),
        w_max=w_max,
        clipped_coordinates=n_clipped,
        failed=failed,
    )
    return w_next, report


def _error_stats(errors: np.ndarray) -> dict:
    if errors.size == 0:
        return {"count": 0, "mean": 0.0, "rmse": 0.0, "max_abs": 0.0}
    return {
        "count": int(errors.size),
        "mean": float(np.mean(errors)),
        "rmse": float(np.sqrt(np.mean(errors ** 2))),
        "max_abs": float(np.max(np.abs(errors))),
    }


@dataclass
class ExperimentResult:
    config: FLConfig
    initial_loss: float
    reports: list
    final_weights: np.ndarray
    true_weights: np.ndarray

    @property
    def final_loss(self) -> float:
        return self.reports[-1].global_loss

    @property
    def failed_rounds(self) -> list[int]:
        return [r.round for r in self.reports if r.failed]

    def summary(self) -> dict:
        losses = [r.global_loss for r in self.reports]
        return {
            "config": self.config.to_dict(),
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "min_loss": min(losses),
            "loss_reduction": self.initial_loss / self.final_loss if self.final_loss > 0 else math.inf,
            "rounds": len(self.reports),
            "failed_rounds": self.failed_rounds,
            "mean_accepted_clusters": float(np.mean([len(r.verdict.accepted) for r in self.reports])),
            "final_weights": [float(v) for v in self.final_weights],
            "distance_to_truth": float(np.linalg.norm(self.final_weights - self.true_weights)),
        }

    def round_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(ROUND_CSV_HEADER)
        for r in self.reports:
            writer.writerow([
                r.round, repr(r.global_loss), len(r.verdict.accepted), len(r.verdict.rejected),
                " ".join(str(i) for i in sorted(r.verdict.accepted)),
                repr(r.estimation_error["mean"]), repr(r.estimation_error["rmse"]),
                repr(r.w_max), len(r.dropouts), int(r.failed),
            ])
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"


ROUND_CSV_HEADER = (
    "round", "loss", "accepted_clusters", "rejected_clusters", "accepted_ids",
    "estimation_error_mean", "estimation_error_rmse", "w_max", "dropouts", "failed",
)


def run_experiment(config: FLConfig, rounds: int | None = None, threads: int = 1) -> ExperimentResult:
    rounds = config.rounds if rounds is None else rounds
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    task = SyntheticTask.generate(config)
    w = np.zeros(config.dim)
    initial = task.loss(w)
    reports = []
    for t in range(rounds):
        w, report = run_round(w, t, config, task, threads)
        reports.append(report)
    return ExperimentResult(config, initial, reports, w, task.true_weights)


def write_outputs(result: ExperimentResult, out_dir: str) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "rounds.csv")
    json_path = os.path.join(out_dir, "summary.json")
    with open(csv_path, "w") as fh:
        fh.write(result.round_csv())
    with open(json_path, "w") as fh:
        fh.write(result.summary_json())
    return csv_path, json_path
