"""Small worked examples for each module, checked by hand-computed values."""

import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

import oracles
from cqsa.clustering import apply_dropouts, fisher_yates_partition
from cqsa.encoding import ModelUpdate, decode_sum, encode_update, global_max, local_max, make_scaling
from cqsa.fidelity import analytic_fidelity, cqsa_total_fidelity, extrapolated_fidelity, global_fidelity
from cqsa.harness import AttackConfig, FLConfig, SyntheticTask, apply_attack, local_update, run_experiment, run_round
from cqsa.protocol import (
    DecodeBasis,
    ProtocolConfig,
    build_ghz,
    count_zeros,
    decode,
    encode_phases,
    estimate_sum,
    ghz_population_fidelity,
    noisy_build_ghz,
    run_protocol_trajectory,
)
from cqsa.quantum import (
    IDEAL,
    NoiseModel,
    PauliLabel,
    StateVector,
    apply_cnot,
    apply_h,
    apply_noisy_cnot,
    apply_pauli,
    apply_pauli_pair,
    apply_rz,
    frame_inject_depolarizing,
    new_zero_state,
    sample_counts,
)
from cqsa.robust import (
    ClusterAggregate,
    FilterConfig,
    KrumGuaranteeWarning,
    coordinate_median,
    cosine_similarity,
    euclidean_distance,
    fltrust_aggregate,
    fltrust_trust_scores,
    krum,
    krum_scores,
    multi_krum,
    multi_stat_filter,
    normalize_for_comparison,
    trimmed_mean,
)

R = 1 / math.sqrt(2)


def sv(*amps):
    return StateVector.from_amplitudes(np.array(amps, dtype=complex))


# -- quantum core ----------------------------------------------------------------

def test_gate_truth_tables():
    np.testing.assert_array_equal(new_zero_state(1).amplitudes, [1, 0])
    assert apply_h(new_zero_state(1), 0).allclose(sv(R, R))
    assert apply_h(sv(0, 1), 0).allclose(sv(R, -R))
    assert apply_cnot(sv(0, 0, 1, 0), 0, 1).allclose(sv(0, 0, 0, 1))
    assert apply_cnot(sv(1, 0, 0, 0), 0, 1).allclose(sv(1, 0, 0, 0))
    assert apply_cnot(sv(R, 0, R, 0), 0, 1).allclose(sv(R, 0, 0, R))
    s = sv(0.6, 0.8j)
    assert apply_rz(s, 0, 0.0).allclose(s)
    assert apply_rz(build_ghz(2), 1, math.pi).allclose(sv(R, 0, 0, -R))


def test_pauli_examples():
    assert apply_pauli(sv(1, 0), 0, PauliLabel.X).allclose(sv(0, 1))
    assert apply_pauli(sv(0, 1), 0, PauliLabel.Z).allclose(sv(0, -1))
    s = sv(0.6, 0.8j)
    assert apply_pauli(apply_pauli(s, 0, PauliLabel.Y), 0, PauliLabel.Y).allclose(s)


@pytest.mark.parametrize("seed", range(5))
def test_zero_noise_cnot_ignores_seed(seed):
    s = build_ghz(3)
    out = apply_noisy_cnot(s, 1, 2, NoiseModel(0.0), np.random.default_rng(seed))
    assert np.array_equal(out.amplitudes, apply_cnot(s, 1, 2).amplitudes)


def test_pauli_frequencies_within_3_sigma_at_15000():
    n = 15_000
    x = np.zeros((n, 2), dtype=bool)
    z = np.zeros((n, 2), dtype=bool)
    frame_inject_depolarizing(x, z, 0, 1, 1.0, np.random.default_rng(21))
    code = (x[:, 0] * 8 + z[:, 0] * 4 + x[:, 1] * 2 + z[:, 1]).astype(int)
    counts = np.bincount(code, minlength=16)[1:]
    expect, sd = n / 15, math.sqrt(n * (1 / 15) * (14 / 15))
    assert np.all(np.abs(counts - expect) <= 3 * sd)


def test_statevector_pauli_choice_uniform():
    # same contract on the explicit path: count the pair that lands on |00>
    zero = new_zero_state(2)
    seen = np.zeros(4, dtype=int)
    rng = np.random.default_rng(2)
    for _ in range(15_000):
        out = apply_noisy_cnot(zero, 0, 1, NoiseModel(1.0), rng)
        bits = np.flatnonzero(np.abs(out.amplitudes) > 0.5)[0]
        seen[bits] += 1
    # X-part of the pair decides the landing basis state; each X-pattern has 4 of 15 pairs (3 for 00)
    frac = seen / 15_000
    np.testing.assert_allclose(frac, [3 / 15, 4 / 15, 4 / 15, 4 / 15], atol=4 * math.sqrt(0.25 * 0.75 / 15_000))


def test_sampling_examples():
    rng = np.random.default_rng(0)
    assert sample_counts(new_zero_state(1), 37, rng) == {"0": 37}
    c = sample_counts(apply_h(new_zero_state(1), 0), 100_000, rng)
    assert abs(c["0"] / 100_000 - 0.5) <= 0.005
    assert set(sample_counts(build_ghz(3), 10_000, rng)) == {"000", "111"}


def test_trajectories_deterministic():
    a = noisy_build_ghz(5, NoiseModel(0.2), np.random.default_rng(4))
    b = noisy_build_ghz(5, NoiseModel(0.2), np.random.default_rng(4))
    assert np.array_equal(a.amplitudes, b.amplitudes)


# -- protocol ----------------------------------------------------------------------

def test_ghz_examples():
    assert build_ghz(1).allclose(sv(R, R))
    a = build_ghz(3).amplitudes
    assert abs(a[0] - R) < 1e-12 and abs(a[7] - R) < 1e-12 and np.allclose(a[1:7], 0)
    assert np.array_equal(noisy_build_ghz(4, IDEAL, np.random.default_rng(99)).amplitudes, build_ghz(4).amplitudes)


def test_encode_examples():
    g = build_ghz(3)
    assert encode_phases(g, [0, 0, 0]).allclose(g)
    s = encode_phases(build_ghz(2), [math.pi / 4, math.pi / 4]).amplitudes
    assert s[3] / s[0] == pytest.approx(1j)


def test_decode_examples():
    from cqsa.quantum import qubit_zero_probability
    assert qubit_zero_probability(decode(build_ghz(3))) == pytest.approx(1.0)
    assert qubit_zero_probability(decode(encode_phases(build_ghz(3), [math.pi, 0, 0]))) == pytest.approx(0.0, abs=1e-12)
    s = sv(0.6, 0.8)
    assert decode(s).allclose(apply_h(s, 0))


def test_trajectory_examples():
    cfg = ProtocolConfig(4, 2)
    rng = np.random.default_rng(0)
    assert all(run_protocol_trajectory([0] * 4, cfg, DecodeBasis.COS, rng) == 0 for _ in range(20))
    quarter = [math.pi / 8] * 4
    assert all(run_protocol_trajectory(quarter, cfg, DecodeBasis.SIN, rng) == 0 for _ in range(20))
    zeros = count_zeros(quarter, DecodeBasis.COS, 100_000, IDEAL, np.random.default_rng(1))
    assert abs(zeros / 100_000 - 0.5) <= 0.005
    assert count_zeros(quarter, DecodeBasis.SIN, 100_000, IDEAL, np.random.default_rng(1)) == 100_000


@pytest.mark.parametrize("thetas,total,tol", [
    ([0, 0, 0, 0], 0.0, 0.01),
    ([0.3, -0.2, 0.5, 0.1], 0.7, 0.02),
    ([-0.5, -0.5, -0.5, -0.5], -2.0, 0.02),
])
def test_estimate_examples(thetas, total, tol):
    assert abs(estimate_sum(thetas, ProtocolConfig(len(thetas), 100_000)).sigma_hat - total) <= tol


def test_population_examples():
    rng = np.random.default_rng(0)
    assert ghz_population_fidelity(6, IDEAL, 100, rng) == 1.0
    assert ghz_population_fidelity(1, NoiseModel(0.9), 100, rng) == 1.0
    f5 = ghz_population_fidelity(5, NoiseModel(0.005), 100_000, np.random.default_rng(5))
    f10 = ghz_population_fidelity(10, NoiseModel(0.005), 100_000, np.random.default_rng(10))
    assert f10 < f5 < 1.0


# -- encoding ----------------------------------------------------------------------

def test_magnitude_examples():
    assert local_max([0.5, -2.0, 1.0]) == 2.0
    assert local_max([0.0, 0.0]) == 0.0
    assert local_max([-3.5]) == 3.5
    assert global_max([1.0, 3.0, 2.0]) == 3.0
    assert global_max([0, 0]) == 0
    assert global_max([0.25]) == 0.25


def test_scaling_examples():
    assert make_scaling(4, 2.0).S == math.pi / 8
    assert make_scaling(1, 1.0).S == math.pi
    ctx = make_scaling(3, 0.0)
    assert ctx.degenerate and ctx.S == 0.0


def test_encode_update_examples():
    np.testing.assert_allclose(encode_update([2.0, -2.0], make_scaling(4, 2.0)), [math.pi / 4, -math.pi / 4], rtol=1e-15)
    np.testing.assert_array_equal(encode_update(np.zeros(3), make_scaling(4, 2.0)), np.zeros(3))


@pytest.mark.parametrize("k", [1, 2, 4, 8, 16])
def test_full_cluster_at_bound_sums_to_pi(k):
    ctx = make_scaling(k, 0.7)
    phases = [encode_update([0.7], ctx)[0] for _ in range(k)]
    assert math.fsum(phases) == math.pi


@pytest.mark.parametrize("k", [3, 5, 6, 7, 24])
def test_full_cluster_at_bound_is_accepted(k):
    ctx = make_scaling(k, 0.7)
    phases = [encode_update([0.7], ctx)[0] for _ in range(k)]
    assert abs(math.fsum(phases) - math.pi) < 1e-14
    estimate_sum(phases, ProtocolConfig(k, 100))


def test_decode_examples_encoding():
    ctx = make_scaling(4, 1.3)
    assert decode_sum(ctx.S * 3.7, ctx) == pytest.approx(3.7, abs=1e-12)
    assert decode_sum(0.0, ctx) == 0.0
    ctx = make_scaling(4, 1.0)
    theta_sum = sum(encode_update([0.25], ctx)[0] for _ in range(4))
    assert theta_sum == pytest.approx(math.pi / 4)
    assert decode_sum(theta_sum, ctx) == pytest.approx(1.0)


# -- clustering -------------------------------------------------------------------

def test_partition_examples():
    a = fisher_yates_partition(range(8), 4, np.random.default_rng(0))
    assert a.sizes == [4, 4] and sorted(a.members()) == list(range(8))
    assert sorted(fisher_yates_partition(range(9), 4, np.random.default_rng(0)).sizes) == [4, 5]


def test_pair_cooccurrence_n60_k5():
    n, k, runs = 60, 5, 10_000
    rng = np.random.default_rng(60)
    together = np.zeros((n, n))
    for _ in range(runs):
        a = fisher_yates_partition(range(n), k, rng)
        assert a.num_clusters == 12
        label = np.empty(n, dtype=int)
        for j, c in enumerate(a.clusters):
            label[list(c)] = j
        together += label[:, None] == label[None, :]
    iu = np.triu_indices(n, 1)
    freq = together[iu] / runs
    p = (k - 1) / (n - 1)
    z = np.abs(freq - p) / math.sqrt(p * (1 - p) / runs)
    # 1770 pairs: about 0.27% are expected past 3 sigma by chance alone
    assert np.mean(z > 3) <= 0.01
    assert z.max() < 4.5


def test_dropout_examples():
    a = fisher_yates_partition(range(12), 4, np.random.default_rng(3))
    assert apply_dropouts(a, []) == a
    one = apply_dropouts(a, [a.clusters[2][1]])
    assert one.invalid == {2} and len(one.valid_indices) == 2
    assert apply_dropouts(a, a.clusters[2]).invalid == one.invalid


# -- robust aggregation ----------------------------------------------------------

def test_similarity_examples():
    assert cosine_similarity([2, 3], [2, 3]) == pytest.approx(1.0)
    assert cosine_similarity([2, 3], [-2, -3]) == pytest.approx(-1.0)
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert euclidean_distance([1, 2], [1, 2]) == 0.0
    assert euclidean_distance([0, 0], [3, 4]) == 5.0


def test_krum_examples():
    same = np.ones((5, 3))
    assert krum(same, 1) == 0
    x = np.array([[0, 0], [0.1, 0], [0, 0.1], [0.1, 0.1], [50, 50]])
    scores = krum_scores(x, 1)
    assert krum(x, 1) in {0, 1, 2, 3}
    assert scores[4] > np.max(scores[:4])
    chosen = multi_krum(x, 1, 2)
    assert chosen == oracles.brute_multi_krum(x, 1, 2) and 4 not in chosen


def test_order_statistic_examples():
    np.testing.assert_array_equal(coordinate_median([[1.5, -2.0]]), [1.5, -2.0])
    np.testing.assert_array_equal(trimmed_mean([[1.5, -2.0]], 0.2), [1.5, -2.0])
    col = np.array([[1.0], [2.0], [100.0]])
    assert coordinate_median(col)[0] == 2.0
    assert trimmed_mean(col, 1 / 3)[0] == 2.0


def test_fltrust_examples():
    root = np.array([0.5, -1.0, 2.0])
    np.testing.assert_allclose(fltrust_aggregate(np.stack([root] * 4), root), root, rtol=1e-15)
    x = np.stack([root, 3 * root, -root])
    assert fltrust_trust_scores(x, root)[2] == 0.0
    np.testing.assert_allclose(fltrust_aggregate(np.stack([root, root, -root]), root), root, rtol=1e-15)


def test_multi_stat_examples():
    assert multi_stat_filter(np.ones((5, 3))).rejected == frozenset()
    rng = np.random.default_rng(7)
    inliers = 1.0 + 0.05 * rng.normal(size=(5, 4))
    x = np.vstack([inliers, 50 * inliers[0]])
    v = multi_stat_filter(x)
    assert 5 in v.rejected
    from cqsa.robust import tukey_outliers
    assert tukey_outliers(v.scores["distance"])[5]
    y = np.array([[1.0, 2.0, 1.5], [1.1, 1.9, 1.6], [-1.0, -2.0, -1.5]])
    v = multi_stat_filter(y)
    assert 2 in v.rejected and tukey_outliers(v.scores["cosine"])[2]


def test_normalization_examples():
    assert normalize_for_comparison(ClusterAggregate(0, np.zeros(2), np.array([4.0, 8.0]), 4)).tolist() == [1.0, 2.0]
    u = np.array([0.3, -0.7])
    five = normalize_for_comparison(ClusterAggregate(0, np.zeros(2), 5 * u, 5))
    four = normalize_for_comparison(ClusterAggregate(1, np.zeros(2), 4 * u, 4))
    np.testing.assert_array_equal(five, four)
    sums = np.random.default_rng(0).normal(size=(6, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", KrumGuaranteeWarning)
        assert krum(sums, 1) == krum(sums / 4, 1)


# -- harness -----------------------------------------------------------------------

def test_zero_update_at_optimum():
    cfg = FLConfig(label_noise=0.0)
    task = SyntheticTask.generate(cfg)
    u = local_update(task.clients[0], task.true_weights, cfg.learning_rate)
    np.testing.assert_allclose(u.weights, 0.0, atol=1e-14)


def test_attack_examples():
    u = ModelUpdate(np.array([0.2, -0.4, 0.1]), 0)
    rng = np.random.default_rng(0)
    assert apply_attack(u, AttackConfig(), rng) is u
    flip = AttackConfig("sign_flip", 1.0, {0})
    np.testing.assert_array_equal(apply_attack(apply_attack(u, flip, rng), flip, rng).weights, u.weights)
    noisy = apply_attack(u, AttackConfig("scaled_noise", 1.0, {0}), rng)
    np.testing.assert_allclose(np.abs(noisy.weights), local_max(u))


def test_single_cluster_is_fedavg():
    cfg = FLConfig(cluster_size=20)
    task = SyntheticTask.generate(cfg)
    w = np.random.default_rng(0).normal(size=cfg.dim)
    w_next, _ = run_round(w, 0, cfg, task)
    step = np.mean([local_update(c, w, cfg.learning_rate).weights for c in task.clients], axis=0)
    np.testing.assert_allclose(w_next, w + step, atol=1e-10)


def test_shot_noise_aggregate_tolerance():
    cfg = FLConfig()
    task = SyntheticTask.generate(cfg)
    w = np.zeros(cfg.dim)
    _, exact = run_round(w, 0, cfg, task)
    _, noisy = run_round(w, 0, replace(cfg, channel="shot_noise", shots=100_000), task)
    S = make_scaling(4, exact.w_max).S
    for j in exact.cluster_sums:
        assert np.max(np.abs(noisy.cluster_sums[j] - exact.cluster_sums[j])) <= 0.02 / S


def test_krum_never_selects_concentrated_attackers():
    cfg = FLConfig(filter=FilterConfig("krum", f=1))
    task = SyntheticTask.generate(cfg)
    w = np.zeros(cfg.dim)
    for t in range(10):
        from cqsa.rng import derive_rng
        part = fisher_yates_partition(range(20), 4, derive_rng(cfg.seed, "partition", t), round=t)
        poisoned = 3
        attack = AttackConfig("sign_flip", 10.0, frozenset(part.clusters[poisoned]))
        w_next, report = run_round(w, t, replace(cfg, attack=attack), task)
        means = np.stack([report.cluster_sums[j] / report.cluster_sizes[j] for j in sorted(report.cluster_sums)])
        assert oracles.brute_multi_krum(means, 1, 1)[0] != poisoned
        assert poisoned not in report.verdict.accepted
        w = w_next


def test_loss_monotone_with_small_lr():
    res = run_experiment(FLConfig(learning_rate=0.05))
    losses = [r.global_loss for r in res.reports]
    assert all(b <= a + 1e-9 for a, b in zip(losses[3:], losses[4:]))


def test_same_seed_same_reports():
    cfg = FLConfig(rounds=5, attack=AttackConfig("scaled_noise", 1.0, {1, 2}))
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert [r.to_dict() for r in a.reports] == [r.to_dict() for r in b.reports]


# -- fidelity ---------------------------------------------------------------------

def test_fidelity_examples():
    rng = np.random.default_rng(0)
    assert global_fidelity(7, 0.0, 100, rng).value == 1.0
    assert global_fidelity(1, 0.3, 100, rng).value == 1.0
    assert extrapolated_fidelity(21, 0.01, (20, 0.8)) == 0.8 * 0.99 ** 2
    assert extrapolated_fidelity(50, 0.0, (20, 0.8)) == 0.8
    assert extrapolated_fidelity(100, 0.005, (20, 0.8)) == 0.8 * 0.995 ** 160
    assert analytic_fidelity(100, 0.0) == 1.0
    assert analytic_fidelity(1, 0.2) == 0.8
    assert analytic_fidelity(100, 0.005) == pytest.approx(0.605770436, abs=1e-9)
    assert cqsa_total_fidelity(60, 1, 0.01, 100, rng).value == 1.0
