"""Command-line entry point: ``cqsa <subcommand> ...``.

Exit codes: 0 success, 2 usage, 3 configuration, 4 round failure,
5 internal invariant violation.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys

from . import __version__
from .clustering import fisher_yates_partition
from .errors import CQSAError, ConfigError, RoundFailure
from .fidelity import (
    DEFAULT_DIRECT_CAP,
    DEFAULT_TRAJECTORIES,
    FIG1_P,
    FIG2_N,
    FIG2_P,
    FidelityStudy,
    analytic_rows,
    scan_figure1,
    scan_figure2,
)
from .harness import load_config, run_experiment, write_outputs
from .protocol import ProtocolConfig, estimate_sum
from .quantum import MAX_QUBITS, NoiseModel
from .rng import derive_rng

EXIT_USAGE, EXIT_CONFIG, EXIT_ROUND_FAILURE, EXIT_INTERNAL = 2, 3, 4, 5


def _env_int(name: str, default: int) -> int:
    value = os.environ.get(name)
    return int(value) if value not in (None, "") else default


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _write_meta(path: str, argv) -> None:
    meta = {
        "argv": list(argv),
        "version": __version__,
        "written_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def _emit(text: str, out: str | None, argv) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    with open(out, "w") as fh:
        fh.write(text)
    _write_meta(out + ".meta.json", argv)


def build_parser() -> argparse.ArgumentParser:
    seed_default = _env_int("CQSA_SEED", 0)
    threads_default = _env_int("CQSA_THREADS", os.cpu_count() or 1)
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="cqsa", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("qsa-demo", help="estimate one blind phase sum", formatter_class=fmt)
    p.add_argument("--k", type=int, default=4, help="cluster size (qubits)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--thetas", type=_float_list, help="comma-separated client phases in radians; unset means --random")
    group.add_argument("--random", action="store_true", help="draw phases uniformly in [-pi/k, pi/k]")
    p.add_argument("--shots", type=int, default=100_000, help="total shots over both configurations")
    p.add_argument("--p", type=float, default=0.0, help="two-qubit depolarizing probability per CNOT")
    p.add_argument("--seed", type=int, default=seed_default, help="master seed (env CQSA_SEED)")
    p.add_argument("--out", help="JSON path; unset means stdout")

    p = sub.add_parser("fidelity-scan", help="GHZ fidelity tables (CSV)", formatter_class=fmt)
    p.add_argument("--mode", choices=("fig1", "fig2", "custom"), default="fig1",
                   help="fig1: fidelity vs k at fixed N; fig2: (p, N) grid at fixed k; custom: fig1 with your lists")
    p.add_argument("--N", type=int, default=None, help="number of clients for fig1/custom; unset means 60")
    p.add_argument("--N-list", type=_int_list, default=None, help="comma-separated client counts for fig2; unset means 4,8,20,40,100")
    p.add_argument("--k", type=int, default=4, help="cluster size for fig2")
    p.add_argument("--k-list", type=_int_list, default=None, help="comma-separated cluster sizes; unset means every divisor of N")
    p.add_argument("--p-list", type=_float_list, default=None, help="comma-separated noise probabilities; unset means the mode's preset grid")
    p.add_argument("--trajectories", type=int, default=DEFAULT_TRAJECTORIES, help="Monte-Carlo trajectories per size")
    p.add_argument("--direct-cap", type=int, default=DEFAULT_DIRECT_CAP,
                   help="largest size simulated directly; above it, extrapolate")
    p.add_argument("--backend", choices=("frame", "statevector"), default="frame",
                   help="Pauli-frame propagation (exact, fast) or explicit state vectors")
    p.add_argument("--pure-recurrence", action="store_true", help="recurrence from n=1, no simulation")
    p.add_argument("--epsilon", type=float, default=None, help="also emit (1 - eps)^n analytic rows; unset means none")
    p.add_argument("--seed", type=int, default=seed_default, help="master seed (env CQSA_SEED)")
    p.add_argument("--threads", type=int, default=threads_default, help="worker threads (env CQSA_THREADS)")
    p.add_argument("--out", help="CSV path; unset means stdout")

    p = sub.add_parser("fl-sim", help="federated learning experiment from a JSON config", formatter_class=fmt)
    p.add_argument("--config", required=True, help="JSON config file (see SCHEMAS.md)")
    p.add_argument("--out", default="fl_out", help="output directory for rounds.csv and summary.json")
    p.add_argument("--rounds", type=int, default=None, help="override the config's round count; unset keeps it")
    p.add_argument("--seed", type=int, default=None, help="override the config's seed (env CQSA_SEED); unset keeps it")
    p.add_argument("--threads", type=int, default=threads_default, help="worker threads (env CQSA_THREADS)")

    p = sub.add_parser("partition-demo", help="one random cluster assignment (JSON)", formatter_class=fmt)
    p.add_argument("--N", type=int, required=True, help="number of clients")
    p.add_argument("--k", type=int, required=True, help="target cluster size")
    p.add_argument("--round", type=int, default=0, help="round index (selects the shuffle stream)")
    p.add_argument("--seed", type=int, default=seed_default, help="master seed (env CQSA_SEED)")
    p.add_argument("--out", help="JSON path; unset means stdout")
    return parser


def cmd_qsa_demo(args, parser, argv) -> int:
    if args.shots < 2:
        parser.error("--shots must be at least 2 (shots are split over two configurations)")
    if not 1 <= args.k <= MAX_QUBITS:
        parser.error(f"--k must be in [1, {MAX_QUBITS}]")
    if args.random or args.thetas is None:
        rng = derive_rng(args.seed, "qsa-demo")
        thetas = rng.uniform(-math.pi / args.k, math.pi / args.k, size=args.k).tolist()
    else:
        thetas = args.thetas
    if len(thetas) != args.k:
        raise ConfigError(f"got {len(thetas)} phases for k={args.k}", "thetas")
    total = math.fsum(thetas)
    if abs(total) > math.pi:
        raise ConfigError(
            f"phase sum {total:.6g} lies outside [-pi, pi]; encode each phase as "
            "pi * w / (k * w_max) so that k phases cannot exceed pi in magnitude", "thetas")
    est = estimate_sum(thetas, ProtocolConfig(args.k, args.shots, NoiseModel(args.p), args.seed))
    print(f"true sum        {total:+.6f} rad", file=sys.stderr)
    print(f"estimate        {est.sigma_hat:+.6f} rad", file=sys.stderr)
    print(f"absolute error  {abs(est.sigma_hat - total):.6f} rad", file=sys.stderr)
    print(f"P0 cos / sin    {est.p0_cos:.6f} / {est.p0_sin:.6f}", file=sys.stderr)
    payload = {"k": args.k, "p": args.p, "seed": args.seed, "shots": args.shots,
               "true_sum": total, "abs_error": abs(est.sigma_hat - total), **est.to_dict()}
    _emit(json.dumps(payload, sort_keys=True, indent=2) + "\n", args.out, argv)
    return 0


def cmd_fidelity_scan(args, parser, argv) -> int:
    if args.trajectories < 1:
        parser.error("--trajectories must be >= 1")
    if not 1 <= args.direct_cap <= MAX_QUBITS:
        parser.error(f"--direct-cap must be in [1, {MAX_QUBITS}]")
    study = FidelityStudy(args.trajectories, args.seed, args.direct_cap, args.backend,
                          args.pure_recurrence, max(1, args.threads))
    try:
        if args.mode == "fig2":
            curve = scan_figure2(study, args.k, args.p_list or FIG2_P, args.N_list or FIG2_N)
        else:
            N = args.N or 60
            curve = scan_figure1(study, N, args.p_list or FIG1_P, args.k_list)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.epsilon is not None:
        ks = sorted({r.k for r in curve.rows})
        curve.rows.extend(analytic_rows(max(r.n for r in curve.rows), ks, args.epsilon))
    _emit(curve.sorted().to_csv(), args.out, argv)
    return 0


def cmd_fl_sim(args, parser, argv) -> int:
    config = load_config(args.config)
    seed = args.seed if args.seed is not None else os.environ.get("CQSA_SEED")
    if seed not in (None, ""):
        from dataclasses import replace
        config = replace(config, seed=int(seed))
    result = run_experiment(config, rounds=args.rounds, threads=max(1, args.threads))
    csv_path, json_path = write_outputs(result, args.out)
    _write_meta(os.path.join(args.out, "meta.json"), argv)
    summary = result.summary()
    print(f"initial loss {summary['initial_loss']:.6g}, final loss {summary['final_loss']:.6g}, "
          f"failed rounds {len(summary['failed_rounds'])}", file=sys.stderr)
    print(f"wrote {csv_path} and {json_path}", file=sys.stderr)
    if result.failed_rounds:
        raise RoundFailure(f"rounds with every cluster rejected: {result.failed_rounds}")
    return 0


def cmd_partition_demo(args, parser, argv) -> int:
    try:
        assignment = fisher_yates_partition(range(args.N), args.k, derive_rng(args.seed, "partition", args.round),
                                            round=args.round)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _emit(json.dumps(assignment.to_dict(), sort_keys=True, indent=2) + "\n", args.out, argv)
    return 0


COMMANDS = {
    "qsa-demo": cmd_qsa_demo,
    "fidelity-scan": cmd_fidelity_scan,
    "fl-sim": cmd_fl_sim,
    "partition-demo": cmd_partition_demo,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, parser, argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RoundFailure as exc:
        print(f"round failure: {exc}", file=sys.stderr)
        return EXIT_ROUND_FAILURE
    except (CQSAError, AssertionError, FloatingPointError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
