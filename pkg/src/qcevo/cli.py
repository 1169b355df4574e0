"""Command-line entry point: ``qcevo {solve,gen,run,bench}``.

Exit codes: 0 success, 1 computation error, 2 usage or I/O error.
The output directory defaults to ``$QCEVO_OUT`` or ``./qcevo-out``.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .harness import (
    ALGORITHMS,
    ExperimentConfig,
    format_ratio,
    load_bench_config,
    noise_scenario,
    run_experiment,
    write_outputs,
)
from .problem import BudgetError, InstanceError, generate_instance, load_instance, qubo_from_spp, solve_exact
from .simulator import NoiseModel

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _default_out() -> str:
    return os.environ.get("QCEVO_OUT", "qcevo-out")


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--shots", type=int, default=None, help="shots per circuit evaluation (default 1024)")
    mode.add_argument("--exact", action="store_true", help="use exact expectation values")
    p.add_argument("--noise", action="store_true", help="depolarizing scenario: eps=0.01 on qubits 1 and 6, linear coupling")
    p.add_argument("--epsilon", type=float, default=None, help="override the noise probability")
    p.add_argument("--noisy-qubits", type=str, default=None, help="comma-separated noisy qubit indices")
    p.add_argument("--coupling", choices=("none", "linear"), default=None)
    p.add_argument("--trajectories", type=int, default=None, help="noise trajectories per evaluation")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--threads", type=int, default=1, help="max worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcevo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="exact optimum by enumeration")
    p.add_argument("instance")

    p = sub.add_parser("gen", help="generate a synthetic instance with a planted cover")
    p.add_argument("--partitions", type=int, required=True)
    p.add_argument("--items", type=int, required=True)
    p.add_argument("--weights", type=float, nargs=2, default=(1, 10), metavar=("LO", "HI"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default=None)
    p.add_argument("--out", default=None, help="file to write (default stdout)")

    p = sub.add_parser("run", help="run one algorithm on one instance")
    p.add_argument("instance")
    p.add_argument("--alg", choices=ALGORITHMS, required=True)
    p.add_argument("--generations", type=int, default=10_000, help="generations (QCE) or cost evaluations (VQE)")
    p.add_argument("--runs", type=int, default=1)
    _add_experiment_flags(p)

    p = sub.add_parser("bench", help="run a JSON-configured benchmark")
    p.add_argument("config")
    _add_experiment_flags(p)
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.exact:
        changes["shots"] = None
    elif args.shots is not None:
        changes["shots"] = args.shots
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.coupling is not None:
        changes["coupling"] = args.coupling
    if args.trajectories is not None:
        changes["trajectories"] = args.trajectories
    cfg = replace(cfg, **changes)
    if args.noise:
        cfg = noise_scenario(cfg)
        if args.coupling is not None:
            cfg = replace(cfg, coupling=args.coupling)
    if args.epsilon is not None or args.noisy_qubits is not None:
        base = cfg.noise or NoiseModel(frozenset(), 0.0)
        qubits = base.noisy_qubits
        if args.noisy_qubits is not None:
            try:
                qubits = frozenset(int(q) for q in args.noisy_qubits.split(",") if q.strip())
            except ValueError:
                raise UsageError(f"--noisy-qubits: expected comma-separated integers, got {args.noisy_qubits!r}")
        eps = base.epsilon if args.epsilon is None else args.epsilon
        if not 0 <= eps <= 1:
            raise UsageError("--epsilon must lie in [0, 1]")
        cfg = replace(cfg, noise=NoiseModel(qubits, eps))
    return cfg


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    x, e = solve_exact(qubo_from_spp(inst))
    print(f"instance: {inst.name}")
    print(f"optimum: {e:g}")
    print(f"assignment: {''.join(map(str, x))}")
    print(f"feasible: {'yes' if inst.is_feasible(x) else 'no'}")
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        inst = generate_instance(args.partitions, args.items, tuple(args.weights), args.seed, args.name)
    except ValueError as exc:
        raise UsageError(str(exc))
    text = inst.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _report(results, out_dir) -> None:
    write_outputs(results, out_dir)
    for r in results:
        finals = " ".join(f"{m:.6g}" for m in r.per_run_min)
        print(f"{r.instance} {r.algorithm}: reference={r.reference:g} run_minima=[{finals}] R={format_ratio(r.ratio)}")
    print(f"outputs written to {out_dir}")


def cmd_run(args) -> int:
    load_instance(args.instance)  # surface I/O and parse errors before any work
    cfg = ExperimentConfig(
        instance=args.instance,
        algorithm=args.alg,
        runs=args.runs,
        generations=args.generations,
        seed=0,
    )
    cfg = _apply_overrides(cfg, args)
    result = run_experiment(cfg, workers=args.threads)
    _report([result], args.out or _default_out())
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        configs = load_bench_config(args.config)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{args.config}: invalid bench config: {exc}")
    for c in configs:
        load_instance(c.instance)
    configs = [_apply_overrides(c, args) for c in configs]
    results = [run_experiment(c, workers=args.threads) for c in configs]
    _report(results, args.out or _default_out())
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "gen": cmd_gen, "run": cmd_run, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (OSError, InstanceError, UsageError) as exc:
        print(f"qcevo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BudgetError, ValueError, ArithmeticError) as exc:
        print(f"qcevo: computation error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
