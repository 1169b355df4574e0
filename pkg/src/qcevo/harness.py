"""Multi-run experiments, approximation ratios and result tables."""

from __future__ import annotations

import csv
import io
import json
import re
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .evolution import ApcdConfig, evolve
from .problem import SppInstance, ising_from_qubo, load_instance, qubo_from_spp, solve_exact
from .simulator import NoiseModel
from .vqe import OptimizerConfig, bind, build_two_local, optimize

ALGORITHMS = ("af", "apcd", "vqe")
SCENARIO_NOISY_QUBITS = frozenset({1, 6})
SCENARIO_EPSILON = 0.01


@dataclass(frozen=True)
class ExperimentConfig:
    instance: str | SppInstance
    algorithm: str = "apcd"
    runs: int = 7
    generations: int = 10_000  # cost evaluations for VQE
    shots: int | None = 1024  # None selects exact expectation values
    noise: NoiseModel | None = None
    coupling: str = "none"
    seed: int = 0
    trajectories: int = 16
    reps: int = 2
    tolerance: float = 1e-6
    apcd: ApcdConfig = field(default_factory=ApcdConfig)
    requested_noisy_qubits: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.runs < 1 or self.generations < 1:
            raise ValueError("runs and generations must be >= 1")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.coupling not in ("none", "linear"):
            raise ValueError("coupling must be 'none' or 'linear'")

    def load(self) -> SppInstance:
        if isinstance(self.instance, SppInstance):
            return self.instance
        return load_instance(self.instance)


@dataclass
class ExperimentResult:
    instance: str
    algorithm: str
    n: int
    reference: float
    reference_assignment: tuple[int, ...]
    seeds: list[int]
    per_run_min: list[float]
    traces: list[list[float]]
    median_min: float
    ratio: float
    runs: int
    generations: int
    shots: int | None
    noise: dict | None = None
    final_circuits: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "algorithm": self.algorithm,
            "n": self.n,
            "reference": self.reference,
            "reference_assignment": "".join(map(str, self.reference_assignment)),
            "seeds": self.seeds,
            "per_run_min": self.per_run_min,
            "median_min": self.median_min,
            "ratio": self.ratio,
            "runs": self.runs,
            "generations": self.generations,
            "shots": self.shots,
            "noise": self.noise,
            "final_circuits": [json.loads(c) for c in self.final_circuits],
        }


def approximation_ratio(reference: float, min_expectation: float) -> float:
    """reference / min_expectation, for a strictly positive reference."""
    if not reference > 0:
        raise ValueError(f"reference must be > 0 (got {reference}); check the penalty setup")
    if min_expectation < reference - 1e-9 * (1 + abs(reference)):
        raise ValueError(f"min expectation {min_expectation} lies below the reference {reference}")
    return min(1.0, reference / min_expectation)


def run_seeds(master_seed: int, runs: int) -> list[int]:
    children = np.random.SeedSequence(master_seed).spawn(runs)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def _single_run(cfg: ExperimentConfig, ising, seed: int) -> tuple[list[float], str]:
    if cfg.algorithm == "vqe":
        template = build_two_local(ising.n, cfg.reps)
        res = optimize(
            template,
            ising,
            OptimizerConfig(tolerance=cfg.tolerance, max_iterations=cfg.generations),
            np.random.default_rng(seed),
            shots=cfg.shots,
            noise=cfg.noise,
            trajectories=cfg.trajectories,
        )
        return res.trace, bind(template, res.params).to_json()
    state = evolve(
        ising,
        cfg.algorithm,
        apcd=cfg.apcd,
        generations=cfg.generations,
        shots=cfg.shots,
        noise=cfg.noise,
        seed=seed,
        trajectories=cfg.trajectories,
        coupling=cfg.coupling,
    )
    return state.trace, state.circuit.to_json()


def _run_job(args):
    cfg, ising, seed = args
    return _single_run(cfg, ising, seed)


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Run ``cfg.runs`` independent runs and aggregate the median ratio.

    A run's minimum is the lowest value of its best-so-far trace.
    """
    inst = cfg.load()
    qubo = qubo_from_spp(inst)
    x_star, e_star = solve_exact(qubo)
    ising = ising_from_qubo(qubo)
    seeds = run_seeds(cfg.seed, cfg.runs)
    jobs = [(cfg, ising, s) for s in seeds]
    if workers > 1 and cfg.runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outputs = list(ex.map(_run_job, jobs))
    else:
        outputs = [_run_job(j) for j in jobs]
    traces = [list(map(float, t)) for t, _ in outputs]
    per_run_min = [min(t) for t in traces]
    median_min = float(statistics.median(per_run_min))
    noise = None
    if cfg.noise is not None:
        noise = cfg.noise.restricted(inst.n).to_dict()
        if cfg.requested_noisy_qubits is not None:
            noise["requested_noisy_qubits"] = list(cfg.requested_noisy_qubits)
        noise["coupling"] = cfg.coupling
    return ExperimentResult(
        instance=inst.name,
        algorithm=cfg.algorithm,
        n=inst.n,
        reference=e_star,
        reference_assignment=x_star,
        seeds=seeds,
        per_run_min=per_run_min,
        traces=traces,
        median_min=median_min,
        ratio=approximation_ratio(e_star, median_min),
        runs=cfg.runs,
        generations=cfg.generations,
        shots=cfg.shots,
        noise=noise,
        final_circuits=[c for _, c in outputs],
    )


def noise_scenario(cfg: ExperimentConfig) -> ExperimentConfig:
    """Depolarizing noise (eps = 0.01) on qubits {1, 6} with a linear coupling map.

    Qubit indices outside the register are dropped; the requested set is
    kept in the result metadata.
    """
    n = cfg.load().n
    noisy = frozenset(q for q in SCENARIO_NOISY_QUBITS if q < n)
    return replace(
        cfg,
        noise=NoiseModel(noisy, SCENARIO_EPSILON),
        coupling="linear",
        requested_noisy_qubits=tuple(sorted(SCENARIO_NOISY_QUBITS)),
    )


def _natural_key(text: str):
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", text)]


def _sorted(results):
    return sorted(results, key=lambda r: (_natural_key(r.instance), r.algorithm))


def format_ratio(r: float) -> str:
    return f"{r:.2f}"


def export_table(results: list[ExperimentResult]) -> bytes:
    """Summary CSV, one row per (instance, algorithm)."""
    if not results:
        raise ValueError("no results to export")
    noisy = any(r.noise is not None for r in results)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["instance", "algorithm", "R", "runs", "generations"]
    if noisy:
        header += ["epsilon", "noisy_qubits"]
    w.writerow(header)
    for r in _sorted(results):
        row = [r.instance, r.algorithm, format_ratio(r.ratio), r.runs, r.generations]
        if noisy:
            if r.noise is None:
                row += ["0", ""]
            else:
                row += [repr(r.noise["epsilon"]), " ".join(map(str, r.noise["noisy_qubits"]))]
        w.writerow(row)
    return buf.getvalue().encode()


def export_runs(results: list[ExperimentResult]) -> bytes:
    """Long-form CSV, one row per run."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance", "algorithm", "run", "seed", "min_energy", "reference", "ratio"])
    for r in _sorted(results):
        for k, (seed, m) in enumerate(zip(r.seeds, r.per_run_min)):
            w.writerow([r.instance, r.algorithm, k, seed, repr(m), repr(r.reference), repr(approximation_ratio(r.reference, m))])
    return buf.getvalue().encode()


def trace_csv(result: ExperimentResult, run: int) -> bytes:
    col = "evaluation,best_cost" if result.algorithm == "vqe" else "generation,best_energy"
    lines = [col] + [f"{k},{e!r}" for k, e in enumerate(result.traces[run])]
    return ("\n".join(lines) + "\n").encode()


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name) or "instance"


def write_outputs(results: list[ExperimentResult], out_dir) -> list[Path]:
    """Write summary.csv, runs.csv, results.json and per-run trace CSVs."""
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    written = []

    def put(path: Path, data: bytes):
        path.write_bytes(data)
        written.append(path)

    put(out / "summary.csv", export_table(results))
    put(out / "runs.csv", export_runs(results))
    bundle = [r.to_dict() for r in _sorted(results)]
    put(out / "results.json", (json.dumps(bundle, indent=2, sort_keys=True) + "\n").encode())
    for r in _sorted(results):
        for k in range(r.runs):
            put(out / "traces" / f"{_safe(r.instance)}_{r.algorithm}_run{k}.csv", trace_csv(r, k))
    return written


def load_bench_config(path, seed: int | None = None) -> list[ExperimentConfig]:
    """Expand a bench config (instances x algorithms) into experiment configs.

    Keys: instances (paths, relative to the config file), algorithms, and
    optionally runs, generations, shots (null = exact), noise
    ({"noisy_qubits": [...], "epsilon": e}), coupling, seed, trajectories, reps.
    """
    path = Path(path)
    doc = json.loads(path.read_text())
    if not isinstance(doc, dict) or "instances" not in doc:
        raise ValueError("bench config needs an 'instances' list")
    algorithms = doc.get("algorithms", list(ALGORITHMS))
    noise = doc.get("noise")
    noise_model = None if noise is None else NoiseModel(frozenset(noise.get("noisy_qubits", [])), float(noise.get("epsilon", 0.0)))
    common = dict(
        runs=int(doc.get("runs", 7)),
        generations=int(doc.get("generations", 10_000)),
        shots=doc.get("shots", 1024),
        noise=noise_model,
        coupling=doc.get("coupling", "none"),
        seed=int(doc.get("seed", 0) if seed is None else seed),
        trajectories=int(doc.get("trajectories", 16)),
        reps=int(doc.get("reps", 2)),
    )
    configs = []
    for inst in doc["instances"]:
        inst_path = Path(inst)
        if not inst_path.is_absolute():
            inst_path = path.parent / inst_path
        for alg in algorithms:
            configs.append(ExperimentConfig(instance=str(inst_path), algorithm=alg, **common))
    return configs

