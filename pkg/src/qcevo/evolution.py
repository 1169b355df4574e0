"""(1+lambda) evolution of variable-topology circuits.

Two variants share the same loop:

* ``af``   ansatz-free: the genome is the whole circuit, started from |0...0>;
* ``apcd`` a fixed one-step Trotter prefix on |+...+> followed by an evolving
  genome drawn from the counterdiabatic-inspired gate pool.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .problem import IsingModel
from .simulator import (
    Circuit,
    Evaluator,
    Gate,
    GateKind,
    NoiseModel,
    init_basis_state,
    init_plus_state,
    run_circuit,
)

TWO_PI = 2 * math.pi
OPERATIONS = ("INSERT", "DELETE", "SWAP", "MODIFY")
_INITIAL_KINDS = (GateKind.RX, GateKind.RY, GateKind.RZ)


def af_gate_pool() -> list[GateKind]:
    return [
        GateKind.RX, GateKind.RY, GateKind.RZ,
        GateKind.RXX, GateKind.RYY, GateKind.RZZ,
        GateKind.CRX, GateKind.CRY, GateKind.CRZ,
    ]


def apcd_gate_pool() -> list[GateKind]:
    # generators Y, I(x)X, I(x)Y, I(x)Z, XX, YY, ZZ in that order
    return [
        GateKind.RY,
        GateKind.CRX, GateKind.CRY, GateKind.CRZ,
        GateKind.RXX, GateKind.RYY, GateKind.RZZ,
    ]


@dataclass(frozen=True)
class MutationConfig:
    weights: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    modify_sigma: float = 0.1
    gate_pool: tuple[GateKind, ...] = tuple(af_gate_pool())
    offspring: int = 4
    coupling: str = "none"  # or "linear"

    def __post_init__(self):
        if len(self.weights) != 4 or any(w < 0 for w in self.weights):
            raise ValueError("weights: four non-negative probabilities required")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        if not self.modify_sigma > 0:
            raise ValueError("modify_sigma must be > 0")
        if self.offspring < 1:
            raise ValueError("offspring must be >= 1")
        if not self.gate_pool:
            raise ValueError("gate_pool is empty")
        if self.coupling not in ("none", "linear"):
            raise ValueError("coupling must be 'none' or 'linear'")
        object.__setattr__(self, "gate_pool", tuple(GateKind(k) for k in self.gate_pool))


@dataclass(frozen=True)
class ApcdConfig:
    beta: float = 0.0
    delta: float = 0.5
    trotter_steps: int = 1

    def __post_init__(self):
        if self.trotter_steps < 1:
            raise ValueError("trotter_steps must be >= 1")


@dataclass
class EvolutionState:
    parent: Circuit
    parent_energy: float
    generation: int = 0
    trace: list[float] = field(default_factory=list)
    prefix: Circuit | None = None
    evaluations: int = 0
    snapshots: list = field(default_factory=list)  # (generation, parent) pairs

    @property
    def circuit(self) -> Circuit:
        """Full circuit that produced ``parent_energy`` (prefix included)."""
        return self.parent if self.prefix is None else self.prefix + self.parent


def _random_pair(n: int, coupling: str, rng: np.random.Generator) -> tuple[int, int]:
    if coupling == "linear":
        i = int(rng.integers(n - 1))
        return (i, i + 1) if rng.random() < 0.5 else (i + 1, i)
    a = int(rng.integers(n))
    b = int(rng.integers(n - 1))
    if b >= a:
        b += 1
    return a, b


def random_gate(
    n: int, pool: Sequence[GateKind], rng: np.random.Generator, coupling: str = "none"
) -> Gate:
    """Uniform kind from ``pool``, uniform qubits (control first), angle in [0, 2pi)."""
    if n < 2:
        pool = [k for k in pool if k.arity == 1]
        if not pool:
            raise ValueError("gate pool has no single-qubit kind for a 1-qubit register")
    kind = pool[int(rng.integers(len(pool)))]
    qubits = (int(rng.integers(n)),) if kind.arity == 1 else _random_pair(n, coupling, rng)
    return Gate(kind, qubits, float(rng.uniform(0.0, TWO_PI)) if kind.parametric else None)


def random_initial_circuit(
    n: int, rng: np.random.Generator, kinds: Sequence[GateKind] = _INITIAL_KINDS
) -> Circuit:
    """A single random rotation gate."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return Circuit(n, (random_gate(n, kinds, rng),))


def choose_operation(weights: Sequence[float], rng: np.random.Generator) -> str:
    u = rng.random()
    acc = 0.0
    for op, w in zip(OPERATIONS, weights):
        acc += w
        if u < acc:
            return op
    return OPERATIONS[-1]


def mutate(c: Circuit, cfg: MutationConfig, rng: np.random.Generator) -> Circuit:
    """Return a mutated copy of ``c`` with exactly one operation applied.

    DELETE on a single-gate circuit leaves it unchanged, and MODIFY on a
    gate without an angle is a no-op.
    """
    if len(c) < 1:
        raise ValueError("cannot mutate an empty circuit")
    op = choose_operation(cfg.weights, rng)
    gates = list(c.gates)
    if op == "INSERT":
        pos = int(rng.integers(len(gates) + 1))
        gates.insert(pos, random_gate(c.n, cfg.gate_pool, rng, cfg.coupling))
    elif op == "DELETE":
        pos = int(rng.integers(len(gates)))
        if len(gates) > 1:
            del gates[pos]
    elif op == "SWAP":
        pos = int(rng.integers(len(gates)))
        gates[pos] = random_gate(c.n, cfg.gate_pool, rng, cfg.coupling)
    else:
        pos = int(rng.integers(len(gates)))
        g = gates[pos]
        if g.theta is not None:
            gates[pos] = Gate(g.kind, g.qubits, g.theta + float(rng.normal(0.0, cfg.modify_sigma)))
    return Circuit(c.n, tuple(gates))


def _problem_layer(ising: IsingModel, beta: float) -> list[Gate]:
    # exp(-i beta H_I) is exact as a product of commuting RZ / RZZ factors
    gates = [Gate(GateKind.RZ, (i,), 2 * beta * h) for i, h in enumerate(ising.h) if h]
    gates += [
        Gate(GateKind.RZZ, (i, j), 2 * beta * J) for (i, j), J in sorted(ising.J.items()) if J
    ]
    return gates


def build_apcd_prefix(n: int, cfg: ApcdConfig, ising: IsingModel) -> Circuit:
    """Fixed U_I(beta) U_0(delta) block(s); U_0 acts first on the state.

    Step k of s uses schedule lambda_k = k/s: the mixer angle is
    delta * (1 - lambda_{k-1}) and the problem angle beta * lambda_k, which
    reduces to (delta, beta) for a single step.
    """
    if ising.n != n:
        raise ValueError("Hamiltonian size does not match n")
    gates: list[Gate] = []
    s = cfg.trotter_steps
    for k in range(1, s + 1):
        delta_k = cfg.delta * (1 - (k - 1) / s)
        beta_k = cfg.beta * (k / s)
        if delta_k:
            gates += [Gate(GateKind.RX, (i,), 2 * delta_k) for i in range(n)]
        if beta_k:
            gates += _problem_layer(ising, beta_k)
    return Circuit(n, tuple(gates))


def _substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def evolve(
    ising: IsingModel,
    variant: str = "af",
    cfg: MutationConfig | None = None,
    apcd: ApcdConfig | None = None,
    generations: int = 10_000,
    shots: int | None = None,
    noise: NoiseModel | None = None,
    seed: int = 0,
    trajectories: int = 16,
    coupling: str = "none",
    patience: int | None = None,
    tol: float = 1e-9,
    workers: int = 1,
    snapshot_every: int = 0,
) -> EvolutionState:
    """Run the elitist (1 + offspring) loop for ``generations`` generations.

    Randomness for offspring ``k`` of generation ``g`` comes from its own
    substream ``(seed, g, k)``, so results do not depend on ``workers``.
    ``patience`` enables early stopping after that many generations without
    an improvement larger than ``tol``. The returned trace holds the initial
    parent energy followed by one best energy per generation.
    """
    if generations < 1:
        raise ValueError("generations must be >= 1")
    variant = variant.lower()
    if variant not in ("af", "apcd"):
        raise ValueError(f"unknown variant {variant!r}")
    n = ising.n
    if cfg is None:
        pool = af_gate_pool() if variant == "af" else apcd_gate_pool()
        cfg = MutationConfig(gate_pool=tuple(pool), coupling=coupling)

    prefix = None
    if variant == "af":
        init = init_basis_state(n)
        initial_kinds = _INITIAL_KINDS
    else:
        prefix = build_apcd_prefix(n, apcd or ApcdConfig(), ising)
        init = init_plus_state(n)
        initial_kinds = tuple(k for k in cfg.gate_pool if k.arity == 1) or cfg.gate_pool

    evaluator_noise = noise.restricted(n) if noise is not None else None
    noisy_prefix = prefix is not None and evaluator_noise is not None and any(
        len(g.qubits) == 2 and not evaluator_noise.noisy_qubits.isdisjoint(g.qubits)
        for g in prefix.gates
    )
    if prefix is not None and not noisy_prefix:
        # the prefix is noise-free, so its output state can be reused
        init = run_circuit(prefix, init)
        evaluate_prefix = None
    else:
        evaluate_prefix = prefix
    evaluator = Evaluator(ising, init, shots=shots, noise=evaluator_noise, trajectories=trajectories)

    def energy(genome: Circuit, rng: np.random.Generator) -> float:
        full = genome if evaluate_prefix is None else evaluate_prefix + genome
        return evaluator(full, rng)

    rng0 = _substream(seed, 0, 0)
    parent = random_initial_circuit(n, rng0, initial_kinds)
    parent_energy = energy(parent, _substream(seed, 0, 1))
    state = EvolutionState(parent, parent_energy, 0, [parent_energy], prefix, 1)

    def offspring(g: int, k: int) -> tuple[Circuit, float]:
        rng = _substream(seed, g, k + 1)
        child = mutate(state.parent, cfg, rng)
        return child, energy(child, rng)

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    stale = 0
    try:
        for g in range(1, generations + 1):
            if pool is None:
                children = [offspring(g, k) for k in range(cfg.offspring)]
            else:
                children = list(pool.map(lambda k: offspring(g, k), range(cfg.offspring)))
            state.evaluations += len(children)
            best_child, best_e = min(children, key=lambda ce: ce[1])
            previous = state.parent_energy
            if best_e < state.parent_energy:
                state.parent, state.parent_energy = best_child, best_e
            state.generation = g
            state.trace.append(state.parent_energy)
            if snapshot_every and g % snapshot_every == 0:
                state.snapshots.append((g, state.parent))
            if patience is not None:
                stale = 0 if previous - state.parent_energy > tol else stale + 1
                if stale >= patience:
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    return state
