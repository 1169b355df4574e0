"""Fixed-ansatz VQE baseline: RY layers with a linear CX chain."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .problem import IsingModel
from .simulator import Circuit, Evaluator, Gate, GateKind, NoiseModel, init_basis_state


@dataclass(frozen=True)
class TwoLocalTemplate:
    n: int
    reps: int = 2

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("two-local ansatz needs n >= 2")
        if self.reps < 0:
            raise ValueError("reps must be >= 0")

    @property
    def parameter_count(self) -> int:
        return self.n * (self.reps + 1)

    @property
    def cx_count(self) -> int:
        return self.reps * (self.n - 1)


@dataclass(frozen=True)
class OptimizerConfig:
    tolerance: float = 1e-6
    max_iterations: int = 10_000
    initial_simplex_scale: float = 0.5
    method: str = "nelder-mead"  # or "cobyla"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.method not in ("nelder-mead", "cobyla"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class VqeResult:
    params: np.ndarray
    energy: float
    trace: list[float] = field(default_factory=list)

    @property
    def evaluations(self) -> int:
        return len(self.trace)


def build_two_local(n: int, reps: int = 2) -> TwoLocalTemplate:
    return TwoLocalTemplate(n, reps)


def bind(t: TwoLocalTemplate, params) -> Circuit:
    """Layer-major, qubit-minor parameter assignment."""
    params = np.asarray(params, dtype=float)
    if params.shape != (t.parameter_count,):
        raise ValueError(f"expected {t.parameter_count} parameters, got {params.shape}")
    gates = []
    k = 0
    for layer in range(t.reps + 1):
        if layer:
            gates += [Gate(GateKind.CX, (q, q + 1)) for q in range(t.n - 1)]
        for q in range(t.n):
            gates.append(Gate(GateKind.RY, (q,), float(params[k])))
            k += 1
    return Circuit(t.n, tuple(gates))


def make_evaluator(
    h: IsingModel,
    shots: int | None = None,
    noise: NoiseModel | None = None,
    trajectories: int = 16,
) -> Evaluator:
    return Evaluator(h, init_basis_state(h.n), shots=shots, noise=noise, trajectories=trajectories)


def vqe_cost(
    t: TwoLocalTemplate,
    params,
    h: IsingModel,
    shots: int | None = None,
    rng: np.random.Generator | None = None,
    noise: NoiseModel | None = None,
    evaluator: Evaluator | None = None,
) -> float:
    """<0|U(params)^dagger H U(params)|0>, exact or estimated from ``shots``."""
    if t.n != h.n:
        raise ValueError("template and Hamiltonian sizes differ")
    evaluator = evaluator or make_evaluator(h, shots, noise)
    return evaluator(bind(t, params), rng)


class _BudgetSpent(Exception):
    pass


def optimize(
    t: TwoLocalTemplate,
    h: IsingModel,
    cfg: OptimizerConfig | None = None,
    rng: np.random.Generator | None = None,
    shots: int | None = None,
    noise: NoiseModel | None = None,
    trajectories: int = 16,
    x0=None,
) -> VqeResult:
    """Derivative-free minimisation from a uniform start in [-pi, pi].

    The trace records the best cost seen after every evaluation. The search
    ends on the simplex tolerance or when ``max_iterations`` evaluations
    have been spent.
    """
    cfg = cfg or OptimizerConfig()
    rng = rng if rng is not None else np.random.default_rng()
    evaluator = make_evaluator(h, shots, noise, trajectories)
    if x0 is None:
        x0 = rng.uniform(-math.pi, math.pi, size=t.parameter_count)
    x0 = np.asarray(x0, dtype=float)

    best = {"x": x0.copy(), "f": math.inf}
    trace: list[float] = []

    def cost(x):
        if len(trace) >= cfg.max_iterations:
            raise _BudgetSpent
        f = evaluator(bind(t, x), rng)
        if f < best["f"]:
            best["x"], best["f"] = np.array(x, dtype=float), f
        trace.append(best["f"])
        return f

    try:
        if cfg.method == "nelder-mead":
            simplex = np.vstack([x0, x0 + cfg.initial_simplex_scale * np.eye(len(x0))])
            minimize(
                cost,
                x0,
                method="Nelder-Mead",
                options={
                    "initial_simplex": simplex,
                    "xatol": cfg.tolerance,
                    "fatol": cfg.tolerance,
                    "adaptive": True,
                    "maxfev": cfg.max_iterations,
                    "maxiter": 10 * cfg.max_iterations,
                },
            )
        else:
            minimize(
                cost,
                x0,
                method="COBYLA",
                options={"rhobeg": cfg.initial_simplex_scale, "tol": cfg.tolerance, "maxiter": cfg.max_iterations},
            )
    except _BudgetSpent:
        pass
    return VqeResult(best["x"], best["f"], trace)
