"""Statevector simulation over the rotation gate set.

Conventions:

* qubit 0 is the least significant bit of a basis index; bitstrings are
  rendered with qubit 0 rightmost;
* R_G(theta) = exp(-i theta/2 G) for G in {X, Y, Z, XX, YY, ZZ};
* two-qubit matrices act on |q_a q_b> with the first listed qubit as the high
  bit, so controlled gates read |control target>.

A circuit is lowered to flat integer/float arrays once and executed by a
single compiled kernel call.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
from numba import njit

from .problem import IsingModel

MAX_QUBITS = 26


class GateKind(str, Enum):
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    RXX = "RXX"
    RYY = "RYY"
    RZZ = "RZZ"
    CRX = "CRX"
    CRY = "CRY"
    CRZ = "CRZ"
    CX = "CX"
    CY = "CY"

    @property
    def arity(self) -> int:
        return 1 if self in _SINGLE else 2

    @property
    def parametric(self) -> bool:
        return self not in (GateKind.CX, GateKind.CY)


_SINGLE = frozenset({GateKind.RX, GateKind.RY, GateKind.RZ})

# kernel opcodes; PX/PY/PZ are the bare Paulis used for noise insertion
_OP = {k: i for i, k in enumerate(GateKind)}
_RX, _RY, _RZ, _RXX, _RYY, _RZZ, _CRX, _CRY, _CRZ, _CX, _CY = range(11)
_PX, _PY, _PZ = 11, 12, 13
_PAULI_OPS = (-1, _PX, _PY, _PZ)  # index 0 = identity


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    qubits: tuple[int, ...]
    theta: float | None = None

    def __post_init__(self):
        kind = GateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if len(self.qubits) != kind.arity:
            raise ValueError(f"{kind.value} acts on {kind.arity} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"{kind.value}: qubit indices must be distinct, got {self.qubits}")
        if kind.parametric:
            if self.theta is None or not math.isfinite(self.theta):
                raise ValueError(f"{kind.value} needs a finite angle")
            object.__setattr__(self, "theta", float(self.theta))
        elif self.theta is not None:
            raise ValueError(f"{kind.value} takes no angle")

    def inverse(self) -> "Gate":
        if self.kind.parametric:
            return Gate(self.kind, self.qubits, -self.theta)
        return self  # CX and CY are involutions

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "qubits": list(self.qubits), "theta": self.theta}

    @classmethod
    def from_dict(cls, d: dict) -> "Gate":
        return cls(GateKind(d["kind"]), tuple(d["qubits"]), d.get("theta"))


@dataclass(frozen=True)
class Circuit:
    n: int
    gates: tuple[Gate, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        for k, g in enumerate(self.gates):
            if any(q < 0 or q >= self.n for q in g.qubits):
                raise ValueError(f"gate {k} ({g.kind.value}{g.qubits}) out of range for n={self.n}")

    def __len__(self) -> int:
        return len(self.gates)

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n != self.n:
            raise ValueError("qubit counts differ")
        return Circuit(self.n, self.gates + other.gates)

    @cached_property
    def program(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(opcodes, first qubit, second qubit, angle) arrays for the kernel."""
        m = len(self.gates)
        ops = np.empty(m, dtype=np.int64)
        qa = np.empty(m, dtype=np.int64)
        qb = np.full(m, -1, dtype=np.int64)
        th = np.zeros(m, dtype=np.float64)
        for k, g in enumerate(self.gates):
            ops[k] = _OP[g.kind]
            qa[k] = g.qubits[0]
            if len(g.qubits) == 2:
                qb[k] = g.qubits[1]
            if g.theta is not None:
                th[k] = g.theta
        return ops, qa, qb, th

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "gates": [g.to_dict() for g in self.gates]})

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        doc = json.loads(text)
        return cls(doc["n"], tuple(Gate.from_dict(d) for d in doc["gates"]))


@dataclass
class StateVector:
    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n,):
            raise ValueError(f"expected {1 << self.n} amplitudes, got {self.amplitudes.shape}")

    def copy(self) -> "StateVector":
        return StateVector(self.n, self.amplitudes.copy())

    def probabilities(self) -> np.ndarray:
        return _probabilities(self.amplitudes)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))


@dataclass(frozen=True)
class NoiseModel:
    noisy_qubits: frozenset = field(default_factory=frozenset)
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "noisy_qubits", frozenset(int(q) for q in self.noisy_qubits))
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")

    def restricted(self, n: int) -> "NoiseModel":
        return NoiseModel(frozenset(q for q in self.noisy_qubits if 0 <= q < n), self.epsilon)

    def to_dict(self) -> dict:
        return {"noisy_qubits": sorted(self.noisy_qubits), "epsilon": self.epsilon}


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _insert_zero(k, pos):
    return ((k >> pos) << (pos + 1)) | (k & ((1 << pos) - 1))


@njit(cache=True)
def _fill_single(op, theta, m):
    c = math.cos(theta / 2)
    s = math.sin(theta / 2)
    if op == _RX or op == _CRX:
        m[0, 0] = c
        m[0, 1] = -1j * s
        m[1, 0] = -1j * s
        m[1, 1] = c
    elif op == _RY or op == _CRY:
        m[0, 0] = c
        m[0, 1] = -s
        m[1, 0] = s
        m[1, 1] = c
    elif op == _RZ or op == _CRZ:
        m[0, 0] = complex(c, -s)
        m[0, 1] = 0
        m[1, 0] = 0
        m[1, 1] = complex(c, s)
    elif op == _CX or op == _PX:
        m[0, 0] = 0
        m[0, 1] = 1
        m[1, 0] = 1
        m[1, 1] = 0
    elif op == _CY or op == _PY:
        m[0, 0] = 0
        m[0, 1] = -1j
        m[1, 0] = 1j
        m[1, 1] = 0
    else:  # _PZ
        m[0, 0] = 1
        m[0, 1] = 0
        m[1, 0] = 0
        m[1, 1] = -1


@njit(cache=True)
def _fill_pair(op, theta, m):
    c = math.cos(theta / 2)
    s = math.sin(theta / 2)
    m[:, :] = 0
    if op == _RZZ:
        m[0, 0] = complex(c, -s)
        m[1, 1] = complex(c, s)
        m[2, 2] = complex(c, s)
        m[3, 3] = complex(c, -s)
        return
    for d in range(4):
        m[d, d] = c
    if op == _RXX:
        m[0, 3] = -1j * s
        m[1, 2] = -1j * s
        m[2, 1] = -1j * s
        m[3, 0] = -1j * s
    else:  # _RYY
        m[0, 3] = 1j * s
        m[1, 2] = -1j * s
        m[2, 1] = -1j * s
        m[3, 0] = 1j * s


@njit(cache=True, nogil=True)
def _apply_single(state, q, m):
    step = 1 << q
    m00, m01, m10, m11 = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    for k in range(state.shape[0] >> 1):
        i0 = _insert_zero(k, q)
        i1 = i0 | step
        a = state[i0]
        b = state[i1]
        state[i0] = m00 * a + m01 * b
        state[i1] = m10 * a + m11 * b


@njit(cache=True, nogil=True)
def _apply_controlled(state, ctrl, tgt, m):
    lo = min(ctrl, tgt)
    hi = max(ctrl, tgt)
    cbit = 1 << ctrl
    tbit = 1 << tgt
    m00, m01, m10, m11 = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    for k in range(state.shape[0] >> 2):
        i0 = _insert_zero(_insert_zero(k, lo), hi) | cbit
        i1 = i0 | tbit
        a = state[i0]
        b = state[i1]
        state[i0] = m00 * a + m01 * b
        state[i1] = m10 * a + m11 * b


@njit(cache=True, nogil=True)
def _apply_pair(state, qa, qb, m):
    lo = min(qa, qb)
    hi = max(qa, qb)
    abit = 1 << qa
    bbit = 1 << qb
    for k in range(state.shape[0] >> 2):
        i00 = _insert_zero(_insert_zero(k, lo), hi)
        i01 = i00 | bbit
        i10 = i00 | abit
        i11 = i10 | bbit
        v0 = state[i00]
        v1 = state[i01]
        v2 = state[i10]
        v3 = state[i11]
        state[i00] = m[0, 0] * v0 + m[0, 1] * v1 + m[0, 2] * v2 + m[0, 3] * v3
        state[i01] = m[1, 0] * v0 + m[1, 1] * v1 + m[1, 2] * v2 + m[1, 3] * v3
        state[i10] = m[2, 0] * v0 + m[2, 1] * v1 + m[2, 2] * v2 + m[2, 3] * v3
        state[i11] = m[3, 0] * v0 + m[3, 1] * v1 + m[3, 2] * v2 + m[3, 3] * v3


@njit(cache=True, nogil=True)
def _apply_zz_phase(state, qa, qb, theta):
    # diagonal fast path for RZZ
    even = complex(math.cos(theta / 2), -math.sin(theta / 2))
    odd = complex(math.cos(theta / 2), math.sin(theta / 2))
    for i in range(state.shape[0]):
        if ((i >> qa) ^ (i >> qb)) & 1:
            state[i] *= odd
        else:
            state[i] *= even


@njit(cache=True, nogil=True)
def _run_program(state, ops, qa, qb, thetas):
    m2 = np.empty((2, 2), dtype=np.complex128)
    m4 = np.empty((4, 4), dtype=np.complex128)
    for g in range(ops.shape[0]):
        op = ops[g]
        if op <= _RZ or op >= _PX:
            _fill_single(op, thetas[g], m2)
            _apply_single(state, qa[g], m2)
        elif op == _RZZ:
            _apply_zz_phase(state, qa[g], qb[g], thetas[g])
        elif op <= _RYY:
            _fill_pair(op, thetas[g], m4)
            _apply_pair(state, qa[g], qb[g], m4)
        else:
            _fill_single(op, thetas[g], m2)
            _apply_controlled(state, qa[g], qb[g], m2)


@njit(cache=True, nogil=True)
def _probabilities(state):
    out = np.empty(state.shape[0], dtype=np.float64)
    for i in range(state.shape[0]):
        out[i] = state[i].real * state[i].real + state[i].imag * state[i].imag
    return out


@njit(cache=True, nogil=True)
def _expectation(state, energies):
    acc = 0.0
    for i in range(state.shape[0]):
        acc += (state[i].real * state[i].real + state[i].imag * state[i].imag) * energies[i]
    return acc


# ------------------------------------------------------------- public API


def _check_n(n: int) -> None:
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")


def init_basis_state(n: int) -> StateVector:
    _check_n(n)
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n, amps)


def init_plus_state(n: int) -> StateVector:
    _check_n(n)
    return StateVector(n, np.full(1 << n, 2.0 ** (-n / 2), dtype=np.complex128))


def gate_matrix(g: Gate) -> np.ndarray:
    """2x2 or 4x4 unitary; controlled gates as |0><0| (x) I + |1><1| (x) R."""
    op = _OP[g.kind]
    theta = 0.0 if g.theta is None else g.theta
    if g.kind.arity == 1:
        m = np.empty((2, 2), dtype=np.complex128)
        _fill_single(op, theta, m)
        return m
    if g.kind in (GateKind.RXX, GateKind.RYY, GateKind.RZZ):
        m = np.empty((4, 4), dtype=np.complex128)
        _fill_pair(op, theta, m)
        return m
    r = np.empty((2, 2), dtype=np.complex128)
    _fill_single(op, theta, r)
    m = np.eye(4, dtype=np.complex128)
    m[2:, 2:] = r
    return m


def apply_gate(s: StateVector, g: Gate) -> StateVector:
    """Return a new state with ``g`` applied."""
    if any(q >= s.n for q in g.qubits):
        raise ValueError(f"gate qubits {g.qubits} out of range for n={s.n}")
    out = s.copy()
    _run_program(out.amplitudes, *Circuit(s.n, (g,)).program)
    return out


def sample_noise_events(c: Circuit, noise: NoiseModel | None, rng: np.random.Generator) -> dict:
    """Map gate position -> index 1..15 of the two-qubit Pauli inserted after it.

    Pauli index p encodes (first operand, second operand) = (p // 4, p % 4)
    with 0..3 meaning I, X, Y, Z.
    """
    if noise is None or noise.epsilon <= 0 or not noise.noisy_qubits:
        return {}
    events = {}
    for k, g in enumerate(c.gates):
        if len(g.qubits) == 2 and not noise.noisy_qubits.isdisjoint(g.qubits):
            if rng.random() < noise.epsilon:
                events[k] = int(rng.integers(1, 16))
    return events


def _with_events(c: Circuit, events: dict) -> tuple:
    if not events:
        return c.program
    ops, qa, qb, th = (list(a) for a in c.program)
    # insert from the back so earlier positions stay valid
    for k in sorted(events, reverse=True):
        p = events[k]
        a, b = c.gates[k].qubits
        extra = [(_PAULI_OPS[p // 4], a), (_PAULI_OPS[p % 4], b)]
        extra = [(op, q) for op, q in extra if op >= 0]
        for j, (op, q) in enumerate(extra):
            ops.insert(k + 1 + j, op)
            qa.insert(k + 1 + j, q)
            qb.insert(k + 1 + j, -1)
            th.insert(k + 1 + j, 0.0)
    return (
        np.array(ops, dtype=np.int64),
        np.array(qa, dtype=np.int64),
        np.array(qb, dtype=np.int64),
        np.array(th, dtype=np.float64),
    )


def run_circuit(
    c: Circuit,
    init: StateVector,
    noise: NoiseModel | None = None,
    rng: np.random.Generator | None = None,
) -> StateVector:
    """Apply ``c`` to a copy of ``init``; with noise, one stochastic trajectory."""
    if c.n != init.n:
        raise ValueError(f"circuit has {c.n} qubits but state has {init.n}")
    out = init.copy()
    events = {}
    if noise is not None:
        if rng is None:
            raise ValueError("a noisy run needs an rng")
        events = sample_noise_events(c, noise, rng)
    _run_program(out.amplitudes, *_with_events(c, events))
    return out


def expectation_exact(s: StateVector, h: IsingModel) -> float:
    if s.n != h.n:
        raise ValueError(f"state has {s.n} qubits but Hamiltonian has {h.n}")
    return float(_expectation(s.amplitudes, h.energies))


def bitstring(index: int, n: int) -> str:
    return format(index, f"0{n}b")


def sample_counts(s: StateVector, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial shot counts per basis index."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p = s.probabilities()
    p /= p.sum()
    return rng.multinomial(shots, p)


def sample_bitstrings(s: StateVector, shots: int, rng: np.random.Generator) -> dict[str, int]:
    counts = sample_counts(s, shots, rng)
    return {bitstring(int(k), s.n): int(counts[k]) for k in np.flatnonzero(counts)}


def expectation_sampled(counts: dict[str, int], h: IsingModel) -> float:
    total = sum(counts.values())
    if not counts or total <= 0:
        raise ValueError("counts are empty")
    acc = 0.0
    for key in sorted(counts):
        acc += counts[key] * float(h.energies[int(key, 2)])
    return acc / total


class Evaluator:
    """Energy of circuits applied to a fixed initial state.

    ``shots=None`` gives the exact expectation. With a noise model each
    evaluation averages ``trajectories`` stochastic trajectories; in sampled
    mode the shots are split evenly across them. Trajectories without any
    error event share one noiseless simulation.
    """

    def __init__(
        self,
        h: IsingModel,
        init: StateVector,
        shots: int | None = None,
        noise: NoiseModel | None = None,
        trajectories: int = 16,
    ):
        if init.n != h.n:
            raise ValueError("initial state and Hamiltonian sizes differ")
        if shots is not None and shots < 1:
            raise ValueError("shots must be >= 1")
        if trajectories < 1:
            raise ValueError("trajectories must be >= 1")
        self.h = h
        self.init = init
        self.shots = shots
        self.noise = None
        if noise is not None:
            noise = noise.restricted(h.n)
            if noise.epsilon > 0 and noise.noisy_qubits:
                self.noise = noise
        self.trajectories = trajectories if self.noise is not None else 1
        self.energies = h.energies

    def _simulate(self, program) -> np.ndarray:
        state = self.init.amplitudes.copy()
        _run_program(state, *program)
        return state

    def _measure(self, state: np.ndarray, shots: int | None, rng) -> float:
        if shots is None:
            return float(_expectation(state, self.energies))
        p = _probabilities(state)
        p /= p.sum()
        counts = rng.multinomial(shots, p)
        return float(counts @ self.energies) / shots

    def __call__(self, c: Circuit, rng: np.random.Generator | None = None) -> float:
        if self.noise is None:
            return self._measure(self._simulate(c.program), self.shots, rng)
        groups: dict = {}
        for t in range(self.trajectories):
            events = sample_noise_events(c, self.noise, rng)
            key = tuple(sorted(events.items()))
            groups.setdefault(key, []).append(t)
        if self.shots is None:
            share = [None] * self.trajectories
        else:
            base, extra = divmod(self.shots, self.trajectories)
            share = [base + (1 if t < extra else 0) for t in range(self.trajectories)]
        total = 0.0
        for key, members in groups.items():
            state = self._simulate(_with_events(c, dict(key)))
            if self.shots is None:
                total += len(members) * self._measure(state, None, rng)
            else:
                shots = sum(share[t] for t in members)
                if shots:
                    total += shots * self._measure(state, shots, rng)
        return total / (self.trajectories if self.shots is None else self.shots)
