"""Set partitioning instances and their penalized QUBO / Ising encodings.

Spin convention used throughout the package: ``x = (1 - z) / 2``, so bit 0
maps to spin +1. Decision variable ``p`` is qubit ``p``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Sequence

import numpy as np

MAX_EXACT_VARIABLES = 26
_CHUNK_BITS = 20


class InstanceError(ValueError):
    """Malformed or invalid instance data."""


class BudgetError(ValueError):
    """Problem too large for exhaustive enumeration."""


@dataclass(frozen=True)
class SppInstance:
    items: tuple
    partitions: tuple  # of (frozenset of items, weight)
    name: str = ""

    def __post_init__(self):
        if len(self.partitions) < 1:
            raise InstanceError("partitions: n >= 1 violated (no partitions)")
        known = set(self.items)
        if len(known) != len(self.items):
            raise InstanceError("items: duplicate item identifiers")
        for k, (subset, weight) in enumerate(self.partitions):
            if not subset:
                raise InstanceError(f"partitions[{k}]: empty subset")
            unknown = [i for i in subset if i not in known]
            if unknown:
                raise InstanceError(f"partitions[{k}].items: unknown item {unknown[0]!r}")
            if not math.isfinite(weight) or weight < 0:
                raise InstanceError(f"partitions[{k}].weight: must be finite and >= 0, got {weight!r}")

    @property
    def n(self) -> int:
        return len(self.partitions)

    @property
    def weights(self) -> list[float]:
        return [w for _, w in self.partitions]

    def is_feasible(self, x: Sequence[int]) -> bool:
        """True when ``x`` covers every item exactly once."""
        cover = {i: 0 for i in self.items}
        for (subset, _), bit in zip(self.partitions, x):
            if bit:
                for i in subset:
                    cover[i] += 1
        return all(c == 1 for c in cover.values())

    def to_json(self) -> str:
        doc = {
            "name": self.name,
            "items": list(self.items),
            "partitions": [
                {"items": [i for i in self.items if i in subset], "weight": w}
                for subset, w in self.partitions
            ],
        }
        return json.dumps(doc, indent=2)


@dataclass(frozen=True)
class PenaltyVector:
    c: tuple[float, ...]

    def __post_init__(self):
        if any(not (v > 0) for v in self.c):
            raise ValueError("penalty coefficients must be > 0")


@dataclass(frozen=True)
class QuboModel:
    """f(x) = offset + sum_i linear[i] x_i + sum_{i<j} quadratic[(i, j)] x_i x_j."""

    n: int
    linear: tuple[float, ...]
    quadratic: dict = field(default_factory=dict)
    offset: float = 0.0

    def __post_init__(self):
        if len(self.linear) != self.n:
            raise ValueError("linear length must equal n")
        for i, j in self.quadratic:
            if not 0 <= i < j < self.n:
                raise ValueError(f"quadratic key {(i, j)} must satisfy 0 <= i < j < n")

    def energies(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Objective for every basis index in ``[start, stop)``; bit p of the index is x_p."""
        stop = (1 << self.n) if stop is None else stop
        idx = np.arange(start, stop, dtype=np.int64)
        bits = [((idx >> p) & 1).astype(np.float64) for p in range(self.n)]
        out = np.full(idx.shape, float(self.offset))
        for p, a in enumerate(self.linear):
            if a:
                out += a * bits[p]
        for (i, j), b in sorted(self.quadratic.items()):
            if b:
                out += b * (bits[i] * bits[j])
        return out


@dataclass(frozen=True)
class IsingModel:
    """E(z) = offset + sum_i h[i] z_i + sum_{i<j} J[(i, j)] z_i z_j, z in {+1, -1}."""

    n: int
    h: tuple[float, ...]
    J: dict = field(default_factory=dict)
    offset: float = 0.0

    def __post_init__(self):
        if len(self.h) != self.n:
            raise ValueError("h length must equal n")
        for i, j in self.J:
            if not 0 <= i < j < self.n:
                raise ValueError(f"J key {(i, j)} must satisfy 0 <= i < j < n")

    def energy(self, z: Sequence[int]) -> float:
        if len(z) != self.n:
            raise ValueError(f"expected {self.n} spins, got {len(z)}")
        e = float(self.offset)
        for i, hi in enumerate(self.h):
            e += hi * z[i]
        for (i, j), jij in sorted(self.J.items()):
            e += jij * z[i] * z[j]
        return e

    def bitstring_energy(self, bits: Sequence[int]) -> float:
        return self.energy([1 - 2 * b for b in bits])

    @cached_property
    def energies(self) -> np.ndarray:
        """Diagonal of the Hamiltonian, indexed by basis state (qubit p = bit p)."""
        idx = np.arange(1 << self.n, dtype=np.int64)
        spins = [1.0 - 2.0 * ((idx >> p) & 1) for p in range(self.n)]
        out = np.full(idx.shape, float(self.offset))
        for p, hp in enumerate(self.h):
            if hp:
                out += hp * spins[p]
        for (i, j), jij in sorted(self.J.items()):
            if jij:
                out += jij * (spins[i] * spins[j])
        out.setflags(write=False)
        return out

    @classmethod
    def zero(cls, n: int) -> "IsingModel":
        return cls(n, (0.0,) * n, {}, 0.0)


def _check_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceError(f"{where}: expected a number, got {value!r}")
    return float(value)


def parse_instance(data: bytes | str) -> SppInstance:
    """Parse and validate one instance from its JSON text."""
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InstanceError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InstanceError("top level: expected an object")
    for key in ("items", "partitions"):
        if key not in doc:
            raise InstanceError(f"top level: missing key {key!r}")
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise InstanceError("name: expected a string")
    items = doc["items"]
    if not isinstance(items, list):
        raise InstanceError("items: expected a list")
    for k, item in enumerate(items):
        if isinstance(item, bool) or not isinstance(item, (str, int)):
            raise InstanceError(f"items[{k}]: expected str or int, got {item!r}")
    raw_parts = doc["partitions"]
    if not isinstance(raw_parts, list):
        raise InstanceError("partitions: expected a list")
    if not raw_parts:
        raise InstanceError("partitions: n >= 1 violated (no partitions)")

    known = set(items)
    parts = []
    for k, part in enumerate(raw_parts):
        if not isinstance(part, dict) or "items" not in part or "weight" not in part:
            raise InstanceError(f"partitions[{k}]: expected an object with 'items' and 'weight'")
        members = part["items"]
        if not isinstance(members, list):
            raise InstanceError(f"partitions[{k}].items: expected a list")
        for m, item in enumerate(members):
            if isinstance(item, bool) or not isinstance(item, Hashable) or item not in known:
                raise InstanceError(f"partitions[{k}].items[{m}]: unknown item {item!r}")
        if len(set(members)) != len(members):
            raise InstanceError(f"partitions[{k}].items: duplicate item")
        weight = _check_number(part["weight"], f"partitions[{k}].weight")
        if not math.isfinite(weight) or weight < 0:
            raise InstanceError(f"partitions[{k}].weight: must be finite and >= 0, got {weight!r}")
        parts.append((frozenset(members), weight))

    inst = SppInstance(tuple(items), tuple(parts), name)
    prefix = re.match(r"^(\d+)\.", name)
    if prefix and int(prefix.group(1)) != inst.n:
        raise InstanceError(
            f"name: numeral prefix {prefix.group(1)} does not match {inst.n} partitions"
        )
    return inst


def load_instance(path) -> SppInstance:
    with open(path, "rb") as fh:
        return parse_instance(fh.read())


def generate_instance(
    n_partitions: int,
    n_items: int,
    weight_range: tuple[float, float] = (1, 10),
    seed: int = 0,
    name: str | None = None,
) -> SppInstance:
    """Random instance with a planted exact cover.

    The items are first split into random non-empty blocks which become
    partitions (the planted cover); the remaining partitions are random
    subsets. Integer bounds give integer weights.
    """
    if n_items < 1 or n_partitions < n_items:
        raise ValueError("need n_partitions >= n_items >= 1")
    lo, hi = weight_range
    if lo < 0 or hi < lo:
        raise ValueError("weight_range must satisfy 0 <= lo <= hi")
    rng = np.random.default_rng(seed)
    integral = float(lo).is_integer() and float(hi).is_integer()

    def draw_weight() -> float:
        if integral:
            return float(rng.integers(int(lo), int(hi) + 1))
        return float(rng.uniform(lo, hi))

    items = tuple(range(1, n_items + 1))
    n_blocks = int(rng.integers(1, n_items + 1))
    order = rng.permutation(n_items)
    # cut points split the shuffled items into n_blocks non-empty runs
    cuts = np.sort(rng.choice(np.arange(1, n_items), size=n_blocks - 1, replace=False)) if n_blocks > 1 else []
    planted = [frozenset(items[i] for i in block) for block in np.split(order, cuts)]

    subsets = list(planted)
    while len(subsets) < n_partitions:
        size = int(rng.integers(1, n_items + 1))
        subsets.append(frozenset(items[i] for i in rng.choice(n_items, size=size, replace=False)))
    perm = rng.permutation(n_partitions)
    partitions = tuple((subsets[k], draw_weight()) for k in perm)
    return SppInstance(items, partitions, name if name is not None else f"{n_partitions}.s{seed}")


def default_penalties(inst: SppInstance) -> PenaltyVector:
    """Uniform c_i = 1 + sum of all weights, above any feasible objective."""
    c = 1.0 + float(sum(inst.weights))
    return PenaltyVector((c,) * len(inst.items))


def qubo_from_spp(inst: SppInstance, pen: PenaltyVector | None = None) -> QuboModel:
    """sum_p w_p x_p + sum_i c_i (sum_{p: i in I_p} x_p - 1)^2, expanded with x^2 = x."""
    pen = default_penalties(inst) if pen is None else pen
    if len(pen.c) != len(inst.items):
        raise ValueError("penalty vector length must match item count")
    n = inst.n
    linear = [float(w) for w in inst.weights]
    quadratic: dict[tuple[int, int], float] = {}
    offset = 0.0
    for item, ci in zip(inst.items, pen.c):
        covering = [p for p, (subset, _) in enumerate(inst.partitions) if item in subset]
        offset += ci
        for p in covering:
            linear[p] -= ci
        for a in range(len(covering)):
            for b in range(a + 1, len(covering)):
                key = (covering[a], covering[b])
                quadratic[key] = quadratic.get(key, 0.0) + 2.0 * ci
    return QuboModel(n, tuple(linear), quadratic, offset)


def ising_from_qubo(q: QuboModel) -> IsingModel:
    """Substitute x_i = (1 - z_i) / 2."""
    h = [0.0] * q.n
    J: dict[tuple[int, int], float] = {}
    offset = float(q.offset)
    for i, a in enumerate(q.linear):
        offset += a / 2
        h[i] -= a / 2
    for (i, j), b in sorted(q.quadratic.items()):
        offset += b / 4
        h[i] -= b / 4
        h[j] -= b / 4
        J[(i, j)] = J.get((i, j), 0.0) + b / 4
    return IsingModel(q.n, tuple(h), J, offset)


def ising_from_spp(inst: SppInstance, pen: PenaltyVector | None = None) -> IsingModel:
    return ising_from_qubo(qubo_from_spp(inst, pen))


def evaluate_qubo(q: QuboModel, x: Sequence[int]) -> float:
    if len(x) != q.n:
        raise ValueError(f"expected {q.n} variables, got {len(x)}")
    e = float(q.offset)
    for i, a in enumerate(q.linear):
        if x[i]:
            e += a
    for (i, j), b in sorted(q.quadratic.items()):
        if x[i] and x[j]:
            e += b
    return e


def _msb_first_value(index: int, n: int) -> int:
    # x_0 is the most significant digit
    return int(format(index, f"0{n}b")[::-1], 2) if n else 0


def solve_exact(q: QuboModel) -> tuple[tuple[int, ...], float]:
    """Global minimum by exhaustive enumeration.

    Ties go to the assignment with the smallest binary value when read
    x_0 first (most significant).
    """
    if q.n > MAX_EXACT_VARIABLES:
        raise BudgetError(f"n={q.n} exceeds the enumeration budget of {MAX_EXACT_VARIABLES}")
    total = 1 << q.n
    chunk = 1 << _CHUNK_BITS
    best_e = math.inf
    best_idx: list[int] = []
    for start in range(0, total, chunk):
        e = q.energies(start, min(total, start + chunk))
        m = float(e.min())
        hits = (np.flatnonzero(e == m) + start).tolist()
        if m < best_e:
            best_e, best_idx = m, hits
        elif m == best_e:
            best_idx.extend(hits)
    winner = min(best_idx, key=lambda k: _msb_first_value(k, q.n))
    x = tuple((winner >> p) & 1 for p in range(q.n))
    return x, evaluate_qubo(q, x)
