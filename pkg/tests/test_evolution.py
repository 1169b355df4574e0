import math
from collections import Counter

import numpy as np
import pytest

from qcevo.evolution import (
    OPERATIONS,
    ApcdConfig,
    MutationConfig,
    af_gate_pool,
    apcd_gate_pool,
    build_apcd_prefix,
    choose_operation,
    evolve,
    mutate,
    random_gate,
    random_initial_circuit,
)
from qcevo.harness import run_seeds
from qcevo.problem import IsingModel, generate_instance, ising_from_spp, qubo_from_spp, solve_exact
from qcevo.simulator import (
    Circuit,
    Gate,
    GateKind,
    NoiseModel,
    expectation_exact,
    init_basis_state,
    init_plus_state,
    run_circuit,
)

DRAWS = 100_000


def sample_circuit(n, length, rng, pool=None):
    pool = pool or af_gate_pool()
    return Circuit(n, tuple(random_gate(n, pool, rng) for _ in range(length)))


class TestInitialCircuit:
    def test_single_gate(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            c = random_initial_circuit(5, rng)
            assert len(c) == 1
            g = c.gates[0]
            assert g.kind in (GateKind.RX, GateKind.RY, GateKind.RZ)
            assert 0 <= g.qubits[0] < 5 and 0 <= g.theta < 2 * math.pi

    def test_kind_frequencies(self):
        rng = np.random.default_rng(1)
        counts = Counter(random_initial_circuit(3, rng).gates[0].kind for _ in range(DRAWS))
        for kind in (GateKind.RX, GateKind.RY, GateKind.RZ):
            assert abs(counts[kind] / DRAWS - 1 / 3) < 0.01

    def test_deterministic(self):
        a = random_initial_circuit(4, np.random.default_rng(9))
        b = random_initial_circuit(4, np.random.default_rng(9))
        assert a == b


class TestPools:
    def test_af(self):
        pool = af_gate_pool()
        assert len(pool) == 9 and GateKind.RZZ in pool
        assert GateKind.CX not in pool and GateKind.CY not in pool

    def test_apcd(self):
        pool = apcd_gate_pool()
        assert len(pool) == 7
        assert GateKind.RY in pool and GateKind.RX not in pool and GateKind.RZ not in pool
        # one gate per generator of {Y, IX, IY, IZ, XX, YY, ZZ}
        generators = {
            GateKind.RY: "Y", GateKind.CRX: "IX", GateKind.CRY: "IY", GateKind.CRZ: "IZ",
            GateKind.RXX: "XX", GateKind.RYY: "YY", GateKind.RZZ: "ZZ",
        }
        assert set(pool) == set(generators)


class TestMutate:
    def test_operation_frequencies(self):
        rng = np.random.default_rng(2)
        counts = Counter(choose_operation((0.25,) * 4, rng) for _ in range(DRAWS))
        for op in OPERATIONS:
            assert abs(counts[op] / DRAWS - 0.25) < 0.01

    def test_length_change_frequencies(self):
        # INSERT grows by one, DELETE shrinks by one (length >= 2)
        rng = np.random.default_rng(3)
        cfg = MutationConfig()
        c = sample_circuit(4, 5, rng)
        delta = Counter(len(mutate(c, cfg, rng)) - len(c) for _ in range(DRAWS))
        assert abs(delta[1] / DRAWS - 0.25) < 0.01
        assert abs(delta[-1] / DRAWS - 0.25) < 0.01
        assert abs(delta[0] / DRAWS - 0.5) < 0.01

    def test_insert_and_delete_lengths(self):
        rng = np.random.default_rng(4)
        c = sample_circuit(3, 4, rng)
        assert len(mutate(c, MutationConfig(weights=(1, 0, 0, 0)), rng)) == 5
        assert len(mutate(c, MutationConfig(weights=(0, 1, 0, 0)), rng)) == 3

    def test_delete_keeps_single_gate(self):
        rng = np.random.default_rng(5)
        c = random_initial_circuit(3, rng)
        assert mutate(c, MutationConfig(weights=(0, 1, 0, 0)), rng) == c

    def test_swap_single_gate(self):
        rng = np.random.default_rng(6)
        c = random_initial_circuit(3, rng)
        out = mutate(c, MutationConfig(weights=(0, 0, 1, 0)), rng)
        assert len(out) == 1 and out != c

    def test_modify_with_vanishing_sigma(self):
        rng = np.random.default_rng(7)
        c = sample_circuit(3, 6, rng)
        out = mutate(c, MutationConfig(weights=(0, 0, 0, 1), modify_sigma=1e-15), rng)
        assert [(g.kind, g.qubits) for g in out.gates] == [(g.kind, g.qubits) for g in c.gates]
        assert all(abs(a.theta - b.theta) < 1e-12 for a, b in zip(out.gates, c.gates))

    def test_modify_perturbation_statistics(self):
        rng = np.random.default_rng(8)
        c = Circuit(1, (Gate("RY", (0,), 1.0),))
        cfg = MutationConfig(weights=(0, 0, 0, 1))
        eps = np.array([mutate(c, cfg, rng).gates[0].theta - 1.0 for _ in range(20_000)])
        assert abs(eps.mean()) < 4 * 0.1 / math.sqrt(len(eps))
        assert eps.std() == pytest.approx(0.1, rel=0.03)

    def test_insert_positions_uniform(self):
        rng = np.random.default_rng(10)
        base = Circuit(2, tuple(Gate("RX", (0,), 0.5) for _ in range(3)))
        cfg = MutationConfig(weights=(1, 0, 0, 0), gate_pool=(GateKind.RZ,))
        positions = Counter(
            next(k for k, g in enumerate(mutate(base, cfg, rng).gates) if g.kind is GateKind.RZ)
            for _ in range(20_000)
        )
        assert sorted(positions) == [0, 1, 2, 3]
        assert all(abs(v / 20_000 - 0.25) < 0.02 for v in positions.values())

    def test_input_not_modified(self):
        rng = np.random.default_rng(11)
        c = sample_circuit(3, 4, rng)
        snapshot = c.gates
        for _ in range(50):
            mutate(c, MutationConfig(), rng)
        assert c.gates == snapshot

    def test_genome_validity_and_pool_closure(self):
        rng = np.random.default_rng(12)
        for pool in (af_gate_pool(), apcd_gate_pool()):
            cfg = MutationConfig(gate_pool=tuple(pool))
            c = random_initial_circuit(5, rng, [k for k in pool if k.arity == 1])
            for _ in range(3000):
                c = mutate(c, cfg, rng)
                assert len(c) >= 1
            assert all(g.kind in pool for g in c.gates)
            assert all(0 <= q < 5 for g in c.gates for q in g.qubits)
            assert all(math.isfinite(g.theta) for g in c.gates)

    def test_linear_coupling_restricts_pairs(self):
        rng = np.random.default_rng(13)
        cfg = MutationConfig(weights=(1, 0, 0, 0), gate_pool=(GateKind.RXX,), coupling="linear")
        c = Circuit(6, (Gate("RY", (0,), 0.1),))
        for _ in range(200):
            c = mutate(c, cfg, rng)
        pairs = {g.qubits for g in c.gates if g.kind is GateKind.RXX}
        assert pairs and all(abs(a - b) == 1 for a, b in pairs)

    def test_two_qubit_pairs_distinct_and_ordered_uniformly(self):
        rng = np.random.default_rng(14)
        pairs = Counter(random_gate(3, [GateKind.CRX], rng).qubits for _ in range(30_000))
        assert len(pairs) == 6
        assert all(abs(v / 30_000 - 1 / 6) < 0.015 for v in pairs.values())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MutationConfig(weights=(0.5, 0.5, 0.5, 0.5))
        with pytest.raises(ValueError):
            MutationConfig(modify_sigma=0)
        with pytest.raises(ValueError):
            MutationConfig(offspring=0)


class TestApcdPrefix:
    def test_reference_settings(self):
        c = build_apcd_prefix(3, ApcdConfig(beta=0, delta=0.5), IsingModel.zero(3))
        assert c.gates == tuple(Gate("RX", (q,), 1.0) for q in range(3))

    def test_empty(self):
        assert len(build_apcd_prefix(3, ApcdConfig(beta=0, delta=0), IsingModel.zero(3))) == 0

    def test_problem_layer_is_invisible_to_the_measurement(self, tiny):
        h = ising_from_spp(tiny)
        ref = expectation_exact(run_circuit(build_apcd_prefix(3, ApcdConfig(0.0, 0.5), h), init_plus_state(3)), h)
        prefix = build_apcd_prefix(3, ApcdConfig(0.7, 0.5), h)
        assert any(g.kind is GateKind.RZZ for g in prefix.gates)
        got = expectation_exact(run_circuit(prefix, init_plus_state(3)), h)
        assert got == pytest.approx(ref, abs=1e-10)

    def test_problem_layer_realises_exp_of_hamiltonian(self, tiny):
        h = ising_from_spp(tiny)
        beta = 0.3
        prefix = build_apcd_prefix(3, ApcdConfig(beta, 0.0), h)
        out = run_circuit(prefix, init_plus_state(3)).amplitudes
        # exp(-i beta H) on a uniform state, up to the global phase from the offset
        expected = np.exp(-1j * beta * (h.energies - h.offset)) * 2 ** -1.5
        assert np.allclose(out, expected, atol=1e-12)

    def test_multi_step_schedule(self):
        h = IsingModel(2, (1.0, 0.0), {}, 0.0)
        c = build_apcd_prefix(2, ApcdConfig(beta=1.0, delta=0.5, trotter_steps=2), h)
        angles = [(g.kind.value, round(g.theta, 12)) for g in c.gates]
        assert angles == [("RX", 1.0), ("RX", 1.0), ("RZ", 1.0), ("RX", 0.5), ("RX", 0.5), ("RZ", 2.0)]

    def test_validation(self):
        with pytest.raises(ValueError):
            ApcdConfig(trotter_steps=0)


class TestEvolve:
    def test_zero_hamiltonian(self):
        for variant in ("af", "apcd"):
            state = evolve(IsingModel.zero(3), variant, generations=50, seed=1)
            assert state.trace == [0.0] * 51

    @pytest.mark.parametrize("variant", ["af", "apcd"])
    def test_trace_non_increasing_and_genome_valid(self, variant):
        inst = generate_instance(5, 3, (1, 9), seed=2)
        state = evolve(ising_from_spp(inst), variant, generations=300, seed=3)
        assert all(b <= a for a, b in zip(state.trace, state.trace[1:]))
        assert state.trace[-1] == state.parent_energy
        pool = af_gate_pool() if variant == "af" else apcd_gate_pool()
        assert all(g.kind in pool for g in state.parent.gates)
        if variant == "apcd":
            assert state.prefix.gates == tuple(Gate("RX", (q,), 1.0) for q in range(5))

    def test_parent_energy_reproduces(self):
        inst = generate_instance(4, 2, (1, 9), seed=5)
        h = ising_from_spp(inst)
        for variant, init in (("af", None), ("apcd", init_plus_state(4))):
            state = evolve(h, variant, generations=100, seed=4)
            start = init if init is not None else init_basis_state(4)
            assert expectation_exact(run_circuit(state.circuit, start), h) == pytest.approx(state.parent_energy, abs=1e-10)

    def test_sampled_trace_is_monotone(self):
        inst = generate_instance(4, 2, (1, 9), seed=6)
        state = evolve(ising_from_spp(inst), "apcd", generations=200, shots=64, seed=7)
        assert all(b <= a for a, b in zip(state.trace, state.trace[1:]))

    def test_noisy_run(self):
        inst = generate_instance(4, 2, (1, 9), seed=6)
        state = evolve(ising_from_spp(inst), "af", generations=100, shots=128, noise=NoiseModel({1}, 0.2), seed=1)
        assert len(state.trace) == 101

    def test_deterministic(self):
        inst = generate_instance(5, 3, (1, 9), seed=8)
        h = ising_from_spp(inst)
        a = evolve(h, "af", generations=200, seed=11)
        b = evolve(h, "af", generations=200, seed=11)
        assert a.trace == b.trace and a.parent == b.parent

    def test_worker_count_does_not_change_result(self):
        inst = generate_instance(5, 3, (1, 9), seed=8)
        h = ising_from_spp(inst)
        a = evolve(h, "apcd", generations=100, seed=12, shots=256)
        b = evolve(h, "apcd", generations=100, seed=12, shots=256, workers=3)
        assert a.trace == b.trace and a.parent == b.parent

    def test_early_stop(self):
        state = evolve(IsingModel.zero(2), "af", generations=10_000, seed=0, patience=20)
        assert state.generation == 20

    def test_snapshots(self):
        state = evolve(IsingModel.zero(2), "af", generations=30, seed=0, snapshot_every=10)
        assert [g for g, _ in state.snapshots] == [10, 20, 30]

    def test_validation(self):
        with pytest.raises(ValueError):
            evolve(IsingModel.zero(2), "af", generations=0)
        with pytest.raises(ValueError):
            evolve(IsingModel.zero(2), "qaoa", generations=1)

    def test_tiny_instance_reaches_optimum(self, tiny):
        # "equals the optimum" at report precision: ratio >= 0.995 prints as 1.00
        q = qubo_from_spp(tiny)
        _, best = solve_exact(q)
        h = ising_from_spp(tiny)
        finals = [evolve(h, "apcd", generations=2000, seed=s).parent_energy for s in run_seeds(0, 7)]
        hits = sum(best / e >= 0.995 for e in finals)
        assert hits >= 6, finals
