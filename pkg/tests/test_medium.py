"""Medium validation, fault paths, generators and the circuit JSON format."""

import numpy as np
import pytest
from scipy import stats

from collapsim import qmath
from collapsim.medium import (
    BASIC_MEASUREMENT,
    FaultPath,
    FaultSpec,
    GateSpec,
    Medium,
    dumps_circuit,
    enumerate_fault_paths,
    fault_sites,
    load_circuit,
    medium_from_dict,
    medium_to_dict,
    nearest_neighbor_medium,
    path_weight,
    random_matching_medium,
    sample_fault_path,
    sequential_medium,
    validate,
)

from conftest import CIRCUITS_DIR, FIXTURE_BUILDERS


def empty_medium(n=1, last=0, eta=0.0):
    return Medium(n, tuple((0, last) for _ in range(n)), (), eta, ())


class TestValidate:
    def test_empty_circuit_ok(self):
        assert validate(empty_medium()) == []

    def test_time_collision(self):
        gates = (
            GateSpec("unitary", qmath.PAULI_X, (0,), 1),
            GateSpec("unitary", qmath.HADAMARD, (0,), 1),
        )
        m = Medium(1, ((0, 2),), gates, 0.0, (0,))
        assert any("collision" in v for v in validate(m))

    def test_dead_target(self):
        gates = (GateSpec("unitary", qmath.PAULI_X, (0,), 5),)
        m = Medium(2, ((0, 3), (0, 5)), gates, 0.0, (1,))
        assert any("not alive" in v for v in validate(m))

    def test_non_unitary_matrix(self):
        gates = (GateSpec("unitary", np.diag([1.0, 2.0]), (0,), 0),)
        m = Medium(1, ((0, 0),), gates, 0.0, (0,))
        assert any("not unitary" in v for v in validate(m))

    def test_measurement_must_be_hermitian(self):
        gates = (GateSpec("measurement", np.array([[0, 1], [0, 0]]), (0,), 0),)
        m = Medium(1, ((0, 0),), gates, 0.0, (0,))
        assert any("not hermitian" in v for v in validate(m))

    def test_fan_in_cap(self):
        big = np.eye(8, dtype=complex)
        gates = (GateSpec("unitary", big, (0, 1, 2), 0),)
        m = Medium(3, ((0, 0),) * 3, gates, 0.0, ())
        assert any("fan-in" in v for v in validate(m))
        assert not any("fan-in" in v for v in validate(m, max_fan_in=3))

    def test_eta_range(self):
        assert any("decoherence rate" in v for v in validate(empty_medium(eta=1.5)))

    def test_result_qubit_must_survive(self):
        m = Medium(2, ((0, 3), (0, 1)), (), 0.0, (1,))
        assert any("dies at" in v for v in validate(m))

    def test_timings_start_at_zero(self):
        m = Medium(1, ((1, 2),), (), 0.0, (0,))
        assert any("born at time 0" in v for v in validate(m))

    def test_generated_circuits_are_valid(self):
        rng = np.random.default_rng(0)
        for _ in range(3):
            assert validate(random_matching_medium(6, 5, 0.4, rng)) == []
            assert validate(sequential_medium(5, 7, 0.2, rng)) == []
        assert validate(nearest_neighbor_medium(7, 6, 0.5)) == []

    def test_mutated_circuits_are_rejected(self):
        rng = np.random.default_rng(1)
        base = random_matching_medium(4, 3, 0.4, rng)
        # same-step collision
        g0 = base.gates[0]
        clash = GateSpec("unitary", qmath.HADAMARD, (g0.targets[0],), g0.time)
        assert validate(Medium(4, base.lifetimes, base.gates + (clash,), 0.4, base.result_qubits))
        # target outside lifetime
        late = GateSpec("unitary", qmath.HADAMARD, (0,), base.duration + 1)
        assert validate(Medium(4, base.lifetimes, base.gates + (late,), 0.4, base.result_qubits))
        # broken matrix
        bad = GateSpec("unitary", np.diag([1.0, 3.0]), (0,), base.duration)
        assert validate(Medium(4, base.lifetimes, (bad,), 0.4, base.result_qubits))


class TestFaultSites:
    def test_single_qubit(self):
        assert fault_sites(empty_medium(1, 3)) == 4

    def test_uniform_lifetimes(self):
        assert fault_sites(empty_medium(3, 6)) == 3 * 7

    def test_staggered(self):
        m = Medium(2, ((0, 2), (1, 3)), (), 0.0, ())
        assert fault_sites(m) == 6


class TestPathWeight:
    def test_eta_zero(self):
        m = empty_medium(1, 3, eta=0.0)
        assert path_weight(m, FaultPath.of([])) == 1.0
        assert path_weight(m, FaultPath.of([(0, 1)])) == 0.0

    def test_eta_one(self):
        m = empty_medium(1, 3, eta=1.0)
        all_sites = FaultPath.of(m.sites())
        assert path_weight(m, all_sites) == 1.0

    def test_half(self):
        m = empty_medium(1, 3, eta=0.5)
        assert path_weight(m, FaultPath.of([(0, 0), (0, 2)])) == pytest.approx(0.0625)

    def test_rejects_event_outside_lifetime(self):
        m = Medium(1, ((1, 2),), (), 0.5, ())
        with pytest.raises(ValueError, match="outside lifetime"):
            path_weight(m, FaultPath.of([(0, 0)]))


class TestSampleFaultPath:
    def test_eta_zero_always_empty(self, rng):
        m = empty_medium(2, 4, eta=0.0)
        for _ in range(20):
            assert len(sample_fault_path(m, rng)) == 0

    def test_eta_one_always_full(self, rng):
        m = empty_medium(2, 4, eta=1.0)
        v = fault_sites(m)
        for _ in range(20):
            assert len(sample_fault_path(m, rng)) == v

    def test_binomial_mean(self, rng):
        # mean |sigma| = eta * V; tolerance ~4 sigma of the sample mean
        m = empty_medium(2, 4, eta=0.3)
        assert fault_sites(m) == 10
        samples = 10**5
        total = sum(len(sample_fault_path(m, rng)) for _ in range(samples))
        assert total / samples == pytest.approx(3.0, abs=0.05)

    def test_chi_squared_against_enumeration(self, rng):
        # V=6 at eta=0.3: empirical path frequencies over 1e6 samples track
        # the enumerated weights
        m = Medium(2, ((0, 2), (0, 2)), (), 0.3, ())
        sites = m.sites()
        assert len(sites) == 6
        index = {s: i for i, s in enumerate(sites)}
        counts = np.zeros(64, dtype=np.int64)
        samples = 10**6
        for _ in range(samples):
            key = 0
            for event in sample_fault_path(m, rng).events:
                key |= 1 << index[event]
            counts[key] += 1
        expected = np.zeros(64)
        for path, w in enumerate_fault_paths(m):
            key = 0
            for event in path.events:
                key |= 1 << index[event]
            expected[key] = w * samples
        result = stats.chisquare(counts, expected)
        assert result.pvalue > 0.001


class TestEnumerate:
    def test_no_sites(self):
        m = Medium(0, (), (), 0.3, ())
        assert enumerate_fault_paths(m) == [(FaultPath(frozenset()), 1.0)]

    def test_two_sites_half(self):
        m = empty_medium(1, 1, eta=0.5)
        paths = enumerate_fault_paths(m)
        assert len(paths) == 4
        assert all(w == pytest.approx(0.25) for _, w in paths)

    @pytest.mark.parametrize("eta", [0.0, 0.25, 0.5, 0.97, 1.0])
    def test_weights_sum_to_one(self, eta):
        m = empty_medium(3, 3, eta=eta)
        assert fault_sites(m) == 12
        total = sum(w for _, w in enumerate_fault_paths(m))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_cap(self):
        m = empty_medium(3, 6)
        with pytest.raises(ValueError, match="cap"):
            enumerate_fault_paths(m)


class TestGenerators:
    def test_matching_structure(self):
        rng = np.random.default_rng(3)
        m = random_matching_medium(6, 4, 0.2, rng)
        for t in range(4):
            touched = [q for g in m.gates_by_time[t] for q in g.targets]
            assert sorted(touched) == list(range(6))

    def test_matching_odd_leaves_one_out(self):
        rng = np.random.default_rng(4)
        m = random_matching_medium(5, 3, 0.2, rng)
        for t in range(3):
            touched = [q for g in m.gates_by_time[t] for q in g.targets]
            assert len(touched) == 4 and len(set(touched)) == 4

    def test_nearest_neighbor_alternation(self):
        m = nearest_neighbor_medium(6, 2, 0.2)
        even = sorted(g.targets for g in m.gates_by_time[0])
        odd = sorted(g.targets for g in m.gates_by_time[1])
        assert even == [(0, 1), (2, 3), (4, 5)]
        assert odd == [(1, 2), (3, 4)]

    def test_sequential_one_gate_per_step(self):
        rng = np.random.default_rng(5)
        m = sequential_medium(5, 9, 0.2, rng)
        assert all(len(m.gates_by_time[t]) == 1 for t in range(9))

    def test_default_gate_entangles(self):
        from collapsim.medium import DEFAULT_TWO_QUBIT_GATE
        from collapsim.qmath import DensityMatrix, apply_unitary, basis_state, kron2, reduce

        joint = DensityMatrix(kron2(basis_state(0), basis_state(0)))
        out = apply_unitary(joint, DEFAULT_TWO_QUBIT_GATE, (0, 1))
        marginal = reduce(out, (0,))
        # fully entangled pair: the one-qubit marginal is maximally mixed
        np.testing.assert_allclose(marginal.matrix, np.eye(2) / 2, atol=1e-12)


class TestJsonFormat:
    @pytest.mark.parametrize("name", ["ghz3", "bell_measure", "staggered"])
    def test_round_trip_shipped_files(self, name):
        path = CIRCUITS_DIR / f"{name}.json"
        medium, fault = load_circuit(path)
        assert validate(medium) == []
        text = dumps_circuit(medium, fault)
        medium2, fault2 = medium_from_dict(__import__("json").loads(text))
        assert medium2 == medium
        assert fault2 == fault
        assert dumps_circuit(medium2, fault2) == text

    def test_round_trip_generated(self):
        rng = np.random.default_rng(6)
        m = random_matching_medium(4, 3, 0.35, rng)
        fault = FaultSpec.x_basis()
        data = medium_to_dict(m, fault)
        m2, f2 = medium_from_dict(data)
        assert m2 == m and f2 == fault

    def test_missing_field_is_reported(self):
        with pytest.raises(ValueError, match="missing field"):
            medium_from_dict({"n": 1})

    def test_basic_measurement_outcomes_are_bits(self):
        values = sorted(v for v, _ in BASIC_MEASUREMENT.eigenpairs)
        assert values == [0.0, 1.0]


class TestFixtureSuite:
    @pytest.mark.parametrize("name", sorted(FIXTURE_BUILDERS))
    def test_all_fixtures_valid_and_small(self, name):
        m = FIXTURE_BUILDERS[name](0.3)
        assert validate(m) == []
        assert m.num_qubits <= 3
        assert m.duration <= 4
