"""Dense reference evolution: weak faults, per-path trajectories, path sums."""

import numpy as np
import pytest

from collapsim import oracle, qmath
from collapsim.medium import FaultPath, FaultSpec, GateSpec, Medium
from collapsim.oracle import (
    DenseLimitError,
    composite_fault,
    evolve_by_path,
    evolve_exact,
    output_distribution_exact,
    path_sum_exact,
    weak_fault_step,
)
from collapsim.qmath import DensityMatrix

from conftest import FIXTURE_BUILDERS, random_density, random_unitary


PLUS = DensityMatrix(np.full((2, 2), 0.5, dtype=complex))
Z_FAULT = FaultSpec.z_basis()
X_FAULT = FaultSpec.x_basis()


def ghz(eta):
    return FIXTURE_BUILDERS["ghz3"](eta)


class TestWeakFault:
    def test_eta_zero_is_identity(self):
        rho = random_density(np.random.default_rng(0), 2)
        out = weak_fault_step(rho, 1, Z_FAULT, 0.0)
        np.testing.assert_allclose(out.matrix, rho.matrix, atol=1e-15)

    def test_eta_one_is_unconditioned_measurement(self):
        rho = random_density(np.random.default_rng(1), 2)
        out = weak_fault_step(rho, 0, Z_FAULT, 1.0)
        expected = qmath.measure_unconditioned(rho, Z_FAULT.observable, (0,))
        np.testing.assert_allclose(out.matrix, expected.matrix, atol=1e-12)

    def test_half_dephases_plus(self):
        out = weak_fault_step(PLUS, 0, Z_FAULT, 0.5)
        np.testing.assert_allclose(
            out.matrix, np.array([[0.5, 0.25], [0.25, 0.5]]), atol=1e-12
        )

    def test_rejects_bad_eta(self):
        with pytest.raises(ValueError, match="eta"):
            weak_fault_step(PLUS, 0, Z_FAULT, 1.5)


class TestEvolveExact:
    def test_noiseless_ghz(self):
        rho = evolve_exact(ghz(0.0), Z_FAULT, "000")
        expected = np.zeros((8, 8))
        for i in (0, 7):
            for j in (0, 7):
                expected[i, j] = 0.5
        np.testing.assert_allclose(rho.matrix, expected, atol=1e-12)

    def test_full_decoherence_kills_coherences(self):
        rho = evolve_exact(ghz(1.0), Z_FAULT, "000")
        off_diag = rho.matrix - np.diag(rho.matrix.diagonal())
        assert np.abs(off_diag).max() < 1e-12

    def test_trace_and_hermiticity_every_step(self):
        records = []
        evolve_exact(ghz(0.4), X_FAULT, "010", record=lambda *a: records.append(a))
        assert records
        for _, _, _, matrix in records:
            assert abs(matrix.trace().real - 1.0) < 1e-10
            assert qmath.is_hermitian(matrix)

    def test_dense_cap(self):
        m = Medium(13, tuple((0, 0) for _ in range(13)), (), 0.0, tuple(range(13)))
        with pytest.raises(DenseLimitError, match="dense cap"):
            evolve_exact(m, Z_FAULT, "0" * 13)

    def test_monotone_decoherence_of_ghz_coherence(self):
        mags = []
        for eta in (0.0, 0.25, 0.5, 0.75, 1.0):
            rho = evolve_exact(ghz(eta), Z_FAULT, "000")
            mags.append(abs(rho.matrix[0, 7]))
        assert all(a >= b - 1e-12 for a, b in zip(mags, mags[1:]))


class TestEvolveByPath:
    def test_empty_path_is_noiseless(self):
        m = ghz(0.7)
        rho = evolve_by_path(m, Z_FAULT, FaultPath(frozenset()), "000")
        np.testing.assert_allclose(
            rho.matrix, evolve_exact(ghz(0.0), Z_FAULT, "000").matrix, atol=1e-12
        )

    def test_dephasing_fixes_classical_circuits(self):
        # X gates keep computational basis states diagonal, so Z collapses
        # at every site change nothing
        gates = (
            GateSpec("unitary", qmath.PAULI_X, (0,), 0),
            GateSpec("unitary", qmath.CNOT, (0, 1), 1),
        )
        m = Medium(2, ((0, 1), (0, 1)), gates, 0.5, (0, 1))
        empty = evolve_by_path(m, Z_FAULT, FaultPath(frozenset()), "00")
        full = evolve_by_path(m, Z_FAULT, FaultPath.of(m.sites()), "00")
        np.testing.assert_allclose(empty.matrix, full.matrix, atol=1e-12)

    def test_single_fault_after_h_dephases_ghz(self):
        m = ghz(0.3)
        rho = evolve_by_path(m, Z_FAULT, FaultPath.of([(0, 0)]), "000")
        # the fault hits right after the Hadamard: populations survive,
        # coherence between 000 and 111 does not
        assert rho.matrix[0, 0].real == pytest.approx(0.5, abs=1e-12)
        assert rho.matrix[7, 7].real == pytest.approx(0.5, abs=1e-12)
        assert abs(rho.matrix[0, 7]) < 1e-12

    def test_rejects_event_outside_lifetime(self):
        with pytest.raises(ValueError, match="outside lifetime"):
            evolve_by_path(ghz(0.3), Z_FAULT, FaultPath.of([(0, 9)]), "000")

    def test_same_step_faults_commute(self):
        rng = np.random.default_rng(2)
        rho = random_density(rng, 3)
        a = qmath.measure_unconditioned(rho, Z_FAULT.observable, (0,))
        a = qmath.measure_unconditioned(a, Z_FAULT.observable, (2,))
        b = qmath.measure_unconditioned(rho, Z_FAULT.observable, (2,))
        b = qmath.measure_unconditioned(b, Z_FAULT.observable, (0,))
        np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-12)


class TestPathSum:
    def test_eta_zero_single_path(self):
        m = ghz(0.0)
        np.testing.assert_allclose(
            path_sum_exact(m, Z_FAULT, "000").matrix,
            evolve_by_path(m, Z_FAULT, FaultPath(frozenset()), "000").matrix,
            atol=1e-12,
        )

    def test_eta_one_single_path(self):
        m = FIXTURE_BUILDERS["bell_measure"](1.0)
        np.testing.assert_allclose(
            path_sum_exact(m, Z_FAULT, "00").matrix,
            evolve_by_path(m, Z_FAULT, FaultPath.of(m.sites()), "00").matrix,
            atol=1e-12,
        )

    def test_matches_superoperator_on_random_circuits(self):
        # small version of the acceptance identity: five random circuits
        rng = np.random.default_rng(3)
        for seed in range(5):
            gates = []
            for t in range(3):
                u = random_unitary(rng, 4)
                pair = tuple(int(x) for x in rng.choice(3, size=2, replace=False))
                gates.append(GateSpec("unitary", u, pair, t))
            m = Medium(3, ((0, 2),) * 3, tuple(gates), float(rng.uniform(0.1, 0.9)), (0, 1, 2))
            fault = Z_FAULT if seed % 2 == 0 else X_FAULT
            lhs = evolve_exact(m, fault, "010")
            rhs = path_sum_exact(m, fault, "010")
            np.testing.assert_allclose(lhs.matrix, rhs.matrix, atol=1e-10)


class TestCompositeFault:
    def test_single_fault_wraps_to_same_channel(self):
        channel, eta = composite_fault([(Z_FAULT, 0.3)])
        assert eta == pytest.approx(0.3)
        m = ghz(0.3)
        np.testing.assert_allclose(
            evolve_exact(m, channel, "000").matrix,
            evolve_exact(m, Z_FAULT, "000").matrix,
            atol=1e-12,
        )

    def test_two_same_faults_merge_rates(self):
        channel, eta = composite_fault([(Z_FAULT, 0.1), (Z_FAULT, 0.1)])
        assert eta == pytest.approx(0.2)
        m = ghz(0.2)
        np.testing.assert_allclose(
            evolve_exact(m, channel, "000").matrix,
            evolve_exact(m, Z_FAULT, "000").matrix,
            atol=1e-12,
        )

    def test_mixed_faults_match_hand_expansion(self):
        # one qubit, one step: weak step of the composite channel must equal
        # (1-etaZ-etaX) rho + etaZ Z(rho) + etaX X(rho), summed by hand
        channel, eta = composite_fault([(Z_FAULT, 0.1), (X_FAULT, 0.1)])
        assert eta == pytest.approx(0.2)
        rho = random_density(np.random.default_rng(7), 1)
        lhs = weak_fault_step(rho, 0, channel, eta).matrix
        z_hit = qmath.measure_unconditioned(rho, Z_FAULT.observable, (0,)).matrix
        x_hit = qmath.measure_unconditioned(rho, X_FAULT.observable, (0,)).matrix
        rhs = 0.8 * rho.matrix + 0.1 * z_hit + 0.1 * x_hit
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_rejects_negative_rate(self):
        with pytest.raises(ValueError, match="non-negative"):
            composite_fault([(Z_FAULT, -0.1)])

    def test_rejects_rate_above_one(self):
        with pytest.raises(ValueError, match="exceeds 1"):
            composite_fault([(Z_FAULT, 0.7), (X_FAULT, 0.7)])


class TestOutputDistribution:
    def test_ghz_noiseless(self):
        dist = output_distribution_exact(ghz(0.0), Z_FAULT, "000")
        assert dist == pytest.approx({"000": 0.5, "111": 0.5})

    @pytest.mark.parametrize("name", sorted(FIXTURE_BUILDERS))
    def test_sums_to_one(self, name):
        m = FIXTURE_BUILDERS[name](0.45)
        n = m.num_qubits
        dist = output_distribution_exact(m, X_FAULT, "0" * n)
        assert sum(dist.values()) == pytest.approx(1.0, abs=1e-10)

    def test_matches_path_sum_distribution(self):
        gates = (
            GateSpec("unitary", qmath.HADAMARD, (0,), 0),
            GateSpec("unitary", qmath.CNOT, (0, 1), 1),
        )
        m = Medium(2, ((0, 1), (0, 1)), gates, 0.3, (0, 1))
        exact = output_distribution_exact(m, Z_FAULT, "00")
        rho = path_sum_exact(m, Z_FAULT, "00")
        probs = rho.matrix.diagonal().real
        for i, p in enumerate(probs):
            assert exact.get(format(i, "02b"), 0.0) == pytest.approx(p, abs=1e-10)

    def test_staggered_handles_death_and_birth(self):
        m = FIXTURE_BUILDERS["staggered"](0.2)
        dist = output_distribution_exact(m, Z_FAULT, "000")
        assert sum(dist.values()) == pytest.approx(1.0, abs=1e-10)
        assert all(len(k) == 2 for k in dist)
