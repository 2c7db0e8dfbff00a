import math

import numpy as np
import pytest

from qfluct.core.errors import AssumptionViolated, OffSupport
from qfluct.core.fluctuation import (
    CHECKS,
    analyse,
    average_identity_residuals,
    average_information_content,
    crooks_check,
    increments,
    inequality_check,
    integral_ft,
    kl_divergence,
    landauer_check,
    support_view,
)
from qfluct.core.protocol import FINAL, INITIAL, Trajectory, make_process_spec, trajectory_distributions
from qfluct.core.states import quantum_mutual_information
from qfluct.db.preset_store import factor_swap
from tests.conftest import H_QUARTER, LN2, make_random_spec


def distributions(spec):
    frame, table = trajectory_distributions(spec)
    return spec, frame, table


class TestIntegralFluctuationTheorem:
    def test_full_rank_random_specs(self):
        for seed in range(20):
            _, frame, table = distributions(make_random_spec(seed, beta=[0.0, 0.5, 1.0, 2.0][seed % 4]))
            assert abs(integral_ft(table, frame) - 1.0) < 1e-9

    def test_rank_deficient_without_reservoir_is_exact(self):
        for seed in range(10):
            spec, frame, table = distributions(make_random_spec(seed, d_R=1, rank=1 + seed % 3))
            view = support_view(table, frame)
            assert view.reverse_mass_off_support < 1e-12
            assert abs(integral_ft(table, frame) - 1.0) < 1e-9

    def test_rank_deficient_accounts_for_reverse_mass_off_support(self):
        for seed in range(10):
            _, frame, table = distributions(make_random_spec(seed, d_R=2, rank=1 + seed % 3))
            view = support_view(table, frame)
            assert abs(integral_ft(table, frame) + view.reverse_mass_off_support - 1.0) < 1e-9

    def test_support_only_table_agrees(self):
        spec = make_random_spec(11, rank=2)
        frame, full = trajectory_distributions(spec)
        _, support = trajectory_distributions(spec, frame, support_only=True)
        assert integral_ft(full, frame) == pytest.approx(integral_ft(support, frame), abs=1e-12)
        assert support_view(support, frame).reverse_mass_off_support == pytest.approx(
            support_view(full, frame).reverse_mass_off_support, abs=1e-12
        )


class TestCrooks:
    def test_random_specs(self):
        for seed in range(10):
            _, frame, table = distributions(make_random_spec(seed, rank=1 + seed % 4))
            assert crooks_check(table, frame) < 1e-9

    def test_exponent_finite_on_support(self, random_distributions):
        _, frame, table = random_distributions
        view = support_view(table, frame)
        assert np.all(np.isfinite(view.increments.exponent))

    @pytest.mark.parametrize("d_R", [1, 2, 4])
    def test_exponent_bounded_on_support(self, d_R):
        bound = 64 * np.log(10)
        for seed in range(12):
            spec = make_random_spec(seed, d_R=d_R, beta=[0.0, 0.5, 1.0, 2.0][seed % 4], rank=1 + seed % 4)
            _, frame, table = distributions(spec)
            view = support_view(table, frame)
            assert np.max(np.abs(view.increments.exponent)) <= bound


class TestInequality:
    def test_slack_equals_relative_entropy(self):
        for seed in range(10):
            spec, frame, table = distributions(make_random_spec(seed, beta=1.5, rank=1 + seed % 4))
            report = analyse(spec, frame, table, checks=[])
            assert report.inequality_slack >= -1e-9
            assert report.inequality_slack == pytest.approx(kl_divergence(table, frame), abs=1e-9)

    def test_inequality_check_formula(self, random_distributions):
        spec, frame, table = random_distributions
        report = analyse(spec, frame, table, checks=[])
        expected = report.avg_ds_A + report.avg_ds_B - report.avg_dI - report.avg_betaQ
        assert inequality_check(report) == pytest.approx(expected)


class TestAverageIdentities:
    def test_random_specs(self):
        for seed in range(10):
            spec, frame, table = distributions(make_random_spec(seed, rank=1 + seed % 4))
            report = analyse(spec, frame, table, checks=[])
            residuals = average_identity_residuals(report, frame)
            assert max(residuals.values()) < 1e-9

    def test_information_content_is_mutual_information(self, random_distributions):
        _, frame, _ = random_distributions
        assert average_information_content(frame, INITIAL) == pytest.approx(
            quantum_mutual_information(frame.initial), abs=1e-10
        )
        assert average_information_content(frame, FINAL) == pytest.approx(
            quantum_mutual_information(frame.final), abs=1e-10
        )

    def test_information_content_finite_for_pure_marginals(self, toffoli_spec):
        frame, _ = trajectory_distributions(toffoli_spec)
        assert np.isfinite(average_information_content(frame, INITIAL))
        assert average_information_content(frame, INITIAL) == pytest.approx(
            quantum_mutual_information(frame.initial), abs=1e-10
        )
        assert np.isfinite(average_information_content(frame, FINAL))

    def test_information_content_zero_for_rotated_pure_product(self):
        rng = np.random.default_rng(5)
        psi_A = rng.normal(size=2) + 1j * rng.normal(size=2)
        psi_B = rng.normal(size=3) + 1j * rng.normal(size=3)
        psi = np.kron(psi_A / np.linalg.norm(psi_A), psi_B / np.linalg.norm(psi_B))
        spec = make_process_spec(np.outer(psi, psi.conj()), 2, 3, np.zeros((1, 1)), 1.0, np.eye(6))
        frame, _ = trajectory_distributions(spec)
        value = average_information_content(frame, INITIAL)
        assert np.isfinite(value)
        assert value == pytest.approx(0.0, abs=1e-10)


class TestWorkedExamples:
    def test_toffoli(self, toffoli_spec):
        spec, frame, table = distributions(toffoli_spec)
        report = analyse(spec, frame, table)
        assert report.avg_ds_A == pytest.approx(H_QUARTER, abs=1e-10)
        assert report.avg_ds_B == pytest.approx(H_QUARTER, abs=1e-10)
        assert report.avg_dI == pytest.approx(2 * H_QUARTER, abs=1e-10)
        assert report.avg_betaQ == 0.0
        assert report.inequality_slack == pytest.approx(0.0, abs=1e-10)
        assert report.ift_value == pytest.approx(1.0, abs=1e-10)
        assert report.passed

    def test_cnot_copy(self, preset_store):
        config = preset_store.get_scenario("cnot-copy")
        spec = make_process_spec(
            preset_store.build_state(config), 2, 2,
            preset_store.build_hamiltonian(config), 1.0,
            preset_store.build_unitary(config),
        )
        _, frame, table = distributions(spec)
        report = analyse(spec, frame, table)
        assert report.avg_ds_A == pytest.approx(LN2, abs=1e-10)
        assert report.avg_ds_B == pytest.approx(LN2, abs=1e-10)
        assert report.avg_dI == pytest.approx(2 * LN2, abs=1e-10)
        assert report.inequality_slack == pytest.approx(0.0, abs=1e-10)

    def test_identity_all_zero(self):
        rho = np.kron(np.diag([0.7, 0.3]), np.diag([0.4, 0.6]))
        spec = make_process_spec(rho, 2, 2, np.diag([0.0, 1.0]), 1.0, np.eye(8))
        _, frame, table = distributions(spec)
        report = analyse(spec, frame, table)
        for value in (report.avg_ds_A, report.avg_ds_B, report.avg_dI, report.avg_betaQ):
            assert value == pytest.approx(0.0, abs=1e-12)
        assert report.ift_value == pytest.approx(1.0, abs=1e-12)


class TestIncrements:
    def test_off_support_rejected(self, random_distributions):
        _, frame, _ = random_distributions
        with pytest.raises(OffSupport):
            increments(Trajectory(indices=(0,) * 8, p_forward=0.0), frame)

    def test_single_trajectory_matches_table(self, random_distributions):
        _, frame, table = random_distributions
        row = int(np.argmax(table.p_forward))
        single = increments(table.trajectory(row), frame)
        view = support_view(table, frame)
        position = int(np.flatnonzero(table.support_mask()).tolist().index(row))
        assert single.exponent == pytest.approx(view.increments.exponent[position])

    def test_heat_sign(self):
        # Full swap moves an excited A into a ground-state reservoir: heat flows into R
        rho = np.kron(np.diag([0.0, 1.0]), np.diag([1.0, 0.0]))
        U = factor_swap((2, 2, 2), 0, 2)
        spec = make_process_spec(rho, 2, 2, np.diag([0.0, 1.0]), 5.0, U)
        _, frame, table = distributions(spec)
        report = analyse(spec, frame, table, checks=[])
        assert report.avg_betaQ < 0


class TestClassicalReduction:
    def test_diagonal_state_with_permutation(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            populations = rng.dirichlet(np.ones(4))
            perm = rng.permutation(8)
            U = np.zeros((8, 8))
            U[perm, np.arange(8)] = 1.0
            spec = make_process_spec(np.diag(populations), 2, 2, np.diag([0.0, 0.7]), 1.0, U)
            _, frame, table = distributions(spec)
            report = analyse(spec, frame, table, checks=["classical_reduction"])
            assert report.checks[0].passed, report.checks[0]
            view = support_view(table, frame)
            np.testing.assert_allclose(view.increments.dI, view.increments.dJ, atol=1e-10)

    def test_not_applicable_to_entangled_states(self, random_distributions):
        spec, frame, table = random_distributions
        report = analyse(spec, frame, table, checks=["classical_reduction"])
        assert not report.checks[0].passed
        assert report.crooks_classical_max_relative_residual is None


class TestLandauer:
    def test_requires_unchanged_observer(self, random_distributions):
        spec, frame, table = random_distributions
        report = analyse(spec, frame, table, checks=[])
        with pytest.raises(AssumptionViolated):
            landauer_check(report, "quantum")

    def test_unknown_mode(self, random_distributions):
        spec, frame, table = random_distributions
        report = analyse(spec, frame, table, checks=[])
        with pytest.raises(ValueError):
            landauer_check(report, "relativistic")

    def test_quantum_bound_can_be_negative(self):
        v = 0.5
        bell = np.outer([1, 0, 0, 1], [1, 0, 0, 1]) / 2
        rho = v * bell + (1 - v) * np.eye(4) / 4
        spec = make_process_spec(rho, 2, 2, np.diag([0.0, 1.0]), 3.0, factor_swap((2, 2, 2), 0, 2))
        _, frame, table = distributions(spec)
        report = analyse(spec, frame, table, checks=[])
        assert report.avg_ds_A - report.avg_dI < 0
        assert landauer_check(report, "quantum") >= -1e-9


class TestAnalyse:
    def test_unknown_check(self, random_distributions):
        spec, frame, table = random_distributions
        with pytest.raises(ValueError):
            analyse(spec, frame, table, checks=["telepathy"])

    def test_all_default_checks_pass(self, random_distributions):
        spec, frame, table = random_distributions
        report = analyse(spec, frame, table, checks=[name for name in CHECKS if name not in (
            "classical_reduction", "landauer_classical", "landauer_quantum")])
        assert report.passed, report.failed_checks()

    def test_detailed_integral_matches_ift(self, random_distributions):
        spec, frame, table = random_distributions
        report = analyse(spec, frame, table, checks=[])
        assert report.detailed_integral_value == pytest.approx(report.ift_value, abs=1e-10)

    def test_entropy_table(self, toffoli_spec):
        spec, frame, table = distributions(toffoli_spec)
        report = analyse(spec, frame, table, checks=[])
        assert report.entropies["S_AB_final"] == pytest.approx(0.0, abs=1e-10)
        assert report.entropies["S_A_final"] == pytest.approx(H_QUARTER, abs=1e-10)
        assert math.isclose(report.quantum_mi_final, 2 * H_QUARTER, abs_tol=1e-10)
