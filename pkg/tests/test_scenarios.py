import math

import numpy as np
import pytest

from qfluct.core.errors import CheckFailed, ConfigInvalid
from qfluct.core.scenarios import (
    build_process_spec,
    landauer_witness_search,
    run_scenario,
    run_scenario_detailed,
    sweep,
    trajectory_records,
    trajectory_rows,
)
from qfluct.db.preset_store import factor_swap, partial_swap
from qfluct.models.scenario import ModeSpec, ScenarioConfig, StateSpec, UnitarySpec, decode_matrix
from tests.conftest import H_QUARTER, LN2


class TestBuiltInScenarios:
    def test_toffoli(self, preset_store):
        report = run_scenario(preset_store.get_scenario("toffoli"))
        assert report.avg_ds_A == pytest.approx(H_QUARTER, abs=1e-10)
        assert report.avg_ds_B == pytest.approx(H_QUARTER, abs=1e-10)
        assert report.avg_dI == pytest.approx(2 * H_QUARTER, abs=1e-10)
        assert report.avg_betaQ == 0.0
        assert report.inequality_slack == pytest.approx(0.0, abs=1e-10)
        assert report.passed

    def test_cnot_copy(self, preset_store):
        report = run_scenario(preset_store.get_scenario("cnot-copy"))
        assert report.avg_ds_A == pytest.approx(LN2, abs=1e-10)
        assert report.avg_dI == pytest.approx(2 * LN2, abs=1e-10)
        assert report.passed

    def test_identity(self, preset_store):
        report = run_scenario(preset_store.get_scenario("identity"))
        assert report.ift_value == pytest.approx(1.0, abs=1e-12)
        for value in (report.avg_ds_A, report.avg_ds_B, report.avg_dI, report.avg_betaQ):
            assert value == pytest.approx(0.0, abs=1e-12)

    def test_haar_random(self, preset_store):
        report = run_scenario(preset_store.get_scenario("haar-random"))
        assert abs(report.ift_value - 1.0) < 1e-9
        assert report.passed, report.failed_checks()

    def test_landauer_classical(self, preset_store):
        report = run_scenario(preset_store.get_scenario("landauer-classical"))
        assert report.passed, report.failed_checks()

    def test_landauer_quantum_witness(self, preset_store):
        report = run_scenario(preset_store.get_scenario("landauer-quantum"))
        assert report.avg_ds_A - report.avg_dI < 0
        assert report.passed, report.failed_checks()

    def test_haar_sampled(self, preset_store):
        report = run_scenario(preset_store.get_scenario("haar-sampled"))
        assert report.mode == "sampled"
        assert report.standard_errors["ift"] > 0
        assert [check.name for check in report.checks] == ["ift", "inequality"]
        assert report.passed
        assert "crooks" in report.provenance["skipped_checks"]


class TestDegeneracyRobustness:
    def test_rotated_degenerate_basis(self, preset_store):
        base = preset_store.get_scenario("degenerate")
        reports = [
            run_scenario(base.model_copy(update={"basis_rotation_seed": seed}))
            for seed in (None, 1, 2)
        ]
        for report in reports[1:]:
            for field in ("ift_value", "avg_ds_A", "avg_ds_B", "avg_dI", "avg_betaQ", "inequality_slack"):
                assert getattr(report, field) == pytest.approx(getattr(reports[0], field), abs=1e-9)

    def test_rotation_changes_basis(self, preset_store):
        base = preset_store.get_scenario("degenerate")
        canonical, _ = build_process_spec(base)
        rotated, _ = build_process_spec(base.model_copy(update={"basis_rotation_seed": 1}))
        assert not np.allclose(canonical.bipartite_initial.joint.basis, rotated.bipartite_initial.joint.basis)


class TestRunScenario:
    def test_unknown_check(self, preset_store):
        config = preset_store.get_scenario("identity").model_copy(update={"checks": ["telepathy"]})
        with pytest.raises(ConfigInvalid):
            run_scenario(config)

    def test_invalid_literal_state(self):
        config = ScenarioConfig(
            d_A=1, d_B=2,
            initial_state=StateSpec(kind="literal", matrix=[[[0.6, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.6, 0.0]]]),
        )
        with pytest.raises(ConfigInvalid):
            run_scenario(config)

    def test_preset_dimension_mismatch(self):
        config = ScenarioConfig(d_A=2, d_B=3, initial_state=StateSpec(kind="bell"))
        with pytest.raises(ConfigInvalid):
            run_scenario(config)

    def test_raise_on_failure(self, preset_store):
        # The haar-random state is entangled, so the classical reduction does not apply
        config = preset_store.get_scenario("haar-random").model_copy(update={"checks": ["classical_reduction"]})
        with pytest.raises(CheckFailed) as excinfo:
            run_scenario(config, raise_on_failure=True)
        assert excinfo.value.check == "classical_reduction"

    def test_report_is_deterministic(self, preset_store):
        config = preset_store.get_scenario("haar-random")
        first = run_scenario(config, workers=1).model_dump_json(indent=2)
        second = run_scenario(config, workers=3).model_dump_json(indent=2)
        assert first == second

    def test_sampled_report_is_deterministic(self, preset_store):
        config = preset_store.get_scenario("haar-random").model_copy(
            update={"mode": ModeSpec(kind="sample", n=25_000, seed=5)}
        )
        first = run_scenario(config, workers=1).model_dump_json()
        second = run_scenario(config, workers=2).model_dump_json()
        assert first == second

    def test_support_only_matches_full(self, preset_store):
        config = preset_store.get_scenario("cnot-copy")
        full = run_scenario(config)
        support = run_scenario(config.model_copy(update={"support_only": True}))
        assert support.ift_value == pytest.approx(full.ift_value, abs=1e-12)
        assert support.support_size == full.support_size


class TestTrajectoryRows:
    def test_rows_and_records(self, preset_store):
        run = run_scenario_detailed(preset_store.get_scenario("cnot-copy"))
        rows = trajectory_rows(run.frame, run.table)
        assert rows.shape == (len(run.table), 15)
        mask = run.table.support_mask()
        assert np.all(np.isnan(rows[~mask, 10:]))
        assert np.all(np.isfinite(rows[mask, 10:]))

        records = trajectory_records(run.frame, run.table)
        assert len(records) == len(run.table)
        assert records[0].m == 0 and records[-1].r_f == 0

    def test_ift_recomputed_from_rows(self, preset_store):
        run = run_scenario_detailed(preset_store.get_scenario("haar-random"))
        rows = trajectory_rows(run.frame, run.table)
        supported = rows[~np.isnan(rows[:, 10])]
        exponent = -supported[:, 10] - supported[:, 11] + supported[:, 12] + supported[:, 14]
        assert np.sum(supported[:, 8] * np.exp(exponent)) == pytest.approx(1.0, abs=1e-9)


class TestSweep:
    def test_haar_sweep(self):
        summary = sweep(12, (2, 2, 2), [0.0, 0.5, 1.0, 2.0], seed=1)
        assert summary.n_instances == 12
        assert summary.max_ift_residual < 1e-9
        assert summary.max_crooks_residual < 1e-9
        assert summary.min_inequality_slack > -1e-9
        assert summary.max_kl_residual < 1e-9
        assert summary.max_average_identity_residual < 1e-9
        assert summary.passed

    @pytest.mark.parametrize("d_R", [1, 4])
    def test_reservoir_sizes(self, d_R):
        summary = sweep(4, (2, 2, d_R), [1.0], seed=d_R)
        assert summary.passed

    def test_classical_family(self):
        summary = sweep(6, (2, 2, 2), [0.5, 1.0], seed=3, family="classical")
        assert summary.passed

    @pytest.mark.parametrize("d_R", [1, 2, 4])
    def test_acceptance_scale_haar(self, d_R):
        summary = sweep(34, (2, 2, d_R), [0.0, 0.5, 1.0, 2.0], seed=100 + d_R)
        assert summary.n_instances == 34
        assert {row.rank for row in summary.rows} <= {1, 2, 3, 4}
        assert {row.beta for row in summary.rows} == {0.0, 0.5, 1.0, 2.0}
        assert summary.passed

    def test_acceptance_scale_classical(self):
        summary = sweep(24, (2, 2, 2), [0.0, 0.5, 1.0, 2.0], seed=42, family="classical")
        assert summary.n_instances == 24
        assert summary.passed

    def test_seeded_sweep_reproducible(self):
        first = sweep(3, (2, 2, 2), [1.0], seed=9)
        second = sweep(3, (2, 2, 2), [1.0], seed=9)
        assert first.model_dump_json() == second.model_dump_json()

    def test_fixed_rank(self):
        summary = sweep(3, (2, 2, 2), [1.0], seed=0, rank=1)
        assert all(row.rank == 1 for row in summary.rows)

    @pytest.mark.parametrize("kwargs", [
        {"n_instances": 0},
        {"dims": (2, 2)},
        {"betas": []},
        {"betas": [float("inf")]},
        {"rank": 5},
        {"family": "quantum"},
    ])
    def test_invalid_arguments(self, kwargs):
        arguments = {"n_instances": 1, "dims": (2, 2, 2), "betas": [1.0], "seed": 0}
        arguments.update(kwargs)
        with pytest.raises(ConfigInvalid):
            sweep(**arguments)


class TestLandauerWitness:
    def test_full_swap_is_a_witness(self):
        rows, witness = landauer_witness_search(0.5, 3.0, [0.0, math.pi / 4, math.pi / 2])
        assert len(rows) == 3
        assert rows[0].bound == pytest.approx(0.0, abs=1e-9)
        assert witness is not None
        assert all(row.slack >= -1e-9 for row in rows)

    def test_no_witness_without_coupling(self):
        rows, witness = landauer_witness_search(0.5, 3.0, [0.0])
        assert witness is None
        assert rows[0].beta_heat == pytest.approx(0.0, abs=1e-12)


class TestPresets:
    def test_partial_swap_endpoints(self):
        swap = factor_swap((2, 2), 0, 1)
        np.testing.assert_allclose(partial_swap(swap, 0.0), np.eye(4))
        np.testing.assert_allclose(partial_swap(swap, math.pi / 2), -1j * swap, atol=1e-15)

    def test_swap_AR_leaves_B(self):
        swap = factor_swap((2, 2, 2), 0, 2)
        # |a=1, b=0, r=0> -> |a=0, b=0, r=1>
        assert swap[1, 4] == 1.0

    def test_expand_round_trip(self, preset_store):
        config = preset_store.get_scenario("landauer-quantum")
        expanded = preset_store.expand(config)
        assert expanded.U.kind == "literal"
        np.testing.assert_array_equal(decode_matrix(expanded.U.matrix), preset_store.build_unitary(config))
        reparsed = ScenarioConfig.model_validate_json(expanded.model_dump_json())
        assert reparsed.model_dump() == expanded.model_dump()

    def test_expanded_config_gives_same_report(self, preset_store):
        config = preset_store.get_scenario("haar-random")
        original = run_scenario(config)
        expanded = run_scenario(preset_store.expand(config))
        assert expanded.ift_value == pytest.approx(original.ift_value, abs=1e-14)
        assert expanded.avg_dI == pytest.approx(original.avg_dI, abs=1e-14)

    def test_unknown_scenario(self, preset_store):
        assert preset_store.get_scenario("no-such-scenario") is None

    def test_toffoli_gate(self, preset_store):
        U = preset_store.build_unitary(preset_store.get_scenario("toffoli"))
        assert U[7, 6] == 1.0 and U[6, 7] == 1.0 and U[6, 6] == 0.0

    def test_permutation_unitary(self):
        config = ScenarioConfig(
            d_A=2, d_B=2, d_R=2,
            initial_state=StateSpec(kind="maximally-mixed"),
            U=UnitarySpec(kind="permutation", seed=4),
        )
        report = run_scenario(config)
        assert report.passed
