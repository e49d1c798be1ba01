from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from keyterrain.errors import EmptyMissionError, ScoreInputError, UnknownNodeError
from keyterrain.mission import parse_mission
from keyterrain.scoring import (
    DEFAULT_WEIGHTS,
    MEDIUM,
    PARTICIPATION_POSITIVE,
    ScoreWeights,
    Sensitivity,
    atas,
    classify_kcts,
    compare_with_expected,
    cumulative_severity,
    macs,
    mth,
    score_matrices,
    score_mission,
    tacs,
    tsas,
    tth,
)
from test_mission import doc

unit = st.floats(min_value=0.0, max_value=1.0)


class TestWeightsAndSensitivity:
    def test_default_is_three_fifths_one_fifth_one_fifth(self):
        assert (DEFAULT_WEIGHTS.mw, DEFAULT_WEIGHTS.bw, DEFAULT_WEIGHTS.tw) == (
            pytest.approx(0.6), pytest.approx(0.2), pytest.approx(0.2)
        )

    def test_non_normalized_weights_rejected(self):
        with pytest.raises(ScoreInputError, match="sum to 1"):
            ScoreWeights(0.5, 0.5, 0.5)

    def test_weight_out_of_range(self):
        with pytest.raises(ScoreInputError, match="out of range"):
            ScoreWeights(1.2, -0.1, -0.1)

    def test_sensitivity_bounds(self):
        with pytest.raises(ScoreInputError):
            Sensitivity(1.5)
        assert Sensitivity(0.0).k == 0.0


class TestAtas:
    def test_two_parallel_paths(self):
        model = parse_mission(
            doc(
                tasks=[("T1", 0.5)],
                assets=[("I1", "information"), ("I2", "information"), ("S1", "service")],
                asset_edges=[
                    ("T1", "I1", 0.6), ("I1", "S1", 0.5),
                    ("T1", "I2", 1.0), ("I2", "S1", 0.5),
                ],
            )
        )
        # paths 0.3 and 0.5 -> 1 - 0.7*0.5
        assert atas(model, "T1", "S1") == pytest.approx(0.65)

    def test_no_path_is_zero(self):
        model = parse_mission(doc(tasks=[("T1", 0.5)], assets=[("S1", "service")]))
        assert atas(model, "T1", "S1") == 0.0

    def test_unknown_ids(self):
        model = parse_mission(doc(tasks=[("T1", 0.5)], assets=[("S1", "service")]))
        with pytest.raises(UnknownNodeError):
            atas(model, "T9", "S1")
        with pytest.raises(UnknownNodeError):
            atas(model, "T1", "S9")

    def test_paths_do_not_route_through_other_tasks(self):
        # T1 depends on T2 and T2 on A1; asset aggregation must not chain
        # through T2 (severity propagation handles inter-task influence).
        model = parse_mission(
            doc(
                tasks=[("T1", 0.5), ("T2", 0.5)],
                assets=[("A1", "service")],
                task_edges=[("T1", "T2", 0.9)],
                asset_edges=[("T2", "A1", 1.0)],
            )
        )
        assert atas(model, "T1", "A1") == 0.0
        assert atas(model, "T2", "A1") == 1.0


class TestCumulativeSeverity:
    def test_product(self):
        assert cumulative_severity(0.8, 0.5) == pytest.approx(0.4)

    def test_zero_degree(self):
        assert cumulative_severity(0.9, 0.0) == 0.0

    def test_identity(self):
        assert cumulative_severity(1.0, 1.0) == 1.0

    def test_range_checked(self):
        with pytest.raises(ScoreInputError):
            cumulative_severity(1.2, 0.5)


class TestTsas:
    def test_no_dependents_keeps_severity(self):
        model = parse_mission(doc(tasks=[("T6", 0.3)]))
        assert tsas(model, "T6") == pytest.approx(0.300)

    def test_single_dependent_hand_formula(self):
        # severity 0.5, one dependent severity 0.8 at degree 0.5
        # oracle: 1 - 0.5 * (1 - 0.4) = 0.7
        model = parse_mission(
            doc(tasks=[("T1", 0.5), ("T2", 0.8)], task_edges=[("T2", "T1", 0.5)])
        )
        assert tsas(model, "T1") == pytest.approx(0.7)

    def test_saturated_severity(self):
        model = parse_mission(
            doc(tasks=[("T1", 1.0), ("T2", 0.9)], task_edges=[("T2", "T1", 0.8)])
        )
        assert tsas(model, "T1") == pytest.approx(1.0)

    @settings(max_examples=80)
    @given(sev=unit, dep_sev=unit, degree=unit)
    def test_at_least_own_severity(self, sev, dep_sev, degree):
        model = parse_mission(
            doc(tasks=[("T1", sev), ("T2", dep_sev)], task_edges=[("T2", "T1", degree)])
            if degree > 0
            else doc(tasks=[("T1", sev), ("T2", dep_sev)])
        )
        assert tsas(model, "T1") >= sev - 1e-12
        assert 0.0 <= tsas(model, "T1") <= 1.0


class TestTacs:
    def test_case_study_anchor_a1_t1(self):
        assert tacs(0.889, 1.0, 0.589, 0.65) == pytest.approx(0.754, abs=0.002)

    def test_case_study_anchor_a2_t1(self):
        assert tacs(0.889, 0.9, 0.494, 0.95) == pytest.approx(0.737, abs=0.002)

    def test_zero_severity_annihilates(self):
        assert tacs(0.0, 1.0, 1.0, 1.0) == 0.0

    @settings(max_examples=120)
    @given(a=unit, b=unit, c=unit, d=unit)
    def test_bounded(self, a, b, c, d):
        value = tacs(a, b, c, d)
        assert 0.0 <= value <= 1.0
        assert value <= a + 1e-12  # never exceeds the severity aggregate

    @settings(max_examples=80)
    @given(a=unit, b=unit, c=unit, d=unit, bump=st.floats(min_value=0.0, max_value=0.2))
    def test_monotone_in_each_input(self, a, b, c, d, bump):
        base = tacs(a, b, c, d)
        assert tacs(min(1, a + bump), b, c, d) >= base - 1e-12
        assert tacs(a, min(1, b + bump), c, d) >= base - 1e-12
        assert tacs(a, b, min(1, c + bump), d) >= base - 1e-12
        assert tacs(a, b, c, min(1, d + bump)) >= base - 1e-12


class TestThresholds:
    def test_printed_t2_population(self):
        assert tth([0.190, 0.195, 0.056], MEDIUM) == pytest.approx(0.186, abs=0.002)

    def test_printed_t1_population(self):
        assert tth([0.754, 0.737], MEDIUM) == pytest.approx(0.7515, abs=0.0005)

    def test_constant_population_fixed_point(self):
        for k in (0.0, 0.3, 1.0):
            assert tth([0.42, 0.42, 0.42], Sensitivity(k)) == pytest.approx(0.42)

    def test_empty_rejected(self):
        with pytest.raises(ScoreInputError):
            tth([], MEDIUM)

    def test_mth_on_published_thresholds(self):
        printed = [0.751, 0.186, 0.398, 0.510, 0.387, 0.204]
        assert mth(printed, MEDIUM) == pytest.approx(0.511, abs=0.001)

    def test_mth_on_alternative_threshold_set(self):
        # spreadsheet-style oracle: mean 0.403267, sample stdev 0.207901
        values = [0.7515, 0.1864, 0.3974, 0.4926, 0.3873, 0.2044]
        assert mth(values, MEDIUM) == pytest.approx(0.507, abs=0.001)

    def test_mth_single_task(self):
        assert mth([0.77], MEDIUM) == pytest.approx(0.77)

    def test_mth_empty_is_empty_mission(self):
        with pytest.raises(EmptyMissionError, match="empty mission"):
            mth([], MEDIUM)

    @settings(max_examples=80)
    @given(
        values=st.lists(unit, min_size=1, max_size=10),
        k1=unit,
        k2=unit,
    )
    def test_tth_monotone_in_k(self, values, k1, k2):
        lo, hi = sorted((k1, k2))
        assert tth(values, Sensitivity(lo)) <= tth(values, Sensitivity(hi)) + 1e-12


class TestMacs:
    def test_row_maximum(self):
        assert macs([0.754, 0.190]) == pytest.approx(0.754)

    def test_table_row_a6(self):
        # max of the printed row values; conflicts with the published MACS
        # table are handled at the pipeline level as discrepancy notes
        assert macs([0.510, 0.389]) == pytest.approx(0.510)

    def test_singleton(self):
        assert macs([0.3]) == 0.3

    def test_empty_rejected(self):
        with pytest.raises(ScoreInputError, match="participates in no task"):
            macs([])

    @settings(max_examples=60)
    @given(
        row=st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=1, max_size=8),
        factor=st.floats(min_value=0.05, max_value=1.0),
    )
    def test_argmax_invariant_under_common_scaling(self, row, factor):
        argmax = {i for i, v in enumerate(row) if v == max(row)}
        scaled = [v * factor for v in row]
        argmax_scaled = {i for i, v in enumerate(scaled) if v == max(scaled)}
        assert argmax == argmax_scaled


class TestCaseStudyPipeline:
    """Fixture-matrix scoring against the reference scenario."""

    def test_tacs_matrix_values(self, case_board):
        expected = {
            ("T1", "A1"): 0.7536942, ("T1", "A2"): 0.7368032,
            ("T2", "A1"): 0.1898016, ("T2", "A2"): 0.1950784, ("T2", "A3"): 0.0561952,
            ("T3", "A4"): 0.2311716, ("T3", "A5"): 0.4261356,
            ("T4", "A4"): 0.3908564, ("T4", "A5"): 0.0868944, ("T4", "A6"): 0.6384044,
            ("T5", "A4"): 0.3192000, ("T5", "A5"): 0.3919104, ("T5", "A6"): 0.3885504,
            ("T6", "A2"): 0.1946400, ("T6", "A3"): 0.2059800,
        }
        for (task, asset), value in expected.items():
            assert case_board.tacs_cell(task, asset) == pytest.approx(value, abs=1e-6)

    def test_unassigned_cells_read_zero(self, case_board):
        assert case_board.tacs_cell("T1", "A3") == 0.0
        assert case_board.tacs_cell("T3", "A1") == 0.0

    def test_task_thresholds(self, case_board):
        expected = {
            "T1": 0.751221, "T2": 0.186378, "T3": 0.397584,
            "T4": 0.510169, "T5": 0.387076, "T6": 0.204319,
        }
        for task, value in expected.items():
            assert case_board.tth[task] == pytest.approx(value, abs=1e-5)

    def test_mission_threshold_and_kcts(self, case_board):
        assert case_board.mth == pytest.approx(0.510854, abs=1e-5)
        assert set(case_board.mission_kcts) == {"A1", "A2", "A6"}

    def test_macs_vector(self, case_board):
        expected = {
            "A1": 0.753694, "A2": 0.736803, "A3": 0.205980,
            "A4": 0.390856, "A5": 0.426136, "A6": 0.638404,
        }
        for asset, value in expected.items():
            assert case_board.macs[asset] == pytest.approx(value, abs=1e-5)

    def test_task_kcts(self, case_board):
        assert case_board.task_kcts == {
            "T1": ("A1",),
            "T2": ("A1", "A2"),
            "T3": ("A5",),
            "T4": ("A6",),
            "T5": ("A5", "A6"),
            "T6": ("A3",),
        }

    def test_positive_atas_policy_drops_zero_cell_from_statistics(self, case_study):
        board = score_matrices(
            case_study["atas"], case_study["tsas"], case_study["tbs"],
            case_study["vbs"], participation=PARTICIPATION_POSITIVE,
        )
        # T4's zero-degree cell A5 leaves the population: {0.3909, 0.6384}
        assert board.tth["T4"] == pytest.approx(0.602152, abs=1e-5)
        # the cell itself is still computed and reported
        assert board.tacs_cell("T4", "A5") == pytest.approx(0.0868944, abs=1e-6)
        assert set(board.mission_kcts) == {"A1", "A2", "A6"}

    def test_discrepancies_against_published_tables(self, case_board, case_study):
        found = compare_with_expected(case_board, case_study["expected"])
        by_key = {(d.field, d.subject) for d in found}
        # exactly two divergences: the T4/A6 criticality cell and T5's KCT set
        assert by_key == {("tacs", "T4/A6"), ("task_kcts", "T5")}

    def test_missing_metric_rejected(self, case_study):
        tbs = dict(case_study["tbs"])
        del tbs["A4"]
        with pytest.raises(ScoreInputError, match="missing TBS metric for asset 'A4'"):
            score_matrices(case_study["atas"], case_study["tsas"], tbs, case_study["vbs"])

    def test_empty_mission_rejected(self):
        with pytest.raises(EmptyMissionError, match="empty mission"):
            score_matrices({}, {}, {}, {})


class TestScoreMission:
    def test_singleton_mission(self):
        model = parse_mission(
            doc(
                tasks=[("T1", 1.0)],
                assets=[("A1", "service")],
                asset_edges=[("T1", "A1", 1.0)],
            )
        )
        board = score_mission(model, {"A1": 0.0}, {"A1": 0.0})
        assert board.tacs_cell("T1", "A1") == pytest.approx(DEFAULT_WEIGHTS.mw)
        assert board.macs["A1"] == pytest.approx(DEFAULT_WEIGHTS.mw)
        assert board.mission_kcts == ("A1",)

    def test_all_equal_tacs_makes_every_participant_kct(self):
        model = parse_mission(
            doc(
                tasks=[("T1", 0.8)],
                assets=[("A1", "service"), ("A2", "service")],
                asset_edges=[("T1", "A1", 0.7), ("T1", "A2", 0.7)],
            )
        )
        board = score_mission(model, {"A1": 0.2, "A2": 0.2}, {"A1": 0.5, "A2": 0.5})
        assert board.task_kcts["T1"] == ("A1", "A2")

    def test_pipeline_matches_independent_composition(self):
        """score_mission vs. op-by-op composition on random small missions."""
        from keyterrain.mission import tasks_depending_on
        from test_mission import _random_layered_model

        rng = random.Random(99)
        for _ in range(60):
            model, _ = _random_layered_model(rng, max_tasks=4, max_assets=6)
            tbs = {a: round(rng.random(), 3) for a in model.assets}
            vbs = {a: round(rng.random(), 3) for a in model.assets}
            try:
                board = score_mission(model, tbs, vbs)
            except EmptyMissionError:
                continue

            for task in model.tasks:
                own = model.tasks[task].severity
                survival = 1.0 - own
                for dep, deg in tasks_depending_on(model, task).items():
                    survival *= 1.0 - model.tasks[dep].severity * deg
                assert abs(board.tsas[task] - (1.0 - survival)) <= 1e-12

                values = []
                for asset in model.assets:
                    degree = atas(model, task, asset)
                    if degree > 0.0:
                        cell = tacs(board.tsas[task], degree, tbs[asset], vbs[asset])
                        assert abs(board.tacs_cell(task, asset) - cell) <= 1e-12
                        values.append(board.tacs_cell(task, asset))
                if values:
                    assert abs(board.tth[task] - tth(values, MEDIUM)) <= 1e-12

            thresholds = [board.tth[t] for t in board.tasks if t in board.tth]
            assert abs(board.mth - mth(thresholds, MEDIUM)) <= 1e-12
            for asset in board.macs:
                row = [board.tacs_cell(t, asset) for t in board.tasks
                       if asset in board.atas.get(t, {})]
                assert abs(board.macs[asset] - macs(row)) <= 1e-12


class TestKctMonotonicityInK:
    def grid_boards(self, atas_m, tsas_m, tbs, vbs, ks):
        return [
            score_matrices(atas_m, tsas_m, tbs, vbs, sensitivity=Sensitivity(k))
            for k in ks
        ]

    def test_case_study_mission_kcts_shrink_with_k(self, case_study):
        ks = [i / 20 for i in range(21)]
        boards = self.grid_boards(
            case_study["atas"], case_study["tsas"],
            case_study["tbs"], case_study["vbs"], ks,
        )
        for earlier, later in zip(boards, boards[1:]):
            assert set(later.mission_kcts) <= set(earlier.mission_kcts)

    def test_task_kcts_shrink_with_k_on_random_missions(self):
        rng = random.Random(5)
        for _ in range(40):
            tasks = [f"T{i}" for i in range(rng.randint(1, 4))]
            assets = [f"A{i}" for i in range(rng.randint(1, 6))]
            atas_m = {
                t: {a: round(rng.uniform(0.05, 1), 3) for a in assets if rng.random() < 0.7}
                for t in tasks
            }
            if not any(atas_m.values()):
                continue
            tsas_m = {t: round(rng.random(), 3) for t in tasks}
            tbs = {a: round(rng.random(), 3) for a in assets}
            vbs = {a: round(rng.random(), 3) for a in assets}
            ks = [0.0, 0.25, 0.5, 0.75, 1.0]
            boards = self.grid_boards(atas_m, tsas_m, tbs, vbs, ks)
            for earlier, later in zip(boards, boards[1:]):
                for task in tasks:
                    assert set(later.task_kcts.get(task, ())) <= set(
                        earlier.task_kcts.get(task, ())
                    )

    def test_mission_level_dip_beyond_threshold_crossing(self):
        """Known boundary: the mission threshold is mean + k*stdev OVER values
        that already contain k, so it is not globally monotone in k. With one
        tight high-scoring task and one dispersed task, the threshold can dip
        exactly where the per-task thresholds converge, re-admitting an asset
        at higher k. Documented behavior, not a defect in the formulas."""
        atas_m = {
            "T1": {"A1": 1.0, "A2": 1.0},
            "T2": {"A1": 1.0, "A2": 1.0},
            "T3": {"A3": 0.001, "A4": 1.0},
        }
        tsas_m = {"T1": 0.95, "T2": 0.95, "T3": 0.99}
        tbs = {"A1": 0.95, "A2": 0.95, "A3": 0.0, "A4": 0.95}
        vbs = {"A1": 0.95, "A2": 0.95, "A3": 0.0, "A4": 0.95}
        boards = {
            k: score_matrices(atas_m, tsas_m, tbs, vbs, sensitivity=Sensitivity(k))
            for k in (0.60, 0.65)
        }
        # the MTH dips as the task thresholds converge
        assert boards[0.65].mth < boards[0.60].mth


class TestClassifyKcts:
    def test_threshold_comparison_is_inclusive(self, case_board):
        # A1 at T1 sits just above; an asset exactly at the threshold stays in
        board = case_board
        task_kcts, mission_kcts = classify_kcts(board)
        assert task_kcts == board.task_kcts
        assert mission_kcts == board.mission_kcts
