"""Tests for the test set, baseline sweep, evaluation reports, plot data and CLI."""

import json
import os

import numpy as np
import pandas as pd
import pytest

from main import main
from src.control.ocp_solver import DIAGNOSTIC_COLUMNS
from src.errors import ConfigError
from src.harness import (
    SweepResult,
    TrainingRun,
    ablate,
    baseline_sweep,
    build_testset,
    config_testset,
    emit_plots,
    evaluate_checkpoint,
    load_sweep,
    load_testset,
    read_dat,
)
from src.harness.ablation import percent_change, schedule_period
from src.harness.baseline import GRID_COLUMNS, ScheduledPolicy
from src.harness.evaluation import EvaluationReport, build_policy, evaluate, results_frame
from src.harness.plots import CURVE_COLUMNS, HISTOGRAM_COLUMNS, SURFACE_COLUMNS, write_dat
from src.harness.training_run import METRIC_COLUMNS
from src.plant.episode import TRACE_COLUMNS, EpisodeConfig
from src.policy.params import PolicyMode
from src.policy.state import AugmentedState
from src.training.rollout import EpisodeResult
from src.utils.helpers import artifact_stamp, write_table


class TestTestSet:
    def test_deterministic_hash(self):
        first = build_testset(25, 2022, EpisodeConfig())
        second = build_testset(25, 2022, EpisodeConfig())
        assert len(first) == 25
        assert first.hash == second.hash
        assert build_testset(25, 2023, EpisodeConfig()).hash != first.hash

    def test_episode_contents(self):
        testset = build_testset(5, 7, EpisodeConfig())
        for episode in testset:
            assert episode.x0[0] == 0.0 and episode.x0.shape == (4,)
            refs = episode.reference_schedule
            assert refs.shape == (150,)
            assert np.all(refs[:50] == refs[0]) and np.all(refs[100:] == refs[100])
        assert len({episode.seed for episode in testset}) == 5

    def test_subset_is_prefix(self):
        testset = build_testset(6, 1, EpisodeConfig())
        assert testset.subset(2).episodes == testset.episodes[:2]

    def test_save_and_load(self, tmp_path):
        testset = build_testset(3, 11, EpisodeConfig())
        path = testset.save(tmp_path / "testset.json")
        loaded = load_testset(path)
        assert loaded.hash == testset.hash
        np.testing.assert_array_equal(loaded.episodes[1].x0, testset.episodes[1].x0)

    def test_tampered_file_is_rejected(self, tmp_path):
        path = build_testset(3, 11, EpisodeConfig()).save(tmp_path / "testset.json")
        data = json.loads(path.read_text())
        data["episodes"][0]["initial_state"][1] = (0.5).hex()
        path.write_text(json.dumps(data))
        with pytest.raises(ConfigError):
            load_testset(path)
        with pytest.raises(ConfigError):
            load_testset(tmp_path / "missing.json")

    def test_from_config(self, experiment_config):
        testset = config_testset(experiment_config)
        assert len(testset) == 25 and testset.seed == 2022


class TestScheduledPolicy:
    def test_schedule(self, lqr_weights):
        policy = ScheduledPolicy(horizon=12, period=3, weights=lqr_weights)
        assert policy.initial_horizon == 12
        s = AugmentedState.at_computation(np.zeros(4), 0.0, 12)
        s = s.advanced(np.zeros(4), 0.0).advanced(np.zeros(4), 0.0)
        decision = policy.decide(s, None)
        assert decision.c == 0 and decision.n == 12
        decision = policy.decide(s.advanced(np.zeros(4), 0.0), None)
        assert decision.c == 1 and decision.n == 12
        assert policy.sample_input(0.3, 0, None) == 0.3
        assert policy.decision_log_prob(decision, 0.3, 0.3) == 0.0


def test_ablation_helpers():
    assert schedule_period(1.0) == 1
    assert schedule_period(0.7) == 1
    assert schedule_period(0.3) == 3
    assert schedule_period(0.1) == 10
    with pytest.raises(ValueError):
        schedule_period(0.0)
    assert percent_change(90.0, 100.0) == pytest.approx(-10.0)
    assert percent_change(-90.0, -100.0) == pytest.approx(10.0)


def synthetic_report() -> EvaluationReport:
    frames = []
    for seed, costs in ((100, (10.0, 20.0)), (101, (30.0, 40.0))):
        results = [EpisodeResult(control=-c, computation=-0.4, steps=20, computed_steps=5) for c in costs]
        frames.append(results_frame(results, eval_seed=seed))
    return EvaluationReport(per_seed=pd.concat(frames, ignore_index=True), horizons=np.array([8, 8, 12]),
                            gaps=np.array([1, 3, 3]), n_max=12, stamp=artifact_stamp("c", "t"))


class TestEvaluationReport:
    def test_aggregates(self):
        report = synthetic_report()
        assert report.mean_cost == pytest.approx(25.4)
        assert report.recompute_fraction == pytest.approx(0.25)
        assert report.violations == 0
        summary = report.term_summary()
        assert summary["cost"]["std"] == pytest.approx(10.0)

    def test_histograms_and_save(self, tmp_path):
        report = synthetic_report()
        data = report.to_dict()
        assert sum(data["horizon_histogram"]["counts"]) == 3
        assert data["horizon_histogram"]["counts"][7] == 2
        assert data["gap_histogram"]["counts"] == [1, 0, 2]
        path = report.save(tmp_path, name="evaluation_demo")
        assert path.exists() and (tmp_path / "evaluation_demo_episodes.csv").exists()


def synthetic_sweep() -> SweepResult:
    rows = []
    for period in (1, 2, 4):
        for horizon in (8, 16):
            rows.append({"period": period, "horizon": horizon, "cost": 100.0 + period - horizon / 8,
                         "control_cost": 90.0, "constraint_cost": 0.0, "computation_cost": 0.1 * horizon,
                         "recompute_fraction": 1.0 / period, "violations": 0, "ocp_time": 0.1,
                         "overhead_time": 0.01, "valid": True, "error": ""})
    rows[-1].update(valid=False, cost=np.nan, error="OcpSolverFailure: boom")
    return SweepResult(grid=pd.DataFrame(rows, columns=GRID_COLUMNS), stamp=artifact_stamp("cfg", "ts"))


class TestSweepResult:
    def test_queries(self):
        sweep = synthetic_sweep()
        assert sweep.argmin == {"period": 1, "horizon": 16, "cost": pytest.approx(99.0)}
        assert sweep.cell(2, 8)["cost"] == pytest.approx(101.0)
        with pytest.raises(KeyError):
            sweep.cell(3, 8)
        assert sweep.surface().shape == (3, 2)

    def test_save_and_load(self, tmp_path):
        sweep = synthetic_sweep()
        sweep.save(tmp_path)
        loaded = load_sweep(tmp_path)
        assert loaded.stamp["config_hash"] == "cfg"
        assert loaded.grid["valid"].tolist() == [True] * 5 + [False]
        assert loaded.grid["error"].iloc[-1] == "OcpSolverFailure: boom"
        assert loaded.argmin == sweep.argmin


class TestPlotData:
    def test_dat_round_trip(self, tmp_path):
        frame = pd.DataFrame({"a": [1.0, 2.0], "b": [3.5, np.nan]})
        path = write_dat(tmp_path / "x.dat", [frame], ["a", "b"], {"config_hash": "abc"}, "demo")
        lines = path.read_text().splitlines()
        assert lines[0] == "# demo"
        assert "# config_hash: abc" in lines
        columns, parsed = read_dat(path)
        assert columns == ["a", "b"]
        assert parsed["a"].tolist() == [1.0, 2.0]
        assert np.isnan(parsed["b"].iloc[1])

    def write_metrics(self, training_dir):
        for seed in (0, 1):
            rows = []
            for update in range(1, 5):
                row = {column: 0.0 for column in METRIC_COLUMNS}
                row.update(update=update, env_steps=100 * update + seed, train_cost=50.0 - update + seed,
                           eval_cost=np.nan if update % 2 else 40.0 - update)
                rows.append(row)
            directory = training_dir / f"joint_seed{seed}"
            write_table(pd.DataFrame(rows, columns=METRIC_COLUMNS), directory / "metrics.csv",
                        artifact_stamp("cfg", "ts"))

    def test_emit_everything(self, tmp_path):
        synthetic_sweep().save(tmp_path / "sweep")
        self.write_metrics(tmp_path / "train")
        reports = tmp_path / "reports"
        synthetic_report().save(reports, name="evaluation_joint_seed0_final")
        written = emit_plots(tmp_path / "sweep", tmp_path / "train", reports, tmp_path / "plots")
        names = {p.name for p in written}
        assert {"baseline_surface.dat", "curve_joint_train.dat", "curve_joint_eval.dat", "lqr_weights_joint.dat",
                "evaluation_joint_seed0_final_horizons.dat", "evaluation_joint_seed0_final_gaps.dat"} <= names

        plots = tmp_path / "plots"
        columns, surface = read_dat(plots / "baseline_surface.dat")
        assert columns == SURFACE_COLUMNS
        assert len(surface) == 3 * 2
        text = (plots / "baseline_surface.dat").read_text()
        assert text.count("\n\n") == 2

        columns, curve = read_dat(plots / "curve_joint_train.dat")
        assert columns == CURVE_COLUMNS
        assert np.all(np.diff(curve["env_steps"]) > 0)
        assert curve["n_seeds"].tolist() == [2] * 4
        assert curve["mean"].iloc[0] == pytest.approx(49.5)
        _, eval_curve = read_dat(plots / "curve_joint_eval.dat")
        assert len(eval_curve) == 2

        columns, hist = read_dat(plots / "evaluation_joint_seed0_final_horizons.dat")
        assert columns == HISTOGRAM_COLUMNS
        assert hist["fraction"].sum() == pytest.approx(1.0)

    def test_nothing_to_emit(self, tmp_path):
        assert emit_plots(tmp_path / "a", tmp_path / "b", tmp_path / "c", tmp_path / "plots") == []


class TestCli:
    def test_plots_on_empty_output(self, tmp_path):
        assert main(["plots", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "plots").is_dir()

    def test_bad_config_exit_code(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("ppo:\n  learning_rte: 0.1\n", encoding="utf-8")
        assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 2

    def test_missing_checkpoint_exit_code(self, tmp_path):
        assert main(["eval", str(tmp_path / "none.npz"), "--out", str(tmp_path)]) == 2

    def test_invalid_workers(self, tmp_path):
        assert main(["plots", "--workers", "0", "--out", str(tmp_path)]) == 2


@pytest.mark.slow
class TestEndToEnd:
    def test_mini_sweep_is_deterministic(self, small_config):
        testset = config_testset(small_config).subset(2)
        first = baseline_sweep(small_config, testset)
        second = baseline_sweep(small_config, testset)
        columns = ["period", "horizon", "cost", "control_cost", "computation_cost", "recompute_fraction", "valid"]
        pd.testing.assert_frame_equal(first.grid[columns], second.grid[columns])
        assert len(first.grid) == 4
        every_step = first.grid[first.grid["period"] == 1]
        assert np.allclose(every_step["recompute_fraction"], 1.0)

    def test_train_evaluate_ablate(self, small_config, tmp_path):
        testset = config_testset(small_config).subset(2)
        run = TrainingRun(small_config, PolicyMode.JOINT, 0, tmp_path / "joint_seed0", testset)
        metrics = run.run()
        assert list(metrics.columns) == METRIC_COLUMNS
        assert metrics["env_steps"].is_monotonic_increasing
        assert metrics["env_steps"].iloc[-1] >= small_config.ppo.total_steps
        for name in ("final.npz", "latest.npz", "best.npz", "metrics.csv", "config.yaml"):
            assert (tmp_path / "joint_seed0" / name).exists()

        checkpoint = tmp_path / "joint_seed0" / "final.npz"
        report = evaluate_checkpoint(small_config, checkpoint, testset, eval_seeds=(100,))
        assert len(report.per_seed) == 2
        assert report.stamp["checkpoint"] == str(checkpoint)

        ablation = ablate(small_config, checkpoint, testset, eval_seeds=(100,))
        frame = ablation.frame()
        assert frame["scenario"].tolist() == ["unmodified", "reset_lqr_weights", "horizon_cap",
                                              "fixed_recompute_schedule"]
        assert frame["change_pct"].iloc[0] == 0.0
        assert ablation.save(tmp_path / "reports").exists()

    def test_evaluation_exports_traces_and_solver_log(self, small_config, tmp_path):
        testset = config_testset(small_config)
        evaluate(small_config, build_policy(small_config), testset.subset(1), eval_seeds=(100,),
                 artifacts_dir=tmp_path / "off")
        assert not (tmp_path / "off" / "seed100").exists()

        config = small_config.with_overrides(experiment={"export_traces": True, "export_solver_log": True})
        evaluate(config, build_policy(config), testset, eval_seeds=(100,), artifacts_dir=tmp_path / "on")
        out = tmp_path / "on" / "seed100"
        solves = pd.read_csv(out / "ocp_solves.csv")
        assert list(solves.columns) == DIAGNOSTIC_COLUMNS
        traces = sorted((out / "traces").glob("*.csv"))
        assert [p.name for p in traces] == ["episode000.csv", "episode001.csv", "episode002.csv"]
        frames = [pd.read_csv(p) for p in traces]
        assert all(list(frame.columns) == TRACE_COLUMNS for frame in frames)
        assert sum(int(frame["computed_flag"].sum()) for frame in frames) == len(solves)

    def test_resumed_training_matches_uninterrupted(self, small_config, tmp_path):
        straight = TrainingRun(small_config, PolicyMode.JOINT, 0, tmp_path / "straight")
        straight.step()
        checkpoint = straight.checkpoint("midway")
        expected = straight.step()

        resumed = TrainingRun(small_config, PolicyMode.JOINT, 0, tmp_path / "resumed")
        resumed.resume(checkpoint)
        row = resumed.step()
        np.testing.assert_array_equal(resumed.policy.params.vector, straight.policy.params.vector)
        np.testing.assert_array_equal(resumed.policy.value_net.flat, straight.policy.value_net.flat)
        moments = resumed.trainer.optimizer.state_arrays()
        for name, values in straight.trainer.optimizer.state_arrays().items():
            np.testing.assert_array_equal(moments[name], values)
        assert resumed.env_steps == straight.env_steps
        pd.testing.assert_series_equal(pd.Series(row).drop("wall_clock"), pd.Series(expected).drop("wall_clock"),
                                       check_exact=True)

        with pytest.raises(ConfigError):
            TrainingRun(small_config, PolicyMode.JOINT, 1, tmp_path / "other").resume(checkpoint)


@pytest.mark.acceptance
class TestAcceptance:
    def test_baseline_surface_minimum(self, experiment_config):
        testset = config_testset(experiment_config)
        sweep = baseline_sweep(experiment_config, testset, workers=os.cpu_count() or 1)
        assert len(sweep.grid) == 90
        best = sweep.argmin()
        assert best["period"] == 1
        assert 25 <= best["horizon"] <= 40

    def test_recompute_head_training_does_not_raise_cost(self, experiment_config, tmp_path):
        testset = config_testset(experiment_config)
        run = TrainingRun(experiment_config, PolicyMode.RECOMPUTE, 0, tmp_path / "recompute_seed0")
        frozen = evaluate(experiment_config, run.policy, testset).mean_cost
        run.run(total_steps=50_000)
        trained = evaluate(experiment_config, run.policy, testset).mean_cost
        assert trained <= frozen + 0.05 * abs(frozen)
