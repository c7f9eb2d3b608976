"""Learning runs, sweeps, robustness tables, episode metrics, CSV output."""

import csv
import io

import numpy as np
import pytest

from tugems.ensemble import EnsemblePolicy
from tugems.experiment import (ENSEMBLE_MODE, SINGLE_MODE, RunSetup,
                               config_fingerprint, default_agent_configs,
                               evaluate_policy, robustness_eval, run_learning,
                               savings, sweep_weights, write_learning_curve_csv,
                               write_robustness_csv, write_sweep_csv,
                               write_trace_csv)
from tugems.metrics import energy_efficiency, episode_metrics
from tugems.powertrain import Plant
from tugems.qlearn import ActionGrid, E2ESchedule, LearnerConfig, StateGrid

# ---------------------------------------------------------------------------
# episode metrics
# ---------------------------------------------------------------------------


def test_energy_efficiency_is_none_before_any_draw(models):
    assert energy_efficiency(Plant(models, 0.5).state) is None


def test_energy_efficiency_of_a_real_episode_is_a_proper_fraction(
        models, bumpy_cycle):
    plant = Plant(models, 0.5)
    for p in bumpy_cycle.demand_w:
        plant.step(float(p), 43_100.0, 1.0)
    eff = energy_efficiency(plant.state)
    assert 0.0 < eff < 1.0


def test_episode_metrics_ledger_closes(models, bumpy_cycle):
    plant = Plant(models, 0.5)
    total_reward = 0.0
    soc_sum = 0.0
    for p in bumpy_cycle.demand_w:
        out = plant.step(float(p), 51_720.0, 1.0)
        total_reward += out.reward
        soc_sum += out.soc
    m = episode_metrics(plant.state, models.battery, 0.5,
                        soc_sum / len(bumpy_cycle), total_reward)
    # drawn energy must equal served output plus every loss channel
    assert m.oec_j == pytest.approx(
        m.traction_output_j + m.engine_loss_j + m.battery_loss_j
        + m.traction_loss_j, rel=1e-9)
    assert m.oec_j == pytest.approx(
        m.fuel_energy_j + m.battery_draw_j + m.battery_loss_j, rel=1e-12)
    assert m.total_loss_j == pytest.approx(
        m.engine_loss_j + m.battery_loss_j + m.traction_loss_j, rel=1e-12)
    assert m.start_soc == 0.5
    assert m.end_soc == plant.state.soc
    assert m.steps == len(bumpy_cycle)
    assert m.total_reward == total_reward


def test_episode_metrics_rejects_out_of_range_fields(models, flat_cycle):
    plant = Plant(models, 0.5)
    plant.step(40_000.0, 43_100.0, 1.0)
    state = plant.state
    good = episode_metrics(state, models.battery, 0.5, 0.5, 0.0)
    import dataclasses
    with pytest.raises(ValueError, match="energy_efficiency"):
        dataclasses.replace(good, energy_efficiency=1.5)
    with pytest.raises(ValueError, match="oec_j"):
        dataclasses.replace(good, oec_j=-1.0)


# ---------------------------------------------------------------------------
# savings
# ---------------------------------------------------------------------------


def test_savings_examples_match_reported_rounding():
    # reference pairs (baseline MJ, candidate MJ) -> percent saving
    cases = [
        ((333.98, 327.51), 1.94),
        ((239.25, 234.38), 2.03),
        ((142.07, 138.36), 2.61),
        ((395.41, 391.31), 1.04),
    ]
    for (base, cand), pct in cases:
        assert 100.0 * savings(base, cand) == pytest.approx(pct, abs=0.01)


def test_savings_sign_convention():
    assert savings(100.0, 90.0) == pytest.approx(0.10)
    assert savings(100.0, 110.0) == pytest.approx(-0.10)
    assert savings(100.0, 100.0) == 0.0


def test_savings_rejects_nonpositive_baseline():
    with pytest.raises(ValueError, match="baseline"):
        savings(0.0, 50.0)
    with pytest.raises(ValueError, match="baseline"):
        savings(-5.0, 50.0)


# ---------------------------------------------------------------------------
# learning runs
# ---------------------------------------------------------------------------


def _setup(cycle, models, grid, actions, mode=ENSEMBLE_MODE, episodes=3):
    config_a, config_b = default_agent_configs()
    return RunSetup(cycle=cycle, models=models, grid=grid, actions=actions,
                    config_a=config_a, config_b=config_b,
                    policy=EnsemblePolicy.weighted(0.5), mode=mode,
                    episodes=episodes, initial_soc=0.5)


def test_run_setup_validation(models, grid, actions, flat_cycle):
    config_a, config_b = default_agent_configs()
    common = dict(cycle=flat_cycle, models=models, grid=grid, actions=actions,
                  config_a=config_a, config_b=config_b,
                  policy=EnsemblePolicy.weighted(0.5))
    with pytest.raises(ValueError, match="mode"):
        RunSetup(**common, mode="triple")
    with pytest.raises(ValueError, match="episodes"):
        RunSetup(**common, episodes=0)
    with pytest.raises(ValueError, match="initial_soc"):
        RunSetup(**common, initial_soc=0.05)
    with pytest.raises(ValueError, match="top action level"):
        RunSetup(cycle=flat_cycle, models=models, grid=grid,
                 actions=ActionGrid.uniform(max_power_w=90_000.0),
                 config_a=config_a, config_b=config_b,
                 policy=EnsemblePolicy.weighted(0.5))


def test_run_learning_is_deterministic(models, grid, actions, bumpy_cycle):
    setup = _setup(bumpy_cycle, models, grid, actions)
    r1 = run_learning(setup, seed=5)
    r2 = run_learning(setup, seed=5)
    assert r1.episodes == r2.episodes
    np.testing.assert_array_equal(r1.agents["A"].q.values,
                                  r2.agents["A"].q.values)
    np.testing.assert_array_equal(r1.agents["B"].q.values,
                                  r2.agents["B"].q.values)
    r3 = run_learning(setup, seed=6)
    assert r3.episodes != r1.episodes


def test_run_learning_modes_and_final_property(models, grid, actions,
                                               bumpy_cycle):
    single = run_learning(_setup(bumpy_cycle, models, grid, actions,
                                 mode=SINGLE_MODE), seed=0)
    assert set(single.agents) == {"A"}
    assert single.mode == SINGLE_MODE
    ensemble = run_learning(_setup(bumpy_cycle, models, grid, actions), seed=0)
    assert set(ensemble.agents) == {"A", "B"}
    assert len(ensemble.episodes) == 3
    assert ensemble.final is ensemble.episodes[-1]
    assert ensemble.wall_clock_s > 0.0


def test_run_learning_traces_cover_the_last_episode_only(models, grid, actions,
                                                         flat_cycle):
    setup = _setup(flat_cycle, models, grid, actions, episodes=2)
    bare = run_learning(setup, seed=1)
    assert bare.final_traces is None
    traced = run_learning(setup, seed=1, record_final_traces=True)
    assert len(traced.final_traces) == len(flat_cycle)
    # recording must not disturb the run itself
    assert traced.episodes == bare.episodes


def test_evaluate_policy_is_frozen_and_repeatable(models, grid, actions,
                                                  bumpy_cycle):
    result = run_learning(_setup(bumpy_cycle, models, grid, actions), seed=2)
    before = result.agents["A"].q.values.copy()
    e1 = evaluate_policy(bumpy_cycle, result.agents,
                         EnsemblePolicy.weighted(0.5), models, grid, actions,
                         0.5)
    e2 = evaluate_policy(bumpy_cycle, result.agents,
                         EnsemblePolicy.weighted(0.5), models, grid, actions,
                         0.5)
    assert e1.metrics == e2.metrics
    np.testing.assert_array_equal(result.agents["A"].q.values, before)
    solo = evaluate_policy(bumpy_cycle, {"A": result.agents["A"]},
                           EnsemblePolicy.weighted(1.0), models, grid, actions,
                           0.5)
    assert solo.metrics.steps == len(bumpy_cycle)


# ---------------------------------------------------------------------------
# weight sweep
# ---------------------------------------------------------------------------


def test_sweep_rows_match_individually_run_repeats(models, grid, actions,
                                                   bumpy_cycle):
    config_a, config_b = default_agent_configs()
    rows = sweep_weights(bumpy_cycle, models, grid, actions, config_a, config_b,
                         proportions=(0.3, 0.7), repeats=2, episodes=2,
                         base_seed=10)
    assert [r.mu for r in rows] == [0.3, 0.7]
    for row in rows:
        assert row.mu + row.delta == pytest.approx(1.0, abs=1e-12)
        assert row.repeats == 2
        effs = []
        for seed in (10, 11):
            setup = RunSetup(cycle=bumpy_cycle, models=models, grid=grid,
                             actions=actions, config_a=config_a,
                             config_b=config_b,
                             policy=EnsemblePolicy.weighted(row.mu),
                             episodes=2, initial_soc=0.5)
            effs.append(run_learning(setup, seed).final.energy_efficiency)
        assert row.mean_eff == pytest.approx(np.mean(effs), rel=1e-12)
        assert row.std_eff == pytest.approx(np.std(effs), rel=1e-12)


def test_sweep_is_worker_count_invariant(models, grid, actions, flat_cycle):
    config_a, config_b = default_agent_configs()
    kwargs = dict(proportions=(0.2, 0.8), repeats=2, episodes=1, base_seed=3)
    serial = sweep_weights(flat_cycle, models, grid, actions, config_a,
                           config_b, workers=1, **kwargs)
    parallel = sweep_weights(flat_cycle, models, grid, actions, config_a,
                             config_b, workers=2, **kwargs)
    assert serial == parallel


def test_sweep_rejects_zero_repeats(models, grid, actions, flat_cycle):
    config_a, config_b = default_agent_configs()
    with pytest.raises(ValueError, match="repeats"):
        sweep_weights(flat_cycle, models, grid, actions, config_a, config_b,
                      repeats=0)


# ---------------------------------------------------------------------------
# robustness table
# ---------------------------------------------------------------------------


def test_robustness_rows_pair_baseline_and_candidate(models, grid, actions,
                                                     bumpy_cycle, flat_cycle):
    trained = run_learning(_setup(bumpy_cycle, models, grid, actions), seed=0)
    baseline = run_learning(_setup(bumpy_cycle, models, grid, actions,
                                   mode=SINGLE_MODE), seed=0)
    rows = robustness_eval(trained.agents, baseline.agents["A"],
                           EnsemblePolicy.weighted(0.5),
                           cycles=[bumpy_cycle, flat_cycle],
                           initial_socs=[0.3, 0.5], models=models, grid=grid,
                           actions=actions, baseline_method="exponential")
    assert len(rows) == 8  # 2 cycles x 2 SoCs x (baseline, candidate)
    for base_row, cand_row in zip(rows[0::2], rows[1::2]):
        assert base_row.cycle == cand_row.cycle
        assert base_row.init_soc == cand_row.init_soc
        assert base_row.method == "exponential"
        assert base_row.savings_pct == 0.0
        assert cand_row.method == "weighted"
        expected = 100.0 * (base_row.oec_mj - cand_row.oec_mj) / base_row.oec_mj
        assert cand_row.savings_pct == pytest.approx(expected, rel=1e-9)
    again = robustness_eval(trained.agents, baseline.agents["A"],
                            EnsemblePolicy.weighted(0.5),
                            cycles=[bumpy_cycle, flat_cycle],
                            initial_socs=[0.3, 0.5], models=models, grid=grid,
                            actions=actions, baseline_method="exponential")
    assert again == rows  # frozen policies, no table drift


# ---------------------------------------------------------------------------
# CSV rendering
# ---------------------------------------------------------------------------


def test_learning_curve_csv_round_trips(models, grid, actions, flat_cycle):
    result = run_learning(_setup(flat_cycle, models, grid, actions,
                                 episodes=2), seed=0)
    text = write_learning_curve_csv(result.episodes)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["episode", "efficiency", "oec_j", "end_soc"]
    assert len(rows) == 3
    for k, row in enumerate(rows[1:]):
        assert int(row[0]) == k
        assert float(row[1]) == result.episodes[k].energy_efficiency
        assert float(row[2]) == result.episodes[k].oec_j  # repr round trip
        assert float(row[3]) == result.episodes[k].end_soc


def test_sweep_csv_layout():
    from tugems.experiment import SweepRow
    text = write_sweep_csv([SweepRow(0.1, 0.9, 0.5, 0.01, 25)])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["mu", "delta", "mean_eff", "std_eff", "repeats"]
    assert rows[1] == ["0.1", "0.9", "0.5", "0.01", "25"]


def test_robustness_csv_layout():
    from tugems.experiment import RobustnessRow
    text = write_robustness_csv(
        [RobustnessRow("PRDC-2-synthetic", 0.3, "weighted", 0.31, 341.5, 2.03)])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["cycle", "init_soc", "method", "end_soc", "oec_mj",
                       "savings_pct"]
    assert rows[1][0] == "PRDC-2-synthetic"
    assert float(rows[1][5]) == 2.03


def test_trace_csv_layout(models, grid, actions, flat_cycle):
    result = run_learning(_setup(flat_cycle, models, grid, actions,
                                 episodes=1), seed=0,
                          record_final_traces=True)
    text = write_trace_csv(result.final_traces)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["t_s", "state_idx", "a_A", "a_B", "a_final", "chooser",
                       "reward", "soc", "p_egu_w", "p_batt_w", "forced"]
    assert len(rows) == len(flat_cycle) + 1
    assert rows[1][0] == "0.0"
    assert rows[1][10] in ("0", "1")


def test_none_efficiency_renders_as_an_empty_field():
    from tugems.metrics import EpisodeMetrics
    metrics = EpisodeMetrics(
        energy_efficiency=None, oec_j=0.0, oec_delta_soc_j=0.0, start_soc=0.5,
        end_soc=0.5, mean_soc=0.5, total_loss_j=0.0, engine_loss_j=0.0,
        battery_loss_j=0.0, traction_loss_j=0.0, fuel_energy_j=0.0,
        battery_draw_j=0.0, traction_output_j=0.0, demand_energy_j=0.0,
        shortfall_j=0.0, total_reward=0.0, forced_charge_steps=0, steps=0)
    text = write_learning_curve_csv([metrics])
    assert text.splitlines()[1].split(",")[1] == ""


# ---------------------------------------------------------------------------
# config fingerprint
# ---------------------------------------------------------------------------


def test_config_fingerprint_is_order_insensitive_and_value_sensitive():
    a = config_fingerprint({"x": 1, "y": [1, 2], "z": {"k": 0.5}})
    b = config_fingerprint({"z": {"k": 0.5}, "y": [1, 2], "x": 1})
    c = config_fingerprint({"x": 1, "y": [1, 2], "z": {"k": 0.6}})
    assert a == b
    assert a != c
    assert len(a) == 64
    assert set(a) <= set("0123456789abcdef")
