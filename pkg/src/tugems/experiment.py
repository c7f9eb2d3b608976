"""Learning runs, weight sweeps, robustness tables, and their CSV forms.

A "run" is a fixed number of episodes on one cycle with one seed; agents
keep their tables across episodes while the plant restarts from the
configured initial SoC every episode.  Seed handling is explicit
throughout: agent A, agent B and the action combiner each draw from a
named stream split off the run seed, so identical configs reproduce
identical artifacts byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .drive_cycle import DriveCycle
from .ensemble import EnsemblePolicy, EpisodeResult, run_ensemble_episode, run_single_episode
from .metrics import EpisodeMetrics, energy_efficiency
from .powertrain import Plant, PlantModels
from .qlearn import (AGENT_A_STREAM, AGENT_B_STREAM, COMBINER_STREAM, ActionGrid,
                     Agent, E2ESchedule, LearnerConfig, StateGrid, make_rng)

__all__ = [
    "RunSetup",
    "RunResult",
    "SweepRow",
    "RobustnessRow",
    "savings",
    "energy_efficiency",
    "run_learning",
    "sweep_weights",
    "robustness_eval",
    "evaluate_policy",
    "default_agent_configs",
    "learning_curve_rows",
    "write_learning_curve_csv",
    "write_sweep_csv",
    "write_robustness_csv",
    "write_trace_csv",
    "config_fingerprint",
]

SINGLE_MODE = "single"
ENSEMBLE_MODE = "ensemble"


def default_agent_configs() -> tuple[LearnerConfig, LearnerConfig]:
    """Stock pairing: agent A on step decay, agent B on exponential decay."""
    return (LearnerConfig(schedule=E2ESchedule.step()),
            LearnerConfig(schedule=E2ESchedule.exponential()))


def savings(baseline_oec_j: float, candidate_oec_j: float) -> float:
    """Relative energy saving of a candidate against a baseline OEC.

    Positive when the candidate consumed less.  The result is a fraction;
    multiply by 100 for percent.
    """
    if baseline_oec_j <= 0.0:
        raise ValueError(f"baseline OEC must be positive, got {baseline_oec_j}")
    return (baseline_oec_j - candidate_oec_j) / baseline_oec_j


@dataclass(frozen=True)
class RunSetup:
    """Everything one learning run needs besides the seed."""

    cycle: DriveCycle
    models: PlantModels
    grid: StateGrid
    actions: ActionGrid
    config_a: LearnerConfig
    config_b: LearnerConfig
    policy: EnsemblePolicy
    mode: str = ENSEMBLE_MODE
    episodes: int = 125
    initial_soc: float = 0.5

    def __post_init__(self) -> None:
        if self.mode not in (SINGLE_MODE, ENSEMBLE_MODE):
            raise ValueError(
                f"mode must be {SINGLE_MODE!r} or {ENSEMBLE_MODE!r}, got {self.mode!r}")
        if self.episodes < 1:
            raise ValueError(f"episodes must be at least 1, got {self.episodes}")
        battery = self.models.battery
        if not battery.soc_min <= self.initial_soc <= battery.soc_max:
            raise ValueError(
                f"initial_soc {self.initial_soc} outside the battery window "
                f"[{battery.soc_min}, {battery.soc_max}]")
        if self.actions.levels_w[-1] > self.models.egu.max_power_w:
            raise ValueError(
                f"top action level {self.actions.levels_w[-1]} W exceeds the "
                f"EGU rating {self.models.egu.max_power_w} W")


@dataclass
class RunResult:
    """Per-episode metrics of one seeded run, plus the trained agents."""

    seed: int
    mode: str
    episodes: list[EpisodeMetrics]
    agents: dict[str, Agent]
    wall_clock_s: float
    final_traces: list | None = None

    @property
    def final(self) -> EpisodeMetrics:
        return self.episodes[-1]


def run_learning(setup: RunSetup, seed: int,
                 record_final_traces: bool = False) -> RunResult:
    """Train for ``setup.episodes`` episodes under one seed.

    In single mode only agent A exists and the combination policy is moot.
    Episode metrics are collected for every episode; per-step traces, when
    asked for, only for the last one (they are bulky).
    """
    started = time.perf_counter()
    plant = Plant(setup.models, setup.initial_soc)
    agent_a = Agent.create("A", setup.grid, setup.actions, setup.config_a,
                           seed, AGENT_A_STREAM)
    agents = {"A": agent_a}
    metrics: list[EpisodeMetrics] = []
    traces = None
    if setup.mode == SINGLE_MODE:
        for k in range(setup.episodes):
            record = record_final_traces and k == setup.episodes - 1
            result = run_single_episode(setup.cycle, agent_a, k, plant,
                                        setup.initial_soc, setup.grid,
                                        setup.actions, record_traces=record)
            metrics.append(result.metrics)
            if record:
                traces = result.traces
    else:
        agent_b = Agent.create("B", setup.grid, setup.actions, setup.config_b,
                               seed, AGENT_B_STREAM)
        agents["B"] = agent_b
        combiner_rng = make_rng(seed, COMBINER_STREAM)
        for k in range(setup.episodes):
            record = record_final_traces and k == setup.episodes - 1
            result = run_ensemble_episode(setup.cycle, agent_a, agent_b,
                                          setup.policy, k, plant,
                                          setup.initial_soc, setup.grid,
                                          setup.actions, combiner_rng,
                                          record_traces=record)
            metrics.append(result.metrics)
            if record:
                traces = result.traces
    return RunResult(seed=seed, mode=setup.mode, episodes=metrics, agents=agents,
                     wall_clock_s=time.perf_counter() - started,
                     final_traces=traces)


def evaluate_policy(cycle: DriveCycle, agents: dict[str, Agent],
                    policy: EnsemblePolicy, models: PlantModels,
                    grid: StateGrid, actions: ActionGrid, initial_soc: float,
                    combiner_seed: int = 0,
                    record_traces: bool = False) -> EpisodeResult:
    """One frozen-policy episode: greedy proposals, no table updates.

    With one agent in ``agents`` the episode is plain greedy single-agent
    control; with two, proposals go through the combination policy (whose
    ``random`` kind draws from a combiner stream seeded here).
    """
    plant = Plant(models, initial_soc)
    if "B" in agents:
        combiner_rng = make_rng(combiner_seed, COMBINER_STREAM)
        return run_ensemble_episode(cycle, agents["A"], agents["B"], policy, 0,
                                    plant, initial_soc, grid, actions,
                                    combiner_rng, learn=False, greedy=True,
                                    record_traces=record_traces)
    return run_single_episode(cycle, agents["A"], 0, plant, initial_soc, grid,
                              actions, learn=False, greedy=True,
                              record_traces=record_traces)


@dataclass(frozen=True)
class SweepRow:
    mu: float
    delta: float
    mean_eff: float
    std_eff: float
    repeats: int


def _sweep_repeat(args: tuple) -> tuple[int, int, float]:
    """Worker for one (proportion, repeat) cell of the weight sweep."""
    setup_args, mu, mu_idx, repeat, seed = args
    setup = RunSetup(**setup_args, policy=EnsemblePolicy.weighted(mu))
    result = run_learning(setup, seed)
    eff = result.final.energy_efficiency
    if eff is None:
        raise ValueError(
            f"degenerate episode (no energy drawn) in sweep at mu={mu}, seed={seed}")
    return mu_idx, repeat, eff


def sweep_weights(cycle: DriveCycle, models: PlantModels, grid: StateGrid,
                  actions: ActionGrid, config_a: LearnerConfig,
                  config_b: LearnerConfig,
                  proportions: tuple[float, ...] = tuple(round(0.1 * i, 1)
                                                         for i in range(1, 10)),
                  repeats: int = 25, episodes: int = 125,
                  initial_soc: float = 0.5, base_seed: int = 0,
                  workers: int = 1) -> list[SweepRow]:
    """Grid the weighted-combination proportion and average over repeats.

    Every proportion row reuses the same ``repeats`` seeds
    (``base_seed .. base_seed + repeats - 1``), so rows are paired and the
    result is independent of execution order or worker count.  The reported
    spread is the population standard deviation.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be at least 1, got {repeats}")
    setup_args = dict(cycle=cycle, models=models, grid=grid, actions=actions,
                      config_a=config_a, config_b=config_b, mode=ENSEMBLE_MODE,
                      episodes=episodes, initial_soc=initial_soc)
    tasks = [(setup_args, mu, mu_idx, r, base_seed + r)
             for mu_idx, mu in enumerate(proportions)
             for r in range(repeats)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_sweep_repeat, tasks, chunksize=1))
    else:
        outcomes = [_sweep_repeat(t) for t in tasks]
    by_mu: dict[int, list[float]] = {i: [] for i in range(len(proportions))}
    for mu_idx, _, eff in outcomes:
        by_mu[mu_idx].append(eff)
    rows = []
    for mu_idx, mu in enumerate(proportions):
        effs = np.array(by_mu[mu_idx])
        rows.append(SweepRow(mu=mu, delta=round(1.0 - mu, 12),
                             mean_eff=float(effs.mean()),
                             std_eff=float(effs.std()),
                             repeats=repeats))
    return rows


@dataclass(frozen=True)
class RobustnessRow:
    cycle: str
    init_soc: float
    method: str
    end_soc: float
    oec_mj: float
    savings_pct: float


def robustness_eval(ensemble_agents: dict[str, Agent], baseline_agent: Agent,
                    policy: EnsemblePolicy, cycles: list[DriveCycle],
                    initial_socs: list[float], models: PlantModels,
                    grid: StateGrid, actions: ActionGrid,
                    baseline_method: str = "exponential",
                    combiner_seed: int = 0) -> list[RobustnessRow]:
    """Frozen-policy comparison across unseen cycles and initial SoCs.

    For every (cycle, initial SoC) pair, two rows come back: the
    single-agent baseline (savings 0 by construction) and the ensemble,
    with savings measured against that same pair's baseline OEC.  Tables
    are never updated, so repeated calls give identical rows.
    """
    rows: list[RobustnessRow] = []
    for cycle in cycles:
        for soc0 in initial_socs:
            base = evaluate_policy(cycle, {"A": baseline_agent},
                                   EnsemblePolicy.weighted(1.0), models, grid,
                                   actions, soc0).metrics
            cand = evaluate_policy(cycle, ensemble_agents, policy, models, grid,
                                   actions, soc0, combiner_seed=combiner_seed).metrics
            rows.append(RobustnessRow(
                cycle=cycle.label, init_soc=soc0, method=baseline_method,
                end_soc=base.end_soc, oec_mj=base.oec_j / 1e6,
                savings_pct=0.0))
            rows.append(RobustnessRow(
                cycle=cycle.label, init_soc=soc0, method=policy.kind,
                end_soc=cand.end_soc, oec_mj=cand.oec_j / 1e6,
                savings_pct=100.0 * savings(base.oec_j, cand.oec_j)))
    return rows


def config_fingerprint(data: object) -> str:
    """Stable sha256 over a JSON-serializable config structure."""
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _fmt(x: object) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv_text(header: tuple[str, ...], rows: list[tuple]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def learning_curve_rows(episodes: list[EpisodeMetrics]) -> list[tuple]:
    return [(k, m.energy_efficiency, m.oec_j, m.end_soc)
            for k, m in enumerate(episodes)]


def write_learning_curve_csv(episodes: list[EpisodeMetrics]) -> str:
    """Render the per-episode curve as CSV text (episode index is 0-based)."""
    return _csv_text(("episode", "efficiency", "oec_j", "end_soc"),
                     learning_curve_rows(episodes))


def write_sweep_csv(rows: list[SweepRow]) -> str:
    return _csv_text(("mu", "delta", "mean_eff", "std_eff", "repeats"),
                     [(r.mu, r.delta, r.mean_eff, r.std_eff, r.repeats) for r in rows])


def write_robustness_csv(rows: list[RobustnessRow]) -> str:
    return _csv_text(("cycle", "init_soc", "method", "end_soc", "oec_mj", "savings_pct"),
                     [(r.cycle, r.init_soc, r.method, r.end_soc, r.oec_mj, r.savings_pct)
                      for r in rows])


def write_trace_csv(traces: list) -> str:
    return _csv_text(
        ("t_s", "state_idx", "a_A", "a_B", "a_final", "chooser", "reward",
         "soc", "p_egu_w", "p_batt_w", "forced"),
        [(tr.t_s, tr.state, tr.action_a, tr.action_b, tr.action_final,
          tr.chooser, tr.reward, tr.soc, tr.p_egu_w, tr.p_batt_w,
          int(tr.forced_charging)) for tr in traces])
