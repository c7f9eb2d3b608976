"""Two-learner ensemble: action combination and episode simulation.

Two Q-learning agents observe the same state and each propose an EGU power
level; a combination rule picks the action the plant executes.  Three rules
are provided:

* ``maximum``: take the proposal whose own Q-value is higher (tie: agent A),
* ``random``: take agent A's proposal with probability 1 - t,
* ``weighted``: blend the two power levels as mu*p_A + delta*p_B and snap
  to the nearest grid level (tie: lower power).

The executed action earns one reward, and both agents learn from that same
(state, executed action, reward, next state) transition.  Degenerate
settings reduce exactly to a single agent: ``weighted`` with mu = 1 and
``random`` with t = 0 reproduce agent A's solo trajectory bit for bit
because every consumer draws from its own named RNG stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drive_cycle import DriveCycle
from .metrics import EpisodeMetrics, episode_metrics
from .powertrain import Plant
from .qlearn import ActionGrid, Agent, StateGrid, e2e_value

__all__ = [
    "POLICY_KINDS",
    "EnsemblePolicy",
    "EnsembleStepTrace",
    "EpisodeResult",
    "combine_max",
    "combine_random",
    "combine_weighted",
    "ensemble_step",
    "run_ensemble_episode",
    "run_single_episode",
]

POLICY_KINDS = ("maximum", "random", "weighted")

CHOOSER_A = "A"
CHOOSER_B = "B"
CHOOSER_MAX_A = "max-A"
CHOOSER_MAX_B = "max-B"
CHOOSER_BLEND = "blend"


@dataclass(frozen=True)
class EnsemblePolicy:
    """Parameters of the action-combination rule.

    ``t`` applies to ``random`` (probability of taking agent B); ``mu`` and
    ``delta`` apply to ``weighted`` and must sum to 1.
    """

    kind: str
    t: float = 0.5
    mu: float = 0.5
    delta: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"kind must be one of {POLICY_KINDS}, got {self.kind!r}")
        if self.kind == "random" and not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t must be within [0, 1], got {self.t}")
        if self.kind == "weighted":
            if self.mu < 0.0 or self.delta < 0.0:
                raise ValueError(
                    f"mu and delta must be non-negative, got {self.mu}, {self.delta}")
            if abs(self.mu + self.delta - 1.0) > 1e-9:
                raise ValueError(f"mu + delta must equal 1, got {self.mu + self.delta}")

    @classmethod
    def weighted(cls, mu: float) -> "EnsemblePolicy":
        return cls(kind="weighted", mu=mu, delta=1.0 - mu)


def combine_max(action_a: int, value_a: float, action_b: int, value_b: float) -> int:
    """Own-value comparison: the agent that rates its proposal higher wins.

    Equal values fall to agent A.
    """
    if not (np.isfinite(value_a) and np.isfinite(value_b)):
        raise ValueError(f"Q-values must be finite, got {value_a}, {value_b}")
    return action_a if value_a >= value_b else action_b


def combine_random(action_a: int, action_b: int, t: float,
                   rng: np.random.Generator) -> int:
    """Probabilistic pick: agent A when the U(0,1) draw clears ``t``."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be within [0, 1], got {t}")
    y = rng.random()
    return action_a if y >= t else action_b


def combine_weighted(action_a: int, action_b: int, mu: float, delta: float,
                     actions: ActionGrid) -> int:
    """Blend the two power levels and snap back onto the action ladder."""
    if mu < 0.0 or delta < 0.0 or abs(mu + delta - 1.0) > 1e-9:
        raise ValueError(f"mu and delta must be non-negative and sum to 1, "
                         f"got {mu}, {delta}")
    blended = mu * actions.level(action_a) + delta * actions.level(action_b)  # W
    return actions.nearest(blended)


@dataclass(frozen=True)
class EnsembleStepTrace:
    """One executed step, as written to trace CSVs."""

    t_s: float
    state: int
    action_a: int
    action_b: int
    action_final: int
    chooser: str
    reward: float
    soc: float        # post-step
    p_egu_w: float
    p_batt_w: float
    forced_charging: bool


@dataclass
class EpisodeResult:
    metrics: EpisodeMetrics
    traces: list[EnsembleStepTrace] | None


def _combine(policy: EnsemblePolicy, agent_a: Agent, agent_b: Agent, state: int,
             action_a: int, action_b: int, actions: ActionGrid,
             combiner_rng: np.random.Generator) -> tuple[int, str]:
    if policy.kind == "weighted":
        return (combine_weighted(action_a, action_b, policy.mu, policy.delta, actions),
                CHOOSER_BLEND)
    if policy.kind == "maximum":
        value_a = float(agent_a.q.values[state, action_a])
        value_b = float(agent_b.q.values[state, action_b])
        final = combine_max(action_a, value_a, action_b, value_b)
        return final, (CHOOSER_MAX_A if value_a >= value_b else CHOOSER_MAX_B)
    final = combine_random(action_a, action_b, policy.t, combiner_rng)
    return final, (CHOOSER_A if final == action_a else CHOOSER_B)


def ensemble_step(agent_a: Agent, agent_b: Agent, plant: Plant, grid: StateGrid,
                  actions: ActionGrid, policy: EnsemblePolicy,
                  p_dem_w: float, p_dem_next_w: float, dt_s: float,
                  theta_a: float, theta_b: float,
                  combiner_rng: np.random.Generator,
                  t_s: float = 0.0, learn: bool = True,
                  greedy: bool = False) -> EnsembleStepTrace:
    """Propose, combine, execute, and (optionally) learn for one step.

    Both agents are updated at the *executed* action with the single reward
    the plant returned.  ``greedy`` bypasses exploration draws entirely for
    frozen-policy evaluation.
    """
    soc = plant.state.soc
    state = grid.state_index(grid.p_dem_bin(p_dem_w), grid.soc_bin(soc))
    if greedy:
        action_a = agent_a.greedy(state)
        action_b = agent_b.greedy(state)
    else:
        action_a = agent_a.propose(state, theta_a)
        action_b = agent_b.propose(state, theta_b)
    action_final, chooser = _combine(policy, agent_a, agent_b, state,
                                     action_a, action_b, actions, combiner_rng)
    outcome = plant.step(p_dem_w, actions.level(action_final), dt_s)
    next_state = grid.state_index(grid.p_dem_bin(p_dem_next_w),
                                  grid.soc_bin(outcome.soc))
    if learn:
        agent_a.update(state, action_final, outcome.reward, next_state)
        agent_b.update(state, action_final, outcome.reward, next_state)
    return EnsembleStepTrace(
        t_s=t_s, state=state, action_a=action_a, action_b=action_b,
        action_final=action_final, chooser=chooser, reward=outcome.reward,
        soc=outcome.soc, p_egu_w=outcome.p_egu_w, p_batt_w=outcome.p_batt_w,
        forced_charging=outcome.forced_charging)


def run_ensemble_episode(cycle: DriveCycle, agent_a: Agent, agent_b: Agent,
                         policy: EnsemblePolicy, episode_index: int,
                         plant: Plant, initial_soc: float, grid: StateGrid,
                         actions: ActionGrid,
                         combiner_rng: np.random.Generator,
                         learn: bool = True, greedy: bool = False,
                         record_traces: bool = False) -> EpisodeResult:
    """Run one full cycle under the two-agent ensemble.

    The exploration thresholds come from each agent's own schedule at
    ``episode_index`` and stay frozen for the whole episode.  The plant is
    reset to ``initial_soc`` first.  For the final sample, where no next
    demand exists, the bootstrap state holds the last demand value.
    """
    theta_a = 0.0 if greedy else e2e_value(agent_a.config.schedule, episode_index)
    theta_b = 0.0 if greedy else e2e_value(agent_b.config.schedule, episode_index)
    plant.reset(initial_soc)
    demand = cycle.demand_w.tolist()
    n = len(demand)
    if n == 0:
        raise ValueError("cannot run an episode on an empty cycle")
    dt = cycle.dt_s
    # The demand trace is fixed, so its axis can be binned once up front.
    p_bins = [grid.p_dem_bin(p) for p in demand]

    values_a = agent_a.q.values
    values_b = agent_b.q.values
    lr_a = agent_a.config.learning_rate
    lr_b = agent_b.config.learning_rate
    gamma_a = agent_a.config.discount
    gamma_b = agent_b.config.discount
    rng_a = agent_a.rng
    rng_b = agent_b.rng
    n_actions = actions.n_actions
    n_soc = grid.n_soc
    soc_bin = grid.soc_bin
    step = plant.step
    level = actions.levels_w

    traces: list[EnsembleStepTrace] | None = [] if record_traces else None
    total_reward = 0.0
    soc_sum = 0.0
    state = p_bins[0] * n_soc + soc_bin(plant.state.soc)
    for i in range(n):
        p_dem = demand[i]
        if greedy:
            action_a = int(values_a[state].argmax())
            action_b = int(values_b[state].argmax())
        else:
            action_a = (int(values_a[state].argmax()) if rng_a.random() >= theta_a
                        else int(rng_a.integers(n_actions)))
            action_b = (int(values_b[state].argmax()) if rng_b.random() >= theta_b
                        else int(rng_b.integers(n_actions)))
        action_final, chooser = _combine(policy, agent_a, agent_b, state,
                                         action_a, action_b, actions, combiner_rng)
        outcome = step(p_dem, level[action_final], dt)
        j = i + 1 if i + 1 < n else i
        next_state = p_bins[j] * n_soc + soc_bin(outcome.soc)
        reward = outcome.reward
        if learn:
            row = values_a[state]
            row[action_final] += lr_a * (
                reward + gamma_a * values_a[next_state].max() - row[action_final])
            row = values_b[state]
            row[action_final] += lr_b * (
                reward + gamma_b * values_b[next_state].max() - row[action_final])
        total_reward += reward
        soc_sum += outcome.soc
        if traces is not None:
            traces.append(EnsembleStepTrace(
                t_s=i * dt, state=state, action_a=action_a, action_b=action_b,
                action_final=action_final, chooser=chooser, reward=reward,
                soc=outcome.soc, p_egu_w=outcome.p_egu_w,
                p_batt_w=outcome.p_batt_w, forced_charging=outcome.forced_charging))
        state = next_state
    metrics = episode_metrics(plant.state, plant.models.battery, initial_soc,
                              soc_sum / n, total_reward)
    return EpisodeResult(metrics=metrics, traces=traces)


def run_single_episode(cycle: DriveCycle, agent: Agent, episode_index: int,
                       plant: Plant, initial_soc: float, grid: StateGrid,
                       actions: ActionGrid, learn: bool = True,
                       greedy: bool = False,
                       record_traces: bool = False) -> EpisodeResult:
    """Single-learner counterpart of :func:`run_ensemble_episode`.

    Kept operation-for-operation aligned with the ensemble loop so that the
    degenerate ensemble settings reproduce it exactly.  Trace rows mirror
    the agent's action into both proposal columns with chooser "A".
    """
    theta = 0.0 if greedy else e2e_value(agent.config.schedule, episode_index)
    plant.reset(initial_soc)
    demand = cycle.demand_w.tolist()
    n = len(demand)
    if n == 0:
        raise ValueError("cannot run an episode on an empty cycle")
    dt = cycle.dt_s
    p_bins = [grid.p_dem_bin(p) for p in demand]

    values = agent.q.values
    lr = agent.config.learning_rate
    gamma = agent.config.discount
    rng = agent.rng
    n_actions = actions.n_actions
    n_soc = grid.n_soc
    soc_bin = grid.soc_bin
    step = plant.step
    level = actions.levels_w

    traces: list[EnsembleStepTrace] | None = [] if record_traces else None
    total_reward = 0.0
    soc_sum = 0.0
    state = p_bins[0] * n_soc + soc_bin(plant.state.soc)
    for i in range(n):
        p_dem = demand[i]
        if greedy:
            action = int(values[state].argmax())
        else:
            action = (int(values[state].argmax()) if rng.random() >= theta
                      else int(rng.integers(n_actions)))
        outcome = step(p_dem, level[action], dt)
        j = i + 1 if i + 1 < n else i
        next_state = p_bins[j] * n_soc + soc_bin(outcome.soc)
        reward = outcome.reward
        if learn:
            row = values[state]
            row[action] += lr * (
                reward + gamma * values[next_state].max() - row[action])
        total_reward += reward
        soc_sum += outcome.soc
        if traces is not None:
            traces.append(EnsembleStepTrace(
                t_s=i * dt, state=state, action_a=action, action_b=action,
                action_final=action, chooser=CHOOSER_A, reward=reward,
                soc=outcome.soc, p_egu_w=outcome.p_egu_w,
                p_batt_w=outcome.p_batt_w, forced_charging=outcome.forced_charging))
        state = next_state
    metrics = episode_metrics(plant.state, plant.models.battery, initial_soc,
                              soc_sum / n, total_reward)
    return EpisodeResult(metrics=metrics, traces=traces)
