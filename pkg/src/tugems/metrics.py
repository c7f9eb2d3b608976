"""Episode-level energy bookkeeping built from plant integration state.

The overall energy consumption (OEC) of an episode is everything the plant
drew: fuel chemical energy plus what left the battery store, where the
store contribution counts the terminal energy and the resistive dissipation.
Under that definition the ledger closes exactly::

    oec == traction output + engine loss + battery loss + traction loss

up to float accumulation, which the tests bound at 1e-6 relative.  A second
OEC figure converts the SoC swing to J through the cell voltage at the
episode-mean SoC; it is recorded for comparison only and differs from the
exact figure by the resistive term and the integration shortcut.
"""

from __future__ import annotations

from dataclasses import dataclass

from .powertrain import BatteryModel, PlantState

__all__ = ["EpisodeMetrics", "energy_efficiency", "episode_metrics"]


def energy_efficiency(state: PlantState) -> float | None:
    """Served traction energy over total drawn energy, in [0, 1].

    Returns None when the episode drew no energy at all (a degenerate,
    lossless zero-demand run), since the ratio is undefined there.
    """
    oec = (state.cumulative_fuel_energy + state.cumulative_battery_draw
           + state.cumulative_battery_loss)
    if oec <= 0.0:
        return None
    eff = state.cumulative_traction_output / oec
    return min(1.0, max(0.0, eff))


@dataclass(frozen=True)
class EpisodeMetrics:
    """Summary of one simulated episode."""

    energy_efficiency: float | None
    oec_j: float
    oec_delta_soc_j: float  # comparison figure, SoC swing valued at mean-SoC voltage
    start_soc: float
    end_soc: float
    mean_soc: float
    total_loss_j: float
    engine_loss_j: float
    battery_loss_j: float
    traction_loss_j: float
    fuel_energy_j: float
    battery_draw_j: float
    traction_output_j: float
    demand_energy_j: float
    shortfall_j: float
    total_reward: float
    forced_charge_steps: int
    steps: int

    def __post_init__(self) -> None:
        if self.energy_efficiency is not None and not 0.0 <= self.energy_efficiency <= 1.0:
            raise ValueError(
                f"energy_efficiency must be in [0, 1], got {self.energy_efficiency}")
        if self.oec_j < 0.0:
            raise ValueError(f"oec_j must be non-negative, got {self.oec_j}")


def episode_metrics(state: PlantState, battery: BatteryModel, start_soc: float,
                    mean_soc: float, total_reward: float) -> EpisodeMetrics:
    """Assemble :class:`EpisodeMetrics` from an episode-end plant state."""
    oec = (state.cumulative_fuel_energy + state.cumulative_battery_draw
           + state.cumulative_battery_loss)
    delta_soc_draw = ((start_soc - state.soc) * battery.coulomb_capacity
                      * battery.cell_voltage(mean_soc) * battery.num_cells)  # J
    total_loss = (state.cumulative_engine_loss + state.cumulative_battery_loss
                  + state.cumulative_traction_loss)
    return EpisodeMetrics(
        energy_efficiency=energy_efficiency(state),
        oec_j=oec,
        oec_delta_soc_j=state.cumulative_fuel_energy + delta_soc_draw,
        start_soc=start_soc,
        end_soc=state.soc,
        mean_soc=mean_soc,
        total_loss_j=total_loss,
        engine_loss_j=state.cumulative_engine_loss,
        battery_loss_j=state.cumulative_battery_loss,
        traction_loss_j=state.cumulative_traction_loss,
        fuel_energy_j=state.cumulative_fuel_energy,
        battery_draw_j=state.cumulative_battery_draw,
        traction_output_j=state.cumulative_traction_output,
        demand_energy_j=state.cumulative_demand_energy,
        shortfall_j=state.cumulative_shortfall,
        total_reward=total_reward,
        forced_charge_steps=state.forced_charge_steps,
        steps=state.steps,
    )
