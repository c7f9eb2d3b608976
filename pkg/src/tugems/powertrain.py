"""Series-hybrid powertrain components and the one-step plant model.

Power flows over a DC link that couples three devices:

* a traction motor that serves the driver's power demand,
* an engine-generator unit (EGU) that turns fuel into link power,
* a battery pack that buffers the difference.

Sign conventions, used everywhere in this package:

* ``p_batt_w > 0`` discharges the pack, ``< 0`` charges it,
* battery cell current follows the same sign (positive = discharging),
* all powers are W, energies J, time s, state of charge a 0..1 fraction.

The link balance ``p_link = p_egu + p_batt`` holds exactly at every step;
``p_link`` itself is the served traction power plus the traction-motor loss.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PiecewiseLinear",
    "VehicleParams",
    "TractionMotorModel",
    "EguModel",
    "BatteryModel",
    "PlantModels",
    "PlantState",
    "StepOutcome",
    "Plant",
    "traction_power",
    "traction_efficiency",
    "fuel_rate_to_power",
    "fit_egu_quadratic",
    "egu_fuel_power",
    "egu_efficiency",
    "battery_current",
    "soc_step",
    "power_losses",
    "merit",
    "plant_step",
    "motor_loss_from_efficiency_targets",
    "default_motor",
    "default_egu",
    "default_battery",
    "default_models",
]

# Torque (N.m) of a shaft delivering P watts at n rpm: T = 9550 * (P/1000) / n.
_TORQUE_PER_W_RPM = 9.55

_SECONDS_PER_HOUR = 3600.0


class PiecewiseLinear:
    """Piecewise-linear map with clamped ends, for battery curves.

    Breakpoints must be strictly ascending in x.  Outside the covered span
    the end values are held constant, which keeps voltage and resistance
    lookups well defined for any SoC the plant can reach.
    """

    __slots__ = ("xs", "ys")

    def __init__(self, points: object) -> None:
        pts = [(float(x), float(y)) for x, y in points]
        if not pts:
            raise ValueError("PiecewiseLinear needs at least one breakpoint")
        xs = tuple(p[0] for p in pts)
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError(f"breakpoint x values must be strictly ascending, got {xs}")
        self.xs = xs
        self.ys = tuple(p[1] for p in pts)

    def __call__(self, x: float) -> float:
        xs = self.xs
        if x <= xs[0]:
            return self.ys[0]
        if x >= xs[-1]:
            return self.ys[-1]
        i = bisect_right(xs, x) - 1
        x0, x1 = xs[i], xs[i + 1]
        y0, y1 = self.ys[i], self.ys[i + 1]
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0)

    def points(self) -> tuple[tuple[float, float], ...]:
        return tuple(zip(self.xs, self.ys))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PiecewiseLinear):
            return NotImplemented
        return self.xs == other.xs and self.ys == other.ys

    def __repr__(self) -> str:
        return f"PiecewiseLinear({list(self.points())!r})"


@dataclass(frozen=True)
class VehicleParams:
    """Chassis-level parameters of the towing tractor.

    Defaults describe a 16 t machine with a large frontal area and a fixed
    single-ratio gearbox; ``driveline_efficiency`` covers the gears between
    motor shaft and wheels and defaults to lossless (gear losses are folded
    into the motor loss quadratic instead).
    """

    mass_kg: float = 16_000.0
    frontal_area_m2: float = 6.8
    drag_coeff: float = 0.8
    rolling_friction_coeff: float = 0.02
    gear_ratio: float = 25.0
    driveline_efficiency: float = 1.0
    air_density_kg_m3: float = 1.225

    def __post_init__(self) -> None:
        for name in ("mass_kg", "frontal_area_m2", "drag_coeff",
                     "rolling_friction_coeff", "gear_ratio", "air_density_kg_m3"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.driveline_efficiency <= 1.0:
            raise ValueError(
                f"driveline_efficiency must be in (0, 1], got {self.driveline_efficiency}")


def motor_loss_from_efficiency_targets(
    nominal_power_w: float,
    rated_speed_rpm: float,
    eta_rated: float = 0.95,
    eta_part: float = 0.85,
    part_load: float = 0.1,
    idle_loss_w: float = 3500.0,
) -> tuple[float, float, float]:
    """Calibrate quadratic torque-loss coefficients from two efficiency targets.

    Solves for ``(c2, c1, c0)`` of ``loss = c2*T**2 + c1*T + c0`` such that the
    motor reaches ``eta_rated`` at rated torque and ``eta_part`` at
    ``part_load`` of rated torque, with ``c0`` fixed to the idle loss.

    Returns
    -------
    tuple of float
        ``(c2, c1, c0)`` with units W/(N.m)^2, W/(N.m), W.

    Raises
    ------
    ValueError
        If the targets are unreachable with non-negative coefficients.
    """
    if not 0.0 < eta_part < eta_rated < 1.0:
        raise ValueError(
            f"need 0 < eta_part < eta_rated < 1, got {eta_part}, {eta_rated}")
    if not 0.0 < part_load < 1.0:
        raise ValueError(f"part_load must be in (0, 1), got {part_load}")
    t_rated = nominal_power_w * _TORQUE_PER_W_RPM / rated_speed_rpm  # N.m
    loss_rated = nominal_power_w * (1.0 / eta_rated - 1.0)  # W
    p_part = part_load * nominal_power_w
    loss_part = p_part * (1.0 / eta_part - 1.0)  # W
    # Two linear equations in (c2, c1) once c0 is pinned.
    a_full = loss_rated - idle_loss_w
    a_part = loss_part - idle_loss_w
    t_part = part_load * t_rated
    denom = t_rated * t_rated * t_part - t_part * t_part * t_rated
    c2 = (a_full * t_part - a_part * t_rated) / denom
    c1 = (a_part - c2 * t_part * t_part) / t_part
    if c2 < 0.0 or c1 < 0.0:
        raise ValueError(
            "efficiency targets produce a negative loss coefficient; "
            f"solved c2={c2:.6g}, c1={c1:.6g} (raise idle_loss_w or eta_part)")
    return c2, c1, idle_loss_w


_DEFAULT_MOTOR_LOSS = motor_loss_from_efficiency_targets(245_000.0, 3000.0)


@dataclass(frozen=True)
class TractionMotorModel:
    """Traction motor with a quadratic copper/iron loss model in torque.

    ``loss = c2*T**2 + c1*T + c0`` with T the shaft torque in N.m.  Because
    demand traces carry power rather than torque, the plant converts power to
    an equivalent torque at ``rated_speed_rpm``; the tractor operates in a
    narrow low-speed band, so a single reference speed is adequate.
    """

    nominal_power_w: float = 245_000.0
    rated_speed_rpm: float = 3000.0
    loss_c2: float = _DEFAULT_MOTOR_LOSS[0]  # W/(N.m)^2
    loss_c1: float = _DEFAULT_MOTOR_LOSS[1]  # W/(N.m)
    loss_c0: float = _DEFAULT_MOTOR_LOSS[2]  # W

    def __post_init__(self) -> None:
        if self.nominal_power_w <= 0.0:
            raise ValueError(f"nominal_power_w must be positive, got {self.nominal_power_w}")
        if self.rated_speed_rpm <= 0.0:
            raise ValueError(f"rated_speed_rpm must be positive, got {self.rated_speed_rpm}")
        for name in ("loss_c2", "loss_c1", "loss_c0"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")

    def torque_at_power(self, power_w: float) -> float:
        """Equivalent shaft torque (N.m) for an output power at rated speed."""
        return power_w * _TORQUE_PER_W_RPM / self.rated_speed_rpm

    def loss_at_torque(self, torque_nm: float) -> float:
        return (self.loss_c2 * torque_nm + self.loss_c1) * torque_nm + self.loss_c0

    def loss_at_power(self, power_w: float) -> float:
        return self.loss_at_torque(self.torque_at_power(power_w))

    def link_power(self, power_w: float) -> float:
        """DC-link power needed to deliver ``power_w`` at the shaft."""
        return power_w + self.loss_at_power(power_w)

    def power_from_link(self, p_link_w: float) -> float:
        """Invert :meth:`link_power`: shaft power a given link power can serve.

        Returns 0.0 when the link power does not even cover the idle loss.
        """
        if p_link_w <= self.loss_c0:
            return 0.0
        t_per_w = _TORQUE_PER_W_RPM / self.rated_speed_rpm
        a = self.loss_c2 * t_per_w * t_per_w
        b = 1.0 + self.loss_c1 * t_per_w
        c = self.loss_c0 - p_link_w
        if a == 0.0:
            return -c / b
        return (-b + math.sqrt(b * b - 4.0 * a * c)) / (2.0 * a)


def traction_power(torque_nm: float, speed_rpm: float) -> float:
    """Mechanical power (W) of a shaft: torque (N.m) times speed (rpm) / 9550.

    The torque-speed product over 9550 yields kW; the result is converted
    to W here so every interface stays in SI base units.

    Examples
    --------
    >>> traction_power(100.0, 955.0)
    10000.0
    """
    if torque_nm < 0.0:
        raise ValueError(f"torque_nm must be non-negative, got {torque_nm}")
    if speed_rpm < 0.0:
        raise ValueError(f"speed_rpm must be non-negative, got {speed_rpm}")
    return torque_nm * speed_rpm / 9550.0 * 1000.0  # W


def traction_efficiency(motor: TractionMotorModel, torque_nm: float, speed_rpm: float) -> float:
    """Output power over (output power + quadratic loss) at an operating point.

    Zero output power returns 0.0 rather than dividing by the idle loss.
    """
    p_out = traction_power(torque_nm, speed_rpm)  # W
    if p_out == 0.0:
        return 0.0
    return p_out / (p_out + motor.loss_at_torque(torque_nm))


def fuel_rate_to_power(rate_l_per_h: float,
                       density_kg_per_l: float = 0.87,
                       heating_value_j_per_kg: float = 44.0e6) -> float:
    """Convert a volumetric fuel rate (L/h) to chemical fuel power (W)."""
    if rate_l_per_h < 0.0:
        raise ValueError(f"rate_l_per_h must be non-negative, got {rate_l_per_h}")
    return rate_l_per_h * density_kg_per_l * heating_value_j_per_kg / _SECONDS_PER_HOUR


def fit_egu_quadratic(points: object) -> tuple[float, float, float]:
    """Least-squares quadratic ``fuel_power = b2*p**2 + b1*p + b0`` through
    (EGU output power, fuel power) samples.

    Parameters
    ----------
    points : iterable of (float, float)
        At least three samples with distinct output powers, both in W.

    Returns
    -------
    (b2, b1, b0)
    """
    pts = [(float(x), float(y)) for x, y in points]
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.unique(xs).size < 3:
        raise ValueError(
            f"need at least 3 samples with distinct output power, got {xs.tolist()}")
    b2, b1, b0 = np.polyfit(xs, ys, 2)
    return float(b2), float(b1), float(b0)


# Factory-curve anchors: fuel rate (L/h) at a fraction of full EGU load.
DEFAULT_EGU_FUEL_RATES_L_PER_H: dict[float, float] = {0.5: 13.0, 0.75: 18.6, 1.0: 24.1}


@dataclass(frozen=True)
class EguModel:
    """Engine-generator unit: electrical output vs. chemical fuel power.

    ``fuel_b2/b1/b0`` are the quadratic load-curve coefficients of a running
    unit; a commanded output of exactly 0 W means the unit is off and burns
    nothing (handled by the plant, not by the curve itself).
    """

    max_power_w: float
    fuel_b2: float  # 1/W
    fuel_b1: float  # dimensionless
    fuel_b0: float  # W
    fuel_density_kg_per_l: float = 0.87
    fuel_heating_value_j_per_kg: float = 44.0e6

    def __post_init__(self) -> None:
        if self.max_power_w <= 0.0:
            raise ValueError(f"max_power_w must be positive, got {self.max_power_w}")
        if self.fuel_density_kg_per_l <= 0.0:
            raise ValueError(
                f"fuel_density_kg_per_l must be positive, got {self.fuel_density_kg_per_l}")
        if self.fuel_heating_value_j_per_kg <= 0.0:
            raise ValueError(
                f"fuel_heating_value_j_per_kg must be positive, "
                f"got {self.fuel_heating_value_j_per_kg}")
        # The load curve must rise monotonically and always cost more fuel
        # power than it returns electrically; a quadratic lets both be
        # checked at the span ends plus the vertex.
        d0 = self.fuel_b1  # derivative at 0
        d1 = 2.0 * self.fuel_b2 * self.max_power_w + self.fuel_b1
        if d0 <= 0.0 or d1 <= 0.0:
            raise ValueError(
                "fuel curve must be strictly increasing on [0, max_power_w]; "
                f"derivative spans {d0:.6g}..{d1:.6g}")
        margins = [self._curve(p) - p for p in (self.max_power_w / 1000.0, self.max_power_w)]
        if self.fuel_b2 != 0.0:
            vertex = (1.0 - self.fuel_b1) / (2.0 * self.fuel_b2)
            if 0.0 < vertex < self.max_power_w:
                margins.append(self._curve(vertex) - vertex)
        if min(margins) <= 0.0:
            raise ValueError("fuel power must exceed output power on (0, max_power_w]")

    def _curve(self, p_egu_w: float) -> float:
        return (self.fuel_b2 * p_egu_w + self.fuel_b1) * p_egu_w + self.fuel_b0

    @classmethod
    def from_fuel_rates(cls,
                        max_power_w: float,
                        rates_l_per_h: dict[float, float],
                        fuel_density_kg_per_l: float = 0.87,
                        fuel_heating_value_j_per_kg: float = 44.0e6) -> "EguModel":
        """Build the load curve from (load fraction -> L/h) anchor points."""
        pts = []
        for load_fraction, rate in sorted(rates_l_per_h.items()):
            if not 0.0 < load_fraction <= 1.0:
                raise ValueError(f"load fraction must be in (0, 1], got {load_fraction}")
            pts.append((load_fraction * max_power_w,
                        fuel_rate_to_power(rate, fuel_density_kg_per_l,
                                           fuel_heating_value_j_per_kg)))
        b2, b1, b0 = fit_egu_quadratic(pts)
        return cls(max_power_w=max_power_w, fuel_b2=b2, fuel_b1=b1, fuel_b0=b0,
                   fuel_density_kg_per_l=fuel_density_kg_per_l,
                   fuel_heating_value_j_per_kg=fuel_heating_value_j_per_kg)


def egu_fuel_power(egu: EguModel, p_egu_w: float) -> float:
    """Chemical fuel power (W) of a *running* EGU at output ``p_egu_w``.

    This is the bare load curve: it returns ``fuel_b0`` at zero output.
    The plant treats a commanded 0 W as engine-off and charges no fuel.
    """
    if p_egu_w < 0.0 or p_egu_w > egu.max_power_w:
        raise ValueError(
            f"p_egu_w must be within [0, {egu.max_power_w}], got {p_egu_w}")
    return egu._curve(p_egu_w)


def egu_efficiency(egu: EguModel, p_egu_w: float) -> float:
    """Fuel-to-electric efficiency at an output power; 0.0 at zero output."""
    if p_egu_w == 0.0:
        return 0.0
    return p_egu_w / egu_fuel_power(egu, p_egu_w)


@dataclass(frozen=True)
class BatteryModel:
    """Battery pack of identical cells wired as one equivalent string.

    Voltage and internal resistance are piecewise-linear per-cell curves in
    SoC.  Pack power limits are symmetric defaults; SoC itself is tracked as
    a fraction of ``cell_capacity_ah``.
    """

    cell_capacity_ah: float = 2.45
    num_cells: int = 8200
    voltage_curve: PiecewiseLinear = field(
        default_factory=lambda: PiecewiseLinear([(0.2, 3.4), (0.5, 3.6), (0.8, 3.9)]))
    resistance_curve: PiecewiseLinear = field(
        default_factory=lambda: PiecewiseLinear([(0.2, 0.03), (0.8, 0.03)]))
    soc_min: float = 0.2
    soc_max: float = 0.8
    max_charge_power_w: float = 150_000.0
    max_discharge_power_w: float = 150_000.0

    def __post_init__(self) -> None:
        if self.cell_capacity_ah <= 0.0:
            raise ValueError(f"cell_capacity_ah must be positive, got {self.cell_capacity_ah}")
        if self.num_cells < 1:
            raise ValueError(f"num_cells must be at least 1, got {self.num_cells}")
        if not 0.0 <= self.soc_min < self.soc_max <= 1.0:
            raise ValueError(
                f"need 0 <= soc_min < soc_max <= 1, got {self.soc_min}, {self.soc_max}")
        if self.max_charge_power_w < 0.0 or self.max_discharge_power_w < 0.0:
            raise ValueError("pack power limits must be non-negative")
        for soc in (self.soc_min, self.soc_max, *self.voltage_curve.xs):
            if self.voltage_curve(soc) <= 0.0:
                raise ValueError(f"cell voltage must be positive, is not at soc={soc}")
        for soc in (self.soc_min, self.soc_max, *self.resistance_curve.xs):
            if self.resistance_curve(soc) < 0.0:
                raise ValueError(f"cell resistance must be non-negative, is not at soc={soc}")

    def cell_voltage(self, soc: float) -> float:
        return self.voltage_curve(soc)  # V

    def cell_resistance(self, soc: float) -> float:
        return self.resistance_curve(soc)  # ohm

    @property
    def coulomb_capacity(self) -> float:
        return self.cell_capacity_ah * _SECONDS_PER_HOUR  # A.s


def battery_current(battery: BatteryModel, p_batt_w: float, soc: float) -> float:
    """Per-cell current (A) delivering pack power ``p_batt_w`` at a given SoC.

    Positive current discharges.  The pack is a single series-equivalent
    string, so the cell current is pack power over (cell voltage x cells).
    """
    return p_batt_w / (battery.cell_voltage(soc) * battery.num_cells)


def soc_step(battery: BatteryModel, soc: float, cell_current_a: float,
             dt_s: float) -> tuple[float, bool]:
    """Integrate SoC one step; clamp into [soc_min, soc_max].

    Returns
    -------
    (new_soc, saturated)
        ``saturated`` is True when the unclamped update left the window.
    """
    if dt_s <= 0.0:
        raise ValueError(f"dt_s must be positive, got {dt_s}")
    raw = soc - cell_current_a * dt_s / battery.coulomb_capacity
    if raw < battery.soc_min:
        return battery.soc_min, True
    if raw > battery.soc_max:
        return battery.soc_max, True
    return raw, False


def power_losses(models: "PlantModels", p_egu_w: float, fuel_power_w: float,
                 cell_current_a: float, soc: float) -> tuple[float, float]:
    """Instantaneous (engine_loss_w, battery_loss_w).

    Engine loss is fuel power minus electrical output; battery loss is the
    per-cell I^2.R dissipation summed over the pack.
    """
    engine_loss = fuel_power_w - p_egu_w
    if engine_loss < 0.0:
        raise ValueError(
            f"engine loss is negative ({engine_loss:.6g} W); the EGU fuel curve "
            "violates its fuel-power > output-power invariant")
    r_cell = models.battery.cell_resistance(soc)  # ohm
    battery_loss = r_cell * cell_current_a * cell_current_a * models.battery.num_cells
    return engine_loss, battery_loss


def merit(reward_baseline: float, p_loss_total_w: float, soc: float,
          soc_ref: float = 0.28, penalty_coeff: float = 500.0) -> float:
    """Step reward: baseline minus loss in kW, minus an SoC-deficit penalty.

    The loss term enters in kW so that typical rewards sit in the -300..0
    range; below ``soc_ref`` an extra ``penalty_coeff * (soc_ref - soc)``
    is subtracted to make charge depletion unattractive.
    """
    if p_loss_total_w < 0.0:
        raise ValueError(f"p_loss_total_w must be non-negative, got {p_loss_total_w}")
    r = reward_baseline - p_loss_total_w / 1000.0
    if soc < soc_ref:
        r -= penalty_coeff * (soc_ref - soc)
    return r


@dataclass(frozen=True)
class PlantModels:
    """Immutable parameter bundle consumed by :func:`plant_step`."""

    vehicle: VehicleParams
    motor: TractionMotorModel
    egu: EguModel
    battery: BatteryModel
    soc_ref: float = 0.28
    charge_sustain_soc: float = 0.28
    charge_release_margin: float = 0.005
    reward_baseline: float = 0.0
    soc_penalty_coeff: float = 500.0

    def __post_init__(self) -> None:
        if not self.battery.soc_min <= self.soc_ref <= self.battery.soc_max:
            raise ValueError(
                f"soc_ref {self.soc_ref} outside battery window "
                f"[{self.battery.soc_min}, {self.battery.soc_max}]")
        if not self.battery.soc_min <= self.charge_sustain_soc <= self.battery.soc_max:
            raise ValueError(
                f"charge_sustain_soc {self.charge_sustain_soc} outside battery window")
        if self.charge_release_margin < 0.0:
            raise ValueError(
                f"charge_release_margin must be non-negative, got {self.charge_release_margin}")
        if self.soc_penalty_coeff < 0.0:
            raise ValueError(
                f"soc_penalty_coeff must be non-negative, got {self.soc_penalty_coeff}")


@dataclass
class PlantState:
    """Mutable integration state of one simulated run."""

    soc: float
    forced_charging: bool = False
    cumulative_fuel_energy: float = 0.0      # J
    cumulative_engine_loss: float = 0.0      # J
    cumulative_battery_loss: float = 0.0     # J
    cumulative_traction_loss: float = 0.0    # J
    cumulative_traction_output: float = 0.0  # J, demand actually served
    cumulative_demand_energy: float = 0.0    # J, demand as requested
    cumulative_battery_draw: float = 0.0     # J, signed terminal energy
    cumulative_egu_output: float = 0.0       # J
    cumulative_shortfall: float = 0.0        # J, unserved demand
    steps: int = 0
    forced_charge_steps: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.soc <= 1.0:
            raise ValueError(f"soc must be within [0, 1], got {self.soc}")


@dataclass(frozen=True)
class StepOutcome:
    """Everything one plant step produced, for rewards, traces and ledgers."""

    p_egu_w: float        # EGU output actually applied
    p_batt_w: float       # pack terminal power, + discharges
    p_link_w: float       # served DC-link power, == p_egu_w + p_batt_w
    p_served_w: float     # traction demand actually delivered
    shortfall_w: float    # requested minus served demand
    cell_current_a: float
    fuel_power_w: float
    engine_loss_w: float
    battery_loss_w: float
    traction_loss_w: float
    p_loss_total_w: float  # engine + battery loss, the merit input
    reward: float
    forced_charging: bool
    soc: float            # post-step
    saturated: bool       # battery power was cut by an SoC bound this step


def plant_step(state: PlantState, p_dem_w: float, p_egu_cmd_w: float, dt_s: float,
               models: PlantModels) -> tuple[PlantState, StepOutcome]:
    """Advance the plant one step under a power demand and an EGU command.

    The step resolves, in order: the charge-sustain override (EGU forced to
    full power while SoC is low, with hysteresis on release), battery power
    capability at the current SoC, and any residual the EGU must absorb.
    If demand exceeds the combined EGU-plus-discharge capability the step
    serves what it can and reports the shortfall instead of raising.

    ``state`` is updated in place and returned together with the outcome.
    """
    if p_dem_w < 0.0:
        raise ValueError(f"p_dem_w must be non-negative, got {p_dem_w}")
    egu = models.egu
    if p_egu_cmd_w < 0.0 or p_egu_cmd_w > egu.max_power_w:
        raise ValueError(
            f"p_egu_cmd_w must be within [0, {egu.max_power_w}], got {p_egu_cmd_w}")
    if dt_s <= 0.0:
        raise ValueError(f"dt_s must be positive, got {dt_s}")

    battery = models.battery
    motor = models.motor
    soc0 = state.soc

    # Charge-sustain override with hysteresis: engage strictly below the
    # sustain threshold, stay engaged until SoC clears threshold + margin.
    if state.forced_charging and soc0 >= models.charge_sustain_soc + models.charge_release_margin:
        state.forced_charging = False
    if soc0 < models.charge_sustain_soc:
        state.forced_charging = True
    forced = state.forced_charging

    p_link_req = p_dem_w + motor.loss_at_power(p_dem_w)  # W
    p_egu = egu.max_power_w if forced else p_egu_cmd_w

    # Battery capability this step, shrunk so the SoC window is never left.
    u_cell = battery.cell_voltage(soc0)  # V
    pack_volt = u_cell * battery.num_cells
    coulomb = battery.coulomb_capacity  # A.s
    dis_cap = min(battery.max_discharge_power_w,
                  (soc0 - battery.soc_min) * coulomb / dt_s * pack_volt)
    chg_cap = min(battery.max_charge_power_w,
                  (battery.soc_max - soc0) * coulomb / dt_s * pack_volt)

    # The EGU absorbs whatever the battery cannot, within its own rating.
    p_egu = min(egu.max_power_w,
                max(0.0, min(max(p_egu, p_link_req - dis_cap), p_link_req + chg_cap)))
    p_batt_unclamped = p_link_req - p_egu
    p_batt = min(dis_cap, max(-chg_cap, p_batt_unclamped))
    saturated = p_batt != p_batt_unclamped

    if p_batt_unclamped > dis_cap:
        # Genuine shortfall: serve the largest demand the link can carry.
        p_link = p_egu + p_batt
        p_served = motor.power_from_link(p_link)
        traction_loss = p_link - p_served
    else:
        p_link = p_egu + p_batt  # == p_link_req in this branch
        p_served = p_dem_w
        traction_loss = p_link - p_served
    shortfall = p_dem_w - p_served

    fuel_power = egu._curve(p_egu) if p_egu > 0.0 else 0.0  # engine-off at 0 W
    current = p_batt / pack_volt  # A per cell
    engine_loss, battery_loss = power_losses(models, p_egu, fuel_power, current, soc0)
    new_soc = soc0 - current * dt_s / coulomb
    # Capability clamps above keep this inside the window up to rounding.
    new_soc = min(battery.soc_max, max(battery.soc_min, new_soc))
    state.soc = new_soc

    p_loss_total = engine_loss + battery_loss
    reward = merit(models.reward_baseline, p_loss_total, new_soc,
                   models.soc_ref, models.soc_penalty_coeff)

    state.cumulative_fuel_energy += fuel_power * dt_s
    state.cumulative_engine_loss += engine_loss * dt_s
    state.cumulative_battery_loss += battery_loss * dt_s
    state.cumulative_traction_loss += traction_loss * dt_s
    state.cumulative_traction_output += p_served * dt_s
    state.cumulative_demand_energy += p_dem_w * dt_s
    state.cumulative_battery_draw += p_batt * dt_s
    state.cumulative_egu_output += p_egu * dt_s
    state.cumulative_shortfall += shortfall * dt_s
    state.steps += 1
    if forced:
        state.forced_charge_steps += 1

    outcome = StepOutcome(
        p_egu_w=p_egu, p_batt_w=p_batt, p_link_w=p_link, p_served_w=p_served,
        shortfall_w=shortfall, cell_current_a=current, fuel_power_w=fuel_power,
        engine_loss_w=engine_loss, battery_loss_w=battery_loss,
        traction_loss_w=traction_loss, p_loss_total_w=p_loss_total,
        reward=reward, forced_charging=forced, soc=new_soc, saturated=saturated)
    return state, outcome


class Plant:
    """Convenience wrapper pairing :class:`PlantModels` with a live state."""

    def __init__(self, models: PlantModels, initial_soc: float = 0.5) -> None:
        self.models = models
        self.state = PlantState(soc=initial_soc)

    def reset(self, initial_soc: float) -> PlantState:
        self.state = PlantState(soc=initial_soc)
        return self.state

    def step(self, p_dem_w: float, p_egu_cmd_w: float, dt_s: float) -> StepOutcome:
        _, outcome = plant_step(self.state, p_dem_w, p_egu_cmd_w, dt_s, self.models)
        return outcome


def default_motor() -> TractionMotorModel:
    return TractionMotorModel()


def default_egu() -> EguModel:
    """EGU fitted through the factory fuel-rate anchors at 50/75/100 % load."""
    return EguModel.from_fuel_rates(86_200.0, DEFAULT_EGU_FUEL_RATES_L_PER_H)


def default_battery() -> BatteryModel:
    return BatteryModel()


def default_models() -> PlantModels:
    return PlantModels(vehicle=VehicleParams(), motor=default_motor(),
                       egu=default_egu(), battery=default_battery())
