"""Driver power-demand traces: file I/O, validation, and synthesis.

A drive cycle is a fixed-timestep sequence of non-negative power demand in W.
Cycles are exchanged as UTF-8 CSV files with LF line endings and the header
``t_s,p_dem_w``; timestamps must rise uniformly.  Speed traces can be turned
into demand via standard longitudinal dynamics (rolling resistance, aero
drag, inertia), with negative tractive power clamped to zero since the
tractor does not recuperate.

The four built-in towing cycles are synthetic stand-ins generated from
piecewise-constant duty patterns with seeded bounded noise; the real
manufacturer cycles are not published.  Every built-in label carries a
``-synthetic`` suffix to keep that visible in result tables.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .powertrain import VehicleParams

__all__ = [
    "CYCLE_POWER_MAX_W",
    "GRAVITY_M_S2",
    "CycleError",
    "DriveCycle",
    "SynthSpec",
    "validate_cycle",
    "check_cycle",
    "load_cycle",
    "save_cycle",
    "speed_to_power",
    "synth_cycle",
    "builtin_cycle",
    "BUILTIN_CYCLE_NAMES",
]

CYCLE_POWER_MAX_W = 253_000.0  # plant envelope: demand above this is invalid
GRAVITY_M_S2 = 9.81

_HEADER = ("t_s", "p_dem_w")


class CycleError(ValueError):
    """Malformed cycle data (file contents or constructed traces)."""


@dataclass
class DriveCycle:
    """Fixed-timestep power-demand trace.

    The demand array is made read-only on construction; build a new cycle
    instead of editing one in place.
    """

    dt_s: float
    demand_w: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        arr = np.asarray(self.demand_w, dtype=np.float64)
        arr = arr.copy()
        arr.setflags(write=False)
        self.demand_w = arr

    def __len__(self) -> int:
        return int(self.demand_w.size)

    @property
    def duration_s(self) -> float:
        return self.dt_s * len(self)

    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt_s


def validate_cycle(cycle: DriveCycle) -> list[str]:
    """Check a cycle against the trace invariants; return violation messages.

    An empty list means the cycle is valid.  Violations name the offending
    sample index where one exists.
    """
    problems: list[str] = []
    if not np.isfinite(cycle.dt_s) or cycle.dt_s <= 0.0:
        problems.append(f"dt_s must be a positive finite number, got {cycle.dt_s}")
    if len(cycle) == 0:
        problems.append("cycle has no samples")
    demand = cycle.demand_w
    bad = np.flatnonzero(~np.isfinite(demand))
    for i in bad[:5]:
        problems.append(f"sample {int(i)}: demand is not finite")
    low = np.flatnonzero(np.isfinite(demand) & (demand < 0.0))
    for i in low[:5]:
        problems.append(f"sample {int(i)}: demand {demand[i]!r} W is negative")
    high = np.flatnonzero(np.isfinite(demand) & (demand > CYCLE_POWER_MAX_W))
    for i in high[:5]:
        problems.append(
            f"sample {int(i)}: demand {demand[i]!r} W exceeds the "
            f"{CYCLE_POWER_MAX_W:.0f} W envelope")
    return problems


def check_cycle(cycle: DriveCycle) -> DriveCycle:
    """Raise :class:`CycleError` if the cycle is invalid, else return it."""
    problems = validate_cycle(cycle)
    if problems:
        raise CycleError("; ".join(problems))
    return cycle


def load_cycle(path: str | Path) -> DriveCycle:
    """Parse a ``t_s,p_dem_w`` CSV file into a validated cycle.

    Raises
    ------
    CycleError
        On a missing/wrong header, non-numeric fields, non-uniform or
        non-increasing timestamps, or out-of-range demand.  Messages name
        the offending CSV row (1-based, header is row 1).
    """
    path = Path(path)
    times: list[float] = []
    demand: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CycleError(f"{path}: file is empty") from None
        if tuple(h.strip() for h in header) != _HEADER:
            raise CycleError(
                f"{path}: expected header {','.join(_HEADER)!r}, got {','.join(header)!r}")
        for row_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue  # ignore a trailing blank line
            if len(row) != 2:
                raise CycleError(f"{path}: row {row_no}: expected 2 fields, got {len(row)}")
            try:
                t = float(row[0])
                p = float(row[1])
            except ValueError:
                raise CycleError(
                    f"{path}: row {row_no}: non-numeric field in {row!r}") from None
            times.append(t)
            demand.append(p)
    if not times:
        raise CycleError(f"{path}: no samples after the header")
    if len(times) >= 2:
        dt = times[1] - times[0]
        if dt <= 0.0:
            raise CycleError(
                f"{path}: row 3: time must increase (t goes {times[0]!r} -> {times[1]!r})")
        tol = 1e-6 * max(1.0, abs(dt))
        for i in range(1, len(times)):
            step = times[i] - times[i - 1]
            if abs(step - dt) > tol:
                raise CycleError(
                    f"{path}: row {i + 2}: non-uniform time step "
                    f"{step!r} s (expected {dt!r} s)")
    else:
        dt = 1.0  # a single sample carries no spacing; 1 s is the convention
    cycle = DriveCycle(dt_s=dt, demand_w=np.array(demand), label=path.stem)
    problems = validate_cycle(cycle)
    if problems:
        raise CycleError(f"{path}: " + "; ".join(problems))
    return cycle


def save_cycle(cycle: DriveCycle, path: str | Path) -> None:
    """Write a cycle as ``t_s,p_dem_w`` CSV (UTF-8, LF, full float precision).

    Values are written with ``repr`` so a save/load round trip reproduces
    the demand bit-exactly.
    """
    check_cycle(cycle)
    path = Path(path)
    lines = [",".join(_HEADER)]
    dt = cycle.dt_s
    for i, p in enumerate(cycle.demand_w):
        lines.append(f"{i * dt!r},{float(p)!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def speed_to_power(speeds_m_s: object, dt_s: float,
                   params: VehicleParams | None = None,
                   label: str = "") -> DriveCycle:
    """Convert a speed trace (m/s) to a power-demand cycle.

    Demand per sample is rolling resistance + aero drag + inertia, divided
    by the driveline efficiency::

        p = (m*g*c_r*v + 0.5*rho*c_d*A*v**3 + m*a*v) / eta

    Acceleration uses the forward difference; the final sample coasts
    (a = 0).  Negative results (deceleration) clamp to zero because the
    machine has no regenerative path.

    Raises
    ------
    CycleError
        If a sample exceeds the demand envelope; the message names it.
    """
    if params is None:
        params = VehicleParams()
    if dt_s <= 0.0:
        raise CycleError(f"dt_s must be positive, got {dt_s}")
    v = np.asarray(speeds_m_s, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise CycleError("speed trace must be a non-empty 1-D sequence")
    if np.any(v < 0.0):
        i = int(np.flatnonzero(v < 0.0)[0])
        raise CycleError(f"sample {i}: speed {v[i]!r} m/s is negative")
    accel = np.zeros_like(v)
    accel[:-1] = np.diff(v) / dt_s  # m/s^2
    rolling = params.mass_kg * GRAVITY_M_S2 * params.rolling_friction_coeff * v
    aero = 0.5 * params.air_density_kg_m3 * params.drag_coeff * params.frontal_area_m2 * v ** 3
    inertia = params.mass_kg * accel * v
    p = (rolling + aero + inertia) / params.driveline_efficiency
    p = np.maximum(p, 0.0)
    over = np.flatnonzero(p > CYCLE_POWER_MAX_W)
    if over.size:
        i = int(over[0])
        raise CycleError(
            f"sample {i}: computed demand {p[i]:.1f} W exceeds the "
            f"{CYCLE_POWER_MAX_W:.0f} W envelope")
    return DriveCycle(dt_s=dt_s, demand_w=p, label=label)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic piecewise-constant cycle.

    ``segments`` is a sequence of (level_w, hold_s) pairs.  When
    ``duration_s`` is given the segment pattern repeats cyclically until the
    duration is filled, otherwise the duration is the sum of the holds.
    Uniform noise in [-noise_amplitude_w, +noise_amplitude_w] is added per
    sample, so every sample stays within that band around its level.
    """

    segments: tuple[tuple[float, float], ...]
    dt_s: float = 1.0
    duration_s: float | None = None
    noise_amplitude_w: float = 0.0
    seed: int = 0
    label: str = ""

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("segments must not be empty")
        if self.dt_s <= 0.0:
            raise ValueError(f"dt_s must be positive, got {self.dt_s}")
        if self.noise_amplitude_w < 0.0:
            raise ValueError(
                f"noise_amplitude_w must be non-negative, got {self.noise_amplitude_w}")
        for level, hold in self.segments:
            if hold <= 0.0:
                raise ValueError(f"segment hold must be positive, got {hold}")
            if level - self.noise_amplitude_w < 0.0:
                raise ValueError(
                    f"segment level {level} W minus noise goes below 0 W")
            if level + self.noise_amplitude_w > CYCLE_POWER_MAX_W:
                raise ValueError(
                    f"segment level {level} W plus noise exceeds the "
                    f"{CYCLE_POWER_MAX_W:.0f} W envelope")
        if self.duration_s is not None and self.duration_s <= 0.0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")


def synth_cycle(spec: SynthSpec) -> DriveCycle:
    """Generate the cycle a :class:`SynthSpec` describes, deterministically.

    The same spec (including seed) always yields the same samples.
    """
    levels: list[float] = []
    for level, hold in spec.segments:
        levels.extend([level] * int(round(hold / spec.dt_s)))
    if not levels:
        raise CycleError("segments were too short to produce a sample")
    n_total = len(levels)
    if spec.duration_s is not None:
        n_total = int(round(spec.duration_s / spec.dt_s))
        if n_total <= 0:
            raise CycleError("duration shorter than one time step")
        reps = -(-n_total // len(levels))
        levels = (levels * reps)[:n_total]
    demand = np.array(levels, dtype=np.float64)
    if spec.noise_amplitude_w > 0.0:
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
        noise = rng.uniform(-spec.noise_amplitude_w, spec.noise_amplitude_w, size=n_total)
        demand = demand + noise
    return check_cycle(DriveCycle(dt_s=spec.dt_s, demand_w=demand, label=spec.label))


# Duty patterns for the built-in synthetic towing cycles.  Each models a
# repeated tow job: idle, approach run, hook-up pause, loaded tow pulses,
# unloaded return, then a quiet tail that lets charge sustain settle.
# High-load bursts are kept short so the pack never runs away from its
# sustain band even with the generator at full power.
_JOB_LIGHT: tuple[tuple[float, float], ...] = (
    (8_000.0, 40.0), (45_000.0, 70.0), (15_000.0, 30.0),
    (120_000.0, 60.0), (70_000.0, 60.0), (40_000.0, 90.0), (8_000.0, 30.0),
)
_JOB_MEDIUM: tuple[tuple[float, float], ...] = (
    (10_000.0, 40.0), (55_000.0, 70.0), (15_000.0, 30.0),
    (150_000.0, 50.0), (200_000.0, 25.0), (110_000.0, 70.0),
    (60_000.0, 110.0), (10_000.0, 40.0),
)
_JOB_HEAVY: tuple[tuple[float, float], ...] = (
    (12_000.0, 30.0), (65_000.0, 60.0), (18_000.0, 25.0),
    (180_000.0, 40.0), (235_000.0, 12.0), (150_000.0, 60.0),
    (90_000.0, 90.0), (45_000.0, 80.0), (12_000.0, 35.0),
)
_TAIL: tuple[tuple[float, float], ...] = ((8_000.0, 90.0),)

_BUILTIN_SPECS: dict[str, SynthSpec] = {
    "PRDC-1-synthetic": SynthSpec(
        segments=_JOB_MEDIUM * 2 + _TAIL,
        noise_amplitude_w=2_000.0, seed=101, label="PRDC-1-synthetic"),
    "PRDC-2-synthetic": SynthSpec(
        segments=_JOB_MEDIUM * 3 + _JOB_HEAVY + _TAIL,
        noise_amplitude_w=2_500.0, seed=102, label="PRDC-2-synthetic"),
    "PRDC-3-synthetic": SynthSpec(
        segments=_JOB_LIGHT * 4 + _TAIL,
        noise_amplitude_w=1_500.0, seed=103, label="PRDC-3-synthetic"),
    "PRDC-4-synthetic": SynthSpec(
        segments=_JOB_HEAVY * 2 + _JOB_MEDIUM * 2 + _TAIL,
        noise_amplitude_w=2_500.0, seed=104, label="PRDC-4-synthetic"),
}

BUILTIN_CYCLE_NAMES: tuple[str, ...] = tuple(_BUILTIN_SPECS)


def builtin_cycle(name: str, dt_s: float = 1.0) -> DriveCycle:
    """Return one of the built-in synthetic towing cycles by name.

    Names are ``PRDC-1-synthetic`` .. ``PRDC-4-synthetic``; cycle 1 is the
    learning cycle, 2-4 are held out for robustness evaluation.
    """
    try:
        spec = _BUILTIN_SPECS[name]
    except KeyError:
        known = ", ".join(BUILTIN_CYCLE_NAMES)
        raise CycleError(f"unknown built-in cycle {name!r} (known: {known})") from None
    if dt_s != spec.dt_s:
        spec = SynthSpec(segments=spec.segments, dt_s=dt_s,
                         duration_s=spec.duration_s,
                         noise_amplitude_w=spec.noise_amplitude_w,
                         seed=spec.seed, label=spec.label)
    return synth_cycle(spec)
