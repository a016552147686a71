"""Fault scenarios: input profiles, equilibrium initialization, truth
simulation, measurement synthesis, and paired filter runs.

A scenario lives on the uniform grid t_j = j * dt.  The truth trajectory
starts from the pre-fault equilibrium and integrates through a terminal
voltage dip; measurements are synthesized from the truth, corrupted with
the configured noise, and optionally hit with outliers before both filter
variants consume them.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DecompositionFailure, InvalidWindow, NoConvergence, NonFiniteState
from .filters import CKF, RCKF, FilterState, HuberConfig, run_filter
from .machine import (
    POWER_EQUALS_TORQUE,
    MachineInputs,
    MachineParams,
    MachineState,
    MeasurementSigmas,
    _check_torque_mode,
    as_process_model,
    measure,
    measurement_covariance,
    state_derivative,
)
from .noise import (
    GAUSSIAN_WHITE,
    NoiseSpec,
    OutlierSpec,
    SeededStream,
    corrupt,
    inject_outliers,
)

HOLD = "hold"
LINEAR = "linear"


@dataclass(frozen=True)
class Schedule:
    """Piecewise scalar signal over time.

    times must start at 0 and increase strictly; mode "hold" keeps each
    value until the next breakpoint, "linear" interpolates between them.
    Beyond the last breakpoint the final value holds.
    """

    times: tuple[float, ...]
    values: tuple[float, ...]
    mode: str = HOLD

    def __post_init__(self):
        if self.mode not in (HOLD, LINEAR):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("times and values must be equal-length and nonempty")
        if self.times[0] != 0.0:
            raise ValueError("schedules must start at t = 0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("schedule times must increase strictly")
        if not all(map(math.isfinite, self.times + self.values)):
            raise ValueError("schedule breakpoints must be finite")

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls(times=(0.0,), values=(value,), mode=HOLD)

    def at(self, t: float) -> float:
        if t <= 0.0:
            return self.values[0]
        if self.mode == HOLD:
            i = bisect.bisect_right(self.times, t) - 1
            return self.values[i]
        return float(np.interp(t, self.times, self.values))

    def as_array(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if self.mode == HOLD:
            idx = np.searchsorted(self.times, times, side="right") - 1
            idx = np.clip(idx, 0, len(self.values) - 1)
            return np.asarray(self.values, dtype=float)[idx]
        return np.interp(times, self.times, self.values)


@dataclass(frozen=True)
class InputProfile:
    """The four machine inputs as schedules sharing one clock."""

    t_m: Schedule
    e_f: Schedule
    u_t: Schedule
    phi: Schedule

    @classmethod
    def constant(cls, inputs: MachineInputs) -> "InputProfile":
        return cls(
            t_m=Schedule.constant(inputs.t_m),
            e_f=Schedule.constant(inputs.e_f),
            u_t=Schedule.constant(inputs.u_t),
            phi=Schedule.constant(inputs.phi),
        )

    def at(self, t: float) -> MachineInputs:
        return MachineInputs(
            t_m=self.t_m.at(t), e_f=self.e_f.at(t), u_t=self.u_t.at(t), phi=self.phi.at(t)
        )

    def as_array(self, times: np.ndarray) -> np.ndarray:
        return np.column_stack(
            (
                self.t_m.as_array(times),
                self.e_f.as_array(times),
                self.u_t.as_array(times),
                self.phi.as_array(times),
            )
        )


@dataclass(frozen=True)
class FaultSpec:
    """Terminal voltage dip: drop to u_t_dip at t_on, recover to u_t_post
    after the given duration.

    A staged clearing is expressed with duration_partial and u_t_partial:
    the voltage sits at u_t_dip until t_on + duration_partial, at
    u_t_partial until t_on + duration, then at u_t_post.
    """

    t_on: float
    duration: float
    u_t_dip: float
    u_t_post: float
    duration_partial: float | None = None
    u_t_partial: float | None = None

    def __post_init__(self):
        if self.t_on < 0.0:
            raise InvalidWindow(f"fault onset must be nonnegative, got {self.t_on}")
        if self.duration <= 0.0:
            raise InvalidWindow(f"fault duration must be positive, got {self.duration}")
        if self.u_t_dip < 0.0 or self.u_t_post < 0.0:
            raise InvalidWindow("fault voltages must be nonnegative")
        if (self.duration_partial is None) != (self.u_t_partial is None):
            raise InvalidWindow(
                "duration_partial and u_t_partial must be given together"
            )
        if self.duration_partial is not None:
            if not 0.0 < self.duration_partial < self.duration:
                raise InvalidWindow(
                    f"duration_partial must fall inside (0, {self.duration}), "
                    f"got {self.duration_partial}"
                )
            if self.u_t_partial < 0.0:
                raise InvalidWindow("fault voltages must be nonnegative")


def build_fault_profile(
    base: MachineInputs, fault: FaultSpec | None, t_end: float
) -> InputProfile:
    """Constant inputs with the terminal voltage dip spliced in.

    Raises:
        InvalidWindow: the fault does not fit inside [0, t_end].
    """
    profile = InputProfile.constant(base)
    if fault is None:
        return profile
    t_off = fault.t_on + fault.duration
    if fault.t_on <= 0.0 or t_off >= t_end:
        raise InvalidWindow(
            f"fault window [{fault.t_on}, {t_off}] must sit strictly inside (0, {t_end})"
        )
    times = [0.0, fault.t_on]
    values = [base.u_t, fault.u_t_dip]
    if fault.duration_partial is not None:
        times.append(fault.t_on + fault.duration_partial)
        values.append(fault.u_t_partial)
    times.append(t_off)
    values.append(fault.u_t_post)
    u_t = Schedule(times=tuple(times), values=tuple(values), mode=HOLD)
    return replace(profile, u_t=u_t)


def steady_state_init(
    inputs: MachineInputs,
    params: MachineParams,
    torque_mode: str = POWER_EQUALS_TORQUE,
    tol: float = 1e-10,
) -> MachineState:
    """Equilibrium state for constant inputs, at synchronous speed.

    With delta_omega = 0 and both EMF rates zero, the EMFs are explicit in
    the angle difference theta = delta - phi, which reduces the problem to
    the scalar power balance p(theta) = t_m on the ascending branch
    through theta = 0.  The bracket is found by walking the branch, the
    root is polished by Brent's method, and the full derivative vector is
    checked against tol.

    Raises:
        NoConvergence: t_m exceeds the pull-out power of the branch, or
            the residual check fails.
    """
    _check_torque_mode(torque_mode)
    xd, xdp = params.x_d, params.x_d_prime
    xq, xqp = params.x_q, params.x_q_prime
    ut, ef, tm, phi = inputs.u_t, inputs.e_f, inputs.t_m, inputs.phi

    def emfs(theta: float) -> tuple[float, float]:
        # zero EMF rates solved for e_q_prime, e_d_prime at fixed theta
        eq = (xdp * ef + (xd - xdp) * ut * math.cos(theta)) / xd
        ed = (xq - xqp) * ut * math.sin(theta) / xq
        return eq, ed

    def power(theta: float) -> float:
        eq, ed = emfs(theta)
        return (
            0.5 * ut * ut * math.sin(2.0 * theta) * (1.0 / xqp - 1.0 / xdp)
            + ut * math.sin(theta) * eq / xdp
            - ut * math.cos(theta) * ed / xqp
        )

    def state_at(theta: float) -> MachineState:
        eq, ed = emfs(theta)
        return MachineState(delta=theta + phi, delta_omega=0.0, e_q_prime=eq, e_d_prime=ed)

    def check(state: MachineState) -> MachineState:
        residual = float(
            np.abs(state_derivative(state, inputs, params, torque_mode)).max()
        )
        if residual > tol:
            raise NoConvergence(
                f"equilibrium residual {residual:.3e} exceeds tolerance {tol:.1e}"
            )
        return state

    if tm == 0.0:
        return check(state_at(0.0))

    # walk the ascending branch away from zero until the power balance
    # brackets the target or the branch turns over
    h = 0.01 if tm > 0.0 else -0.01
    theta_prev, p_prev = 0.0, 0.0
    for _ in range(400):
        theta = theta_prev + h
        p = power(theta)
        if (p - tm) * (p_prev - tm) <= 0.0:
            lo, hi = sorted((theta_prev, theta))
            root = brentq(lambda th: power(th) - tm, lo, hi, xtol=1e-15, rtol=8.9e-16)
            return check(state_at(root))
        if (p - p_prev) * h <= 0.0:
            break
        theta_prev, p_prev = theta, p
    raise NoConvergence(
        f"mechanical torque {tm} exceeds the pull-out power "
        f"{p_prev:.6f} of the stable branch"
    )


@dataclass(frozen=True)
class InitSpec:
    """Filter initialization: prior covariance diagonal, process noise
    diagonal, and the relative bias applied to the equilibrium EMFs when
    forming the initial estimate."""

    p0_diag: tuple[float, float, float, float] = (1e-2, 1e-4, 1e-2, 1e-2)
    q_diag: tuple[float, float, float, float] = (1e-6, 1e-6, 1e-6, 1e-6)
    eprime_bias: float = 0.1

    def __post_init__(self):
        if any(v <= 0.0 for v in self.p0_diag) or any(v <= 0.0 for v in self.q_diag):
            raise ValueError("p0_diag and q_diag entries must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one reproducible run needs."""

    machine: MachineParams
    profile: InputProfile
    dt: float
    t_end: float
    seed: int
    noise: tuple[NoiseSpec, NoiseSpec, NoiseSpec | None]
    outliers: OutlierSpec = field(default_factory=OutlierSpec.none)
    sigmas: MeasurementSigmas = field(default_factory=MeasurementSigmas)
    init: InitSpec = field(default_factory=InitSpec)
    huber: HuberConfig = field(default_factory=HuberConfig)
    torque_mode: str = POWER_EQUALS_TORQUE

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end < self.dt:
            raise ValueError("t_end must cover at least one step")
        _check_torque_mode(self.torque_mode)


def time_grid(cfg: ScenarioConfig) -> np.ndarray:
    """Grid 0, dt, ..., n*dt covering t_end; timestamps are exact
    multiples of dt."""
    steps = int(round(cfg.t_end / cfg.dt))
    return np.arange(steps + 1) * cfg.dt


def simulate_truth(cfg: ScenarioConfig) -> np.ndarray:
    """Integrate the noise-free trajectory from the pre-fault equilibrium.

    Returns a (steps + 1, 4) array, one state row per grid point, with
    inputs held constant over each step.

    Raises:
        NoConvergence: no pre-fault equilibrium exists.
        NonFiniteState: the integration blew up; the message carries the
            failing step.
    """
    times = time_grid(cfg)
    model = as_process_model(cfg.machine, cfg.dt, cfg.torque_mode)
    u_arr = cfg.profile.as_array(times)
    x0 = steady_state_init(cfg.profile.at(0.0), cfg.machine, cfg.torque_mode)
    out = np.empty((len(times), 4))
    out[0] = x0.as_array()
    x = out[0]
    for k in range(len(times) - 1):
        try:
            x = model.transition(x, u_arr[k])
        except NonFiniteState as exc:
            raise NonFiniteState(f"truth integration failed at step {k + 1}: {exc}") from exc
        if not (
            math.isfinite(x[0]) and math.isfinite(x[1])
            and math.isfinite(x[2]) and math.isfinite(x[3])
        ):
            raise NonFiniteState(f"truth integration failed at step {k + 1}")
        out[k + 1] = x
    return out


def synthesize_measurements(
    truth: np.ndarray, cfg: ScenarioConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Clean and corrupted measurement series for a truth trajectory.

    The clean series applies the measurement map row by row.  Channel
    noise follows cfg.noise; a None spec on the power channel means
    Gaussian noise whose per-step std comes from the measurement
    covariance evaluated on the truth.  Outliers are injected last.

    Returns:
        (clean, corrupted), both (steps + 1, 3).
    """
    times = time_grid(cfg)
    u_arr = cfg.profile.as_array(times)
    rows = truth.shape[0]
    clean = np.empty((rows, 3))
    pe_sigma = np.empty(rows)
    for k in range(rows):
        state = MachineState.from_array(truth[k])
        inputs = MachineInputs.from_array(u_arr[k])
        m = measure(state, inputs, cfg.machine)
        clean[k, 0] = m.delta_z
        clean[k, 1] = m.omega_z
        clean[k, 2] = m.p_e_z
        R = measurement_covariance(state, inputs, cfg.machine, cfg.sigmas)
        pe_sigma[k] = math.sqrt(R[2, 2])

    specs = list(cfg.noise)
    per_step = None
    if specs[2] is None:
        specs[2] = NoiseSpec(kind=GAUSSIAN_WHITE, sigma=0.0)
        per_step = {2: pe_sigma}
    streams = [SeededStream(cfg.seed, (0, ch)) for ch in range(3)]
    corrupted = corrupt(clean, specs, streams, per_step)
    corrupted = inject_outliers(corrupted, cfg.outliers, cfg.dt)
    return clean, corrupted


def initial_filter_state(
    cfg: ScenarioConfig, corrupted: np.ndarray
) -> FilterState:
    """Prior built from the first corrupted measurement row.

    Angle and speed come straight from the measurements; the EMFs take the
    pre-fault equilibrium values inflated by the configured relative bias,
    so the estimator never peeks at the truth.
    """
    eq0 = steady_state_init(cfg.profile.at(0.0), cfg.machine, cfg.torque_mode)
    bias = 1.0 + cfg.init.eprime_bias
    x0 = np.array(
        (
            corrupted[0, 0],
            corrupted[0, 1] - 1.0,
            eq0.e_q_prime * bias,
            eq0.e_d_prime * bias,
        )
    )
    return FilterState(x_hat=x0, P=np.diag(cfg.init.p0_diag), step_index=0)


@dataclass(frozen=True)
class RunRecord:
    """Everything produced by one scenario run.

    estimates maps variant name to a (steps + 1, 4) array whose first row
    is the filter prior; step_times_ns maps variant name to per-step wall
    times; failures maps variant name to the error message when a variant
    diverged (such variants are absent from estimates).
    """

    times: np.ndarray
    truth: np.ndarray
    clean: np.ndarray
    corrupted: np.ndarray
    estimates: dict[str, np.ndarray]
    step_times_ns: dict[str, np.ndarray]
    failures: dict[str, str]


def filter_series(
    cfg: ScenarioConfig,
    corrupted: np.ndarray,
    variants: Sequence[str] = (CKF, RCKF),
    strict: bool = False,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray], dict[str, str]]:
    """Run filter variants over a corrupted measurement series.

    The measurement covariance fed to the filters is re-evaluated each
    step at the predicted state, never at the truth.  A variant that
    diverges is recorded in the returned failures map, or re-raised when
    strict is set.

    Returns:
        (estimates, step_times_ns, failures), each keyed by variant name.
    """
    times = time_grid(cfg)
    if corrupted.shape[0] != len(times):
        raise ValueError(
            f"measurement series has {corrupted.shape[0]} rows, grid has {len(times)}"
        )
    model = as_process_model(cfg.machine, cfg.dt, cfg.torque_mode)
    u_arr = cfg.profile.as_array(times)
    transition_inputs = list(u_arr[:-1])
    observe_inputs = list(u_arr[1:])
    measurements = list(corrupted[1:])
    Q = np.diag(cfg.init.q_diag)
    init = initial_filter_state(cfg, corrupted)
    params = cfg.machine
    sigmas = cfg.sigmas

    def r_provider(step: int, predicted: FilterState, u_obs: np.ndarray) -> np.ndarray:
        state = MachineState.from_array(predicted.x_hat)
        return measurement_covariance(
            state, MachineInputs.from_array(u_obs), params, sigmas
        )

    estimates: dict[str, np.ndarray] = {}
    step_times: dict[str, np.ndarray] = {}
    failures: dict[str, str] = {}
    for variant in variants:
        collected: list[int] = []
        try:
            states = run_filter(
                model,
                variant,
                init,
                transition_inputs,
                measurements,
                Q,
                r_provider,
                huber=cfg.huber,
                observe_inputs=observe_inputs,
                step_times_ns=collected,
            )
        except (DecompositionFailure, NonFiniteState) as exc:
            if strict:
                raise
            failures[variant] = str(exc)
            continue
        estimates[variant] = np.vstack([s.x_hat for s in states])
        step_times[variant] = np.asarray(collected)
    return estimates, step_times, failures


def run_scenario(
    cfg: ScenarioConfig, variants: Sequence[str] = (CKF, RCKF), strict: bool = False
) -> RunRecord:
    """Simulate, synthesize, and run the requested filter variants.

    Both variants consume the identical corrupted series.  A variant that
    diverges is reported in RunRecord.failures instead of aborting the
    run, unless strict is set.
    """
    times = time_grid(cfg)
    truth = simulate_truth(cfg)
    clean, corrupted = synthesize_measurements(truth, cfg)
    estimates, step_times, failures = filter_series(cfg, corrupted, variants, strict)
    return RunRecord(
        times=times,
        truth=truth,
        clean=clean,
        corrupted=corrupted,
        estimates=estimates,
        step_times_ns=step_times,
        failures=failures,
    )
