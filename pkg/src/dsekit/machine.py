"""Fourth-order two-axis synchronous generator model.

State vector: rotor angle delta (rad), speed deviation delta_omega (p.u.),
and the transient EMFs e_q_prime, e_d_prime (p.u.).  Inputs: mechanical
torque t_m, field voltage e_f, terminal voltage magnitude u_t, and terminal
voltage phase phi.  All reactances and time constants are per unit and
seconds on the machine base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteState
from .filters import ProcessModel

POWER_EQUALS_TORQUE = "power_equals_torque"
DIVIDE_BY_SPEED = "divide_by_speed"
TORQUE_MODES = (POWER_EQUALS_TORQUE, DIVIDE_BY_SPEED)


def _check_torque_mode(torque_mode: str) -> None:
    if torque_mode not in TORQUE_MODES:
        raise ValueError(f"unknown torque mode {torque_mode!r}")


@dataclass(frozen=True)
class MachineParams:
    """Generator constants: reactances (p.u.), open-circuit time constants
    and inertia (s), damping (p.u. torque per p.u. speed), and synchronous
    electrical speed (rad/s)."""

    x_d: float
    x_d_prime: float
    x_q: float
    x_q_prime: float
    t_d0_prime: float
    t_q0_prime: float
    t_j: float
    damping: float
    omega_0: float = 120.0 * math.pi

    def __post_init__(self):
        if not (self.x_d > self.x_d_prime > 0.0):
            raise ValueError("require x_d > x_d_prime > 0")
        if not (self.x_q > self.x_q_prime > 0.0):
            raise ValueError("require x_q > x_q_prime > 0")
        for name in ("t_d0_prime", "t_q0_prime", "t_j", "omega_0"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"require {name} > 0")
        if self.damping < 0.0:
            raise ValueError("require damping >= 0")


# Example profile used by the shipped configurations and the test suite.
DEFAULT_PARAMS = MachineParams(
    x_d=1.8,
    x_d_prime=0.3,
    x_q=1.7,
    x_q_prime=0.55,
    t_d0_prime=8.0,
    t_q0_prime=0.4,
    t_j=13.0,
    damping=2.0,
)


@dataclass(frozen=True)
class MachineState:
    delta: float
    delta_omega: float
    e_q_prime: float
    e_d_prime: float

    def as_array(self) -> np.ndarray:
        return np.array((self.delta, self.delta_omega, self.e_q_prime, self.e_d_prime))

    @classmethod
    def from_array(cls, x) -> "MachineState":
        d, w, eq, ed = np.asarray(x, dtype=float).tolist()
        return cls(d, w, eq, ed)


@dataclass(frozen=True)
class MachineInputs:
    t_m: float
    e_f: float
    u_t: float
    phi: float

    def __post_init__(self):
        if not self.u_t >= 0.0:
            raise ValueError(f"terminal voltage magnitude must be >= 0, got {self.u_t}")

    def as_array(self) -> np.ndarray:
        return np.array((self.t_m, self.e_f, self.u_t, self.phi))

    @classmethod
    def from_array(cls, u) -> "MachineInputs":
        t_m, e_f, u_t, phi = np.asarray(u, dtype=float).tolist()
        return cls(t_m, e_f, u_t, phi)


@dataclass(frozen=True)
class StatorCurrents:
    i_d: float
    i_q: float


@dataclass(frozen=True)
class Measurement:
    """One measurement triple: rotor angle, rotor speed (1 + delta_omega),
    and electrical power."""

    delta_z: float
    omega_z: float
    p_e_z: float

    def as_array(self) -> np.ndarray:
        return np.array((self.delta_z, self.omega_z, self.p_e_z))


@dataclass(frozen=True)
class MeasurementSigmas:
    """Measurement noise magnitudes: angle stds in radians, speed std in
    p.u., and the terminal voltage std relative to its magnitude."""

    sigma_delta: float = math.radians(2.0)
    sigma_omega: float = 0.001
    sigma_u: float = 0.001
    sigma_phi: float = math.radians(0.1)

    def __post_init__(self):
        if self.sigma_delta <= 0.0 or self.sigma_omega <= 0.0:
            raise ValueError("sigma_delta and sigma_omega must be positive")
        if self.sigma_u < 0.0 or self.sigma_phi < 0.0:
            raise ValueError("sigma_u and sigma_phi must be nonnegative")


def _params_tuple(p: MachineParams) -> tuple:
    return (
        p.x_d,
        p.x_d_prime,
        p.x_q,
        p.x_q_prime,
        p.t_d0_prime,
        p.t_q0_prime,
        p.t_j,
        p.damping,
        p.omega_0,
    )


def _currents(d, eq, ed, ut, phi, xdp, xqp):
    th = d - phi
    i_d = (eq - ut * math.cos(th)) / xdp
    i_q = (ut * math.sin(th) - ed) / xqp
    return i_d, i_q


def _power(d, eq, ed, ut, phi, xdp, xqp):
    th = d - phi
    s = math.sin(th)
    c = math.cos(th)
    return (
        0.5 * ut * ut * math.sin(2.0 * th) * (1.0 / xqp - 1.0 / xdp)
        + ut * s * eq / xdp
        - ut * c * ed / xqp
    )


def _derivative(d, w, eq, ed, tm, ef, ut, phi, pt, divide_by_speed):
    xd, xdp, xq, xqp, td0, tq0, tj, damp, w0 = pt
    th = d - phi
    cos_th = math.cos(th)
    sin_th = math.sin(th)
    i_d = (eq - ut * cos_th) / xdp
    i_q = (ut * sin_th - ed) / xqp
    p_e = (
        0.5 * ut * ut * math.sin(2.0 * th) * (1.0 / xqp - 1.0 / xdp)
        + ut * sin_th * eq / xdp
        - ut * cos_th * ed / xqp
    )
    t_e = p_e / (1.0 + w) if divide_by_speed else p_e
    return (
        w0 * w,
        (tm - t_e - damp * w) / tj,
        (ef - eq - (xd - xdp) * i_d) / td0,
        (-ed + (xq - xqp) * i_q) / tq0,
    )


def _rk4(d, w, eq, ed, tm, ef, ut, phi, pt, divide, dt):
    k1 = _derivative(d, w, eq, ed, tm, ef, ut, phi, pt, divide)
    h = 0.5 * dt
    k2 = _derivative(
        d + h * k1[0], w + h * k1[1], eq + h * k1[2], ed + h * k1[3],
        tm, ef, ut, phi, pt, divide,
    )
    k3 = _derivative(
        d + h * k2[0], w + h * k2[1], eq + h * k2[2], ed + h * k2[3],
        tm, ef, ut, phi, pt, divide,
    )
    k4 = _derivative(
        d + dt * k3[0], w + dt * k3[1], eq + dt * k3[2], ed + dt * k3[3],
        tm, ef, ut, phi, pt, divide,
    )
    sixth = dt / 6.0
    return (
        d + sixth * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0]),
        w + sixth * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1]),
        eq + sixth * (k1[2] + 2.0 * (k2[2] + k3[2]) + k4[2]),
        ed + sixth * (k1[3] + 2.0 * (k2[3] + k3[3]) + k4[3]),
    )


def stator_currents(state: MachineState, inputs: MachineInputs, params: MachineParams) -> StatorCurrents:
    """d/q axis stator currents from the transient EMFs and the terminal bus."""
    i_d, i_q = _currents(
        state.delta, state.e_q_prime, state.e_d_prime,
        inputs.u_t, inputs.phi, params.x_d_prime, params.x_q_prime,
    )
    return StatorCurrents(i_d=i_d, i_q=i_q)


def electrical_power(state: MachineState, inputs: MachineInputs, params: MachineParams) -> float:
    """Air-gap electrical power in p.u.

    Evaluates the closed-form three-term expression in the angle
    difference delta - phi; it equals u_d * i_d + u_q * i_q with
    u_d = u_t sin(delta - phi) and u_q = u_t cos(delta - phi).
    """
    return _power(
        state.delta, state.e_q_prime, state.e_d_prime,
        inputs.u_t, inputs.phi, params.x_d_prime, params.x_q_prime,
    )


def state_derivative(
    state: MachineState,
    inputs: MachineInputs,
    params: MachineParams,
    torque_mode: str = POWER_EQUALS_TORQUE,
) -> np.ndarray:
    """Right-hand side of the swing and EMF equations as a length-4 vector.

    torque_mode selects how electrical torque is obtained from electrical
    power: taken equal to it, or divided by the rotor speed 1 + delta_omega.
    """
    _check_torque_mode(torque_mode)
    out = _derivative(
        state.delta, state.delta_omega, state.e_q_prime, state.e_d_prime,
        inputs.t_m, inputs.e_f, inputs.u_t, inputs.phi,
        _params_tuple(params), torque_mode == DIVIDE_BY_SPEED,
    )
    return np.array(out)


def rk4_step(
    state: MachineState,
    inputs: MachineInputs,
    params: MachineParams,
    dt: float,
    torque_mode: str = POWER_EQUALS_TORQUE,
) -> MachineState:
    """One classical fourth-order Runge-Kutta step with inputs held constant."""
    _check_torque_mode(torque_mode)
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    d, w, eq, ed = _rk4(
        state.delta, state.delta_omega, state.e_q_prime, state.e_d_prime,
        inputs.t_m, inputs.e_f, inputs.u_t, inputs.phi,
        _params_tuple(params), torque_mode == DIVIDE_BY_SPEED, dt,
    )
    if not (math.isfinite(d) and math.isfinite(w) and math.isfinite(eq) and math.isfinite(ed)):
        raise NonFiniteState("integration step produced a non-finite state")
    return MachineState(d, w, eq, ed)


def measure(state: MachineState, inputs: MachineInputs, params: MachineParams) -> Measurement:
    """Noise-free measurement triple for one state.

    The speed channel reports 1 + delta_omega; the power channel reuses
    electrical_power so both always agree bit for bit.
    """
    return Measurement(
        delta_z=state.delta,
        omega_z=1.0 + state.delta_omega,
        p_e_z=electrical_power(state, inputs, params),
    )


def power_partials(
    state: MachineState, inputs: MachineInputs, params: MachineParams
) -> tuple[float, float]:
    """Analytic partial derivatives of electrical power with respect to the
    terminal voltage magnitude and phase, in that order."""
    th = state.delta - inputs.phi
    ut = inputs.u_t
    xdp = params.x_d_prime
    xqp = params.x_q_prime
    k = 1.0 / xqp - 1.0 / xdp
    s = math.sin(th)
    c = math.cos(th)
    s2 = math.sin(2.0 * th)
    c2 = math.cos(2.0 * th)
    d_ut = ut * s2 * k + s * state.e_q_prime / xdp - c * state.e_d_prime / xqp
    d_phi = (
        -ut * ut * c2 * k
        - ut * c * state.e_q_prime / xdp
        - ut * s * state.e_d_prime / xqp
    )
    return d_ut, d_phi


def measurement_covariance(
    state: MachineState,
    inputs: MachineInputs,
    params: MachineParams,
    sigmas: MeasurementSigmas,
) -> np.ndarray:
    """Diagonal 3x3 measurement covariance.

    Angle and speed channels carry their stds squared.  The power channel
    variance is propagated to first order from the terminal voltage
    magnitude and phase uncertainties; sigma_u scales with u_t.
    """
    d_ut, d_phi = power_partials(state, inputs, params)
    var_pe = (d_ut * sigmas.sigma_u * inputs.u_t) ** 2 + (d_phi * sigmas.sigma_phi) ** 2
    return np.diag(
        (sigmas.sigma_delta**2, sigmas.sigma_omega**2, var_pe)
    )


def as_process_model(
    params: MachineParams, dt: float, torque_mode: str = POWER_EQUALS_TORQUE
) -> ProcessModel:
    """Wrap the generator as a discrete-time model for the filters.

    transition advances one RK4 step of length dt with the input vector
    (t_m, e_f, u_t, phi) held over the step; observe produces the triple
    (delta, 1 + delta_omega, electrical power).
    """
    _check_torque_mode(torque_mode)
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    pt = _params_tuple(params)
    xdp = params.x_d_prime
    xqp = params.x_q_prime
    divide = torque_mode == DIVIDE_BY_SPEED

    def transition(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        d, w, eq, ed = x.tolist()
        tm, ef, ut, phi = u.tolist()
        try:
            out = _rk4(d, w, eq, ed, tm, ef, ut, phi, pt, divide, dt)
        except (OverflowError, ValueError) as exc:
            raise NonFiniteState(f"integration step overflowed: {exc}") from exc
        return np.array(out)

    def observe(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        d, w, eq, ed = x.tolist()
        ut = u[2]
        phi = u[3]
        return np.array((d, 1.0 + w, _power(d, eq, ed, ut, phi, xdp, xqp)))

    return ProcessModel(n=4, m=3, transition=transition, observe=observe)
