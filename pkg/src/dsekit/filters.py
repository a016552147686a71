"""Cubature Kalman filtering with a Huber-robustified measurement update.

The classical filter propagates 2n equally weighted cubature points placed
at +/- sqrt(n) along the columns of the covariance square root (the
spherical-radial rule of Arasaratnam and Haykin).  The robust variant
standardizes each innovation channel by its predicted standard deviation,
derives Huber weights, and inflates the measurement covariance channel by
channel before the gain is formed, which bounds the influence a wild
measurement can exert on the posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from time import perf_counter_ns
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_solve

from .errors import (
    DecompositionFailure,
    DegenerateChannel,
    InvalidConfig,
    NonFiniteState,
)

Array = np.ndarray

CKF = "ckf"
RCKF = "rckf"
VARIANTS = (CKF, RCKF)

# Escalating diagonal loading, applied relative to the mean diagonal.
JITTER_LADDER = (1e-12, 1e-9, 1e-6)


@dataclass(frozen=True)
class ProcessModel:
    """Discrete-time nonlinear state-space model.

    transition and observe must be deterministic pure functions mapping a
    length-n state vector plus an input vector to, respectively, the next
    state vector and a length-m measurement vector.
    """

    n: int
    m: int
    transition: Callable[[Array, Array], Array]
    observe: Callable[[Array, Array], Array]


@dataclass
class FilterState:
    """State estimate and error covariance at one step."""

    x_hat: Array
    P: Array
    step_index: int = 0


@dataclass(frozen=True)
class CubatureSet:
    """2n cubature points (rows) sharing one common weight."""

    points: Array
    weight: float


@dataclass(frozen=True)
class NoiseCovariances:
    """Process and measurement noise covariances used by one step."""

    Q: Array
    R: Array

    def validate(self) -> None:
        for name, m in (("Q", self.Q), ("R", self.R)):
            a = np.asarray(m, dtype=float)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise InvalidConfig(f"{name} must be square, got shape {a.shape}")
            if not np.isfinite(a).all():
                raise InvalidConfig(f"{name} contains non-finite entries")
            if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(a).max()))):
                raise InvalidConfig(f"{name} is not symmetric")
        if np.any(np.diag(np.asarray(self.R, dtype=float)) <= 0.0):
            raise InvalidConfig("R must have strictly positive diagonal")


@dataclass(frozen=True)
class UpdateIntermediates:
    """Innovations-side quantities produced by a measurement update."""

    z_hat: Array
    P_zz: Array
    P_xz: Array
    gain: Array
    innovation: Array


@dataclass(frozen=True)
class HuberConfig:
    """Tuning of the robust update: threshold c and reweight pass count."""

    c: float = 1.5
    max_reweight_passes: int = 1


@dataclass(frozen=True)
class HuberResult:
    standardized_residuals: Array
    weights: Array
    R_bar: Array


def cholesky_lower(P: Array) -> Array:
    """Lower-triangular S with S @ S.T equal to the symmetrized input.

    The input is symmetrized first.  If plain factorization fails,
    escalating diagonal jitter (1e-12, 1e-9, 1e-6 times the mean diagonal)
    is tried before giving up.

    Raises:
        DecompositionFailure: input is not a finite square matrix, or it
            stays non-factorizable after the largest jitter.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DecompositionFailure(f"expected a square matrix, got shape {P.shape}")
    if not np.isfinite(P).all():
        raise DecompositionFailure("matrix contains non-finite entries")
    sym = 0.5 * (P + P.T)
    try:
        return np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        pass
    scale = float(np.trace(sym)) / sym.shape[0]
    if scale <= 0.0:
        scale = 1.0
    eye = np.eye(sym.shape[0])
    for jitter in JITTER_LADDER:
        try:
            return np.linalg.cholesky(sym + (jitter * scale) * eye)
        except np.linalg.LinAlgError:
            continue
    raise DecompositionFailure(
        "matrix is not positive definite even after jitter escalation"
    )


def cubature_points(x_hat: Array, S: Array) -> CubatureSet:
    """Spherical-radial point set for mean x_hat and covariance S @ S.T."""
    n = x_hat.shape[0]
    spread = math.sqrt(n) * S.T  # row i is sqrt(n) times column i of S
    points = np.concatenate((x_hat + spread, x_hat - spread))
    return CubatureSet(points=points, weight=1.0 / (2 * n))


def time_predict(state: FilterState, model: ProcessModel, u: Array, Q: Array) -> FilterState:
    """Propagate the posterior through the transition map.

    Returns the predicted state with step_index advanced by one.  The
    predicted covariance is the centered sample covariance of the
    propagated points plus Q, symmetrized.

    Raises:
        NonFiniteState: a propagated point is not finite.
        DecompositionFailure: the posterior covariance cannot be factorized.
    """
    n = model.n
    S = cholesky_lower(state.P)
    pts = cubature_points(state.x_hat, S).points
    propagated = np.empty_like(pts)
    transition = model.transition
    for i in range(2 * n):
        propagated[i] = transition(pts[i], u)
    if not np.isfinite(propagated).all():
        raise NonFiniteState("propagated cubature points are not finite")
    x_pred = propagated.mean(axis=0)
    centered = propagated - x_pred
    P_pred = centered.T @ centered / (2 * n) + Q
    P_pred = 0.5 * (P_pred + P_pred.T)
    return FilterState(x_hat=x_pred, P=P_pred, step_index=state.step_index + 1)


def _measurement_stats(
    predicted: FilterState, model: ProcessModel, u: Array
) -> tuple[Array, Array, Array]:
    """Predicted measurement, centered innovation covariance core (no R),
    and cross covariance, all from a fresh point set on the prior."""
    n = model.n
    S = cholesky_lower(predicted.P)
    pts = cubature_points(predicted.x_hat, S).points
    Z = np.empty((2 * n, model.m))
    observe = model.observe
    for i in range(2 * n):
        Z[i] = observe(pts[i], u)
    if not np.isfinite(Z).all():
        raise NonFiniteState("projected measurement points are not finite")
    z_hat = Z.mean(axis=0)
    Zc = Z - z_hat
    Xc = pts - predicted.x_hat
    core = Zc.T @ Zc / (2 * n)
    P_xz = Xc.T @ Zc / (2 * n)
    return z_hat, core, P_xz


def _corrected(
    predicted: FilterState, z: Array, z_hat: Array, P_zz: Array, P_xz: Array
) -> tuple[FilterState, UpdateIntermediates]:
    L = cholesky_lower(P_zz)
    gain = cho_solve((L, True), P_xz.T).T
    innovation = z - z_hat
    x = predicted.x_hat + gain @ innovation
    P = predicted.P - gain @ P_zz @ gain.T
    P = 0.5 * (P + P.T)
    if not (np.isfinite(x).all() and np.isfinite(P).all()):
        raise NonFiniteState("corrected estimate is not finite")
    state = FilterState(x_hat=x, P=P, step_index=predicted.step_index)
    info = UpdateIntermediates(
        z_hat=z_hat, P_zz=P_zz, P_xz=P_xz, gain=gain, innovation=innovation
    )
    return state, info


def ckf_update(
    predicted: FilterState, z: Array, model: ProcessModel, u: Array, R: Array
) -> tuple[FilterState, UpdateIntermediates]:
    """Classical measurement update on a predicted state.

    The innovation covariance is the centered point statistic plus R; the
    gain solves gain @ P_zz = P_xz through the Cholesky factor of P_zz.
    """
    z = np.asarray(z, dtype=float)
    z_hat, core, P_xz = _measurement_stats(predicted, model, u)
    P_zz = core + R
    return _corrected(predicted, z, z_hat, P_zz, P_xz)


def huber_reweight(
    innovation: Array, P_zz: Array, R: Array, config: HuberConfig
) -> HuberResult:
    """Channel-wise Huber weights from standardized innovations.

    Each residual is divided by the square root of the matching P_zz
    diagonal entry.  Channels inside the threshold keep weight one;
    outside, the weight decays as c / |r| and the matching R diagonal
    entry is divided by that weight.  R is treated as diagonal: the
    returned R_bar carries zero off-diagonals.

    Raises:
        InvalidConfig: threshold c is not strictly positive.
        DegenerateChannel: some P_zz diagonal entry is not positive.
    """
    if not config.c > 0.0:
        raise InvalidConfig(f"Huber threshold must be positive, got {config.c}")
    diag = np.diag(P_zz)
    if np.any(diag <= 0.0):
        bad = int(np.argmin(diag))
        raise DegenerateChannel(
            f"channel {bad} has nonpositive predicted variance {diag[bad]}"
        )
    standardized = innovation / np.sqrt(diag)
    weights = np.ones_like(standardized)
    outside = np.abs(standardized) > config.c
    weights[outside] = config.c / np.abs(standardized[outside])
    R_bar = np.diag(np.diag(R) / weights)
    return HuberResult(standardized_residuals=standardized, weights=weights, R_bar=R_bar)


def rckf_update(
    predicted: FilterState,
    z: Array,
    model: ProcessModel,
    u: Array,
    R: Array,
    config: HuberConfig | None = None,
) -> tuple[FilterState, UpdateIntermediates, HuberResult]:
    """Huber-robustified measurement update.

    Starts from the classical innovation covariance, then runs the
    configured number of reweight passes.  Every pass re-standardizes the
    innovation against the current P_zz, but the inflation always divides
    the original R, so weights never compound.  With all channels inside
    the threshold the result coincides with ckf_update.
    """
    if config is None:
        config = HuberConfig()
    if config.max_reweight_passes < 1:
        raise InvalidConfig(
            f"max_reweight_passes must be at least 1, got {config.max_reweight_passes}"
        )
    z = np.asarray(z, dtype=float)
    z_hat, core, P_xz = _measurement_stats(predicted, model, u)
    P_zz = core + R
    innovation = z - z_hat
    result = None
    for _ in range(config.max_reweight_passes):
        result = huber_reweight(innovation, P_zz, R, config)
        P_zz = core + result.R_bar
    state, info = _corrected(predicted, z, z_hat, P_zz, P_xz)
    return state, info, result


def run_filter(
    model: ProcessModel,
    variant: str,
    init: FilterState,
    inputs: Sequence[Array],
    measurements: Sequence[Array],
    Q: Array,
    R_provider,
    huber: HuberConfig | None = None,
    observe_inputs: Sequence[Array] | None = None,
    step_times_ns: list | None = None,
) -> list[FilterState]:
    """Run one filter variant over a measurement sequence.

    Args:
        model: process model shared by both variants.
        variant: "ckf" or "rckf".
        init: prior at step 0; returned unchanged as the first element.
        inputs: transition input per step, same length as measurements.
        measurements: measurement vector per step.
        Q: process noise covariance, fixed across steps.
        R_provider: fixed measurement covariance matrix, or a callable
            (step, predicted_state, observe_input) -> matrix evaluated
            after each prediction.
        huber: robust update tuning, used by the rckf variant only.
        observe_inputs: optional per-step input vector for the measurement
            map; defaults to the transition input of the same step.
        step_times_ns: optional list collecting the wall time of each
            predict-plus-update step, in nanoseconds.

    Returns:
        List of length len(measurements) + 1: the prior followed by one
        posterior per measurement.

    Raises:
        DecompositionFailure, NonFiniteState: re-raised with the offending
            measurement index prefixed and stored as exc.step_index.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown filter variant {variant!r}")
    if len(inputs) != len(measurements):
        raise ValueError(
            f"inputs and measurements must have equal length, "
            f"got {len(inputs)} and {len(measurements)}"
        )
    if observe_inputs is not None and len(observe_inputs) != len(measurements):
        raise ValueError("observe_inputs length must match measurements")
    if huber is None:
        huber = HuberConfig()
    Q = np.asarray(Q, dtype=float)
    fixed_R = R_provider if isinstance(R_provider, np.ndarray) else None
    robust = variant == RCKF
    states = [init]
    state = init
    for k in range(len(measurements)):
        u = inputs[k]
        u_obs = observe_inputs[k] if observe_inputs is not None else u
        started = perf_counter_ns()
        try:
            predicted = time_predict(state, model, u, Q)
            R = fixed_R if fixed_R is not None else R_provider(k, predicted, u_obs)
            if robust:
                state, _, _ = rckf_update(predicted, measurements[k], model, u_obs, R, huber)
            else:
                state, _ = ckf_update(predicted, measurements[k], model, u_obs, R)
        except (DecompositionFailure, NonFiniteState) as exc:
            wrapped = type(exc)(f"measurement index {k}: {exc}")
            wrapped.step_index = k
            raise wrapped from exc
        if step_times_ns is not None:
            step_times_ns.append(perf_counter_ns() - started)
        states.append(state)
    return states
