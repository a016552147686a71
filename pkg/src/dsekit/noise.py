"""Measurement noise laboratory: seeded streams, heavy-tailed draws,
channel corruption, and outlier injection.

Laplace and Cauchy variates are produced by inverse-transform expressions
from uniform draws; the transforms are exposed as pure functions so a unit
of noise can be checked against hand-picked uniforms.  Streams are
counter-based, keyed by (seed, stream_id), so any (run, channel) pair can
be regenerated in isolation and in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ChannelMismatch, InvalidConfig, InvalidWindow, OutOfRange

GAUSSIAN_WHITE = "gaussian_white"
GAUSSIAN_BIASED = "gaussian_biased"
LAPLACE = "laplace"
CAUCHY = "cauchy"
NOISE_KINDS = (GAUSSIAN_WHITE, GAUSSIAN_BIASED, LAPLACE, CAUCHY)

OUTLIER_NONE = "none"
OUTLIER_SINGLE = "single"
OUTLIER_WINDOW = "window"

CHANNELS = ("delta", "omega", "pe")

# Offset of the Cauchy location parameter, in units of the nominal std.
CAUCHY_LOCATION_SIGMAS = 10.0


@dataclass(frozen=True)
class NoiseSpec:
    """Distribution of the additive noise on one channel.

    sigma is the nominal measurement std of the channel; mu shifts the
    distribution.  For the Laplace kind the scale is sigma / sqrt(2) so
    the variance equals sigma squared; for the Cauchy kind sigma is used
    as the scale directly and the location sits at mu + 10 sigma.
    """

    kind: str
    sigma: float
    mu: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InvalidConfig(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0.0:
            raise InvalidConfig(f"sigma must be nonnegative, got {self.sigma}")
        if self.kind == GAUSSIAN_WHITE and self.mu != 0.0:
            raise InvalidConfig("gaussian_white requires mu == 0")


@dataclass(frozen=True)
class SeededStream:
    """Counter-based random stream keyed by (seed, stream_id).

    Identical keys reproduce identical draw sequences on any platform;
    distinct stream ids are statistically independent.
    """

    seed: int
    stream_id: tuple[int, int] = (0, 0)

    def generator(self) -> np.random.Generator:
        run, channel = self.stream_id
        key = np.array(
            [
                self.seed & 0xFFFFFFFFFFFFFFFF,
                ((run & 0xFFFFFFFF) << 32) | (channel & 0xFFFFFFFF),
            ],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))


def laplace_from_uniform(mu, scale, u1):
    """Inverse-transform Laplace variate from u1 in the open (-1, 1).

    r = mu - scale * sgn(u1) * ln(1 - |u1|); u1 == 0 maps exactly to mu.
    """
    u1 = np.asarray(u1, dtype=float)
    out = mu - scale * np.sign(u1) * np.log1p(-np.abs(u1))
    return float(out) if out.ndim == 0 else out

def cauchy_from_uniform(location, scale, u2):
    """Inverse-transform Cauchy variate from u2 in the open (0, 1)."""
    u2 = np.asarray(u2, dtype=float)
    out = location + scale * np.tan(math.pi * (u2 - 0.5))
    return float(out) if out.ndim == 0 else out


def _uniform_open_pm1(gen: np.random.Generator, size: int) -> np.ndarray:
    # [0, 1) doubled leaves -1 reachable; resample until the interval is open
    u = 2.0 * gen.random(size) - 1.0
    while True:
        edge = np.abs(u) >= 1.0
        if not edge.any():
            return u
        u[edge] = 2.0 * gen.random(int(edge.sum())) - 1.0


def _uniform_open_01(gen: np.random.Generator, size: int) -> np.ndarray:
    u = gen.random(size)
    while True:
        edge = u <= 0.0
        if not edge.any():
            return u
        u[edge] = gen.random(int(edge.sum()))


def draw_gaussian(mu, sigma, gen: np.random.Generator, size: int) -> np.ndarray:
    """size Gaussian draws; sigma may be a scalar or a per-draw array.
    A zero sigma yields exactly mu."""
    sigma = np.asarray(sigma, dtype=float)
    if np.all(sigma == 0.0):
        return np.full(size, float(mu)) if np.ndim(mu) == 0 else mu + np.zeros(size)
    return mu + sigma * gen.standard_normal(size)


def draw_laplace(mu, sigma, gen: np.random.Generator, size: int) -> np.ndarray:
    """size Laplace draws with variance sigma squared around mu."""
    scale = np.asarray(sigma, dtype=float) / math.sqrt(2.0)
    return laplace_from_uniform(mu, scale, _uniform_open_pm1(gen, size))


def draw_cauchy(sigma, gen: np.random.Generator, size: int) -> np.ndarray:
    """size Cauchy draws, scale sigma, located at 10 sigma.  Heavy tails
    are kept as-is: no clamping."""
    sigma = np.asarray(sigma, dtype=float)
    location = CAUCHY_LOCATION_SIGMAS * sigma
    return cauchy_from_uniform(location, sigma, _uniform_open_01(gen, size))


def _draw(spec: NoiseSpec, sigma, gen: np.random.Generator, size: int) -> np.ndarray:
    if spec.kind in (GAUSSIAN_WHITE, GAUSSIAN_BIASED):
        return draw_gaussian(spec.mu, sigma, gen, size)
    if spec.kind == LAPLACE:
        return draw_laplace(spec.mu, sigma, gen, size)
    return spec.mu + draw_cauchy(sigma, gen, size)


def corrupt(
    series: np.ndarray,
    specs: Sequence[NoiseSpec],
    streams: Sequence[SeededStream],
    per_step_sigma: dict[int, np.ndarray] | None = None,
) -> np.ndarray:
    """Additively corrupt every channel of a clean series.

    Args:
        series: (steps, channels) clean values.
        specs: one NoiseSpec per channel.
        streams: one SeededStream per channel; each is opened fresh, so a
            repeated call reproduces the same corruption.
        per_step_sigma: optional channel index -> length-steps array that
            overrides the spec sigma step by step.

    Raises:
        ChannelMismatch: spec or stream count differs from the channel count.
    """
    series = np.asarray(series, dtype=float)
    channels = series.shape[1]
    if len(specs) != channels or len(streams) != channels:
        raise ChannelMismatch(
            f"series has {channels} channels, got {len(specs)} specs "
            f"and {len(streams)} streams"
        )
    out = series.copy()
    steps = series.shape[0]
    for j in range(channels):
        sigma = None if per_step_sigma is None else per_step_sigma.get(j)
        if sigma is None:
            sigma = specs[j].sigma
        elif len(sigma) != steps:
            raise ChannelMismatch(
                f"per-step sigma for channel {j} has length {len(sigma)}, "
                f"expected {steps}"
            )
        out[:, j] += _draw(specs[j], sigma, streams[j].generator(), steps)
    return out


@dataclass(frozen=True)
class OutlierSpec:
    """Multiplicative outlier placement.

    manner is one of "none", "single", "window"; channel is an index or
    one of the channel names; scale multiplies the affected samples.
    """

    manner: str = OUTLIER_NONE
    time: float | None = None
    t_start: float | None = None
    t_end: float | None = None
    channel: int | str = "omega"
    scale: float = 1.1

    def __post_init__(self):
        if self.manner not in (OUTLIER_NONE, OUTLIER_SINGLE, OUTLIER_WINDOW):
            raise InvalidConfig(f"unknown outlier manner {self.manner!r}")
        if self.scale <= 0.0:
            raise InvalidConfig(f"outlier scale must be positive, got {self.scale}")
        if self.manner == OUTLIER_SINGLE and self.time is None:
            raise InvalidConfig("single outlier needs a time")
        if self.manner == OUTLIER_WINDOW:
            if self.t_start is None or self.t_end is None:
                raise InvalidConfig("window outlier needs t_start and t_end")
            if not self.t_start < self.t_end:
                raise InvalidWindow(
                    f"window [{self.t_start}, {self.t_end}] is empty or inverted"
                )

    def channel_index(self) -> int:
        if isinstance(self.channel, str):
            if self.channel not in CHANNELS:
                raise InvalidConfig(f"unknown channel name {self.channel!r}")
            return CHANNELS.index(self.channel)
        if not 0 <= self.channel < len(CHANNELS):
            raise InvalidConfig(f"channel index out of range: {self.channel}")
        return self.channel

    @classmethod
    def none(cls) -> "OutlierSpec":
        return cls(manner=OUTLIER_NONE)

    @classmethod
    def single_at(cls, time: float, channel="omega", scale: float = 1.1) -> "OutlierSpec":
        return cls(manner=OUTLIER_SINGLE, time=time, channel=channel, scale=scale)

    @classmethod
    def window(cls, t_start: float, t_end: float, channel="omega", scale: float = 1.1) -> "OutlierSpec":
        return cls(manner=OUTLIER_WINDOW, t_start=t_start, t_end=t_end, channel=channel, scale=scale)


def _grid_index(t: float, dt: float, steps: int, what: str) -> int:
    idx = int(round(t / dt))
    if idx < 0 or idx >= steps or abs(t - idx * dt) > 0.5 * dt + 1e-9:
        raise OutOfRange(
            f"{what} {t} is outside the simulated horizon of {steps} steps at dt={dt}"
        )
    return idx


def inject_outliers(series: np.ndarray, spec: OutlierSpec, dt: float) -> np.ndarray:
    """Scale the selected channel over the selected steps; everything else
    is returned bit for bit.

    Single placement hits the one step nearest the requested time; a
    window covers both endpoints inclusively.

    Raises:
        OutOfRange: a requested time falls off the simulated horizon.
    """
    series = np.asarray(series, dtype=float)
    out = series.copy()
    if spec.manner == OUTLIER_NONE:
        return out
    steps = series.shape[0]
    ch = spec.channel_index()
    if spec.manner == OUTLIER_SINGLE:
        idx = _grid_index(spec.time, dt, steps, "outlier time")
        out[idx, ch] *= spec.scale
        return out
    lo = _grid_index(spec.t_start, dt, steps, "window start")
    hi = _grid_index(spec.t_end, dt, steps, "window end")
    out[lo : hi + 1, ch] *= spec.scale
    return out
