"""Ground-truth dispersion model and sensor measurement generation.

The plume is the quasi-steady 2-D advection-diffusion solution with a
wind-biased exponential factor and a modified Bessel ``K0`` radial decay.
All functions broadcast over numpy arrays so that the particle filter can
evaluate many hypotheses at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

R_MIN = 1e-3  # m, distance clamp at the source singularity


@dataclass(frozen=True)
class EnvParams:
    wind_speed: float
    wind_dir: float
    diffusivity: float
    lifetime: float

    def __post_init__(self):
        if self.wind_speed < 0:
            raise ValueError("wind_speed must be >= 0")
        if self.diffusivity <= 0:
            raise ValueError("diffusivity must be > 0")
        if self.lifetime <= 0:
            raise ValueError("lifetime must be > 0")

    @property
    def wind_unit(self) -> np.ndarray:
        return np.array([math.cos(self.wind_dir), math.sin(self.wind_dir)])

    @property
    def wind_vector(self) -> np.ndarray:
        return self.wind_speed * self.wind_unit

    @property
    def length_scale(self) -> float:
        return plume_lambda(self)


@dataclass(frozen=True)
class SourceTerm:
    x: float
    y: float
    rate: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.rate])


@dataclass(frozen=True)
class Domain:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("domain must have positive area")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max])

    def contains(self, p) -> bool | np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.all((p >= self.lower) & (p <= self.upper), axis=-1)

    def clamp(self, p) -> np.ndarray:
        return np.clip(np.asarray(p, dtype=float), self.lower, self.upper)

    def reflect(self, p) -> np.ndarray:
        """Fold points back inside by mirroring at the boundary.

        Repeated folding handles excursions larger than the domain itself.
        """
        p = np.asarray(p, dtype=float)
        lo, hi = self.lower, self.upper
        span = hi - lo
        u = np.mod(p - lo, 2 * span)
        u = np.where(u > span, 2 * span - u, u)
        return lo + u


@dataclass(frozen=True)
class SensorModel:
    noise_std: float
    threshold: float
    detect_prob: float

    def __post_init__(self):
        if self.noise_std <= 0:
            raise ValueError("noise_std must be > 0")
        if self.threshold <= 0:
            raise ValueError("threshold must be > 0")
        if not 0 < self.detect_prob <= 1:
            raise ValueError("detect_prob must lie in (0, 1]")


@dataclass(frozen=True)
class Measurement:
    robot_id: int
    x: float
    y: float
    value: float
    detected: bool

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def plume_lambda(env: EnvParams) -> float:
    """Plume length scale ``2D sqrt(tau / (4D + v^2 tau))``."""
    d, tau, v = env.diffusivity, env.lifetime, env.wind_speed
    return 2.0 * d * math.sqrt(tau / (4.0 * d + v * v * tau))


# Abramowitz & Stegun polynomial fits for I0 and K0
_I0_SMALL = (1.0, 3.5156229, 3.0899424, 1.2067492, 0.2659732, 0.0360768, 0.0045813)
_K0_SMALL = (-0.57721566, 0.42278420, 0.23069756, 0.03488590, 0.00262698,
             0.00010750, 0.00000740)
_K0_LARGE = (1.25331414, -0.07832358, 0.02189568, -0.01062446, 0.00587872,
             -0.00251540, 0.00053208)


def _horner(coeffs, t):
    acc = np.zeros_like(t) + coeffs[-1]
    for c in coeffs[-2::-1]:
        acc = acc * t + c
    return acc


def _check_positive(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("bessel_k0 requires x > 0")
    return x


def log_bessel_k0(x) -> np.ndarray:
    """Natural log of ``K0(x)``; stays finite where ``K0`` itself underflows."""
    x = _check_positive(x)
    out = np.empty_like(x)
    small = x <= 2.0
    xs = x[small]
    if xs.size:
        t = (xs / 3.75) ** 2
        i0 = _horner(_I0_SMALL, t)
        k0 = -np.log(0.5 * xs) * i0 + _horner(_K0_SMALL, 0.25 * xs * xs)
        out[small] = np.log(k0)
    xl = x[~small]
    if xl.size:
        out[~small] = -xl - 0.5 * np.log(xl) + np.log(_horner(_K0_LARGE, 2.0 / xl))
    return out


def bessel_k0(x):
    """Modified Bessel function of the second kind, order zero.

    Polynomial approximations with relative error below 1e-6 on
    ``[1e-3, 50]``. Raises ``ValueError`` for ``x <= 0``.
    """
    scalar = np.ndim(x) == 0
    val = np.exp(log_bessel_k0(np.atleast_1d(x)))
    return float(val[0]) if scalar else val


def _log_kernel(dx, dy, env: EnvParams):
    """Log of the unit-rate plume contribution for offsets ``q - s``."""
    lam = plume_lambda(env)
    r = np.maximum(np.hypot(dx, dy), R_MIN)
    vx, vy = env.wind_vector
    adv = (vx * dx + vy * dy) / (2.0 * env.diffusivity)
    return adv + log_bessel_k0(r / lam) - math.log(2.0 * math.pi * env.diffusivity)


def unit_concentration(src_xy, q, env: EnvParams) -> np.ndarray:
    """Concentration per unit rate from sources at ``src_xy`` (..., 2) sensed at ``q`` (..., 2).

    Arrays broadcast; the returned shape is the broadcast of the leading axes.
    """
    src_xy = np.asarray(src_xy, dtype=float)
    q = np.asarray(q, dtype=float)
    dx = q[..., 0] - src_xy[..., 0]
    dy = q[..., 1] - src_xy[..., 1]
    return np.exp(_log_kernel(dx, dy, env))


def concentration(sources: Sequence[SourceTerm], env: EnvParams, q) -> float | np.ndarray:
    """Superposed concentration of ``sources`` at point(s) ``q``."""
    q = np.asarray(q, dtype=float)
    total = np.zeros(q.shape[:-1])
    for s in sources:
        total = total + s.rate * unit_concentration(np.array([s.x, s.y]), q, env)
    return float(total) if total.ndim == 0 else total


def sample_measurement(sources, env: EnvParams, sensor: SensorModel, q,
                       rng: np.random.Generator, robot_id: int = 0) -> Measurement:
    """Draw one sensor reading at ``q``.

    With probability ``detect_prob`` the reading is the true concentration
    plus Gaussian noise (clipped at zero); otherwise it is exactly zero.
    Each call consumes one uniform and, on detection, one normal draw.
    """
    q = np.asarray(q, dtype=float)
    detected = rng.random() < sensor.detect_prob
    if detected:
        c = concentration(sources, env, q)
        z = max(0.0, c + sensor.noise_std * rng.standard_normal())
    else:
        z = 0.0
    return Measurement(robot_id, float(q[0]), float(q[1]), float(z), bool(detected))
