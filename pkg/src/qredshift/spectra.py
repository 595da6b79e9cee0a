"""Spectral mode functions F(w) and the redshift map acting on them.

Modes are immutable.  Every family member exposes a vectorized ``amplitude``
and ``derivative`` (d/dw), a ``polar`` triple ``(rho, drho/dw, dtheta/dw)``,
its effective support and a ``redshifted`` counterpart implementing

    F'(w) = F(w / chi^2) / chi            (Alice -> Bob)

Gaussian components must satisfy ``omega0 >= 5 * sigma``.  Those modes are
treated on their effective support ``omega0 +/- 12 sigma`` with the analytic
continuation below zero frequency (the tail there carries < 3e-7 of the power
and is considered part of the model).  ``allow_low_frequency=True`` lifts the
guard and truncates the amplitude to ``w >= 0`` explicitly instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from . import quad
from .errors import (InvalidMode, NegativeFrequency, NonFinite, PhaseUndefined,
                     PositiveSupportError, QuadratureFailure, ZeroNorm)

MIN_CENTER_OVER_WIDTH = 5.0
PHASE_FLOOR = 1e-12
SAMPLED_EDGE_FLOOR = 1e-10
_TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# redshift factor


@dataclass(frozen=True)
class RedshiftFactor:
    """``chi`` with ``chi**2 = Omega_B / Omega_A = 1 + z``."""

    chi: float

    def __post_init__(self):
        chi = float(self.chi)
        if not (chi > 0 and math.isfinite(chi)):
            raise ValueError(f"redshift factor must be positive and finite, got {self.chi!r}")
        object.__setattr__(self, "chi", chi)

    @classmethod
    def from_chi_squared(cls, chi_squared: float) -> "RedshiftFactor":
        return cls(math.sqrt(chi_squared))

    @classmethod
    def from_z(cls, z: float) -> "RedshiftFactor":
        return cls(math.sqrt(1.0 + z))

    @property
    def chi_squared(self) -> float:
        return self.chi * self.chi

    @property
    def z(self) -> float:
        return self.chi_squared - 1.0

    def inverse(self) -> "RedshiftFactor":
        """The Bob -> Alice factor."""
        return RedshiftFactor(1.0 / self.chi)


def as_chi(chi) -> RedshiftFactor:
    return chi if isinstance(chi, RedshiftFactor) else RedshiftFactor(chi)


# ---------------------------------------------------------------------------
# mode families


def _gauss(w, center, width):
    # unit-norm real Gaussian amplitude, |.|^2 has standard deviation `width`
    return (_TWO_PI * width * width) ** -0.25 * np.exp(-((w - center) ** 2) / (4.0 * width * width))


def _gauss_overlap(c1, s1, c2, s2):
    """Full-line overlap of two unit-norm Gaussian amplitudes."""
    ss = s1 * s1 + s2 * s2
    return math.sqrt(2.0 * s1 * s2 / ss) * math.exp(-((c1 - c2) ** 2) / (4.0 * ss))


def _check_guard(center, width, allow_low_frequency, what):
    if not (width > 0 and math.isfinite(width)):
        raise InvalidMode(f"{what}: width must be positive, got {width!r}")
    if not math.isfinite(center):
        raise InvalidMode(f"{what}: center must be finite")
    if not allow_low_frequency and center < MIN_CENTER_OVER_WIDTH * width:
        raise PositiveSupportError(
            f"{what}: center {center:g} < {MIN_CENTER_OVER_WIDTH:g} x width {width:g}; "
            "the mode has weight at negative frequency (positive-support guard); "
            "set allow_low_frequency to truncate at zero instead"
        )


class SpectralMode:
    """Interface shared by the mode families."""

    allow_low_frequency: bool = False
    # relative accuracy below which derivative-based integrands are noise
    derivative_noise: float = 0.0

    # -- required by subclasses
    def _raw_amplitude(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _raw_derivative(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def redshifted(self, chi: float) -> "SpectralMode":
        raise NotImplementedError

    def scaled(self, factor: complex) -> "SpectralMode":
        raise NotImplementedError

    def _raw_support(self) -> list[tuple[float, float]]:
        raise NotImplementedError

    def width_scale(self) -> float:
        """Narrowest spectral feature; sets grids and difference steps."""
        raise NotImplementedError

    def analytic_norm_squared(self) -> float | None:
        return None

    def breakpoints(self) -> np.ndarray:
        return np.empty(0)

    # -- shared behaviour
    def amplitude(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        out = self._raw_amplitude(w)
        if self.allow_low_frequency:
            out = np.where(w >= 0, out, 0.0)
        return out

    def derivative(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        out = self._raw_derivative(w)
        if self.allow_low_frequency:
            out = np.where(w >= 0, out, 0.0)
        return out

    def polar(self, w):
        """``(rho, drho/dw, dtheta/dw)`` from the complex amplitude and slope."""
        f = self.amplitude(w)
        df = self.derivative(w)
        rho = np.abs(f)
        cross = np.conj(f) * df
        safe = rho > 0
        drho = np.divide(cross.real, rho, out=np.zeros_like(rho), where=safe)
        dtheta = np.divide(cross.imag, rho * rho, out=np.zeros_like(rho), where=safe)
        return rho, drho, dtheta

    def support(self) -> list[tuple[float, float]]:
        iv = self._raw_support()
        if self.allow_low_frequency:
            iv = [(max(lo, 0.0), hi) for lo, hi in iv if hi > 0]
        return quad.union(iv)

    def __call__(self, w):
        return evaluate(self, w)


@dataclass(frozen=True)
class GaussianChirp(SpectralMode):
    """``a (2 pi s^2)^(-1/4) exp(-(w-w0)^2/4s^2) exp(-i phi w - i beta (w-w0)^2)``."""

    omega0: float
    sigma: float
    phi: float = 0.0
    beta: float = 0.0
    amplitude_factor: complex = 1.0
    allow_low_frequency: bool = False

    def __post_init__(self):
        for name in ("omega0", "sigma", "phi", "beta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "amplitude_factor", complex(self.amplitude_factor))
        if not (math.isfinite(self.phi) and math.isfinite(self.beta)
                and np.isfinite(self.amplitude_factor)):
            raise NonFinite("GaussianChirp parameters must be finite")
        _check_guard(self.omega0, self.sigma, self.allow_low_frequency, "GaussianChirp")

    def _phase(self, w):
        d = w - self.omega0
        return -self.phi * w - self.beta * d * d

    def _raw_amplitude(self, w):
        return self.amplitude_factor * _gauss(w, self.omega0, self.sigma) * np.exp(1j * self._phase(w))

    def _slope(self, w):
        d = w - self.omega0
        return -d / (2.0 * self.sigma**2) - 1j * (self.phi + 2.0 * self.beta * d)

    def _raw_derivative(self, w):
        return self._raw_amplitude(w) * self._slope(w)

    def polar(self, w):
        w = np.asarray(w, dtype=float)
        d = w - self.omega0
        rho = abs(self.amplitude_factor) * _gauss(w, self.omega0, self.sigma)
        if self.allow_low_frequency:
            rho = np.where(w >= 0, rho, 0.0)
        return rho, -d / (2.0 * self.sigma**2) * rho, -self.phi - 2.0 * self.beta * d

    def phase(self, w):
        """Closed-form unwrapped phase ``theta(w)``."""
        return np.angle(self.amplitude_factor) + self._phase(np.asarray(w, dtype=float))

    def redshifted(self, chi):
        c2 = chi * chi
        return replace(self, omega0=self.omega0 * c2, sigma=self.sigma * c2,
                       phi=self.phi / c2, beta=self.beta / (c2 * c2))

    def scaled(self, factor):
        return replace(self, amplitude_factor=self.amplitude_factor * factor)

    def with_linear_phase(self, rate: float) -> "GaussianChirp":
        """Multiply by ``exp(i rate w)``."""
        return replace(self, phi=self.phi - rate)

    def _raw_support(self):
        pad = quad.SUPPORT_PAD * self.sigma
        return [(self.omega0 - pad, self.omega0 + pad)]

    def width_scale(self):
        return self.sigma

    def analytic_norm_squared(self):
        if self.allow_low_frequency:
            return None
        return abs(self.amplitude_factor) ** 2


@dataclass(frozen=True)
class Tooth:
    center: float
    width: float
    weight: complex = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", float(self.center))
        object.__setattr__(self, "width", float(self.width))
        object.__setattr__(self, "weight", complex(self.weight))
        if not np.isfinite(self.weight):
            raise NonFinite("tooth weight must be finite")


@dataclass(frozen=True)
class Comb(SpectralMode):
    """Sum of Gaussian teeth ``weight_i * g(w; center_i, width_i)``."""

    teeth: tuple[Tooth, ...]
    allow_low_frequency: bool = False

    def __post_init__(self):
        teeth = tuple(t if isinstance(t, Tooth) else Tooth(*t) for t in self.teeth)
        if not teeth:
            raise InvalidMode("Comb needs at least one tooth")
        for i, t in enumerate(teeth):
            _check_guard(t.center, t.width, self.allow_low_frequency, f"Comb tooth {i}")
        object.__setattr__(self, "teeth", teeth)

    def _raw_amplitude(self, w):
        out = np.zeros(np.shape(w), dtype=complex)
        for t in self.teeth:
            out = out + t.weight * _gauss(w, t.center, t.width)
        return out

    def _raw_derivative(self, w):
        out = np.zeros(np.shape(w), dtype=complex)
        for t in self.teeth:
            out = out - t.weight * _gauss(w, t.center, t.width) * (w - t.center) / (2.0 * t.width**2)
        return out

    def redshifted(self, chi):
        c2 = chi * chi
        return replace(self, teeth=tuple(Tooth(t.center * c2, t.width * c2, t.weight) for t in self.teeth))

    def scaled(self, factor):
        return replace(self, teeth=tuple(Tooth(t.center, t.width, t.weight * factor) for t in self.teeth))

    def _raw_support(self):
        pad = quad.SUPPORT_PAD
        return [(t.center - pad * t.width, t.center + pad * t.width) for t in self.teeth]

    def width_scale(self):
        return min(t.width for t in self.teeth)

    def analytic_norm_squared(self):
        if self.allow_low_frequency:
            return None
        total = 0j
        for a in self.teeth:
            for b in self.teeth:
                total += np.conj(a.weight) * b.weight * _gauss_overlap(a.center, a.width, b.center, b.width)
        return float(total.real)


CUBIC_POLAR = "cubic-polar"


def _richardson(fun, w, h):
    d1 = (fun(w + h) - fun(w - h)) / (2.0 * h)
    h2 = 0.5 * h
    d2 = (fun(w + h2) - fun(w - h2)) / (2.0 * h2)
    return (4.0 * d2 - d1) / 3.0


@dataclass(frozen=True, eq=False)
class Sampled(SpectralMode):
    """Tabulated amplitude, interpolated cubically in magnitude and unwrapped phase.

    Zero outside the grid.  Derivatives use Richardson-extrapolated central
    differences with step ``1e-5 * width_scale()``.
    """

    derivative_noise = 1e-10

    omega: np.ndarray
    values: np.ndarray
    interpolation: str = CUBIC_POLAR
    allow_low_frequency: bool = False
    _mag: CubicSpline = field(init=False, repr=False)
    _phase: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        w = np.array(self.omega, dtype=float)
        v = np.array(self.values, dtype=complex)
        if self.interpolation != CUBIC_POLAR:
            raise InvalidMode(f"unknown interpolation rule {self.interpolation!r}")
        if w.ndim != 1 or v.shape != w.shape:
            raise InvalidMode("Sampled grid and values must be 1-d arrays of equal length")
        if w.size < 8:
            raise InvalidMode("Sampled grid needs at least 8 points")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
            raise NonFinite("Sampled grid and values must be finite")
        if np.any(np.diff(w) <= 0):
            raise InvalidMode("Sampled grid must be strictly increasing")
        if w[0] < 0:
            raise NegativeFrequency("Sampled grid must lie at non-negative frequency")
        peak = np.max(np.abs(v))
        if peak == 0:
            raise ZeroNorm("Sampled amplitudes are identically zero")
        if max(abs(v[0]), abs(v[-1])) > SAMPLED_EDGE_FLOOR * peak:
            raise InvalidMode("Sampled amplitudes must decay to <= 1e-10 of the peak at the grid ends")
        w.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_mag", CubicSpline(w, np.abs(v)))
        object.__setattr__(self, "_phase", CubicSpline(w, np.unwrap(np.angle(v))))

    def _inside(self, w):
        return (w >= self.omega[0]) & (w <= self.omega[-1])

    def _magnitude(self, w):
        inside = self._inside(w)
        return np.where(inside, np.maximum(self._mag(np.where(inside, w, self.omega[0])), 0.0), 0.0)

    def _theta(self, w):
        return self._phase(np.clip(w, self.omega[0], self.omega[-1]))

    def _raw_amplitude(self, w):
        return self._magnitude(w) * np.exp(1j * self._theta(w))

    @cached_property
    def _step(self):
        return 1e-5 * self.width_scale()

    def _raw_derivative(self, w):
        return _richardson(self._raw_amplitude, w, self._step)

    def polar(self, w):
        w = np.asarray(w, dtype=float)
        rho = self._magnitude(w)
        drho = _richardson(self._magnitude, w, self._step)
        dtheta = np.where(self._inside(w), _richardson(self._theta, w, self._step), 0.0)
        return rho, drho, dtheta

    def redshifted(self, chi):
        c2 = chi * chi
        return Sampled(self.omega * c2, self.values / chi, self.interpolation, self.allow_low_frequency)

    def scaled(self, factor):
        return Sampled(self.omega, self.values * factor, self.interpolation, self.allow_low_frequency)

    def _raw_support(self):
        return [(float(self.omega[0]), float(self.omega[-1]))]

    def breakpoints(self):
        return self.omega

    @cached_property
    def _rms_width(self):
        p = np.abs(self.values) ** 2
        mass = np.trapezoid(p, self.omega)
        mean = np.trapezoid(self.omega * p, self.omega) / mass
        return math.sqrt(np.trapezoid((self.omega - mean) ** 2 * p, self.omega) / mass)

    def width_scale(self):
        return self._rms_width

    @classmethod
    def from_mode(cls, mode: SpectralMode, n: int = 512, pad: float = quad.SUPPORT_PAD) -> "Sampled":
        """Tabulate another mode on ``n`` points spanning its support."""
        lo = min(iv[0] for iv in mode.support())
        hi = max(iv[1] for iv in mode.support())
        w = np.linspace(max(lo, 0.0), hi, n)
        return cls(w, mode.amplitude(w))


@dataclass(frozen=True)
class Superposition(SpectralMode):
    """Finite linear combination ``sum_k c_k F_k``; produced by Gram-Schmidt."""

    terms: tuple[tuple[complex, SpectralMode], ...]

    def __post_init__(self):
        if not self.terms:
            raise InvalidMode("Superposition needs at least one term")
        object.__setattr__(self, "terms", tuple((complex(c), m) for c, m in self.terms))

    def _raw_amplitude(self, w):
        return sum(c * m.amplitude(w) for c, m in self.terms)

    def _raw_derivative(self, w):
        return sum(c * m.derivative(w) for c, m in self.terms)

    def redshifted(self, chi):
        return Superposition(tuple((c, m.redshifted(chi)) for c, m in self.terms))

    def scaled(self, factor):
        return Superposition(tuple((c * factor, m) for c, m in self.terms))

    def _raw_support(self):
        return [iv for _, m in self.terms for iv in m.support()]

    def breakpoints(self):
        pts = [m.breakpoints() for _, m in self.terms]
        return np.concatenate(pts) if pts else np.empty(0)

    def width_scale(self):
        return min(m.width_scale() for _, m in self.terms)

    @property
    def derivative_noise(self):
        return max(m.derivative_noise for _, m in self.terms)


@dataclass(frozen=True)
class LinearPhase(SpectralMode):
    """``F(w) * exp(i rate w)`` for any base mode."""

    base: SpectralMode
    rate: float

    def _raw_amplitude(self, w):
        return self.base.amplitude(w) * np.exp(1j * self.rate * w)

    def _raw_derivative(self, w):
        e = np.exp(1j * self.rate * w)
        return (self.base.derivative(w) + 1j * self.rate * self.base.amplitude(w)) * e

    def polar(self, w):
        rho, drho, dtheta = self.base.polar(w)
        return rho, drho, dtheta + self.rate

    def redshifted(self, chi):
        return LinearPhase(self.base.redshifted(chi), self.rate / (chi * chi))

    def scaled(self, factor):
        return LinearPhase(self.base.scaled(factor), self.rate)

    def _raw_support(self):
        return self.base.support()

    def breakpoints(self):
        return self.base.breakpoints()

    def width_scale(self):
        return self.base.width_scale()

    def analytic_norm_squared(self):
        return self.base.analytic_norm_squared()

    @property
    def derivative_noise(self):
        return self.base.derivative_noise


def with_linear_phase(mode: SpectralMode, rate: float) -> SpectralMode:
    if rate == 0.0:
        return mode
    if isinstance(mode, GaussianChirp):
        return mode.with_linear_phase(rate)
    return LinearPhase(mode, rate)


# ---------------------------------------------------------------------------
# operations


def evaluate(mode: SpectralMode, omega):
    """Complex amplitude ``F(omega)`` for ``omega >= 0`` (scalar or array)."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise NegativeFrequency("spectral modes are defined for omega >= 0 only")
    out = mode.amplitude(w)
    return complex(out) if out.ndim == 0 else out


def norm_squared(mode: SpectralMode, settings: quad.QuadratureSettings | None = None) -> float:
    exact = mode.analytic_norm_squared()
    if exact is not None:
        return exact
    res = quad.integrate(lambda w: np.abs(mode.amplitude(w)) ** 2, mode.support(), settings,
                         points=mode.breakpoints())
    if not res.converged:
        raise QuadratureFailure("norm integral did not converge", res)
    return res.real


def normalize(mode: SpectralMode, settings: quad.QuadratureSettings | None = None) -> SpectralMode:
    """Rescale so that ``int |F|^2 dw = 1``; shape and phase are untouched."""
    n2 = norm_squared(mode, settings)
    if not math.isfinite(n2):
        raise NonFinite("mode norm is not finite")
    if n2 < 1e-300:
        raise ZeroNorm("mode has zero norm")
    if abs(n2 - 1.0) <= 4 * np.finfo(float).eps:
        return mode
    return mode.scaled(1.0 / math.sqrt(n2))


def redshift_transform(mode: SpectralMode, chi) -> SpectralMode:
    """``F'(w) = F(w / chi^2) / chi``; use ``chi.inverse()`` for Bob -> Alice."""
    chi = as_chi(chi).chi
    if chi == 1.0:
        return mode
    return mode.redshifted(chi)


def _moment(mode, order, settings, center=0.0):
    res = quad.integrate(lambda w: (w - center) ** order * np.abs(mode.amplitude(w)) ** 2,
                         mode.support(), settings, points=mode.breakpoints())
    return res


MEAN_REL_TARGET = 1e-8


def mean_frequency(mode: SpectralMode, settings: quad.QuadratureSettings | None = None) -> float:
    """``int w |F(w)|^2 dw`` for a normalized mode."""
    res = _moment(mode, 1, settings)
    if not res.converged or res.error_estimate > MEAN_REL_TARGET * abs(res.value):
        raise QuadratureFailure("mean frequency did not reach relative accuracy 1e-8", res)
    return res.real


def rms_width(mode: SpectralMode, settings: quad.QuadratureSettings | None = None) -> float:
    """Root variance of ``|F|^2`` in frequency."""
    mean = mean_frequency(mode, settings)
    res = _moment(mode, 2, settings, center=mean)
    if not res.converged:
        raise QuadratureFailure("variance integral did not converge", res)
    return math.sqrt(max(res.real, 0.0))


@dataclass(frozen=True, eq=False)
class PolarDecomposition:
    """``F(sigma x) sqrt(sigma) = rho(x) exp(i theta(x))`` sampled on ``x``.

    ``x`` is dimensionless (``w / sigma``), ``theta`` is unwrapped.
    """

    x: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    sigma: float

    def reconstruct(self) -> np.ndarray:
        """``F(w)`` at ``w = sigma * x``."""
        return self.rho * np.exp(1j * self.theta) / math.sqrt(self.sigma)

    @property
    def omega(self) -> np.ndarray:
        return self.sigma * self.x


def polar_decompose(
    mode: SpectralMode,
    window: tuple[float, float] | None = None,
    *,
    sigma: float | None = None,
    settings: quad.QuadratureSettings | None = None,
) -> PolarDecomposition:
    """Magnitude and unwrapped phase on a grid with step <= width/100.

    Without an explicit ``window`` the decomposition covers the hull of the
    region where ``|F| >= 1e-12 * peak``.  Any sample inside the window that
    falls below that floor raises :class:`PhaseUndefined`.
    """
    if sigma is None:
        sigma = rms_width(mode, settings)
    step = min(mode.width_scale(), sigma) / 100.0
    if window is None:
        lo = min(iv[0] for iv in mode.support())
        hi = max(iv[1] for iv in mode.support())
    else:
        lo, hi = map(float, window)
    n = int(math.ceil((hi - lo) / step)) + 1
    w = np.linspace(lo, hi, n)
    f = mode.amplitude(w)
    mag = np.abs(f)
    peak = mag.max()
    if peak == 0:
        raise PhaseUndefined("mode vanishes on the requested window")
    above = mag >= PHASE_FLOOR * peak
    if window is None:
        idx = np.flatnonzero(above)
        sl = slice(idx[0], idx[-1] + 1)
        w, f, mag, above = w[sl], f[sl], mag[sl], above[sl]
    if not np.all(above):
        bad = w[~above][0]
        raise PhaseUndefined(f"|F| below {PHASE_FLOOR:g} x peak at w = {bad:.6g}; "
                             "restrict the window to individual spectral lobes")
    theta = np.unwrap(np.angle(f))
    if isinstance(mode, GaussianChirp):
        # shift the unwrapped branch onto the closed-form phase at the grid start
        exact0 = float(mode.phase(w[0]))
        theta = theta + _TWO_PI * round((exact0 - theta[0]) / _TWO_PI)
    return PolarDecomposition(w / sigma, mag * math.sqrt(sigma), theta, float(sigma))


__all__ = [
    "Comb", "GaussianChirp", "LinearPhase", "PolarDecomposition", "RedshiftFactor",
    "Sampled", "SpectralMode", "Superposition", "Tooth", "as_chi", "evaluate",
    "mean_frequency", "norm_squared", "normalize", "polar_decompose", "redshift_transform",
    "rms_width", "with_linear_phase",
]
