"""Mode overlap Delta(chi) = <F'|F> and the functionals governing its expansion.

Writing chi = 1 + eps and, for a normalized mode,

    K   = int w F*(w) F_w(w) dw          (Re K = -1/2 identically)
    kappa = Im K
    mu2 = int w^2 |F_w(w)|^2 dw

the overlap behaves as

    Delta = 1 + 2i eps kappa + eps^2/2 - i eps^2 kappa - 2 eps^2 mu2 + O(eps^3)
          = exp(2i kappa (1 - eps/2) eps) exp(-C2 eps^2) + O(eps^3),
    C2 = (4 mu2 - 4 kappa^2 - 1) / 2 >= 0.

All functionals are scale invariant, so they are evaluated directly in w rather
than in a dimensionless variable.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from . import quad
from .errors import OptimizationNotConverged, PhaseUndefined, QuadratureFailure
from .spectra import (GaussianChirp, RedshiftFactor, SpectralMode, as_chi, mean_frequency,
                      polar_decompose, redshift_transform, rms_width, with_linear_phase)

# Functionals need more digits than a single overlap: mu2 can reach 1e3 while
# identities are checked to 1e-8 absolute.
FUNCTIONAL_SETTINGS = quad.QuadratureSettings(rel_tol=1e-13, abs_tol=1e-15, max_subdivisions=400)

PERTURBATIVE_GUARD = 0.2

# arg Delta(1 + eps) = PHASE_SIGN * 2 kappa eps, fixed by brute-force quadrature
# of <F'|F>; the Gaussian closed form below uses the same orientation.
PHASE_SIGN = 1


@dataclass(frozen=True)
class OverlapResult:
    chi: RedshiftFactor
    delta: complex
    magnitude: float
    phase: float
    error_estimate: float

    @classmethod
    def from_delta(cls, chi, delta, error=0.0):
        delta = complex(delta)
        return cls(as_chi(chi), delta, abs(delta), cmath.phase(delta), float(error))

    def deficit_coefficient(self) -> float:
        """``(1 - |Delta|) / eps^2`` with ``eps = chi - 1``."""
        eps = self.chi.chi - 1.0
        return (1.0 - self.magnitude) / (eps * eps)


@dataclass(frozen=True)
class SpectralFunctionals:
    K: complex
    kappa: float
    mu_squared: float
    kappa_opt: float
    omega_bar: float
    variance_term: float
    gradient_term: float
    kappa_polar: float
    mu_squared_polar: float
    polar_available: bool

    @property
    def second_order_coefficient(self) -> float:
        return 0.5 * (4.0 * self.mu_squared - 4.0 * self.kappa**2 - 1.0)

    @property
    def route_mismatch(self) -> float:
        """``|Im K - kappa_polar|``; NaN without a polar route."""
        return abs(self.kappa - self.kappa_polar)


@dataclass(frozen=True)
class PerturbativeOverlap:
    epsilon: float
    delta_poly: complex
    delta_exp: complex
    second_order_coefficient: float
    outside_guard: bool

    @property
    def magnitude(self) -> float:
        """``1 - C2 eps^2``."""
        return 1.0 - self.second_order_coefficient * self.epsilon**2


def overlap_exact(mode: SpectralMode, chi, settings: quad.QuadratureSettings | None = None) -> OverlapResult:
    """``Delta(chi) = <F'|F>`` by adaptive quadrature."""
    chi = as_chi(chi)
    res = quad.inner_product(redshift_transform(mode, chi), mode, settings)
    if not res.converged:
        raise QuadratureFailure(f"overlap at chi={chi.chi:g} did not converge", res)
    return OverlapResult.from_delta(chi, res.value, res.error_estimate)


def _integral(mode, fn, settings):
    res = quad.integrate(fn, mode.support(), settings, points=mode.breakpoints())
    if not res.converged:
        raise QuadratureFailure("functional integral did not converge", res)
    return res.value


def functionals(mode: SpectralMode, settings: quad.QuadratureSettings | None = None) -> SpectralFunctionals:
    """K, kappa, mu^2 by definition and by the magnitude/phase route.

    ``kappa`` and ``mu_squared`` come from the complex derivative; the polar
    route supplies ``kappa_polar``, ``mu_squared_polar`` and the split of
    ``mu^2 - kappa^2`` into phase variance and magnitude-gradient terms.
    When the phase is undefined somewhere in the support the polar fields are
    NaN and ``polar_available`` is False.
    """
    settings = settings or FUNCTIONAL_SETTINGS
    if mode.derivative_noise > settings.rel_tol:
        settings = settings.tightened(rel_tol=mode.derivative_noise)
    omega_bar = mean_frequency(mode, settings)

    def direct_k(w):
        return w * np.conj(mode.amplitude(w)) * mode.derivative(w)

    def direct_mu(w):
        return (w * np.abs(mode.derivative(w))) ** 2

    K = complex(_integral(mode, direct_k, settings))
    mu2 = _integral(mode, direct_mu, settings).real
    kappa = K.imag

    nan = float("nan")
    kp = mu2p = var = grad = nan
    polar_ok = True
    try:
        polar_decompose(mode, settings=settings)
    except PhaseUndefined:
        polar_ok = False
    if polar_ok:
        def moment(fn):
            def g(w):
                rho, drho, dth = mode.polar(w)
                return fn(w, rho, drho, dth)
            return _integral(mode, g, settings).real

        kp = moment(lambda w, r, dr, dt: w * dt * r * r)
        second = moment(lambda w, r, dr, dt: (w * dt * r) ** 2)
        grad = moment(lambda w, r, dr, dt: (w * dr) ** 2)
        var = second - kp * kp
        mu2p = second + grad

    return SpectralFunctionals(
        K=K, kappa=kappa, mu_squared=mu2, kappa_opt=math.sqrt(max(mu2 - 0.25, 0.0)),
        omega_bar=omega_bar, variance_term=var, gradient_term=grad,
        kappa_polar=kp, mu_squared_polar=mu2p, polar_available=polar_ok,
    )


def overlap_perturbative(funcs: SpectralFunctionals, epsilon: float) -> PerturbativeOverlap:
    eps = float(epsilon)
    k, mu2 = funcs.kappa, funcs.mu_squared
    c2 = funcs.second_order_coefficient
    poly = 1 + 2j * eps * k + eps**2 / 2 - 1j * eps**2 * k - 2 * eps**2 * mu2
    expo = cmath.exp(2j * k * (1 - eps / 2) * eps) * math.exp(-c2 * eps**2)
    return PerturbativeOverlap(eps, complex(poly), expo, c2, abs(eps) >= PERTURBATIVE_GUARD)


def gaussian_closed_form(omega0: float, sigma: float, phi: float, chi) -> OverlapResult:
    """Exact overlap for ``GaussianChirp(omega0, sigma, phi, beta=0)``."""
    chi = as_chi(chi)
    c2 = chi.chi_squared
    c4 = c2 * c2
    ratio = (c2 - 1.0) ** 2 / (c4 + 1.0)
    mag = (math.sqrt(2.0) * chi.chi / math.sqrt(c4 + 1.0)
           * math.exp(-0.25 * ratio * (omega0 / sigma) ** 2)
           * math.exp(-ratio * (sigma * phi) ** 2))
    # sign chosen to agree with arg <F'|F> = 2 kappa eps, kappa = -phi omega0
    ph = -PHASE_SIGN * (c4 - 1.0) / (c4 + 1.0) * phi * omega0
    return OverlapResult.from_delta(chi, mag * cmath.exp(1j * ph))


@dataclass(frozen=True)
class PhaseOptimization:
    c_star: float
    achieved: OverlapResult
    baseline: OverlapResult
    c_analytic: float
    analytic: OverlapResult
    iterations: int


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def optimize_linear_phase(
    mode: SpectralMode,
    chi,
    settings: quad.QuadratureSettings | None = None,
    *,
    span: float = 10.0,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> PhaseOptimization:
    """Maximize ``|Delta|`` of ``F(w) exp(i c w)`` over ``c`` by golden section.

    The search covers ``|c| <= span / sigma_eff``.  When no point beats
    ``c = 0`` by more than ``tol`` plus the quadrature error, ``c_star`` is 0.
    The candidate ``c = -kappa_opt / omega_bar`` is evaluated for comparison.
    """
    chi = as_chi(chi)
    sigma = rms_width(mode, settings)
    cache: dict[float, OverlapResult] = {}

    def f(c):
        if c not in cache:
            cache[c] = overlap_exact(with_linear_phase(mode, c), chi, settings)
        return cache[c].magnitude

    baseline = overlap_exact(mode, chi, settings)
    cache[0.0] = baseline
    a, b = -span / sigma, span / sigma
    c1 = b - _INV_PHI * (b - a)
    c2 = a + _INV_PHI * (b - a)
    it = 0
    while True:
        vals = (f(a), f(c1), f(c2), f(b))
        if max(vals) - min(vals) <= tol:
            break
        if it >= max_iter:
            raise OptimizationNotConverged(f"golden section did not settle within {max_iter} steps")
        if f(c1) >= f(c2):
            b, c2 = c2, c1
            c1 = b - _INV_PHI * (b - a)
        else:
            a, c1 = c1, c2
            c2 = a + _INV_PHI * (b - a)
        it += 1

    c_best = max(cache, key=lambda c: (cache[c].magnitude, -abs(c)))
    best = cache[c_best]
    margin = tol + best.error_estimate + baseline.error_estimate
    if best.magnitude <= baseline.magnitude + margin:
        c_best, best = 0.0, baseline

    funcs = functionals(mode)
    c_an = -funcs.kappa_opt / funcs.omega_bar
    analytic = overlap_exact(with_linear_phase(mode, c_an), chi, settings)
    return PhaseOptimization(c_best, best, baseline, c_an, analytic, it)


def asymptotic_decay_check(mode: SpectralMode, chi_list, settings: quad.QuadratureSettings | None = None):
    """``[(chi, |Delta(chi)|), ...]``; failed points carry NaN."""
    chis = [as_chi(c).chi for c in chi_list]
    if any(b <= a for a, b in zip(chis, chis[1:])):
        raise ValueError("chi values must be strictly increasing")
    if len(chis) < 2 or chis[-1] / chis[0] < 100.0:
        raise ValueError("chi values must span at least two decades")
    out = []
    for c in chis:
        try:
            out.append((c, overlap_exact(mode, c, settings).magnitude))
        except QuadratureFailure:
            out.append((c, float("nan")))
    return out


def is_gaussian_closed_form_applicable(mode: SpectralMode) -> bool:
    return isinstance(mode, GaussianChirp) and mode.beta == 0.0 and abs(mode.amplitude_factor) > 0
