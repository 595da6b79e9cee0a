"""Adaptive quadrature for complex integrands on finite windows and the half-line.

Each panel is integrated with a 10-point and a 20-point Gauss-Legendre rule;
the difference of the two is the panel's error estimate, which is pessimistic
for the 20-point value that is actually returned.  The panel with the largest
estimate (lowest index on ties) is bisected until the global tolerance or the
subdivision budget is reached.  Nodes are fixed, so results are bit-reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import NonFiniteIntegrand, QuadratureFailure

_X_LO, _W_LO = leggauss(10)
_X_HI, _W_HI = leggauss(20)
_X_ALL = np.concatenate([_X_LO, _X_HI])
_N_LO = _X_LO.size

TRUNCATE = "truncate"
MAP = "map"

# Effective-support half width, in units of the mode's width parameter.
SUPPORT_PAD = 12.0


@dataclass(frozen=True)
class QuadratureSettings:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_subdivisions: int = 200
    support_window: str = TRUNCATE
    initial_panels: int = 8

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.support_window not in (TRUNCATE, MAP):
            raise ValueError(f"unknown support_window policy {self.support_window!r}")
        if self.max_subdivisions < 0 or self.initial_panels < 1:
            raise ValueError("invalid panel budget")

    def tightened(self, rel_tol=None, abs_tol=None, max_subdivisions=None):
        return QuadratureSettings(
            rel_tol=self.rel_tol if rel_tol is None else rel_tol,
            abs_tol=self.abs_tol if abs_tol is None else abs_tol,
            max_subdivisions=(self.max_subdivisions if max_subdivisions is None
                              else max_subdivisions),
            support_window=self.support_window,
            initial_panels=self.initial_panels,
        )


DEFAULT_SETTINGS = QuadratureSettings()


@dataclass(frozen=True)
class QuadratureResult:
    value: complex
    error_estimate: float
    evaluations: int
    converged: bool

    @property
    def real(self) -> float:
        return float(np.real(self.value))

    def tolerance_met(self, settings: QuadratureSettings) -> bool:
        return self.error_estimate <= max(settings.abs_tol, settings.rel_tol * abs(self.value))


def _rules(f, a, b):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = mid[:, None] + half[:, None] * _X_ALL[None, :]
    y = np.asarray(f(x.ravel()), dtype=complex).reshape(x.shape)
    if not np.all(np.isfinite(y)):
        raise NonFiniteIntegrand("integrand returned a non-finite value")
    lo = half * (y[:, :_N_LO] @ _W_LO)
    hi = half * (y[:, _N_LO:] @ _W_HI)
    return hi, np.abs(hi - lo)


def _adaptive(f, edges: np.ndarray, settings: QuadratureSettings) -> QuadratureResult:
    a = edges[:-1].astype(float)
    b = edges[1:].astype(float)
    vals, errs = _rules(f, a, b)
    evals = a.size * _X_ALL.size
    splits = 0
    while True:
        total = complex(vals.sum())
        err = float(errs.sum())
        if err <= max(settings.abs_tol, settings.rel_tol * abs(total)):
            return QuadratureResult(total, err, evals, True)
        if splits >= settings.max_subdivisions:
            return QuadratureResult(total, err, evals, False)
        i = int(np.argmax(errs))
        m = 0.5 * (a[i] + b[i])
        ca = np.array([a[i], m])
        cb = np.array([m, b[i]])
        cv, ce = _rules(f, ca, cb)
        evals += 2 * _X_ALL.size
        a = np.concatenate([a[:i], ca, a[i + 1:]])
        b = np.concatenate([b[:i], cb, b[i + 1:]])
        vals = np.concatenate([vals[:i], cv, vals[i + 1:]])
        errs = np.concatenate([errs[:i], ce, errs[i + 1:]])
        splits += 1


def _merge(intervals) -> list[tuple[float, float]]:
    out: list[list[float]] = []
    for lo, hi in sorted((float(lo), float(hi)) for lo, hi in intervals):
        if hi <= lo:
            continue
        if out and lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [(lo, hi) for lo, hi in out]


def intersect(first, second) -> list[tuple[float, float]]:
    """Intersection of two unions of intervals."""
    out = []
    for a0, a1 in _merge(first):
        for b0, b1 in _merge(second):
            lo, hi = max(a0, b0), min(a1, b1)
            if hi > lo:
                out.append((lo, hi))
    return _merge(out)


def union(*groups) -> list[tuple[float, float]]:
    return _merge([iv for g in groups for iv in g])


def _panel_edges(lo, hi, points, n_initial):
    edges = np.linspace(lo, hi, n_initial + 1)
    if points is not None and len(points):
        pts = np.asarray(points, dtype=float)
        pts = pts[(pts > lo) & (pts < hi)]
        edges = np.union1d(edges, pts)
    return edges


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    window,
    settings: QuadratureSettings | None = None,
    *,
    points: Sequence[float] | None = None,
    scale: float = 1.0,
) -> QuadratureResult:
    """Integrate a vectorized complex function over ``window``.

    ``window`` is a ``(lo, hi)`` pair or a list of disjoint pairs.  An infinite
    upper limit is handled through the map ``w = lo + scale * t / (1 - t)``;
    ``scale`` should be the width of the integrand's support.  ``points`` are
    extra initial panel boundaries (kinks, interpolation knots).

    Non-convergence is reported through ``converged=False``, never raised.
    """
    settings = settings or DEFAULT_SETTINGS
    if isinstance(window, tuple) and len(window) == 2 and np.isscalar(window[0]):
        window = [window]
    intervals = _merge(window)
    if not intervals:
        return QuadratureResult(0j, 0.0, 0, True)

    total, err, evals, ok = 0j, 0.0, 0, True
    for lo, hi in intervals:
        if math.isinf(lo):
            raise ValueError("lower integration limit must be finite")
        if math.isinf(hi):
            res = _half_line(f, lo, scale, settings, points)
        else:
            edges = _panel_edges(lo, hi, points, settings.initial_panels)
            res = _adaptive(f, edges, settings)
        total += res.value
        err += res.error_estimate
        evals += res.evaluations
        ok = ok and res.converged
    return QuadratureResult(total, err, evals, ok)


def _half_line(f, lo, scale, settings, points):
    if scale <= 0:
        raise ValueError("half-line scale must be positive")

    def g(t):
        one_minus = 1.0 - t
        w = lo + scale * t / one_minus
        return f(w) * (scale / one_minus**2)

    t_points = None
    if points is not None and len(points):
        p = np.asarray(points, dtype=float)
        p = p[p > lo] - lo
        t_points = p / (p + scale)
    edges = _panel_edges(0.0, 1.0, t_points, settings.initial_panels)
    return _adaptive(g, edges, settings)


# ---------------------------------------------------------------------------
# mode-level helpers (duck-typed on the spectra interface)


def _mode_window(modes, settings):
    if settings.support_window == MAP:
        lo = min(iv[0] for m in modes for iv in m.support())
        width = max(m.width_scale() for m in modes)
        return [(lo, math.inf)], width
    return None, 1.0


def _knots(*modes):
    pts = [m.breakpoints() for m in modes]
    pts = [p for p in pts if p.size]
    return np.concatenate(pts) if pts else None


def inner_product(F, G, settings: QuadratureSettings | None = None) -> QuadratureResult:
    """``<F, G> = int conj(F(w)) G(w) dw`` over the overlap of the supports."""
    settings = settings or DEFAULT_SETTINGS
    window, scale = _mode_window((F, G), settings)
    if window is None:
        window = intersect(F.support(), G.support())
    points = union(F.support(), G.support())
    edge_pts = [x for iv in points for x in iv]
    knots = _knots(F, G)
    if knots is not None:
        edge_pts = np.concatenate([edge_pts, knots])
    return integrate(
        lambda w: np.conj(F.amplitude(w)) * G.amplitude(w),
        window, settings, points=edge_pts, scale=scale,
    )


def l2_distance(F, G, settings: QuadratureSettings | None = None) -> float:
    """``sqrt(int |F - G|^2 dw)`` over the union of both supports."""
    settings = settings or DEFAULT_SETTINGS
    window, scale = _mode_window((F, G), settings)
    if window is None:
        window = union(F.support(), G.support())
    res = integrate(
        lambda w: np.abs(F.amplitude(w) - G.amplitude(w)) ** 2,
        window, settings, points=_knots(F, G), scale=scale,
    )
    if not res.converged:
        raise QuadratureFailure("l2 distance did not converge", res)
    return math.sqrt(max(res.real, 0.0))
