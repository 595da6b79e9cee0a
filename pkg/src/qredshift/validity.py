"""Where the single-environment model holds: chi scans, boundary search, parameter maps."""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import quad
from .errors import BracketInvalid, QRedshiftError, QuadratureFailure
from .mixer import EIGEN_FLOOR, BasisSet, assemble, gram_deficit, gram_schmidt, overlap_block
from .spectra import GaussianChirp, RedshiftFactor, SpectralMode, as_chi, mean_frequency

SCAN_HEADER = ("chi", "residual", "deficit", "min_eig", "converged")
PARAMS_HEADER = ("p1", "p2", "chi", "residual", "pass")

# Bisection stops at hi - lo <= rel_width * chi_star.
DEFAULT_REL_WIDTH = 1e-3
MONOTONE_SAMPLES = 8


def _serial() -> bool:
    return os.environ.get("QREDSHIFT_NO_PARALLEL", "") == "1"


def _ordered_map(fn, items, workers):
    items = list(items)
    if workers is None or workers <= 1 or _serial() or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ScanRecord:
    chi: float
    residual: float
    deficit: float
    min_eigenvalue: float
    leakage: float
    magnitudes: tuple[float, ...]
    wall_time: float
    converged: bool
    error: str = ""

    def csv_row(self) -> list[str]:
        return [repr(self.chi), repr(self.residual), repr(self.deficit),
                repr(self.min_eigenvalue), "true" if self.converged else "false"]


def _scan_point(args) -> ScanRecord:
    basis, chi, tolerance, settings, eig_floor = args
    t0 = time.perf_counter()
    try:
        A = overlap_block(basis, chi, settings)
        gd = gram_deficit(A, tolerance, eig_floor)
        forced = assemble(A, gd, chi)
        return ScanRecord(
            chi=float(chi), residual=gd.residual, deficit=forced.deficit,
            min_eigenvalue=gd.min_eigenvalue, leakage=gd.leakage,
            magnitudes=tuple(float(abs(a)) for a in np.diag(A)),
            wall_time=time.perf_counter() - t0, converged=True,
        )
    except QuadratureFailure as exc:
        nan = float("nan")
        return ScanRecord(float(chi), nan, nan, nan, nan, (), time.perf_counter() - t0, False, str(exc))


def scan_chi(
    basis: BasisSet,
    chi_grid: Sequence[float],
    tolerance: float = 1e-3,
    *,
    workers: int | None = None,
    settings: quad.QuadratureSettings | None = None,
    eig_floor: float = EIGEN_FLOOR,
) -> list[ScanRecord]:
    """One record per grid point, in grid order.

    ``deficit`` is the unitarity deficit of the rank-one completion forced at
    every point, so it is defined even where ``residual`` exceeds ``tolerance``.
    Quadrature failures are recorded with ``converged=False``.
    """
    grid = [as_chi(c).chi for c in chi_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("chi grid must be sorted")
    return _ordered_map(_scan_point, [(basis, c, tolerance, settings, eig_floor) for c in grid], workers)


def residual_at(basis: BasisSet, chi, settings=None, eig_floor: float = EIGEN_FLOOR) -> float:
    return gram_deficit(overlap_block(basis, chi, settings), eig_floor=eig_floor).residual


@dataclass(frozen=True)
class BoundaryResult:
    chi_star: float
    bracket: tuple[float, float]
    iterations: int
    threshold: float
    monotone_in_bracket: bool
    samples: tuple[tuple[float, float], ...] = field(default=())


def find_boundary(
    basis: BasisSet,
    threshold: float,
    bracket: tuple[float, float],
    *,
    rel_width: float = DEFAULT_REL_WIDTH,
    settings: quad.QuadratureSettings | None = None,
    eig_floor: float = EIGEN_FLOOR,
    max_iter: int = 200,
) -> BoundaryResult:
    """Bisect ``chi`` for the first point where ``r`` reaches ``threshold``.

    ``r`` is sampled at 8 interior points; the search starts in the first
    sub-interval whose upper end reaches the threshold, so for non-monotone
    ``r`` the crossing nearest the low end is returned.
    """
    lo, hi = (as_chi(b).chi for b in bracket)
    if not lo < hi:
        raise BracketInvalid("bracket must satisfy lo < hi")

    def r(c):
        return residual_at(basis, c, settings, eig_floor)

    r_lo, r_hi = r(lo), r(hi)
    if not (r_lo < threshold <= r_hi):
        raise BracketInvalid(
            f"need r(lo) < threshold <= r(hi); got r({lo:g})={r_lo:.6g}, r({hi:g})={r_hi:.6g}, "
            f"threshold={threshold:g}")

    xs = np.linspace(lo, hi, MONOTONE_SAMPLES + 2)
    rs = [r_lo] + [r(x) for x in xs[1:-1]] + [r_hi]
    monotone = all(b >= a for a, b in zip(rs, rs[1:]))
    k = next(i for i in range(1, len(xs)) if rs[i] >= threshold)
    a, b = float(xs[k - 1]), float(xs[k])

    it = 0
    while b - a > rel_width * b:
        if it >= max_iter:
            break
        mid = 0.5 * (a + b)
        if r(mid) >= threshold:
            b = mid
        else:
            a = mid
        it += 1
    return BoundaryResult(0.5 * (a + b), (a, b), it, float(threshold), monotone,
                          tuple(zip(map(float, xs), map(float, rs))))


@dataclass(frozen=True)
class FrequencyEnergyReport:
    chi: RedshiftFactor
    mean_in: float
    mean_out: float
    ratio: float
    z: float
    delta_E_ratio: float


def frequency_energy_report(mode: SpectralMode, chi, settings=None) -> FrequencyEnergyReport:
    """Mean frequency before and after, and ``(E_out - E_in) / E_in``."""
    from .spectra import redshift_transform

    chi = as_chi(chi)
    w_in = mean_frequency(mode, settings)
    w_out = mean_frequency(redshift_transform(mode, chi), settings)
    ratio = w_out / w_in
    return FrequencyEnergyReport(chi, w_in, w_out, ratio, chi.z, ratio - 1.0)


# --- parameter maps ---------------------------------------------------------

def gaussian_pair(omega0_over_sigma: float = 10.0, sigma_phi: float = 0.0,
                  separation: float = 20.0, sigma: float = 1.0) -> list[SpectralMode]:
    """Two Gaussians of width ``sigma`` centred at ``w0`` and ``w0 + separation*sigma``,
    both carrying the linear phase ``phi = sigma_phi / sigma``."""
    w0 = omega0_over_sigma * sigma
    phi = sigma_phi / sigma
    return [GaussianChirp(w0, sigma, phi), GaussianChirp(w0 + separation * sigma, sigma, phi)]


TEMPLATES: dict[str, Callable[..., list[SpectralMode]]] = {"gaussian_pair": gaussian_pair}


@dataclass(frozen=True)
class ParameterRecord:
    p1: float
    p2: float
    chi: float
    residual: float
    passed: bool
    magnitudes: tuple[float, ...]
    error: str = ""

    def csv_row(self) -> list[str]:
        return [repr(self.p1), repr(self.p2), repr(self.chi), repr(self.residual),
                "true" if self.passed else "false"]


def _param_point(args) -> ParameterRecord:
    template, fixed, n1, v1, n2, v2, chi, threshold, settings, eig_floor = args
    try:
        basis = gram_schmidt(TEMPLATES[template](**{**fixed, n1: v1, n2: v2}), settings)
        rec = _scan_point((basis, chi, threshold, settings, eig_floor))
        if not rec.converged:
            return ParameterRecord(v1, v2, chi, float("nan"), False, (), rec.error)
        return ParameterRecord(v1, v2, chi, rec.residual, rec.residual <= threshold, rec.magnitudes)
    except (QRedshiftError, ValueError) as exc:
        return ParameterRecord(v1, v2, chi, float("nan"), False, (), str(exc))


def scan_parameters(
    template: str,
    p1: tuple[str, Sequence[float]],
    p2: tuple[str, Sequence[float]],
    chi,
    threshold: float = 1e-3,
    *,
    fixed: dict | None = None,
    workers: int | None = None,
    settings: quad.QuadratureSettings | None = None,
    eig_floor: float = EIGEN_FLOOR,
) -> list[ParameterRecord]:
    """Residual at fixed ``chi`` over the product grid ``p1 x p2`` (p1 outer).

    ``fixed`` supplies the remaining template arguments.
    """
    if template not in TEMPLATES:
        raise ValueError(f"unknown template {template!r}")
    (n1, vals1), (n2, vals2) = p1, p2
    if n1 == n2:
        raise ValueError("the two grid parameters must differ")
    for v in (*vals1, *vals2):
        if not math.isfinite(v):
            raise ValueError("parameter grid values must be finite")
    c = as_chi(chi).chi
    fixed = dict(fixed or {})
    jobs = [(template, fixed, n1, float(a), n2, float(b), c, threshold, settings, eig_floor)
            for a in vals1 for b in vals2]
    return _ordered_map(_param_point, jobs, workers)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def scan_csv(records: Sequence[ScanRecord]) -> str:
    return _csv(SCAN_HEADER, (r.csv_row() for r in records))


def parameters_csv(records: Sequence[ParameterRecord]) -> str:
    return _csv(PARAMS_HEADER, (r.csv_row() for r in records))
