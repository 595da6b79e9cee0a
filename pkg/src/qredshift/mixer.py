"""N modes of interest plus one environment mode: the redshift mixing matrix.

For an orthonormal basis F_1..F_N the transformed-overlap block is
A_nm = <F_n'|F_m>.  A single environment mode can complete A to a unitary
(N+1)x(N+1) matrix iff the Gram deficit G = I - A A^H is (numerically) rank
one; the completability residual

    r = sum_{i>=2} lambda_i / sum_i lambda_i

measures how far G is from that.  Failure to complete is returned as data.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import quad
from .errors import CompletionFailed, LinearDependence, QuadratureFailure
from .overlap import overlap_exact
from .spectra import (RedshiftFactor, SpectralMode, Superposition, as_chi, normalize,
                      redshift_transform)

ORTHONORMAL_TOL = 1e-8
# Eigenvalues of G below this are treated as zero (quadrature noise in A A^H).
EIGEN_FLOOR = 1e-9
COMPLETION_DEFICIT_TOL = 1e-8
DEFAULT_TOLERANCE = 1e-3
AMBIGUITY_BAND = 1e-12


@dataclass(frozen=True, eq=False)
class BasisSet:
    modes: tuple[SpectralMode, ...]
    overlaps: np.ndarray

    def __post_init__(self):
        n = len(self.modes)
        if self.overlaps.shape != (n, n):
            raise ValueError("overlap matrix shape does not match the number of modes")
        err = np.max(np.abs(self.overlaps - np.eye(n))) if n else 0.0
        if err > ORTHONORMAL_TOL:
            raise LinearDependence(f"basis is not orthonormal (max |<Fj,Fk> - delta| = {err:.3g})")

    @property
    def size(self) -> int:
        return len(self.modes)

    @classmethod
    def from_modes(cls, modes: Sequence[SpectralMode], settings=None) -> "BasisSet":
        modes = tuple(modes)
        return cls(modes, gram_matrix(modes, settings))

    def permuted(self, order: Sequence[int]) -> "BasisSet":
        order = list(order)
        return BasisSet(tuple(self.modes[i] for i in order), self.overlaps[np.ix_(order, order)])


def _ip(f, g, settings):
    res = quad.inner_product(f, g, settings)
    if not res.converged:
        raise QuadratureFailure("inner product did not converge", res)
    return res.value


def gram_matrix(modes: Sequence[SpectralMode], settings=None) -> np.ndarray:
    n = len(modes)
    out = np.empty((n, n), dtype=complex)
    for j in range(n):
        for k in range(j, n):
            out[j, k] = _ip(modes[j], modes[k], settings)
            out[k, j] = np.conj(out[j, k])
    return out


def gram_schmidt(raw_modes: Sequence[SpectralMode], settings=None, *, drop_below: float = 1e-15) -> BasisSet:
    """Modified Gram-Schmidt with one reorthogonalization pass.

    Projections smaller than ``drop_below`` are skipped so already-orthogonal
    modes keep their original family type.
    """
    basis: list[SpectralMode] = []
    for idx, raw in enumerate(raw_modes):
        norm0 = math.sqrt(max(_ip(raw, raw, settings).real, 0.0))
        if norm0 == 0.0:
            raise LinearDependence(f"mode {idx} has zero norm")
        v = raw
        for _ in range(2):
            for e in basis:
                c = _ip(e, v, settings)
                if abs(c) > drop_below:
                    v = Superposition(((1.0, v), (-c, e)))
        norm = math.sqrt(max(_ip(v, v, settings).real, 0.0))
        if norm < 1e-10 * norm0:
            raise LinearDependence(f"mode {idx} is linearly dependent on the preceding modes")
        basis.append(normalize(v, settings))
    return BasisSet.from_modes(basis, settings)


def overlap_block(basis: BasisSet, chi, settings=None) -> np.ndarray:
    """``A[n, m] = <F_n'|F_m>`` with ``F_n'`` the redshifted basis mode."""
    chi = as_chi(chi)
    n = basis.size
    A = np.empty((n, n), dtype=complex)
    for i, f in enumerate(basis.modes):
        fp = redshift_transform(f, chi)
        for j, g in enumerate(basis.modes):
            A[i, j] = _ip(fp, g, settings)
    return A


@dataclass(frozen=True, eq=False)
class GramDeficit:
    G: np.ndarray
    eigenvalues: np.ndarray
    residual: float
    min_eigenvalue: float
    max_eigenvalue: float
    leakage: float
    tolerance: float
    ambiguous: bool

    @property
    def completable(self) -> bool:
        return self.residual <= self.tolerance


def gram_deficit(A: np.ndarray, tolerance: float = DEFAULT_TOLERANCE, eig_floor: float = EIGEN_FLOOR) -> GramDeficit:
    """Eigen-analysis of ``G = I - A A^H``.

    ``leakage`` is ``sum_{i>=2} lambda_i``: probability that the N modes lose
    into directions a single environment mode cannot hold.
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    G = np.eye(n) - A @ A.conj().T
    G = 0.5 * (G + G.conj().T)
    lam = np.linalg.eigvalsh(G)[::-1]
    clipped = np.where(lam > eig_floor, lam, 0.0)
    total = clipped.sum()
    rest = clipped[1:].sum()
    r = float(rest / max(total, 1e-300))
    return GramDeficit(
        G=G, eigenvalues=lam, residual=r, min_eigenvalue=float(lam[-1]),
        max_eigenvalue=float(lam[0]), leakage=float(rest), tolerance=tolerance,
        ambiguous=abs(r - tolerance) <= AMBIGUITY_BAND,
    )


@dataclass(frozen=True, eq=False)
class MixerMatrix:
    chi: RedshiftFactor | None
    entries: np.ndarray
    deficit: float
    completion_residual: float
    completed: bool
    global_phase: float = 0.0
    gram: GramDeficit | None = None

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]

    def full(self) -> np.ndarray:
        """Entries with the factored global phase restored."""
        return cmath.exp(1j * self.global_phase) * self.entries


def unitarity_deficit(U: np.ndarray) -> float:
    """``||U U^H - I||_F``."""
    U = np.asarray(U, dtype=complex)
    return float(np.linalg.norm(U @ U.conj().T - np.eye(U.shape[0])))


def _environment_column(gd: GramDeficit) -> np.ndarray:
    lam, vecs = np.linalg.eigh(gd.G)
    v = vecs[:, -1]
    k = int(np.argmax(np.abs(v)))
    v = v * np.exp(-1j * np.angle(v[k]))
    return math.sqrt(max(lam[-1], 0.0)) * v


def _environment_row(rows: np.ndarray) -> np.ndarray:
    # unit vector w with rows @ conj(w) = 0, oriented so that w[-1] >= 0
    _, _, vh = np.linalg.svd(rows)
    w = vh[-1]
    anchor = w[-1] if abs(w[-1]) > 1e-300 else w[int(np.argmax(np.abs(w)))]
    return w * np.exp(-1j * np.angle(anchor))


def assemble(A: np.ndarray, gd: GramDeficit, chi=None) -> MixerMatrix:
    """Rank-one completion from the leading eigenpair of G, regardless of r."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    b = _environment_column(gd)
    rows = np.hstack([A, b[:, None]])
    U = np.vstack([rows, _environment_row(rows)[None, :]])
    deficit = unitarity_deficit(U)
    ok = gd.completable and deficit <= COMPLETION_DEFICIT_TOL
    return MixerMatrix(as_chi(chi) if chi is not None else None, U, deficit, gd.residual, ok, 0.0, gd)


def complete_with_environment(
    A: np.ndarray,
    tolerance: float = DEFAULT_TOLERANCE,
    *,
    chi=None,
    eig_floor: float = EIGEN_FLOOR,
) -> MixerMatrix | GramDeficit:
    """Unitary completion of ``A`` with one environment mode, or the deficit report.

    The environment column is ``sqrt(lambda_1) v_1`` (largest entry of
    ``v_1`` real positive); the environment row is the unit vector orthogonal
    to the first N rows with ``U_perp,perp >= 0``.
    """
    A = np.asarray(A, dtype=complex)
    row_norms = np.sum(np.abs(A) ** 2, axis=1)
    if np.any(row_norms > 1.0 + 1e-9):
        raise ValueError("rows of the overlap block must have norm <= 1")
    gd = gram_deficit(A, tolerance, eig_floor)
    if not gd.completable:
        return gd
    return assemble(A, gd, chi)


def beam_splitter_angles(U: np.ndarray) -> dict:
    """``psi, theta, phi1, phi2`` of a 2x2 unitary in the form
    ``e^{i psi} [[cos t, e^{i phi1} sin t], [-e^{i phi2} sin t, e^{i(phi1-phi2)} cos t]]``."""
    U = np.asarray(U, dtype=complex)
    c = abs(U[0, 0])
    theta = math.acos(min(max(c, 0.0), 1.0))
    psi = cmath.phase(U[0, 0]) if c > 0 else cmath.phase(U[1, 0] * U[0, 1] * -1) / 2
    phi1 = cmath.phase(U[0, 1]) - psi if abs(U[0, 1]) > 0 else 0.0
    phi2 = cmath.phase(-U[1, 0]) - psi if abs(U[1, 0]) > 0 else 0.0
    return {"psi": psi, "theta": theta, "phi1": phi1, "phi2": phi2}


def single_mode_matrix(mode: SpectralMode, chi, settings=None) -> MixerMatrix:
    """2x2 mixer for one mode with the phase of ``Delta`` factored out.

    ``entries[0, 0] = cos(theta) = |Delta|`` and ``full()`` restores the phase.
    """
    chi = as_chi(chi)
    ov = overlap_exact(mode, chi, settings)
    A = np.array([[min(ov.magnitude, 1.0)]], dtype=complex)
    m = complete_with_environment(A, chi=chi)
    assert isinstance(m, MixerMatrix)  # N = 1 always completes
    return MixerMatrix(chi, m.entries, m.deficit, m.completion_residual, m.completed,
                       ov.phase, m.gram)


@dataclass(frozen=True, eq=False)
class PerturbativeGenerator:
    matrix: np.ndarray
    epsilons: tuple[float, ...]
    anti_hermiticity: float
    diagonal_real_ratio: float
    forced: bool


def perturbative_generator(
    basis: BasisSet,
    epsilons: Sequence[float] = (1e-4, 2e-4, 4e-4),
    tolerance: float = DEFAULT_TOLERANCE,
    settings=None,
    *,
    force: bool = False,
) -> PerturbativeGenerator:
    """``M`` in ``U(1 + eps) ~ 1 + eps M`` from a linear fit of ``(U - 1)/eps``.

    With ``force=True`` the rank-one completion is used even where the single
    environment mode is not exact; otherwise a failed completion raises.
    """
    eps = np.asarray(epsilons, dtype=float)
    if eps.size < 2:
        raise ValueError("need at least two epsilon values")
    samples = []
    for e in eps:
        A = overlap_block(basis, 1.0 + e, settings)
        gd = gram_deficit(A, tolerance)
        if not gd.completable and not force:
            raise CompletionFailed(f"single-environment completion fails at eps={e:g} (r={gd.residual:.3g})", gd)
        U = assemble(A, gd, 1.0 + e).entries
        samples.append((U - np.eye(U.shape[0])) / e)
    D = np.stack(samples)
    n = D.shape[1]
    design = np.vstack([np.ones_like(eps), eps]).T
    coef, *_ = np.linalg.lstsq(design, D.reshape(eps.size, -1), rcond=None)
    M = coef[0].reshape(n, n)
    norm = np.linalg.norm(M)
    scale = norm if norm > 0 else 1.0
    anti = float(np.linalg.norm(M + M.conj().T) / scale)
    diag = float(np.max(np.abs(np.diag(M).real)) / scale)
    return PerturbativeGenerator(M, tuple(float(e) for e in eps), anti, diag, force)
