"""Completability residual r(chi^2) for Gaussians at 10 sigma and 30 sigma.

Writes a two-column file (chi^2, r) and prints the eigenvalues at a few
landmark points.  Usage: python scripts/two_mode_residual.py [out.dat]
"""
import sys

import numpy as np

from qredshift.mixer import gram_deficit, gram_schmidt, overlap_block
from qredshift.spectra import GaussianChirp


def main(out="two_mode_residual.dat"):
    basis = gram_schmidt([GaussianChirp(10, 1), GaussianChirp(30, 1)])
    c2 = np.concatenate([1 + np.logspace(-7, -1, 25), np.linspace(1.2, 9, 157)])
    rows = []
    for v in c2:
        gd = gram_deficit(overlap_block(basis, np.sqrt(v)))
        rows.append((v, gd.residual))
    np.savetxt(out, rows, header="chi_squared residual")
    for v in (1 + 1e-4, 2.9, 3.0, 3.1, 4.0, 9.0):
        gd = gram_deficit(overlap_block(basis, np.sqrt(v)))
        print(f"chi^2={v:<8g} r={gd.residual:.6f} lambda={np.array2string(gd.eigenvalues, precision=6)}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
