"""Validity boundary chi* against the common width of two Gaussians at 10 and 30.

Usage: python scripts/boundary_vs_width.py [threshold]
"""
import sys

from qredshift.mixer import gram_schmidt
from qredshift.spectra import GaussianChirp
from qredshift.validity import find_boundary


def main(threshold="1e-3"):
    thr = float(threshold)
    print("sigma     chi*-1          iterations  monotone")
    for sigma in (2.0, 1.0, 0.5, 0.25):
        basis = gram_schmidt([GaussianChirp(10, sigma), GaussianChirp(30, sigma)])
        b = find_boundary(basis, thr, (1.0, 3.0), rel_width=1e-9)
        print(f"{sigma:<9g} {b.chi_star - 1:<15.6e} {b.iterations:<11d} {b.monotone_in_bracket}")


if __name__ == "__main__":
    main(*sys.argv[1:])
