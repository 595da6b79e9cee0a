"""|Delta| as a function of an added linear phase c for the w0/sigma = 10 Gaussian.

For a real non-negative spectrum the integrand of <F'|F> is non-negative, so
any added phase can only cancel part of it: the landscape peaks at c = 0.
Usage: python scripts/phase_landscape.py [eps] [out.dat]
"""
import sys

import numpy as np

from qredshift.overlap import functionals, optimize_linear_phase, overlap_exact
from qredshift.spectra import GaussianChirp, with_linear_phase


def main(eps="1e-2", out="phase_landscape.dat"):
    eps = float(eps)
    g = GaussianChirp(10, 1)
    cs = np.linspace(-1.0, 1.0, 201)
    mags = [overlap_exact(with_linear_phase(g, c), 1 + eps).magnitude for c in cs]
    np.savetxt(out, np.column_stack([cs, mags]), header="c magnitude")
    res = optimize_linear_phase(g, 1 + eps)
    f = functionals(g)
    print(f"C2 (analytic)            = {f.second_order_coefficient:.6f}")
    print(f"(1-|Delta|)/eps^2 at c=0 = {res.baseline.deficit_coefficient():.6f}")
    print(f"optimizer c*             = {res.c_star:g} -> {res.achieved.deficit_coefficient():.6f}")
    print(f"c = -kappa_opt/w_bar     = {res.c_analytic:.6f} -> {res.analytic.deficit_coefficient():.6f}")
    print(f"argmax over grid         = {cs[int(np.argmax(mags))]:g}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
