"""Recompute tests/data/oracle_values.json from the mpmath oracles (a few minutes)."""
import itertools
import json
import sys
from pathlib import Path

import mpmath as mp

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
import oracles  # noqa: E402


def c(z):
    return [float(mp.re(z)), float(mp.im(z))]


def main():
    out = {"gaussian_overlap": [], "functionals": {}, "second_order": [], "two_mode": []}
    for chi, x0, sphi in itertools.product((0.5, 0.8, 1.1, 1.5, 2.0), (5, 10, 20), (0, 1, 5)):
        d = oracles.overlap(oracles.gaussian(x0, 1, sphi), chi)
        out["gaussian_overlap"].append({"chi": chi, "omega0_over_sigma": x0, "sigma_phi": sphi,
                                        "delta": c(d), "magnitude": float(abs(d))})
        print("overlap", chi, x0, sphi, mp.nstr(abs(d), 15), flush=True)
    d = oracles.overlap(oracles.gaussian(10, 1), mp.sqrt(2))
    out["gaussian_chi2_2"] = float(abs(d))

    for name in oracles.FAMILY:
        K, mu2, wbar = oracles.functionals(oracles.family_mode(name))
        out["functionals"][name] = {"K": c(K), "mu_squared": float(mu2), "omega_bar": float(wbar)}
        print("functionals", name, mp.nstr(K, 12), mp.nstr(mu2, 12), flush=True)

    f = oracles.gaussian(10, 1, 0.3)
    for eps in ("1e-3", "1e-2"):
        d = oracles.overlap(f, 1 + mp.mpf(eps))
        out["second_order"].append({"epsilon": float(eps), "delta": c(d)})

    pair = [oracles.gaussian(10, 1), oracles.gaussian(30, 1)]
    for chi2 in (1.0001, 3, 4, 9):
        r, lam = oracles.residual(pair, mp.sqrt(chi2))
        out["two_mode"].append({"chi_squared": chi2, "residual": float(r), "eigenvalues": lam})
        print("two-mode", chi2, mp.nstr(r, 12), flush=True)

    oracles.FROZEN.parent.mkdir(exist_ok=True)
    oracles.FROZEN.write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
