"""Command-line front end: ``qredshift <subcommand> --config run.yaml``.

Exit codes: 0 success, 2 configuration or input error, 3 quadrature
non-convergence, 4 completion failure on ``matrix --require-unitary``.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__, mixer, overlap, quad, spectra, validity
from .errors import ConfigError, OptimizationNotConverged, QRedshiftError, QuadratureFailure

EXIT_OK, EXIT_CONFIG, EXIT_QUADRATURE, EXIT_COMPLETION = 0, 2, 3, 4

SUBCOMMANDS = ("overlap", "functionals", "matrix", "scan", "boundary", "params", "freq",
               "optimize-phase")

# ---------------------------------------------------------------------------
# configuration


def _where(node):
    m = node.start_mark
    return m.line + 1, m.column + 1


def _fail(node, message):
    line, col = _where(node) if node is not None else (None, None)
    return ConfigError(message, line, col)


class _Reader:
    """Typed access to a YAML node tree, with strict key checking."""

    def __init__(self, text: str):
        self._loader = yaml.SafeLoader(text)
        try:
            self.root = self._loader.get_single_node()
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark
            raise ConfigError(exc.problem or str(exc),
                              mark.line + 1 if mark else None, mark.column + 1 if mark else None) from None
        if self.root is None:
            raise ConfigError("configuration is empty", 1, 1)

    def mapping(self, node, allowed, required=()):
        if not isinstance(node, yaml.MappingNode):
            raise _fail(node, "expected a mapping")
        out = {}
        for knode, vnode in node.value:
            key = self.scalar(knode)
            if key not in allowed:
                raise _fail(knode, f"unknown key {key!r} (allowed: {', '.join(sorted(allowed))})")
            if key in out:
                raise _fail(knode, f"duplicate key {key!r}")
            out[key] = vnode
        for key in required:
            if key not in out:
                raise _fail(node, f"missing required key {key!r}")
        return out

    def sequence(self, node):
        if not isinstance(node, yaml.SequenceNode):
            raise _fail(node, "expected a list")
        return list(node.value)

    def scalar(self, node):
        if not isinstance(node, yaml.ScalarNode):
            raise _fail(node, "expected a scalar")
        return self._loader.construct_object(node)

    def number(self, node, *, positive=False):
        v = self.scalar(node)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise _fail(node, f"expected a number, got {v!r}")
        v = float(v)
        if not math.isfinite(v):
            raise _fail(node, "number must be finite")
        if positive and v <= 0:
            raise _fail(node, "number must be positive")
        return v

    def integer(self, node):
        v = self.scalar(node)
        if isinstance(v, bool) or not isinstance(v, int):
            raise _fail(node, f"expected an integer, got {v!r}")
        return v

    def boolean(self, node):
        v = self.scalar(node)
        if not isinstance(v, bool):
            raise _fail(node, f"expected true/false, got {v!r}")
        return v

    def string(self, node, choices=None):
        v = self.scalar(node)
        if not isinstance(v, str):
            raise _fail(node, f"expected a string, got {v!r}")
        if choices is not None and v not in choices:
            raise _fail(node, f"expected one of {', '.join(choices)}, got {v!r}")
        return v

    def complex_(self, node):
        if isinstance(node, yaml.MappingNode):
            m = self.mapping(node, {"re", "im"})
            return complex(self.number(m["re"]) if "re" in m else 0.0,
                           self.number(m["im"]) if "im" in m else 0.0)
        return complex(self.number(node))

    def numbers(self, node, **kw):
        return [self.number(n, **kw) for n in self.sequence(node)]


GAUSSIAN_KEYS = {"type", "omega0", "sigma", "phi", "beta", "amplitude_factor", "allow_low_frequency"}
COMB_KEYS = {"type", "teeth", "allow_low_frequency"}
TOOTH_KEYS = {"center", "width", "weight"}
SAMPLED_KEYS = {"type", "omega", "values", "interpolation", "allow_low_frequency"}
QUAD_KEYS = {"rel_tol", "abs_tol", "max_subdivisions", "support_window"}
GRID_KEYS = {"variable", "values", "start", "stop", "num"}
TOP_KEYS = {"unit_scale", "modes", "quadrature", "threshold", "output", "scan", "boundary", "params"}


@dataclass(frozen=True)
class Grid:
    variable: str = "chi"
    values: tuple[float, ...] = ()

    def chis(self) -> list[float]:
        return [math.sqrt(v) if self.variable == "chi_squared" else v for v in self.values]


@dataclass(frozen=True)
class Config:
    """Validated run configuration.  ``modes`` holds the raw descriptions in user
    units; ``build_modes`` applies ``unit_scale`` and constructs them."""

    modes: tuple[dict, ...]
    unit_scale: float = 1.0
    quadrature: quad.QuadratureSettings = quad.DEFAULT_SETTINGS
    threshold: float = 1e-3
    output_path: str | None = None
    output_format: str = "json"
    scan: Grid | None = None
    boundary: tuple[float, float, float] | None = None
    params: dict | None = None

    def to_dict(self) -> dict:
        q = self.quadrature
        d: dict[str, Any] = {
            "unit_scale": self.unit_scale,
            "modes": [dict(m) for m in self.modes],
            "quadrature": {"rel_tol": q.rel_tol, "abs_tol": q.abs_tol,
                           "max_subdivisions": q.max_subdivisions,
                           "support_window": q.support_window},
            "threshold": self.threshold,
            "output": {"format": self.output_format},
        }
        if self.output_path is not None:
            d["output"]["path"] = self.output_path
        if self.scan is not None:
            d["scan"] = {"variable": self.scan.variable, "values": list(self.scan.values)}
        if self.boundary is not None:
            lo, hi, rw = self.boundary
            d["boundary"] = {"lo": lo, "hi": hi, "rel_width": rw}
        if self.params is not None:
            d["params"] = json.loads(json.dumps(self.params))
        return d

    def digest(self) -> str:
        canon = json.dumps(_jsonable(self.to_dict()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def build_modes(self) -> list[spectra.SpectralMode]:
        return [build_mode(m, self.unit_scale) for m in self.modes]


def _complex_out(z: complex):
    return z.real if z.imag == 0 else {"re": z.real, "im": z.imag}


def _parse_mode(r: _Reader, node) -> dict:
    if not isinstance(node, yaml.MappingNode):
        raise _fail(node, "expected a mode mapping")
    tnode = next((v for k, v in node.value if r.scalar(k) == "type"), None)
    if tnode is None:
        raise _fail(node, "missing required key 'type'")
    kind = r.string(tnode, ("GaussianChirp", "Comb", "Sampled"))
    if kind == "GaussianChirp":
        m = r.mapping(node, GAUSSIAN_KEYS, ("omega0", "sigma"))
        d = {"type": kind, "omega0": r.number(m["omega0"]), "sigma": r.number(m["sigma"], positive=True)}
        for key in ("phi", "beta"):
            if key in m:
                d[key] = r.number(m[key])
        if "amplitude_factor" in m:
            d["amplitude_factor"] = _complex_out(r.complex_(m["amplitude_factor"]))
    elif kind == "Comb":
        m = r.mapping(node, COMB_KEYS, ("teeth",))
        teeth = []
        for tn in r.sequence(m["teeth"]):
            t = r.mapping(tn, TOOTH_KEYS, ("center", "width"))
            tooth = {"center": r.number(t["center"]), "width": r.number(t["width"], positive=True)}
            if "weight" in t:
                tooth["weight"] = _complex_out(r.complex_(t["weight"]))
            teeth.append(tooth)
        if not teeth:
            raise _fail(m["teeth"], "a comb needs at least one tooth")
        d = {"type": kind, "teeth": teeth}
    else:
        m = r.mapping(node, SAMPLED_KEYS, ("omega", "values"))
        omega = r.numbers(m["omega"])
        values = [_complex_out(r.complex_(v)) for v in r.sequence(m["values"])]
        if len(values) != len(omega):
            raise _fail(m["values"], "values and omega must have the same length")
        d = {"type": kind, "omega": omega, "values": values}
        if "interpolation" in m:
            d["interpolation"] = r.string(m["interpolation"], (spectra.CUBIC_POLAR,))
    if "allow_low_frequency" in m:
        d["allow_low_frequency"] = r.boolean(m["allow_low_frequency"])
    return d


def _cx(v) -> complex:
    return complex(v["re"], v["im"]) if isinstance(v, dict) else complex(v)


def build_mode(d: dict, unit_scale: float = 1.0) -> spectra.SpectralMode:
    """Construct and normalize a mode from its description.

    Frequencies are multiplied by ``unit_scale``; ``phi`` and ``beta`` are
    divided by ``unit_scale`` and ``unit_scale**2``.
    """
    u = unit_scale
    low = d.get("allow_low_frequency", False)
    kind = d["type"]
    if kind == "GaussianChirp":
        mode = spectra.GaussianChirp(
            d["omega0"] * u, d["sigma"] * u, d.get("phi", 0.0) / u, d.get("beta", 0.0) / u**2,
            _cx(d.get("amplitude_factor", 1.0)), allow_low_frequency=low)
    elif kind == "Comb":
        teeth = tuple(spectra.Tooth(t["center"] * u, t["width"] * u, _cx(t.get("weight", 1.0)))
                      for t in d["teeth"])
        mode = spectra.Comb(teeth, allow_low_frequency=low)
    else:
        mode = spectra.Sampled(np.asarray(d["omega"], dtype=float) * u,
                               np.asarray([_cx(v) for v in d["values"]]) / math.sqrt(u),
                               d.get("interpolation", spectra.CUBIC_POLAR), allow_low_frequency=low)
    return spectra.normalize(mode)


def _grid(r: _Reader, node) -> Grid:
    m = r.mapping(node, GRID_KEYS)
    var = r.string(m["variable"], ("chi", "chi_squared")) if "variable" in m else "chi"
    if "values" in m:
        if {"start", "stop", "num"} & m.keys():
            raise _fail(node, "give either values or start/stop/num, not both")
        vals = r.numbers(m["values"], positive=True)
    else:
        for k in ("start", "stop", "num"):
            if k not in m:
                raise _fail(node, f"missing required key {k!r}")
        n = r.integer(m["num"])
        if n < 1:
            raise _fail(m["num"], "num must be at least 1")
        vals = [float(v) for v in np.linspace(r.number(m["start"], positive=True),
                                              r.number(m["stop"], positive=True), n)]
    if any(b < a for a, b in zip(vals, vals[1:])):
        raise _fail(node, "grid values must be sorted")
    return Grid(var, tuple(vals))


def _parse_params(r: _Reader, node) -> dict:
    m = r.mapping(node, {"template", "p1", "p2", "chi", "chi_squared", "fixed"}, ("p1", "p2"))
    template = r.string(m["template"], tuple(validity.TEMPLATES)) if "template" in m else "gaussian_pair"
    out: dict[str, Any] = {"template": template}
    for key in ("p1", "p2"):
        pm = r.mapping(m[key], {"name", "values"}, ("name", "values"))
        out[key] = {"name": r.string(pm["name"], ("omega0_over_sigma", "sigma_phi", "separation", "sigma")),
                    "values": r.numbers(pm["values"])}
    if out["p1"]["name"] == out["p2"]["name"]:
        raise _fail(m["p2"], "p1 and p2 must name different parameters")
    if "chi" in m and "chi_squared" in m:
        raise _fail(node, "give chi or chi_squared, not both")
    if "chi" in m:
        out["chi"] = r.number(m["chi"], positive=True)
    elif "chi_squared" in m:
        out["chi"] = math.sqrt(r.number(m["chi_squared"], positive=True))
    if "fixed" in m:
        fm = r.mapping(m["fixed"], {"omega0_over_sigma", "sigma_phi", "separation", "sigma"})
        out["fixed"] = {k: r.number(v) for k, v in fm.items()}
    return out


def parse_config_text(text: str) -> Config:
    r = _Reader(text)
    top = r.mapping(r.root, TOP_KEYS, ("modes",))
    unit_scale = r.number(top["unit_scale"], positive=True) if "unit_scale" in top else 1.0

    mode_nodes = r.sequence(top["modes"])
    modes = []
    for n in mode_nodes:
        d = _parse_mode(r, n)
        try:
            build_mode(d, unit_scale)
        except (QRedshiftError, ValueError) as exc:
            raise _fail(n, f"invalid mode: {exc}") from None
        modes.append(d)

    q = quad.DEFAULT_SETTINGS
    if "quadrature" in top:
        qm = r.mapping(top["quadrature"], QUAD_KEYS)
        try:
            q = quad.QuadratureSettings(
                rel_tol=r.number(qm["rel_tol"], positive=True) if "rel_tol" in qm else q.rel_tol,
                abs_tol=r.number(qm["abs_tol"], positive=True) if "abs_tol" in qm else q.abs_tol,
                max_subdivisions=r.integer(qm["max_subdivisions"]) if "max_subdivisions" in qm else q.max_subdivisions,
                support_window=(r.string(qm["support_window"], (quad.TRUNCATE, quad.MAP))
                                if "support_window" in qm else q.support_window),
            )
        except ValueError as exc:
            raise _fail(top["quadrature"], str(exc)) from None

    threshold = r.number(top["threshold"], positive=True) if "threshold" in top else 1e-3
    out_path, out_fmt = None, "json"
    if "output" in top:
        om = r.mapping(top["output"], {"path", "format"})
        if "path" in om:
            out_path = r.string(om["path"])
        if "format" in om:
            out_fmt = r.string(om["format"], ("json", "csv"))

    scan = _grid(r, top["scan"]) if "scan" in top else None
    boundary = None
    if "boundary" in top:
        bm = r.mapping(top["boundary"], {"lo", "hi", "rel_width"}, ("lo", "hi"))
        lo, hi = r.number(bm["lo"], positive=True), r.number(bm["hi"], positive=True)
        if not lo < hi:
            raise _fail(top["boundary"], "boundary bracket needs lo < hi")
        rw = r.number(bm["rel_width"], positive=True) if "rel_width" in bm else validity.DEFAULT_REL_WIDTH
        boundary = (lo, hi, rw)
    params = _parse_params(r, top["params"]) if "params" in top else None
    return Config(tuple(modes), unit_scale, q, threshold, out_path, out_fmt, scan, boundary, params)


def parse_config(path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)


# ---------------------------------------------------------------------------
# output


def _jsonable(x):
    if isinstance(x, bool) or x is None or isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": format(x.real, ".17g"), "im": format(x.imag, ".17g")}
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, spectra.RedshiftFactor):
        return {"chi": _jsonable(x.chi), "chi_squared": _jsonable(x.chi_squared), "z": _jsonable(x.z)}
    if dataclasses.is_dataclass(x):
        return {f.name: _jsonable(getattr(x, f.name)) for f in dataclasses.fields(x)}
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    raise TypeError(f"cannot serialize {type(x).__name__}")


@dataclass
class OutputDocument:
    command: str
    config_digest: str
    payload: Any
    tool_version: str = __version__
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())

    def to_json(self) -> str:
        doc = {"tool_version": self.tool_version, "config_digest": self.config_digest,
               "command": self.command, "timestamp": self.timestamp,
               "payload": _jsonable(self.payload)}
        return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def emit(doc: OutputDocument, fmt: str, csv_text: str | None = None) -> bytes:
    if fmt == "csv":
        if csv_text is None:
            raise ConfigError(f"command {doc.command!r} has no csv form; use --format json")
        return csv_text.encode("utf-8")
    return doc.to_json().encode("utf-8")


# ---------------------------------------------------------------------------
# argument parsing


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", required=True, metavar="PATH", help="YAML run configuration")
    p.add_argument("--rel-tol", type=float, metavar="X", help="override quadrature relative tolerance")
    p.add_argument("--abs-tol", type=float, metavar="X", help="override quadrature absolute tolerance")
    p.add_argument("--output", metavar="PATH", help="write the result here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), help="output format (csv: scan and params only)")
    return p


def _chi_flags(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--chi", type=float, metavar="X", help="redshift factor chi")
    g.add_argument("--chi-squared", type=float, metavar="X", help="chi^2 = 1 + z")
    p.add_argument("--direction", choices=("alice-to-bob", "bob-to-alice"), default="alice-to-bob",
                   help="bob-to-alice uses 1/chi")


def _mode_flag(p):
    p.add_argument("--mode-index", type=int, default=0, metavar="I",
                   help="which configured mode to use (default 0)")


def _workers(p):
    p.add_argument("--workers", type=int, default=1, metavar="N",
                   help="worker processes (QREDSHIFT_NO_PARALLEL=1 forces serial)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qredshift",
                                     description="Gravitational redshift of photonic spectral modes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = _common()

    p = sub.add_parser("overlap", parents=[common], help="overlap <F'|F> of one mode")
    _chi_flags(p)
    _mode_flag(p)
    p.add_argument("--plot-data", metavar="PATH", help="write 'omega |F|(omega) |F'|(omega)' columns")

    p = sub.add_parser("functionals", parents=[common], help="K, kappa, mu^2 and second-order forms")
    _mode_flag(p)
    p.add_argument("--epsilon", type=float, default=None, metavar="E",
                   help="also evaluate the perturbative overlap at chi = 1 + E")

    p = sub.add_parser("matrix", parents=[common], help="N-mode mixer with one environment mode")
    _chi_flags(p)
    p.add_argument("--tolerance", type=float, metavar="R", help="completability threshold (default: config)")
    p.add_argument("--require-unitary", action="store_true", help="exit 4 if completion fails")

    p = sub.add_parser("scan", parents=[common], help="completability residual over a chi grid")
    p.add_argument("--tolerance", type=float, metavar="R", help="completability threshold (default: config)")
    _workers(p)
    p.add_argument("--plot-data", metavar="PATH", help="write 'chi residual' columns")

    p = sub.add_parser("boundary", parents=[common], help="bisect for the validity boundary chi*")
    p.add_argument("--threshold", type=float, metavar="R", help="residual threshold (default: config)")
    p.add_argument("--lo", type=float, metavar="X", help="bracket low end in chi")
    p.add_argument("--hi", type=float, metavar="X", help="bracket high end in chi")
    p.add_argument("--rel-width", type=float, metavar="W", help="relative bracket width at stop")

    p = sub.add_parser("params", parents=[common], help="residual over a two-parameter grid")
    p.add_argument("--threshold", type=float, metavar="R", help="residual threshold (default: config)")
    _workers(p)

    p = sub.add_parser("freq", parents=[common], help="mean frequency and energy ratio")
    _chi_flags(p)
    _mode_flag(p)

    p = sub.add_parser("optimize-phase", parents=[common], help="maximize |Delta| over a linear phase")
    _chi_flags(p)
    _mode_flag(p)
    p.add_argument("--span", type=float, default=10.0, metavar="S",
                   help="search |c| <= S / rms width (default 10)")
    return parser


# ---------------------------------------------------------------------------
# commands


class _CompletionExit(Exception):
    def __init__(self, payload):
        super().__init__("completion failed")
        self.payload = payload


def _chi(args) -> spectra.RedshiftFactor:
    if args.chi is not None:
        if not args.chi > 0:
            raise ConfigError("--chi must be positive")
        chi = spectra.RedshiftFactor(args.chi)
    else:
        if not args.chi_squared > 0:
            raise ConfigError("--chi-squared must be positive")
        chi = spectra.RedshiftFactor.from_chi_squared(args.chi_squared)
    return chi.inverse() if args.direction == "bob-to-alice" else chi


def _mode(cfg, args):
    modes = cfg.build_modes()
    if not 0 <= args.mode_index < len(modes):
        raise ConfigError(f"--mode-index {args.mode_index} out of range (config has {len(modes)} modes)")
    return modes[args.mode_index]


def _basis(cfg):
    return mixer.gram_schmidt(cfg.build_modes(), cfg.quadrature)


def _write_columns(path, header, rows):
    lines = ["# " + " ".join(header)] + [" ".join(repr(float(v)) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_overlap(cfg, args):
    mode, chi = _mode(cfg, args), _chi(args)
    res = overlap.overlap_exact(mode, chi, cfg.quadrature)
    payload = {"result": res, "perturbative_guard_exceeded": abs(chi.chi - 1) >= overlap.PERTURBATIVE_GUARD}
    if isinstance(mode, spectra.GaussianChirp) and overlap.is_gaussian_closed_form_applicable(mode):
        payload["closed_form"] = overlap.gaussian_closed_form(mode.omega0, mode.sigma, mode.phi, chi)
    if args.plot_data:
        fp = spectra.redshift_transform(mode, chi)
        lo = min(iv[0] for iv in mode.support() + fp.support())
        hi = max(iv[1] for iv in mode.support() + fp.support())
        w = np.linspace(max(lo, 0.0) if mode.allow_low_frequency else lo, hi, 801)
        _write_columns(args.plot_data, ("omega", "abs_F", "abs_F_prime"),
                       zip(w, np.abs(mode.amplitude(w)), np.abs(fp.amplitude(w))))
    return payload, None


def cmd_functionals(cfg, args):
    f = overlap.functionals(_mode(cfg, args))
    payload = {"functionals": f, "second_order_coefficient": f.second_order_coefficient,
               "route_mismatch": f.route_mismatch}
    if args.epsilon is not None:
        payload["perturbative"] = overlap.overlap_perturbative(f, args.epsilon)
    return payload, None


def _gram_payload(gd: mixer.GramDeficit):
    return {"eigenvalues": gd.eigenvalues, "residual": gd.residual, "min_eigenvalue": gd.min_eigenvalue,
            "max_eigenvalue": gd.max_eigenvalue, "leakage": gd.leakage, "tolerance": gd.tolerance,
            "ambiguous": gd.ambiguous, "G": gd.G}


def cmd_matrix(cfg, args):
    basis, chi = _basis(cfg), _chi(args)
    tol = cfg.threshold if args.tolerance is None else args.tolerance
    A = mixer.overlap_block(basis, chi, cfg.quadrature)
    res = mixer.complete_with_environment(A, tol, chi=chi)
    if isinstance(res, mixer.GramDeficit):
        forced = mixer.assemble(A, res, chi)
        payload = {"completed": False, "chi": chi, "overlap_block": A, "gram": _gram_payload(res),
                   "forced_entries": forced.entries, "forced_deficit": forced.deficit}
        if args.require_unitary:
            raise _CompletionExit(payload)
        return payload, None
    return {"completed": res.completed, "chi": chi, "overlap_block": A, "entries": res.entries,
            "deficit": res.deficit, "completion_residual": res.completion_residual,
            "gram": _gram_payload(res.gram)}, None


def _scan_grid(cfg):
    if cfg.scan is None:
        raise ConfigError("config has no 'scan' section")
    return cfg.scan.chis()


def cmd_scan(cfg, args):
    basis = _basis(cfg)
    tol = cfg.threshold if args.tolerance is None else args.tolerance
    recs = validity.scan_chi(basis, _scan_grid(cfg), tol, workers=args.workers, settings=cfg.quadrature)
    if args.plot_data:
        _write_columns(args.plot_data, ("chi", "residual"), ((r.chi, r.residual) for r in recs))
    # wall_time varies between runs and is left out of the document
    rows = [{k: v for k, v in dataclasses.asdict(r).items() if k != "wall_time"} for r in recs]
    return {"tolerance": tol, "records": rows}, validity.scan_csv(recs)


def cmd_boundary(cfg, args):
    basis = _basis(cfg)
    lo, hi, rw = cfg.boundary if cfg.boundary is not None else (None, None, validity.DEFAULT_REL_WIDTH)
    lo = args.lo if args.lo is not None else lo
    hi = args.hi if args.hi is not None else hi
    rw = args.rel_width if args.rel_width is not None else rw
    if lo is None or hi is None:
        raise ConfigError("bracket needs --lo/--hi or a 'boundary' config section")
    thr = cfg.threshold if args.threshold is None else args.threshold
    res = validity.find_boundary(basis, thr, (lo, hi), rel_width=rw, settings=cfg.quadrature)
    return {"boundary": res, "width": res.bracket[1] - res.bracket[0],
            "relative_width": (res.bracket[1] - res.bracket[0]) / res.chi_star}, None


def cmd_params(cfg, args):
    pc = cfg.params
    if pc is None:
        raise ConfigError("config has no 'params' section")
    if "chi" not in pc:
        raise ConfigError("params section needs chi or chi_squared")
    thr = cfg.threshold if args.threshold is None else args.threshold
    recs = validity.scan_parameters(pc["template"], (pc["p1"]["name"], pc["p1"]["values"]),
                                    (pc["p2"]["name"], pc["p2"]["values"]), pc["chi"], thr,
                                    fixed=pc.get("fixed"), workers=args.workers,
                                    settings=cfg.quadrature)
    payload = {"threshold": thr, "p1": pc["p1"]["name"], "p2": pc["p2"]["name"], "records": recs}
    return payload, validity.parameters_csv(recs)


def cmd_freq(cfg, args):
    return {"report": validity.frequency_energy_report(_mode(cfg, args), _chi(args), cfg.quadrature)}, None


def cmd_optimize_phase(cfg, args):
    res = overlap.optimize_linear_phase(_mode(cfg, args), _chi(args), cfg.quadrature, span=args.span)
    eps = res.achieved.chi.chi - 1.0
    payload = {"optimization": res}
    if eps != 0:
        payload["coefficient_achieved"] = res.achieved.deficit_coefficient()
        payload["coefficient_baseline"] = res.baseline.deficit_coefficient()
    return payload, None


COMMANDS = {
    "overlap": cmd_overlap, "functionals": cmd_functionals, "matrix": cmd_matrix, "scan": cmd_scan,
    "boundary": cmd_boundary, "params": cmd_params, "freq": cmd_freq,
    "optimize-phase": cmd_optimize_phase,
}


def _settings_with_overrides(cfg: Config, args) -> Config:
    if args.rel_tol is None and args.abs_tol is None:
        return cfg
    try:
        q = cfg.quadrature.tightened(rel_tol=args.rel_tol, abs_tol=args.abs_tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return dataclasses.replace(cfg, quadrature=q)


def _write(data: bytes, path):
    if path:
        Path(path).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _settings_with_overrides(parse_config(args.config), args)
    except ConfigError as exc:
        print(f"qredshift: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    fmt = args.format or cfg.output_format
    out_path = args.output or cfg.output_path
    digest = cfg.digest()
    try:
        payload, csv_text = COMMANDS[args.command](cfg, args)
        data = emit(OutputDocument(args.command, digest, payload), fmt, csv_text)
    except _CompletionExit as exc:
        _write(emit(OutputDocument(args.command, digest, exc.payload), "json"), out_path)
        print("qredshift: single-environment completion failed", file=sys.stderr)
        return EXIT_COMPLETION
    except (QuadratureFailure, OptimizationNotConverged) as exc:
        print(f"qredshift: did not converge: {exc}", file=sys.stderr)
        return EXIT_QUADRATURE
    except (QRedshiftError, ValueError) as exc:
        print(f"qredshift: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _write(data, out_path)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
