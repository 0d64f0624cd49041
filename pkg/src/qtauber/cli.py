"""Command-line experiment runner.

Every flag mirrors a key of the optional ``--config`` JSON file; flags win
over file values.  Exit status: 0 when every check passes, 1 when a check
fails (outputs are still written), 2 on invalid input.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from . import mollifier as mol
from . import operators as ops
from . import oscillatory as osc
from . import piecewise_poly as pp
from . import rates
from . import tauber

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


class ConfigError(ValueError):
    pass


INVALID_INPUT = (
    ConfigError,
    pp.InvalidParameter,
    pp.InvalidInterval,
    mol.InvalidDelta,
    mol.ConstructionTooLarge,
    osc.InvalidEpsilon,
    osc.TruncationInfeasible,
    ops.InvalidModel,
    ops.UnknownGallery,
    rates.InvalidRate,
    rates.OutOfDomain,
    json.JSONDecodeError,
    OSError,
)

DEFAULTS = {
    "mollifier": {"ell": 5, "k0": 1, "rtol": 1e-6},
    "coeffs": {"ell": 3, "k0": 1, "eps": "1/5", "nmax": 2000, "tail_order": "best"},
    "kt": {"gallery": "kt_alpha_diag", "alpha": 2.0, "size": 2000, "c": 0.9, "n_min": 1,
           "n_max": tauber.GRID_CAP, "per_decade": 8, "envelope_n_min": 100,
           "trend_sizes": [500, 1000, 2000]},
    "ritt": {"gallery": "ritt_diag", "size": 2000, "n_min": 1, "n_max": tauber.GRID_CAP, "per_decade": 8,
             "window": [100, tauber.GRID_CAP]},
    "e-ritt": {"gallery": "e_ritt_diag", "size": 2000, "angles": ["0", "pi"], "n_min": 1,
               "n_max": tauber.GRID_CAP, "per_decade": 8, "window": [100, tauber.GRID_CAP]},
    "crosscheck": {"gallery": "kt_alpha_diag", "alpha": 2.0, "size": 53, "ell": 3, "k0": 1, "eps": "1/5",
                   "n_list": [0, 5, 50], "tolerance": 1e-6},
    "smooth": {"gallery": "ritt_diag", "size": 2000, "ell": 3, "k0": 1, "eps": ["2/5", "1/5", "1/10", "1/20"],
               "n_min": 1, "n_max": tauber.GRID_CAP, "per_decade": 8, "fraction": tauber.DEFAULT_FRACTION,
               "defect_spread": 4.0},
}


# --------------------------------------------------------------------------
# parsing


def _angle(token) -> float:
    """Angles as numbers or simple multiples of pi: ``pi``, ``-pi/2``, ``2*pi/3``."""
    if isinstance(token, (int, float)):
        return float(token)
    t = str(token).replace(" ", "").lower()
    m = re.fullmatch(r"([+-]?)(?:(\d+(?:\.\d*)?)\*?)?pi(?:/(\d+(?:\.\d*)?))?", t)
    if m:
        sign = -1.0 if m.group(1) == "-" else 1.0
        num = float(m.group(2)) if m.group(2) else 1.0
        den = float(m.group(3)) if m.group(3) else 1.0
        return sign * num * math.pi / den
    try:
        return float(t)
    except ValueError:
        raise ConfigError(f"cannot parse angle {token!r}") from None


def _rational(v):
    try:
        return tauber.as_eps(v) if not isinstance(v, str) else pp.as_rational(v)
    except (ValueError, TypeError, ZeroDivisionError):
        raise ConfigError(f"cannot parse number {v!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    p.add_argument("--config", default=s, help="JSON file with default values for any flag")
    p.add_argument("--threads", type=int, default=s, help="cap on worker threads")
    p.add_argument("--out", default=s, help="primary output file")
    p.add_argument("--report", default=s, help="JSON report file")


def _add_mollifier(p, eps_list: bool = False) -> None:
    s = argparse.SUPPRESS
    p.add_argument("--ell", type=int, default=s)
    p.add_argument("--k0", type=int, default=s)
    if eps_list:
        p.add_argument("--eps", nargs="+", default=s, help="one or more eps values (decimals or p/q)")
    else:
        p.add_argument("--eps", default=s, help="eps as a decimal or p/q")


def _add_operator(p) -> None:
    s = argparse.SUPPRESS
    p.add_argument("--gallery", default=s, choices=sorted(ops.GALLERY))
    p.add_argument("--size", type=int, default=s, help="gallery size K")
    p.add_argument("--alpha", type=float, default=s)
    p.add_argument("--angles", nargs="+", default=s, help="angles of E (radians, or pi, -pi/2, ...)")
    p.add_argument("--dense", action="store_true", default=s, help="conjugate the model into a dense matrix")
    p.add_argument("--operator", default=s, help="JSON operator description file")


def _add_grid(p) -> None:
    s = argparse.SUPPRESS
    p.add_argument("--n-min", dest="n_min", type=int, default=s)
    p.add_argument("--n-max", dest="n_max", type=int, default=s)
    p.add_argument("--per-decade", dest="per_decade", type=int, default=s)
    p.add_argument("--window", nargs=2, type=float, default=s, help="fit window [n_lo, n_hi]")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qtauber", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    s = argparse.SUPPRESS

    p = sub.add_parser("mollifier", help="build a cutoff and verify its properties")
    _add_common(p)
    _add_mollifier(p)
    p.add_argument("--rtol", type=float, default=s)

    p = sub.add_parser("coeffs", help="z and y coefficient sequences with difference bounds")
    _add_common(p)
    _add_mollifier(p)
    p.add_argument("--nmax", type=int, default=s)
    p.add_argument("--tail-order", dest="tail_order", default=s)

    p = sub.add_parser("kt", help="decay of T^n (I - T) against the resolvent envelope")
    _add_common(p)
    _add_operator(p)
    _add_grid(p)
    p.add_argument("--rate", default=s, help='JSON rate spec, e.g. {"kind":"power_law","C":2,"alpha":1}')
    p.add_argument("--c", type=float, nargs="+", default=s)
    p.add_argument("--envelope-n-min", dest="envelope_n_min", type=int, default=s)
    p.add_argument("--exponent-band", dest="exponent_band", nargs=2, type=float, default=s)
    p.add_argument("--trend-sizes", dest="trend_sizes", nargs="*", type=int, default=s,
                   help="kt_alpha_diag sizes for the envelope-constant trend (empty to skip)")

    for name in ("ritt", "e-ritt"):
        p = sub.add_parser(name, help=f"{name} decay experiment")
        _add_common(p)
        _add_operator(p)
        _add_grid(p)
        p.add_argument("--band", nargs=2, type=float, default=s)
        if name == "ritt":
            p.add_argument("--smoothing-ns", dest="smoothing_ns", nargs="*", type=int, default=s)
        else:
            p.add_argument("--partial-sum-n-max", dest="partial_sum_n_max", type=int, default=s)

    p = sub.add_parser("crosscheck", help="convolution versus boundary integral")
    _add_common(p)
    _add_operator(p)
    _add_mollifier(p)
    p.add_argument("--n-list", dest="n_list", nargs="+", type=int, default=s)
    p.add_argument("--tolerance", type=float, default=s)

    p = sub.add_parser("smooth", help="free-mode smoothing with defect report")
    _add_common(p)
    _add_operator(p)
    _add_mollifier(p, eps_list=True)
    _add_grid(p)
    p.add_argument("--fraction", type=float, default=s)
    p.add_argument("--defect-spread", dest="defect_spread", type=float, default=s)
    return ap


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[args.command])
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    path = getattr(args, "config", None)
    if path is not None:
        data = json.loads(Path(path).read_text())
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        data = {k.replace("-", "_"): v for k, v in data.items() if k != "command"}
        cfg.update(data)
    cfg.update(flags)
    cfg["command"] = args.command
    return cfg


# --------------------------------------------------------------------------
# config -> objects


def _operator(cfg: dict) -> ops.OperatorModel:
    if cfg.get("operator"):
        spec = cfg["operator"]
        if isinstance(spec, str):
            spec = json.loads(Path(spec).read_text())
        T = ops.operator_from_spec(spec)
    else:
        name = cfg.get("gallery")
        size = int(cfg.get("size", 0))
        if size < 1:
            raise ConfigError("size must be a positive integer")
        if name == "ritt_diag":
            T = ops.ritt_diag(size)
        elif name == "kt_alpha_diag":
            alpha = float(cfg.get("alpha", 0))
            if alpha <= 0:
                raise ConfigError("alpha must be positive")
            T = ops.kt_alpha_diag(alpha, size)
        elif name == "e_ritt_diag":
            T = ops.e_ritt_diag(ops.unit_points(_angles(cfg)), size)
        elif name == "dense_embed":
            T = ops.dense_embed(ops.ritt_diag(size))
        else:
            raise ops.UnknownGallery(f"unknown gallery model {name!r}")
    if cfg.get("dense") and isinstance(T, ops.Diagonal):
        T = ops.dense_embed(T)
    return T


def _angles(cfg: dict) -> list[float]:
    raw = cfg.get("angles") or []
    if not raw:
        raise ConfigError("angles must be nonempty")
    return [_angle(a) for a in raw]


def _grid(cfg: dict) -> np.ndarray:
    n_min, n_max, per = int(cfg["n_min"]), int(cfg["n_max"]), int(cfg["per_decade"])
    if n_min < 0 or n_max < max(n_min, 1) or per < 1:
        raise ConfigError("grid needs 0 <= n_min <= n_max and per_decade >= 1")
    g = tauber.default_grid(n_max, max(n_min, 1), per)
    if n_min == 0:
        g = np.concatenate([[0], g])
    return g


def _window(cfg: dict):
    w = cfg.get("window")
    if w is None:
        return None
    lo, hi = float(w[0]), float(w[1])
    if not 0 < lo < hi:
        raise ConfigError("window needs 0 < n_lo < n_hi")
    return lo, hi


def _band(cfg: dict, key: str):
    b = cfg.get(key)
    if b is None:
        return None
    lo, hi = float(b[0]), float(b[1])
    if lo > hi:
        raise ConfigError(f"{key} needs lo <= hi")
    return lo, hi


def _build_mollifier(cfg: dict, certify: bool = True) -> mol.Mollifier:
    ell, k0 = int(cfg["ell"]), int(cfg["k0"])
    if ell < 1 or k0 < 1:
        raise ConfigError("ell and k0 must be at least 1")
    return mol.build_mollifier(ell, k0, certify=certify, rtol=float(cfg.get("rtol", 1e-6)))


def _eps(v) -> pp.Rational:
    q = _rational(v)
    if not (0 < q and float(q) <= math.pi / 2):
        raise ConfigError(f"eps must lie in (0, pi/2], got {v!r}")
    return q


def _threads(cfg: dict):
    t = cfg.get("threads")
    if t is None:
        return None
    if int(t) < 1:
        raise ConfigError("threads must be at least 1")
    return int(t)


# --------------------------------------------------------------------------
# commands; each returns (passed, summary, report dict, primary output text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    return str(o)


def cmd_mollifier(cfg):
    m = _build_mollifier(cfg)
    rep = mol.verify_properties(m)
    body = rep.to_dict()
    body["low_order_max"] = float(rep.low_order_max.upper) if rep.low_order_max else None
    body["derivative_norms"] = m.to_dict()["derivative_norms"]
    body["smoothness_class"] = pp.smoothness_class(m.phi)
    body["pieces"] = len(m.phi)
    failed = [c.id for c in rep.checks if not c.passed]
    summary = f"mollifier ell={m.ell} k0={m.k0}: " + ("all properties hold" if not failed else f"failed {failed}")
    return rep.passed, summary, body, _json(m.to_dict())


def cmd_coeffs(cfg):
    m = _build_mollifier(cfg)
    eps = _eps(cfg["eps"])
    nmax = int(cfg["nmax"])
    if nmax < 1:
        raise ConfigError("nmax must be positive")
    order = cfg.get("tail_order", "best")
    order = order if order == "best" else int(order)
    z = osc.z_coefficients(m, eps, nmax, order)
    db = osc.difference_bounds(z)
    z0 = 3 * float(eps) / (2 * math.pi)
    total = float(np.sum(z.values))
    checks = [
        tauber.Verdict("z0", z[0], f"|z_0 - 3 eps / 2 pi| <= 1e-12 (3 eps / 2 pi = {z0:.17g})", abs(z[0] - z0) <= 1e-12),
        tauber.Verdict("symmetry", 0, "z_n == z_-n", bool(np.all(z.values == z.values[::-1]))),
        tauber.Verdict("inversion", total - 1, f"|sum z_n - 1| <= tail_bound = {z.tail_bound:.17g}",
                       abs(total - 1) <= z.tail_bound),
        tauber.Verdict("difference_bounds", db.sup_n2, "sup n^2 |z_n - z_(n-1)| finite", math.isfinite(db.sup_n2)),
    ]
    body = {
        "eps": pp._fmt(eps),
        "tail_bound": z.tail_bound,
        "l1_sum": z.l1_sum(),
        "difference_bounds": {
            "sup_abs": db.sup_abs,
            "sup_abs_over_eps2": db.sup_abs_over_eps2,
            "sup_n2": db.sup_n2,
            "argmax_n2": db.argmax_n2,
        },
        "verdicts": [v.to_dict() for v in checks],
    }
    ok = all(v.passed for v in checks)
    return ok, f"coeffs eps={pp._fmt(eps)} nmax={nmax}: z_0={z[0]:.17g}, tail_bound={z.tail_bound:.3g}", body, z.to_csv()


def _decay_result(rep: tauber.DecayReport, name: str):
    failed = [v.name for v in rep.verdicts if not v.passed]
    exp = "n/a" if rep.exponent is None else f"{rep.exponent:.4f}"
    summary = f"{name}: exponent={exp}; " + ("all checks pass" if not failed else f"failed {failed}")
    return rep.passed, summary, rep.to_dict(), rep.to_csv()


def cmd_kt(cfg):
    T = _operator(cfg)
    m = rates.RateFunction.from_spec(_rate_spec(cfg["rate"])) if cfg.get("rate") else None
    cs = cfg["c"] if isinstance(cfg["c"], list) else [cfg["c"]]
    cs = [float(c) for c in cs]
    if any(not 0 < c < 1 for c in cs):
        raise ConfigError("c must lie in (0, 1)")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = tauber.kt_experiment(
            T, m, cs if len(cs) > 1 else cs[0], _grid(cfg), window=_window(cfg),
            exponent_band=_band(cfg, "exponent_band"), n_min=int(cfg["envelope_n_min"]),
        )
    sizes = [int(k) for k in cfg.get("trend_sizes") or []]
    if sizes and cfg.get("gallery") == "kt_alpha_diag" and not cfg.get("operator") and not cfg.get("dense"):
        if min(sizes) < 1:
            raise ConfigError("trend sizes must be positive")
        trend = tauber.kt_dimension_trend(float(cfg["alpha"]), sizes, m, cs[0], _grid(cfg),
                                          int(cfg["envelope_n_min"]))
        rep.extra["envelope_constant_by_size"] = {str(k): v for k, v in trend.items()}
    return _decay_result(rep, rep.label)


def _rate_spec(raw):
    if isinstance(raw, dict):
        return raw
    try:
        spec = json.loads(raw)
    except json.JSONDecodeError:
        raise ConfigError(f"rate must be a JSON object, got {raw!r}") from None
    if not isinstance(spec, dict):
        raise ConfigError("rate must be a JSON object")
    return spec


def cmd_ritt(cfg):
    T = _operator(cfg)
    kwargs = {"window": _window(cfg), "threads": _threads(cfg)}
    if _band(cfg, "band"):
        kwargs["band"] = _band(cfg, "band")
    if "smoothing_ns" in cfg:
        kwargs["smoothing_ns"] = [int(n) for n in cfg["smoothing_ns"]]
    return _decay_result(tauber.ritt_experiment(T, _grid(cfg), **kwargs), "ritt")


def cmd_e_ritt(cfg):
    T = _operator(cfg)
    E = ops.unit_points(_angles(cfg))
    kwargs = {"window": _window(cfg), "threads": _threads(cfg)}
    if _band(cfg, "band"):
        kwargs["band"] = _band(cfg, "band")
    if cfg.get("partial_sum_n_max"):
        kwargs["partial_sum_n_max"] = int(cfg["partial_sum_n_max"])
    return _decay_result(tauber.e_ritt_experiment(T, E, _grid(cfg), **kwargs), "e-ritt")


def cmd_crosscheck(cfg):
    T = _operator(cfg)
    m = _build_mollifier(cfg)
    eps = _eps(cfg["eps"])
    ns = [int(n) for n in cfg["n_list"]]
    if not ns or min(ns) < 0:
        raise ConfigError("n_list must hold non-negative integers")
    tol = float(cfg["tolerance"])
    rep = tauber.identity_crosscheck(T, m, eps, ns, threads=_threads(cfg))
    body = rep.to_dict()
    v = tauber.Verdict("identity", rep.max_discrepancy, f"max relative discrepancy < {tol:g}", rep.max_discrepancy < tol)
    body["verdicts"] = [v.to_dict()]
    lines = ["n,discrepancy,quadrature_error"]
    for n, d, e in zip(rep.n, rep.discrepancy, rep.quadrature_error):
        lines.append(f"{n},{d:.17g},{e:.17g}")
    return v.passed, f"crosscheck: max discrepancy {rep.max_discrepancy:.3g}", body, "\n".join(lines) + "\n"


def cmd_smooth(cfg):
    T = _operator(cfg)
    m = _build_mollifier(cfg)
    raw = cfg["eps"] if isinstance(cfg["eps"], list) else [cfg["eps"]]
    epss = [_eps(e) for e in raw]
    grid = _grid(cfg)
    frac = float(cfg["fraction"])
    if not 0 < frac < 1:
        raise ConfigError("fraction must lie in (0, 1)")
    x = ops.PowerSequence(T)
    orig = ops.term_norms(x.terms(grid))
    lines = ["eps,n,norm,smoothed_norm,defect"]
    rows = []
    for eps in epss:
        sm = tauber.smooth_sequence(x, m, eps, grid, fraction=frac)
        d = tauber.approximation_defect(x, sm)
        defects = ops.term_norms(x.terms(grid) - sm.terms)
        for i, n in enumerate(grid):
            lines.append(f"{pp._fmt(eps)},{int(n)},{orig[i]:.17g},{sm.norms[i]:.17g},{defects[i]:.17g}")
        rows.append({"eps": pp._fmt(eps), "n_trunc": sm.n_trunc, "truncation_error": sm.truncation_error,
                     "defect": d.sup, "defect_over_eps": d.ratio, "argmax_n": d.argmax})
    ratios = [r["defect_over_eps"] for r in rows]
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else (1.0 if max(ratios) == 0 else math.inf)
    limit = float(cfg["defect_spread"])
    v = tauber.Verdict("defect_stability", spread, f"max/min of defect/eps across eps <= {limit:g}", spread <= limit)
    body = {"ell": m.ell, "k0": m.k0, "rows": rows, "verdicts": [v.to_dict()]}
    return v.passed, f"smooth: defect/eps spread {spread:.3g}", body, "\n".join(lines) + "\n"


COMMANDS = {
    "mollifier": cmd_mollifier,
    "coeffs": cmd_coeffs,
    "kt": cmd_kt,
    "ritt": cmd_ritt,
    "e-ritt": cmd_e_ritt,
    "crosscheck": cmd_crosscheck,
    "smooth": cmd_smooth,
}


def run(cfg: dict) -> int:
    """Execute one resolved config; returns the exit status."""
    try:
        passed, summary, body, primary = COMMANDS[cfg["command"]](cfg)
    except INVALID_INPUT as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (KeyError, TypeError, ValueError) as e:
        print(f"error: invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID
    body = dict(body, config=cfg, passed=passed)
    if cfg.get("out"):
        Path(cfg["out"]).write_text(primary)
    if cfg.get("report"):
        Path(cfg["report"]).write_text(_json(body))
    if not cfg.get("out") and not cfg.get("report"):
        sys.stdout.write(_json(body))
    print(("PASS " if passed else "FAIL ") + summary)
    return EXIT_OK if passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code else EXIT_OK
    try:
        cfg = resolve_config(args)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
