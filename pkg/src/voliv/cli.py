"""Command-line front end.

Every command resolves its settings in three layers: built-in defaults, then the
TOML file given by --config, then explicit flags. Outputs go to --output-dir as
``<name>.csv`` plus ``<name>.json`` / ``<name>.svg`` when --format asks for them.

Exit codes: 0 success, 1 numeric failure, 2 usage or schema error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import empirical as emp
from .blackscholes import ForwardContract, Smile
from .edgeworth import CURVATURE_FORMS, atm_asymptotics, iv_expansion
from .errors import (DomainError, PowerLawError, SchemaError, UnsupportedScalingError, VolivError)
from .mc_heston import McConfig, mc_smile
from .models import (HestonDLParams, characteristic_function, cumulants, heston_mean_variance, load_toml,
                     model_from_dict)
from .parallel import ENV_THREADS, ordered_map
from .plotting import line_plot_svg
from .pricer import (AtmGridTemplate, PricingGrid, geometric_grid, smile_from_cf, smile_rows,
                     term_structure, write_csv, write_term_structure_csv)

COMMANDS = ("asymptotics", "smile", "term-structure", "mc", "empirical", "fit")
FORMATS = ("csv", "json", "svg")

# flag name -> model field
MODEL_FLAGS = {
    "c-k": "c_k", "c-kbar": "c_kbar", "c-gamma": "c_gamma", "alpha": "alpha", "alpha-bar": "alpha_bar",
    "c-c": "c_C", "c-g": "c_G", "c-m": "c_M", "alpha-m": "alpha_M", "alpha-g": "alpha_G", "y": "Y",
    "kappa": "kappa", "vbar": "vbar", "eta": "eta", "rho": "rho", "v0": "v0", "alpha-rho": "alpha_rho",
    "eps": "eps", "hurst": "hurst",
}
MC_KEYS = ("n_paths", "n_steps_per_year", "seed", "antithetic", "min_steps", "block_size")
DEFAULT_Z_GRID = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0]


class UsageError(Exception):
    pass


def _float_list(text: str) -> list:
    text = text.strip()
    if not text:
        return []
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="voliv", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    helps = {
        "asymptotics": "leading ATM skew/curvature and scaled cumulants on a maturity grid",
        "smile": "implied-vol smiles (Fourier pricing, or the expansion when no CF exists)",
        "term-structure": "numeric vs asymptotic ATM skew/curvature on a maturity grid",
        "mc": "Monte Carlo smiles for Heston with decaying leverage",
        "empirical": "quote CSV -> bucket CSV and power-law fit JSON",
        "fit": "power-law fit of a skew or curvature column of an existing CSV",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name], description=helps[name])
        p.add_argument("--config", type=Path, help="TOML run configuration")
        p.add_argument("--output-dir", type=Path, help="directory for outputs (default: current directory)")
        p.add_argument("--name", help="output file stem (default: the command name)")
        p.add_argument("--format", choices=FORMATS, help="extra output next to the CSV (default: csv only)")
        p.add_argument("--threads", type=int, help=f"worker threads (overrides {ENV_THREADS})")
        if name in ("asymptotics", "smile", "term-structure", "mc"):
            p.add_argument("--model", choices=["gamma", "cgmy", "heston", "three-halves", "rough-bergomi"],
                           help="model kind")
            for flag, fld in MODEL_FLAGS.items():
                p.add_argument(f"--{flag}", type=float, dest=f"m_{fld}", metavar="X",
                               help=f"model parameter {fld}")
            p.add_argument("--theta-grid", type=_float_list, metavar="T1,T2,...",
                           help="maturities in years, comma separated (default: 12 points from 0.25 to 0.004)")
            p.add_argument("--curvature-form", choices=CURVATURE_FORMS,
                           help="exponent convention of the kappa3 curvature group (default: proof)")
        if name in ("smile", "mc"):
            p.add_argument("--z-grid", type=_float_list, metavar="Z1,Z2,...",
                           help="log-moneyness in units of the return std dev; must contain 0")
        if name in ("smile",):
            p.add_argument("--method", choices=["auto", "fourier", "expansion"],
                           help="pricing route (default: auto)")
        if name in ("term-structure", "mc"):
            p.add_argument("--seed", type=int, help="Monte Carlo seed")
            p.add_argument("--n-paths", type=int, help="Monte Carlo paths")
            p.add_argument("--n-steps-per-year", type=int, help="Euler steps per year")
        if name in ("empirical", "fit"):
            p.add_argument("--input", type=Path, help="input CSV")
        if name == "empirical":
            p.add_argument("--spline-bc", choices=["natural", "not-a-knot"], help="spline end condition")
        if name == "fit":
            p.add_argument("--column", help="value column to fit (default: skew_numeric or skew)")
    return ap


# --------------------------------------------------------------------------- settings

def _resolve(args) -> dict:
    """Merge defaults < config file < flags into one settings dict."""
    cfg = {}
    if args.config is not None:
        try:
            cfg = load_toml(args.config)
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except Exception as exc:  # malformed TOML
            raise UsageError(f"cannot parse config {args.config}: {exc}") from None
        if cfg.get("command", args.command) != args.command:
            raise UsageError(f"config is for command {cfg['command']!r}, not {args.command!r}")
    s = {
        "name": cfg.get("name", args.command),
        "output_dir": cfg.get("output_dir", "."),
        "format": cfg.get("format", "csv"),
        "threads": cfg.get("threads"),
        "theta_grid": cfg.get("theta_grid"),
        "z_grid": cfg.get("z_grid", DEFAULT_Z_GRID),
        "curvature_form": cfg.get("curvature_form", "proof"),
        "method": cfg.get("method", "auto"),
        "input": cfg.get("input"),
        "column": cfg.get("column"),
        "spline_bc": cfg.get("spline_bc", "natural"),
        "model": dict(cfg.get("model", {})),
        "mc": dict(cfg.get("mc", {})),
    }
    for key in ("name", "format", "threads", "theta_grid", "z_grid", "curvature_form", "method",
                "column", "spline_bc"):
        v = getattr(args, key, None)
        if v is not None:
            s[key] = v
    if args.output_dir is not None:
        s["output_dir"] = args.output_dir
    if getattr(args, "input", None) is not None:
        s["input"] = args.input
    if getattr(args, "model", None) is not None and args.model != s["model"].get("model"):
        s["model"] = {"model": args.model}
    for fld in MODEL_FLAGS.values():
        v = getattr(args, f"m_{fld}", None)
        if v is not None:
            s["model"][fld] = v
    for key in ("seed", "n_paths", "n_steps_per_year"):
        v = getattr(args, key, None)
        if v is not None:
            s["mc"][key] = v
    if s["format"] not in FORMATS:
        raise UsageError(f"format must be one of {FORMATS}")
    unknown = set(s["mc"]) - set(MC_KEYS)
    if unknown:
        raise UsageError(f"unknown [mc] keys: {sorted(unknown)}")
    return s


def _model(s):
    if not s["model"].get("model"):
        raise UsageError("no model given (use --model or a [model] table in the config)")
    try:
        return model_from_dict(s["model"])
    except (DomainError, TypeError, ValueError) as exc:
        raise UsageError(f"bad model specification: {exc}") from None


def _thetas(s) -> list:
    grid = s["theta_grid"]
    if grid is None:
        return geometric_grid()
    grid = [float(t) for t in grid]
    if not grid:
        raise UsageError("empty theta grid")
    if any(not (0 < t <= 1) for t in grid):
        raise UsageError("theta grid must lie in (0, 1]")
    if len(set(grid)) != len(grid):
        raise UsageError("theta grid has duplicates")
    return sorted(grid, reverse=True)


def _mc_config(s) -> McConfig:
    try:
        return McConfig(threads=s["threads"], **s["mc"])
    except (DomainError, TypeError) as exc:
        raise UsageError(f"bad Monte Carlo settings: {exc}") from None


def _outdir(s) -> Path:
    out = Path(s["output_dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _write_text(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    return v


def _rows_json(header, rows) -> str:
    recs = [dict(zip(header, [_json_safe(float(x)) if isinstance(x, (float, np.floating)) else x
                              for x in r])) for r in rows]
    return json.dumps(recs, indent=2) + "\n"


# --------------------------------------------------------------------------- commands

def cmd_asymptotics(s) -> int:
    model, thetas = _model(s), _thetas(s)
    header = ["theta", "sigma0", "kappa2", "kappa3", "kappa4", "beta0", "beta1", "beta2", "m", "n",
              "skew_asym", "curv_asym"]
    rows = []
    for t in thetas:
        c = cumulants(model, t)
        sk, cu = atm_asymptotics(c, s["curvature_form"])
        rows.append([t, c.sigma0, c.kappa2, c.kappa3, c.kappa4, c.beta0, c.beta1, c.beta2, c.m, c.n,
                     sk.value, cu.value])
    out = _outdir(s)
    write_csv(out / f"{s['name']}.csv", header, rows)
    if s["format"] == "json":
        _write_text(out / f"{s['name']}.json", _rows_json(header, rows))
    if s["format"] == "svg":
        _write_text(out / f"{s['name']}.svg", line_plot_svg(
            [("skew (asymptotic)", thetas, [r[10] for r in rows])],
            title=f"{model.kind}: leading ATM skew", xlabel="theta", ylabel="ATM skew", logx=True))
    return 0


def _expansion_smile(model, theta, zs) -> Smile:
    c = cumulants(model, theta)
    zs = np.asarray(zs, dtype=float)
    # iv_expansion takes log-moneyness in units of sqrt(theta)
    ks = zs * c.sigma0
    ivs = np.asarray(iv_expansion(ks / math.sqrt(theta), c).value, dtype=float)
    return Smile(theta, ks, ivs)


def cmd_smile(s) -> int:
    model, thetas = _model(s), _thetas(s)
    zs = sorted(float(z) for z in s["z_grid"])
    if 0.0 not in zs:
        raise UsageError("z grid must contain 0")
    method = s["method"]

    def one(theta):
        found = characteristic_function(model, theta)
        if method == "fourier" or (method == "auto" and found is not None):
            if found is None:
                raise UsageError(f"model {model.kind!r} has no characteristic function here")
            cf, s0 = found
            grid = PricingGrid(theta, np.array(zs) * s0)
            return smile_from_cf(cf, ForwardContract(1.0, 0.0, theta), grid, s0)
        try:
            return _expansion_smile(model, theta, zs)
        except UnsupportedScalingError as exc:
            raise UsageError(str(exc)) from None

    smiles = ordered_map(one, thetas, s["threads"])
    header = ["theta", "k", "iv", "price"]
    rows = smile_rows(smiles)
    out = _outdir(s)
    write_csv(out / f"{s['name']}.csv", header, rows)
    if s["format"] == "json":
        _write_text(out / f"{s['name']}.json", _rows_json(header, rows))
    if s["format"] == "svg":
        _write_text(out / f"{s['name']}.svg", line_plot_svg(
            [(f"theta={sm.maturity:.4g}", sm.log_moneyness, sm.implied_vol) for sm in smiles[:4]],
            title=f"{model.kind}: implied volatility", xlabel="log-moneyness", ylabel="implied vol"))
    return 0


def cmd_term_structure(s) -> int:
    model, thetas = _model(s), _thetas(s)
    template = AtmGridTemplate(curvature_form=s["curvature_form"], threads=s["threads"],
                               mc=_mc_config(s) if isinstance(model, HestonDLParams) else None)
    ts = term_structure(model, thetas, template)
    out = _outdir(s)
    write_term_structure_csv(out / f"{s['name']}.csv", ts)
    if s["format"] == "json":
        rec = {"thetas": ts.thetas, "skew_numeric": ts.skew_numeric, "skew_asym": ts.skew_asym,
               "curv_numeric": ts.curv_numeric, "curv_asym": ts.curv_asym}
        if ts.std_error is not None:
            rec["std_error"] = ts.std_error
        _write_text(out / f"{s['name']}.json", json.dumps(_json_safe(rec), indent=2) + "\n")
    if s["format"] == "svg":
        _write_text(out / f"{s['name']}.svg", line_plot_svg(
            [("numeric", ts.thetas, ts.skew_numeric), ("asymptotic", ts.thetas, ts.skew_asym)],
            title=f"{model.kind}: ATM skew", xlabel="theta", ylabel="ATM skew", logx=True))
    if ts.failures:
        for theta, err in ts.failures:
            print(f"theta={theta!r}: {err}", file=sys.stderr)
        return 1
    return 0


def cmd_mc(s) -> int:
    model, thetas = _model(s), _thetas(s)
    if not isinstance(model, HestonDLParams):
        raise UsageError("mc supports the heston model only")
    cfg = _mc_config(s)
    zs = sorted(float(z) for z in s["z_grid"])
    if 0.0 not in zs:
        raise UsageError("z grid must contain 0")
    smiles, errs = [], []
    for theta in thetas:
        s0 = math.sqrt(theta * heston_mean_variance(model, theta))
        sm, ests = mc_smile(model, theta, np.array(zs) * s0, cfg)
        smiles.append(sm)
        errs.append([e.std_error for e in ests])
    header = ["theta", "k", "iv", "price", "std_error"]
    rows = smile_rows(smiles, errs)
    out = _outdir(s)
    write_csv(out / f"{s['name']}.csv", header, rows)
    if s["format"] == "json":
        _write_text(out / f"{s['name']}.json", _rows_json(header, rows))
    if s["format"] == "svg":
        _write_text(out / f"{s['name']}.svg", line_plot_svg(
            [(f"theta={sm.maturity:.4g}", sm.log_moneyness, sm.implied_vol) for sm in smiles[:4]],
            title="heston: Monte Carlo implied volatility", xlabel="log-moneyness", ylabel="implied vol"))
    return 0


def cmd_empirical(s) -> int:
    if s["input"] is None:
        raise UsageError("empirical needs --input")
    try:
        quotes = emp.read_quotes_csv(s["input"])
    except FileNotFoundError:
        raise UsageError(f"input not found: {s['input']}") from None
    res = emp.run_pipeline(quotes, bc_type=s["spline_bc"], threads=s["threads"])
    out = _outdir(s)
    emp.write_bucket_csv(out / f"{s['name']}_buckets.csv", res)
    _write_text(out / f"{s['name']}_fits.json", emp.fits_json(res))
    if s["format"] == "svg":
        th, sk = emp.aggregate_by_theta(res.buckets, "skew")
        _write_text(out / f"{s['name']}.svg", line_plot_svg(
            [("spline ATM skew", th, sk)], title="empirical ATM skew", xlabel="theta",
            ylabel="ATM skew", logx=True))
    for name, rec in res.fits.items():
        if rec.get("skipped"):
            print(f"{name} fit skipped: {rec['reason']} ({rec['detail']})", file=sys.stderr)
    return 0


def cmd_fit(s) -> int:
    import csv
    if s["input"] is None:
        raise UsageError("fit needs --input")
    try:
        with open(s["input"], newline="", encoding="utf-8") as fh:
            recs = list(csv.DictReader(fh))
    except FileNotFoundError:
        raise UsageError(f"input not found: {s['input']}") from None
    if not recs:
        raise SchemaError("input has no data rows", None, 2)
    cols = list(recs[0])
    col = s["column"] or next((c for c in ("skew_numeric", "skew") if c in cols), None)
    if col not in cols or "theta" not in cols:
        raise SchemaError(f"input needs 'theta' and {col!r} columns", col if col not in cols else "theta", 1)
    th, vals = [], []
    for i, r in enumerate(recs, start=2):
        if r.get("accepted", "true") != "true":
            continue
        try:
            t, v = float(r["theta"]), float(r[col])
        except ValueError:
            raise SchemaError(f"row {i}: non-numeric value", col, i) from None
        if math.isfinite(t) and math.isfinite(v):
            th.append(t)
            vals.append(v)
    out = _outdir(s)
    try:
        rec = emp.fit_power_law(th, vals).to_dict()
        code = 0
    except PowerLawError as exc:
        rec = {"skipped": True, "reason": exc.reason, "detail": str(exc), "n_points": len(th)}
        print(f"fit skipped: {exc}", file=sys.stderr)
        code = 1
    _write_text(out / f"{s['name']}.json", json.dumps({col: rec}, indent=2, sort_keys=True) + "\n")
    return code


HANDLERS = {"asymptotics": cmd_asymptotics, "smile": cmd_smile, "term-structure": cmd_term_structure,
            "mc": cmd_mc, "empirical": cmd_empirical, "fit": cmd_fit}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        s = _resolve(args)
        return HANDLERS[args.command](s)
    except UsageError as exc:
        print(f"voliv {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except SchemaError as exc:
        where = ", ".join(x for x in (f"column {exc.column}" if exc.column else "",
                                       f"row {exc.row}" if exc.row else "") if x)
        print(f"voliv {args.command}: schema error ({where}): {exc}", file=sys.stderr)
        return 2
    except VolivError as exc:
        print(f"voliv {args.command}: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
