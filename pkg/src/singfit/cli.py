"""Command-line front end.

Exit codes: 0 success, 2 input or domain error, 3 optimisation failure.
Every command accepts ``--config FILE.json`` whose keys are the long option
names (dashes or underscores); explicit flags override file values.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from . import models as mk
from . import series as sc
from .errors import NoConvergenceError, SingfitError
from .fitter import (
    EXTENDED_TOL,
    STANDARD_TOL,
    FitConfig,
    compare_models,
    fit,
    profile_beta_tc,
)
from .models import Family, ModelSpec, Objective, ParameterSet
from .simulator import RecursionSpec, iterate_rates, synthesize

log = logging.getLogger("singfit")

EXIT_OK, EXIT_INPUT, EXIT_OPTIM = 0, 2, 3
REPORT_SCHEMA = 1
CURVE_STEP = 0.1
TC_MARGIN = 0.01  # curves stop this many periods before t_c


class _InputError(Exception):
    pass


# --- file helpers ------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])
    return buf.getvalue()


def _write_manifest(args, outputs: list[Path], inputs: list[str]) -> Path:
    path = Path(args.manifest) if args.manifest else outputs[0].with_name(outputs[0].name + ".manifest.json")
    echo = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",) and not callable(v)}
    manifest = {
        "command": args.command,
        "inputs": inputs,
        "config": echo,
        "tool_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "outputs": [str(p) for p in outputs],
    }
    _atomic_write(path, _dumps(manifest))
    return path


def _seed(args) -> int:
    env = os.environ.get("SINGFIT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise _InputError(f"SINGFIT_SEED must be an integer, got {env!r}") from None
    return int(args.seed)


def _parse_freeze(items) -> dict[str, float]:
    out = {}
    for item in items or []:
        name, sep, value = str(item).partition("=")
        if not sep:
            raise _InputError(f"--freeze expects NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise _InputError(f"--freeze value for {name} is not a number") from None
    return out


def _read_series(args) -> sc.ObservationSeries:
    s = sc.read_csv(args.input, args.kind)
    if s.kind is sc.Kind.INFLATION_PCT:
        s = sc.inflation_to_cpi(s, 1.0)
    return s


# --- transform -----------------------------------------------------------------


def _apply_op(s: sc.ObservationSeries, op: str) -> sc.ObservationSeries:
    name, *rest = op.split(":")
    try:
        nums = [float(v) for v in rest]
    except ValueError:
        raise _InputError(f"bad operation {op!r}") from None
    if name == "cpi":
        base = nums[0] if nums else 1.0
        if s.kind is sc.Kind.GRI:
            return sc.gri_to_cpi(s, base)
        return sc.inflation_to_cpi(s, base)
    if name == "normalize" and len(nums) == 1:
        return sc.normalize(s, int(nums[0]))
    if name == "log" and not nums:
        return sc.log_transform(s)
    if name == "gri" and not nums:
        return sc.cpi_to_gri(s)
    if name == "window" and len(nums) == 2:
        return sc.window(s, int(nums[0]), int(nums[1]))
    raise _InputError(f"unknown operation {op!r}")


def cmd_transform(args) -> int:
    s = sc.read_csv(args.input, args.kind)
    for op in args.ops or []:
        s = _apply_op(s, op)
    out = Path(args.output)
    _atomic_write(out, sc.format_csv(s))
    _write_manifest(args, [out], [str(args.input)])
    return EXIT_OK


# --- fit -----------------------------------------------------------------------


def _initial(args):
    if not args.init:
        return None
    raw = args.init
    if isinstance(raw, str):
        raw = json.loads(Path(raw).read_text(encoding="utf-8")) if Path(raw).exists() else json.loads(raw)
    items = raw if isinstance(raw, list) else [raw]
    return [ParameterSet.from_dict(d) for d in items]


def _fit_config(args) -> FitConfig:
    return FitConfig(
        model=ModelSpec(args.model, args.objective),
        window=tuple(int(v) for v in args.window) if args.window else None,
        frozen=_parse_freeze(args.freeze),
        initial=_initial(args),
        stop_rel_chi2=float(args.tol),
        extended_stop=float(args.extended_tol) if args.extended_tol else None,
        max_iter=int(args.max_iter),
    )


def _curve_rows(data: sc.ObservationSeries, result, horizon: float):
    ps = result.params
    fam = result.model.family
    raw = result.model.objective is Objective.RAW_CPI
    if result.window:
        data = sc.window(data, *result.window)
    years = data.years.astype(float)
    obs = data.values if raw else np.log(data.values)
    obs_gri = np.concatenate(([math.nan], np.diff(np.log(data.values))))
    curve_fam = Family.NLF if fam is Family.STZ else fam

    def model_at(t):
        return np.asarray(mk.log_price(curve_fam, ps, t), dtype=float)

    def rate_at(t):
        r = np.asarray(mk.rate(curve_fam, ps, t), dtype=float)
        if raw:
            # the curve is the price itself: d ln P / dt, per period
            with np.errstate(divide="ignore", invalid="ignore"):
                return r / model_at(t)
        return r

    rows = []
    mv = model_at(years)
    mr = rate_at(years)
    for y, d, m, dg, mg in zip(years, obs, mv, obs_gri, mr):
        rows.append(["data", int(y), float(d), float(m), float(m - d), None if math.isnan(dg) else float(dg), float(mg)])
    end = years[-1] + horizon
    if ps.has_singularity:
        end = min(end, ps.t_c - TC_MARGIN * ps.dt)
    n = int(math.floor((end - years[0]) / CURVE_STEP + 1e-9)) + 1
    grid = years[0] + CURVE_STEP * np.arange(n)
    if grid[-1] < end:
        grid = np.append(grid, end)
    for t, m, mg in zip(grid, model_at(grid), rate_at(grid)):
        rows.append(["model", round(float(t), 10), None, float(m), None, None, float(mg)])
    if ps.has_singularity:
        rows.append(["t_c", float(ps.t_c), None, None, None, None, None])
    return rows


def _report(args, result, status: str) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "tool": "singfit",
        "status": status,
        "input": str(args.input),
        "result": result.to_dict() if result is not None else None,
    }


def cmd_fit(args) -> int:
    data = _read_series(args)
    cfg = _fit_config(args)
    report_path = Path(args.report)
    outputs = [report_path]
    code = EXIT_OK
    try:
        result = fit(data, cfg)
        status = "converged"
    except NoConvergenceError as exc:
        log.error("%s", exc)
        result, status, code = exc.best, "not_converged", EXIT_OPTIM
    _atomic_write(report_path, _dumps(_report(args, result, status)))
    if args.curves and result is not None:
        cpath = Path(args.curves)
        header = ["row", "year", "data", "model", "residual", "data_gri", "model_gri"]
        _atomic_write(cpath, _csv_text(header, _curve_rows(data, result, float(args.horizon))))
        outputs.append(cpath)
    _write_manifest(args, outputs, [str(args.input)])
    return code


def cmd_profile(args) -> int:
    data = _read_series(args)
    args.model = "nlf"
    cfg = _fit_config(args)
    if cfg.extended_stop is None:
        cfg.extended_stop = EXTENDED_TOL
    iterates = profile_beta_tc(data, cfg)
    rows = [
        [it.iteration, it.beta, it.t_c, it.beta_times_span, it.a_p, it.chi2, int(it.extended)]
        for it in iterates
    ]
    out = Path(args.output)
    header = ["iter", "beta", "t_c", "beta_times_span", "a_p", "chi2", "extended"]
    _atomic_write(out, _csv_text(header, rows))
    _write_manifest(args, [out], [str(args.input)])
    return EXIT_OK


def cmd_compare(args) -> int:
    data = _read_series(args)
    cfgs = []
    for spec in args.models:
        fam, _, obj = spec.partition(":")
        args.model, args.objective = fam, (obj or ("rawcpi" if fam == "stz" else "logcpi"))
        cfgs.append(_fit_config(args))
    entries = compare_models(data, cfgs)
    out = Path(args.output)
    body = {
        "schema": REPORT_SCHEMA,
        "tool": "singfit",
        "input": str(args.input),
        "entries": [
            {
                "model": {"family": e.config.model.family.value, "objective": e.config.model.objective.value},
                "failed": e.failed,
                "error": e.error,
                "result": e.result.to_dict() if e.result is not None else None,
            }
            for e in entries
        ],
    }
    _atomic_write(out, _dumps(body))
    _write_manifest(args, [out], [str(args.input)])
    return EXIT_OK


# --- simulate ------------------------------------------------------------------


def cmd_simulate(args) -> int:
    seed = _seed(args)
    out = Path(args.output)
    if args.recursion:
        spec = RecursionSpec(
            family=args.family,
            r_init=tuple(args.r_init) if args.r_init else (args.r0, args.r0),
            a_p=args.a_p or 0.0,
            beta=args.beta,
            steps=int(args.steps),
            noise_sigma=float(args.noise),
            seed=seed,
            start_year=int(args.years[0]) if args.years else 0,
        )
        sim = iterate_rates(spec)
        if sim.blowup_step is not None:
            log.warning("recursion overflowed at lattice step %d", sim.blowup_step)
        series = sim.series
    else:
        if not args.years:
            raise _InputError("--years FIRST LAST is required")
        kw = dict(t0=args.t0, r0=args.r0, p0=args.p0, dt=1.0)
        if args.family in ("nlf",):
            kw["beta"] = args.beta
            if args.t_c is not None:
                kw["t_c"] = args.t_c
            else:
                kw["a_p"] = args.a_p
        elif args.family == "lf":
            kw["a_p"] = args.a_p
        ps = ParameterSet(**kw)
        series = synthesize(ps, args.family, tuple(args.years), float(args.noise), seed)
    _atomic_write(out, sc.format_csv(series))
    _write_manifest(args, [out], [])
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def _add_fit_options(p: argparse.ArgumentParser, with_model: bool = True) -> None:
    p.add_argument("input", help="CSV file with header year,value")
    p.add_argument("--kind", default="price", choices=[k.value for k in sc.Kind])
    if with_model:
        p.add_argument("--model", default="nlf", choices=[f.value for f in Family])
    p.add_argument("--objective", default="logcpi", choices=[o.value for o in Objective])
    p.add_argument("--window", nargs=2, type=int, metavar=("FROM", "TO"))
    p.add_argument("--freeze", action="append", metavar="NAME=VALUE", help="e.g. p0=0")
    p.add_argument("--init", help="initial ParameterSet(s) as JSON text or file")
    p.add_argument("--tol", type=float, default=STANDARD_TOL, help="relative chi^2 stop")
    p.add_argument("--extended-tol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="singfit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"singfit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with option defaults")
        p.add_argument("--manifest", help="manifest path (default: <output>.manifest.json)")

    p = sub.add_parser("transform", help="apply series transforms in order")
    common(p)
    p.add_argument("input")
    p.add_argument("--kind", default="inflation", choices=[k.value for k in sc.Kind])
    p.add_argument(
        "ops",
        nargs="*",
        help="cpi[:BASE] normalize:YEAR log gri window:FROM:TO (applied left to right)",
    )
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("fit", help="fit one model")
    common(p)
    _add_fit_options(p)
    p.add_argument("--report", required=True, help="report JSON path")
    p.add_argument("--curves", help="curve CSV path")
    p.add_argument("--horizon", type=float, default=10.0, help="years of model curve past the data")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("profile", help="NLF (beta, t_c) path up to the extended tolerance")
    common(p)
    _add_fit_options(p, with_model=False)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_profile, extended_tol=EXTENDED_TOL)

    p = sub.add_parser("compare", help="fit several models and rank them by chi")
    common(p)
    _add_fit_options(p, with_model=False)
    p.add_argument("--models", nargs="+", default=["lf", "nlf"], help="FAMILY[:OBJECTIVE] ...")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="write a synthetic series")
    common(p)
    p.add_argument("--family", default="nlf", choices=["cagan", "lf", "nlf"])
    p.add_argument("--t0", type=float, default=1969.0)
    p.add_argument("--r0", type=float, default=0.1)
    p.add_argument("--p0", type=float, default=0.0)
    p.add_argument("--a-p", type=float)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--t-c", type=float)
    p.add_argument("--years", nargs=2, type=int, metavar=("FIRST", "LAST"))
    p.add_argument("--noise", type=float, default=0.0, help="log-price noise sigma")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--recursion", action="store_true", help="iterate the discrete GRI recursion")
    p.add_argument("--r-init", nargs=2, type=float)
    p.add_argument("--steps", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)
    return parser


def _parse(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    # transform ops may follow options (``x.csv --kind gri cpi``); argparse
    # leaves those positionals unclaimed, so append them here
    args, extra = parser.parse_known_args(argv)
    if extra:
        if args.command == "transform" and not any(e.startswith("-") for e in extra):
            args.ops = list(args.ops or []) + extra
        else:
            parser.error(f"unrecognized arguments: {' '.join(extra)}")
    return args


def _load_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = _parse(parser, argv)
    if not getattr(args, "config", None):
        return args
    try:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise _InputError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise _InputError("config file must hold a JSON object")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in subparser._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in known:
            raise _InputError(f"unknown config key {key!r}")
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    # positional arguments given only in the config file
    for action in subparser._actions:
        if not action.option_strings and action.dest in defaults and action.nargs is None:
            action.required = False
            action.nargs = "?"
    return _parse(parser, argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _load_config(parser, argv)
    except _InputError as exc:
        print(f"singfit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except NoConvergenceError as exc:
        print(f"singfit: optimisation failed: {exc}", file=sys.stderr)
        return EXIT_OPTIM
    except (SingfitError, _InputError, OSError, ValueError) as exc:
        print(f"singfit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
