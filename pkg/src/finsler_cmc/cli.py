"""Command line: ``finsler-cmc check|sweep|list-checks|validate``.

Exit codes: 0 when every check passes, 1 when any check fails, 2 on
configuration, precondition or output errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import config as cfgmod
from . import theorems as th
from .errors import FinslerError, PreconditionError, WindTooStrongError
from .hypersurface import QuadratureGrid
from .navigation import NavigatedMetric

CSV_COLUMNS = ("check", "config_digest", "residual_name", "residual", "tolerance", "verdict")


def run_checks(cfg, grid_order=None, tol_scale=None):
    """Run every configured check in order and return the reports."""
    grid = QuadratureGrid.build(cfg.metric.n, grid_order or cfg.grid_order)
    scale = cfg.tolerance_scale * (tol_scale or 1.0)
    reports = []
    for name in cfg.checks:
        opts = dict(cfg.check_options.get(name, {}))
        reports.append(_run_one(name, cfg, grid, scale, opts))
    return reports


def _run_one(name, cfg, grid, scale, opts):
    base, wind, emb, ori = cfg.metric, cfg.wind, cfg.embedding, cfg.orientation
    if name == "navigation_shift":
        return th.check_navigation_shift(base, wind, emb, grid, ori, scale)
    if name == "transformed_normal":
        return th.check_transformed_normal(base, wind, emb, grid, ori, scale)
    if name == "flowed_shift":
        t = opts.get("t_values", [0.1, 0.5])
        t = [float(v) for v in (t if isinstance(t, list) else [t])]
        return th.check_flowed_shift(base, wind, emb, grid, t, ori, scale)
    if name == "mean_relations":
        return th.check_mean_relations(base, wind, emb, grid, ori, scale)
    if name == "heintze_karcher":
        return th.check_heintze_karcher(base, wind, emb, grid, opts.get("umbilic"), scale, cfg.density)
    if name == "volume_variation":
        metric = base if wind.is_zero() else NavigatedMetric(base, wind)
        return th.check_volume_variation(emb, metric, grid, ori, int(opts.get("count", 5)), cfg.seed,
                                         float(opts.get("h", 1e-3)), opts.get("cmc"), scale, cfg.density)
    raise AssertionError(name)


def csv_text(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        for name, val, tol in rep.residuals:
            w.writerow([rep.check, rep.config_digest, name, repr(val), repr(tol),
                        th.PASS if val <= tol else th.FAIL])
        if not rep.residuals:
            w.writerow([rep.check, rep.config_digest, "", "", "", rep.verdict])
    return buf.getvalue()


def curves_text(key, rows):
    """Wide table: one row per parameter value, one column per check residual."""
    cols = []
    for _, reports in rows:
        for rep in reports:
            for name, _, _ in rep.residuals:
                c = f"{rep.check}.{name}"
                if c not in cols:
                    cols.append(c)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([key] + cols)
    for value, reports in rows:
        got = {f"{r.check}.{n}": v for r in reports for n, v, _ in r.residuals}
        w.writerow([value] + [repr(got[c]) if c in got else "" for c in cols])
    return buf.getvalue()


def table_text(reports):
    lines = []
    for rep in reports:
        lines.append(f"{rep.check} [{rep.config_digest}] {rep.verdict.upper()}")
        for name, val, tol in rep.residuals:
            mark = "ok " if val <= tol else "BAD"
            lines.append(f"  {mark} {name:<32s} {val:12.4e}  tol {tol:.1e}")
        for note in rep.notes:
            lines.append(f"  note: {note}")
    return "\n".join(lines) + "\n"


def _write(out_dir, files):
    try:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (d / name).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write output to {out_dir}: {exc.strerror or exc}") from None


def _exit_code(reports):
    if any(r.verdict == th.PRECONDITION for r in reports):
        return 2
    return 0 if all(r.verdict == th.PASS for r in reports) else 1


def cmd_check(args):
    cfg = cfgmod.load(args.config)
    reports = run_checks(cfg, args.grid_order, args.tol_scale)
    sys.stdout.write(table_text(reports))
    out = args.out or cfg.output.get("dir")
    if out:
        _write(out, {"report.csv": csv_text(reports),
                     "reports.json": json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2) + "\n"})
    return _exit_code(reports)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_sweep(args):
    cfg = cfgmod.load(args.config)
    values = [_parse_value(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise cfgmod.ConfigError("no sweep values given", key="--values")
    rows, all_reports = [], []
    for v in values:
        sub = cfgmod.parse(cfgmod.set_key(cfg.raw, args.key, v), "", cfg.source)
        reports = run_checks(sub, args.grid_order, args.tol_scale)
        rows.append((v, reports))
        all_reports.extend(reports)
    sys.stdout.write(curves_text(args.key, rows))
    out = args.out or cfg.output.get("dir")
    if out:
        _write(out, {"report.csv": csv_text(all_reports), "curves.csv": curves_text(args.key, rows)})
    return _exit_code(all_reports)


def cmd_list(args):
    for name in cfgmod.CHECK_NAMES:
        doc = (th.REGISTRY[name].__doc__ or "").strip().splitlines()[0]
        print(f"{name:<20s} {doc}")
    return 0


def cmd_validate(args):
    cfg = cfgmod.load(args.config)
    print(f"ok: {len(cfg.checks)} check(s), dimension {cfg.metric.n}, grid order {cfg.grid_order}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="finsler-cmc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("check", help="run the checks of a config file")
    c.add_argument("config")
    c.add_argument("--out", help="directory for report.csv and reports.json")
    c.add_argument("--tol-scale", type=float, default=None, help="multiply every tolerance")
    c.add_argument("--grid-order", type=int, default=None, help="override the quadrature order")
    c.set_defaults(func=cmd_check)
    s = sub.add_parser("sweep", help="vary one config key and emit curves")
    s.add_argument("config")
    s.add_argument("--key", required=True, help="dotted config key, e.g. wind.c")
    s.add_argument("--values", required=True, help="comma separated values")
    s.add_argument("--out")
    s.add_argument("--tol-scale", type=float, default=None)
    s.add_argument("--grid-order", type=int, default=None)
    s.set_defaults(func=cmd_sweep)
    sub.add_parser("list-checks", help="list registered checks").set_defaults(func=cmd_list)
    v = sub.add_parser("validate", help="validate a config file without running it")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PreconditionError, WindTooStrongError) as exc:
        print(f"error: {exc} [key 'wind']", file=sys.stderr)
        return 2
    except FinslerError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
