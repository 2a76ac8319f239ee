"""Command-line front end.

Lengths are grid units (the radial coordinate of the star graph); times are
squared grid units.  Exit codes: 0 success, 1 a validation check failed,
2 configuration error, 3 solver failure or unwritable output.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import estimator as est
from .config import Loaded, load
from .errors import CaseMismatchError, ConfigError, DomainError, FitError, SolverError, UnsupportedClassError, UnsupportedProfileError
from .geometry import Point
from .oracle import Domain, build_grid, exit_probability, heat_kernel, resolvent
from .report import COLUMNS, emit_table, to_csv, write_atomic
from .validate import THEOREMS, _abs_rule, build_scenario_grid, check_resolvent_bounds, coverage_matrix, run_case

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def _grid(ld: Loaded):
    g = ld.cfg.grid
    return build_grid(ld.sum, g.R_max, g.n_cells, g.spacing_ratio, t_max=ld.t_max)


def _point(p, t):
    end, rule = p.rule()
    if end is None:
        return Point.center()
    return Point.on_end(end, _abs_rule(rule, t))


def _abs(p: Point):
    return None if p.is_center else p.abs


def cmd_classify(ld: Loaded, out: Path, args) -> int:
    rows = []
    for e in ld.sum.ends:
        c = e.cached_class
        rows.append((e.id, "power" if e.alpha is not None else "tabulated", e.alpha, c.kind.value, c.witness, c.crit_band, c.sub_band))
        if not args.quiet:
            print(f"end {e.id}: {c.kind.value} (witness {c.witness:.4g})")
    cols = ("end", "profile", "alpha", "class", "witness", "crit_band", "sub_band")
    write_atomic(out / f"{ld.name}_classify.csv", to_csv(cols, rows))
    return EXIT_OK


def cmd_estimate(ld: Loaded, out: Path, args) -> int:
    pts = ld.cfg.points
    if not pts:
        raise ConfigError("estimate needs at least one entry in 'points'")
    rows = []
    for t in ld.times:
        for a in range(len(pts)):
            for b in range(a, len(pts)):
                x, y = _point(pts[a], t), _point(pts[b], t)
                v = est.kernel_estimate(ld.sum, x, y, t, t_min=ld.cfg.t_min)
                rows.append({
                    "scenario": ld.name,
                    "theorem_case": str(v.regime),
                    "t": t,
                    "abs_x": _abs(x),
                    "abs_y": _abs(y),
                    "structural": v.structural,
                })
    write_atomic(out / f"{ld.name}_estimate.csv", to_csv(COLUMNS, rows))
    if not args.quiet:
        print(f"wrote {len(rows)} estimates")
    return EXIT_OK


def cmd_simulate(ld: Loaded, out: Path, args) -> int:
    grid = _grid(ld)
    pts = ld.cfg.points
    if not pts:
        raise ConfigError("simulate needs at least one entry in 'points'")
    rows = []
    for a, pa in enumerate(pts):
        # sources that move with t need one solve per time
        fixed = pa.sqrt_t is None
        batches = [list(ld.times)] if fixed else [[t] for t in ld.times]
        for ts in batches:
            cx = grid.cell_at(_point(pa, ts[0])) if not pa.center else 0
            ks = heat_kernel(grid, cx, ts, ld.steps)
            for it, t in enumerate(ts):
                x = _snapped(grid, cx)
                for pb in pts[a:]:
                    cy = grid.cell_at(_point(pb, t)) if not pb.center else 0
                    y = _snapped(grid, cy)
                    v = est.kernel_estimate(ld.sum, x, y, t, t_min=ld.cfg.t_min)
                    rows.append({
                        "scenario": ld.name,
                        "theorem_case": str(v.regime),
                        "t": t,
                        "abs_x": _abs(x),
                        "abs_y": _abs(y),
                        "oracle_p": ks.value(it, cy),
                        "structural": v.structural,
                    })
    write_atomic(out / f"{ld.name}_kernel.csv", to_csv(COLUMNS, rows))

    exit_rows = []
    for p in pts:
        if p.center or p.abs is None:
            continue
        cx = grid.cell_of_abs(p.end, p.abs)
        ex = exit_probability(grid, Domain.end(p.end), cx, ld.times, ld.steps)
        psi, rate = ex.at(cx)
        for t, a, r in zip(ld.times, psi, rate):
            exit_rows.append((ld.name, p.end, grid.cell_abs(cx), t, a, r))
    write_atomic(
        out / f"{ld.name}_exit.csv",
        to_csv(("scenario", "end", "abs_x", "t", "psi", "dpsi_dt"), exit_rows),
    )

    if ld.cfg.lambdas is not None:
        res_rows = []
        for r in resolvent(grid, ld.cfg.lambdas.values()):
            for i in range(grid.k):
                for ra in ld.cfg.grid.r_A:
                    c = grid.cell_of(i, ra)
                    res_rows.append((ld.name, r.lam, r.gamma[0], r.gamma_dot[0], i, ra, r.phi[c], r.psi_big[c]))
        cols = ("scenario", "lambda", "gamma_o", "gamma_dot_o", "end", "r_A", "phi", "psi_big")
        write_atomic(out / f"{ld.name}_resolvent.csv", to_csv(cols, res_rows))
    if not args.quiet:
        print(f"wrote {len(rows)} kernel samples, {len(exit_rows)} exit samples")
    return EXIT_OK


def _snapped(grid, cell) -> Point:
    end, a = grid.locate(cell)
    return Point.center() if end is None else Point.on_end(end, a)


def _run_case(payload):
    grid, case, name, limit, tol, steps = payload
    return run_case(grid, case, name, limit, tol, steps)


def cmd_validate(ld: Loaded, out: Path, args) -> int:
    spec = ld.scenario_spec()
    grid = build_scenario_grid(spec, ld.sum)
    payloads = [(grid, c, spec.name, spec.band_limit, spec.slope_tol, spec.steps) for c in spec.cases]
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_run_case, payloads))
    else:
        reports = [_run_case(p) for p in payloads]
    lines = [r.summary() for r in reports]
    ok = all(r.passed for r in reports)
    if ld.cfg.lambdas is not None:
        res = check_resolvent_bounds(grid, ld.cfg.lambdas.values(), ld.cfg.grid.r_A, spec.band_limit)
        lines += [c.summary() for c in res.checks]
        ok = ok and res.passed
    cov = coverage_matrix(reports)
    lines.append("coverage: " + " ".join(f"{k}={cov[k]}" for k in THEOREMS))
    lines.append("overall: " + ("PASS" if ok else "FAIL"))
    write_atomic(out / f"{ld.name}_report.csv", emit_table(reports))
    write_atomic(out / f"{ld.name}_coverage.csv", to_csv(("theorem", "samples"), list(cov.items())))
    write_atomic(out / f"{ld.name}_summary.txt", "\n".join(lines) + "\n")
    if not args.quiet:
        print("\n".join(lines))
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "classify": cmd_classify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="heatkernel",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="scenario JSON file")
    p.add_argument("--out", default=None, help="output directory (default: $HEATKERNEL_OUT or .)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes for validate")
    p.add_argument("--band-limit", type=float, default=None, help="override the configured ratio band limit")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return p


def _out_dir(arg) -> Path:
    out = Path(arg or os.environ.get("HEATKERNEL_OUT") or ".")
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.band_limit is not None and not args.band_limit > 1:
        print("error: --band-limit must exceed 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        ld = load(args.config, args.band_limit)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = _out_dir(args.out)
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    try:
        return COMMANDS[args.command](ld, out, args)
    except (ConfigError, DomainError, UnsupportedClassError, UnsupportedProfileError, CaseMismatchError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, FitError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
