"""Command-line entry point: ``sclc run|catalog|sum|parabolic``.

Exit codes: 0 when every check passes, 1 when a tolerance check (or a
numerical certification) fails, 2 on malformed input or configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .contour import QuadSettings
from .errors import ConfigError, SclcError
from .linop import LinOp, load_matrix, matrix_to_json, save_matrix_json
from .parabolic import load_problem, oracle_direct, problem_from_json, solve_nonautonomous
from .scenarios import CATALOG, PARABOLIC_FAMILIES, ScenarioResult, mesh_sweep, run_scenario
from .sums import (commuting_pair, dpg_bundle, eps_pair, find_shift, fit_decay, make_pair,
                   random_sectorial_pair, sum_inverse, sum_sectoriality)
from .util import resolve_seed

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 itself; raise instead so main() owns the exit path
    def error(self, message):
        raise _Usage(message)


# ------------------------------------------------------------------ output helpers


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, complex split, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        z = complex(obj)
        return {"re": _clean(z.real), "im": _clean(z.imag)}
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _fmt(v) -> str:
    if isinstance(v, (str, bool, np.bool_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(np.real(v))


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _stamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _report_header(command: str, seed: int, quad: QuadSettings) -> dict:
    return {"tool": "sclc", "version": __version__, "command": command, "seed": seed,
            "quad": quad.to_json(), "timestamp": _stamp()}


def _failures(results) -> list:
    return [{"scenario": r.name, "check": c.name, "measured": c.measured, "contract": c.contract}
            for r in results for c in r.checks if not c.passed]


def _emit_result(r: ScenarioResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for fname, (cols, rows) in r.tables.items():
        write_csv(out / fname, cols, rows)
    for fname, draw in r.figures:
        draw(out / fname)


# ------------------------------------------------------------------ sclc run


def _load_scenarios(target: str) -> tuple[list, Path | None, str, str | None]:
    p = Path(target)
    if p.is_file():
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError(f"{p.name}: not valid JSON ({exc})") from None
        if isinstance(doc, dict) and "scenarios" in doc:
            specs, quad = doc["scenarios"], doc.get("quad")
        else:
            specs, quad = [doc], None
        if not isinstance(specs, list) or not specs:
            raise ConfigError("scenarios must be a non-empty list")
        if quad is not None and not isinstance(quad, str):
            raise ConfigError("quad must be a string like 'decades=6,panels=4,arc=64'")
        names = [s.get("name", s.get("builtin")) if isinstance(s, dict) else None for s in specs]
        dup = sorted({n for n in names if n is not None and names.count(n) > 1})
        if dup:
            raise ConfigError(f"duplicate scenario names: {dup}")
        return specs, p.parent, p.name, quad
    if target in CATALOG:
        return [{"builtin": target}], None, target, None
    raise ConfigError(f"{target!r} is neither a scenario file nor a built-in scenario")


def cmd_run(args) -> int:
    specs, base_dir, source, file_quad = _load_scenarios(args.target)
    quad = QuadSettings.parse(args.quad if args.quad is not None else file_quad)
    seed = resolve_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results, errors = [], []
    for spec in specs:
        try:
            r = run_scenario(spec, base_dir, quad, seed)
        except (ConfigError, ValueError, FileNotFoundError):
            raise
        except SclcError as exc:
            # numerical refusal inside a well-formed scenario counts as a failed check
            name = spec.get("name", spec.get("builtin", "?"))
            r = ScenarioResult(name, spec.get("kind", "builtin"), [], {"spec": spec})
            r.check(f"raised {type(exc).__name__}", float("nan"), "completes without error", False)
            errors.append({"scenario": name, "error": type(exc).__name__, "message": str(exc)})
        results.append(r)
    for r in results:
        _emit_result(r, out if len(results) == 1 else out / r.name)
    report = _report_header("run", seed, quad)
    report.update(source=source, scenarios=[r.to_json() for r in results], errors=errors,
                  failures=_failures(results), passed=all(r.passed for r in results))
    write_json(report, out / "report.json")
    for r in results:
        for c in r.checks:
            print(f"[{'PASS' if c.passed else 'FAIL'}] {r.name}: {c.name} = {c.measured:.6g} (contract {c.contract})")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_catalog(args) -> int:
    entries = [{"name": e.name, "kind": e.kind, "modules": e.modules, "summary": e.summary}
               for e in CATALOG.values()]
    if args.json:
        print(json.dumps(entries, indent=2, sort_keys=True))
    else:
        width = max(len(e["name"]) for e in entries)
        for e in entries:
            print(f"{e['name']:<{width}}  {e['kind']:<9}  {e['summary']}  [{', '.join(e['modules'])}]")
    return EXIT_OK


# ------------------------------------------------------------------ sclc sum


def _pair_from_args(args):
    if args.A or args.B:
        if not (args.A and args.B):
            raise ConfigError("--A and --B must be given together")
        return make_pair(load_matrix(args.A, "A"), load_matrix(args.B, "B"), args.theta_A, args.theta_B)
    if args.pair == "commuting":
        return commuting_pair()
    if args.pair == "eps":
        return eps_pair(args.eps)
    return random_sectorial_pair(args.dim, resolve_seed(args.seed))


def _decay_rows(pair, cs, quad):
    rows = []
    for c in cs:
        b = dpg_bundle(pair, float(c), quad)
        rows.append([float(c), b.norm_P, b.norm_T])
    return rows


def _write_decay(out: Path, rows, title: str):
    write_csv(out / "decay_table.csv", ["c", "norm_P", "norm_T"], rows)
    pos = [r for r in rows if r[0] > 0]  # log axes
    if len(pos) > 1:
        plotting.plot_decay_table([r[0] for r in pos], [r[1] for r in pos], [r[2] for r in pos],
                                  out / "decay.png", title=title)


def cmd_sum(args) -> int:
    quad = QuadSettings.parse(args.quad)
    pair = _pair_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = resolve_seed(args.seed)
    report = _report_header(f"sum {args.action}", seed, quad)
    report["pair"] = {"A": matrix_to_json(pair.A), "B": matrix_to_json(pair.B), "theta_A": pair.theta_A,
                      "theta_B": pair.theta_B, "parabolicity": pair.parabolicity, "flags": pair.flags}
    ok = True
    sweep = np.logspace(0, 4, 9)
    if args.action == "fit-decay":
        fits = fit_decay(pair.A, pair.B, pair.theta_A, pair.theta_B)
        report["fits"] = {v: f.to_json() for v, f in fits.items()}
        ok = all(f.passed for f in fits.values())
        f0 = next(iter(fits.values()))
        rows = [[abs(l), abs(m), f0.norms[i, j]] for i, l in enumerate(f0.lambdas) for j, m in enumerate(f0.mus)]
        write_csv(out / "commutator_samples.csv", ["abs_lambda", "abs_mu", "norm"], rows)
        _write_decay(out, _decay_rows(pair, sweep, quad), "perturbation norms vs shift")
    elif args.action == "invert":
        si = sum_inverse(pair, args.c, quad)
        report["inverse"] = si.to_json()
        report["bundle"] = si.bundle.to_json()
        save_matrix_json(si.inv, out / "inverse.json")
        _write_decay(out, [[args.c, si.bundle.norm_P, si.bundle.norm_T]], "")
    elif args.action == "shift-search":
        search = find_shift(pair, args.nu, quad)
        report["shift_search"] = search.to_json()
        _write_decay(out, [list(h) for h in search.history], f"shift search, nu = {args.nu:g}")
    else:  # certify
        c0 = args.c if args.c is not None else find_shift(pair, 0.5, quad).c0
        cert = sum_sectoriality(pair, c0, args.omega, quad=quad)
        report["certificate"] = cert.to_json()
        report["c0"] = c0
        b = dpg_bundle(pair, c0, quad)
        _write_decay(out, [[c0, b.norm_P, b.norm_T]], "")
        ok = bool(np.isfinite(cert.kappa_safe))
    report["passed"] = ok
    write_json(report, out / "report.json")
    print(f"sum {args.action}: {'ok' if ok else 'FAILED'}; report at {out / 'report.json'}")
    return EXIT_OK if ok else EXIT_FAIL


# ------------------------------------------------------------------ sclc parabolic


def _problem_from_args(args, m: int | None = None):
    if args.problem:
        prob = load_problem(args.problem)
    else:
        prob = problem_from_json(dict(PARABOLIC_FAMILIES[args.family], m=m or 128))
    return prob.with_m(m) if m is not None else prob


def cmd_parabolic(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = resolve_seed(args.seed)
    report = _report_header(f"parabolic {args.action}", seed, QuadSettings.parse(args.quad))
    report["problem"] = Path(args.problem).name if args.problem else args.family
    if args.action == "solve":
        prob = _problem_from_args(args)
        sol = solve_nonautonomous(prob)
        o = oracle_direct(prob)
        report.update(sol.report())
        report["oracle_gap"] = float(np.linalg.norm(sol.u - o) / max(np.linalg.norm(o), 1e-300))
        report["config"] = {"T": prob.grid.T, "m": prob.grid.m, "p": prob.grid.p, "c_shift": prob.c_shift}
        cols = ["t"] + [f"re_u{k}" for k in range(sol.u.shape[1])]
        write_csv(out / "timeseries.csv", cols, [[t, *u.real] for t, u in zip(sol.t, sol.u)])
        plotting.plot_time_series(sol.t, sol.u, out / "timeseries.png", oracle=o)
    else:
        try:
            ms = [int(x) for x in args.m.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"--m expects a comma-separated list of integers, got {args.m!r}") from None
        if not ms:
            raise ConfigError("--m is empty")
        rows = mesh_sweep(lambda m: _problem_from_args(args, m), ms)
        cols = ["m", "mr_constant", "residual", "c_used", "patches_used", "oracle_gap"]
        write_csv(out / "mesh_sweep.csv", cols, [r[:6] for r in rows])
        mr = [r[1] for r in rows]
        report["table"] = [dict(zip(cols, r[:6])) for r in rows]
        report["mr_variation"] = (max(mr) - min(mr)) / min(mr)
        plotting.plot_lines(ms, {"mr constant": mr}, out / "mesh_sweep.png", "m", "mr constant",
                            "maximal-regularity ratio", logx=True)
    write_json(report, out / "report.json")
    print(f"parabolic {args.action}: report at {out / 'report.json'}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--quad", default=None, help='quadrature overrides, e.g. "decades=6,panels=4,arc=64"')
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default: $SCLC_SEED or built-in)")

    p = _Parser(prog="sclc", description="Sectorial operators, contour calculus and operator sums.")
    p.add_argument("--version", action="version", version=f"sclc {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", parents=[common], help="run a scenario file or a built-in scenario")
    r.add_argument("target", help="scenario JSON file or built-in name (see `sclc catalog`)")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("catalog", help="list built-in scenarios")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_catalog)

    s = sub.add_parser("sum", help="operator-sum tools")
    ssub = s.add_subparsers(dest="action", required=True, parser_class=_Parser)
    pair_opts = _Parser(add_help=False, parents=[common])
    pair_opts.add_argument("--pair", choices=["commuting", "eps", "random"], default="eps")
    pair_opts.add_argument("--eps", type=float, default=0.1)
    pair_opts.add_argument("--dim", type=int, default=6)
    pair_opts.add_argument("--A", default=None, help="matrix file (JSON or binary)")
    pair_opts.add_argument("--B", default=None, help="matrix file (JSON or binary)")
    pair_opts.add_argument("--theta-A", dest="theta_A", type=float, default=None)
    pair_opts.add_argument("--theta-B", dest="theta_B", type=float, default=None)
    pair_opts.add_argument("--out", required=True)
    ssub.add_parser("fit-decay", parents=[pair_opts])
    inv = ssub.add_parser("invert", parents=[pair_opts])
    inv.add_argument("--c", type=float, default=0.0)
    sh = ssub.add_parser("shift-search", parents=[pair_opts])
    sh.add_argument("--nu", type=float, default=0.5)
    ce = ssub.add_parser("certify", parents=[pair_opts])
    ce.add_argument("--omega", type=float, default=0.0, help="sector half-angle for the certificate")
    ce.add_argument("--c", type=float, default=None, help="shift (default: shift search at nu = 0.5)")
    s.set_defaults(func=cmd_sum)

    pa = sub.add_parser("parabolic", help="non-autonomous parabolic solver")
    psub = pa.add_subparsers(dest="action", required=True, parser_class=_Parser)
    prob_opts = _Parser(add_help=False, parents=[common])
    prob_opts.add_argument("--out", required=True)
    prob_opts.add_argument("--family", choices=sorted(PARABOLIC_FAMILIES), default="scalar-constant",
                           help="built-in problem used when --problem is absent")
    so = psub.add_parser("solve", parents=[prob_opts])
    so.add_argument("--problem", default=None)
    sw = psub.add_parser("sweep", parents=[prob_opts])
    sw.add_argument("--problem", default=None)
    sw.add_argument("--m", default="64,128,256")
    pa.set_defaults(func=cmd_parabolic)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _Usage as exc:
        print(f"sclc: usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"sclc: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SclcError as exc:
        print(f"sclc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
