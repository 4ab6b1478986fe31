"""Command-line entry point: ``switchbench validate|solve|crosscheck|policy|simulate``.

Exit codes: 0 success, 1 I/O or parse error, 2 domain or validation error,
3 numerical failure (including a FAIL in crosscheck).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .hjb import CFLError, make_space_time_grid, solve_qvi, viscosity_residual
from .io import ProblemFileError, RunManifest, fmt, git_blob_hash, read_problem, write_json
from .lattice import LatticeSizeError, build_grid, build_tree, moment_diagnostic, simulate_paths
from .problem import AssumptionError, DriverError, StructureError, ensure_valid, validate
from .rbsde import (InnerDivergenceError, PicardDivergenceError, StepSizeError, monotone_solve,
                    picard_solve)
from .snell import ClosureError, jump_report, solve_capped, solve_full
from .strategy import (NonTerminationError, OracleSizeError, evaluate_policy, export_strategies_csv,
                       extract_epsilon_policy, max_switch_count, realize_strategies, sample_leaves)

EXIT_OK, EXIT_IO, EXIT_DOMAIN, EXIT_NUMERIC = 0, 1, 2, 3

DOMAIN_ERRORS = (StructureError, AssumptionError, DriverError, LatticeSizeError, CFLError, StepSizeError,
                 OracleSizeError)
NUMERIC_ERRORS = (PicardDivergenceError, InnerDivergenceError, ClosureError, NonTerminationError)


class UsageError(ValueError):
    """Method and problem do not fit together."""


def _say(args, msg: str) -> None:
    if not getattr(args, "quiet", False):
        print(msg)


def _grids(p, args):
    g = p.meta.get("grids", {})
    max_dt = args.max_dt if getattr(args, "max_dt", None) is not None else g.get("max_dt", 0.1)
    return max_dt, g.get("depth_cap", 22)


def _lattice(p, args):
    max_dt, cap = _grids(p, args)
    return build_tree(p, build_grid(p, max_dt), cap)


def _manifest(command: str, args, raw: bytes, p, config: dict) -> RunManifest:
    from .acceptance import threads
    cfg = dict(config)
    cfg["threads"] = threads()
    return RunManifest(command, cfg, git_blob_hash(raw), int(p.meta.get("seed", 0)), __version__)


def _finish(man: RunManifest, out: Path, files) -> None:
    for f in files:
        man.add_output(out / f)
    man.write(out / "manifest.json")


# ---- validate ------------------------------------------------------------------

def cmd_validate(args) -> int:
    p, _ = read_problem(args.file)
    rep = validate(p)
    doc = rep.to_json()
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "validation.json").write_text(text + "\n")
    if not args.quiet:
        print(text)
    if not rep.passed:
        bad = rep.failures()
        print("validation failed: " + "; ".join(f"assumption {c.name}: {c.message}" for c in bad), file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


# ---- solve ------------------------------------------------------------------------

def cmd_solve(args) -> int:
    p, raw = read_problem(args.file)
    ensure_valid(p)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {"file": Path(args.file).name, "method": args.method, "cap": args.cap, "max_dt": args.max_dt,
              "timings": bool(args.timings)}
    man = _manifest("solve", args, raw, p, config)
    files = []
    summary = {"method": args.method, "name": p.name}
    if args.method == "hjb":
        if p.r != 1:
            raise UsageError("the hjb method needs a one-dimensional state (r = 1)")
        g = p.meta.get("grids", {}).get("pde")
        if g is None:
            raise UsageError("the problem file has no grids.pde section")
        grid = make_space_time_grid(p, g["max_dt"], g["x_lo"], g["x_hi"], g["h"])
        vf = solve_qvi(p, grid)
        rep = viscosity_residual(vf, p, grid)
        rep.export_csv(out / "residuals.csv")
        files.append("residuals.csv")
        x0 = float(p.x0_array[0])
        summary.update({"v0": vf.value_at_x0(x0).tolist(), "cfl": grid.cfl, "nx": grid.nx,
                        "layers": grid.time.M + 1, "residuals": rep.summary()})
    else:
        lat = _lattice(p, args)
        if args.method == "tree":
            vf = solve_full(p, lat)
        elif args.method == "capped":
            if args.cap is None:
                raise UsageError("--method capped needs --cap N")
            vf = solve_capped(p, lat, args.cap)
        elif args.method == "picard":
            vf, log = picard_solve(p, lat)
            (out / "picard_log.jsonl").write_text(log.to_jsonl(with_seconds=args.timings))
            files.append("picard_log.jsonl")
            summary.update({"iterations": len(log.records), "final_distance": log.distances[-1],
                            "beta": log.beta})
        else:
            stages = monotone_solve(p, lat, args.stages, tol=0.0)
            vf = stages[-1]
            summary.update({"stages": len(stages) - 1, "y0_by_stage": [s.y0.tolist() for s in stages]})
        vf.export_csv(out / "values.csv")
        files.append("values.csv")
        if p.is_decoupled() or args.method in ("picard", "monotone"):
            _write_jumps(jump_report(vf, p, lat) if args.method != "capped" else [], out / "jumps.csv")
            files.append("jumps.csv")
        summary.update({"y0": vf.y0.tolist(), "layers": lat.M + 1, "nodes": lat.total_nodes()})
    write_json(out / "summary.json", summary)
    files.append("summary.json")
    _finish(man, out, files)
    _say(args, f"{args.method}: " + ", ".join(f"mode {i + 1} = {fmt(v)}"
                                               for i, v in enumerate(summary.get("y0", summary.get("v0", [])))))
    return EXIT_OK


def _write_jumps(records, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("t,layer,node_id,mode,y_pre,y_post,observed,predicted,ok\n")
        for r in records:
            fh.write(f"{fmt(r.t)},{r.layer},{r.node},{r.mode + 1},{fmt(r.y_pre)},{fmt(r.y_post)},"
                     f"{fmt(r.observed)},{fmt(r.predicted)},{int(r.ok)}\n")


# ---- crosscheck -----------------------------------------------------------------------

def cmd_crosscheck(args) -> int:
    from . import acceptance as acc
    only = None
    if args.only:
        only = {int(v) for v in args.only.split(",")}
    report = {"version": __version__, "criteria": []}
    files = None
    if args.file and not args.bundled:
        p, _ = read_problem(args.file)
        ok, vrep = acc.validation_gate(p)
        report["validation"] = vrep
        report["source"] = Path(args.file).name
        if not ok:
            report["status"] = "FAIL"
            _write_report(args, report)
            print("validation FAIL; no solver was run", file=sys.stderr)
            return EXIT_DOMAIN
        name = p.name or Path(args.file).stem
        suite = acc.Suite.single(name, p)
        files = {name: args.file}
    else:
        suite = acc.Suite.bundled()
        report["source"] = "bundled"
    echo = None if args.quiet else print
    results = acc.run_all(suite, only, files=files, echo=echo)
    report["criteria"] = [r.to_json() for r in results]
    failed = [r.id for r in results if r.status == acc.FAIL]
    report["status"] = "FAIL" if failed else "PASS"
    _write_report(args, report)
    return EXIT_NUMERIC if failed else EXIT_OK


def _write_report(args, report) -> None:
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "crosscheck.json", report)


# ---- policy --------------------------------------------------------------------------

def cmd_policy(args) -> int:
    p, raw = read_problem(args.file)
    ensure_valid(p)
    lat = _lattice(p, args)
    vf = solve_full(p, lat)
    pol = extract_epsilon_policy(vf, p, lat, args.eps)
    i = args.mode - 1
    if not 0 <= i < p.q:
        raise UsageError(f"--mode must be in 1..{p.q}")
    J = evaluate_policy(pol, p, lat, i)
    n_leaves = lat.n_nodes(lat.M)
    leaves = None if args.paths is None or args.paths >= n_leaves else sample_leaves(lat, args.paths, args.seed)
    strats = realize_strategies(pol, p, lat, i, leaves)
    summary = {"eps": args.eps, "mode": args.mode, "Y0": float(vf.y0[i]), "J": J, "gap": float(vf.y0[i]) - J,
               "bound": pol.bound, "max_switches": max_switch_count(pol, p, lat, i),
               "paths": len(strats), "eps_optimal": bool(J >= float(vf.y0[i]) - args.eps)}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        export_strategies_csv(strats, out / "strategies.csv")
        write_json(out / "policy_summary.json", summary)
        man = _manifest("policy", args, raw, p, {"file": Path(args.file).name, "eps": args.eps,
                                                 "mode": args.mode, "paths": args.paths, "seed": args.seed,
                                                 "max_dt": args.max_dt})
        _finish(man, out, ["strategies.csv", "policy_summary.json"])
    _say(args, f"J = {fmt(J)}, Y0 = {fmt(vf.y0[i])}, max switches {summary['max_switches']} "
               f"(bound {pol.bound})")
    return EXIT_OK if summary["eps_optimal"] else EXIT_NUMERIC


# ---- simulate -------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    p, raw = read_problem(args.file)
    ensure_valid(p)
    g = p.meta.get("grids", {})
    n = args.paths if args.paths is not None else g.get("n_paths", 1000)
    seed = args.seed if args.seed is not None else int(p.meta.get("seed", 0))
    max_dt, _ = _grids(p, args)
    ps = simulate_paths(p, build_grid(p, max_dt), n, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ps.dump(out / "paths.bin")
    moments = {f"p{k}": moment_diagnostic(ps, k).to_json() for k in (2, 4)}
    write_json(out / "moments.json", moments)
    man = _manifest("simulate", args, raw, p, {"file": Path(args.file).name, "paths": n, "seed": seed,
                                               "max_dt": max_dt})
    man.seed = seed
    _finish(man, out, ["paths.bin", "moments.json"])
    _say(args, f"{n} paths, {ps.grid.M + 1} layers, E sup|X|^2 = {fmt(moments['p2']['value'])}")
    return EXIT_OK


# ---- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="switchbench", description="Optimal switching solvers and cross-checks.")
    ap.add_argument("--version", action="version", version=f"switchbench {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check structure and assumptions of a problem file")
    v.add_argument("file")
    v.add_argument("--out")
    v.add_argument("--quiet", action="store_true")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("solve", help="solve a problem and write value tables")
    s.add_argument("file")
    s.add_argument("--method", choices=["tree", "capped", "picard", "monotone", "hjb"], default="tree")
    s.add_argument("--cap", type=int, help="switch cap for --method capped")
    s.add_argument("--stages", type=int, default=500, help="stage limit for --method monotone")
    s.add_argument("--max-dt", type=float, dest="max_dt", help="override grids.max_dt")
    s.add_argument("--out", required=True)
    s.add_argument("--timings", action="store_true", help="record wall-clock seconds in logs")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("crosscheck", help="run the acceptance checks on a file or the bundled suite")
    c.add_argument("file", nargs="?")
    c.add_argument("--bundled", action="store_true")
    c.add_argument("--only", help="comma-separated criterion numbers")
    c.add_argument("--out")
    c.add_argument("--quiet", action="store_true")
    c.set_defaults(func=cmd_crosscheck)

    po = sub.add_parser("policy", help="extract and evaluate the epsilon-optimal policy")
    po.add_argument("file")
    po.add_argument("--eps", type=float, required=True)
    po.add_argument("--mode", type=int, default=1)
    po.add_argument("--paths", type=int, help="number of sampled tree paths (default: all)")
    po.add_argument("--seed", type=int, default=0)
    po.add_argument("--max-dt", type=float, dest="max_dt")
    po.add_argument("--out")
    po.add_argument("--quiet", action="store_true")
    po.set_defaults(func=cmd_policy)

    si = sub.add_parser("simulate", help="simulate Euler paths of the state and report moments")
    si.add_argument("file")
    si.add_argument("--paths", type=int)
    si.add_argument("--seed", type=int)
    si.add_argument("--max-dt", type=float, dest="max_dt")
    si.add_argument("--out", required=True)
    si.add_argument("--quiet", action="store_true")
    si.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "crosscheck" and not args.file and not args.bundled:
        args.bundled = True
    try:
        return args.func(args)
    except ProblemFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DOMAIN_ERRORS + (UsageError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
