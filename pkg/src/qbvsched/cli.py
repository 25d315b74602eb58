"""Command line: ``qbvsched {schedule,validate,simulate,gantt}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .encoder import UnsupportedFeature, assertion_count, encode
from .netmodel import ModelError, Schedule, load_problem
from .simulator import SimConfig, SimulationError, isolation_probe, jitter_violations, simulate
from .smtlib import DecodeError, EncodingMismatch, decode_model, optimize_by_bisection, solve
from .validator import MalformedSchedule, check_schedule

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_UNSAT = 2
EXIT_TIMEOUT = 3
EXIT_INPUT = 4
EXIT_SOLVER = 5

_OBJECTIVES = {"none": "none", "e2e": "min-e2e-sum", "jitter": "min-jitter-sum"}


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _fail(code: int, msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _load_schedule(path, problem) -> Schedule:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"{path}: {exc}") from None
    return Schedule.from_json(data, problem)


def cmd_schedule(args) -> int:
    overrides = {"ordering": args.ordering, "arithmetic": args.arith,
                 "objective": _OBJECTIVES[args.objective] if args.objective else None,
                 "multi_period": True if args.multi_period else None}
    try:
        problem = load_problem(args.problem, **overrides)
        ir = encode(problem, problem.config)
    except (OSError, ModelError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    report = {"problem": str(args.problem), "config": ir.config.to_dict(),
              "assertions": assertion_count(ir)}
    try:
        if ir.objective is not None and args.bisect:
            res = optimize_by_bisection(ir, args.solver, args.timeout)
        else:
            res = solve(ir, args.solver, args.timeout, optimize=ir.objective is not None,
                        audit_path=args.emit_smt)
    except EncodingMismatch as exc:
        return _fail(EXIT_INPUT, str(exc))
    report.update({"status": res.status, "wall_ms": round(res.wall_ms, 3),
                   "objective": res.objective_value, "optimal": res.optimal})
    if res.status == "solver-error":
        report["raw"] = res.raw[-2000:]
        _dump(out / "report.json", report)
        return _fail(EXIT_SOLVER, "solver failed: " + res.raw.strip()[:200])
    if res.status != "sat":
        _dump(out / "report.json", report)
        print(res.status)
        return EXIT_UNSAT if res.status == "unsat" else EXIT_TIMEOUT
    try:
        schedule = decode_model(res, ir)
    except DecodeError as exc:
        report["status"] = "decode-error"
        report["error"] = str(exc)
        _dump(out / "report.json", report)
        return _fail(EXIT_SOLVER, str(exc))
    violations = check_schedule(problem, schedule)
    report["violations"] = [v.to_json() for v in violations]
    _dump(out / "schedule.json", schedule.to_json())
    _dump(out / "gcl.json", schedule.gcl_json())
    _dump(out / "report.json", report)
    if violations:
        return _fail(EXIT_VIOLATIONS, f"{len(violations)} violations in decoded schedule")
    print("sat")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        problem = load_problem(args.problem)
        schedule = _load_schedule(args.schedule, problem)
        violations = check_schedule(problem, schedule)
    except (OSError, ModelError, MalformedSchedule) as exc:
        return _fail(EXIT_INPUT, str(exc))
    print(json.dumps({"valid": not violations, "violations": [v.to_json() for v in violations]},
                     indent=2, sort_keys=True))
    return EXIT_OK if not violations else EXIT_VIOLATIONS


def cmd_simulate(args) -> int:
    try:
        problem = load_problem(args.problem)
        schedule = _load_schedule(args.schedule, problem)
        delta = args.delta if args.delta is not None else problem.config.delta
        cfg = SimConfig(cycles=args.cycles, delta=delta, seed=args.seed)
        trace = simulate(problem, schedule, cfg)
        summary = trace.summary()
        if not problem_multi_period(problem):
            summary["violations"] += jitter_violations(problem, trace)
        if args.loss:
            summary["isolation_probe"] = isolation_probe(problem, schedule, cfg)
    except (OSError, ModelError, SimulationError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    if args.trace:
        Path(args.trace).write_text(trace.to_jsonl())
    print(json.dumps(summary, indent=2, sort_keys=True))
    clean = not summary["violations"] and summary.get("isolation_probe", {}).get("deterministic", True)
    return EXIT_OK if clean else EXIT_VIOLATIONS


def problem_multi_period(problem) -> bool:
    if problem.config.multi_period is not None:
        return problem.config.multi_period
    return any(problem.link_hyperperiod(f.link) != f.period for f in problem.frames)


def render_gantt(data: dict, width: int = 64) -> str:
    """One text row per link; ``#`` marks open gate time."""
    ports = sorted(data.get("ports", []), key=lambda p: tuple(p["link"]))
    lines = [f"{'link':<16} {'cycle':>10}  schedule"]
    for p in ports:
        hp = p["hyperperiod_ns"]
        windows = sorted((w for w in p["windows"] if w["close"] > w["open"]),
                         key=lambda w: (w["open"], w["index"]))
        bar = ["."] * width
        for w in windows:
            a = w["open"] * width // hp
            b = max(a + 1, -(-w["close"] * width // hp))
            for i in range(a, min(b, width)):
                bar[i] = "#"
        labels = " ".join(
            f"w{w['index']}[{w['open']},{w['close']}]:" + ",".join(f"{f['stream']}.{f['repetition']}" for f in w["frames"])
            for w in windows)
        lines.append(f"{'-'.join(p['link']):<16} {hp:>10}  |{''.join(bar)}| {labels}")
    return "\n".join(lines)


def cmd_gantt(args) -> int:
    try:
        data = json.loads(Path(args.schedule).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    print(render_gantt(data, args.width))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qbvsched", description="802.1Qbv gate control list synthesis")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("schedule", help="synthesize a schedule with an SMT solver")
    sp.add_argument("problem")
    sp.add_argument("-o", "--output", default=".", help="directory for schedule/gcl/report JSON")
    sp.add_argument("--solver", default=None, help="solver command (default $QBVSCHED_SOLVER or 'z3 -in')")
    sp.add_argument("--timeout", type=float, default=60.0, help="seconds per solver call")
    sp.add_argument("--ordering", choices=["seq", "pairwise"])
    sp.add_argument("--arith", choices=["lin", "nia"])
    sp.add_argument("--objective", choices=sorted(_OBJECTIVES))
    sp.add_argument("--multi-period", action="store_true")
    sp.add_argument("--bisect", action="store_true", help="optimize by bisection instead of (minimize)")
    sp.add_argument("--seed", type=int, default=0, help="accepted for interface stability; encoding is deterministic")
    sp.add_argument("--emit-smt", metavar="PATH", help="also write the SMT-LIB2 document here")
    sp.set_defaults(func=cmd_schedule)

    vp = sub.add_parser("validate", help="check a schedule against a problem")
    vp.add_argument("schedule")
    vp.add_argument("problem")
    vp.set_defaults(func=cmd_validate)

    mp = sub.add_parser("simulate", help="replay a schedule in the gate simulator")
    mp.add_argument("schedule")
    mp.add_argument("problem")
    mp.add_argument("--cycles", type=int, default=1)
    mp.add_argument("--delta", type=int, default=None, help="clock offset spread (default: problem delta)")
    mp.add_argument("--seed", type=int, default=0)
    mp.add_argument("--loss", action="store_true", help="run the single-loss isolation probe")
    mp.add_argument("--trace", metavar="PATH", help="write the per-hop trace as JSON lines")
    mp.set_defaults(func=cmd_simulate)

    gp = sub.add_parser("gantt", help="text rendering of a schedule file")
    gp.add_argument("schedule")
    gp.add_argument("--width", type=int, default=64)
    gp.set_defaults(func=cmd_gantt)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UnsupportedFeature as exc:
        return _fail(EXIT_INPUT, str(exc))


if __name__ == "__main__":
    sys.exit(main())
