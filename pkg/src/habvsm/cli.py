"""Command-line interface: scenario runs, standalone solving and diagnosis,
replay verification, and the isolation throughput benchmark."""

from __future__ import annotations

import argparse
import json
import sys


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="habvsm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario end to end")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--duration", type=float, default=None)
    p_run.add_argument("--out", default="run_out")
    p_run.add_argument("--serve", type=int, default=None, metavar="PORT",
                       help="serve the operator gateway while running")

    p_solve = sub.add_parser("solve", help="solve a scheduling problem file")
    p_solve.add_argument("problem_file")
    p_solve.add_argument("--budget-ms", type=int, default=5000)

    p_diag = sub.add_parser("diagnose", help="isolate faults from test results")
    p_diag.add_argument("model", help="diagnosis model file ([modes]/[tests])")
    p_diag.add_argument("results", help="lines of: test_id PASS|FAIL|UNKNOWN")

    p_replay = sub.add_parser("replay-check", help="compare two run logs byte for byte")
    p_replay.add_argument("log_a")
    p_replay.add_argument("log_b")

    p_bench = sub.add_parser("bench-isolation", help="synthetic isolation throughput")
    p_bench.add_argument("--modes", type=int, default=3500)
    p_bench.add_argument("--tests", type=int, default=2500)
    p_bench.add_argument("--frames", type=int, default=300)

    p_init = sub.add_parser("init-habitat", help="regenerate the habitat scenario files")
    p_init.add_argument("out_dir")

    args = parser.parse_args(argv)
    return {
        "run": _cmd_run,
        "solve": _cmd_solve,
        "diagnose": _cmd_diagnose,
        "replay-check": _cmd_replay,
        "bench-isolation": _cmd_bench,
        "init-habitat": _cmd_init,
    }[args.command](args)


def _cmd_run(args) -> int:
    from .gateway import Gateway
    from .runner import Runner
    from .scenario import ScenarioError, parse_scenario

    try:
        scenario = parse_scenario(args.scenario, seed_override=args.seed,
                                  duration_override=args.duration)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 1
    runner = Runner(scenario, args.out)
    gateway = None
    if args.serve is not None:
        gateway = Gateway(runner, port=args.serve)
        gateway.start()
        print(f"gateway listening on http://127.0.0.1:{gateway.port}")
    try:
        artifacts = runner.run()
    finally:
        if gateway is not None:
            gateway.stop()
    with open(artifacts.metrics_path, "r", encoding="utf-8") as fh:
        metrics = json.load(fh)
    counters = metrics["counters"]
    print(
        f"run complete: {counters['frames']} frames, "
        f"{counters['replans_periodic']} periodic / {counters['replans_event']} event replans, "
        f"{counters['faults_confirmed']} fault confirmations, "
        f"{counters['commands_issued']} commands"
    )
    print(f"artifacts in {artifacts.out_dir}")
    return artifacts.exit_status


def _cmd_solve(args) -> int:
    from .scheduling import SolveStatus, format_schedule, parse_problem_file, solve, validate

    with open(args.problem_file, "r", encoding="utf-8") as fh:
        problem = parse_problem_file(fh.read(), args.problem_file)
    result = solve(problem, args.budget_ms)
    print(f"status {result.status.value} ({result.nodes_explored} nodes)")
    if result.schedule is not None:
        sys.stdout.write(format_schedule(result.schedule))
        report = validate(result.schedule, problem)
        print(f"validator: {'clean' if report.ok else report.violations}")
    return 0 if result.status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE) else 3


def _cmd_diagnose(args) -> int:
    from .isolation import TestResults, Verdict, load_dmatrix

    dmatrix, _graph = load_dmatrix(args.model)
    outcomes = {}
    with open(args.results, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            test_id, outcome = line.split()
            outcomes[test_id] = outcome
    for test_id in dmatrix.test_ids:
        outcomes.setdefault(test_id, "UNKNOWN")
    results = TestResults(outcomes)
    isolation = dmatrix.isolate(results)
    if isolation.verdict == Verdict.NO_FAULT:
        print("NO_FAULT")
    elif isolation.verdict == Verdict.GROUP:
        kind = "exact" if isolation.group.exact else "ambiguity group"
        print(f"{kind}: {', '.join(sorted(isolation.group.modes))}")
    else:
        print("INCONSISTENT under single fault; minimal multi-fault diagnoses:")
        for diagnosis in dmatrix.isolate_multi(results):
            print("  " + " + ".join(sorted(diagnosis)))
    return 0


def _cmd_replay(args) -> int:
    from .runner import replay_check

    try:
        verdict, cycle = replay_check(args.log_a, args.log_b)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if verdict == "IDENTICAL":
        print("IDENTICAL")
        return 0
    print(f"DIVERGENT at cycle {cycle}")
    return 4


def _cmd_bench(args) -> int:
    from .bench import run_isolation_bench

    stats = run_isolation_bench(args.modes, args.tests, args.frames)
    print(
        f"{args.frames} frames over {args.modes} modes x {args.tests} tests: "
        f"mean {stats['mean_ms']:.2f} ms, p99 {stats['p99_ms']:.2f} ms, "
        f"max {stats['max_ms']:.2f} ms per frame"
    )
    budget = 1000.0
    ok = stats["max_ms"] <= budget
    print(f"1 Hz budget ({budget:.0f} ms): {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 5


def _cmd_init(args) -> int:
    from .habitat import build_habitat

    for path in build_habitat(args.out_dir):
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
