"""Command-line entry point.

    derecho-sim run --nodes 3 --requests 10 --window-size 10 --trace-out run.jsonl
    derecho-sim recheck run.jsonl
    derecho-sim sweep --nodes 3,5 --requests 10,100 --window-size 1,10 --seeds 20

Every flag can also be set through an environment variable named
``DERECHO_<FLAG>`` (for example ``DERECHO_WINDOW_SIZE=400``).
Exit status: 0 all checks pass, 1 a check or the run failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict

from . import harness
from .checker import all_passed, check_all
from .errors import ConfigError
from .sim import SimConfig
from .steady_state import BUFFER_GUARDS
from .threaded import run_threaded
from .trace import TraceFormatError, write_trace

ENV_PREFIX = "DERECHO_"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _env(dest, default):
    return os.environ.get(ENV_PREFIX + dest.upper(), default)


def _int_list(text):
    try:
        values = [int(part) for part in str(text).split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return values


def _add_sim_flags(p, multi=False):
    kind = _int_list if multi else int
    p.add_argument("--nodes", type=kind, default=_env("nodes", "3"))
    p.add_argument("--clients", type=int, default=_env("clients", "1"))
    p.add_argument("--requests", type=kind, default=_env("requests", "10"),
                   help="requests per client")
    p.add_argument("--window-size", type=kind, default=_env("window_size", "10"))
    p.add_argument("--fail-node", type=int, default=_env("fail_node", None))
    p.add_argument("--fail-after", type=int, default=_env("fail_after", "0"))
    p.add_argument("--max-steps", type=int, default=_env("max_steps", "1000000"))
    p.add_argument("--detection-delay", type=int, default=_env("detection_delay", "50"))
    p.add_argument("--late-detector", type=int, default=_env("late_detector", None),
                   help="survivor that learns of the crash late")
    p.add_argument("--late-by", type=int, default=_env("late_by", "0"))
    p.add_argument("--client-timeout", type=int, default=_env("client_timeout", "3000"))
    p.add_argument("--buffer-guard", choices=sorted(BUFFER_GUARDS),
                   default=_env("buffer_guard", "eq"))
    p.add_argument("--legacy-leader-selection", action="store_true",
                   default=_env("legacy_leader_selection", "") not in ("", "0"))


def build_parser():
    parser = argparse.ArgumentParser(prog="derecho-sim", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate one configuration and check it")
    _add_sim_flags(run_p)
    run_p.add_argument("--seed", type=int, default=_env("seed", "0"))
    run_p.add_argument("--trace-out", default=_env("trace_out", None))
    run_p.add_argument("--no-check", action="store_true",
                       default=_env("no_check", "") not in ("", "0"))
    run_p.add_argument("--threaded", action="store_true",
                       default=_env("threaded", "") not in ("", "0"),
                       help="benchmark mode: one thread per node, not reproducible")

    re_p = sub.add_parser("recheck", help="run the offline checks on a stored trace")
    re_p.add_argument("trace")

    sw_p = sub.add_parser("sweep", help="run a configuration cross product over seeds")
    _add_sim_flags(sw_p, multi=True)
    sw_p.add_argument("--seeds", type=int, default=_env("seeds", "20"))
    sw_p.add_argument("--random-failure", action="store_true",
                      default=_env("random_failure", "") not in ("", "0"),
                      help="crash a seed-chosen node at a seed-chosen step in every run")
    return parser


def config_from_args(args, nodes=None, requests=None, window=None, seed=0) -> SimConfig:
    cfg = SimConfig(
        num_nodes=args.nodes if nodes is None else nodes,
        num_clients=args.clients,
        num_requests_per_client=args.requests if requests is None else requests,
        window_size=args.window_size if window is None else window,
        test_failure=args.fail_node is not None,
        fail_node=args.fail_node if args.fail_node is not None else 0,
        fail_after=args.fail_after,
        seed=seed,
        max_steps=args.max_steps,
        detection_delay=args.detection_delay,
        late_detector=args.late_detector,
        late_by=args.late_by,
        client_timeout=args.client_timeout,
        buffer_guard=args.buffer_guard,
        reset_agreement=not args.legacy_leader_selection,
        follow_new_leader=not args.legacy_leader_selection,
    )
    cfg.validate()
    return cfg


def cmd_run(args, out) -> int:
    cfg = config_from_args(args, seed=args.seed)
    if args.threaded:
        return cmd_bench(cfg, args, out)
    report = harness.run(cfg, trace_out=args.trace_out, check=not args.no_check)
    print("config: " + " ".join(f"{k}={v}" for k, v in asdict(cfg).items()), file=out)
    for line in report.summary_lines():
        print(line, file=out)
    if args.trace_out:
        print(f"trace written to {args.trace_out}", file=out)
    if args.no_check:
        return EXIT_OK if report.result.error is None else EXIT_FAIL
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_bench(cfg, args, out) -> int:
    if cfg.test_failure:
        raise UsageError("benchmark mode does not inject failures")
    result = run_threaded(cfg)
    print(f"threaded run: wall time {result.wall_time:.3f}s, "
          f"{'all' if result.completed else 'NOT all'} requests answered", file=out)
    if args.trace_out:
        write_trace(args.trace_out, result.events)
    if args.no_check:
        return EXIT_OK if result.completed else EXIT_FAIL
    verdicts = check_all(result.events, complete=True)
    for v in verdicts:
        print(v, file=out)
    return EXIT_OK if result.completed and all_passed(verdicts) else EXIT_FAIL


def cmd_recheck(args, out) -> int:
    verdicts = harness.recheck(args.trace)
    for v in verdicts:
        print(v, file=out)
        for ev in v.counterexample[:10]:
            print(f"    {ev}", file=out)
    return EXIT_OK if all_passed(verdicts) else EXIT_FAIL


def cmd_sweep(args, out) -> int:
    if not args.nodes or not args.requests or not args.window_size or args.seeds < 1:
        raise UsageError("sweep ranges must be nonempty")
    base = config_from_args(args, nodes=args.nodes[0], requests=args.requests[0],
                            window=args.window_size[0])
    for n in args.nodes:
        config_from_args(args, nodes=n, requests=args.requests[0], window=args.window_size[0])
    rows, failures = harness.sweep(base, args.nodes, args.requests, args.window_size,
                                   args.seeds, random_failure=args.random_failure)
    print(f"{'nodes':>5} {'requests':>8} {'window':>6} {'pass':>5} {'fail':>5}", file=out)
    for (n, r, w), passed, failed in rows:
        print(f"{n:>5} {r:>8} {w:>6} {passed:>5} {failed:>5}", file=out)
    total = sum(p + f for _, p, f in rows)
    print(f"{total} runs, {len(failures)} failed", file=out)
    for cfg in failures:
        print("FAILED: " + " ".join(f"{k}={v}" for k, v in asdict(cfg).items()), file=out)
    return EXIT_FAIL if failures else EXIT_OK


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    handlers = {"run": cmd_run, "recheck": cmd_recheck, "sweep": cmd_sweep}
    try:
        return handlers[args.command](args, out)
    except (ConfigError, UsageError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
