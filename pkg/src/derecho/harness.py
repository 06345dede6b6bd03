"""Run orchestration shared by the CLI and the test suite."""

from __future__ import annotations

import itertools
import random
import time
from dataclasses import dataclass, field, replace
from typing import Optional

from .checker import OnlineChecker, all_passed, check_all
from .events import EXECUTE
from .sim import SimConfig, SimResult, SimStatus, Simulator
from .trace import read_trace, write_trace


@dataclass
class RunReport:
    config: SimConfig
    result: SimResult
    verdicts: list
    wall_time: float
    simulator: Optional[Simulator] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return (self.result.error is None and self.result.status is SimStatus.QUIESCENT
                and all_passed(self.verdicts))

    def executed_per_node(self) -> dict:
        """Execute events per node that is still up, in node order."""
        counts = dict.fromkeys(sorted(self.result.views), 0)
        for ev in self.result.events:
            if ev.kind == EXECUTE and ev.node in counts:
                counts[ev.node] += 1
        return counts

    def views_installed(self) -> dict:
        """Highest view id installed by each node that is still up."""
        return dict(sorted(self.result.views.items()))

    def summary_lines(self) -> list:
        res = self.result
        lines = [f"status: {res.status.value}  steps: {res.steps}  "
                 f"wall time: {self.wall_time:.3f}s"]
        if res.error is not None:
            lines.append(f"protocol bug: {type(res.error).__name__}: {res.error}")
        lines.append(f"views installed: {self.views_installed()}")
        lines.append(f"requests executed per node: {self.executed_per_node()}")
        for v in self.verdicts:
            lines.append(str(v))
            for ev in v.counterexample[:10]:
                lines.append(f"    {ev}")
        return lines


def run(config: SimConfig, trace_out=None, check: bool = True) -> RunReport:
    checker = OnlineChecker() if check else None
    sim = Simulator(config, listener=checker)
    started = time.perf_counter()
    result = sim.run()
    wall = time.perf_counter() - started
    verdicts = checker.verdicts(complete=True) if check else []
    if trace_out is not None:
        write_trace(trace_out, result.events)
    return RunReport(config, result, verdicts, wall, sim)


def recheck(trace_path) -> list:
    return check_all(read_trace(trace_path), complete=True)


def with_random_failure(config: SimConfig) -> SimConfig:
    """Crash a seed-chosen node at a seed-chosen step early in the run."""
    rng = random.Random(f"failure-{config.seed}-{config.num_nodes}-{config.window_size}")
    horizon = 20 * config.num_requests_per_client * max(config.num_clients, 1) + 50
    return replace(config, test_failure=True,
                   fail_node=rng.randrange(config.num_nodes),
                   fail_after=rng.randrange(horizon))


def sweep_configs(base: SimConfig, nodes, requests, windows, seeds, random_failure=False):
    for n, r, w, seed in itertools.product(nodes, requests, windows, range(seeds)):
        cfg = replace(base, num_nodes=n, num_requests_per_client=r, window_size=w, seed=seed)
        if random_failure:
            cfg = with_random_failure(cfg)
        yield cfg


def sweep(base: SimConfig, nodes, requests, windows, seeds, random_failure=False):
    """Run the cross product; returns (rows, failing configs).

    Each row is ``((nodes, requests, window), passed, failed)``.
    """
    if not (nodes and requests and windows) or seeds < 1:
        raise ValueError("sweep ranges must be nonempty")
    table = {}
    failures = []
    for cfg in sweep_configs(base, nodes, requests, windows, seeds, random_failure):
        report = run(cfg)
        cell = table.setdefault((cfg.num_nodes, cfg.num_requests_per_client, cfg.window_size),
                                [0, 0])
        if report.ok:
            cell[0] += 1
        else:
            cell[1] += 1
            failures.append(cfg)
    rows = [(key, passed, failed) for key, (passed, failed) in table.items()]
    return rows, failures
