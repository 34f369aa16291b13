"""Wall-time comparison of nested and flattened checking of the cluster case study."""

from __future__ import annotations

import json
import logging
import statistics
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

from .cluster import FLAT_PROBLEM, FLAT_SAFETY_BOUND, ClusterParams, write_cluster_files
from .engine import Config, run_problem
from .expr import parse_problem

log = logging.getLogger(__name__)

MODES = ("nested", "flat")


@dataclass
class BenchRow:
    nodes: int
    mode: str
    status: str  # "ok" or "refused"
    result: int | None = None
    time_ms: float | None = None
    runs_ms: list[float] = field(default_factory=list)
    tasks: int = 0
    states: int = 0


@dataclass
class BenchReport:
    scale: int
    repeats: int
    jobs: int
    executor: str
    rows: list[BenchRow] = field(default_factory=list)

    def row(self, nodes: int, mode: str) -> BenchRow:
        for r in self.rows:
            if r.nodes == nodes and r.mode == mode:
                return r
        raise KeyError((nodes, mode))

    def to_json(self) -> dict:
        return {
            "scale": self.scale,
            "repeats": self.repeats,
            "jobs": self.jobs,
            "executor": self.executor,
            "rows": [asdict(r) for r in self.rows],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    def to_table(self) -> str:
        """Plain-text table with one column per cluster size."""
        sizes = sorted({r.nodes for r in self.rows})
        modes = [m for m in MODES if any(r.mode == m for r in self.rows)]
        header = ["Number of Nodes"] + [str(n) for n in sizes]
        lines = [header]
        for mode in modes:
            times, results = [f"Runtime {mode} (ms)"], [f"Result {mode}"]
            for n in sizes:
                try:
                    r = self.row(n, mode)
                except KeyError:
                    times.append("-")
                    results.append("-")
                    continue
                if r.status == "ok":
                    times.append(f"{r.time_ms:.0f}")
                    results.append(str(r.result))
                else:
                    times.append(r.status)
                    results.append("-")
            lines += [times, results]
        widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
        return "\n".join(" | ".join(c.rjust(w) for c, w in zip(row, widths)) for row in lines)


def _warm_up(config: Config) -> None:
    # start the worker machinery once so the first timed row does not pay for it
    with tempfile.TemporaryDirectory() as d:
        Path(d, "W.sm").write_text("kind lts\ninit s\ntrans s s\n")
        run_problem(parse_problem("mc(W, \"deadlockfree\")"), Config(**{**asdict(config), "models_dir": d}))


def time_problem(problem_text: str, config: Config, repeats: int) -> tuple[list[float], object]:
    """Run a problem ``repeats`` times; returns per-run wall times (ms) and the last result."""
    problem = parse_problem(problem_text)
    runs, result = [], None
    for _ in range(repeats):
        start = time.perf_counter()
        result = run_problem(problem, config)
        runs.append((time.perf_counter() - start) * 1000.0)
    return runs, result


def bench_cluster(
    sizes: Iterable[int],
    params: ClusterParams,
    *,
    modes: Iterable[str] = MODES,
    scale: int = 1000,
    repeats: int = 5,
    jobs: int | None = None,
    executor: str = "auto",
    flat_limit: int = FLAT_SAFETY_BOUND,
) -> BenchReport:
    """Time both pipelines for every cluster size.

    File generation is excluded from the timings; each timed run loads,
    instantiates and checks the models from scratch.
    """
    modes = list(modes)
    base = Config(scale=scale, executor=executor, **({} if jobs is None else {"jobs": jobs}))
    report = BenchReport(scale, repeats, base.jobs, executor)
    _warm_up(base)
    for n in sizes:
        p = params.with_nodes(n)
        for mode in modes:
            if mode == "flat" and n > flat_limit:
                report.rows.append(BenchRow(n, mode, "refused"))
                continue
            with tempfile.TemporaryDirectory() as d:
                write_cluster_files(p, d, scale=scale, flat=(mode == "flat"), safety_bound=flat_limit)
                text = Path(d, "cluster.nmc").read_text() if mode == "nested" else FLAT_PROBLEM
                cfg = Config(**{**asdict(base), "models_dir": d})
                runs, res = time_problem(text, cfg, repeats)
            row = BenchRow(n, mode, "ok", res.value, statistics.fmean(runs), runs,
                           len(res.tasks), sum(t.states for t in res.tasks))
            log.info("N=%d %s: result %d, %.1f ms", n, mode, row.result, row.time_ms)
            report.rows.append(row)
    return report
