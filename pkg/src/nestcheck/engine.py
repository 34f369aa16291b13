"""Bottom-up evaluation of nested model-checking problems.

Independent subexpressions (let bindings, operator operands and meta-model
arguments) are evaluated concurrently. Checker runs go through a shared
result cache keyed by the canonical digest of the concrete model, so each
distinct (model, property, scale) is checked at most once per run. With
``jobs > 1`` checker runs execute in a process pool.
"""

from __future__ import annotations

import logging
import multiprocessing
import os
import threading
import time
from collections.abc import Mapping
from concurrent.futures import Future, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

from .checker import DEFAULT_SCALE, EPSILON, EXACT_THRESHOLD, CheckResult, mc
from .errors import EvaluationError, ModelNotFoundError, NestCheckError
from .expr import Const, Expr, Let, Lit, Mc, MetaInst, Op, StdRef
from .model import StandardModel, canonical_hash, parse_model
from .template import MetaModel, instantiate, parse_meta

log = logging.getLogger(__name__)


@dataclass
class Config:
    models_dir: Path | str = "."
    scale: int = DEFAULT_SCALE
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)
    cache: bool = True
    exact_threshold: int = EXACT_THRESHOLD
    epsilon: float = EPSILON
    # "inline" runs checks in the evaluating thread, "process" in worker
    # processes; "auto" picks inline for jobs == 1
    executor: str = "auto"

    def __post_init__(self):
        self.models_dir = Path(self.models_dir)
        if self.executor not in ("auto", "inline", "process"):
            raise ValueError(f"unknown executor {self.executor!r}")
        if self.scale < 1:
            raise ValueError("scale must be a positive integer")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


class Context(Mapping):
    """Immutable constant environment; :meth:`extend` returns a new context."""

    __slots__ = ("_data",)

    def __init__(self, data=None):
        self._data = dict(data or {})

    def __getitem__(self, key):
        return self._data[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def extend(self, pairs) -> "Context":
        data = dict(self._data)
        data.update(pairs)
        return Context(data)

    def __repr__(self):
        return f"Context({self._data!r})"


@dataclass(frozen=True)
class TaskReport:
    model: str  # canonical digest, hex
    name: str  # human-readable model reference with concrete arguments
    property: str
    value: int
    cached: bool
    hits: int
    time_ms: float
    states: int
    exact: bool

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "name": self.name,
            "property": self.property,
            "value": self.value,
            "cached": self.cached,
            "hits": self.hits,
            "time_ms": round(self.time_ms, 3),
            "states": self.states,
            "exact": self.exact,
        }


@dataclass
class RunResult:
    value: int
    tasks: list[TaskReport]
    invocations: dict[tuple, int]
    total_time_ms: float

    def __iter__(self):
        # allows ``value, tasks = run_problem(...)``
        return iter((self.value, self.tasks))

    def to_json(self) -> dict:
        return {
            "result": self.value,
            "tasks": [t.to_json() for t in self.tasks],
            "total_time_ms": round(self.total_time_ms, 3),
        }


class ModelLoader:
    """Resolves model names to ``<dir>/<name>.sm`` or ``<dir>/<name>.mm``.

    Each file is read and parsed once per loader.
    """

    def __init__(self, models_dir: Path):
        self.models_dir = Path(models_dir)
        self._lock = threading.Lock()
        self._cache: dict[str, StandardModel | MetaModel] = {}

    def load(self, name: str) -> StandardModel | MetaModel:
        with self._lock:
            if name in self._cache:
                return self._cache[name]
            sm = self.models_dir / f"{name}.sm"
            mm = self.models_dir / f"{name}.mm"
            if sm.is_file() and mm.is_file():
                raise ModelNotFoundError(name, f"model {name!r} is ambiguous: both {sm.name} and {mm.name} exist")
            if sm.is_file():
                model = parse_model(sm.read_text(), source=str(sm))
            elif mm.is_file():
                model = parse_meta(mm.read_text(), source=str(mm))
            else:
                raise ModelNotFoundError(name, f"model {name!r} not found in {self.models_dir} "
                                               f"(looked for {sm.name} and {mm.name})")
            self._cache[name] = model
            return model


class ResultCache:
    """Get-or-compute map from task key to a future ``CheckResult``.

    Concurrent requesters of one key share a single computation.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._lock = threading.Lock()
        self._futures: dict[tuple, Future] = {}
        self.invocations: dict[tuple, int] = {}
        self.hits: dict[tuple, int] = {}

    def get_or_compute(self, key: tuple, compute: Callable[[], Future]) -> tuple[Future, bool]:
        with self._lock:
            if self.enabled and key in self._futures:
                self.hits[key] = self.hits.get(key, 0) + 1
                return self._futures[key], True
            self.invocations[key] = self.invocations.get(key, 0) + 1
            fut = compute()
            if self.enabled:
                self._futures[key] = fut
            return fut, False


def _run_check(model: StandardModel, prop: str, scale: int, threshold: int, epsilon: float):
    start = time.perf_counter()
    result = mc(model, prop, scale, exact_threshold=threshold, epsilon=epsilon)
    return result, (time.perf_counter() - start) * 1000.0


def _pool_context():
    methods = multiprocessing.get_all_start_methods()
    ctx = multiprocessing.get_context("forkserver" if "forkserver" in methods else "spawn")
    if ctx.get_start_method() == "forkserver":
        ctx.set_forkserver_preload(["nestcheck.checker"])
    return ctx


class Engine:
    """Evaluates problem expressions under one configuration.

    Use as a context manager so that worker pools are shut down.
    """

    def __init__(self, config: Config | None = None, **kwargs):
        self.config = config or Config(**kwargs)
        self.loader = ModelLoader(self.config.models_dir)
        self.cache = ResultCache(self.config.cache)
        self._pool: ProcessPoolExecutor | None = None
        self._pool_lock = threading.Lock()
        self._reports_lock = threading.Lock()
        self._records: list[dict] = []

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    @property
    def _use_processes(self) -> bool:
        ex = self.config.executor
        return ex == "process" or (ex == "auto" and self.config.jobs > 1)

    # -- scheduling ----------------------------------------------------------

    def parallel_map(self, f: Callable, items: Sequence) -> list:
        """Apply ``f`` to independent items; results keep input order.

        If several items fail, the error of the leftmost one is raised.
        """
        items = list(items)
        if self.config.jobs == 1 or len(items) < 2:
            return [f(x) for x in items]
        with ThreadPoolExecutor(max_workers=min(len(items), self.config.jobs)) as ex:
            futures = [ex.submit(f, x) for x in items]
        return [fut.result() for fut in futures]

    def _submit_check(self, model, prop) -> Future:
        args = (model, prop, self.config.scale, self.config.exact_threshold, self.config.epsilon)
        if not self._use_processes:
            fut: Future = Future()
            try:
                fut.set_result(_run_check(*args))
            except BaseException as exc:  # delivered to every waiter
                fut.set_exception(exc)
            return fut
        with self._pool_lock:
            if self._pool is None:
                self._pool = ProcessPoolExecutor(max_workers=self.config.jobs, mp_context=_pool_context())
        return self._pool.submit(_run_check, *args)

    # -- evaluation ----------------------------------------------------------

    def eval(self, e: Expr, ctx: Context | Mapping | None = None) -> int:
        if not isinstance(ctx, Context):
            ctx = Context(ctx)
        if isinstance(e, Lit):
            return e.value
        if isinstance(e, Const):
            try:
                return ctx[e.name]
            except KeyError:
                raise EvaluationError(f"unbound constant {e.name!r}{_at(e)}") from None
        if isinstance(e, Op):
            a, b = self.parallel_map(lambda x: self.eval(x, ctx), [e.left, e.right])
            return _apply(e, a, b)
        if isinstance(e, Let):
            values = self.parallel_map(lambda x: self.eval(x, ctx), [x for _, x in e.bindings])
            return self.eval(e.body, ctx.extend(zip((n for n, _ in e.bindings), values)))
        if isinstance(e, Mc):
            model, name = self.eval_model(e.model, ctx)
            return self.check(model, e.prop, name).value
        raise TypeError(f"not an expression: {e!r}")

    def eval_model(self, ref, ctx: Context) -> tuple[StandardModel, str]:
        loaded = self.loader.load(ref.name)
        if isinstance(ref, StdRef):
            if isinstance(loaded, MetaModel):
                raise EvaluationError(f"{ref.name} is a meta model and needs arguments{_at(ref)}")
            return loaded, ref.name
        assert isinstance(ref, MetaInst)
        if isinstance(loaded, StandardModel):
            raise EvaluationError(f"{ref.name} is a standard model and takes no arguments{_at(ref)}")
        values = self.parallel_map(lambda x: self.eval(x, ctx), [x for _, x in ref.args])
        bindings = dict(zip((n for n, _ in ref.args), values))
        try:
            model = instantiate(loaded, bindings)
        except NestCheckError as exc:
            raise type(exc)(f"{ref.name}: {exc}{_at(ref)}") from None
        name = f"{ref.name}(" + ", ".join(f"{k}={bindings[k]}" for k in sorted(bindings)) + ")"
        return model, name

    def check(self, model: StandardModel, prop: str, name: str = "") -> CheckResult:
        key = (canonical_hash(model), prop, self.config.scale)
        fut, hit = self.cache.get_or_compute(key, lambda: self._submit_check(model, prop))
        result, elapsed = fut.result()
        if not hit:
            with self._reports_lock:
                self._records.append({"key": key, "name": name, "result": result, "time_ms": elapsed})
        return result

    def run(self, problem: Expr) -> RunResult:
        start = time.perf_counter()
        self._records = []
        value = self.eval(problem, Context())
        total = (time.perf_counter() - start) * 1000.0
        tasks = []
        for rec in self._records:
            key, result = rec["key"], rec["result"]
            hits = self.cache.hits.get(key, 0) if self.cache.enabled else 0
            tasks.append(TaskReport(model=key[0], name=rec["name"], property=key[1], value=result.value,
                                    cached=hits > 0, hits=hits, time_ms=rec["time_ms"],
                                    states=result.states, exact=result.exact))
        tasks.sort(key=lambda t: (t.name, t.property, t.model))
        return RunResult(value, tasks, dict(self.cache.invocations), total)


def _at(node) -> str:
    return f" at {node.pos[0]}:{node.pos[1]}" if getattr(node, "pos", None) else ""


def _apply(e: Op, a: int, b: int) -> int:
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if b == 0:
        raise EvaluationError(f"division by zero{_at(e)}")
    return a // b


def run_problem(problem: Expr, config: Config | None = None, **kwargs) -> RunResult:
    """Evaluate ``problem`` and report every executed verification task."""
    with Engine(config, **kwargs) as engine:
        return engine.run(problem)
