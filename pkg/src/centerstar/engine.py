"""Chunked parallel map with an order-restoring reduce, plus run telemetry.

Worker threads receive a read-only shared context and disjoint item
chunks; results are consumed in ascending item index regardless of
completion order, so output is identical to a sequential fold at every
thread count. The shared context plays the role of a broadcast variable:
it must not be mutated while a stage runs.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field

try:
    import psutil
except ImportError:  # pragma: no cover
    psutil = None

from .errors import TaskPanic

_UNSET = object()


@dataclass(frozen=True)
class RunConfig:
    """threads == 0 means use the hardware thread count."""

    threads: int = 0
    chunk_size: int | None = None
    seed: int = 0

    def resolved_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        return os.cpu_count() or 1

    def resolved_chunk_size(self, n_items: int) -> int:
        if self.chunk_size is not None and self.chunk_size >= 1:
            return self.chunk_size
        threads = self.resolved_threads()
        return max(1, math.ceil(n_items / (8 * threads)))


@dataclass
class RunReport:
    """Per-stage wall times, task counts, and a peak-RSS estimate."""

    threads: int = 0
    stages: list[tuple[str, float]] = field(default_factory=list)
    tasks: dict[str, int] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)
    baseline_rss: int = 0
    peak_rss: int = 0

    def add_stage(self, name: str, seconds: float, n_tasks: int = 0) -> None:
        self.stages.append((name, seconds))
        if n_tasks:
            self.tasks[name] = n_tasks

    def bump(self, counter: str, amount: int) -> None:
        self.counters[counter] = self.counters.get(counter, 0) + int(amount)

    @property
    def total_seconds(self) -> float:
        return sum(t for _n, t in self.stages)

    @property
    def peak_rss_delta(self) -> int:
        return max(0, self.peak_rss - self.baseline_rss)

    def as_dict(self) -> dict:
        return {
            "threads": self.threads,
            "stages": {name: secs for name, secs in self.stages},
            "tasks": dict(self.tasks),
            "counters": dict(self.counters),
            "baseline_rss": self.baseline_rss,
            "peak_rss": self.peak_rss,
            "total_seconds": self.total_seconds,
        }

    def to_text(self) -> str:
        lines = [f"threads={self.threads}"]
        for name, secs in self.stages:
            lines.append(f"stage.{name}.seconds={secs:.6f}")
        for name, n in self.tasks.items():
            lines.append(f"stage.{name}.tasks={n}")
        for name, v in self.counters.items():
            lines.append(f"counter.{name}={v}")
        lines.append(f"total_seconds={self.total_seconds:.6f}")
        lines.append(f"baseline_rss={self.baseline_rss}")
        lines.append(f"peak_rss={self.peak_rss}")
        return "\n".join(lines)

    def write(self, path) -> None:
        """Emit the flat key=value file plus a JSON twin at <path>.json."""
        path = str(path)
        with open(path, "w") as fh:
            fh.write(self.to_text())
            fh.write("\n")
        with open(path + ".json", "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


class MemorySampler:
    """Background RSS sampler; records the peak seen between start and stop."""

    def __init__(self, interval: float = 0.02):
        self.interval = interval
        self.baseline = 0
        self.peak = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def _rss(self) -> int:
        if psutil is None:
            return 0
        return psutil.Process(os.getpid()).memory_info().rss

    def _run(self) -> None:
        while not self._stop.is_set():
            rss = self._rss()
            if rss > self.peak:
                self.peak = rss
            self._stop.wait(self.interval)

    def __enter__(self) -> "MemorySampler":
        self.baseline = self._rss()
        self.peak = self.baseline
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
        rss = self._rss()
        if rss > self.peak:
            self.peak = rss


def _chunks(n: int, size: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def par_map_reduce(
    items,
    shared,
    map_fn=None,
    reduce_fn=None,
    cfg: RunConfig = RunConfig(),
    *,
    init=_UNSET,
    stage: str = "map",
    report: RunReport | None = None,
    chunk_map_fn=None,
):
    """Parallel map over ``items`` with a deterministic ordered reduce.

    ``map_fn(item, shared)`` maps one item; alternatively
    ``chunk_map_fn(chunk_items, shared)`` maps a whole chunk at once and
    returns one result per item (useful when the chunk is processed inside
    a single GIL-releasing kernel call). Results are reduced left to right
    in item order with ``reduce_fn(acc, value)`` starting from ``init``;
    with no reduce_fn the ordered result list is returned. The first
    failing task's error is raised as TaskPanic and pending tasks are
    cancelled.
    """
    if (map_fn is None) == (chunk_map_fn is None):
        raise ValueError("provide exactly one of map_fn / chunk_map_fn")
    items = list(items)
    n = len(items)
    threads = cfg.resolved_threads()
    if report is None:
        report = RunReport(threads=threads)
    elif report.threads == 0:
        report.threads = threads

    chunk_size = cfg.resolved_chunk_size(max(n, 1))
    spans = _chunks(n, chunk_size)
    results: list = [None] * n

    def run_span(span):
        lo, hi = span
        if chunk_map_fn is not None:
            out = chunk_map_fn(items[lo:hi], shared)
            if len(out) != hi - lo:
                raise RuntimeError("chunk_map_fn must return one result per item")
            return lo, out
        return lo, [map_fn(items[i], shared) for i in range(lo, hi)]

    t0 = time.perf_counter()
    if n == 0:
        pass
    elif threads == 1 or len(spans) == 1:
        for idx, span in enumerate(spans):
            try:
                lo, out = run_span(span)
            except Exception as exc:
                raise TaskPanic(f"task {idx} failed: {exc}") from exc
            results[lo : lo + len(out)] = out
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(run_span, span): idx for idx, span in enumerate(spans)}
            done, pending = wait(futures, return_when=FIRST_EXCEPTION)
            failed = [f for f in done if f.exception() is not None]
            if failed:
                first = min(failed, key=lambda f: futures[f])
                for f in pending:
                    f.cancel()
                exc = first.exception()
                raise TaskPanic(f"task {futures[first]} failed: {exc}") from exc
            for f in done:
                lo, out = f.result()
                results[lo : lo + len(out)] = out
    elapsed = time.perf_counter() - t0
    report.add_stage(stage, elapsed, n_tasks=len(spans))

    if reduce_fn is None:
        return results, report
    acc = init
    start = 0
    if acc is _UNSET:
        if n == 0:
            raise ValueError("reduce of empty items with no init")
        acc = results[0]
        start = 1
    for idx in range(start, n):
        acc = reduce_fn(acc, results[idx])
    return acc, report
