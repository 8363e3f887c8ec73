"""Task-graph runtime.

Tasks declare the tile handles they read and write. Dependencies are
derived from insertion order (read-after-write, write-after-write and
write-after-read), so any schedule that respects the edges reproduces the
serial, insertion-ordered execution. Among ready tasks the one with the
highest priority runs first; ties go to the earliest inserted task.

The intended usage is phased: build a graph, execute it, build the next one.
"""
from __future__ import annotations

import heapq
import itertools
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Hashable, Iterable, List, Optional, Set, Tuple

from .tiled import TiledMatrix, TileHandle

# Priority bands. Critical-path work first, right-hand side updates later,
# right updates far above the diagonal after that, accumulator/Q updates last.
CRITICAL = 100
RIGHT_UPDATE = 10
FAR_UPDATE = 5
ACCUMULATE = 0

_buffer_ids = itertools.count()


class TaskError(RuntimeError):
    """A task kernel raised; the graph was aborted."""

    def __init__(self, label: str, cause: BaseException):
        super().__init__(f"task {label!r} failed: {cause!r}")
        self.label = label
        self.cause = cause


@dataclass(frozen=True)
class BufferHandle:
    """Dependency key for a non-tile object (e.g. an accumulator matrix)."""

    buffer_id: int
    label: str = field(default="", compare=False)


class Buffer:
    """Mutable slot shared between tasks; guarded by its handle."""

    __slots__ = ("handle", "value")

    def __init__(self, label: str = ""):
        self.handle = BufferHandle(next(_buffer_ids), label)
        self.value = None


@dataclass
class Task:
    kernel: Callable[[], object]
    reads: frozenset
    writes: frozenset
    priority: int = 0
    label: str = ""
    id: int = -1


@dataclass
class TaskRecord:
    task_id: int
    label: str
    worker: int
    start_ns: int
    end_ns: int


@dataclass
class ExecutionReport:
    records: List[TaskRecord]
    workers: int
    stalls: int = 0

    def to_json(self) -> str:
        return json.dumps(
            [{"label": r.label, "worker": r.worker, "start_ns": r.start_ns, "end_ns": r.end_ns} for r in self.records]
        )

    def by_task(self) -> Dict[int, TaskRecord]:
        return {r.task_id: r for r in self.records}


class TaskGraph:
    """Incrementally built DAG of tasks over tile and buffer handles."""

    def __init__(self, *matrices: TiledMatrix):
        self.tasks: List[Task] = []
        self._succ: List[Set[int]] = []
        self._npred: List[int] = []
        self._last_writer: Dict[Hashable, int] = {}
        self._readers: Dict[Hashable, List[int]] = {}
        self._matrices: Dict[int, TiledMatrix] = {}
        self._buffers: Set[BufferHandle] = set()
        self._state = "building"
        self._thread: Optional[threading.Thread] = None
        self._report: Optional[ExecutionReport] = None
        self._error: Optional[BaseException] = None
        for m in matrices:
            self.register(m)

    def register(self, m: TiledMatrix) -> None:
        self._matrices[m.id] = m

    def buffer(self, label: str = "") -> Buffer:
        b = Buffer(label)
        self._buffers.add(b.handle)
        return b

    def _check(self, h) -> None:
        if isinstance(h, TileHandle):
            m = self._matrices.get(h.matrix_id)
            gr, gc = (m.grid if m is not None else (0, 0))
            if m is None or not (0 <= h.row < gr and 0 <= h.col < gc):
                raise ValueError(f"unknown tile handle {h}")
        elif isinstance(h, BufferHandle):
            if h not in self._buffers:
                raise ValueError(f"unknown buffer handle {h}")
        else:
            raise ValueError(f"not a handle: {h!r}")

    def insert(
        self,
        kernel: Callable[[], object],
        reads: Iterable = (),
        writes: Iterable = (),
        priority: int = 0,
        label: str = "",
    ) -> int:
        if self._state != "building":
            raise RuntimeError("cannot insert into a graph that has been executed")
        reads = frozenset(_unwrap(reads))
        writes = frozenset(_unwrap(writes))
        for h in reads | writes:
            self._check(h)
        tid = len(self.tasks)
        self.tasks.append(Task(kernel, reads, writes, priority, label or f"task{tid}", tid))
        self._succ.append(set())
        self._npred.append(0)
        preds: Set[int] = set()
        for h in reads - writes:
            w = self._last_writer.get(h)
            if w is not None:
                preds.add(w)
            self._readers.setdefault(h, []).append(tid)
        for h in writes:
            w = self._last_writer.get(h)
            if w is not None:
                preds.add(w)
            preds.update(self._readers.get(h, ()))
            self._last_writer[h] = tid
            self._readers[h] = []
        preds.discard(tid)
        for p in preds:
            self._succ[p].add(tid)
        self._npred[tid] = len(preds)
        return tid

    def add(self, task: Task) -> int:
        return self.insert(task.kernel, task.reads, task.writes, task.priority, task.label)

    @property
    def edges(self) -> Set[Tuple[int, int]]:
        return {(u, v) for u, ss in enumerate(self._succ) for v in ss}

    def predecessors(self, tid: int) -> Set[int]:
        return {u for u, ss in enumerate(self._succ) if tid in ss}

    def __len__(self) -> int:
        return len(self.tasks)

    # execution -----------------------------------------------------------

    def run_serial(self) -> None:
        """Run every task in insertion order on the calling thread."""
        if self._state != "building":
            raise RuntimeError("graph already executed")
        self._state = "done"
        for t in self.tasks:
            try:
                t.kernel()
            except Exception as exc:
                raise TaskError(t.label, exc) from exc

    def execute(self, workers: int = 1, seed: int = 0, wait: bool = True) -> Optional[ExecutionReport]:
        if workers < 1:
            raise ValueError("workers must be >= 1")
        if self._state != "building":
            raise RuntimeError("graph already executed")
        self._state = "running"
        if wait:
            self._run(workers, seed)
            return self.wait_all()
        self._thread = threading.Thread(target=self._run, args=(workers, seed), daemon=True)
        self._thread.start()
        return None

    def wait_all(self) -> ExecutionReport:
        if self._state == "building":
            raise RuntimeError("execute() has not been called")
        if self._thread is not None:
            self._thread.join()
            self._thread = None
        if self._error is not None:
            raise self._error
        return self._report

    def _run(self, workers: int, seed: int) -> None:
        try:
            if workers == 1:
                self._report = self._run_inline()
            else:
                self._report = self._run_threads(workers, seed)
        except BaseException as exc:  # surfaced by wait_all
            self._error = exc
        finally:
            self._state = "done"

    def _run_inline(self) -> ExecutionReport:
        npred = list(self._npred)
        ready = [(-t.priority, t.id) for t in self.tasks if npred[t.id] == 0]
        heapq.heapify(ready)
        records = []
        while ready:
            _, tid = heapq.heappop(ready)
            t = self.tasks[tid]
            start = time.perf_counter_ns()
            try:
                t.kernel()
            except Exception as exc:
                raise TaskError(t.label, exc) from exc
            records.append(TaskRecord(tid, t.label, 0, start, time.perf_counter_ns()))
            for s in self._succ[tid]:
                npred[s] -= 1
                if npred[s] == 0:
                    heapq.heappush(ready, (-self.tasks[s].priority, s))
        return ExecutionReport(records, 1)

    def _run_threads(self, workers: int, seed: int) -> ExecutionReport:
        npred = list(self._npred)
        ready = [(-t.priority, t.id) for t in self.tasks if npred[t.id] == 0]
        heapq.heapify(ready)
        cond = threading.Condition()
        records: List[TaskRecord] = []
        state = {"done": 0, "stalls": 0, "error": None}
        total = len(self.tasks)

        def loop(wid: int) -> None:
            rng = random.Random(seed * 1000003 + wid)
            while True:
                with cond:
                    while not ready and state["done"] < total and state["error"] is None:
                        state["stalls"] += 1
                        cond.wait()
                    if state["error"] is not None or not ready:
                        return
                    _, tid = heapq.heappop(ready)
                t = self.tasks[tid]
                start = time.perf_counter_ns()
                try:
                    t.kernel()
                except Exception as exc:
                    with cond:
                        if state["error"] is None:
                            state["error"] = TaskError(t.label, exc)
                        cond.notify_all()
                    return
                end = time.perf_counter_ns()
                with cond:
                    records.append(TaskRecord(tid, t.label, wid, start, end))
                    state["done"] += 1
                    for s in self._succ[tid]:
                        npred[s] -= 1
                        if npred[s] == 0:
                            heapq.heappush(ready, (-self.tasks[s].priority, s))
                    cond.notify_all()
                if seed and rng.random() < 0.25:
                    time.sleep(0)

        threads = [threading.Thread(target=loop, args=(w,), daemon=True) for w in range(workers)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        if state["error"] is not None:
            raise state["error"]
        return ExecutionReport(records, workers, state["stalls"])


def _unwrap(handles: Iterable) -> Iterable:
    for h in handles:
        yield h.handle if isinstance(h, Buffer) else h


def insert(graph: TaskGraph, task: Task) -> int:
    return graph.add(task)


def execute(graph: TaskGraph, workers: int = 1, seed: int = 0) -> ExecutionReport:
    return graph.execute(workers, seed)


def wait_all(graph: TaskGraph) -> ExecutionReport:
    return graph.wait_all()


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("TASKEIG_WORKERS", "1")))
    except ValueError:
        return 1


class Engine:
    """What a phase needs to run its graphs: a worker count and a trace sink."""

    def __init__(self, workers: int | None = None, seed: int = 0, trace: bool = False):
        self.workers = default_workers() if workers is None else workers
        self.seed = seed
        self.trace = trace
        self.reports: List[ExecutionReport] = []
        self.graphs: List[TaskGraph] = []

    def run(self, graph: TaskGraph) -> ExecutionReport:
        report = graph.execute(self.workers, self.seed)
        if self.trace:
            self.reports.append(report)
            self.graphs.append(graph)
        return report

    def trace_records(self) -> List[dict]:
        out = []
        for gi, rep in enumerate(self.reports):
            for r in rep.records:
                out.append({"graph": gi, "label": r.label, "worker": r.worker, "start_ns": r.start_ns, "end_ns": r.end_ns})
        return out
