"""Multi-worker goal executor over one shared store.

Each worker repeatedly takes one goal and performs exactly one derivation
step against the shared store (single-step execution; goals are stored at
activation).  A firing found by scanning is only made real by an atomic
commit: under the store lock, every involved id is revalidated alive, and
the simplified ids must not have been propagated over by any firing that
committed after this scan began (the last-propagation-tick check).  The
second condition is what makes every pair of committed records whose
(start, commit) intervals overlap non-overlapping in the side-effect sense:
their simplified sets are disjoint from each other's propagated and
simplified sets.  An aborted commit mutated nothing; the worker resumes its
partner search, or rescans with a fresh start tick after a tick conflict.

Solve (equation insertion plus wake-up) runs in one store-lock critical
section, serialized against all commits, and the woken ids are recorded as
propagated at the solve's commit tick.
"""
from __future__ import annotations

import random
import threading
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

from .matching import iter_matches
from .store import NumberedConstraint, State, Store
from .syntax import Program
from .terms import Chr, Constraint, Eq, apply_subst, normalize_constraint
from .trace import CommitRecord, SideEffect, TraceStep

HistoryKey = tuple[str, tuple[int, ...]]


@dataclass
class EngineConfig:
    workers: int = 1
    seed: int = 0
    max_steps: Optional[int] = None
    solve_mode: str = "serialized"

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.solve_mode != "serialized":
            raise ValueError("only solve_mode='serialized' is implemented")


@dataclass
class ConcurrentResult:
    state: State
    trace: list[CommitRecord]
    history: set[HistoryKey]
    status: str  # done | failed | step-limit


class _Pool:
    """FIFO goal pool with seeded dequeue jitter (workers > 1 only) and a
    quiescence barrier: the run is over when every worker is idle and the
    pool is empty, both checked in one critical section."""

    def __init__(self, workers: int, rng: Optional[random.Random]):
        self.cond = threading.Condition()
        self.items: deque = deque()
        self.idle = 0
        self.workers = workers
        self.stopped = False
        self.rng = rng

    def push_many(self, items: Iterable) -> None:
        with self.cond:
            self.items.extend(items)
            self.cond.notify_all()

    def pop(self):
        with self.cond:
            while True:
                if self.stopped:
                    return None
                if self.items:
                    if self.rng is not None and len(self.items) > 1:
                        k = self.rng.randrange(min(len(self.items), 4))
                        self.items.rotate(-k)
                        item = self.items.popleft()
                        self.items.rotate(k)
                    else:
                        item = self.items.popleft()
                    return item
                self.idle += 1
                if self.idle == self.workers:
                    self.stopped = True  # all idle, pool empty: quiescent
                    self.cond.notify_all()
                    self.idle -= 1
                    return None
                self.cond.wait()
                self.idle -= 1

    def stop(self) -> None:
        with self.cond:
            self.stopped = True
            self.cond.notify_all()


class ConcurrentEngine:
    def __init__(self, program: Program, cfg: EngineConfig):
        if not program.occurrences and program.rules:
            raise ValueError("program was not compiled (no occurrence table)")
        self.program = program
        self.cfg = cfg
        self.store = Store()
        rng = random.Random(cfg.seed) if cfg.workers > 1 else None
        self.pool = _Pool(cfg.workers, rng)
        self.trace: list[CommitRecord] = []
        self.history: set[HistoryKey] = set()
        self.last_prop_tick: dict[int, int] = {}
        self._tick = 0
        self._tick_lock = threading.Lock()
        self._steps = 0
        self.status = "done"
        self._crashed: Optional[BaseException] = None

    # ------------------------------------------------------------- ticks

    def _next_tick(self) -> int:
        with self._tick_lock:
            self._tick += 1
            return self._tick

    def _stop(self, status: str) -> None:
        self.status = status
        self.pool.stop()

    def _count_step(self) -> None:
        self._steps += 1
        if self.cfg.max_steps is not None and self._steps >= self.cfg.max_steps:
            if self.status == "done":
                self._stop("step-limit")

    # ----------------------------------------------------------- commits

    def commit_firing(self, simplified: tuple[NumberedConstraint, ...],
                      propagated: tuple[NumberedConstraint, ...],
                      start_tick: int,
                      history_key: Optional[HistoryKey] = None) -> Optional[int]:
        """Atomically: revalidate every involved id alive, refuse simplified
        ids propagated over since start_tick, then kill the simplified set.
        Returns the commit tick, or None if nothing was mutated.  Raises
        _TickConflict when the scan must restart with a fresh start tick.
        """
        store = self.store
        with store.lock:
            if store.inconsistent:
                return None  # the run is failing; nothing may fire after that
            ids = [nc.id for nc in simplified] + [nc.id for nc in propagated]
            if not all(store.alive(i) for i in ids):
                return None  # lost race: some head died under us
            for nc in simplified:
                if self.last_prop_tick.get(nc.id, 0) >= start_tick:
                    raise _TickConflict
            if history_key is not None:
                if history_key in self.history:
                    return None  # another worker fired this instance first
                self.history.add(history_key)
            tick = self._next_tick()
            for nc in propagated:
                self.last_prop_tick[nc.id] = tick
            if simplified:
                store.kill([nc.id for nc in simplified])
            return tick

    def _record(self, step: TraceStep, worker: int, start: int) -> None:
        # called with the store lock held, so the list is ordered by seq
        self.trace.append(CommitRecord(step, worker, (start, step.seq)))
        self._count_step()

    # ------------------------------------------------------------- steps

    def _activate(self, c: Chr, local: deque, worker: int) -> None:
        start = self._next_tick()
        with self.store.lock:
            nc = self.store.insert(c)
            tick = self._next_tick()
            self._record(TraceStep(tick, "Activate", nc), worker, start)
        local.appendleft(nc)

    def solve_serialized(self, e: Eq, worker: int) -> list[NumberedConstraint]:
        """Equation insertion plus wake-up as one critical section against
        all commits; woken constraints are this step's propagated set."""
        start = self._next_tick()
        with self.store.lock:
            woken = self.store.add_equation(e)
            tick = self._next_tick()
            for nc in woken:
                self.last_prop_tick[nc.id] = tick
            self._record(
                TraceStep(tick, "Solve", e, SideEffect(propagated=tuple(woken))),
                worker, start)
            if self.store.inconsistent:
                self._stop("failed")
        if woken:
            self.pool.push_many(woken)
        return woken

    def _execute_numbered(self, goal: NumberedConstraint, local: deque,
                          worker: int) -> None:
        store = self.store
        while True:
            if not store.alive(goal.id):
                return  # stale goal: discarded on dequeue, no trace step
            goal = store.get(goal.id)
            start = self._next_tick()
            try:
                if self._try_fire(goal, local, worker, start):
                    return
            except _TickConflict:
                continue  # a concurrent commit raced us; rescan afresh
            # no occurrence fired: Drop (the goal stays in the store)
            with store.lock:
                if store.alive(goal.id):
                    tick = self._next_tick()
                    self._record(TraceStep(tick, "Drop", store.get(goal.id)),
                                 worker, start)
            return

    def _try_fire(self, goal: NumberedConstraint, local: deque, worker: int,
                  start: int) -> bool:
        for m in iter_matches(self.store, goal, self.program):
            if m.role == "simplified":
                simplified = (goal,) + m.simplified
                propagated = m.propagated
                key = None
            else:
                simplified = m.simplified
                propagated = (goal,) + m.propagated
                key = (m.rule.name, m.head_ids(goal.id))
                if key in self.history:
                    continue  # dirty check; the commit rechecks atomically
            delta = SideEffect(propagated=propagated, simplified=simplified)
            kind = "Simplify" if m.role == "simplified" else "Propagate"
            with self.store.lock:
                tick = self.commit_firing(simplified, propagated, start, key)
                if tick is not None:
                    self._record(
                        TraceStep(tick, kind, goal, delta, m.rule.name, m.phi),
                        worker, start)
            if tick is None:
                continue  # aborted: resume the partner search
            body = [normalize_constraint(apply_subst(m.phi, b))
                    for b in m.rule.body]
            if m.role == "propagated":
                local.appendleft(goal)  # stays active, behind its body goals
            local.extendleft(reversed(body))
            return True
        return False

    # --------------------------------------------------------------- run

    def _worker(self, wid: int) -> None:
        local: deque = deque()
        try:
            while True:
                if self.pool.stopped and self.status != "done":
                    break
                if local:
                    g = local.popleft()
                else:
                    g = self.pool.pop()
                    if g is None:
                        break
                if isinstance(g, NumberedConstraint):
                    self._execute_numbered(g, local, wid)
                elif isinstance(g, Eq):
                    self.solve_serialized(g, wid)
                else:
                    self._activate(g, local, wid)
        except BaseException as exc:  # propagate to the main thread
            self._crashed = exc
            self._stop("failed")
        finally:
            if local:
                self.pool.push_many(local)

    def run(self, goals: Iterable[Constraint]) -> ConcurrentResult:
        self.pool.items.extend(normalize_constraint(g) for g in goals)
        threads = [threading.Thread(target=self._worker, args=(w,), daemon=True)
                   for w in range(self.cfg.workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if self._crashed is not None:
            raise self._crashed
        state = State(goals=deque(self.pool.items), store=self.store)
        return ConcurrentResult(state, self.trace, self.history, self.status)


class _TickConflict(Exception):
    """A simplified id was propagated over after the scan started."""


def run_concurrent(goals: Iterable[Constraint], program: Program,
                   cfg: Optional[EngineConfig] = None) -> ConcurrentResult:
    engine = ConcurrentEngine(program, cfg or EngineConfig())
    return engine.run(goals)


# ------------------------------------------------- overlap decomposition

@dataclass(frozen=True)
class PairComposition:
    seq1: int
    seq2: int
    prop_ids: tuple[int, ...]
    simp_ids: tuple[int, ...]


@dataclass(frozen=True)
class OverlapViolation:
    seq1: int
    seq2: int
    detail: str


def _overlaps(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def decompose_k(records: list[CommitRecord]
                ) -> tuple[list[PairComposition], Optional[OverlapViolation]]:
    """Check that all time-overlapping committed steps with side-effects are
    reducible to nested pairwise concurrent compositions: every overlapping
    pair's side-effects must be non-overlapping (one's simplified set is
    disjoint from the other's propagated and simplified sets).  Returns the
    composable pairs, or the first offending pair.
    """
    effectful = [r for r in records
                 if r.step.delta.prop_ids or r.step.delta.simp_ids]
    pairs: list[PairComposition] = []
    for i in range(len(effectful)):
        for j in range(i + 1, len(effectful)):
            a, b = effectful[i], effectful[j]
            if a.interval is None or b.interval is None:
                continue
            if not _overlaps(a.interval, b.interval):
                continue
            s1, p1 = set(a.step.delta.simp_ids), set(a.step.delta.prop_ids)
            s2, p2 = set(b.step.delta.simp_ids), set(b.step.delta.prop_ids)
            if s1 & (p2 | s2) or s2 & (p1 | s1):
                clash = sorted((s1 & (p2 | s2)) | (s2 & (p1 | s1)))
                return pairs, OverlapViolation(
                    a.seq, b.seq, f"shared ids {clash}")
            pairs.append(PairComposition(
                a.seq, b.seq,
                tuple(sorted(p1 | p2)), tuple(sorted(s1 | s2))))
    return pairs, None


def overlapping_firing_pairs(records: list[CommitRecord]) -> int:
    """How many pairs of committed rule firings genuinely overlapped in time
    (used to show the overlap audit is not vacuous)."""
    firings = [r for r in records if r.step.kind in ("Simplify", "Propagate")]
    count = 0
    for i in range(len(firings)):
        for j in range(i + 1, len(firings)):
            if _overlaps(firings[i].interval, firings[j].interval):
                count += 1
    return count


# ------------------------------------------------ rejected engine variants

# Test-only executors reproducing the classic pitfalls of naive concurrent
# goal execution.  Each runs its logical threads in deterministic lockstep
# rounds: every thread picks its next step against the round-start view,
# then all effects are applied in thread order.  The shipped engine avoids
# all three by storing at activation, sharing one store, and committing
# single steps.

PITFALL_VARIANTS = ("store_on_drop", "split_store", "multi_step")


def run_pitfall_variant(goals_per_thread: list[list[Constraint]],
                        program: Program, variant: str) -> State:
    if variant not in PITFALL_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    queues = [deque(normalize_constraint(g) for g in gs)
              for gs in goals_per_thread]
    n = len(queues)
    entries: dict[int, Chr] = {}  # the real (union) store
    visible: list[dict[int, Chr]] = [entries for _ in range(n)]
    if variant == "split_store":
        visible = [{} for _ in range(n)]
    next_id = 1

    def scan(view: dict[int, Chr], nc: NumberedConstraint):
        temp = Store()
        remap: dict[int, int] = {}
        for cid in sorted(view):
            got = temp.insert(view[cid])
            remap[got.id] = cid
        mine = temp.insert(nc.constraint)
        remap[mine.id] = nc.id
        for m in iter_matches(temp, mine, program):
            if m.role == "simplified":
                kill = [nc.id] + [remap[x.id] for x in m.simplified]
            else:
                kill = [remap[x.id] for x in m.simplified]
            body = [normalize_constraint(apply_subst(m.phi, b))
                    for b in m.rule.body]
            return kill, body, m.role
        return None

    while any(queues):
        # decision phase: every thread inspects the round-start view
        plans = []
        for t in range(n):
            if not queues[t]:
                plans.append(None)
                continue
            steps = 2 if variant == "multi_step" else 1
            view = dict(visible[t])
            acts = []
            for _ in range(steps):
                if not queues[t]:
                    break
                g = queues[t].popleft()
                if isinstance(g, Chr):
                    nc = NumberedConstraint(g, next_id)
                    next_id += 1
                    if variant != "store_on_drop":
                        view[nc.id] = nc.constraint
                        acts.append(("store", nc))
                    queues[t].appendleft(nc)
                elif isinstance(g, NumberedConstraint):
                    found = scan(view, g)
                    if found is None:
                        acts.append(("drop", g))
                        view[g.id] = g.constraint  # visible once dropped/stored
                    else:
                        kill, body, role = found
                        for cid in kill:
                            view.pop(cid, None)
                        acts.append(("fire", g, kill, body, role))
                else:
                    raise ValueError("equations are not supported in pitfall runs")
            plans.append(acts)
        # apply phase, thread order
        for t, acts in enumerate(plans):
            if not acts:
                continue
            for act in acts:
                if act[0] == "store":
                    visible[t][act[1].id] = act[1].constraint
                    if variant == "split_store":
                        entries[act[1].id] = act[1].constraint
                elif act[0] == "drop":
                    visible[t][act[1].id] = act[1].constraint
                    entries[act[1].id] = act[1].constraint
                else:
                    _, g, kill, body, role = act
                    if any(cid not in entries and cid != g.id for cid in kill):
                        queues[t].appendleft(g)  # lost the round; retry
                        continue
                    for cid in kill:
                        entries.pop(cid, None)
                        visible[t].pop(cid, None)
                    if role == "propagated":
                        queues[t].appendleft(g)
                    for b in reversed(body):
                        queues[t].appendleft(b)

    final = Store()
    order = sorted(entries)
    for cid in order:
        final.insert(entries[cid])
    return State(goals=deque(), store=final)
