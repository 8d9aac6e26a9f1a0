"""The identified constraint store Sn and the goal multiset.

Every entry keeps two forms.  The raw form is the constraint exactly as it
entered the store; it is what dumps, side-effect projections and traces
show, and it never changes.  The normal form is the raw form under the
m.g.u. of the equation substore (with ground arithmetic evaluated); it is
what matching and the argument indexes use, and it is refreshed for the
woken entries whenever an equation arrives.

Dead entries are tombstoned, never physically removed, so a concurrent
reader can never observe a dangling id; they do disappear from index
lookups.  Equations only grow within a run.

All mutating operations take the store lock; `kill` of a set of ids is one
atomic transition, and `candidates` snapshots under the lock, so readers
see a linearization-consistent view.
"""
from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .terms import (Chr, Constraint, Eq, Subst, apply_subst, is_ground, mgu,
                    normalize_constraint, normalize_term, render_constraint,
                    render_term)


class DeadIdError(Exception):
    """A kill targeted an id that is not alive (a lost race, or a bug)."""


@dataclass(frozen=True)
class NumberedConstraint:
    constraint: Chr
    id: int

    def render(self) -> str:
        return f"{render_constraint(self.constraint)}#{self.id}"


GoalItem = Union[Constraint, NumberedConstraint]


class Store:
    def __init__(self):
        self.lock = threading.RLock()
        self._raw: dict[int, Chr] = {}   # as inserted, never rewritten
        self._norm: dict[int, Chr] = {}  # equation-normal matching view
        self._alive: set[int] = set()
        self._eqs: list[Eq] = []
        self._theta: Optional[Subst] = {}  # m.g.u. of _eqs; None once inconsistent
        self._pred_index: dict[str, dict[int, None]] = {}
        self._arg_index: dict[tuple[str, int, str], dict[int, None]] = {}
        self._next_id = 1
        self.inconsistent = False

    # ----------------------------------------------------------- queries

    def alive(self, cid: int) -> bool:
        return cid in self._alive

    def get(self, cid: int) -> NumberedConstraint:
        """The matching view (equation-normal form) of an entry."""
        return NumberedConstraint(self._norm[cid], cid)

    def get_raw(self, cid: int) -> NumberedConstraint:
        return NumberedConstraint(self._raw[cid], cid)

    def live_items(self) -> list[NumberedConstraint]:
        with self.lock:
            return [NumberedConstraint(self._raw[i], i)
                    for i in sorted(self._alive)]

    def eqs(self) -> tuple[Eq, ...]:
        with self.lock:
            return tuple(self._eqs)

    def theta(self) -> Optional[Subst]:
        return self._theta

    def size(self) -> int:
        return len(self._alive)

    # --------------------------------------------------------- mutation

    def _normalize(self, c: Chr) -> Chr:
        if self._theta:
            c = apply_subst(self._theta, c)
        return normalize_constraint(c)

    def _index_add(self, cid: int, c: Chr) -> None:
        self._pred_index.setdefault(c.pred, {})[cid] = None
        for pos, arg in enumerate(c.args):
            if is_ground(arg):
                key = (c.pred, pos, render_term(arg))
                self._arg_index.setdefault(key, {})[cid] = None

    def _index_remove(self, cid: int, c: Chr) -> None:
        self._pred_index.get(c.pred, {}).pop(cid, None)
        for pos, arg in enumerate(c.args):
            if is_ground(arg):
                bucket = self._arg_index.get((c.pred, pos, render_term(arg)))
                if bucket is not None:
                    bucket.pop(cid, None)

    def insert(self, c: Chr) -> NumberedConstraint:
        """Store c under a fresh id; ids are never reused.  Returns the raw
        form, which is also what trace lines show."""
        with self.lock:
            cid = self._next_id
            self._next_id += 1
            self._raw[cid] = c
            norm = self._normalize(c)
            self._norm[cid] = norm
            self._alive.add(cid)
            self._index_add(cid, norm)
            return NumberedConstraint(c, cid)

    def kill(self, ids: Iterable[int]) -> None:
        """Mark all ids dead as one atomic transition."""
        ids = set(ids)
        with self.lock:
            dead = ids - self._alive
            if dead:
                raise DeadIdError(sorted(dead))
            for cid in ids:
                self._alive.discard(cid)
                self._index_remove(cid, self._norm[cid])

    # --------------------------------------------------------- equations

    def wake_up(self, e: Eq) -> list[NumberedConstraint]:
        """The alive constraints whose equation-normal form would change if e
        were added: phi = mgu(eqs), theta = mgu(eqs + e), return every alive
        c#i with phi(c) != theta(c).  Flags inconsistency (and returns no
        constraints) when the extended equation set has no unifier.
        """
        with self.lock:
            theta = mgu(list(self._eqs) + [e])
            if theta is None:
                self.inconsistent = True
                return []
            phi = self._theta or {}
            woken = []
            for cid in sorted(self._alive):
                c = self._raw[cid]
                if apply_subst(phi, c) != apply_subst(theta, c):
                    woken.append(NumberedConstraint(c, cid))
            return woken

    def add_equation(self, e: Eq) -> list[NumberedConstraint]:
        """Move e into the equation substore and return the woken
        constraints.  One atomic step: no firing can interleave between the
        wake-up computation and the insertion.
        """
        with self.lock:
            woken = self.wake_up(e)
            self._eqs.append(e)
            if self.inconsistent:
                self._theta = None
                return []
            self._theta = mgu(self._eqs)
            for nc in woken:
                new = self._normalize(self._raw[nc.id])
                self._index_remove(nc.id, self._norm[nc.id])
                self._norm[nc.id] = new
                self._index_add(nc.id, new)
            return woken

    # ------------------------------------------------------------ search

    def candidates(self, pred: str, partial: Subst, pattern: Chr) -> list[NumberedConstraint]:
        """Alive constraints of the predicate that could match the pattern
        under the partial bindings, in their equation-normal form.  When
        some pattern argument is ground under `partial`, the per-argument
        hash index gives (expected) constant-time lookup; otherwise the
        predicate bucket is scanned.  Ascending id order; no constraint is
        yielded twice.
        """
        key = None
        for pos, arg in enumerate(pattern.args):
            inst = normalize_term(apply_subst(partial, arg))
            if is_ground(inst):
                key = (pred, pos, render_term(inst))
                break
        with self.lock:
            if key is not None:
                ids = sorted(self._arg_index.get(key, ()))
            else:
                ids = list(self._pred_index.get(pred, ()))  # insertion = id order
            return [NumberedConstraint(self._norm[i], i)
                    for i in ids if i in self._alive]

    # ------------------------------------------------------------ output

    def drop_ids(self) -> list[Constraint]:
        """The visible multiset: alive constraints without ids, plus eqs."""
        with self.lock:
            out: list[Constraint] = [self._raw[i] for i in sorted(self._alive)]
            out.extend(self._eqs)
            return out

    def dump(self) -> str:
        """One constraint per line: `pred(args)#id` sorted by id, then
        equations sorted lexicographically.  Bit-exact for golden tests."""
        with self.lock:
            lines = [NumberedConstraint(self._raw[i], i).render()
                     for i in sorted(self._alive)]
            lines.extend(sorted(render_constraint(e) for e in self._eqs))
        return "\n".join(lines)


@dataclass
class State:
    """A goal-based execution state: the goal multiset plus the store.

    Every numbered goal either has an alive same-id entry in the store or is
    stale (its entry was simplified while it waited) and is discarded when
    dequeued.
    """

    goals: deque = field(default_factory=deque)
    store: Store = field(default_factory=Store)

    def goal_ids(self) -> set[int]:
        return {g.id for g in self.goals if isinstance(g, NumberedConstraint)}
