"""Lazy partner search for an active goal.

Matches are built only around the specific goal and applied immediately:
occurrences are tried top-to-bottom, partner constraints are looked up via
the store indexes in the compiled join order, and the guard is tested as
soon as all of its variables are bound.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .store import NumberedConstraint, Store
from .syntax import Occurrence, Program, Rule
from .terms import Subst, entails, match


@dataclass(frozen=True)
class Match:
    occurrence: Occurrence
    rule: Rule
    phi: Subst
    propagated: tuple[NumberedConstraint, ...]  # partners matched to kept heads
    simplified: tuple[NumberedConstraint, ...]  # partners matched to removed heads

    @property
    def role(self) -> str:
        return self.occurrence.role

    def head_ids(self, goal_id: int) -> tuple[int, ...]:
        ids = [goal_id]
        ids += [nc.id for nc in self.propagated]
        ids += [nc.id for nc in self.simplified]
        return tuple(sorted(ids))


def iter_matches(store: Store, goal: NumberedConstraint,
                 program: Program) -> Iterator[Match]:
    """Complete rule-head matches containing the goal, in deterministic
    order: occurrence-major, then candidate ids ascending per join position.
    Liveness is only a snapshot; committing a match revalidates it.
    """
    eqs = store.eqs()
    for occ in program.occurrences.get(goal.constraint.pred, ()):
        rule = program.rules[occ.rule_index]
        phi0 = match(occ.pattern, goal.constraint, {})
        if phi0 is None:
            continue
        guard_done = occ.guard_at == 0
        if guard_done and not entails(eqs, phi0, rule.guard):
            continue
        yield from _search(store, goal, occ, rule, eqs, 0, phi0,
                           (goal.id,), (), (), guard_done)


def _search(store: Store, goal: NumberedConstraint, occ: Occurrence,
            rule: Rule, eqs, k: int, phi: Subst, used: tuple[int, ...],
            props: tuple[NumberedConstraint, ...],
            simps: tuple[NumberedConstraint, ...],
            guard_done: bool) -> Iterator[Match]:
    if k == len(occ.partners):
        if guard_done or entails(eqs, phi, rule.guard):
            yield Match(occ, rule, phi, props, simps)
        return
    entry = occ.partners[k]
    for nc in store.candidates(entry.pattern.pred, phi, entry.pattern):
        if nc.id in used:
            continue  # injective: distinct store elements per head position
        phi2 = match(entry.pattern, nc.constraint, phi)
        if phi2 is None:
            continue
        done2 = guard_done
        if not done2 and k + 1 >= occ.guard_at:
            if not entails(eqs, phi2, rule.guard):
                continue  # early guard scheduling prunes this branch
            done2 = True
        next_props = props + (nc,) if entry.role == "propagated" else props
        next_simps = simps + (nc,) if entry.role == "simplified" else simps
        yield from _search(store, goal, occ, rule, eqs, k + 1, phi2,
                           used + (nc.id,), next_props, next_simps, done2)
