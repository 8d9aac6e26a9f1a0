"""Executable correspondence checks over serialized traces.

The verifier re-executes trace text against its own minimal store replica;
it deliberately does not reuse the engines' store, goal pool or matching
machinery, so an engine bug cannot mask itself.  Checks:

  replay           every step's preconditions hold at its turn in seq order,
                   and the replayed final store dump equals the engine's
  project_abstract after each step the id-erased state is unchanged or one
                   valid abstract rewrite away
  check_final      a finished state's visible store admits no more rewrites
  audit_overlap    time-overlapping commits have non-overlapping side-effects
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional

from .abstract import AbstractStore, rewrite_steps, validate_rewrite
from .concurrent import decompose_k
from .store import NumberedConstraint, State
from .syntax import Program
from .terms import (Chr, Constraint, Eq, Subst, apply_subst, entails, mgu,
                    normalize_constraint, render_constraint)
from .trace import (CommitRecord, ParsedStep, ParsedTrace, SideEffect,
                    TraceStep, parse_trace)

HistoryKey = tuple[str, tuple[int, ...]]


@dataclass(frozen=True)
class Verdict:
    passed: bool
    check: str
    detail: str = ""

    def __post_init__(self):
        if not self.passed and not self.detail:
            raise ValueError("a failing verdict needs a counterexample detail")

    def __str__(self):
        mark = "PASS" if self.passed else "FAIL"
        tail = f" ({self.detail})" if self.detail else ""
        return f"{self.check}: {mark}{tail}"


def no_ids(goals: Iterable) -> list[Constraint]:
    """Un-numbered CHR constraints and equations of a goal multiset; numbered
    goals are dropped (their store copy carries them)."""
    return [g for g in goals if not isinstance(g, NumberedConstraint)]


class _Replica:
    """Fresh store + goal multiset driven purely by trace steps.  Un-numbered
    goal keys are rendered constraints; numbered goals are keyed by id alone.
    Store entries stay raw (as activated), exactly like the engine store."""

    def __init__(self, goals0: Iterable[Constraint]):
        self.goals = Counter(render_constraint(normalize_constraint(g))
                             for g in goals0)
        self.entries: dict[int, Chr] = {}
        self.alive: set[int] = set()
        self.eqs: list[Eq] = []
        self.history: set[HistoryKey] = set()

    def goal_present(self, key: str) -> bool:
        return self.goals[key] > 0

    def goal_remove(self, key: str) -> None:
        self.goals[key] -= 1
        if self.goals[key] <= 0:
            del self.goals[key]

    def goal_add(self, key: str) -> None:
        self.goals[key] += 1

    @staticmethod
    def nc_key(cid: int) -> str:
        # a numbered goal is identified by its id alone: wake-ups can change
        # the rendered form while a stale goal copy is still queued
        return f"#{cid}"

    def theta(self) -> Optional[Subst]:
        return mgu(self.eqs)

    def norm(self, c: Constraint, theta: Optional[Subst]) -> Constraint:
        if theta:
            c = apply_subst(theta, c)
        return normalize_constraint(c)

    def wake_ids(self, e: Eq) -> Optional[list[int]]:
        """Alive ids whose equation-normal form the new equation changes;
        None when the extended equations are unsatisfiable."""
        theta = mgu(self.eqs + [e])
        if theta is None:
            return None
        phi = self.theta() or {}
        return [cid for cid in sorted(self.alive)
                if apply_subst(phi, self.entries[cid])
                != apply_subst(theta, self.entries[cid])]

    def store_constraints(self) -> list[Constraint]:
        out: list[Constraint] = [self.entries[i] for i in sorted(self.alive)]
        out.extend(self.eqs)
        return out

    def pending_goals(self) -> list[str]:
        """Goal keys that still await execution; numbered goals whose entry
        died are stale and not pending (engines discard them on dequeue)."""
        out = []
        for key, n in self.goals.items():
            if key.startswith("#") and int(key[1:]) not in self.alive:
                continue  # stale: discarded on dequeue
            out.extend([key] * n)
        return out

    def projection(self) -> Counter:
        """NoIds(goals) + DropIds(store) as a rendered multiset."""
        out: Counter = Counter()
        for key, n in self.goals.items():
            if key.startswith("#"):
                continue  # numbered goal: its store copy is counted below
            out[key] += n
        for c in self.store_constraints():
            out[render_constraint(c)] += 1
        return out

    def dump(self) -> str:
        lines = [f"{render_constraint(self.entries[cid])}#{cid}"
                 for cid in sorted(self.alive)]
        lines.extend(sorted(render_constraint(e) for e in self.eqs))
        return "\n".join(lines)


def _steps_in_order(trace: ParsedTrace) -> Optional[list[ParsedStep]]:
    steps = sorted(trace.steps, key=lambda s: s.seq)
    seqs = [s.seq for s in steps]
    if len(set(seqs)) != len(seqs):
        return None
    return steps


def _replay_step(rep: _Replica, st: ParsedStep, program: Program) -> Optional[str]:
    """Apply one step to the replica; returns an error string when its
    preconditions do not hold at this turn."""
    if st.kind == "Activate":
        if st.goal_id is None:
            return "activation without an id"
        if st.goal_id in rep.entries:
            return f"id {st.goal_id} is not fresh"
        if not isinstance(st.goal, Chr):
            return "only CHR constraints can be activated"
        if st.prop_ids or st.simp_ids:
            return "activation carries side effects"
        key = render_constraint(st.goal)
        if not rep.goal_present(key):
            return f"activated goal {key} not in the goal multiset"
        rep.goal_remove(key)
        rep.entries[st.goal_id] = st.goal
        rep.alive.add(st.goal_id)
        rep.goal_add(rep.nc_key(st.goal_id))
        return None

    if st.kind == "Solve":
        if not isinstance(st.goal, Eq):
            return "solve goal is not an equation"
        key = render_constraint(st.goal)
        if not rep.goal_present(key):
            return f"solved equation {key} not in the goal multiset"
        if st.simp_ids:
            return "solve must not simplify"
        woken = rep.wake_ids(st.goal)
        expected = tuple(woken) if woken is not None else ()
        if tuple(sorted(st.prop_ids)) != expected:
            return (f"wake-up mismatch: recorded {sorted(st.prop_ids)}, "
                    f"expected {list(expected)}")
        rep.goal_remove(key)
        rep.eqs.append(st.goal)
        for cid in expected:
            rep.goal_add(rep.nc_key(cid))
        return None

    # numbered-goal steps
    if st.goal_id is None:
        return f"{st.kind} goal carries no id"
    cid = st.goal_id
    if cid not in rep.alive:
        return f"goal id {cid} is not alive"
    key = rep.nc_key(cid)
    if not rep.goal_present(key):
        return f"goal #{cid} not in the goal multiset"

    if st.kind == "Drop":
        if st.prop_ids or st.simp_ids:
            return "drop carries side effects"
        rep.goal_remove(key)
        return None

    # Simplify / Propagate
    if st.rule is None:
        return "firing without a rule name"
    try:
        rule = program.rule(st.rule)
    except KeyError:
        return f"unknown rule {st.rule!r}"
    own = st.simp_ids if st.kind == "Simplify" else st.prop_ids
    if cid not in own:
        return f"active goal id {cid} missing from its own side-effect set"
    all_ids = set(st.prop_ids) | set(st.simp_ids)
    if len(st.prop_ids) + len(st.simp_ids) != len(all_ids):
        return "propagated and simplified sets overlap"
    dead = [i for i in all_ids if i not in rep.alive]
    if dead:
        return f"side-effect ids not alive: {sorted(dead)}"

    theta = rep.theta()

    def norm_multiset(ids):
        return Counter(render_constraint(rep.norm(rep.entries[i], theta))
                       for i in ids)

    want_p = Counter(render_constraint(rep.norm(apply_subst(st.phi, h), theta))
                     for h in rule.propagated)
    want_s = Counter(render_constraint(rep.norm(apply_subst(st.phi, h), theta))
                     for h in rule.simplified)
    if want_p != norm_multiset(st.prop_ids):
        return f"propagated heads do not match rule {rule.name}"
    if want_s != norm_multiset(st.simp_ids):
        return f"simplified heads do not match rule {rule.name}"
    if not entails(rep.eqs, st.phi, rule.guard):
        return f"guard of rule {rule.name} not entailed"
    if st.kind == "Propagate":
        hkey = (rule.name, tuple(sorted(all_ids)))
        if hkey in rep.history:
            return f"propagation instance fired twice: {hkey}"
        rep.history.add(hkey)

    rep.goal_remove(key)
    for i in st.simp_ids:
        rep.alive.discard(i)
    if st.kind == "Propagate":
        rep.goal_add(rep.nc_key(cid))
    for b in rule.body:
        inst = normalize_constraint(apply_subst(st.phi, b))
        rep.goal_add(render_constraint(inst))
    return None


def _run_replay(trace: ParsedTrace, goals0: Iterable[Constraint],
                program: Program) -> tuple[Optional[_Replica], Verdict]:
    steps = _steps_in_order(trace)
    if steps is None:
        return None, Verdict(False, "replay", "duplicate seq numbers")
    rep = _Replica(goals0)
    for st in steps:
        err = _replay_step(rep, st, program)
        if err is not None:
            return None, Verdict(False, "replay", f"step {st.seq}: {err}")
    if trace.final_dump is not None and rep.dump() != trace.final_dump:
        return rep, Verdict(False, "replay",
                            f"final store mismatch:\nreplayed:\n{rep.dump()}\n"
                            f"recorded:\n{trace.final_dump}")
    return rep, Verdict(True, "replay")


def replay(trace: ParsedTrace, goals0: Iterable[Constraint],
           program: Program) -> Verdict:
    """Re-execute every step, in seq order, as the corresponding derivation
    rule with the recorded substitution, heads and ids; then compare the
    replayed store dump with the one the engine recorded."""
    _, verdict = _run_replay(trace, goals0, program)
    return verdict


def project_abstract(trace: ParsedTrace, goals0: Iterable[Constraint],
                     program: Program) -> Verdict:
    """After every step, the projection NoIds(G) + DropIds(Sn) must be
    multiset-equal to its predecessor (Solve/Activate/Drop) or one valid
    abstract rewrite away (Simplify/Propagate), validated with the recorded
    rule, substitution and head ids."""
    steps = _steps_in_order(trace)
    if steps is None:
        return Verdict(False, "project-abstract", "duplicate seq numbers")
    rep = _Replica(goals0)
    prev = rep.projection()
    for st in steps:
        firing = st.kind in ("Simplify", "Propagate")
        if firing:
            pre_store = rep.store_constraints()
            heads_p = [rep.entries[i] for i in st.prop_ids]
            heads_s = [rep.entries[i] for i in st.simp_ids]
        err = _replay_step(rep, st, program)
        if err is not None:
            return Verdict(False, "project-abstract", f"step {st.seq}: {err}")
        cur = rep.projection()
        if not firing:
            if cur != prev:
                return Verdict(False, "project-abstract",
                               f"step {st.seq} ({st.kind}) changed the projection")
        else:
            rule = program.rule(st.rule)
            successor = validate_rewrite(pre_store, rule, st.phi,
                                         heads_p, heads_s)
            if successor is None:
                return Verdict(False, "project-abstract",
                               f"step {st.seq}: not a valid abstract rewrite")
            expected = prev.copy()
            expected.subtract(render_constraint(c) for c in heads_s)
            for b in rule.body:
                inst = normalize_constraint(apply_subst(st.phi, b))
                expected[render_constraint(inst)] += 1
            expected = +expected
            if cur != expected:
                return Verdict(False, "project-abstract",
                               f"step {st.seq}: projection is not the rewrite "
                               "successor")
        prev = cur
    return Verdict(True, "project-abstract")


def check_final(state: State, program: Program,
                history: Iterable[HistoryKey] = ()) -> Verdict:
    """A finished run's visible store must admit no further abstract rewrite
    (beyond propagation instances already fired)."""
    if state.goals:
        return Verdict(False, "check-final",
                       f"{len(state.goals)} goal(s) still pending")
    store = state.store
    items = [(nc.constraint, nc.id) for nc in store.live_items()]
    s = AbstractStore.from_identified(items, store.eqs(), history)
    steps = rewrite_steps(s, program)
    if not steps:
        return Verdict(True, "check-final")
    return Verdict(False, "check-final",
                   f"rule {steps[0].rule} still applies to ids "
                   f"{steps[0].used_tags}")


def check_final_from_replay(rep: _Replica, program: Program) -> Verdict:
    pending = rep.pending_goals()
    if pending:
        return Verdict(False, "check-final",
                       f"goals still pending: {pending[:5]}")
    items = [(rep.entries[i], i) for i in sorted(rep.alive)]
    s = AbstractStore.from_identified(items, rep.eqs, rep.history)
    steps = rewrite_steps(s, program)
    if not steps:
        return Verdict(True, "check-final")
    return Verdict(False, "check-final",
                   f"rule {steps[0].rule} still applies to ids "
                   f"{steps[0].used_tags}")


def audit_overlap(records: list[CommitRecord]) -> Verdict:
    """Definition of non-overlapping side-effects, applied to every pair of
    committed steps whose (start, commit) intervals overlap in time."""
    pairs, violation = decompose_k(records)
    if violation is not None:
        return Verdict(False, "audit-overlap",
                       f"steps {violation.seq1} and {violation.seq2}: "
                       f"{violation.detail}")
    return Verdict(True, "audit-overlap", f"{len(pairs)} overlapping pair(s)")


def audit_overlap_trace(trace: ParsedTrace) -> Verdict:
    """audit_overlap over a parsed (serialized) trace."""
    records = []
    for st in _steps_in_order(trace) or []:
        if st.interval is None:
            continue
        delta = SideEffect(
            propagated=tuple(NumberedConstraint(Chr("_"), i) for i in st.prop_ids),
            simplified=tuple(NumberedConstraint(Chr("_"), i) for i in st.simp_ids))
        records.append(CommitRecord(
            TraceStep(st.seq, st.kind, st.goal, delta),
            st.worker if st.worker is not None else 0, st.interval))
    return audit_overlap(records)


def verify_run(trace_text: str, goals0: Iterable[Constraint],
               program: Program, concurrent: bool = False) -> list[Verdict]:
    """The full check battery over one serialized trace."""
    trace = parse_trace(trace_text)
    goals0 = list(goals0)
    rep, replay_verdict = _run_replay(trace, goals0, program)
    verdicts = [replay_verdict]
    if replay_verdict.passed and rep is not None:
        verdicts.append(project_abstract(trace, goals0, program))
        if trace.status == "done":
            verdicts.append(check_final_from_replay(rep, program))
    if concurrent:
        verdicts.append(audit_overlap_trace(trace))
    return verdicts
