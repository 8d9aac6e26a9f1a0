import pytest

from chrkit.concurrent import EngineConfig, run_concurrent
from chrkit.sequential import run_sequential
from chrkit.store import NumberedConstraint, State
from chrkit.syntax import load_program, parse_goals
from chrkit.terms import Chr, Const, Eq, Var
from chrkit.trace import parse_trace, serialize_trace
from chrkit.verify import (Verdict, audit_overlap_trace, check_final, no_ids,
                           project_abstract, replay, verify_run)

from conftest import CORPUS, goals_for, load


def seq_trace_text(name, goals=None):
    p = load(name)
    goals = goals if goals is not None else goals_for(name)
    res = run_sequential(goals, p)
    text = serialize_trace(res.trace, {"engine": "sequential"},
                           res.status, res.state.store.dump())
    return p, goals, res, text


def con_trace_text(name, workers=4, seed=0, goals=None):
    p = load(name)
    goals = goals if goals is not None else goals_for(name)
    res = run_concurrent(goals, p, EngineConfig(workers=workers, seed=seed))
    text = serialize_trace(
        res.trace,
        {"engine": "concurrent", "workers": str(workers), "seed": str(seed)},
        res.status, res.state.store.dump())
    return p, goals, res, text


# ---------------------------------------------------------------- no_ids

def test_no_ids_keeps_plain_constraints_and_equations():
    goals = [NumberedConstraint(Chr("Get", (Var("x2"),)), 2),
             Chr("Put", (Const(2),)),
             Eq(Var("x1"), Const(1))]
    assert no_ids(goals) == [Chr("Put", (Const(2),)), Eq(Var("x1"), Const(1))]


def test_no_ids_empty():
    assert no_ids([]) == []


# ---------------------------------------------------------------- replay

def test_replay_sequential_corpus():
    for name in CORPUS:
        p, goals, _, text = seq_trace_text(name)
        verdict = replay(parse_trace(text), goals, p)
        assert verdict.passed, (name, verdict.detail)


def test_replay_concurrent_traces():
    for name in ("gcd", "channel", "mergesort", "prop_once"):
        for seed in range(5):
            p, goals, _, text = con_trace_text(name, seed=seed)
            verdict = replay(parse_trace(text), goals, p)
            assert verdict.passed, (name, seed, verdict.detail)


def test_replay_rejects_forged_double_kill():
    p, goals, res, text = seq_trace_text("channel",
                                         parse_goals("Get(x1),Get(x2),Put(1),Put(2)"))
    # forge the second firing to re-kill the already-dead id 1
    forged = text.replace("S={2,4}", "S={1,4}")
    assert forged != text
    verdict = replay(parse_trace(forged), parse_goals("Get(x1),Get(x2),Put(1),Put(2)"), p)
    assert not verdict.passed
    assert "not alive" in verdict.detail


def test_replay_rejects_tampered_final_dump():
    p, goals, _, text = seq_trace_text("gcd")
    forged = text.replace("# final: Gcd(3)#6", "# final: Gcd(4)#6")
    verdict = replay(parse_trace(forged), goals, p)
    assert not verdict.passed and "mismatch" in verdict.detail


def test_replay_rejects_duplicated_propagation():
    p, goals, res, text = seq_trace_text("prop_once")
    lines = text.splitlines()
    prop = next(l for l in lines if " Propagate " in l)
    seq = int(prop.split(" ", 1)[0])
    lines.insert(lines.index(prop) + 1,
                 str(seq * 1000) + prop[prop.index(" "):])
    verdict = replay(parse_trace("\n".join(lines)), goals, p)
    assert not verdict.passed


def test_replay_checks_wake_up_sets():
    p = load_program("r1 @ A(x), B(x) <=> C(x).")
    goals = parse_goals("A(a),B(2),a=2")
    res = run_sequential(goals, p)
    text = serialize_trace(res.trace, {}, res.status, res.state.store.dump())
    assert replay(parse_trace(text), goals, p).passed
    forged = text.replace("Solve goal=a=2 P={1}", "Solve goal=a=2 P={}")
    verdict = replay(parse_trace(forged), goals, p)
    assert not verdict.passed and "wake-up" in verdict.detail


def test_replay_activation_after_solve_records_normal_form():
    # the equation lands first, so the activation stores (and records) the
    # constraint already normalized
    p = load_program("r1 @ A(x), B(x) <=> C(x).")
    goals = parse_goals("u=1,A(u),B(1)")
    res = run_sequential(goals, p)
    assert res.state.store.dump() == "C(1)#3\nu=1"
    text = serialize_trace(res.trace, {}, res.status, res.state.store.dump())
    assert replay(parse_trace(text), goals, p).passed


def test_replay_same_id_woken_twice():
    p = load_program("r2 @ A(x,y), B(x,y) <=> C.")
    goals = parse_goals("A(u,w),B(1,2),u=1,w=2")
    res = run_sequential(goals, p)
    text = serialize_trace(res.trace, {}, res.status, res.state.store.dump())
    verdict = replay(parse_trace(text), goals, p)
    assert verdict.passed, verdict.detail


def test_replay_failed_concurrent_runs():
    # firings racing an inconsistency must linearize before it or not at all
    p = load_program("r1 @ A(x), B(x) <=> C(x).")
    goals = parse_goals("A(u),B(3),u=1,u=2,A(w),B(7)")
    for seed in range(20):
        res = run_concurrent(goals, p, EngineConfig(workers=4, seed=seed))
        assert res.status == "failed"
        text = serialize_trace(res.trace, {}, res.status,
                               res.state.store.dump())
        verdict = replay(parse_trace(text), goals, p)
        assert verdict.passed, (seed, verdict.detail)


# ------------------------------------------------------- project_abstract

def test_project_abstract_sequential_corpus():
    for name in CORPUS:
        p, goals, _, text = seq_trace_text(name)
        verdict = project_abstract(parse_trace(text), goals, p)
        assert verdict.passed, (name, verdict.detail)


def test_project_abstract_concurrent_channel_reaches_an_answer():
    p, goals, res, text = con_trace_text("channel", seed=2)
    assert project_abstract(parse_trace(text), goals, p).passed
    from chrkit.abstract import canonical_multiset
    answer = canonical_multiset(res.state.store.drop_ids())
    assert answer in {("m=1", "n=8"), ("m=8", "n=1")}


def test_project_abstract_empty_trace():
    p = load("gcd")
    text = serialize_trace([], {}, "done", "")
    assert project_abstract(parse_trace(text), (), p).passed


def test_project_abstract_rejects_invalid_rewrite():
    p, goals, _, text = seq_trace_text("gcd")
    # claim a different rule fired where gcd2 did
    forged = text.replace("rule=gcd2", "rule=gcd1", 1)
    verdict = project_abstract(parse_trace(forged), goals, p)
    assert not verdict.passed


# ------------------------------------------------------------ check_final

def test_check_final_passes_on_finished_runs():
    for name in CORPUS:
        p, goals = load(name), goals_for(name)
        res = run_sequential(goals, p)
        assert check_final(res.state, p, res.history).passed, name


def test_check_final_rejects_stuck_pair():
    p = load_program("r1 @ A, B <=> C.")
    st = State()
    st.store.insert(Chr("A"))
    st.store.insert(Chr("B"))
    verdict = check_final(st, p)
    assert not verdict.passed and "r1" in verdict.detail


def test_check_final_empty_state_passes():
    assert check_final(State(), load("gcd")).passed


def test_check_final_rejects_pending_goals():
    st = State()
    st.goals.append(Chr("A"))
    assert not check_final(st, load_program("r1 @ A <=> true.")).passed


# ---------------------------------------------------------- audit_overlap

def test_audit_overlap_sequential_trace_vacuous():
    p, goals, _, text = seq_trace_text("gcd")
    verdict = audit_overlap_trace(parse_trace(text))
    assert verdict.passed


def test_audit_overlap_concurrent_traces():
    for seed in range(10):
        p, goals, _, text = con_trace_text("mergesort", seed=seed)
        assert audit_overlap_trace(parse_trace(text)).passed


def test_audit_overlap_flags_synthetic_violation():
    text = "\n".join([
        "# chr-trace v1",
        "10 Simplify goal=G(x1)#1 rule=r P={} S={1,3} worker=0 interval=1,10",
        "11 Simplify goal=G(x1)#1 rule=r P={} S={1,4} worker=1 interval=2,11",
        "# status=done",
    ])
    verdict = audit_overlap_trace(parse_trace(text))
    assert not verdict.passed and "10" in verdict.detail


# -------------------------------------------------------------- verify_run

def test_verify_run_full_battery_sequential():
    p, goals, _, text = seq_trace_text("mergesort")
    verdicts = verify_run(text, goals, p)
    assert [v.check for v in verdicts] == ["replay", "project-abstract",
                                           "check-final"]
    assert all(v.passed for v in verdicts)


def test_verify_run_full_battery_concurrent():
    p, goals, _, text = con_trace_text("gcd", seed=4)
    verdicts = verify_run(text, goals, p, concurrent=True)
    assert [v.check for v in verdicts] == ["replay", "project-abstract",
                                           "check-final", "audit-overlap"]
    assert all(v.passed for v in verdicts)


def test_verdict_requires_detail_on_failure():
    with pytest.raises(ValueError):
        Verdict(False, "replay")


# ------------------------------------------------------------- round trip

def test_trace_serialization_roundtrip():
    p, goals, res, text = seq_trace_text("gcd")
    parsed = parse_trace(text)
    assert parsed.status == "done"
    assert parsed.final_dump == res.state.store.dump()
    assert len(parsed.steps) == len(res.trace)
    again = parse_trace(text)
    assert [(s.seq, s.kind, s.prop_ids, s.simp_ids) for s in parsed.steps] == \
           [(s.seq, s.kind, s.prop_ids, s.simp_ids) for s in again.steps]


def test_trace_phi_and_interval_fields_roundtrip():
    p, goals, res, text = con_trace_text("gcd", seed=1)
    parsed = parse_trace(text)
    fired = [s for s in parsed.steps if s.kind in ("Simplify", "Propagate")]
    assert fired
    for s in fired:
        if s.rule == "gcd2":  # a rule with variables records its substitution
            assert s.phi
        assert s.interval is not None and s.worker is not None
    assert parsed.meta["workers"] == "4"
