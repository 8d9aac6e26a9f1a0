import pytest

from chrkit.abstract import canonical_multiset
from chrkit.concurrent import (ConcurrentEngine, EngineConfig, OverlapViolation,
                               PairComposition, decompose_k,
                               overlapping_firing_pairs, run_concurrent,
                               run_pitfall_variant, _TickConflict)
from chrkit.sequential import run_sequential
from chrkit.store import NumberedConstraint
from chrkit.syntax import load_program, parse_goals
from chrkit.terms import Chr, Const, Var
from chrkit.trace import CommitRecord, SideEffect, TraceStep
from chrkit.verify import check_final

from conftest import CORPUS, goals_for, load


def canon_store(state):
    return canonical_multiset(state.store.drop_ids())


def test_config_validation():
    with pytest.raises(ValueError):
        EngineConfig(workers=0)
    with pytest.raises(ValueError):
        EngineConfig(solve_mode="optimistic")


def test_empty_goals_empty_trace():
    res = run_concurrent((), load("gcd"), EngineConfig(workers=3))
    assert res.status == "done"
    assert res.trace == []
    assert res.state.store.dump() == ""


def test_single_worker_matches_sequential_dump_on_corpus():
    for name in CORPUS:
        p, goals = load(name), goals_for(name)
        seq = run_sequential(goals, p, policy="fifo")
        con = run_concurrent(goals, p, EngineConfig(workers=1))
        assert con.status == seq.status == "done", name
        assert con.state.store.dump() == seq.state.store.dump(), name


def test_gcd_answer_stable_across_workers_and_seeds():
    p, goals = load("gcd"), goals_for("gcd")
    for workers in (2, 4):
        for seed in range(8):
            res = run_concurrent(goals, p, EngineConfig(workers=workers, seed=seed))
            assert res.status == "done"
            assert canon_store(res.state) == ("Gcd(3)",)


def test_channel_always_one_of_the_two_answers():
    p, goals = load("channel"), goals_for("channel")
    answers = {("m=1", "n=8"), ("m=8", "n=1")}
    seen = set()
    for seed in range(40):
        res = run_concurrent(goals, p, EngineConfig(workers=4, seed=seed))
        assert res.status == "done"
        got = canon_store(res.state)
        assert got in answers
        seen.add(got)
    # committed choice: which pairing wins is schedule-dependent
    assert len(seen) >= 1


def test_trace_is_ordered_by_seq_and_intervals_are_sane():
    res = run_concurrent(goals_for("mergesort"), load("mergesort"),
                         EngineConfig(workers=4, seed=1))
    seqs = [r.seq for r in res.trace]
    assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)
    for r in res.trace:
        start, commit = r.interval
        assert start < commit == r.seq
        assert 0 <= r.worker < 4


def test_commit_firing_loses_race_on_dead_id():
    p = load("channel")
    eng = ConcurrentEngine(p, EngineConfig(workers=1))
    g1 = eng.store.insert(Chr("Get", (Var("x1"),)))
    g2 = eng.store.insert(Chr("Get", (Var("x2"),)))
    put = eng.store.insert(Chr("Put", (Const(1),)))
    start = eng._next_tick()
    first = eng.commit_firing((g1, put), (), start)
    assert first is not None
    # the same Put can only die once: the second firing must abort
    second = eng.commit_firing((g2, put), (), eng._next_tick())
    assert second is None
    assert eng.store.alive(g2.id)  # aborted commit mutated nothing


def test_commit_firing_empty_simplified_set_commits():
    eng = ConcurrentEngine(load("prop_once"), EngineConfig(workers=1))
    nc = eng.store.insert(Chr("P"))
    tick = eng.commit_firing((), (nc,), eng._next_tick())
    assert tick is not None
    assert eng.store.alive(nc.id)
    assert eng.store.dump() == "P#1"


def test_commit_firing_rejects_simplify_after_overlapping_propagation():
    eng = ConcurrentEngine(load("gcd"), EngineConfig(workers=1))
    nc = eng.store.insert(Chr("Gcd", (Const(3),)))
    early_start = eng._next_tick()
    assert eng.commit_firing((), (nc,), eng._next_tick()) is not None
    # a firing whose scan started before that propagation committed must
    # retry rather than kill the propagated head
    with pytest.raises(_TickConflict):
        eng.commit_firing((nc,), (), early_start)
    # with a fresh scan it goes through
    assert eng.commit_firing((nc,), (), eng._next_tick()) is not None


def test_propagation_history_insert_if_absent_is_atomic():
    eng = ConcurrentEngine(load("prop_once"), EngineConfig(workers=1))
    nc = eng.store.insert(Chr("P"))
    key = ("r1", (nc.id,))
    assert eng.commit_firing((), (nc,), eng._next_tick(), key) is not None
    assert eng.commit_firing((), (nc,), eng._next_tick(), key) is None


def test_two_concurrent_solves_both_land():
    res = run_concurrent(parse_goals("x1=1,x2=2"), load("channel"),
                         EngineConfig(workers=2, seed=0))
    assert res.state.store.dump() == "x1=1\nx2=2"


def test_solve_wakes_under_concurrency():
    p = load_program("r1 @ A(x), B(x) <=> C(x).")
    goals = parse_goals("A(a),B(2),a=2")
    for seed in range(20):
        res = run_concurrent(goals, p, EngineConfig(workers=3, seed=seed))
        assert res.status == "done"
        assert canon_store(res.state) == ("C(2)", "a=2"), seed


def test_failed_status_on_inconsistency():
    res = run_concurrent(parse_goals("a=1,a=2,Get(x)"), load("channel"),
                         EngineConfig(workers=2, seed=3))
    assert res.status == "failed"


def test_step_limit_concurrent():
    loop = load_program("r @ A <=> A.")
    res = run_concurrent(parse_goals("A"), loop,
                         EngineConfig(workers=2, seed=0, max_steps=25))
    assert res.status == "step-limit"


# ------------------------------------------------------------ decompose

def _record(seq, kind, prop_ids, simp_ids, interval, worker=0):
    delta = SideEffect(
        propagated=tuple(NumberedConstraint(Chr("G", (Var(f"v{i}"),)), i)
                         for i in prop_ids),
        simplified=tuple(NumberedConstraint(Chr("G", (Var(f"v{i}"),)), i)
                         for i in simp_ids))
    goal = NumberedConstraint(Chr("G", (Var("v"),)), simp_ids[0] if simp_ids else 99)
    return CommitRecord(TraceStep(seq, kind, goal, delta), worker, interval)


def test_decompose_two_disjoint_overlapping_firings():
    trace = [
        _record(10, "Simplify", (), (1, 3), (1, 10), worker=0),
        _record(11, "Simplify", (), (2, 4), (2, 11), worker=1),
    ]
    pairs, violation = decompose_k(trace)
    assert violation is None
    assert pairs == [PairComposition(10, 11, (), (1, 2, 3, 4))]


def test_decompose_sequential_trace_has_singleton_groups():
    trace = [
        _record(5, "Simplify", (), (1, 3), (1, 5)),
        _record(8, "Simplify", (), (2, 4), (6, 8)),
    ]
    pairs, violation = decompose_k(trace)
    assert violation is None and pairs == []


def test_decompose_flags_shared_simplified_id():
    trace = [
        _record(10, "Simplify", (), (1, 3), (1, 10), worker=0),
        _record(11, "Simplify", (), (1, 4), (2, 11), worker=1),
    ]
    pairs, violation = decompose_k(trace)
    assert isinstance(violation, OverlapViolation)
    assert (violation.seq1, violation.seq2) == (10, 11)
    assert "1" in violation.detail


def test_decompose_flags_propagated_head_killed_by_overlapping_firing():
    trace = [
        _record(10, "Propagate", (7,), (), (1, 10), worker=0),
        _record(11, "Simplify", (), (7,), (2, 11), worker=1),
    ]
    _, violation = decompose_k(trace)
    assert violation is not None


def test_engine_traces_never_violate_overlap_audit():
    for name in ("gcd", "mergesort", "channel"):
        p, goals = load(name), goals_for(name)
        for seed in range(10):
            res = run_concurrent(goals, p, EngineConfig(workers=4, seed=seed))
            _, violation = decompose_k(res.trace)
            assert violation is None, (name, seed, violation)


def test_overlapping_pairs_exist_somewhere_in_seed_space():
    p, goals = load("mergesort"), goals_for("mergesort")
    assert any(
        overlapping_firing_pairs(
            run_concurrent(goals, p, EngineConfig(workers=4, seed=s)).trace) > 0
        for s in range(50))


# ------------------------------------------------------- rejected variants

def test_store_on_drop_activation_reaches_stuck_state():
    p = load("pitfall_pair")
    goals = parse_goals("A(1),B(2)")
    state = run_pitfall_variant([[goals[0]], [goals[1]]], p, "store_on_drop")
    assert state.store.dump() == "A(1)#1\nB(2)#2"
    verdict = check_final(state, p)
    assert not verdict.passed


def test_split_store_execution_reaches_stuck_state():
    p = load("pitfall_split")
    g = parse_goals("A,E,B,D")
    state = run_pitfall_variant([[g[0], g[1]], [g[2], g[3]]], p, "split_store")
    assert sorted(canonical_multiset(state.store.drop_ids())) == ["A", "B", "D", "E"]
    assert not check_final(state, p).passed


def test_multi_step_before_join_reaches_stuck_state():
    p = load("pitfall_single")
    g = parse_goals("A,B")
    state = run_pitfall_variant([[g[0]], [g[1]]], p, "multi_step")
    assert sorted(canonical_multiset(state.store.drop_ids())) == ["A", "B"]
    assert not check_final(state, p).passed


def test_shipped_engine_avoids_all_three_pitfalls():
    for name, split in (("pitfall_pair", 2), ("pitfall_split", 2),
                        ("pitfall_single", 2)):
        p, goals = load(name), goals_for(name)
        for seed in range(10):
            res = run_concurrent(goals, p, EngineConfig(workers=split, seed=seed))
            assert res.status == "done"
            assert check_final(res.state, p, res.history).passed, (name, seed)
