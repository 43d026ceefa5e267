import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reltrans.harness import corpus
from reltrans.relcore import Fact, Instance, ParseError, SchemaError, parse_instance
from reltrans.transducer import (assign_emulation_check, format_program, initial_state, memory_update,
                                 parse_program, step)


def per_tuple_truth_table(old, ins, dele):
    # one row per (in old, inserted, deleted) combination
    table = {
        (False, False, False): False, (False, False, True): False,
        (False, True, False): True, (False, True, True): False,
        (True, False, False): True, (True, False, True): False,
        (True, True, False): True, (True, True, True): True,
    }
    universe = old | ins | dele
    return frozenset(t for t in universe if table[(t in old, t in ins, t in dele)])


sets_ = st.frozensets(st.tuples(st.sampled_from("abc")), max_size=3)


@settings(max_examples=200, deadline=None)
@given(sets_, sets_, sets_)
def test_memory_update_matches_truth_table(old, ins, dele):
    assert memory_update(old, ins, dele) == per_tuple_truth_table(old, ins, dele)


def test_conflicting_insert_and_delete_keep_old_status():
    assert memory_update({("a",)}, {("a",)}, {("a",)}) == {("a",)}
    assert memory_update(set(), {("a",)}, {("a",)}) == frozenset()


def test_memory_update_rejects_mixed_arity():
    with pytest.raises(SchemaError):
        memory_update({("a",)}, {("a", "b")}, set())


def test_minimal_program_has_empty_queries():
    p = parse_program("schema { in: S/1; msg: ; mem: ; out: 1 }")
    st_ = initial_state(p, "1", ["1"], parse_instance("S(a)."))
    tr = step(p, st_)
    assert tr.output == frozenset() and len(tr.sent) == 0 and tr.after == st_


def test_undeclared_predicate_is_named():
    with pytest.raises(ParseError, match="Q"):
        parse_program("schema { in: S/1; msg: ; mem: ; out: 1 }\noutput {\n  Out(x) :- Q(x).\n}")


def test_arity_mismatch_rejected():
    with pytest.raises(ParseError):
        parse_program("schema { in: S/1; msg: ; mem: ; out: 2 }\noutput { Out(x) :- S(x). }")


def test_reserved_names_rejected():
    with pytest.raises(ParseError):
        parse_program("schema { in: Id/1; msg: ; mem: ; out: 0 }")


def test_tc_flood_flags(entries):
    # syntactic flags of the shipped file: Id/All never mentioned, T is deleted and re-inserted
    flags = entries["tc_flood"].program.flags
    assert flags["oblivious"] is True
    assert flags["inflationary"] is False


@pytest.mark.parametrize("name", corpus.names())
def test_corpus_roundtrip(name):
    p = corpus.entry(name).program
    assert parse_program(format_program(p), name=name) == p


def test_tc_flood_assignment_emulation(entries):
    assert assign_emulation_check(entries["tc_flood"].program, "T", n=100, seed=1)


def test_step_semantics_on_tc_flood(entries):
    p = entries["tc_flood"].program
    s = initial_state(p, "1", ["1", "2"], parse_instance("S(1,2)."))
    tr = step(p, s, parse_instance("M(2,3)."))
    assert Fact("M", ("1", "2")) in tr.sent
    # a received fact is forwarded
    assert Fact("M", ("2", "3")) in tr.sent
    # output reads T from the state before the step, so it lags by one transition
    assert tr.output == frozenset()
    tr2 = step(p, tr.after)
    assert tr2.output == {("1", "2")}
    # R and T also read the old state, so the closure appears a few heartbeats later
    state, outs = tr2.after, []
    for _ in range(4):
        t = step(p, state)
        outs.append(t.output)
        state = t.after
    assert outs[-1] == {("1", "2"), ("2", "3"), ("1", "3")}
    assert outs[-1] == outs[-2]


def test_step_is_deterministic_and_cached(entries):
    p = entries["flood_acked"].program
    s = initial_state(p, "1", ["1", "2"], parse_instance("S(a,b)."))
    assert step(p, s) is step(p, s)


def test_id_all_initialisation(entries):
    p = entries["emptiness"].program
    s = initial_state(p, "2", ["1", "2", "3"])
    assert s.relation("Id") == {("2",)}
    assert s.relation("All") == {("1",), ("2",), ("3",)}
    with pytest.raises(SchemaError):
        initial_state(p, "4", ["1", "2"])


def test_genericity_of_local_steps(entries):
    # renaming data elements commutes with a transition
    from reltrans.relcore import apply_permutation
    p = entries["tc_flood"].program
    h = {"1": "3", "2": "1", "3": "2", "n": "n"}
    for facts in itertools.combinations(["S(1,2)", "S(2,3)", "S(3,1)", "T(1,1)"], 2):
        s = initial_state(p, "n", ["n"], Instance()) | parse_instance(". ".join(facts) + ".")
        a = step(p, apply_permutation(h, s)).after
        b = apply_permutation(h, step(p, s).after)
        assert a == b
