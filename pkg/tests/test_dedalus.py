import itertools
import random
from importlib import resources

import pytest

from reltrans.dedalus import (DedalusProgram, TemporalFact, TemporalInstance, TuringMachine, accepted_at,
                              build_tm_program, check_eventual_consistency, eval_dedalus, format_temporal_instance,
                              parse_dedalus, parse_machine, parse_temporal_instance, word_structure)
from reltrans.relcore import DialectError, ParseError, parse_instance


@pytest.fixture(scope="module")
def machine():
    return parse_machine(resources.files("reltrans.programs").joinpath("contains_ab.tm").read_text())


def test_persistence():
    p = parse_dedalus("a(x, T+1) :- a(x, T).")
    out = eval_dedalus(p, parse_temporal_instance("a(c)@0."), 5)
    assert out == TemporalInstance(TemporalFact("a", ("c",), t) for t in range(6))


def test_empty_program_returns_input():
    inp = parse_temporal_instance("a(c)@0. b(d,e)@2.")
    assert eval_dedalus(DedalusProgram(()), inp, 3) == inp


def test_deductive_copy_stays_in_its_slice():
    p = parse_dedalus("b(x, T) :- a(x, T).")
    out = eval_dedalus(p, parse_temporal_instance("a(c)@3."), 6)
    assert {f for f in out.facts if f.relation == "b"} == {TemporalFact("b", ("c",), 3)}


def test_stratified_negation_per_slice():
    p = parse_dedalus("""
        seen(x, T+1) :- a(x, T).
        seen(x, T+1) :- seen(x, T).
        fresh(x, T) :- a(x, T), not seen(x, T).
    """)
    out = eval_dedalus(p, parse_temporal_instance("a(c)@0. a(c)@2. a(d)@2."), 3)
    fresh = sorted((f.args[0], f.time) for f in out.facts if f.relation == "fresh")
    assert fresh == [("c", 0), ("d", 2)]


def test_entangled_timestamp_as_data():
    p = parse_dedalus("""
        stamp(x, T, T) :- a(x, T).
        stamp(x, s, T+1) :- stamp(x, s, T).
    """)
    out = eval_dedalus(p, parse_temporal_instance("a(c)@2."), 4)
    assert TemporalFact("stamp", ("c", "2"), 4) in out.facts


def test_timing_discipline_enforced():
    with pytest.raises(ParseError):
        parse_dedalus("b(x, T) :- a(x, S).")
    with pytest.raises(ParseError):
        parse_dedalus("b(x, T) :- a(x, T+1).")
    with pytest.raises(ParseError):
        parse_dedalus("b(x, T) :- a(x, T)")


def test_unstratifiable_rejected():
    with pytest.raises(DialectError):
        parse_dedalus("p(x, T) :- a(x, T), not q(x, T). q(x, T) :- p(x, T).")


def test_temporal_instance_roundtrip():
    inp = parse_temporal_instance("R(a,b)@3. S(c). T()@1.")
    assert parse_temporal_instance(format_temporal_instance(inp)) == inp
    assert inp.slice(3) == parse_instance("R(a,b).")
    assert inp.flatten() == parse_instance("R(a,b). S(c). T().")
    with pytest.raises(ValueError):
        TemporalInstance([TemporalFact("R", (), -1)])


def test_word_structure_for_ab():
    assert word_structure("ab") == parse_instance("Tape(1,2). Begin(1). End(2). a(1). b(2).")
    with pytest.raises(ValueError):
        word_structure("a")


def test_machine_interpreter(machine):
    assert machine.accepts("aab") and machine.accepts("bab")
    assert not machine.accepts("ba") and not machine.accepts("aaaa")


def test_machine_parse_errors():
    with pytest.raises(ParseError):
        parse_machine("alphabet: a\nblank: _\nstart: q\nq a -> q a R\nq a -> q _ L\n")
    with pytest.raises(ParseError):
        parse_machine("alphabet: a\nblank: _\nstart: q\nq a => q a R\n")


def accepts_by_program(program, word, max_time):
    return accepted_at(eval_dedalus(program, TemporalInstance.at(word_structure(word)), max_time))


def test_tm_program_matches_interpreter(machine):
    p = build_tm_program(machine)
    for k in (2, 3, 4):
        for w in map("".join, itertools.product("ab", repeat=k)):
            assert (accepts_by_program(p, w, k + 6) is not None) == machine.accepts(w)


def random_machine(rng):
    states = ("s0", "s1", "s2", "acc")
    tape = ("a", "b", "_", "X")
    delta = {(q, c): (rng.choice(states), rng.choice(tape), rng.choice("LR"))
             for q in states[:3] for c in tape if rng.random() < 0.85}
    return TuringMachine(states, ("a", "b"), tape, "_", "s0", frozenset({"acc"}), delta)


def test_tm_program_on_random_machines():
    # left moves, boundary stays and repeated tape extension, timed exactly one step behind
    rng = random.Random(5)
    checked = 0
    for _ in range(12):
        M = random_machine(rng)
        p = build_tm_program(M)
        for w in map("".join, itertools.product("ab", repeat=3)):
            ok, steps = M.run(w, 25)
            if ok is None:
                continue
            at = accepts_by_program(p, w, steps + 4)
            assert (at is not None) == ok
            if ok:
                assert at == steps + 1
            checked += 1
    assert checked > 40


SPURIOUS = {
    "a": word_structure("aa") | word_structure("aa", first=3),
    "b": word_structure("aa") | parse_instance("b(1)."),
    "c": word_structure("aa") | parse_instance("Tape(2,1)."),
    "d": word_structure("aa") | parse_instance("a(3)."),
}


@pytest.mark.parametrize("cond", "abcd")
def test_each_spurious_condition_alone_triggers_accept(machine, cond):
    inp = TemporalInstance.at(SPURIOUS[cond])
    assert accepted_at(eval_dedalus(build_tm_program(machine, cond), inp, 10)) is not None
    assert accepted_at(eval_dedalus(build_tm_program(machine, ""), inp, 10)) is None
    others = "".join(c for c in "abcd" if c != cond)
    assert accepted_at(eval_dedalus(build_tm_program(machine, others), inp, 10)) is None


def test_late_spurious_fact_still_accepts(machine):
    inp = TemporalInstance.at(word_structure("aa")) | TemporalInstance.at(parse_instance("b(1)."), 7)
    p = build_tm_program(machine)
    assert accepted_at(eval_dedalus(p, inp, 12)) == 7
    assert check_eventual_consistency(p, inp, 40) == (True, 7)


def test_adding_facts_keeps_accept(machine):
    p = build_tm_program(machine)
    base = word_structure("abb")
    rng = random.Random(2)
    extras = ["b(1).", "Tape(3,1).", "a(9).", "Begin(2).", "End(1).", "Tape(1,3).", "a(2)."]
    for _ in range(8):
        more = parse_instance(" ".join(rng.sample(extras, rng.randint(1, 3))))
        assert accepts_by_program_instance(p, base | more) is not None


def accepts_by_program_instance(p, inst):
    return accepted_at(eval_dedalus(p, TemporalInstance.at(inst), 12))


def test_eventual_consistency_examples(machine):
    persist = parse_dedalus("a(x, T+1) :- a(x, T).")
    assert check_eventual_consistency(persist, parse_temporal_instance("a(c)@0. a(d)@3."), 20) == (True, 3)
    counter = parse_dedalus("c(x, T+1) :- c(x, T). c(T, T+1) :- c(x, T).")
    assert check_eventual_consistency(counter, parse_temporal_instance("c(0)@0."), 30) == (False, None)
    stable, n = check_eventual_consistency(build_tm_program(machine), TemporalInstance.at(word_structure("ab")), 60)
    assert stable and n is not None


def test_eval_is_pure(machine):
    p = build_tm_program(machine)
    inp = TemporalInstance.at(word_structure("bab"))
    assert eval_dedalus(p, inp, 15) == eval_dedalus(p, inp, 15)


def test_timestamp_discipline_in_rules(machine):
    p = build_tm_program(machine)
    for r in p.rules:
        tv = r.rule.head.terms[-1]
        assert all(a.terms[-1] == tv for a in (*r.rule.pos, *r.rule.neg))
