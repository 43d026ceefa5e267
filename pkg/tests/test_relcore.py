import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reltrans.relcore import (Atom, DialectError, Fact, Instance, ParseError, SafetyError, SchemaError, adom,
                              apply_permutation, eval_query, format_instance, parse_instance, parse_query,
                              parse_rule, Rule, stratify)

TC = "T(x,y) :- S(x,y). T(x,z) :- T(x,y), S(y,z)."


def closure(edges):
    # plain fixpoint, independent of the engine
    out = set(edges)
    while True:
        new = {(a, d) for a, b in out for c, d in out if b == c} - out
        if not new:
            return out
        out |= new


def test_transitive_closure_small():
    q = parse_query(TC, "T", 2)
    got = eval_query(q, parse_instance("S(1,2). S(2,3)."))
    assert got == parse_instance("T(1,2). T(1,3). T(2,3).")
    assert q.dialect == "positive-recursive"


def test_complement_over_adom():
    q = parse_query("E(x) :- Adom(x), not S(x).", "E", 1)
    assert eval_query(q, parse_instance("S(a). R(a,b).")) == parse_instance("E(b).")


def test_empty_instance_gives_empty_answer():
    q = parse_query(TC, "T", 2)
    assert len(eval_query(q, Instance())) == 0


def test_unsafe_head_rejected():
    with pytest.raises(ParseError, match="not bound"):
        parse_query("T(x) :- not S(x).", "T", 1)
    with pytest.raises(SafetyError):
        Rule(Atom("T", ("x", "y")), (Atom("S", ("x",)),))


def test_negation_through_recursion_rejected():
    with pytest.raises(DialectError):
        parse_query("T(x) :- S(x), not U(x). U(x) :- T(x).", "T", 1)


def test_negation_not_allowed_in_positive_dialect():
    with pytest.raises(DialectError):
        parse_query("T(x) :- S(x), not R(x).", "T", 1, dialect="positive-recursive")


def test_recursion_not_allowed_in_nonrecursive_dialect():
    with pytest.raises(DialectError):
        parse_query(TC, "T", 2, dialect="nonrecursive-negation")


def test_stratify_orders_negated_dependencies_first():
    rules = [parse_rule("A(x) :- S(x), not B(x)"), parse_rule("B(x) :- R(x)")]
    order = [preds for preds, _ in stratify(rules)]
    assert order.index(frozenset({"B"})) < order.index(frozenset({"A"}))


def test_anonymous_variables_are_distinct():
    r = parse_rule("H(x) :- S(x,_), R(_)")
    names = [a.terms for a in r.pos]
    assert names[0][1] != names[1][0]


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ParseError) as e:
        parse_instance("S(a).\nS(a,\n")
    assert e.value.line is not None


def test_instance_schema_check():
    with pytest.raises(SchemaError):
        parse_instance("S(a,b).").check_schema({"S": 1})


def test_format_roundtrip():
    inst = parse_instance("S(a,b). R(c). Z().")
    assert parse_instance(format_instance(inst)) == inst


def test_adom_and_set_operations():
    i = parse_instance("S(a,b).")
    j = parse_instance("S(a,b). R(c).")
    assert adom(j) == {"a", "b", "c"}
    assert i <= j and i < j and not j <= i
    assert (j - i) == parse_instance("R(c).")


ELEMS = ["a", "b", "c", "d"]
edges = st.sets(st.tuples(st.sampled_from(ELEMS), st.sampled_from(ELEMS)), max_size=10)


@settings(max_examples=60, deadline=None)
@given(edges)
def test_tc_matches_plain_fixpoint(es):
    inst = Instance(Fact("S", e) for e in es)
    got = {f.args for f in eval_query(parse_query(TC, "T", 2), inst)}
    assert got == closure(es)


@settings(max_examples=60, deadline=None)
@given(edges, st.permutations(ELEMS))
def test_queries_are_generic(es, perm):
    # evaluation commutes with renaming of data elements
    h = dict(zip(ELEMS, perm))
    inst = Instance(Fact("S", e) for e in es)
    for text, ans, k in [(TC, "T", 2), ("E(x) :- Adom(x), not S(x,x).", "E", 1)]:
        q = parse_query(text, ans, k)
        assert eval_query(q, apply_permutation(h, inst)) == apply_permutation(h, eval_query(q, inst))


def test_semi_naive_equals_naive_on_mutual_recursion():
    text = "A(x,y) :- E(x,y). A(x,z) :- B(x,y), E(y,z). B(x,y) :- A(x,y)."
    q = parse_query(text, "A", 2)
    for es in itertools.islice(itertools.combinations(itertools.product("abc", repeat=2), 3), 40):
        inst = Instance(Fact("E", e) for e in es)
        assert {f.args for f in eval_query(q, inst)} == closure(es)
