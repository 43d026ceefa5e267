import random

import pytest

from reltrans import netsim as N
from reltrans.harness import checks as C
from reltrans.harness import corpus, gen
from reltrans.harness.partitions import full_replication, parse_partition, random_partition
from reltrans.relcore import Instance, parse_instance

AB = parse_instance("S(a). S(b).")
G = parse_instance("S(1,2). S(2,3). S(3,1). S(3,4).")


def test_first_element_is_inconsistent(entries):
    v = C.check_consistency(entries["first_element"].program, N.path(2), AB, budget=100)
    assert v.result == "fail" and len(v.evidence) == 2
    assert v.evidence[0]["output"] != v.evidence[1]["output"]


def test_fail_evidence_replays(entries):
    prog = entries["first_element"].program
    v = C.check_consistency(prog, N.path(2), AB, budget=100)
    for ev in v.evidence:
        net = N.parse_network(ev["network"])
        part = parse_partition(ev["partition"]).assignment
        tr = N.run(prog, net, N.initial_configuration(prog, net, part),
                   N.Scripted(N.parse_directives(ev["script"])), 10_000)
        assert [list(t) for t in sorted(tr.cumulative_output)] == ev["output"]


def test_tc_is_consistent(entries):
    v = C.check_consistency(entries["tc_flood"].program, N.ring(4), G, budget=40, seed=2)
    assert v.result == "pass" and v.output == corpus.tc_oracle(G)


@pytest.mark.parametrize("name", corpus.names())
def test_single_node_is_always_consistent(name):
    e = corpus.entry(name)
    inst = gen.random_instance(random.Random(1), e.program.schema.inputs, 3, 0.4)
    assert C.check_consistency(e.program, N.single(), inst, budget=10).result == "pass"


def test_inconclusive_when_steps_run_out(entries):
    v = C.check_consistency(entries["tc_flood"].program, N.ring(4), G, budget=4, max_steps=3)
    assert v.result == "inconclusive" and v.exit_code == 2


def test_fwd_identity_depends_on_topology(entries):
    v = C.check_topology_independence(entries["fwd_identity"].program, [N.single(), N.path(2)], AB, budget=20)
    assert v.result == "fail"


def test_tc_topology_independent(entries):
    v = C.check_topology_independence(entries["tc_flood"].program, [N.single(), N.path(3), N.ring(4)], G,
                                      budget=30)
    assert v.result == "pass"


def test_emptiness_topology_independent(entries):
    prog = entries["emptiness"].program
    for inst in (Instance(), AB):
        v = C.check_topology_independence(prog, [N.single(), N.ring(4)], inst, budget=20)
        assert v.result == "pass" and v.output == corpus.emptiness_oracle(inst)


def test_topology_needs_single_node_network(entries):
    with pytest.raises(ValueError):
        C.check_topology_independence(entries["tc_flood"].program, [N.path(2), N.ring(4)], G)


def test_coordination_examples(entries):
    tc = entries["tc_flood"]
    v = C.check_coordination_free(tc.program, N.path(2), G, tc.intended_query, topology_independent=True)
    assert v.result == "witness-found"
    assert parse_partition(v.evidence[0]["partition"]) == full_replication(G, N.path(2).nodes)

    em = entries["emptiness"]
    v = C.check_coordination_free(em.program, N.path(2), Instance(), em.intended_query, exhaustive=True)
    assert v.result == "no-witness" and v.budget["partitions"] == 1

    ab = entries["a_or_b_nonempty"]
    inst = parse_instance("A(a). B(b).")
    v = C.check_coordination_free(ab.program, N.path(2), inst, ab.intended_query)
    assert v.result == "witness-found"
    assert parse_partition(v.evidence[0]["partition"]).assignment["1"] != inst


def test_unflagged_topology_is_noted(entries):
    tc = entries["tc_flood"]
    v = C.check_coordination_free(tc.program, N.path(2), G, tc.intended_query)
    assert v.notes


def test_heartbeat_order_does_not_matter():
    # per-node closure versus random interleavings of heartbeats only
    rng = random.Random(3)
    for e in corpus.corpus():
        net = N.ring(3)
        inst = gen.random_instance(rng, e.program.schema.inputs, 3, 0.3)
        part = random_partition(inst, net.nodes, rng)
        expect = C.heartbeat_only_output(e.program, net, part)
        for seed in range(3):
            r = random.Random(seed)
            script = tuple(("hb", r.choice(net.nodes)) for _ in range(200)) + tuple(
                ("hb", v) for v in net.nodes for _ in range(60))
            tr = N.run(e.program, net, N.initial_configuration(e.program, net, part.assignment),
                       N.Scripted(script), len(script), stop_at_quiescence=False)
            assert tr.cumulative_output == expect


def test_monotone_examples(entries):
    rng = random.Random(4)
    pairs = [gen.random_pair(rng, lambda r: gen.random_graph(r, 5)) for _ in range(10)]
    assert C.check_monotone(entries["tc_flood"].program, pairs, N.path(2)).result == "pass"
    assert C.check_monotone(corpus.tc_oracle, pairs).result == "pass"
    v = C.check_monotone(entries["emptiness"].program, [(Instance(), parse_instance("S(a)."))], N.path(2))
    assert v.result == "fail" and v.evidence[0]["missing"] == [[]]


def test_identity_ping_monotone_but_needs_coordination(entries):
    ip = entries["identity_ping"]
    rng = random.Random(5)
    pairs = [gen.random_pair(rng, lambda r: gen.random_set(r, 4)) for _ in range(10)]
    assert C.check_monotone(ip.program, pairs, N.path(2)).result == "pass"
    v = C.check_coordination_free(ip.program, N.path(2), AB, ip.intended_query, exhaustive=True)
    assert v.result == "no-witness"


def test_monotone_rejects_bad_pairs(entries):
    with pytest.raises(ValueError):
        C.check_monotone(corpus.tc_oracle, [(G, Instance())])


def test_verdict_json_is_stable(entries):
    v = C.check_consistency(entries["first_element"].program, N.path(2), AB, budget=30)
    w = C.check_consistency(entries["first_element"].program, N.path(2), AB, budget=30)
    assert v.dumps() == w.dumps()


def test_parallel_cells_agree(entries):
    prog = entries["first_element"].program
    a = C.check_consistency(prog, N.path(2), AB, budget=30, jobs=1)
    b = C.check_consistency(prog, N.path(2), AB, budget=30, jobs=2)
    assert a.dumps() == b.dumps()
