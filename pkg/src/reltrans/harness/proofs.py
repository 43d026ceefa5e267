"""Executable versions of two monotonicity arguments.

``theorem4_adversarial_test``: a heartbeat-only prefix that outputs ``t`` on
a partition of I stays a valid prefix once J∖I is dumped on another node,
so every fair extension still outputs ``t``.

``ring_fifo_replay``: the symmetric fifo run on the 4-ring with I everywhere
is mimicked on the ring plus shortcut 2--4 with J∖I parked on node 3, which
never moves; nodes 1, 2 and 4 must track the ring run round for round.
"""

from __future__ import annotations

from typing import Callable

from ..netsim import (Network, PreconditionError, RandomFair, RoundRobinFifo, Scripted, apply_delivery,
                      apply_heartbeat, initial_configuration, path, ring, run)
from ..relcore import Instance
from ..transducer import TransducerProgram, step
from .checks import WITNESS, check_coordination_free
from .partitions import HorizontalPartition, parse_partition


def theorem4_adversarial_test(program: TransducerProgram, I: Instance, J: Instance, t: tuple,
                              oracle: Callable[[Instance], frozenset], network: Network | None = None,
                              seed: int = 0, max_steps: int = 20_000, budget: int = 1000) -> bool:
    if not I <= J:
        raise PreconditionError("I must be a subset of J")
    network = network or path(2)
    if len(network) < 2:
        raise PreconditionError("the construction needs at least two nodes")
    if t not in oracle(I):
        raise PreconditionError(f"{t} is not in Q(I)")
    verdict = check_coordination_free(program, network, I, oracle, budget=budget, topology_independent=True)
    if verdict.result != WITNESS:
        raise PreconditionError("no heartbeat-only witness for I")
    H = parse_partition(verdict.evidence[0]["partition"])
    cfg = initial_configuration(program, network, H.assignment)

    # v heartbeats alone until it outputs t
    v = prefix = None
    for node in network.nodes:
        state, script = cfg.state[node], []
        seen = {state}
        while True:
            tr = step(program, state)
            script.append(("hb", node))
            if t in tr.output:
                v, prefix = node, script
                break
            state = tr.after
            if state in seen:
                break
            seen.add(state)
        if v is not None:
            break
    if v is None:
        raise PreconditionError(f"{t} is not output by heartbeats at any node")

    other = next(u for u in network.nodes if u != v)
    assignment = dict(H.assignment)
    assignment[other] = assignment.get(other, Instance()) | (J - I)
    H2 = HorizontalPartition(assignment)
    cfg2 = initial_configuration(program, network, H2.assignment)
    sched = Scripted(tuple(prefix), then=RandomFair(seed=seed))
    trace = run(program, network, cfg2, sched, max_steps)
    prefix_out = trace.outputs_upto(len(prefix) - 1)
    return t in prefix_out and t in trace.cumulative_output


def _shortcut_ring() -> Network:
    r = ring(4)
    return Network(r.nodes, r.edges | {frozenset(("2", "4"))})


def _round_snapshots(program, network, config, directives, per_round):
    """States and fifo queues of nodes 1, 2, 4 after each completed round."""
    snaps = []
    for i, d in enumerate(directives):
        if d[0] == "hb":
            config, _ = apply_heartbeat(program, network, config, d[1], i)
        else:
            config, _ = apply_delivery(program, network, config, d[1], d[2], i)
        if (i + 1) % per_round == 0:
            snaps.append({v: (config.state[v], config.queue(v)) for v in ("1", "2", "4")})
    return snaps


def ring_fifo_replay(program: TransducerProgram, I: Instance, J: Instance, max_steps: int = 20_000) -> bool:
    if program.uses_id:
        raise PreconditionError("program uses Id")
    if not I <= J:
        raise PreconditionError("I must be a subset of J")
    R4 = ring(4)
    n4 = len(R4)
    rho = run(program, R4, initial_configuration(program, R4, {v: I for v in R4.nodes}), RoundRobinFifo(), max_steps)
    if not rho.quiescent:
        return False
    target = {t for tr in rho.steps if tr.node == "1" for t in tr.output}
    if not target:
        return True
    last = max(i for i, tr in enumerate(rho.steps) if tr.node == "1" and tr.output)
    m = last // (2 * n4)
    # pad rho to a full round boundary so rounds can be compared whole
    full = (m + 1) * 2 * n4
    if len(rho.steps) < full:
        rho = run(program, R4, rho.initial, RoundRobinFifo(), full, stop_at_quiescence=False)

    script = tuple(d for d in rho.directives()[:full] if d[1] != "3")
    Rp = _shortcut_ring()
    H2 = {"1": I, "2": I, "3": J - I, "4": I}
    rho2 = run(program, Rp, initial_configuration(program, Rp, H2), Scripted(script), len(script),
               stop_at_quiescence=False)

    a = _round_snapshots(program, R4, rho.initial, rho.directives()[:full], 2 * n4)
    b = _round_snapshots(program, Rp, rho2.initial, list(script), 2 * 3)
    if len(a) != m + 1 or a != b:
        return False
    out2 = {t for tr in rho2.steps if tr.node == "1" for t in tr.output}
    return target <= out2
