"""Budgeted empirical checks for consistency, topology independence,
coordination-freeness and monotonicity.

A ``pass`` means no counterexample was found within the explored cells;
``fail`` and ``witness-found`` always carry enough evidence (partition,
scheduler seed, directive script) to replay the run that produced them.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from ..netsim import (Network, RandomFair, format_directives, format_network, heartbeat_closure,
                      initial_configuration, run, single)
from ..relcore import Instance, format_instance
from ..transducer import TransducerProgram
from .partitions import HorizontalPartition, canonical_partitions, enumerate_partitions, format_partition

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"
WITNESS, NO_WITNESS = "witness-found", "no-witness"

EXIT_CODES = {PASS: 0, WITNESS: 0, FAIL: 1, NO_WITNESS: 1, INCONCLUSIVE: 2}


@dataclass
class CheckVerdict:
    property: str
    result: str
    evidence: list[dict] = field(default_factory=list)
    budget: dict = field(default_factory=dict)
    output: frozenset | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.result]

    def to_json(self) -> dict:
        d = {"property": self.property, "result": self.result, "budget": self.budget,
             "evidence": self.evidence, "notes": self.notes}
        if self.output is not None:
            d["output"] = [list(t) for t in sorted(self.output)]
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


def _tuples(out: Iterable[tuple]) -> list[list[str]]:
    return [list(t) for t in sorted(out)]


# ---------------------------------------------------------------------------
# single cells

@dataclass(frozen=True)
class Cell:
    network: Network
    partition: HorizontalPartition
    seed: int


@dataclass(frozen=True)
class CellResult:
    cell: Cell
    output: frozenset
    quiescent: bool
    steps: int
    script: str

    def evidence(self) -> dict:
        return {"network": format_network(self.cell.network), "partition": format_partition(self.cell.partition),
                "scheduler": "random-fair", "seed": self.cell.seed, "output": _tuples(self.output),
                "quiescent": self.quiescent, "steps": self.steps, "script": self.script}


def run_cell(program: TransducerProgram, cell: Cell, max_steps: int) -> CellResult:
    cfg = initial_configuration(program, cell.network, cell.partition.assignment)
    tr = run(program, cell.network, cfg, RandomFair(seed=cell.seed), max_steps)
    return CellResult(cell, tr.cumulative_output, tr.quiescent, len(tr.steps), format_directives(tr.directives()))


def _run_cells(program, cells, max_steps, jobs):
    if jobs and jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(run_cell, [program] * len(cells), cells, [max_steps] * len(cells)))
    return [run_cell(program, c, max_steps) for c in cells]


def _cells(network: Network, instance: Instance, budget: int, seed: int, schedules: int,
           exhaustive: bool | None) -> list[Cell]:
    """Spread ``budget`` runs over partitions × scheduler seeds."""
    schedules = max(1, min(schedules, budget))
    parts = list(enumerate_partitions(instance, network.nodes, budget=max(1, budget // schedules),
                                      exhaustive=exhaustive, seed=seed))
    per = max(1, budget // len(parts))
    return [Cell(network, p, seed + k) for p in parts for k in range(per)]


# ---------------------------------------------------------------------------
# consistency

def check_consistency(program: TransducerProgram, network: Network, instance: Instance, budget: int = 100,
                      seed: int = 0, max_steps: int = 10_000, schedules: int = 5, exhaustive: bool | None = None,
                      jobs: int = 1) -> CheckVerdict:
    cells = _cells(network, instance, budget, seed, schedules, exhaustive)
    results = _run_cells(program, cells, max_steps, jobs)
    done = [r for r in results if r.quiescent]
    stuck = [r for r in results if not r.quiescent]
    budget_info = {"cells": len(results), "partitions": len({c.partition for c in cells}),
                   "schedules": len({c.seed for c in cells}), "networks": 1, "inconclusive_cells": len(stuck)}
    by_output: dict[frozenset, CellResult] = {}
    for r in done:
        by_output.setdefault(r.output, r)
    if len(by_output) > 1:
        a, b = list(by_output.values())[:2]
        return CheckVerdict("consistency", FAIL, [a.evidence(), b.evidence()], budget_info)
    notes = [f"cell seed={r.cell.seed} did not reach quiescence in {max_steps} steps" for r in stuck]
    output = next(iter(by_output)) if by_output else None
    if stuck:
        return CheckVerdict("consistency", INCONCLUSIVE, [r.evidence() for r in stuck[:2]], budget_info, output, notes)
    return CheckVerdict("consistency", PASS, [], budget_info, output)


def check_topology_independence(program: TransducerProgram, networks: Sequence[Network], instance: Instance,
                                budget: int = 100, seed: int = 0, max_steps: int = 10_000, schedules: int = 5,
                                jobs: int = 1) -> CheckVerdict:
    if len(networks) < 2 or not any(len(n) == 1 for n in networks):
        raise ValueError("need at least two networks including a single-node network")
    per = max(1, budget // len(networks))
    outputs: list[tuple[Network, CheckVerdict]] = []
    cells = 0
    inconclusive = False
    notes: list[str] = []
    for net in networks:
        v = check_consistency(program, net, instance, per, seed, max_steps, schedules, jobs=jobs)
        cells += v.budget["cells"]
        if v.result == FAIL:
            v.property = "topology-independence"
            v.budget = {**v.budget, "cells": cells, "networks": len(networks)}
            v.notes.append(f"inconsistent on network {net}")
            return v
        if v.result == INCONCLUSIVE:
            inconclusive = True
            notes.extend(v.notes)
        if v.output is not None:
            outputs.append((net, v))
    budget_info = {"cells": cells, "networks": len(networks)}
    for net, v in outputs[1:]:
        if v.output != outputs[0][1].output:
            ev = [{"network": format_network(n), "output": _tuples(w.output)} for n, w in (outputs[0], (net, v))]
            return CheckVerdict("topology-independence", FAIL, ev, budget_info)
    if inconclusive:
        return CheckVerdict("topology-independence", INCONCLUSIVE, [], budget_info, None, notes)
    return CheckVerdict("topology-independence", PASS, [], budget_info, outputs[0][1].output if outputs else None)


# ---------------------------------------------------------------------------
# coordination-freeness

def heartbeat_only_output(program: TransducerProgram, network: Network,
                          partition: HorizontalPartition) -> frozenset:
    """Union of outputs when every node heartbeats on its own until its local state cycles."""
    cfg = initial_configuration(program, network, partition.assignment)
    out: set = set()
    for v in network.nodes:
        for tr in heartbeat_closure(program, cfg.state[v]):
            out |= tr.output
    return frozenset(out)


def check_coordination_free(program: TransducerProgram, network: Network, instance: Instance,
                            oracle: Callable[[Instance], frozenset], budget: int = 1000,
                            exhaustive: bool | None = None, seed: int = 0,
                            topology_independent: bool | None = None) -> CheckVerdict:
    """Search for a partition on which heartbeats alone already produce ``oracle(instance)``."""
    target = frozenset(oracle(instance))
    notes = []
    if topology_independent is not True:
        notes.append("program not established as topology-independent; verdict may be meaningless")
    tried: set = set()
    order = canonical_partitions(instance, network.nodes)
    order += list(enumerate_partitions(instance, network.nodes, budget, exhaustive, seed))
    for p in order:
        if p in tried:
            continue
        tried.add(p)
        got = heartbeat_only_output(program, network, p)
        if got == target:
            ev = {"network": format_network(network), "instance": format_instance(instance),
                  "partition": format_partition(p), "output": _tuples(got)}
            return CheckVerdict("coordination-free", WITNESS, [ev], {"partitions": len(tried)}, got, notes)
    ev = {"network": format_network(network), "instance": format_instance(instance), "expected": _tuples(target)}
    return CheckVerdict("coordination-free", NO_WITNESS, [ev], {"partitions": len(tried)}, None, notes)


def probe_coordination_free(program: TransducerProgram, network: Network, instances: Iterable[Instance],
                            oracle: Callable[[Instance], frozenset], budget: int = 1000,
                            exhaustive: bool | None = None, seed: int = 0,
                            topology_independent: bool | None = None) -> CheckVerdict:
    """Coordination-freeness over several inputs: every instance needs its own witness."""
    evidence, explored = [], 0
    last = None
    for inst in instances:
        v = check_coordination_free(program, network, inst, oracle, budget, exhaustive, seed, topology_independent)
        explored += v.budget["partitions"]
        last = v
        if v.result == NO_WITNESS:
            v.budget = {"partitions": explored}
            return v
        evidence.extend(v.evidence)
    notes = last.notes if last else []
    return CheckVerdict("coordination-free", WITNESS, evidence, {"partitions": explored}, None, notes)


# ---------------------------------------------------------------------------
# monotonicity

def distributed_output(program: TransducerProgram, instance: Instance, network: Network | None = None,
                       seed: int = 0, max_steps: int = 10_000) -> frozenset | None:
    """Quiescent output of one fair run with full replication; None if no quiescence."""
    network = network or single()
    cfg = initial_configuration(program, network, {v: instance for v in network.nodes})
    tr = run(program, network, cfg, RandomFair(seed=seed), max_steps)
    return tr.cumulative_output if tr.quiescent else None


def check_monotone(subject: TransducerProgram | Callable[[Instance], frozenset],
                   pairs: Iterable[tuple[Instance, Instance]], network: Network | None = None, seed: int = 0,
                   max_steps: int = 10_000) -> CheckVerdict:
    """Check Q(I) ⊆ Q(J) on each pair; ``subject`` is a transducer or a query function."""
    if isinstance(subject, TransducerProgram):
        def query(inst: Instance, k: int):
            return distributed_output(subject, inst, network, seed + k, max_steps)
    else:
        def query(inst: Instance, k: int):
            return frozenset(subject(inst))
    n = 0
    stuck = []
    for k, (I, J) in enumerate(pairs):
        if not I <= J:
            raise ValueError("pairs must satisfy I ⊆ J")
        n += 1
        qi, qj = query(I, 2 * k), query(J, 2 * k + 1)
        if qi is None or qj is None:
            stuck.append(k)
            continue
        if not qi <= qj:
            ev = {"I": format_instance(I), "J": format_instance(J), "Q(I)": _tuples(qi), "Q(J)": _tuples(qj),
                  "missing": _tuples(qi - qj), "pair": k, "seed": seed}
            return CheckVerdict("monotone", FAIL, [ev], {"pairs": n})
    if stuck:
        return CheckVerdict("monotone", INCONCLUSIVE, [{"pairs_without_quiescence": stuck}], {"pairs": n})
    return CheckVerdict("monotone", PASS, [], {"pairs": n})
