"""Horizontal partitions of an input instance over the nodes of a network."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

from ..relcore import DataElement, Fact, Instance, ParseError, parse_fact, strip_comment


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class HorizontalPartition:
    assignment: Mapping[DataElement, Instance]

    def union(self) -> Instance:
        out: frozenset[Fact] = frozenset()
        for inst in self.assignment.values():
            out |= inst.facts
        return Instance(out)

    def covers(self, instance: Instance) -> bool:
        return self.union() == instance

    def key(self) -> tuple:
        return tuple((v, self.assignment[v].facts) for v in sorted(self.assignment))

    def __hash__(self) -> int:
        return hash(self.key())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, HorizontalPartition) and self.key() == other.key()

    def to_text(self) -> str:
        return format_partition(self)


def partition_count(n_facts: int, n_nodes: int) -> int:
    return (2 ** n_nodes - 1) ** n_facts


def _from_masks(facts: Sequence[Fact], nodes: Sequence[DataElement], masks: Sequence[int]) -> HorizontalPartition:
    acc: dict[str, list] = {v: [] for v in nodes}
    for f, m in zip(facts, masks):
        for i, v in enumerate(nodes):
            if m >> i & 1:
                acc[v].append(f)
    return HorizontalPartition({v: Instance(fs) for v, fs in acc.items()})


def full_replication(instance: Instance, nodes: Sequence[DataElement]) -> HorizontalPartition:
    return HorizontalPartition({v: instance for v in nodes})


def round_robin(instance: Instance, nodes: Sequence[DataElement]) -> HorizontalPartition:
    facts = sorted(instance.facts)
    return _from_masks(facts, nodes, [1 << (i % len(nodes)) for i in range(len(facts))])


def all_at_one(instance: Instance, nodes: Sequence[DataElement], node: DataElement | None = None) -> HorizontalPartition:
    node = nodes[0] if node is None else node
    return HorizontalPartition({v: instance if v == node else Instance() for v in nodes})


def canonical_partitions(instance: Instance, nodes: Sequence[DataElement]) -> list[HorizontalPartition]:
    out: list[HorizontalPartition] = []
    for p in (full_replication(instance, nodes), round_robin(instance, nodes), all_at_one(instance, nodes)):
        if p not in out:
            out.append(p)
    return out


def random_partition(instance: Instance, nodes: Sequence[DataElement], rng: random.Random) -> HorizontalPartition:
    facts = sorted(instance.facts)
    full = (1 << len(nodes)) - 1
    return _from_masks(facts, nodes, [rng.randint(1, full) for _ in facts])


def enumerate_partitions(instance: Instance, nodes: Sequence[DataElement], budget: int = 1000,
                         exhaustive: bool | None = None, seed: int = 0) -> Iterator[HorizontalPartition]:
    """Yield horizontal partitions of ``instance`` over ``nodes``.

    Exhaustive mode gives every assignment of each fact to a nonempty node
    set exactly once. Sampling mode (used when the exhaustive count exceeds
    ``budget``, or on request) yields the canonical partitions followed by
    distinct seeded random draws, ``budget`` in total (or every partition,
    if there are fewer).
    """
    nodes = list(nodes)
    facts = sorted(instance.facts)
    count = partition_count(len(facts), len(nodes))
    if exhaustive is None:
        exhaustive = count <= budget
    if exhaustive:
        if count > budget:
            raise BudgetExceeded(f"{count} partitions exceed the budget of {budget}")
        for masks in itertools.product(range(1, 1 << len(nodes)), repeat=len(facts)):
            yield _from_masks(facts, nodes, masks)
        return
    rng = random.Random(seed)
    want = min(budget, count)
    seen: set[HorizontalPartition] = set()
    for p in canonical_partitions(instance, nodes):
        if len(seen) >= want:
            return
        seen.add(p)
        yield p
    # rejection sampling; the attempt cap only matters when want is close to count
    for _ in range(50 * budget):
        if len(seen) >= want:
            return
        p = random_partition(instance, nodes, rng)
        if p not in seen:
            seen.add(p)
            yield p


def partition_by_mode(instance: Instance, nodes: Sequence[DataElement], mode: str) -> HorizontalPartition:
    """``full``, ``disjoint``, ``one-node`` or ``random:<seed>``."""
    if mode == "full":
        return full_replication(instance, nodes)
    if mode == "disjoint":
        return round_robin(instance, nodes)
    if mode == "one-node":
        return all_at_one(instance, nodes)
    if mode.startswith("random:"):
        return random_partition(instance, nodes, random.Random(int(mode.split(":", 1)[1])))
    raise ValueError(f"unknown partition mode {mode!r}")


def parse_partition(text: str) -> HorizontalPartition:
    """Format: ``node v { R(a,b). S(c). }`` blocks."""
    import re

    clean = "\n".join(strip_comment(ln) for ln in text.splitlines())
    acc: dict[str, list] = {}
    pos = 0
    for m in re.finditer(r"node\s+([A-Za-z0-9_]+)\s*\{([^{}]*)\}", clean):
        if clean[pos:m.start()].strip():
            raise ParseError("unexpected text in partition file", clean.count("\n", 0, pos) + 1)
        pos = m.end()
        line = clean.count("\n", 0, m.start()) + 1
        facts = acc.setdefault(m.group(1), [])
        for stmt in m.group(2).split("."):
            if stmt.strip():
                facts.append(parse_fact(stmt, line))
    if clean[pos:].strip():
        raise ParseError("unexpected text in partition file", clean.count("\n", 0, pos) + 1)
    return HorizontalPartition({v: Instance(fs) for v, fs in acc.items()})


def format_partition(p: HorizontalPartition) -> str:
    out = []
    for v in sorted(p.assignment):
        facts = " ".join(f"{f}." for f in p.assignment[v])
        out.append(f"node {v} {{ {facts} }}" if facts else f"node {v} {{ }}")
    return "\n".join(out) + "\n"
