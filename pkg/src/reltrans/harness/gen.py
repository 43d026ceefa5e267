"""Seeded generators for test instances and Datalog programs."""

from __future__ import annotations

import itertools
import random

from ..relcore import Atom, Fact, Instance, Rule


def random_graph(rng: random.Random, max_vertices: int = 8, relation: str = "S",
                 density: float | None = None) -> Instance:
    n = rng.randint(1, max_vertices)
    p = density if density is not None else rng.uniform(0.1, 0.5)
    verts = [str(i) for i in range(1, n + 1)]
    return Instance(Fact(relation, (a, b)) for a in verts for b in verts if rng.random() < p)


def random_set(rng: random.Random, universe: int = 4, relation: str = "S", p: float = 0.5) -> Instance:
    return Instance(Fact(relation, (f"c{i}",)) for i in range(universe) if rng.random() < p)


def random_subset(rng: random.Random, instance: Instance, p: float = 0.5) -> Instance:
    return Instance(f for f in sorted(instance.facts) if rng.random() < p)


def random_pair(rng: random.Random, make) -> tuple[Instance, Instance]:
    """A random pair I ⊆ J where J comes from ``make(rng)``."""
    J = make(rng)
    return random_subset(rng, J), J


def all_small_instances(relation: str, arity: int, elems: list[str], max_facts: int) -> list[Instance]:
    tuples = list(itertools.product(elems, repeat=arity))
    out = []
    for k in range(max_facts + 1):
        for combo in itertools.combinations(tuples, k):
            out.append(Instance(Fact(relation, t) for t in combo))
    return out


EDB = {"E": 2, "F": 1}
IDB = ("P", "Q")


def random_datalog(rng: random.Random, max_rules: int = 3) -> tuple[list[Rule], str, int]:
    """A random range-restricted positive program over E/2, F/1 with IDB P, Q.

    Returns ``(rules, answer, arity)``; the answer is an IDB predicate that
    has at least one rule.
    """
    idb_arity = {"P": rng.choice([1, 2]), "Q": rng.choice([1, 2])}
    arity = {**EDB, **idb_arity}
    rules = []
    n = rng.randint(1, max_rules)
    for i in range(n):
        head_pred = "P" if i == 0 else rng.choice(IDB)
        body = []
        for _ in range(rng.randint(1, 2)):
            pred = rng.choice(["E", "E", "F", *IDB])
            body.append(pred)
        if all(p in IDB for p in body):
            body[0] = "E"
        vars_pool = ["x", "y", "z"]
        atoms = [Atom(p, tuple(rng.choice(vars_pool) for _ in range(arity[p]))) for p in body]
        bound = sorted({t for a in atoms for t in a.terms})
        head = Atom(head_pred, tuple(rng.choice(bound) for _ in range(arity[head_pred])))
        rules.append(Rule(head, tuple(atoms)))
    return rules, "P", idb_arity["P"]


def random_edb(rng: random.Random, universe: int = 4, p: float = 0.3) -> Instance:
    elems = [f"d{i}" for i in range(universe)]
    facts = [Fact("E", (a, b)) for a in elems for b in elems if rng.random() < p]
    facts += [Fact("F", (a,)) for a in elems if rng.random() < p]
    return Instance(facts)


def random_instance(rng: random.Random, schema: dict[str, int], universe: int = 4, p: float = 0.3,
                    max_facts: int | None = None) -> Instance:
    """Random facts over ``schema`` using elements ``e0..e{universe-1}``."""
    elems = [f"e{i}" for i in range(universe)]
    facts = [Fact(r, t) for r in sorted(schema) for t in itertools.product(elems, repeat=schema[r])
             if rng.random() < p]
    if max_facts is not None and len(facts) > max_facts:
        facts = rng.sample(facts, max_facts)
    return Instance(facts)
