"""Facts, instances and a small Datalog evaluator under active-domain semantics.

Three query dialects are accepted by :class:`QueryProgram`:

``nonrecursive-negation``
    acyclic rules, negation allowed (first-order power).
``positive-recursive``
    recursion allowed, no negation.
``ucq-negation``
    one answer predicate defined directly over extensional relations.

Terms in rules are always variables; there are no constants, so every query
is generic by construction. ``Adom/1`` is a built-in relation holding the
active domain of the instance a query is evaluated on.
"""

from __future__ import annotations

import itertools
import re
from collections import defaultdict
from operator import itemgetter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, NamedTuple

import networkx as nx

DataElement = str

ADOM = "Adom"

NONRECURSIVE = "nonrecursive-negation"
POSITIVE = "positive-recursive"
UCQ = "ucq-negation"
STRATIFIED = "stratified"  # internal, used by the temporal interpreter
DIALECTS = (NONRECURSIVE, POSITIVE, UCQ)

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_ELEMENT = r"[A-Za-z0-9_]+"


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SchemaError(ValueError):
    pass


class SafetyError(ValueError):
    """A rule is not range-restricted."""


class DialectError(ValueError):
    pass


class Fact(NamedTuple):
    relation: str
    args: tuple[DataElement, ...]

    def __str__(self) -> str:
        return f"{self.relation}({','.join(self.args)})"


def fact(relation: str, *args: DataElement) -> Fact:
    return Fact(relation, tuple(args))


@dataclass(frozen=True)
class RelationSchema:
    name: str
    arity: int

    def __post_init__(self):
        if self.arity < 0:
            raise SchemaError(f"negative arity for {self.name}")


class DatabaseSchema(dict):
    """Mapping relation name -> arity."""

    @classmethod
    def of(cls, *relations: RelationSchema | tuple[str, int]) -> "DatabaseSchema":
        out = cls()
        for r in relations:
            name, arity = (r.name, r.arity) if isinstance(r, RelationSchema) else r
            if name in out:
                raise SchemaError(f"duplicate relation {name}")
            out[name] = arity
        return out


class Instance:
    """An immutable finite set of facts.

    Equality and hashing go through the underlying frozenset, whose hash is
    cached by CPython; states are used as memo keys in the simulator.
    """

    __slots__ = ("facts", "_rel")

    def __init__(self, facts: Iterable[Fact] = ()):
        self.facts: frozenset[Fact] = facts if isinstance(facts, frozenset) else frozenset(facts)
        self._rel: dict[str, frozenset[tuple]] | None = None

    @property
    def relations(self) -> dict[str, frozenset[tuple]]:
        if self._rel is None:
            acc: dict[str, set] = defaultdict(set)
            for f in self.facts:
                acc[f.relation].add(f.args)
            self._rel = {k: frozenset(v) for k, v in acc.items()}
        return self._rel

    def relation(self, name: str) -> frozenset[tuple]:
        return self.relations.get(name, frozenset())

    def restrict(self, names: Iterable[str]) -> "Instance":
        names = set(names)
        return Instance(f for f in self.facts if f.relation in names)

    def without(self, names: Iterable[str]) -> "Instance":
        names = set(names)
        return Instance(f for f in self.facts if f.relation not in names)

    def adom(self) -> frozenset[DataElement]:
        return adom(self)

    def check_schema(self, schema: Mapping[str, int]) -> None:
        for f in self.facts:
            if f.relation not in schema:
                raise SchemaError(f"relation {f.relation} not in schema")
            if len(f.args) != schema[f.relation]:
                raise SchemaError(f"{f} does not have arity {schema[f.relation]}")

    def __or__(self, other: "Instance") -> "Instance":
        return Instance(self.facts | other.facts)

    def __and__(self, other: "Instance") -> "Instance":
        return Instance(self.facts & other.facts)

    def __sub__(self, other: "Instance") -> "Instance":
        return Instance(self.facts - other.facts)

    def __le__(self, other: "Instance") -> bool:
        return self.facts <= other.facts

    def __lt__(self, other: "Instance") -> bool:
        return self.facts < other.facts

    def __iter__(self) -> Iterator[Fact]:
        return iter(sorted(self.facts))

    def __len__(self) -> int:
        return len(self.facts)

    def __contains__(self, f: object) -> bool:
        return f in self.facts

    def __bool__(self) -> bool:
        return bool(self.facts)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Instance):
            return self.facts == other.facts
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.facts)

    def __repr__(self) -> str:
        return "Instance({" + ", ".join(str(f) for f in self) + "})"


EMPTY = Instance()


def adom(instance: Instance | Iterable[Fact]) -> frozenset[DataElement]:
    facts = instance.facts if isinstance(instance, Instance) else instance
    return frozenset(a for f in facts for a in f.args)


def apply_permutation(h: Mapping[DataElement, DataElement] | Callable[[DataElement], DataElement],
                      instance: Instance) -> Instance:
    """Rename every data element pointwise. Elements missing from a mapping are fixed."""
    if callable(h):
        fn = h
    else:
        fn = lambda a: h.get(a, a)  # noqa: E731
    return Instance(Fact(f.relation, tuple(fn(a) for a in f.args)) for f in instance.facts)


# ---------------------------------------------------------------------------
# rules

@dataclass(frozen=True)
class Atom:
    pred: str
    terms: tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.terms)

    def __str__(self) -> str:
        return f"{self.pred}({', '.join(self.terms)})"


@dataclass(frozen=True)
class Rule:
    head: Atom
    pos: tuple[Atom, ...] = ()
    neg: tuple[Atom, ...] = ()

    def __post_init__(self):
        bound = {t for a in self.pos for t in a.terms}
        for t in self.head.terms:
            if t not in bound:
                raise SafetyError(f"head variable {t} of {self.head.pred} not bound by a positive atom")
        for a in self.neg:
            for t in a.terms:
                if t not in bound:
                    raise SafetyError(f"variable {t} in negated {a.pred} not bound by a positive atom")

    def body_preds(self) -> set[str]:
        return {a.pred for a in self.pos} | {a.pred for a in self.neg}

    def __str__(self) -> str:
        body = [str(a) for a in self.pos] + [f"not {a}" for a in self.neg]
        if not body:
            return f"{self.head}."
        return f"{self.head} :- {', '.join(body)}."


def _dependency_graph(rules: Iterable[Rule]) -> nx.DiGraph:
    g = nx.DiGraph()
    for r in rules:
        g.add_node(r.head.pred)
        for a in r.pos:
            g.add_edge(a.pred, r.head.pred, neg=g.get_edge_data(a.pred, r.head.pred, {}).get("neg", False))
        for a in r.neg:
            g.add_edge(a.pred, r.head.pred, neg=True)
    return g


def stratify(rules: Iterable[Rule]) -> list[tuple[frozenset[str], bool]]:
    """Order intensional predicates into strata.

    Returns ``(predicates, recursive)`` per stratum, in evaluation order.
    Raises :class:`DialectError` when negation occurs inside a recursive
    component.
    """
    rules = list(rules)
    idb = {r.head.pred for r in rules}
    g = _dependency_graph(rules)
    cond = nx.condensation(g)
    out = []
    for c in nx.topological_sort(cond):
        members = frozenset(cond.nodes[c]["members"])
        preds = members & idb
        if not preds:
            continue
        recursive = len(members) > 1 or any(g.has_edge(p, p) for p in members)
        if recursive:
            for u, v, d in g.subgraph(members).edges(data=True):
                if d.get("neg"):
                    raise DialectError(f"negation of {u} inside recursion through {v}")
        out.append((preds, recursive))
    return out


# ---------------------------------------------------------------------------
# evaluation

def _getter(positions: tuple[int, ...]):
    """Tuple-valued item getter (``itemgetter`` returns a bare item for one position)."""
    if not positions:
        return lambda seq: ()
    if len(positions) == 1:
        p = positions[0]
        return lambda seq: (seq[p],)
    return itemgetter(*positions)


class _Plan:
    """A compiled rule body: positive atoms in join order, then negation checks.

    Variables live in numbered slots of a flat environment list; each join
    step only writes slots that no earlier step bound, so no copying is needed.
    """

    __slots__ = ("rule", "steps", "neg", "head", "nslots")

    def __init__(self, rule: Rule, first: int | None = None):
        self.rule = rule
        order = list(range(len(rule.pos)))
        bound: set[str] = set()
        slot: dict[str, int] = {}
        steps = []
        if first is not None:
            order.remove(first)
            pending = [first]
        else:
            pending = []
        while order or pending:
            if pending:
                i = pending.pop()
            else:
                # most already-bound terms first, then fewest fresh ones
                i = max(order, key=lambda j: (sum(t in bound for t in rule.pos[j].terms),
                                              -len(set(rule.pos[j].terms) - bound)))
                order.remove(i)
            atom = rule.pos[i]
            key_pos = tuple(k for k, t in enumerate(atom.terms) if t in bound)
            key_slots = tuple(slot[atom.terms[k]] for k in key_pos)
            binds = []
            checks = []
            seen_here: dict[str, int] = {}
            for k, t in enumerate(atom.terms):
                if t in bound:
                    continue
                if t in seen_here:
                    checks.append((k, seen_here[t]))
                else:
                    seen_here[t] = k
                    slot[t] = len(slot)
                    binds.append((slot[t], k))
            bound |= set(atom.terms)
            steps.append((i, atom.pred, key_pos, _getter(key_slots) if key_pos else None,
                          tuple(binds), tuple(checks)))
        self.steps = steps
        self.neg = [(a.pred, _getter(tuple(slot[t] for t in a.terms))) for a in rule.neg]
        self.head = _getter(tuple(slot[t] for t in rule.head.terms))
        self.nslots = len(slot)


class _Store:
    """Relations under evaluation plus lazily built hash indexes."""

    def __init__(self, base: Mapping[str, frozenset[tuple]]):
        self.rels: dict[str, frozenset[tuple] | set] = dict(base)
        self._idx: dict[tuple[str, tuple[int, ...], int], dict] = {}

    def get(self, pred: str):
        return self.rels.get(pred, ())

    def index(self, pred: str, rel, key_pos: tuple[int, ...]) -> dict:
        k = (pred, key_pos, id(rel))
        idx = self._idx.get(k)
        if idx is None:
            idx = defaultdict(list)
            key = _getter(key_pos)
            for t in rel:
                idx[key(t)].append(t)
            self._idx[k] = idx
        return idx

    def invalidate(self, pred: str) -> None:
        for k in [k for k in self._idx if k[0] == pred]:
            del self._idx[k]


def _fire(plan: _Plan, store: _Store, override: dict[int, object] | None = None) -> set[tuple]:
    out: set[tuple] = set()
    steps = plan.steps
    for i, pred, *_ in steps:
        if not (override is not None and i in override) and not store.get(pred):
            return out
    n = len(steps)
    env: list = [None] * plan.nslots
    negs = [(store.get(pred), key) for pred, key in plan.neg]
    head = plan.head

    def rec(depth: int):
        if depth == n:
            for rel, key in negs:
                if key(env) in rel:
                    return
            out.add(head(env))
            return
        i, pred, key_pos, key, binds, checks = steps[depth]
        over = override is not None and i in override
        rel = override[i] if over else store.get(pred)
        if not rel:
            return
        if key is not None:
            cands = store.index(f"{pred}#d" if over else pred, rel, key_pos).get(key(env), ())
        else:
            cands = rel
        for t in cands:
            if checks:
                ok = True
                for a, b in checks:
                    if t[a] != t[b]:
                        ok = False
                        break
                if not ok:
                    continue
            for v, k in binds:
                env[v] = t[k]
            rec(depth + 1)

    rec(0)
    return out


class CompiledRules:
    """A rule set compiled for repeated stratified evaluation."""

    def __init__(self, rules: Iterable[Rule]):
        self.rules = tuple(rules)
        self.strata = stratify(self.rules)
        self.idb = frozenset(r.head.pred for r in self.rules)
        self.uses_adom = any(ADOM in r.body_preds() for r in self.rules)
        self._plans = []
        for preds, recursive in self.strata:
            rs = [r for r in self.rules if r.head.pred in preds]
            if not recursive:
                self._plans.append((preds, False, [_Plan(r) for r in rs], []))
                continue
            base_plans = []
            delta_plans = []
            for r in rs:
                rec_idx = [i for i, a in enumerate(r.pos) if a.pred in preds]
                if not rec_idx:
                    base_plans.append(_Plan(r))
                for i in rec_idx:
                    delta_plans.append((i, _Plan(r, first=i)))
            self._plans.append((preds, True, base_plans, delta_plans))

    def __getstate__(self):
        return self.rules

    def __setstate__(self, rules):
        self.__init__(rules)

    def evaluate(self, base: Mapping[str, frozenset[tuple]],
                 adom_elems: Iterable[DataElement] | None = None) -> dict[str, frozenset[tuple]]:
        """Return every intensional relation of the least stratified model over ``base``."""
        store = _Store(base)
        if self.uses_adom:
            if adom_elems is None:
                adom_elems = {a for rel in base.values() for t in rel for a in t}
            store.rels[ADOM] = frozenset((a,) for a in adom_elems)
        for pred in self.idb:
            store.rels[pred] = frozenset()
        for preds, recursive, base_plans, delta_plans in self._plans:
            acc: dict[str, set] = {p: set() for p in preds}
            for plan in base_plans:
                acc[plan.rule.head.pred] |= _fire(plan, store)
            for p in preds:
                store.rels[p] = frozenset(acc[p])
                store.invalidate(p)
            if not recursive:
                continue
            # semi-naive iteration
            delta = {p: store.rels[p] for p in preds}
            while any(delta.values()):
                new: dict[str, set] = {p: set() for p in preds}
                for i, plan in delta_plans:
                    d = delta[plan.rule.pos[i].pred]
                    if not d:
                        continue
                    new[plan.rule.head.pred] |= _fire(plan, store, {i: d})
                for p in preds:
                    new[p] -= store.rels[p]
                delta = {p: frozenset(new[p]) for p in preds}
                store._idx = {k: v for k, v in store._idx.items() if not k[0].endswith("#d")}
                for p in preds:
                    if delta[p]:
                        store.rels[p] = store.rels[p] | delta[p]
                        store.invalidate(p)
        return {p: frozenset(store.rels[p]) for p in self.idb}


@dataclass(frozen=True, eq=False)
class QueryProgram:
    """A Datalog query with a designated answer predicate.

    Validation happens at construction: dialect restrictions, range
    restriction (in :class:`Rule`) and consistent arities.
    """

    rules: tuple[Rule, ...]
    answer: str
    arity: int
    dialect: str | None = None
    _compiled: CompiledRules = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rules = tuple(self.rules)
        object.__setattr__(self, "rules", rules)
        arities: dict[str, int] = {}
        for r in rules:
            for a in (r.head, *r.pos, *r.neg):
                if arities.setdefault(a.pred, a.arity) != a.arity:
                    raise SchemaError(f"{a.pred} used with arities {arities[a.pred]} and {a.arity}")
            if r.head.pred == ADOM:
                raise SchemaError("Adom is built in and cannot be defined")
        if arities.get(self.answer, self.arity) != self.arity:
            raise SchemaError(f"answer {self.answer} has arity {arities[self.answer]}, expected {self.arity}")
        if ADOM in arities and arities[ADOM] != 1:
            raise SchemaError("Adom is unary")
        try:
            compiled = CompiledRules(rules)
        except DialectError:
            if self.dialect is None:
                raise DialectError("negation inside recursion is not supported") from None
            raise
        dialect = self.dialect or infer_dialect(rules, compiled)
        if dialect not in DIALECTS and dialect != STRATIFIED:
            raise DialectError(f"unknown dialect {dialect}")
        _check_dialect(rules, self.answer, dialect, compiled)
        object.__setattr__(self, "dialect", dialect)
        object.__setattr__(self, "_compiled", compiled)
        object.__setattr__(self, "_edb_order", tuple(sorted(self.edb)))
        object.__setattr__(self, "_memo", {})

    @property
    def idb(self) -> frozenset[str]:
        return self._compiled.idb

    @property
    def edb(self) -> frozenset[str]:
        preds = {p for r in self.rules for p in r.body_preds()}
        return frozenset(preds - self.idb - {ADOM})

    def mentions(self, pred: str) -> bool:
        return any(pred in r.body_preds() or r.head.pred == pred for r in self.rules)

    def answer_tuples(self, instance: Instance) -> frozenset[tuple]:
        if not self.rules:
            return frozenset()
        edb = self._edb_order
        base = {p: instance.relation(p) for p in edb}
        elems = adom(instance) if self._compiled.uses_adom else None
        # memo on the relations actually read; states reached in a run share them often
        key = (tuple(base[p] for p in edb), elems)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        out = self._compiled.evaluate(base, elems).get(self.answer, frozenset())
        if len(self._memo) > 50_000:
            self._memo.clear()
        self._memo[key] = out
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QueryProgram):
            return NotImplemented
        return (set(self.rules), self.answer, self.arity, self.dialect) == \
            (set(other.rules), other.answer, other.arity, other.dialect)

    def __hash__(self) -> int:
        return hash((frozenset(self.rules), self.answer, self.arity, self.dialect))

    def __getstate__(self):
        d = dict(self.__dict__)
        d["_memo"] = {}
        return d

    def __str__(self) -> str:
        return "\n".join(str(r) for r in self.rules)


def empty_query(answer: str, arity: int) -> QueryProgram:
    return QueryProgram((), answer, arity, NONRECURSIVE)


def infer_dialect(rules: Iterable[Rule], compiled: CompiledRules | None = None) -> str:
    compiled = compiled or CompiledRules(rules)
    if any(rec for _, rec in compiled.strata):
        return POSITIVE
    return NONRECURSIVE


def _check_dialect(rules: tuple[Rule, ...], answer: str, dialect: str, compiled: CompiledRules) -> None:
    recursive = any(rec for _, rec in compiled.strata)
    if dialect == NONRECURSIVE and recursive:
        raise DialectError("recursive rules in a nonrecursive program")
    if dialect == POSITIVE and any(r.neg for r in rules):
        raise DialectError("negation is not allowed in positive recursive Datalog")
    if dialect == UCQ:
        heads = {r.head.pred for r in rules}
        if heads - {answer}:
            raise DialectError(f"UCQ with intensional predicates {sorted(heads - {answer})}")
        if any(answer in r.body_preds() for r in rules):
            raise DialectError("UCQ answer predicate used in a body")


def eval_query(query: QueryProgram, instance: Instance, schema: Mapping[str, int] | None = None) -> Instance:
    """Evaluate ``query`` and return the answer relation as an instance."""
    if schema is not None:
        for p in query.edb:
            if p not in schema:
                raise SchemaError(f"input schema lacks {p}")
    return Instance(Fact(query.answer, t) for t in query.answer_tuples(instance))


# ---------------------------------------------------------------------------
# text formats

_FACT_RE = re.compile(rf"^\s*({_IDENT})\s*\(\s*((?:{_ELEMENT}\s*(?:,\s*{_ELEMENT}\s*)*)?)\)\s*$")


def strip_comment(line: str) -> str:
    i = line.find("%")
    return line if i < 0 else line[:i]


def parse_fact(text: str, line: int | None = None) -> Fact:
    m = _FACT_RE.match(text)
    if not m:
        raise ParseError(f"malformed fact {text.strip()!r}", line)
    args = tuple(a.strip() for a in m.group(2).split(",")) if m.group(2).strip() else ()
    return Fact(m.group(1), args)


def _split_statements(text: str, start_line: int = 1) -> list[tuple[str, int]]:
    """Split on '.' terminators, tracking the line where each statement starts."""
    out = []
    buf: list[str] = []
    buf_line = None
    for n, raw in enumerate(text.splitlines(), start_line):
        line = strip_comment(raw)
        for ch in line:
            if ch == ".":
                stmt = "".join(buf).strip()
                if stmt:
                    out.append((stmt, buf_line or n))
                buf = []
                buf_line = None
            else:
                if buf_line is None and not ch.isspace():
                    buf_line = n
                buf.append(ch)
        buf.append(" ")
    rest = "".join(buf).strip()
    if rest:
        raise ParseError(f"missing '.' after {rest!r}", buf_line)
    return out


def parse_instance(text: str) -> Instance:
    return Instance(parse_fact(s, n) for s, n in _split_statements(text))


def format_instance(instance: Instance) -> str:
    return "".join(f"{f}.\n" for f in instance)


_ATOM_RE = re.compile(rf"^\s*(not\s+)?({_IDENT})\s*\(\s*((?:{_IDENT}\s*(?:,\s*{_IDENT}\s*)*)?)\)\s*$")


def _split_top(body: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p for p in parts if p.strip()]


def parse_rule(text: str, line: int | None = None, fresh: Iterator[int] | None = None) -> Rule:
    """Parse ``Head(x,y) :- B1(x,z), not B2(z), B3(z,y)`` (no trailing dot).

    ``_`` is an anonymous variable, allowed in positive atoms only.
    """
    fresh = fresh or itertools.count()
    if ":-" in text:
        head_s, body_s = text.split(":-", 1)
    else:
        head_s, body_s = text, ""

    def atom(s: str, allow_not: bool) -> tuple[Atom, bool]:
        m = _ATOM_RE.match(s)
        if not m:
            raise ParseError(f"malformed atom {s.strip()!r}", line)
        negated = bool(m.group(1))
        if negated and not allow_not:
            raise ParseError("negated head", line)
        terms = tuple(t.strip() for t in m.group(3).split(",")) if m.group(3).strip() else ()
        if "_" in terms:
            if negated:
                raise ParseError(f"anonymous variable in negated {m.group(2)}", line)
            terms = tuple(f"_{next(fresh)}" if t == "_" else t for t in terms)
        return Atom(m.group(2), terms), negated

    head, _ = atom(head_s, False)
    pos, neg = [], []
    for part in _split_top(body_s):
        a, negated = atom(part, True)
        (neg if negated else pos).append(a)
    try:
        return Rule(head, tuple(pos), tuple(neg))
    except SafetyError as e:
        raise ParseError(str(e), line) from None


def parse_rules(text: str, start_line: int = 1) -> list[Rule]:
    fresh = itertools.count()
    return [parse_rule(s, n, fresh) for s, n in _split_statements(text, start_line)]


def parse_query(text: str, answer: str, arity: int, dialect: str | None = None) -> QueryProgram:
    return QueryProgram(tuple(parse_rules(text)), answer, arity, dialect)
