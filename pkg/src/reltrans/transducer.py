"""Relational transducers: schemas, programs and the local transition.

A program is a family of queries over ``in ∪ sys ∪ msg ∪ mem``. Each query
lives in a rule block of the ``.rtx`` format::

    schema { in: S/2; msg: M/2; mem: R/2, T/2; out: 2 }
    send M   { M(x,y) :- S(x,y). }
    insert R { R(x,y) :- M(x,y). }
    delete R { }
    output   { Out(x,y) :- R(x,y). }

Inside a block, heads named after the block's target (``Out`` for the output
block) define the query answer. The same name in a body refers to the
relation as it is in the local state, or to the received messages for a
message relation. Any other head predicate is a block-local helper.
"""

from __future__ import annotations

import itertools
import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .relcore import (
    ADOM, Atom, DataElement, Fact, Instance, ParseError, QueryProgram, Rule, SchemaError,
    _split_statements, parse_rule, strip_comment,
)

ID = "Id"
ALL = "All"
OUT = "Out"
SYSTEM = {ID: 1, ALL: 1}
RESERVED = {ID, ALL, ADOM, OUT}
ANSWER = "__answer"


@dataclass(frozen=True)
class TransducerSchema:
    inputs: Mapping[str, int]
    messages: Mapping[str, int]
    memory: Mapping[str, int]
    out_arity: int

    def __post_init__(self):
        for attr in ("inputs", "messages", "memory"):
            object.__setattr__(self, attr, dict(sorted(dict(getattr(self, attr)).items())))
        seen: dict[str, str] = {}
        for kind in ("inputs", "messages", "memory"):
            for name, arity in getattr(self, kind).items():
                if name in RESERVED or name.startswith("_"):
                    raise SchemaError(f"{name} is a reserved relation name")
                if name in seen:
                    raise SchemaError(f"{name} declared in both {seen[name]} and {kind}")
                if arity < 0:
                    raise SchemaError(f"negative arity for {name}")
                seen[name] = kind
        if self.out_arity < 0:
            raise SchemaError("negative output arity")

    @property
    def system(self) -> dict[str, int]:
        return dict(SYSTEM)

    @property
    def combined(self) -> dict[str, int]:
        return {**self.inputs, **SYSTEM, **self.messages, **self.memory}

    @property
    def state_relations(self) -> dict[str, int]:
        return {**self.inputs, **SYSTEM, **self.memory}

    def __hash__(self) -> int:
        return hash((tuple(self.inputs.items()), tuple(self.messages.items()),
                     tuple(self.memory.items()), self.out_arity))


@dataclass(frozen=True)
class LocalTransition:
    before: Instance
    received: Instance
    sent: Instance
    output: frozenset[tuple]
    after: Instance


@dataclass(eq=False)
class TransducerProgram:
    schema: TransducerSchema
    send: dict[str, QueryProgram]
    insert: dict[str, QueryProgram]
    delete: dict[str, QueryProgram]
    output: QueryProgram
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    CACHE_LIMIT = 200_000

    def __post_init__(self):
        s = self.schema
        for R, a in s.messages.items():
            self.send.setdefault(R, _empty(a))
        for R, a in s.memory.items():
            self.insert.setdefault(R, _empty(a))
            self.delete.setdefault(R, _empty(a))
        for kind, qs, rels in (("send", self.send, s.messages), ("insert", self.insert, s.memory),
                               ("delete", self.delete, s.memory)):
            for R, q in qs.items():
                if R not in rels:
                    raise SchemaError(f"{kind} query for undeclared relation {R}")
                if q.arity != rels[R]:
                    raise SchemaError(f"{kind} {R}: arity {q.arity}, expected {rels[R]}")
        if self.output.arity != s.out_arity:
            raise SchemaError(f"output arity {self.output.arity}, expected {s.out_arity}")
        combined = s.combined
        for q in self.queries():
            for p in q.edb:
                if p not in combined:
                    raise SchemaError(f"undeclared predicate {p}")
                arity = next(a.arity for r in q.rules for a in (*r.pos, *r.neg) if a.pred == p)
                if arity != combined[p]:
                    raise SchemaError(f"{p} used with arity {arity}, declared {combined[p]}")

    def queries(self) -> list[QueryProgram]:
        return [*self.send.values(), *self.insert.values(), *self.delete.values(), self.output]

    # flags are syntactic
    @property
    def uses_id(self) -> bool:
        return any(q.mentions(ID) for q in self.queries())

    @property
    def uses_all(self) -> bool:
        return any(q.mentions(ALL) for q in self.queries())

    @property
    def uses_adom(self) -> bool:
        return any(q.mentions(ADOM) for q in self.queries())

    @property
    def oblivious(self) -> bool:
        # Adom ranges over node identifiers too, so it counts as system knowledge
        return not (self.uses_id or self.uses_all or self.uses_adom)

    @property
    def inflationary(self) -> bool:
        return all(not q.rules for q in self.delete.values())

    @property
    def flags(self) -> dict[str, bool]:
        return {"oblivious": self.oblivious, "uses_id": self.uses_id,
                "uses_all": self.uses_all, "inflationary": self.inflationary}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TransducerProgram):
            return NotImplemented
        return (self.schema == other.schema and self.send == other.send and self.insert == other.insert
                and self.delete == other.delete and self.output == other.output)

    def __hash__(self) -> int:
        return hash((self.schema, self.output))

    def __getstate__(self):
        d = dict(self.__dict__)
        d["_cache"] = {}
        return d


def _empty(arity: int) -> QueryProgram:
    return QueryProgram((), ANSWER, arity)


def memory_update(old: Iterable[tuple], ins: Iterable[tuple], dele: Iterable[tuple]) -> frozenset[tuple]:
    """Apply inserts and deletes; a tuple both inserted and deleted keeps its old status."""
    old, ins, dele = frozenset(old), frozenset(ins), frozenset(dele)
    arities = {len(t) for t in old | ins | dele}
    if len(arities) > 1:
        raise SchemaError(f"mixed arities {sorted(arities)} in memory update")
    return (ins - dele) | (ins & dele & old) | (old - (ins | dele))


def step(program: TransducerProgram, state: Instance, received: Instance = Instance()) -> LocalTransition:
    """One deterministic local transition on ``state`` after reading ``received``."""
    key = (state, received)
    hit = program._cache.get(key)
    if hit is not None:
        return hit
    full = state | received if received else state
    sent = [Fact(R, t) for R, q in program.send.items() for t in q.answer_tuples(full)]
    out = program.output.answer_tuples(full)
    mem_facts = []
    for R in program.schema.memory:
        new = memory_update(state.relation(R), program.insert[R].answer_tuples(full),
                            program.delete[R].answer_tuples(full))
        mem_facts.extend(Fact(R, t) for t in new)
    after = Instance(frozenset(f for f in state.facts if f.relation not in program.schema.memory)
                     | frozenset(mem_facts))
    if after == state:
        after = state
    tr = LocalTransition(state, received, Instance(sent), out, after)
    if len(program._cache) > program.CACHE_LIMIT:
        program._cache.clear()
    program._cache[key] = tr
    return tr


def initial_state(program: TransducerProgram, node: DataElement, nodes: Iterable[DataElement],
                  inputs: Instance = Instance()) -> Instance:
    nodes = frozenset(nodes)
    if node not in nodes:
        raise SchemaError(f"node {node} not among {sorted(nodes)}")
    inputs.check_schema(program.schema.inputs)
    sys_facts = [Fact(ID, (node,))] + [Fact(ALL, (v,)) for v in nodes]
    return Instance(inputs.facts | frozenset(sys_facts))


def check_state(program: TransducerProgram, state: Instance) -> None:
    state.check_schema(program.schema.state_relations)
    ids = state.relation(ID)
    alls = state.relation(ALL)
    if len(ids) != 1:
        raise SchemaError("Id must hold exactly one node")
    if not alls or not ids <= alls:
        raise SchemaError("All must be nonempty and contain Id")


def assign_emulation_check(program: TransducerProgram, relation: str,
                           samples: Iterable[tuple[Instance, Instance]] | None = None,
                           n: int = 100, seed: int = 0) -> bool:
    """Check that ``relation`` behaves as ``relation := insert-query``.

    The program must use the insert query as the assigned value and a copy
    of the relation as its delete query. Without ``samples`` random states
    are drawn.
    """
    ins = program.insert[relation]
    if samples is None:
        samples = random_states(program, n=n, seed=seed)
    for state, rcv in samples:
        tr = step(program, state, rcv)
        if tr.after.relation(relation) != ins.answer_tuples(state | rcv):
            return False
    return True


def random_states(program: TransducerProgram, n: int = 100, seed: int = 0,
                  universe: int = 3, density: float = 0.4) -> list[tuple[Instance, Instance]]:
    """Random (state, received) pairs over a small universe; received is empty or one fact."""
    rng = random.Random(seed)
    elems = [f"e{i}" for i in range(universe)]
    nodes = ["n0", "n1"]
    out = []
    for _ in range(n):
        facts = []
        for R, a in {**program.schema.inputs, **program.schema.memory}.items():
            for t in _tuples(elems, a):
                if rng.random() < density:
                    facts.append(Fact(R, t))
        me = rng.choice(nodes)
        state = initial_state(program, me, nodes) | Instance(facts)
        rcv = Instance()
        if program.schema.messages and rng.random() < 0.7:
            R = rng.choice(sorted(program.schema.messages))
            rcv = Instance([Fact(R, tuple(rng.choice(elems) for _ in range(program.schema.messages[R])))])
        out.append((state, rcv))
    return out


def _tuples(elems: list[str], arity: int):
    return itertools.product(elems, repeat=arity)


# ---------------------------------------------------------------------------
# .rtx format

_BLOCK_RE = re.compile(r"(schema|send|insert|delete|output)\b\s*([A-Za-z_][A-Za-z0-9_]*)?\s*\{([^{}]*)\}", re.S)
_DECL_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*/\s*(\d+)$")


def _line_of(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def _parse_schema(body: str, line: int) -> TransducerSchema:
    parts: dict[str, dict[str, int]] = {"in": {}, "msg": {}, "mem": {}}
    out = None
    for item in body.split(";"):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ParseError(f"malformed schema entry {item!r}", line)
        key, val = (s.strip() for s in item.split(":", 1))
        if key == "out":
            if not val.isdigit():
                raise ParseError(f"output arity must be a number, got {val!r}", line)
            out = int(val)
            continue
        if key not in parts:
            raise ParseError(f"unknown schema section {key!r}", line)
        for decl in filter(None, (d.strip() for d in val.split(","))):
            m = _DECL_RE.match(decl)
            if not m:
                raise ParseError(f"malformed declaration {decl!r}", line)
            if m.group(1) in parts[key]:
                raise ParseError(f"duplicate declaration {m.group(1)}", line)
            parts[key][m.group(1)] = int(m.group(2))
    if out is None:
        raise ParseError("schema lacks output arity", line)
    try:
        return TransducerSchema(parts["in"], parts["msg"], parts["mem"], out)
    except SchemaError as e:
        raise ParseError(str(e), line) from None


def _block_query(schema: TransducerSchema, target: str, arity: int, body: str, line: int) -> QueryProgram:
    fresh = itertools.count()
    stmts = _split_statements(body, line)
    rules = [parse_rule(text, n, fresh) for text, n in stmts]
    lines = {id(r): n for r, (_, n) in zip(rules, stmts)}
    combined = schema.combined
    helpers = {r.head.pred for r in rules} - {target}
    for r in rules:
        n = lines[id(r)]
        h = r.head.pred
        if h != target and (h in combined or h in RESERVED or h.startswith("_")):
            raise ParseError(f"rule head {h} in block {target} shadows a declared or reserved relation", n)
        for a in (*r.pos, *r.neg):
            if a.pred not in combined and a.pred not in helpers and a.pred != ADOM:
                raise ParseError(f"undeclared predicate {a.pred}", n)
            if a.pred in combined and a.arity != combined[a.pred]:
                raise ParseError(f"{a.pred} used with arity {a.arity}, declared {combined[a.pred]}", n)
        if h == target and r.head.arity != arity:
            raise ParseError(f"{target} head has arity {r.head.arity}, expected {arity}", n)
    renamed = tuple(Rule(Atom(ANSWER, r.head.terms), r.pos, r.neg) if r.head.pred == target else r
                    for r in rules)
    try:
        return QueryProgram(renamed, ANSWER, arity)
    except ValueError as e:
        raise ParseError(str(e), line) from None


def parse_program(text: str, name: str = "") -> TransducerProgram:
    """Parse the ``.rtx`` transducer format; errors carry line numbers."""
    clean = "\n".join(strip_comment(ln) for ln in text.splitlines())
    schema = None
    send: dict[str, QueryProgram] = {}
    insert: dict[str, QueryProgram] = {}
    delete: dict[str, QueryProgram] = {}
    output = None
    pos = 0
    for m in _BLOCK_RE.finditer(clean):
        gap = clean[pos:m.start()]
        if gap.strip():
            raise ParseError(f"unexpected text {gap.strip()[:30]!r}", _line_of(clean, pos + len(gap) - len(gap.lstrip())))
        pos = m.end()
        kind, target, body = m.group(1), m.group(2), m.group(3)
        line = _line_of(clean, m.start(3))
        if kind == "schema":
            if schema is not None:
                raise ParseError("duplicate schema block", line)
            schema = _parse_schema(body, line)
            continue
        if schema is None:
            raise ParseError("schema block must come first", line)
        if kind == "output":
            if target:
                raise ParseError("output block takes no relation name", line)
            if output is not None:
                raise ParseError("duplicate output block", line)
            output = _block_query(schema, OUT, schema.out_arity, body, line)
            continue
        if not target:
            raise ParseError(f"{kind} block needs a relation name", line)
        rels = schema.messages if kind == "send" else schema.memory
        if target not in rels:
            raise ParseError(f"{kind} block for undeclared {'message' if kind == 'send' else 'memory'} "
                             f"relation {target}", line)
        table = {"send": send, "insert": insert, "delete": delete}[kind]
        if target in table:
            raise ParseError(f"duplicate {kind} block for {target}", line)
        table[target] = _block_query(schema, target, rels[target], body, line)
    tail = clean[pos:]
    if tail.strip():
        raise ParseError(f"unexpected text {tail.strip()[:30]!r}", _line_of(clean, pos + len(tail) - len(tail.lstrip())))
    if schema is None:
        raise ParseError("missing schema block", 1)
    if output is None:
        output = _empty(schema.out_arity)
    return TransducerProgram(schema, send, insert, delete, output, name=name)


def _format_block(header: str, q: QueryProgram, target: str) -> str:
    lines = []
    for r in q.rules:
        if r.head.pred == ANSWER:
            r = Rule(Atom(target, r.head.terms), r.pos, r.neg)
        lines.append(f"  {r}")
    if not lines:
        return f"{header} {{ }}\n"
    return f"{header} {{\n" + "\n".join(lines) + "\n}\n"


def format_program(program: TransducerProgram) -> str:
    s = program.schema

    def decls(d: Mapping[str, int]) -> str:
        return ", ".join(f"{k}/{v}" for k, v in d.items())

    parts = [f"schema {{ in: {decls(s.inputs)}; msg: {decls(s.messages)}; "
             f"mem: {decls(s.memory)}; out: {s.out_arity} }}\n"]
    for R in s.messages:
        if program.send[R].rules:
            parts.append(_format_block(f"send {R}", program.send[R], R))
    for R in s.memory:
        if program.insert[R].rules:
            parts.append(_format_block(f"insert {R}", program.insert[R], R))
        if program.delete[R].rules:
            parts.append(_format_block(f"delete {R}", program.delete[R], R))
    parts.append(_format_block("output", program.output, OUT))
    return "".join(parts)
