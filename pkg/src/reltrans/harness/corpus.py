"""Built-in transducer programs with independent oracles for the queries they compute."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Iterable, Sequence

from ..relcore import POSITIVE, Atom, Instance, QueryProgram, Rule, eval_query
from ..transducer import TransducerProgram, format_program, parse_program

Oracle = Callable[[Instance], frozenset]


@dataclass(frozen=True)
class ProgramCorpusEntry:
    name: str
    program: TransducerProgram
    intended_query: Oracle | None
    anchor: str
    topology_independent: bool = True
    monotone: bool = True


# -- oracles ---------------------------------------------------------------

def reachability(edges: Iterable[tuple]) -> frozenset[tuple]:
    """Transitive closure by repeated squaring of a boolean matrix."""
    edges = set(edges)
    elems = sorted({a for e in edges for a in e})
    pos = {a: i for i, a in enumerate(elems)}
    n = len(elems)
    m = [[False] * n for _ in range(n)]
    for a, b in edges:
        m[pos[a]][pos[b]] = True
    while True:
        sq = [[m[i][j] or any(m[i][k] and m[k][j] for k in range(n)) for j in range(n)] for i in range(n)]
        if sq == m:
            break
        m = sq
    return frozenset((elems[i], elems[j]) for i in range(n) for j in range(n) if m[i][j])


def tc_oracle(instance: Instance) -> frozenset:
    return reachability(instance.relation("S"))


def eq_select_oracle(instance: Instance) -> frozenset:
    return frozenset(t for t in instance.relation("S") if t[0] == t[1])


def identity_oracle(instance: Instance) -> frozenset:
    return instance.relation("S")


def emptiness_oracle(instance: Instance) -> frozenset:
    return frozenset({()}) if not instance.relation("S") else frozenset()


def a_or_b_oracle(instance: Instance) -> frozenset:
    return frozenset({()}) if instance.relation("A") or instance.relation("B") else frozenset()


# -- datalog runner --------------------------------------------------------

def datalog_runner_source(rules: Sequence[Rule], answer: str, arity: int) -> str:
    """Transducer text that floods the EDB and applies one T_P step per transition.

    Every IDB predicate becomes a memory relation; EDB relations are read
    through memory copies ``Got<R>`` filled from local input and messages
    ``Msg<R>``. The result is oblivious and inflationary.
    """
    q = QueryProgram(tuple(rules), answer, arity, POSITIVE if any(
        a.pred in {r.head.pred for r in rules} for r in rules for a in r.pos) else None)
    idb = sorted(q.idb)
    arities: dict[str, int] = {}
    for r in rules:
        for a in (r.head, *r.pos):
            arities[a.pred] = a.arity
    edb = sorted(q.edb)
    if answer not in idb:
        raise ValueError("answer must be an intensional predicate")

    def vars_(k: int) -> str:
        return ",".join(f"x{i}" for i in range(k))

    decl = lambda names, prefix="": ", ".join(f"{prefix}{p}/{arities[p]}" for p in names)  # noqa: E731
    mem = ", ".join(x for x in ["Sent/0", decl(edb, "Got"), decl(idb)] if x)
    out = [f"schema {{ in: {decl(edb)}; msg: {decl(edb, 'Msg')}; mem: {mem}; out: {arity} }}"]
    for p in edb:
        v = vars_(arities[p])
        out.append(f"send Msg{p} {{\n  Msg{p}({v}) :- {p}({v}), not Sent().\n"
                   f"  Msg{p}({v}) :- Msg{p}({v}), not Got{p}({v}).\n}}")
    out.append("insert Sent {\n" + "".join(f"  Sent() :- {p}({vars_(arities[p])}).\n" for p in edb) + "}")
    for p in edb:
        v = vars_(arities[p])
        out.append(f"insert Got{p} {{\n  Got{p}({v}) :- {p}({v}).\n  Got{p}({v}) :- Msg{p}({v}).\n}}")
    for p in idb:
        body_rules = []
        for r in rules:
            if r.head.pred != p:
                continue
            pos = [Atom(("Got" + a.pred) if a.pred in edb else a.pred, a.terms) for a in r.pos]
            body_rules.append(f"  {Rule(r.head, tuple(pos))}")
        out.append(f"insert {p} {{\n" + "\n".join(body_rules) + "\n}")
    v = vars_(arity)
    out.append(f"output {{\n  Out({v}) :- {answer}({v}).\n}}")
    return "\n".join(out) + "\n"


def datalog_runner(rules: Sequence[Rule], answer: str, arity: int) -> TransducerProgram:
    return parse_program(datalog_runner_source(rules, answer, arity), name="datalog_runner")


def datalog_oracle(rules: Sequence[Rule], answer: str, arity: int) -> Oracle:
    q = QueryProgram(tuple(rules), answer, arity)

    def oracle(instance: Instance) -> frozenset:
        return frozenset(f.args for f in eval_query(q, instance))
    return oracle


DEFAULT_DATALOG = (
    Rule(Atom("Path", ("x", "y")), (Atom("E", ("x", "y")),)),
    Rule(Atom("Path", ("x", "z")), (Atom("Path", ("x", "y")), Atom("E", ("y", "z")))),
)


def default_datalog_oracle(instance: Instance) -> frozenset:
    return reachability(instance.relation("E"))


# -- registry --------------------------------------------------------------

_ENTRIES = (
    ("eq_select", eq_select_oracle, "equality selection on S, no communication", True, True),
    ("tc_flood", tc_oracle, "transitive closure by naive flooding", True, True),
    ("first_element", None, "outputs the first element received (inconsistent)", False, False),
    ("fwd_identity", identity_oracle, "outputs received elements only (identity on 2+ nodes, "
                                       "empty on one node)", False, True),
    ("emptiness", emptiness_oracle, "emptiness of S via Id/All bookkeeping", True, False),
    ("a_or_b_nonempty", a_or_b_oracle, "A or B nonempty; needs a split partition to avoid "
                                       "communication", True, True),
    ("identity_ping", identity_oracle, "identity on S using All only; waits for a ping", True, True),
    ("flood_acked", identity_oracle, "acknowledged multicast with Done messages and a Ready flag",
     True, True),
    ("flood_plain", identity_oracle, "oblivious flooding of S; outputs the collected copy", True, True),
    ("datalog_runner", default_datalog_oracle, "floods the EDB and applies the T_P operator of a "
                                               "positive Datalog program", True, True),
)


def program_source(name: str) -> str:
    return resources.files("reltrans.programs").joinpath(f"{name}.rtx").read_text()


@lru_cache(maxsize=None)
def entry(name: str) -> ProgramCorpusEntry:
    for n, oracle, anchor, ti, mono in _ENTRIES:
        if n == name:
            return ProgramCorpusEntry(n, parse_program(program_source(n), name=n), oracle, anchor, ti, mono)
    raise KeyError(f"no corpus entry {name!r}")


def names() -> list[str]:
    return [e[0] for e in _ENTRIES]


def corpus() -> list[ProgramCorpusEntry]:
    return [entry(n) for n in names()]


def listing() -> str:
    lines = []
    for e in corpus():
        f = e.program.flags
        tags = ",".join(k for k in ("oblivious", "inflationary") if f[k])
        lines.append(f"{e.name:16} [{tags or '-'}] {e.anchor}")
    return "\n".join(lines)


__all__ = ["ProgramCorpusEntry", "corpus", "entry", "names", "listing", "reachability", "datalog_runner",
           "datalog_oracle", "program_source", "format_program"]
