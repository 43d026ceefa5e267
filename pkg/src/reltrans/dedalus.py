"""A small temporal Datalog interpreter with entangled timestamps, and a
compiler from Turing machines to programs in it.

Every atom carries its timestamp as the last argument. A rule is deductive
when the head timestamp equals the body timestamp and inductive when it is
the body timestamp plus one. The timestamp variable may also appear in data
positions, where it stands for the decimal string of the current time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple

from .relcore import (Atom, CompiledRules, DialectError, Fact, Instance, ParseError, Rule, SafetyError,
                      _split_statements, parse_fact, parse_rule, strip_comment)

NOW = "Now"
MARKER = "@t"


class TemporalFact(NamedTuple):
    relation: str
    args: tuple[str, ...]
    time: int

    def __str__(self) -> str:
        return f"{self.relation}({','.join(self.args)})@{self.time}"

    @property
    def untimed(self) -> Fact:
        return Fact(self.relation, self.args)


class TemporalInstance:
    __slots__ = ("facts",)

    def __init__(self, facts: Iterable[TemporalFact] = ()):
        facts = frozenset(facts)
        for f in facts:
            if f.time < 0:
                raise ValueError(f"negative timestamp in {f}")
        self.facts = facts

    def slice(self, n: int) -> Instance:
        return Instance(f.untimed for f in self.facts if f.time == n)

    def flatten(self) -> Instance:
        return Instance(f.untimed for f in self.facts)

    @property
    def max_time(self) -> int:
        return max((f.time for f in self.facts), default=0)

    def __iter__(self) -> Iterator[TemporalFact]:
        return iter(sorted(self.facts, key=lambda f: (f.time, f.relation, f.args)))

    def __len__(self) -> int:
        return len(self.facts)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TemporalInstance) and self.facts == other.facts

    def __hash__(self) -> int:
        return hash(self.facts)

    def __or__(self, other: "TemporalInstance") -> "TemporalInstance":
        return TemporalInstance(self.facts | other.facts)

    def __repr__(self) -> str:
        return "TemporalInstance{" + ", ".join(map(str, self)) + "}"

    @classmethod
    def at(cls, instance: Instance, time: int = 0) -> "TemporalInstance":
        return cls(TemporalFact(f.relation, f.args, time) for f in instance)


def parse_temporal_instance(text: str) -> TemporalInstance:
    """Facts written ``R(a,b)@3.``; a missing ``@n`` means time 0."""
    out = []
    for n, raw in enumerate(text.splitlines(), 1):
        for stmt in strip_comment(raw).split("."):
            stmt = stmt.strip()
            if not stmt:
                continue
            m = re.match(r"^(.*?)(?:@\s*(\d+))?$", stmt)
            f = parse_fact(m.group(1), n)
            out.append(TemporalFact(f.relation, f.args, int(m.group(2) or 0)))
    return TemporalInstance(out)


def format_temporal_instance(inst: TemporalInstance) -> str:
    return "".join(f"{f}.\n" for f in inst)


# ---------------------------------------------------------------------------
# programs

@dataclass(frozen=True)
class TemporalRule:
    rule: Rule          # atoms include the timestamp variable as last term
    inductive: bool

    @property
    def time_var(self) -> str:
        return self.rule.head.terms[-1]

    def untimed(self) -> Rule:
        """Drop timestamps; bind the time variable through ``Now`` when it is used as data."""
        tv = self.time_var

        def strip(a: Atom) -> Atom:
            return Atom(a.pred, a.terms[:-1])

        head = strip(self.rule.head)
        pos = tuple(strip(a) for a in self.rule.pos)
        neg = tuple(strip(a) for a in self.rule.neg)
        if any(tv in a.terms for a in (head, *pos, *neg)):
            pos = pos + (Atom(NOW, (tv,)),)
        return Rule(head, pos, neg)

    def __str__(self) -> str:
        s = str(self.rule)
        if self.inductive:
            h = self.rule.head
            inner = ", ".join(h.terms[:-1] + (f"{h.terms[-1]}+1",))
            s = f"{h.pred}({inner})" + s[len(str(h)):]
        return s


@dataclass(frozen=True)
class DedalusProgram:
    rules: tuple[TemporalRule, ...]
    _compiled: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        for r in self.rules:
            _check_timing(r)
        object.__setattr__(self, "rules", tuple(self.rules))
        self._compile()

    @property
    def deductive_rules(self) -> tuple[TemporalRule, ...]:
        return tuple(r for r in self.rules if not r.inductive)

    @property
    def inductive_rules(self) -> tuple[TemporalRule, ...]:
        return tuple(r for r in self.rules if r.inductive)

    def _compile(self):
        ded = [r.untimed() for r in self.deductive_rules]
        heads = {r.head.pred for r in ded}
        # facts seeded by inductive rules or input are merged in through a copy rule,
        # since intensional relations start empty in each evaluation
        arities = {}
        for r in self.rules:
            for a in (r.rule.head, *r.rule.pos, *r.rule.neg):
                if arities.setdefault(a.pred, a.arity) != a.arity:
                    raise SafetyError(f"predicate {a.pred} used with two arities")
        for p in sorted(heads):
            v = tuple(f"x{i}" for i in range(arities[p] - 1))
            ded.append(Rule(Atom(p, v), (Atom(p + "__seed", v),)))
        try:
            self._compiled["ded"] = CompiledRules(ded)
        except DialectError as e:
            raise DialectError(f"deductive rules are not stratifiable: {e}") from None
        ind = [r.untimed() for r in self.inductive_rules]
        ind = [Rule(Atom(r.head.pred + "__next", r.head.terms), r.pos, r.neg) for r in ind]
        self._compiled["ind"] = CompiledRules(ind)
        self._compiled["heads"] = frozenset(heads)

    def __str__(self) -> str:
        return "".join(f"{r}.\n" for r in self.rules)


def _check_timing(r: TemporalRule) -> None:
    rule = r.rule
    atoms = (rule.head, *rule.pos, *rule.neg)
    for a in atoms:
        if not a.terms:
            raise SafetyError(f"{a.pred} has no timestamp argument")
    tv = rule.head.terms[-1]
    for a in (*rule.pos, *rule.neg):
        if a.terms[-1] != tv:
            raise SafetyError(f"subgoal {a} is not joined on the timestamp {tv}")
    if not rule.pos:
        raise SafetyError("a rule needs at least one positive subgoal")


def parse_dedalus_rule(text: str, line: int | None = None) -> TemporalRule:
    m = re.match(r"^\s*([A-Za-z_][A-Za-z0-9_]*\s*\([^)]*)\+\s*1\s*\)(.*)$", text, re.S)
    inductive = False
    if m:
        text = m.group(1).rstrip() + ")" + m.group(2)
        inductive = True
    if re.search(r"\+\s*\d", text):
        raise ParseError("'+1' is only allowed on the head timestamp", line)
    rule = parse_rule(text, line)
    r = TemporalRule(rule, inductive)
    try:
        _check_timing(r)
    except SafetyError as e:
        raise ParseError(str(e), line) from None
    return r


def parse_dedalus(text: str) -> DedalusProgram:
    return DedalusProgram(tuple(parse_dedalus_rule(stmt, n) for stmt, n in _split_statements(text)))


# ---------------------------------------------------------------------------
# evaluation

def _group(facts: Iterable[Fact]) -> dict[str, set]:
    out: dict[str, set] = {}
    for f in facts:
        out.setdefault(f.relation, set()).add(f.args)
    return out


def eval_slices(program: DedalusProgram, inp: TemporalInstance, max_time: int) -> Iterator[Instance]:
    """Yield the closed slice for each time 0..max_time."""
    ded: CompiledRules = program._compiled["ded"]
    ind: CompiledRules = program._compiled["ind"]
    heads = program._compiled["heads"]
    by_time: dict[int, list[Fact]] = {}
    for f in inp.facts:
        by_time.setdefault(f.time, []).append(f.untimed)
    seeded: dict[str, set] = {}
    for n in range(max_time + 1):
        rels = seeded
        for rel, tuples in _group(by_time.get(n, ())).items():
            rels.setdefault(rel, set()).update(tuples)
        base = {(p + "__seed" if p in heads else p): frozenset(ts) for p, ts in rels.items()}
        now = frozenset({(str(n),)})
        base[NOW] = now
        derived = ded.evaluate(base)
        slice_rels = {p: frozenset(ts) for p, ts in rels.items() if p not in heads}
        slice_rels.update({p: ts for p, ts in derived.items() if ts and not p.endswith("__seed")})
        yield Instance(Fact(p, t) for p, ts in slice_rels.items() for t in ts)
        nxt = ind.evaluate({**slice_rels, NOW: now})
        seeded = {p[: -len("__next")]: set(ts) for p, ts in nxt.items() if ts}


def eval_dedalus(program: DedalusProgram, inp: TemporalInstance, max_time: int) -> TemporalInstance:
    if max_time < 0:
        raise ValueError("max_time must be non-negative")
    out = []
    for n, sl in enumerate(eval_slices(program, inp, max_time)):
        out.extend(TemporalFact(f.relation, f.args, n) for f in sl)
    return TemporalInstance(out)


def normalized_slice(sl: Instance, n: int) -> frozenset:
    """Slice contents with the slice's own timestamp value replaced by a marker."""
    s = str(n)
    return frozenset(Fact(f.relation, tuple(MARKER if a == s else a for a in f.args)) for f in sl)


def check_eventual_consistency(program: DedalusProgram, inp: TemporalInstance,
                               probe_horizon: int = 200) -> tuple[bool, int | None]:
    """Least n such that every normalized slice from n through the horizon is the same.

    Reports ``(False, None)`` when only the last probed slice qualifies, since
    a single slice says nothing about repetition.
    """
    slices = [normalized_slice(sl, n) for n, sl in enumerate(eval_slices(program, inp, probe_horizon))]
    n = len(slices) - 1
    while n > 0 and slices[n - 1] == slices[-1]:
        n -= 1
    if n >= probe_horizon:
        return False, None
    return True, n


# ---------------------------------------------------------------------------
# Turing machines

@dataclass(frozen=True)
class TuringMachine:
    """Deterministic one-tape machine on a right-infinite tape.

    ``delta`` maps ``(state, symbol)`` to ``(state, symbol, 'L' | 'R')``. A
    left move on the first cell stays put. The machine halts when no move is
    defined; it accepts as soon as it enters an accepting state.
    """

    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    tape_alphabet: tuple[str, ...]
    blank: str
    start: str
    accepting: frozenset[str]
    delta: Mapping[tuple[str, str], tuple[str, str, str]]

    def __post_init__(self):
        ident = re.compile(r"^[A-Za-z0-9_]+$")
        for x in (*self.states, *self.tape_alphabet):
            if not ident.match(x):
                raise ValueError(f"{x!r} is not a plain name")
        if self.blank not in self.tape_alphabet or self.blank in self.alphabet:
            raise ValueError("blank must be a tape symbol outside the input alphabet")
        if not set(self.alphabet) <= set(self.tape_alphabet):
            raise ValueError("input alphabet must be part of the tape alphabet")
        for a in self.alphabet:
            if not re.match(r"^[a-z][a-z0-9]*$", a):
                raise ValueError(f"input letter {a!r} must be a lowercase name (it becomes a relation)")
        if self.start not in self.states or not set(self.accepting) <= set(self.states):
            raise ValueError("start and accepting states must be declared")
        for (q, c), (q2, c2, d) in self.delta.items():
            if q not in self.states or q2 not in self.states or c not in self.tape_alphabet \
                    or c2 not in self.tape_alphabet or d not in ("L", "R"):
                raise ValueError(f"bad transition {q} {c} -> {q2} {c2} {d}")

    def run(self, word: str | Iterable[str], max_steps: int = 10_000) -> tuple[bool | None, int]:
        """Direct execution: ``(accepted, steps)``; ``accepted`` is None if still running."""
        tape = list(word) or [self.blank]
        q, pos = self.start, 0
        for n in range(max_steps + 1):
            if q in self.accepting:
                return True, n
            c = tape[pos]
            if (q, c) not in self.delta:
                return False, n
            q, tape[pos], d = self.delta[(q, c)]
            if d == "R":
                pos += 1
                if pos == len(tape):
                    tape.append(self.blank)
            elif pos > 0:
                pos -= 1
        return None, max_steps

    def accepts(self, word: str, max_steps: int = 10_000) -> bool:
        ok, _ = self.run(word, max_steps)
        if ok is None:
            raise RuntimeError("machine did not halt within the step bound")
        return ok


def parse_machine(text: str) -> TuringMachine:
    """Format::

        alphabet: a b
        blank: _
        tape: a b _ X        (optional; default alphabet plus blank)
        start: q0
        accept: qa
        q0 a -> q1 a R
    """
    fields: dict[str, list[str]] = {}
    delta = {}
    states: list[str] = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = strip_comment(raw).strip()
        if not line:
            continue
        m = re.match(r"^(alphabet|blank|tape|start|accept|states)\s*:\s*(.*)$", line)
        if m:
            fields[m.group(1)] = m.group(2).split()
            continue
        m = re.match(r"^(\S+)\s+(\S+)\s*->\s*(\S+)\s+(\S+)\s+([LR])$", line)
        if not m:
            raise ParseError(f"cannot read machine line {line!r}", n)
        q, c, q2, c2, d = m.groups()
        if (q, c) in delta:
            raise ParseError(f"two transitions for ({q}, {c}); the machine must be deterministic", n)
        delta[(q, c)] = (q2, c2, d)
        for s in (q, q2):
            if s not in states:
                states.append(s)
    for key in ("alphabet", "blank", "start"):
        if key not in fields:
            raise ParseError(f"missing '{key}:' line")
    blank = fields["blank"][0]
    alphabet = tuple(fields["alphabet"])
    tape = tuple(fields.get("tape", list(alphabet) + [blank]))
    for s in fields.get("states", []) + fields["start"] + fields.get("accept", []):
        if s not in states:
            states.append(s)
    try:
        return TuringMachine(tuple(states), alphabet, tape, blank, fields["start"][0],
                             frozenset(fields.get("accept", [])), delta)
    except ValueError as e:
        raise ParseError(str(e)) from None


def word_structure(word: str, first: int = 1) -> Instance:
    """The word structure of ``word`` on cells ``first, first+1, ...``."""
    if len(word) < 2:
        raise ValueError("word structures are built for strings of length at least two")
    cells = [str(first + i) for i in range(len(word))]
    facts = [Fact("Tape", (a, b)) for a, b in zip(cells, cells[1:])]
    facts += [Fact("Begin", (cells[0],)), Fact("End", (cells[-1],))]
    facts += [Fact(c, (x,)) for c, x in zip(word, cells)]
    return Instance(facts)


SPURIOUS_CONDITIONS = "abcd"


def tm_program_source(M: TuringMachine, conditions: str = SPURIOUS_CONDITIONS) -> str:
    """Rules deciding the machine's language on word structures.

    ``conditions`` selects which spurious-input detectors are emitted; the
    default is all four.
    """
    L: list[str] = []
    add = L.append
    sig = M.alphabet

    def sim(c):
        return f"Sim_{c}"

    def simx(c):
        return f"SimX_{c}"

    def st(q):
        return f"Q_{q}"

    def stx(q):
        return f"QX_{q}"

    add("% input persistence")
    for p, k in [("Tape", 2), ("Begin", 1), ("End", 1)] + [(a, 1) for a in sig]:
        v = ", ".join(["x", "y"][:k])
        add(f"{p}({v}, T+1) :- {p}({v}, T).")

    add("% word detection")
    for a in sig:
        add(f"Labeled(x, T) :- {a}(x, T).")
    add("Reach(x, T) :- Begin(x, T), Labeled(x, T).")
    add("Reach(y, T) :- Reach(x, T), Tape(x, y, T), Labeled(y, T).")
    add("Word(T) :- Reach(x, T), Tape(x, y, T), Reach(y, T), End(y, T).")

    add("% spurious input")
    add("Dom(x, T) :- Tape(x, y, T).")
    add("Dom(y, T) :- Tape(x, y, T).")
    add("Dom(x, T) :- Begin(x, T).")
    add("Dom(x, T) :- End(x, T).")
    for a in sig:
        add(f"Dom(x, T) :- {a}(x, T).")
    add("Same(x, x, T) :- Dom(x, T).")
    if "a" in conditions:
        add("SpurA(T) :- Word(T), Begin(x, T), Begin(y, T), not Same(x, y, T).")
        add("SpurA(T) :- Word(T), End(x, T), End(y, T), not Same(x, y, T).")
    if "b" in conditions:
        for i, a in enumerate(sig):
            for b in sig[i + 1:]:
                add(f"SpurB(T) :- Word(T), {a}(x, T), {b}(x, T).")
    if "c" in conditions:
        add("OnTape(x, T) :- Tape(x, y, T).")
        add("OnTape(y, T) :- Tape(x, y, T).")
        add("TReach(x, T) :- Begin(x, T).")
        add("TReach(y, T) :- TReach(x, T), Tape(x, y, T).")
        add("SpurC(T) :- Word(T), Tape(x, y, T), Tape(x, z, T), not Same(y, z, T).")
        add("SpurC(T) :- Word(T), Tape(x, z, T), Tape(y, z, T), not Same(x, y, T).")
        add("SpurC(T) :- Word(T), OnTape(x, T), not TReach(x, T).")
        add("SpurC(T) :- Word(T), Tape(x, y, T), Begin(y, T).")
        add("SpurC(T) :- Word(T), End(x, T), Tape(x, y, T).")
    if "d" in conditions:
        add("Cell(x, T) :- Tape(x, y, T).")
        add("Cell(y, T) :- Tape(x, y, T).")
        add("SpurD(T) :- Word(T), Dom(x, T), not Labeled(x, T).")
        add("SpurD(T) :- Word(T), Dom(x, T), not Cell(x, T).")
    for c in conditions:
        add(f"Spur(T) :- Spur{c.upper()}(T).")

    add("% start the simulation once on a clean word")
    add("Go(T) :- Word(T), not Spur(T).")
    add("Started(T+1) :- Go(T).")
    add("Started(T+1) :- Started(T).")
    add("Init(T) :- Go(T), not Started(T).")
    for a in sig:
        add(f"{sim(a)}(x, T+1) :- Init(T), {a}(x, T).")
    add(f"{st(M.start)}(x, T+1) :- Init(T), Begin(x, T).")

    add("% one machine step per timestamp")
    add("ExtNext(x, T) :- TapeExt(x, y, T).")
    add("ExtNextX(x, T) :- TapeExtX(x, y, T).")
    add("TapeExt(x, y, T+1) :- TapeExt(x, y, T).")
    add("TapeExtX(x, y, T+1) :- TapeExtX(x, y, T).")
    for (q, c), (q2, c2, d) in sorted(M.delta.items()):
        if q in M.accepting:
            continue
        here = f"{st(q)}(x, T), {sim(c)}(x, T)"
        herex = f"{stx(q)}(x, T), {simx(c)}(x, T)"
        add(f"Busy(x, T) :- {here}.")
        add(f"BusyX(x, T) :- {herex}.")
        add(f"{sim(c2)}(x, T+1) :- {here}.")
        add(f"{simx(c2)}(x, T+1) :- {herex}.")
        if d == "R":
            add(f"{st(q2)}(y, T+1) :- {here}, Tape(x, y, T).")
            add(f"{stx(q2)}(y, T+1) :- {here}, End(x, T), TapeExt(x, y, T).")
            add(f"TapeExt(x, T, T+1) :- {here}, End(x, T), not ExtNext(x, T).")
            add(f"{stx(q2)}(T, T+1) :- {here}, End(x, T), not ExtNext(x, T).")
            add(f"{simx(M.blank)}(T, T+1) :- {here}, End(x, T), not ExtNext(x, T).")
            add(f"{stx(q2)}(y, T+1) :- {herex}, TapeExtX(x, y, T).")
            add(f"TapeExtX(x, T, T+1) :- {herex}, not ExtNextX(x, T).")
            add(f"{stx(q2)}(T, T+1) :- {herex}, not ExtNextX(x, T).")
            add(f"{simx(M.blank)}(T, T+1) :- {herex}, not ExtNextX(x, T).")
        else:
            add(f"{st(q2)}(w, T+1) :- {here}, Tape(w, x, T).")
            add(f"{st(q2)}(x, T+1) :- {here}, Begin(x, T).")
            add(f"{stx(q2)}(w, T+1) :- {herex}, TapeExtX(w, x, T).")
            add(f"{st(q2)}(w, T+1) :- {herex}, TapeExt(w, x, T).")
    add("% untouched cells keep their symbols; halted heads stay")
    for c in M.tape_alphabet:
        add(f"{sim(c)}(x, T+1) :- {sim(c)}(x, T), not Busy(x, T).")
        add(f"{simx(c)}(x, T+1) :- {simx(c)}(x, T), not BusyX(x, T).")
    for q in M.states:
        add(f"{st(q)}(x, T+1) :- {st(q)}(x, T), not Busy(x, T).")
        add(f"{stx(q)}(x, T+1) :- {stx(q)}(x, T), not BusyX(x, T).")

    add("% acceptance")
    add("Accept(T) :- Spur(T).")
    for q in sorted(M.accepting):
        add(f"Accept(T) :- {st(q)}(x, T).")
        add(f"Accept(T) :- {stx(q)}(x, T).")
    add("Accept(T+1) :- Accept(T).")
    return "\n".join(L) + "\n"


def build_tm_program(M: TuringMachine, conditions: str = SPURIOUS_CONDITIONS) -> DedalusProgram:
    return parse_dedalus(tm_program_source(M, conditions))


def accepted_at(result: TemporalInstance) -> int | None:
    """Earliest timestamp carrying an Accept fact."""
    return min((f.time for f in result.facts if f.relation == "Accept"), default=None)
