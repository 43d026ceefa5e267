"""Transducer networks: configurations, heartbeat/delivery transitions and runs.

Runs are finite prefixes produced by a scheduler. A run stops early once
:func:`detect_quiescence` proves that no fair continuation can add output.
"""

from __future__ import annotations

import json
import random
import re
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .relcore import DataElement, Fact, Instance, ParseError, parse_fact, strip_comment
from .transducer import TransducerProgram, initial_state, step

EMPTY = Instance()


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class Network:
    nodes: tuple[DataElement, ...]
    edges: frozenset[frozenset[DataElement]]
    neighbors: dict[DataElement, tuple[DataElement, ...]] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        nodes = tuple(sorted(set(self.nodes), key=_node_key))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", frozenset(frozenset(e) for e in self.edges))
        if not nodes:
            raise ValueError("a network needs at least one node")
        adj: dict[str, set] = {v: set() for v in nodes}
        for e in self.edges:
            if len(e) != 2:
                raise ValueError(f"self-loop or malformed edge {sorted(e)}")
            a, b = sorted(e)
            if a not in adj or b not in adj:
                raise ValueError(f"edge {a}-{b} mentions an unknown node")
            adj[a].add(b)
            adj[b].add(a)
        seen = {nodes[0]}
        todo = [nodes[0]]
        while todo:
            for u in adj[todo.pop()]:
                if u not in seen:
                    seen.add(u)
                    todo.append(u)
        if len(seen) != len(nodes):
            raise ValueError("network is not connected")
        object.__setattr__(self, "neighbors", {v: tuple(sorted(adj[v], key=_node_key)) for v in nodes})

    @classmethod
    def from_edges(cls, nodes: Iterable[DataElement], edges: Iterable[tuple[DataElement, DataElement]]) -> "Network":
        return cls(tuple(nodes), frozenset(frozenset(e) for e in edges))

    def __len__(self) -> int:
        return len(self.nodes)

    def __str__(self) -> str:
        return format_network(self).replace("\n", "; ").strip("; ")


def _node_key(v: str):
    return (0, int(v), v) if v.isdigit() else (1, 0, v)


def single(name: str = "1") -> Network:
    return Network((name,), frozenset())


def path(n: int) -> Network:
    nodes = [str(i) for i in range(1, n + 1)]
    return Network.from_edges(nodes, zip(nodes, nodes[1:]))


def ring(n: int) -> Network:
    if n < 3:
        return path(n)
    nodes = [str(i) for i in range(1, n + 1)]
    return Network.from_edges(nodes, list(zip(nodes, nodes[1:])) + [(nodes[-1], nodes[0])])


def complete(n: int) -> Network:
    nodes = [str(i) for i in range(1, n + 1)]
    return Network.from_edges(nodes, [(a, b) for i, a in enumerate(nodes) for b in nodes[i + 1:]])


def connected_graphs(n: int) -> list[Network]:
    """All connected graphs on nodes 1..n, one per isomorphism class."""
    import itertools

    import networkx as nx

    nodes = [str(i) for i in range(1, n + 1)]
    pairs = list(itertools.combinations(nodes, 2))
    found: list[nx.Graph] = []
    out = []
    for k in range(len(pairs) + 1):
        for es in itertools.combinations(pairs, k):
            g = nx.Graph()
            g.add_nodes_from(nodes)
            g.add_edges_from(es)
            if not nx.is_connected(g):
                continue
            if any(nx.is_isomorphic(g, h) for h in found):
                continue
            found.append(g)
            out.append(Network.from_edges(nodes, es))
    return out


def parse_network(text: str) -> Network:
    nodes, edges = [], []
    for n, raw in enumerate(text.splitlines(), 1):
        parts = strip_comment(raw).split()
        if not parts:
            continue
        if parts[0] == "node" and len(parts) == 2:
            nodes.append(parts[1])
        elif parts[0] == "edge" and len(parts) == 3:
            edges.append((parts[1], parts[2]))
        else:
            raise ParseError(f"expected 'node a' or 'edge a b', got {raw.strip()!r}", n)
    try:
        return Network.from_edges(nodes, edges)
    except ValueError as e:
        raise ParseError(str(e)) from None


def format_network(net: Network) -> str:
    lines = [f"node {v}" for v in net.nodes]
    lines += [f"edge {a} {b}" for a, b in sorted((tuple(sorted(e, key=_node_key)) for e in net.edges),
                                                  key=lambda e: (_node_key(e[0]), _node_key(e[1])))]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# configurations and transitions

BufEntry = tuple[Fact, int]  # (fact, step at which it was enqueued)


@dataclass(frozen=True)
class Configuration:
    """Per-node local state and message buffer.

    Buffers are kept in arrival order; as a multiset only the fact counts
    matter, the order serves the fifo scheduler and delivery-age tracking.
    """

    state: Mapping[DataElement, Instance]
    buf: Mapping[DataElement, tuple[BufEntry, ...]]

    def queue(self, node: DataElement) -> tuple[Fact, ...]:
        return tuple(f for f, _ in self.buf[node])

    def multiset(self, node: DataElement) -> Counter:
        return Counter(f for f, _ in self.buf[node])

    @property
    def buffers_empty(self) -> bool:
        return not any(self.buf.values())


def initial_configuration(program: TransducerProgram, network: Network,
                          partition: Mapping[DataElement, Instance]) -> Configuration:
    missing = set(partition) - set(network.nodes)
    if missing:
        raise PreconditionError(f"partition mentions unknown nodes {sorted(missing)}")
    state = {v: initial_state(program, v, network.nodes, partition.get(v, EMPTY)) for v in network.nodes}
    return Configuration(state, {v: () for v in network.nodes})


@dataclass(frozen=True)
class NetTransition:
    step: int
    kind: str  # "hb" | "dlv"
    node: DataElement
    received: Fact | None
    output: frozenset[tuple]
    sent: Instance
    after: Instance = field(compare=False, repr=False)

    def to_json(self) -> dict:
        return {"step": self.step, "kind": self.kind, "node": self.node,
                "recv": str(self.received) if self.received is not None else None,
                "out": [list(t) for t in sorted(self.output)],
                "sent": [str(f) for f in self.sent]}

    def to_text(self) -> str:
        recv = str(self.received) if self.received is not None else "-"
        out = "{" + ", ".join("(" + ",".join(t) + ")" for t in sorted(self.output)) + "}"
        sent = "{" + ", ".join(str(f) for f in self.sent) + "}"
        return f"{self.step} {self.kind} {self.node} recv={recv} out={out} sent={sent}"


def _transition(program: TransducerProgram, network: Network, config: Configuration, node: DataElement,
                fact: Fact | None, index: int) -> tuple[Configuration, NetTransition]:
    if node not in config.state:
        raise PreconditionError(f"unknown node {node}")
    buf = dict(config.buf)
    if fact is not None:
        q = config.buf[node]
        for i, (f, _) in enumerate(q):
            if f == fact:
                buf[node] = q[:i] + q[i + 1:]
                break
        else:
            raise PreconditionError(f"{fact} is not in the buffer of node {node}")
        received = Instance((fact,))
    else:
        received = EMPTY
    tr = step(program, config.state[node], received)
    if tr.sent:
        entries = tuple((f, index) for f in tr.sent)
        for u in network.neighbors[node]:
            buf[u] = buf[u] + entries
    if tr.after is config.state[node]:
        state = config.state
    else:
        state = dict(config.state)
        state[node] = tr.after
    net_tr = NetTransition(index, "hb" if fact is None else "dlv", node, fact, tr.output, tr.sent, tr.after)
    return Configuration(state, buf), net_tr


def apply_heartbeat(program: TransducerProgram, network: Network, config: Configuration, node: DataElement,
                    index: int = 0) -> tuple[Configuration, NetTransition]:
    return _transition(program, network, config, node, None, index)


def apply_delivery(program: TransducerProgram, network: Network, config: Configuration, node: DataElement,
                   fact: Fact, index: int = 0) -> tuple[Configuration, NetTransition]:
    return _transition(program, network, config, node, fact, index)


def heartbeat_closure(program: TransducerProgram, state: Instance, limit: int = 100_000):
    """Iterate heartbeats from ``state`` until a local state repeats.

    Yields each local transition; the iteration is finite because states
    range over a fixed active domain.
    """
    seen = {state}
    cur = state
    for _ in range(limit):
        tr = step(program, cur, EMPTY)
        yield tr
        cur = tr.after
        if cur in seen:
            return
        seen.add(cur)
    raise RuntimeError("heartbeat iteration did not cycle within the limit")


def detect_quiescence(program: TransducerProgram, config: Configuration,
                      cumulative: Iterable[tuple] = frozenset()) -> bool:
    """True iff buffers are empty and heartbeats alone can neither send nor output anything new."""
    if not config.buffers_empty:
        return False
    cumulative = frozenset(cumulative)
    for v in sorted(config.state, key=_node_key):
        for tr in heartbeat_closure(program, config.state[v]):
            if tr.sent or not tr.output <= cumulative:
                return False
    return True


# ---------------------------------------------------------------------------
# schedulers

Directive = tuple  # ("hb", node) | ("dlv", node, fact)


class Scheduler:
    kind = "abstract"

    def session(self, network: Network) -> "Session":
        raise NotImplementedError


class Session:
    def next(self, config: Configuration, index: int) -> Directive | None:
        raise NotImplementedError


@dataclass(frozen=True)
class RandomFair(Scheduler):
    """Seeded random interleaving with enforced fairness.

    Every node heartbeats at least once in each aligned window of
    ``heartbeat_period * |nodes|`` steps. A buffered occurrence older than
    ``max_delay`` steps is delivered before any random choice is made, oldest
    first.
    """

    seed: int = 0
    heartbeat_period: int = 2
    max_delay: int | None = None
    kind = "random-fair"

    def session(self, network: Network) -> Session:
        return _RandomFairSession(self, network)


class _RandomFairSession(Session):
    def __init__(self, spec: RandomFair, network: Network):
        if spec.heartbeat_period < 1:
            raise ValueError("heartbeat_period must be at least 1")
        self.rng = random.Random(spec.seed)
        self.nodes = network.nodes
        self.window = spec.heartbeat_period * len(network.nodes)
        self.max_delay = spec.max_delay if spec.max_delay is not None else 8 * len(network.nodes)
        self.pending: set = set(self.nodes)
        self.window_start = 0

    def next(self, config: Configuration, index: int) -> Directive:
        if index >= self.window_start + self.window:
            self.window_start = index - (index % self.window)
            self.pending = set(self.nodes)
        remaining = self.window_start + self.window - index
        if len(self.pending) >= remaining:
            v = self.rng.choice(sorted(self.pending, key=_node_key))
            self.pending.discard(v)
            return ("hb", v)
        oldest = None
        for v in self.nodes:
            q = config.buf[v]
            if q and index - q[0][1] > self.max_delay and (oldest is None or q[0][1] < oldest[0]):
                oldest = (q[0][1], v, q[0][0])
        if oldest is not None:
            return ("dlv", oldest[1], oldest[2])
        enabled = [("hb", v) for v in self.nodes] + [("dlv", v) for v in self.nodes if config.buf[v]]
        choice = self.rng.choice(enabled)
        if choice[0] == "hb":
            self.pending.discard(choice[1])
            return choice
        v = choice[1]
        q = config.buf[v]
        return ("dlv", v, q[self.rng.randrange(len(q))][0])


@dataclass(frozen=True)
class RoundRobinFifo(Scheduler):
    """Rounds: every node heartbeats, then every node delivers its oldest fact
    (or heartbeats a second time if its buffer was empty when the phase began)."""

    kind = "round-robin-fifo"

    def session(self, network: Network) -> Session:
        return _RoundRobinSession(network)


class _RoundRobinSession(Session):
    def __init__(self, network: Network):
        self.nodes = network.nodes
        self.slots: deque = deque()
        self.round = -1
        self.phase = 1

    def next(self, config: Configuration, index: int) -> Directive:
        if not self.slots:
            if self.phase == 1:
                self.round += 1
                self.slots.extend(("hb", v) for v in self.nodes)
                self.phase = 2
            else:
                self.slots.extend(("first", v) if config.buf[v] else ("hb", v) for v in self.nodes)
                self.phase = 1
        kind, v = self.slots.popleft()
        if kind == "first":
            return ("dlv", v, config.buf[v][0][0])
        return ("hb", v)


@dataclass(frozen=True)
class Scripted(Scheduler):
    directives: tuple[Directive, ...]
    then: Scheduler | None = None
    kind = "scripted"

    def session(self, network: Network) -> Session:
        return _ScriptedSession(self, network)


class _ScriptedSession(Session):
    def __init__(self, spec: Scripted, network: Network):
        self.it = iter(spec.directives)
        self.then = spec.then.session(network) if spec.then is not None else None
        self.done = False

    def next(self, config: Configuration, index: int) -> Directive | None:
        if not self.done:
            d = next(self.it, None)
            if d is not None:
                return d
            self.done = True
        return self.then.next(config, index) if self.then is not None else None


def parse_directives(text: str) -> tuple[Directive, ...]:
    out = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = strip_comment(raw).strip()
        if not line:
            continue
        m = re.match(r"^(hb|dlv)\s+(\S+)(?:\s+(.+))?$", line)
        if not m or (m.group(1) == "hb") != (m.group(3) is None):
            raise ParseError(f"expected 'hb <node>' or 'dlv <node> <fact>', got {line!r}", n)
        if m.group(1) == "hb":
            out.append(("hb", m.group(2)))
        else:
            out.append(("dlv", m.group(2), parse_fact(m.group(3), n)))
    return tuple(out)


def format_directives(directives: Iterable[Directive]) -> str:
    return "".join(f"hb {d[1]}\n" if d[0] == "hb" else f"dlv {d[1]} {d[2]}\n" for d in directives)


# ---------------------------------------------------------------------------
# runs

@dataclass
class RunTrace:
    initial: Configuration
    steps: list[NetTransition]
    final: Configuration
    cumulative_output: frozenset[tuple]
    quiescent: bool
    quiescence_index: int | None

    def outputs_upto(self, n: int) -> frozenset[tuple]:
        return frozenset(t for tr in self.steps[: n + 1] for t in tr.output)

    def directives(self) -> list[Directive]:
        return [("hb", tr.node) if tr.kind == "hb" else ("dlv", tr.node, tr.received) for tr in self.steps]

    def trailer(self) -> dict:
        return {"cumulative_output": [list(t) for t in sorted(self.cumulative_output)],
                "quiescent": self.quiescent, "quiescence_index": self.quiescence_index,
                "steps": len(self.steps)}

    def lines(self, fmt: str = "jsonl") -> Iterator[str]:
        if fmt == "jsonl":
            for tr in self.steps:
                yield json.dumps(tr.to_json(), separators=(",", ":"))
            yield json.dumps(self.trailer(), separators=(",", ":"))
        elif fmt == "text":
            for tr in self.steps:
                yield tr.to_text()
            t = self.trailer()
            out = "{" + ", ".join("(" + ",".join(x) + ")" for x in t["cumulative_output"]) + "}"
            yield f"output={out} quiescent={t['quiescent']} quiescence_index={t['quiescence_index']} steps={t['steps']}"
        else:
            raise ValueError(f"unknown trace format {fmt}")


def run(program: TransducerProgram, network: Network, initial: Configuration, scheduler: Scheduler,
        max_steps: int, stop_at_quiescence: bool = True) -> RunTrace:
    if max_steps < 0:
        raise ValueError("max_steps must be non-negative")
    session = scheduler.session(network)
    config = initial
    steps: list[NetTransition] = []
    cum: set = set()
    last_new = None
    quiescent = False
    stopped = False
    for n in range(max_steps):
        if stop_at_quiescence and config.buffers_empty and detect_quiescence(program, config, cum):
            quiescent = True
            break
        d = session.next(config, n)
        if d is None:
            stopped = True
            break
        if d[0] == "hb":
            config, tr = apply_heartbeat(program, network, config, d[1], n)
        elif d[0] == "dlv":
            config, tr = apply_delivery(program, network, config, d[1], d[2], n)
        else:
            raise PreconditionError(f"unknown directive {d!r}")
        steps.append(tr)
        if not tr.output <= cum:
            cum |= tr.output
            last_new = n
    else:
        stopped = True
    if stopped and max_steps > 0 and stop_at_quiescence and config.buffers_empty:
        quiescent = detect_quiescence(program, config, cum)
    q_idx = (last_new if last_new is not None else 0) if quiescent else None
    return RunTrace(initial, steps, config, frozenset(cum), quiescent, q_idx)


def outputs_by_node(trace: RunTrace) -> dict[DataElement, frozenset[tuple]]:
    acc: dict[str, set] = {v: set() for v in trace.initial.state}
    for tr in trace.steps:
        acc[tr.node] |= tr.output
    return {v: frozenset(s) for v, s in acc.items()}


def replay_states(trace: RunTrace) -> Iterator[tuple[NetTransition, dict[DataElement, Instance]]]:
    """Yield each transition with the per-node local states right after it."""
    state = dict(trace.initial.state)
    for tr in trace.steps:
        state[tr.node] = tr.after
        yield tr, state
