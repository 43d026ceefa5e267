"""Command-line front end: ``reltrans run|check|demo|dedalus|corpus-list``."""

from __future__ import annotations

import argparse
import json
import random
import sys
from importlib import resources
from pathlib import Path

from . import dedalus as ded
from . import netsim
from .harness import checks, corpus, gen
from .harness.partitions import BudgetExceeded, HorizontalPartition, parse_partition, partition_by_mode
from .relcore import DialectError, Instance, ParseError, SafetyError, SchemaError, parse_instance
from .transducer import TransducerProgram, parse_program

EX_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def load_program(ref: str) -> tuple[TransducerProgram, corpus.ProgramCorpusEntry | None]:
    """A program file, or the name of a built-in corpus entry."""
    if not Path(ref).exists() and ref in corpus.names():
        e = corpus.entry(ref)
        return e.program, e
    return parse_program(_read(ref), name=Path(ref).stem), None


def load_network(ref: str) -> netsim.Network:
    """A network file, or ``single``, ``path:N``, ``ring:N``, ``complete:N``."""
    if not Path(ref).exists():
        kind, _, n = ref.partition(":")
        makers = {"path": netsim.path, "ring": netsim.ring, "complete": netsim.complete}
        if kind == "single" and not n:
            return netsim.single()
        if kind in makers and n.isdigit():
            return makers[kind](int(n))
    try:
        return netsim.parse_network(_read(ref))
    except ValueError as e:
        if isinstance(e, ParseError):
            raise
        raise ParseError(str(e)) from None


def load_instance(ref: str | None) -> Instance:
    return parse_instance(_read(ref)) if ref else Instance()


def _partition(args, instance: Instance, network: netsim.Network) -> HorizontalPartition:
    if args.partition:
        p = parse_partition(_read(args.partition))
        if not set(p.assignment) <= set(network.nodes):
            raise UsageError("partition mentions nodes outside the network")
        return p
    return partition_by_mode(instance, network.nodes, args.partition_mode)


def _oracle(program: TransducerProgram, entry, max_steps: int):
    if entry is not None and entry.intended_query is not None:
        return entry.intended_query

    def oracle(inst: Instance) -> frozenset:
        out = checks.distributed_output(program, inst, netsim.single(), 0, max_steps)
        if out is None:
            raise UsageError("reference run on the single-node network did not reach quiescence")
        return out
    return oracle


# ---------------------------------------------------------------------------
# commands

def cmd_run(args) -> int:
    program, _ = load_program(args.program)
    network = load_network(args.network)
    instance = load_instance(args.instance)
    part = _partition(args, instance, network)
    if args.script:
        sched = netsim.Scripted(netsim.parse_directives(_read(args.script)),
                                then=None if args.script_only else netsim.RandomFair(seed=args.seed))
    elif args.scheduler == "fifo":
        sched = netsim.RoundRobinFifo()
    else:
        sched = netsim.RandomFair(seed=args.seed, heartbeat_period=args.heartbeat_period)
    cfg = netsim.initial_configuration(program, network, part.assignment)
    trace = netsim.run(program, network, cfg, sched, args.max_steps)
    for line in trace.lines(args.format):
        print(line)
    return 0 if trace.quiescent else 2


def cmd_check(args) -> int:
    program, entry = load_program(args.program)
    instance = load_instance(args.instance)
    exhaustive = True if args.exhaustive else None
    if args.property == "consistency":
        v = checks.check_consistency(program, load_network(args.network), instance, args.budget, args.seed,
                                     args.max_steps, exhaustive=exhaustive, jobs=args.jobs)
    elif args.property == "topology":
        refs = args.networks or ["single", args.network]
        nets = [load_network(r) for r in refs]
        if not any(len(n) == 1 for n in nets):
            nets.insert(0, netsim.single())
        v = checks.check_topology_independence(program, nets, instance, args.budget, args.seed, args.max_steps,
                                               jobs=args.jobs)
    elif args.property == "coordination":
        ti = entry.topology_independent if entry is not None else None
        v = checks.check_coordination_free(program, load_network(args.network), instance,
                                           _oracle(program, entry, args.max_steps), args.budget, exhaustive,
                                           args.seed, topology_independent=ti)
    else:
        if args.superset:
            pairs = [(instance, load_instance(args.superset))]
        else:
            rng = random.Random(args.seed)
            pairs = [(gen.random_subset(rng, instance), instance) for _ in range(args.pairs)]
        net = load_network(args.network) if args.network else None
        v = checks.check_monotone(program, pairs, net, args.seed, args.max_steps)
    print(v.dumps())
    return v.exit_code


_DEMOS = {
    "eq_select": ("path:2", "S(a,a). S(a,b). S(b,b). S(c,a)."),
    "tc_flood": ("ring:4", "S(1,2). S(2,3). S(3,4). S(4,2). S(5,1)."),
    "first_element": ("path:2", "S(a). S(b)."),
    "fwd_identity": ("path:2", "S(a). S(b)."),
    "emptiness": ("ring:4", ""),
    "a_or_b_nonempty": ("path:2", "A(a). B(b)."),
    "identity_ping": ("path:3", "S(a). S(b). S(c)."),
    "flood_acked": ("ring:4", "S(a,b). S(b,c)."),
    "flood_plain": ("ring:4", "S(a,b). S(b,c)."),
    "datalog_runner": ("path:3", "E(1,2). E(2,3). E(3,1). E(3,4)."),
}


def cmd_demo(args) -> int:
    e = corpus.entry(args.name)
    net_ref, text = _DEMOS[args.name]
    network = load_network(net_ref)
    instance = parse_instance(text)
    part = partition_by_mode(instance, network.nodes, args.partition_mode)
    cfg = netsim.initial_configuration(e.program, network, part.assignment)
    trace = netsim.run(e.program, network, cfg, netsim.RandomFair(seed=args.seed), args.max_steps)
    print(f"# {e.name}: {e.anchor}")
    print(f"# network {net_ref}, partition {args.partition_mode}, seed {args.seed}")
    for line in trace.lines(args.format):
        print(line)
    if e.intended_query is None:
        return 0 if trace.quiescent else 2
    expected = e.intended_query(instance)
    match = trace.quiescent and trace.cumulative_output == expected
    print(f"# expected {sorted(expected)}: {'match' if match else 'MISMATCH'}")
    return 0 if match else 1


def cmd_corpus_list(args) -> int:
    print(corpus.listing())
    return 0


def cmd_dedalus(args) -> int:
    if args.dcmd == "run":
        program = ded.parse_dedalus(_read(args.program))
        inp = ded.parse_temporal_instance(_read(args.input)) if args.input else ded.TemporalInstance()
        result = ded.eval_dedalus(program, inp, args.max_time)
        sys.stdout.write(ded.format_temporal_instance(result))
        if args.horizon is not None:
            stable, n = ded.check_eventual_consistency(program, inp, args.horizon)
            print(json.dumps({"stable": stable, "stabilization_time": n}))
        return 0
    text = _read(args.machine) if args.machine else \
        resources.files("reltrans.programs").joinpath("contains_ab.tm").read_text()
    M = ded.parse_machine(text)
    if args.emit:
        sys.stdout.write(ded.tm_program_source(M))
        return 0
    try:
        inp = ded.TemporalInstance.at(ded.word_structure(args.word))
    except ValueError as e:
        raise UsageError(str(e)) from None
    program = ded.build_tm_program(M)
    at = ded.accepted_at(ded.eval_dedalus(program, inp, args.max_time))
    direct, steps = M.run(args.word, args.max_time)
    report = {"word": args.word, "accept_time": at, "accepted": at is not None, "direct": direct,
              "direct_steps": steps}
    if args.horizon is not None:
        stable, n = ded.check_eventual_consistency(program, inp, args.horizon)
        report.update(stable=stable, stabilization_time=n)
    print(json.dumps(report, sort_keys=True))
    return 0 if at is not None else 1


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="reltrans", description="Relational transducer networks: simulate, check, demo.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, network=True):
        sp.add_argument("--program", required=True, help="program file or corpus entry name")
        if network:
            sp.add_argument("--network", default="path:2", help="network file or single|path:N|ring:N|complete:N")
        sp.add_argument("--instance", help="input instance file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--max-steps", type=int, default=10_000)

    r = sub.add_parser("run", help="simulate one run and print its trace")
    common(r)
    r.add_argument("--partition", help="explicit partition file")
    r.add_argument("--partition-mode", default="full", help="full|disjoint|one-node|random:<seed>")
    r.add_argument("--scheduler", choices=["random-fair", "fifo"], default="random-fair")
    r.add_argument("--heartbeat-period", type=int, default=2)
    r.add_argument("--script", help="directive file (hb v / dlv v F(a)) run before the random scheduler")
    r.add_argument("--script-only", action="store_true", help="stop when the script ends")
    r.add_argument("--format", choices=["text", "jsonl"], default="jsonl")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="empirical property checks")
    c.add_argument("property", choices=["consistency", "topology", "coordination", "monotone"])
    common(c)
    c.add_argument("--networks", nargs="+", help="networks for the topology check")
    c.add_argument("--budget", type=int, default=100)
    c.add_argument("--exhaustive", action="store_true", help="enumerate all partitions (fails over budget)")
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--superset", help="monotone: instance J with I ⊆ J")
    c.add_argument("--pairs", type=int, default=20, help="monotone: random subsets of the instance to test")
    c.set_defaults(func=cmd_check)

    d = sub.add_parser("demo", help="run a corpus example end to end")
    d.add_argument("name", choices=corpus.names())
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--max-steps", type=int, default=10_000)
    d.add_argument("--partition-mode", default="disjoint")
    d.add_argument("--format", choices=["text", "jsonl"], default="text")
    d.set_defaults(func=cmd_demo)

    dd = sub.add_parser("dedalus", help="temporal programs and the Turing machine compiler")
    dsub = dd.add_subparsers(dest="dcmd", required=True, parser_class=_Parser)
    dr = dsub.add_parser("run")
    dr.add_argument("--program", required=True)
    dr.add_argument("--input")
    dr.add_argument("--max-time", type=int, default=10)
    dr.add_argument("--horizon", type=int, help="also probe eventual consistency up to this time")
    dt = dsub.add_parser("tm")
    dt.add_argument("--machine", help="machine file (default: the built-in 'contains ab' machine)")
    dt.add_argument("--word", default="ab")
    dt.add_argument("--max-time", type=int, default=50)
    dt.add_argument("--horizon", type=int)
    dt.add_argument("--emit", action="store_true", help="print the generated program instead")
    dd.set_defaults(func=cmd_dedalus)

    cl = sub.add_parser("corpus-list", help="list built-in programs")
    cl.set_defaults(func=cmd_corpus_list)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EX_USAGE
    except (SchemaError, SafetyError, DialectError, UsageError, BudgetExceeded, netsim.PreconditionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EX_USAGE


if __name__ == "__main__":
    sys.exit(main())
