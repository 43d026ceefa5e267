"""Simulator and checking harness for networks of relational transducers."""

from .relcore import Fact, Instance, QueryProgram, adom, apply_permutation, eval_query, fact
from .transducer import TransducerProgram, format_program, memory_update, parse_program, step

__all__ = [
    "Fact", "Instance", "QueryProgram", "TransducerProgram", "adom", "apply_permutation",
    "eval_query", "fact", "format_program", "memory_update", "parse_program", "step",
]
