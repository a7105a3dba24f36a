"""Selective soft-error hardening for sequential circuits.

The pipeline: parse an AIGER netlist, simulate workloads, measure per-latch
vulnerability with fault injection, train a graph classifier to predict it,
plan hardening strategies for the vulnerable registers, rewrite the circuit
(structural transforms or a chat-model backend with retrieval), and verify
the result end to end.
"""

__version__ = "0.1.0"

from .aig import (
    Aig,
    AigError,
    AndGate,
    CombinationalCycle,
    DanglingLiteral,
    Latch,
    MultiDriver,
    ParseError,
    parse_aiger,
    write_aiger,
)

__all__ = [
    "Aig",
    "AigError",
    "AndGate",
    "CombinationalCycle",
    "DanglingLiteral",
    "Latch",
    "MultiDriver",
    "ParseError",
    "parse_aiger",
    "write_aiger",
    "__version__",
]
