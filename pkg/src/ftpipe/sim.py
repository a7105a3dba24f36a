"""Cycle-accurate two-valued simulation and dynamic feature extraction.

The engine packs many runs into Python integers, one bit per run, so a fault
campaign simulates all injections of a latch in a single pass.  Per cycle:
latch outputs present the stored state (the declared init at t=0, X loading
as 0), AND gates evaluate combinationally, outputs are sampled, and only then
do latches capture their next-state values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aig import Aig, ParseError, lit_var
from .graph import STATIC_COLUMNS, build_graph, static_features

DYNAMIC_COLUMNS = ("toggle_rate", "signal_prob", "coverage")


class InputWidthMismatch(Exception):
    pass


class MissingNodeValues(Exception):
    pass


class ShapeMismatch(Exception):
    pass


@dataclass(frozen=True)
class Stimulus:
    input_count: int
    cycles: int
    vectors: list[list[int]]  # cycles rows of input_count bits


@dataclass
class Trace:
    cycles: int
    outputs: list[list[int]]
    node_values: list[list[int]] | None = None  # graph node order, when captured


def parse_stimulus(text: str) -> Stimulus:
    """Read the stimulus format: `inputs <I> cycles <T>` then T rows of bits."""
    lines = [ln for ln in text.splitlines()]
    if not lines:
        raise ParseError(1, "empty stimulus")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "inputs" or head[2] != "cycles":
        raise ParseError(1, "header must be 'inputs <I> cycles <T>'")
    try:
        n_inputs, cycles = int(head[1]), int(head[3])
    except ValueError:
        raise ParseError(1, "counts must be integers") from None
    if cycles < 1:
        raise ParseError(1, "cycle count must be at least 1")
    vectors: list[list[int]] = []
    for t in range(cycles):
        if t + 1 >= len(lines):
            raise ParseError(len(lines) + 1, f"expected {cycles} vector rows")
        row = lines[t + 1].strip()
        if len(row) != n_inputs or set(row) - {"0", "1"}:
            raise ParseError(t + 2, f"row must be {n_inputs} characters of 0/1")
        vectors.append([int(ch) for ch in row])
    return Stimulus(n_inputs, cycles, vectors)


def format_stimulus(stim: Stimulus) -> str:
    rows = ["".join(str(b) for b in row) for row in stim.vectors]
    return "\n".join([f"inputs {stim.input_count} cycles {stim.cycles}"] + rows) + "\n"


def random_stimulus(input_count: int, cycles: int, seed: int = 0) -> Stimulus:
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(cycles, input_count))
    return Stimulus(input_count, cycles, [list(map(int, row)) for row in bits])


def format_trace(trace: Trace) -> str:
    """One line of PO bits per cycle, for external diffing."""
    return "\n".join("".join(str(b) for b in row) for row in trace.outputs) + "\n"


class Engine:
    """Reusable bit-parallel evaluator for one circuit."""

    def __init__(self, aig: Aig):
        self.aig = aig
        gate_of = {g.lhs: g for g in aig.ands}
        # topological order over AND-to-AND dependencies
        indeg = {
            v: sum(1 for lit in (g.rhs0, g.rhs1) if lit_var(lit) in gate_of)
            for v, g in gate_of.items()
        }
        users: dict[int, list[int]] = {}
        for v, g in gate_of.items():
            for lit in (g.rhs0, g.rhs1):
                src = lit_var(lit)
                if src in gate_of:
                    users.setdefault(src, []).append(v)
        ready = [v for v, d in indeg.items() if d == 0]
        ordered: list[int] = []
        while ready:
            v = ready.pop()
            ordered.append(v)
            for u in users.get(v, ()):
                indeg[u] -= 1
                if indeg[u] == 0:
                    ready.append(u)
        assert len(ordered) == len(gate_of)
        # precompiled gate tuples: (lhs, rhs0_var, rhs0_inv, rhs1_var, rhs1_inv)
        self.program = [
            (v, gate_of[v].rhs0 >> 1, gate_of[v].rhs0 & 1, gate_of[v].rhs1 >> 1, gate_of[v].rhs1 & 1)
            for v in ordered
        ]
        self.latch_vars = [l.state for l in aig.latches]
        self.latch_next = [l.next for l in aig.latches]
        self.init = [l.init if l.init is not None else 0 for l in aig.latches]

    def run(
        self,
        vectors: Sequence[Sequence[int]],
        width: int = 1,
        flips: dict[int, dict[int, int]] | None = None,
        capture: bool = False,
    ) -> tuple[list[list[int]], list[list[int]] | None]:
        """Simulate all cycles; every run in the pack sees the same inputs.

        flips maps cycle -> {latch position -> run bitmask}; the masked runs
        see that latch's stored value complemented at the start of the cycle.

        Returns per-cycle output words and, if capture is set, per-cycle node
        value words in graph node order (const, PIs, latches, ANDs, POs).
        """
        aig = self.aig
        mask = (1 << width) - 1
        vals = [0] * (aig.max_var + 1)
        state = [init * mask for init in self.init]
        out_rows: list[list[int]] = []
        node_rows: list[list[int]] | None = [] if capture else None
        inputs = aig.inputs
        outputs = aig.outputs
        program = self.program

        for t, row in enumerate(vectors):
            if flips and t in flips:
                for pos, flip_mask in flips[t].items():
                    state[pos] ^= flip_mask
            for var, bit in zip(inputs, row):
                vals[var] = bit * mask
            for pos, var in enumerate(self.latch_vars):
                vals[var] = state[pos]
            for lhs, v0, i0, v1, i1 in program:
                a = vals[v0] ^ (i0 and mask)
                b = vals[v1] ^ (i1 and mask)
                vals[lhs] = a & b
            out_rows.append([vals[o >> 1] ^ ((o & 1) and mask) for o in outputs])
            if capture:
                node_rows.append(
                    [0]
                    + [vals[v] for v in inputs]
                    + list(state)
                    + [vals[g.lhs] for g in aig.ands]
                    + out_rows[-1]
                )
            state = [vals[n >> 1] ^ ((n & 1) and mask) for n in self.latch_next]
        return out_rows, node_rows


def simulate(aig: Aig, stim: Stimulus, capture_nodes: bool = False) -> Trace:
    """Fault-free simulation; deterministic in (aig, stim)."""
    if stim.input_count != aig.num_inputs:
        raise InputWidthMismatch(
            f"stimulus drives {stim.input_count} inputs, circuit has {aig.num_inputs}"
        )
    engine = Engine(aig)
    out_rows, node_rows = engine.run(stim.vectors, capture=capture_nodes)
    return Trace(stim.cycles, out_rows, node_rows)


def dynamic_features(trace: Trace) -> np.ndarray:
    """Per-node (toggle_rate, signal_prob, coverage), shape (N, 3).

    toggle_rate = transitions / (T-1); signal_prob = cycles at 1 / T;
    coverage = 1 when the node saw both values, else 0.5.
    """
    if trace.node_values is None:
        raise MissingNodeValues("trace captured without node values")
    if trace.cycles < 2:
        raise ValueError("toggle rate needs at least 2 cycles")
    arr = np.asarray(trace.node_values, dtype=np.int8)
    toggles = (arr[1:] != arr[:-1]).sum(axis=0) / (trace.cycles - 1)
    prob = arr.mean(axis=0)
    both = (arr.max(axis=0) == 1) & (arr.min(axis=0) == 0)
    coverage = np.where(both, 1.0, 0.5)
    return np.column_stack([toggles, prob, coverage]).astype(np.float64)


@dataclass
class FeatureMatrix:
    values: np.ndarray  # (N, F)
    layout: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def f(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.layout.index(name)]


def assemble_features(
    static_block: np.ndarray,
    dynamic_block: np.ndarray,
    static_layout: tuple[str, ...] = STATIC_COLUMNS,
    dynamic_layout: tuple[str, ...] = DYNAMIC_COLUMNS,
) -> FeatureMatrix:
    """Column-wise concatenation of the static and dynamic blocks."""
    if static_block.shape[0] != dynamic_block.shape[0]:
        raise ShapeMismatch(
            f"static block has {static_block.shape[0]} rows, dynamic {dynamic_block.shape[0]}"
        )
    if static_block.shape[1] != len(static_layout) or dynamic_block.shape[1] != len(dynamic_layout):
        raise ShapeMismatch("layout length does not match block width")
    values = np.hstack([static_block, dynamic_block]).astype(np.float64)
    if not np.isfinite(values).all():
        raise ShapeMismatch("feature matrix contains non-finite values")
    return FeatureMatrix(values, tuple(static_layout) + tuple(dynamic_layout))


def extract_features(aig: Aig, stim: Stimulus) -> FeatureMatrix:
    """Full pipeline: graph, static block, simulation, dynamic block."""
    graph = build_graph(aig)
    trace = simulate(aig, stim, capture_nodes=True)
    return assemble_features(static_features(graph), dynamic_features(trace))
