"""And-inverter graph core: the AIGER ASCII format and structural validation.

An AIG is stored the way the format stores it: variables are positive
integers, literals are ``2*var`` (plain) or ``2*var + 1`` (inverted), and
literal 0/1 denote constant false/true.  Every variable is driven by exactly
one of: a primary input, a latch, or an AND gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple


def lit_var(lit: int) -> int:
    """Variable index of a literal."""
    return lit >> 1


def lit_inverted(lit: int) -> bool:
    return bool(lit & 1)


def lit_not(lit: int) -> int:
    return lit ^ 1


def var_lit(var: int, inverted: bool = False) -> int:
    return (var << 1) | int(inverted)


class AigError(Exception):
    """Base class for structural circuit errors."""


class ParseError(AigError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class MultiDriver(AigError):
    def __init__(self, var: int):
        self.var = var
        super().__init__(f"variable {var} driven twice")


class CombinationalCycle(AigError):
    def __init__(self, vars: Iterable[int]):
        self.vars = sorted(vars)
        super().__init__(f"combinational cycle through variables {self.vars}")


class DanglingLiteral(AigError):
    def __init__(self, lit: int):
        self.lit = lit
        super().__init__(f"literal {lit} references an undefined variable")


class Latch(NamedTuple):
    state: int  # variable index
    next: int  # literal
    init: int | None  # 0, 1, or None for unknown ("x")


class AndGate(NamedTuple):
    lhs: int  # variable index
    rhs0: int  # literal
    rhs1: int  # literal


@dataclass(frozen=True)
class Aig:
    """A sequential circuit in and-inverter form.

    Treated as immutable after construction; transforms build new instances.
    ``symbols`` maps ``(kind, position)`` to a name, with kind one of
    ``"i"``, ``"l"``, ``"o"`` as in the AIGER symbol table.
    """

    max_var: int
    inputs: list[int] = field(default_factory=list)  # variable indices
    latches: list[Latch] = field(default_factory=list)
    outputs: list[int] = field(default_factory=list)  # literals
    ands: list[AndGate] = field(default_factory=list)
    symbols: dict[tuple[str, int], str] = field(default_factory=dict)
    comments: list[str] = field(default_factory=list)

    @property
    def num_inputs(self) -> int:
        return len(self.inputs)

    @property
    def num_latches(self) -> int:
        return len(self.latches)

    @property
    def num_outputs(self) -> int:
        return len(self.outputs)

    @property
    def num_ands(self) -> int:
        return len(self.ands)

    def input_name(self, pos: int) -> str | None:
        return self.symbols.get(("i", pos))

    def latch_name(self, pos: int) -> str | None:
        return self.symbols.get(("l", pos))

    def output_name(self, pos: int) -> str | None:
        return self.symbols.get(("o", pos))


def _parse_literal(tok: str, line_no: int, what: str) -> int:
    if not tok.isdigit():
        raise ParseError(line_no, f"{what} must be a non-negative integer, got {tok!r}")
    return int(tok)


def parse_aiger(text: str) -> Aig:
    """Parse an AIGER ASCII ("aag") document and validate the result.

    Raises ParseError for malformed text and MultiDriver / DanglingLiteral /
    CombinationalCycle when the circuit violates a structural invariant.
    """
    lines = text.splitlines()
    if not lines:
        raise ParseError(1, "empty document")

    header = lines[0].split()
    if len(header) != 6 or header[0] != "aag":
        raise ParseError(1, "header must be 'aag M I L O A'")
    try:
        max_var, n_in, n_latch, n_out, n_and = (int(tok) for tok in header[1:])
    except ValueError:
        raise ParseError(1, "header counts must be integers") from None
    if min(max_var, n_in, n_latch, n_out, n_and) < 0:
        raise ParseError(1, "header counts must be non-negative")

    pos = 1

    def next_line(what: str) -> tuple[str, int]:
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(len(lines) + 1, f"unexpected end of file, expected {what}")
        line = lines[pos]
        pos += 1
        return line, pos

    inputs: list[int] = []
    for i in range(n_in):
        line, n = next_line(f"input {i}")
        toks = line.split()
        if len(toks) != 1:
            raise ParseError(n, "input line must hold a single literal")
        lit = _parse_literal(toks[0], n, "input literal")
        if lit < 2 or lit & 1:
            raise ParseError(n, f"input literal must be positive and even, got {lit}")
        inputs.append(lit_var(lit))

    latches: list[Latch] = []
    for i in range(n_latch):
        line, n = next_line(f"latch {i}")
        toks = line.split()
        if len(toks) not in (2, 3):
            raise ParseError(n, "latch line must be 'state next [init]'")
        state_lit = _parse_literal(toks[0], n, "latch state literal")
        if state_lit < 2 or state_lit & 1:
            raise ParseError(n, f"latch state literal must be positive and even, got {state_lit}")
        next_lit = _parse_literal(toks[1], n, "latch next-state literal")
        init: int | None = 0
        if len(toks) == 3:
            if toks[2] in ("0", "1"):
                init = int(toks[2])
            elif toks[2] in ("x", "X"):
                init = None
            else:
                raise ParseError(n, f"latch init must be 0, 1 or x, got {toks[2]!r}")
        latches.append(Latch(lit_var(state_lit), next_lit, init))

    outputs: list[int] = []
    for i in range(n_out):
        line, n = next_line(f"output {i}")
        toks = line.split()
        if len(toks) != 1:
            raise ParseError(n, "output line must hold a single literal")
        outputs.append(_parse_literal(toks[0], n, "output literal"))

    ands: list[AndGate] = []
    for i in range(n_and):
        line, n = next_line(f"AND gate {i}")
        toks = line.split()
        if len(toks) != 3:
            raise ParseError(n, "AND line must be 'lhs rhs0 rhs1'")
        lhs = _parse_literal(toks[0], n, "AND lhs literal")
        if lhs < 2 or lhs & 1:
            raise ParseError(n, f"AND lhs must be positive and even, got {lhs}")
        rhs0 = _parse_literal(toks[1], n, "AND rhs0 literal")
        rhs1 = _parse_literal(toks[2], n, "AND rhs1 literal")
        ands.append(AndGate(lit_var(lhs), rhs0, rhs1))

    symbols: dict[tuple[str, int], str] = {}
    comments: list[str] = []
    counts = {"i": n_in, "l": n_latch, "o": n_out}
    while pos < len(lines):
        line = lines[pos]
        pos += 1
        if line == "c":
            comments.extend(lines[pos:])
            break
        if not line.strip():
            continue
        kind = line[0]
        rest = line[1:].split(" ", 1)
        if kind not in counts or len(rest) != 2 or not rest[0].isdigit():
            raise ParseError(pos, f"malformed symbol line {line!r}")
        sym_pos = int(rest[0])
        if sym_pos >= counts[kind]:
            raise ParseError(pos, f"symbol position {sym_pos} out of range for kind {kind!r}")
        if (kind, sym_pos) in symbols:
            raise ParseError(pos, f"duplicate symbol for {kind}{sym_pos}")
        symbols[(kind, sym_pos)] = rest[1]

    aig = Aig(max_var, inputs, latches, outputs, ands, symbols, comments)
    validate(aig)
    return aig


def validate(aig: Aig) -> None:
    """Check the structural invariants; raise the matching AigError if violated.

    Invariants: no literal beyond max_var, single driver per variable, every
    referenced variable defined, and no cycle through AND gates alone.
    """
    defined: set[int] = set()

    def define(var: int) -> None:
        if var == 0:
            raise MultiDriver(0)  # variable 0 is reserved for the constants
        if var in defined:
            raise MultiDriver(var)
        defined.add(var)

    for var in aig.inputs:
        define(var)
    for latch in aig.latches:
        define(latch.state)
    for gate in aig.ands:
        define(gate.lhs)

    def check_ref(lit: int) -> None:
        var = lit_var(lit)
        if var > aig.max_var or (var != 0 and var not in defined):
            raise DanglingLiteral(lit)

    for var in defined:
        if var > aig.max_var:
            raise DanglingLiteral(var_lit(var))
    for latch in aig.latches:
        check_ref(latch.next)
    for lit in aig.outputs:
        check_ref(lit)
    for gate in aig.ands:
        check_ref(gate.rhs0)
        check_ref(gate.rhs1)

    # Combinational acyclicity: walk AND-to-AND edges only (latches cut paths).
    gate_of = {gate.lhs: gate for gate in aig.ands}
    state = dict.fromkeys(gate_of, 0)  # 0 unvisited, 1 on stack, 2 done
    for root in gate_of:
        if state[root] != 0:
            continue
        stack: list[tuple[int, int]] = [(root, 0)]
        state[root] = 1
        path = [root]
        while stack:
            var, branch = stack.pop()
            gate = gate_of[var]
            if branch == 2:
                state[var] = 2
                path.pop()
                continue
            stack.append((var, branch + 1))
            child = lit_var(gate.rhs0 if branch == 0 else gate.rhs1)
            if child in gate_of:
                if state[child] == 1:
                    raise CombinationalCycle(path[path.index(child):])
                if state[child] == 0:
                    state[child] = 1
                    path.append(child)
                    stack.append((child, 0))


def write_aiger(aig: Aig) -> str:
    """Serialize to AIGER ASCII. Inverse of parse_aiger up to variable naming."""
    out: list[str] = [
        f"aag {aig.max_var} {aig.num_inputs} {aig.num_latches} {aig.num_outputs} {aig.num_ands}"
    ]
    for var in aig.inputs:
        out.append(str(var_lit(var)))
    for latch in aig.latches:
        line = f"{var_lit(latch.state)} {latch.next}"
        if latch.init is None:
            line += " x"
        elif latch.init == 1:
            line += " 1"
        out.append(line)
    for lit in aig.outputs:
        out.append(str(lit))
    for gate in aig.ands:
        out.append(f"{var_lit(gate.lhs)} {gate.rhs0} {gate.rhs1}")
    for kind, count in (("i", aig.num_inputs), ("l", aig.num_latches), ("o", aig.num_outputs)):
        for sym_pos in range(count):
            name = aig.symbols.get((kind, sym_pos))
            if name is not None:
                out.append(f"{kind}{sym_pos} {name}")
    if aig.comments:
        out.append("c")
        out.extend(aig.comments)
    return "\n".join(out) + "\n"


def canonical_form(aig: Aig) -> Aig:
    """Renumber variables into the canonical order: inputs, latches, then ANDs.

    Two circuits are isomorphic iff their canonical forms are equal.  AND
    gates keep their list order; operand literals are rewritten through the
    variable map.
    """
    var_map = {0: 0}
    fresh = 1
    for var in aig.inputs:
        var_map[var] = fresh
        fresh += 1
    for latch in aig.latches:
        var_map[latch.state] = fresh
        fresh += 1
    for gate in aig.ands:
        var_map[gate.lhs] = fresh
        fresh += 1

    def map_lit(lit: int) -> int:
        return var_lit(var_map[lit_var(lit)], lit_inverted(lit))

    return replace(
        aig,
        max_var=fresh - 1,
        inputs=list(range(1, 1 + aig.num_inputs)),
        latches=[
            Latch(var_map[l.state], map_lit(l.next), l.init) for l in aig.latches
        ],
        outputs=[map_lit(lit) for lit in aig.outputs],
        ands=[
            AndGate(var_map[g.lhs], map_lit(g.rhs0), map_lit(g.rhs1)) for g in aig.ands
        ],
    )
