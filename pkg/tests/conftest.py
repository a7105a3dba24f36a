"""Shared fixtures: toy circuits, a random-circuit generator, and a naive
recursive evaluator used as an independent oracle for the simulation engine.
"""

from __future__ import annotations

import random

import pytest

from ftpipe.aig import Aig, AndGate, Latch, lit_var, validate, var_lit


class Builder:
    """Small helper for constructing well-formed AIGs in tests."""

    def __init__(self):
        self._next_var = 1
        self._inputs: list[int] = []
        self._latches: list[int] = []  # state vars, creation order
        self._next_of: dict[int, int | None] = {}
        self._init_of: dict[int, int | None] = {}
        self._ands: list[AndGate] = []
        self._outputs: list[int] = []
        self.symbols: dict[tuple[str, int], str] = {}

    def _fresh(self) -> int:
        var = self._next_var
        self._next_var += 1
        return var

    def add_input(self, name: str | None = None) -> int:
        var = self._fresh()
        if name:
            self.symbols[("i", len(self._inputs))] = name
        self._inputs.append(var)
        return var_lit(var)

    def add_latch(self, name: str | None = None, init: int | None = 0) -> int:
        var = self._fresh()
        if name:
            self.symbols[("l", len(self._latches))] = name
        self._latches.append(var)
        self._next_of[var] = None
        self._init_of[var] = init
        return var_lit(var)

    def set_next(self, state_lit: int, next_lit: int) -> None:
        self._next_of[lit_var(state_lit)] = next_lit

    def AND(self, a: int, b: int) -> int:
        var = self._fresh()
        self._ands.append(AndGate(var, a, b))
        return var_lit(var)

    def OR(self, a: int, b: int) -> int:
        return self.AND(a ^ 1, b ^ 1) ^ 1

    def XOR(self, a: int, b: int) -> int:
        both = self.AND(a, b)
        neither = self.AND(a ^ 1, b ^ 1)
        return self.AND(both ^ 1, neither ^ 1)

    def add_output(self, lit: int, name: str | None = None) -> None:
        if name:
            self.symbols[("o", len(self._outputs))] = name
        self._outputs.append(lit)

    def build(self) -> Aig:
        latches = []
        for var in self._latches:
            nxt = self._next_of[var]
            assert nxt is not None, f"latch {var} has no next-state function"
            latches.append(Latch(var, nxt, self._init_of[var]))
        aig = Aig(
            max_var=self._next_var - 1,
            inputs=list(self._inputs),
            latches=latches,
            outputs=list(self._outputs),
            ands=list(self._ands),
            symbols=dict(self.symbols),
        )
        validate(aig)
        return aig


# --- toy circuits -----------------------------------------------------------

SINGLE_AND = "aag 3 2 0 1 1\n2\n4\n6\n6 2 4\n"

# free-running toggle flip-flop: q' = not q, output q
TOGGLE_FF = "aag 1 0 1 1 0\n2 3\n2\n"

# latch copies the input, output reads the latch (every upset is visible)
PASSTHROUGH = "aag 2 1 1 1 0\n2\n4 2\n4\n"

# latch copies the input but nothing reads it (no upset is ever visible)
DEAD_REGISTER = "aag 2 1 1 1 0\n2\n4 2\n2\n"


def make_counter(bits: int = 4) -> Aig:
    """Counter with an enable input; counts up, wraps, MSB is the output."""
    b = Builder()
    en = b.add_input("en")
    regs = [b.add_latch(f"cnt[{i}]") for i in range(bits)]
    carry = en
    for i, reg in enumerate(regs):
        b.set_next(reg, b.XOR(reg, carry))
        if i + 1 < bits:
            carry = b.AND(carry, reg)
    b.add_output(regs[-1], "msb")
    return b.build()


def make_shift_register(bits: int = 4) -> Aig:
    """Shift chain d -> s0 -> s1 -> ... with the last stage as output.

    An upset in stage i needs bits-1-i more cycles to reach the output, so
    exhaustive injection over T cycles yields AVF (T - (bits-1-i)) / T:
    strictly increasing along the chain.
    """
    b = Builder()
    d = b.add_input("d")
    regs = [b.add_latch(f"sh[{i}]") for i in range(bits)]
    prev = d
    for reg in regs:
        b.set_next(reg, prev)
        prev = reg
    b.add_output(regs[-1], "q")
    return b.build()


def make_fsm() -> Aig:
    """Two-bit saturating state machine: counts up to 3 while go is high,
    resets otherwise; asserts done in state 3."""
    b = Builder()
    go = b.add_input("go")
    s0 = b.add_latch("state[0]")
    s1 = b.add_latch("state[1]")
    top = b.AND(s0, s1)
    b.set_next(s0, b.AND(go, b.OR(s0 ^ 1, top)))
    b.set_next(s1, b.AND(go, b.OR(s0, s1)))
    b.add_output(top, "done")
    return b.build()


# --- random circuit generation ----------------------------------------------


def random_aig(
    rng: random.Random,
    max_inputs: int = 4,
    max_latches: int = 4,
    max_ands: int = 12,
    max_outputs: int = 3,
) -> Aig:
    """Generate a random well-formed circuit, acyclic by construction."""
    n_in = rng.randint(0, max_inputs)
    n_latch = rng.randint(0, max_latches)
    if n_in + n_latch == 0:
        n_in = 1
    n_and = rng.randint(0, max_ands)
    n_out = rng.randint(1, max_outputs)

    inputs = list(range(1, n_in + 1))
    latch_vars = list(range(n_in + 1, n_in + n_latch + 1))
    and_vars = list(range(n_in + n_latch + 1, n_in + n_latch + n_and + 1))
    max_var = n_in + n_latch + n_and

    def pick_lit(upto: int) -> int:
        # constants are rare, otherwise any defined variable with random sign
        if rng.random() < 0.05:
            return rng.randint(0, 1)
        var = rng.randint(1, upto) if upto >= 1 else 0
        return var_lit(var, rng.random() < 0.5)

    ands = []
    for i, var in enumerate(and_vars):
        upto = n_in + n_latch + i  # only already-defined variables
        ands.append(AndGate(var, pick_lit(upto), pick_lit(upto)))

    latches = [
        Latch(var, pick_lit(max_var), rng.choice([0, 0, 1, None]))
        for var in latch_vars
    ]
    outputs = [pick_lit(max_var) for _ in range(n_out)]

    symbols: dict[tuple[str, int], str] = {}
    for kind, count in (("i", n_in), ("l", n_latch), ("o", n_out)):
        for pos in range(count):
            if rng.random() < 0.3:
                symbols[(kind, pos)] = f"{kind}_{pos}_sym"

    comments = ["generated test circuit"] if rng.random() < 0.3 else []
    aig = Aig(max_var, inputs, latches, outputs, ands, symbols, comments)
    validate(aig)
    return aig


# --- naive reference evaluator ------------------------------------------------


def naive_eval(aig: Aig, lit: int, env: dict[int, int], _memo=None) -> int:
    """Recursive cone evaluation; env maps input/latch variables to 0 or 1."""
    if _memo is None:
        _memo = {}
    var = lit_var(lit)
    if var in _memo:
        val = _memo[var]
    elif var == 0:
        val = 0
    elif var in env:
        val = env[var]
    else:
        gate = next(g for g in aig.ands if g.lhs == var)
        val = naive_eval(aig, gate.rhs0, env, _memo) & naive_eval(
            aig, gate.rhs1, env, _memo
        )
    _memo[var] = val
    return val ^ (lit & 1)


def naive_simulate(
    aig: Aig, input_seq: list[dict[int, int]]
) -> tuple[list[list[int]], list[dict[int, int]]]:
    """Cycle-accurate reference simulation, independent of the fast engine.

    input_seq holds one {input_var: bit} dict per cycle.  Returns the output
    bits per cycle and the latch state per cycle (as read during that cycle).
    """
    state = {l.state: (l.init if l.init is not None else 0) for l in aig.latches}
    out_rows: list[list[int]] = []
    state_rows: list[dict[int, int]] = []
    for inputs in input_seq:
        env = dict(inputs)
        env.update(state)
        state_rows.append(dict(state))
        memo: dict[int, int] = {}
        out_rows.append([naive_eval(aig, lit, env, memo) for lit in aig.outputs])
        state = {
            l.state: naive_eval(aig, l.next, env, memo) for l in aig.latches
        }
    return out_rows, state_rows


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xF7)


@pytest.fixture
def counter() -> Aig:
    return make_counter()


@pytest.fixture
def shift_register() -> Aig:
    return make_shift_register()


@pytest.fixture
def fsm() -> Aig:
    return make_fsm()


# --- rewrite-loop test backends ----------------------------------------------


def corrupt_one_literal(aig: Aig) -> Aig:
    """Re-aim one gate input at a fresh, undefined variable."""
    from dataclasses import replace

    bad = var_lit(aig.max_var + 1)
    gates = list(aig.ands)
    gates[0] = AndGate(gates[0].lhs, bad, gates[0].rhs1)
    return replace(aig, max_var=aig.max_var + 1, ands=gates)


class FaultSeededBackend:
    """Wraps a structural backend and corrupts chosen rounds' candidates."""

    def __init__(self, inner, corrupt_rounds=(0,)):
        self.inner = inner
        self.corrupt_rounds = set(corrupt_rounds)
        self.round = 0
        self.name = f"seeded({inner.name})"

    def generate(self, circuit, plan, prompt=None):
        candidate = self.inner.generate(circuit, plan, prompt)
        if self.round in self.corrupt_rounds:
            candidate.aig = corrupt_one_literal(candidate.aig)
        self.round += 1
        return candidate
