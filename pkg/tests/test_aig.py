import random
from dataclasses import replace

import pytest

from conftest import DEAD_REGISTER, SINGLE_AND, TOGGLE_FF, random_aig
from ftpipe.aig import (
    AndGate,
    CombinationalCycle,
    DanglingLiteral,
    Latch,
    MultiDriver,
    ParseError,
    canonical_form,
    lit_not,
    lit_var,
    parse_aiger,
    validate,
    var_lit,
    write_aiger,
)


def test_literal_helpers():
    assert lit_var(6) == 3
    assert lit_var(7) == 3
    assert var_lit(3) == 6
    assert var_lit(3, True) == 7
    assert lit_not(6) == 7
    assert lit_not(7) == 6


def test_parse_single_and():
    aig = parse_aiger(SINGLE_AND)
    assert aig.max_var == 3
    assert aig.inputs == [1, 2]
    assert aig.latches == []
    assert aig.outputs == [6]
    assert aig.ands == [AndGate(3, 2, 4)]


def test_parse_toggle_ff():
    aig = parse_aiger(TOGGLE_FF)
    assert aig.latches == [Latch(1, 3, 0)]  # init defaults to 0
    assert aig.outputs == [2]


def test_parse_init_values():
    aig = parse_aiger("aag 3 0 3 0 0\n2 3\n4 5 1\n6 7 x\n")
    assert [l.init for l in aig.latches] == [0, 1, None]
    # 0 is canonical-omitted, 1 and x are kept on write
    assert write_aiger(aig) == "aag 3 0 3 0 0\n2 3\n4 5 1\n6 7 x\n"


FULL_SAMPLE = """aag 5 1 1 2 2
2
4 10 1
4
10
6 2 4
10 3 5
i0 clk_in
l0 state
o0 q
o1 nq
c
example with everything
"""


def test_round_trip_preserves_symbols_and_comments():
    aig = parse_aiger(FULL_SAMPLE)
    assert aig.input_name(0) == "clk_in"
    assert aig.latch_name(0) == "state"
    assert aig.output_name(0) == "q"
    assert aig.output_name(1) == "nq"
    assert aig.comments == ["example with everything"]
    assert write_aiger(aig) == FULL_SAMPLE


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("nope\n", 1),
        ("aag 1 1\n", 1),
        ("aag a b c d e\n", 1),
        ("aag 3 2 0 1 1\n2\n", 3),  # truncated before second input
        ("aag 1 1 0 0 0\n3\n", 2),  # odd input literal
        ("aag 1 1 0 0 0\n0\n", 2),  # constant as input
        ("aag 1 0 1 0 0\n2 2 z\n", 2),  # bad init token
        ("aag 1 0 1 0 0\n2\n", 2),  # latch missing next-state
        ("aag 3 2 0 1 1\n2\n4\n6\n7 2 4\n", 5),  # odd AND lhs
    ],
)
def test_parse_errors(text, line):
    with pytest.raises(ParseError) as exc:
        parse_aiger(text)
    assert exc.value.line == line


@pytest.mark.parametrize(
    "extra",
    ["o1 oops", "o0 a\no0 b", "q0 what", "i0"],
)
def test_symbol_errors(extra):
    with pytest.raises(ParseError):
        parse_aiger(SINGLE_AND + extra + "\n")


def test_multi_driver():
    with pytest.raises(MultiDriver) as exc:
        parse_aiger("aag 2 1 1 0 0\n2\n2 2\n")
    assert exc.value.var == 1


def test_dangling_undefined_var():
    with pytest.raises(DanglingLiteral) as exc:
        parse_aiger("aag 2 1 0 1 0\n2\n4\n")
    assert exc.value.lit == 4


def test_dangling_beyond_max_var():
    with pytest.raises(DanglingLiteral):
        parse_aiger("aag 1 1 0 1 0\n2\n4\n")


def test_combinational_cycle():
    with pytest.raises(CombinationalCycle) as exc:
        parse_aiger("aag 2 0 0 0 2\n2 4 4\n4 2 2\n")
    assert exc.value.vars == [1, 2]


def test_cycle_through_latch_is_fine():
    aig = parse_aiger("aag 2 0 1 1 1\n2 5\n4\n4 2 2\n")
    assert aig.num_latches == 1 and aig.num_ands == 1


def test_self_loop_cycle():
    with pytest.raises(CombinationalCycle):
        parse_aiger("aag 1 0 0 0 1\n2 2 3\n")


def test_validate_rejects_var_zero_definition():
    bad = parse_aiger(DEAD_REGISTER)
    with pytest.raises(MultiDriver):
        validate(replace(bad, inputs=[0] + bad.inputs[1:]))


def test_round_trip_random_circuits():
    for seed in range(40):
        aig = random_aig(random.Random(seed))
        text = write_aiger(aig)
        again = parse_aiger(text)
        assert again == aig
        assert write_aiger(again) == text


def _permuted(aig, rng):
    perm = list(range(1, aig.max_var + 1))
    rng.shuffle(perm)
    vmap = {0: 0, **{v: perm[v - 1] for v in range(1, aig.max_var + 1)}}

    def ml(lit):
        return var_lit(vmap[lit_var(lit)], bool(lit & 1))

    return replace(
        aig,
        inputs=[vmap[v] for v in aig.inputs],
        latches=[Latch(vmap[l.state], ml(l.next), l.init) for l in aig.latches],
        outputs=[ml(o) for o in aig.outputs],
        ands=[AndGate(vmap[g.lhs], ml(g.rhs0), ml(g.rhs1)) for g in aig.ands],
    )


def test_canonical_form_identifies_isomorphic_circuits(rng):
    for seed in range(20):
        aig = random_aig(random.Random(seed))
        shuffled = _permuted(aig, rng)
        validate(shuffled)
        assert canonical_form(shuffled) == canonical_form(aig)
        if aig.max_var > 1 and shuffled != aig:
            assert canonical_form(aig) != canonical_form(replace(aig, outputs=[lit_not(aig.outputs[0])] + aig.outputs[1:]))
