"""Hardening transforms: census, fault-free equivalence, masking, errors."""

from __future__ import annotations

import itertools
import random

import pytest

from conftest import TOGGLE_FF, Builder, make_counter, make_fsm, random_aig

from ftpipe.aig import lit_var, parse_aiger, validate
from ftpipe.faultlab import run_campaign, run_exhaustive, run_injection, InjectionSpec
from ftpipe.graph import RegisterGroup, build_graph, group_registers
from ftpipe.harden import (
    IndexOutOfRange,
    NonContiguousGroup,
    WidthTooSmall,
    apply_hamming,
    apply_parity,
    apply_tmr,
    hamming_decode,
    hamming_encode,
    hamming_positions,
    hamming_r,
    hamming_syndrome,
    measure_overhead,
)
from ftpipe.sim import Stimulus, random_stimulus, simulate


def _co_simulate(original, hardened, stim):
    """Outputs of the hardened circuit restricted to the original PO prefix."""
    want = simulate(original, stim).outputs
    got = simulate(hardened, stim).outputs
    return want, [row[: original.num_outputs] for row in got]


# --- TMR ----------------------------------------------------------------------


def test_tmr_voter_truth_table():
    # Latch with constant-zero next; flips at cycle 0 set the replica states,
    # so the lone output reads exactly maj(a, b, c) over all 8 combinations.
    aig = parse_aiger("aag 1 0 1 1 0\n2 0\n2\n")
    res = apply_tmr(aig, [0])
    assert res.hardened.num_latches == 3
    stim = Stimulus(0, 1, ((),))
    from ftpipe.sim import Engine

    engine = Engine(res.hardened)
    for bits in itertools.product((0, 1), repeat=3):
        flips = {0: {i: bits[i] for i in range(3)}}
        outs, _ = engine.run([()], flips=flips)
        assert outs[0][0] == (1 if sum(bits) >= 2 else 0), bits


def test_tmr_census_and_maps(counter):
    res = apply_tmr(counter, [1])
    assert res.overhead.d_latches == 2
    assert res.overhead.d_ands == 5
    assert res.overhead.d_outputs == 0
    assert res.protected_map == {1: [1, 2, 3]}
    assert res.latch_map == {0: [0], 1: [1, 2, 3], 2: [4], 3: [5]}
    assert res.added_outputs == []
    names = [res.hardened.latch_name(i) for i in range(6)]
    assert names == ["cnt[0]", "cnt[1]_t0", "cnt[1]_t1", "cnt[1]_t2", "cnt[2]", "cnt[3]"]


def test_tmr_all_census(counter):
    res = apply_tmr(counter, [0, 1, 2, 3])
    assert res.hardened.num_latches == 3 * counter.num_latches
    assert res.hardened.num_ands == counter.num_ands + 5 * 4
    assert res.hardened.inputs == counter.inputs
    assert res.hardened.num_outputs == counter.num_outputs


def test_tmr_preserves_function(counter):
    stim = random_stimulus(1, 40, seed=3)
    res = apply_tmr(counter, [0, 1, 2, 3])
    want, got = _co_simulate(counter, res.hardened, stim)
    assert want == got


def test_tmr_preserves_function_random_circuits():
    done = 0
    seed = 0
    while done < 15:
        seed += 1
        aig = random_aig(random.Random(9100 + seed))
        if aig.num_latches == 0:
            continue
        res = apply_tmr(aig, list(range(aig.num_latches)))
        stim = random_stimulus(aig.num_inputs, 24, seed=seed)
        want, got = _co_simulate(aig, res.hardened, stim)
        assert want == got
        done += 1


def test_tmr_masks_every_injection(counter):
    res = apply_tmr(counter, [0, 1, 2, 3])
    stim = random_stimulus(1, 16, seed=7)
    result = run_exhaustive(res.hardened, stim)
    assert all(s.n_err == 0 for s in result.latches)
    assert result.latches[0].n_inj == 16


def test_tmr_single_latch_masks_only_its_replicas():
    # Shift register: protect stage 0 only; its replicas mask, stage 1 does not.
    from conftest import make_shift_register

    sh = make_shift_register(2)
    res = apply_tmr(sh, [0])
    stim = random_stimulus(1, 12, seed=1)
    result = run_exhaustive(res.hardened, stim)
    protected = set(res.protected_map[0])
    for stats in result.latches:
        if stats.index in protected:
            assert stats.n_err == 0
        else:
            assert stats.n_err > 0


def test_tmr_inherits_init():
    aig = parse_aiger("aag 1 0 1 1 0\n2 3 1\n2\n")  # toggle starting at 1
    res = apply_tmr(aig, [0])
    assert [l.init for l in res.hardened.latches] == [1, 1, 1]
    want, got = _co_simulate(aig, res.hardened, Stimulus(0, 6, ((),) * 6))
    assert want == got


def test_tmr_index_errors(counter):
    with pytest.raises(IndexOutOfRange):
        apply_tmr(counter, [4])
    with pytest.raises(IndexOutOfRange):
        apply_tmr(counter, [-1])
    with pytest.raises(IndexOutOfRange):
        apply_tmr(counter, [1, 1])


# --- Hamming software oracle ---------------------------------------------------


def test_hamming_r_values():
    assert hamming_r(2) == 3
    assert hamming_r(4) == 3
    assert hamming_r(5) == 4
    assert hamming_r(11) == 4


def test_hamming_positions_74():
    n, parity, data = hamming_positions(4)
    assert n == 7
    assert parity == [1, 2, 4]
    assert data == [3, 5, 6, 7]


def test_hamming_encode_known_vector():
    # data lsb-first [1,0,1,1]: p1 = d0^d1^d3 = 0, p2 = d0^d2^d3 = 1,
    # p4 = d1^d2^d3 = 0; positions 1..7 read 0,1,1,0,0,1,1
    assert hamming_encode([1, 0, 1, 1]) == [0, 1, 1, 0, 0, 1, 1]


def test_hamming_oracle_round_trip():
    for k in (2, 3, 4, 5):
        for bits in itertools.product((0, 1), repeat=k):
            word = hamming_encode(list(bits))
            assert hamming_syndrome(word) == 0
            assert hamming_decode(word, k) == list(bits)
            for pos in range(len(word)):
                corrupt = list(word)
                corrupt[pos] ^= 1
                assert hamming_syndrome(corrupt) == pos + 1
                assert hamming_decode(corrupt, k) == list(bits)


# --- Hamming transform ----------------------------------------------------------


def _register_file(bits: int):
    """bits parallel load latches r[i] <- d[i], all latch outputs observed."""
    b = Builder()
    ins = [b.add_input(f"d[{i}]") for i in range(bits)]
    regs = [b.add_latch(f"r[{i}]") for i in range(bits)]
    for reg, src in zip(regs, ins):
        b.set_next(reg, src)
    for i, reg in enumerate(regs):
        b.add_output(reg, f"q[{i}]")
    return b.build()


def test_hamming_census():
    aig = _register_file(4)
    res = apply_hamming(aig, RegisterGroup("r", [0, 1, 2, 3]))
    assert res.hardened.num_latches == 7
    assert res.overhead.d_latches == 3
    assert res.overhead.d_outputs == 0
    assert res.protected_map == {i: res.protected_map[0] for i in range(4)}
    assert sorted(res.protected_map[0]) == list(range(7))


def test_hamming_logic_matches_oracle_all_flips():
    # Load every 4-bit value, flip every codeword latch at the read cycle,
    # and confirm the corrected outputs still equal the loaded value.
    aig = _register_file(4)
    res = apply_hamming(aig, RegisterGroup("r", [0, 1, 2, 3]))
    from ftpipe.sim import Engine

    engine = Engine(res.hardened)
    for value in range(16):
        bits = [(value >> i) & 1 for i in range(4)]
        vectors = [tuple(bits), tuple(bits)]
        outs, _ = engine.run(vectors)
        assert outs[1] == bits  # fault-free read back
        for flip_pos in range(7):
            outs, _ = engine.run(vectors, flips={1: {flip_pos: 1}})
            assert outs[1] == bits, (value, flip_pos)


def test_hamming_stored_word_is_codeword():
    # After loading value v, the 7 stored bits equal hamming_encode(v).
    aig = _register_file(4)
    res = apply_hamming(aig, RegisterGroup("r", [0, 1, 2, 3]))
    graph = build_graph(res.hardened)
    for value in (0, 5, 11, 15):
        bits = [(value >> i) & 1 for i in range(4)]
        stim = Stimulus(4, 2, (tuple(bits), tuple(bits)))
        trace = simulate(res.hardened, stim, capture_nodes=True)
        stored = [
            trace.node_values[1][graph.latch_node(pos)] for pos in range(7)
        ]
        assert stored == hamming_encode(bits)


def test_hamming_preserves_function(counter):
    res = apply_hamming(counter, RegisterGroup("cnt", [0, 1, 2, 3]))
    stim = random_stimulus(1, 40, seed=4)
    want, got = _co_simulate(counter, res.hardened, stim)
    assert want == got


def test_hamming_masks_every_injection(counter):
    res = apply_hamming(counter, RegisterGroup("cnt", [0, 1, 2, 3]))
    stim = random_stimulus(1, 16, seed=8)
    result = run_exhaustive(res.hardened, stim)
    assert all(s.n_err == 0 for s in result.latches)


def test_hamming_self_heals_after_correction(counter):
    # A flip is corrected on read, so the rewritten codeword is clean and a
    # second flip several cycles later is also masked.
    res = apply_hamming(counter, RegisterGroup("cnt", [0, 1, 2, 3]))
    stim = random_stimulus(1, 24, seed=10)
    golden = simulate(res.hardened, stim).outputs
    from ftpipe.sim import Engine

    engine = Engine(res.hardened)
    outs, _ = engine.run(list(stim.vectors), flips={3: {2: 1}, 10: {5: 1}})
    assert outs == golden


def test_hamming_init_encodes_initial_state():
    b = Builder()
    regs = [b.add_latch(f"v[{i}]", init=init) for i, init in enumerate([1, 0, 1, 1])]
    for reg in regs:
        b.set_next(reg, reg)  # hold
    b.add_output(regs[0], "q")
    aig = b.build()
    res = apply_hamming(aig, RegisterGroup("v", [0, 1, 2, 3]))
    inits = [l.init for l in res.hardened.latches]
    assert inits == hamming_encode([1, 0, 1, 1])


def test_hamming_group_errors(counter):
    with pytest.raises(WidthTooSmall):
        apply_hamming(counter, RegisterGroup("cnt", [0]))
    with pytest.raises(NonContiguousGroup):
        apply_hamming(counter, RegisterGroup("cnt", [0, 2]))
    with pytest.raises(IndexOutOfRange):
        apply_hamming(counter, RegisterGroup("cnt", [3, 4]))


def test_hamming_out_of_order_lsb_ordering():
    # Group listed msb-gap-free but lsb at the higher latch position.
    b = Builder()
    ins = [b.add_input(f"d[{i}]") for i in range(2)]
    r1 = b.add_latch("x[1]")
    r0 = b.add_latch("x[0]")
    b.set_next(r1, ins[1])
    b.set_next(r0, ins[0])
    b.add_output(r0, "q0")
    b.add_output(r1, "q1")
    aig = b.build()
    group = group_registers(aig).groups[0]
    assert group == RegisterGroup("x", [1, 0])
    res = apply_hamming(aig, group)
    stim = random_stimulus(2, 16, seed=2)
    want, got = _co_simulate(aig, res.hardened, stim)
    assert want == got
    assert all(s.n_err == 0 for s in run_exhaustive(res.hardened, stim).latches)


# --- parity ---------------------------------------------------------------------


def test_parity_census_and_interface(counter):
    res = apply_parity(counter, RegisterGroup("cnt", [0, 1, 2, 3]))
    assert res.overhead.d_latches == 1
    assert res.overhead.d_outputs == 1
    assert res.protected_map == {}
    assert res.latch_map == {i: [i] for i in range(4)}
    assert len(res.added_outputs) == 1
    name, lit = res.added_outputs[0]
    assert name == "cnt_parity_err"
    assert res.hardened.output_name(1) == "cnt_parity_err"
    assert res.hardened.outputs[1] == lit
    assert res.hardened.latch_name(4) == "cnt_parity"


def test_parity_data_path_untouched(counter):
    res = apply_parity(counter, RegisterGroup("cnt", [0, 1, 2, 3]))
    assert res.hardened.outputs[0] == counter.outputs[0]
    assert res.hardened.latches[:4] == counter.latches
    stim = random_stimulus(1, 32, seed=6)
    want, got = _co_simulate(counter, res.hardened, stim)
    assert want == got


def test_parity_flag_silent_fault_free(counter):
    res = apply_parity(counter, RegisterGroup("cnt", [0, 1, 2, 3]))
    stim = random_stimulus(1, 32, seed=6)
    trace = simulate(res.hardened, stim)
    assert all(row[1] == 0 for row in trace.outputs)


def test_parity_flag_raises_at_corrupted_cycle(counter):
    res = apply_parity(counter, RegisterGroup("cnt", [0, 1, 2, 3]))
    stim = random_stimulus(1, 16, seed=6)
    for latch in range(4):
        for cycle in (0, 5, 12):
            trace, _ = run_injection(res.hardened, stim, InjectionSpec(latch, cycle))
            assert trace.outputs[cycle][1] == 1, (latch, cycle)


def test_parity_flag_raises_on_parity_latch_flip(counter):
    res = apply_parity(counter, RegisterGroup("cnt", [0, 1, 2, 3]))
    stim = random_stimulus(1, 16, seed=6)
    trace, _ = run_injection(res.hardened, stim, InjectionSpec(4, 7))
    assert trace.outputs[7][1] == 1


def test_parity_singleton_group():
    b = Builder()
    d = b.add_input("d")
    reg = b.add_latch("mode")
    b.set_next(reg, d)
    b.add_output(reg, "q")
    aig = b.build()
    res = apply_parity(aig, RegisterGroup("latch_0", [0]))
    assert res.overhead.d_latches == 1
    stim = random_stimulus(1, 12, seed=1)
    want, got = _co_simulate(aig, res.hardened, stim)
    assert want == got
    trace, _ = run_injection(res.hardened, stim, InjectionSpec(0, 3))
    assert trace.outputs[3][1] == 1


def test_parity_empty_group(counter):
    with pytest.raises(WidthTooSmall):
        apply_parity(counter, RegisterGroup("cnt", []))
    with pytest.raises(IndexOutOfRange):
        apply_parity(counter, RegisterGroup("cnt", [9]))


def test_parity_init_consistency():
    b = Builder()
    regs = [b.add_latch(f"v[{i}]", init=init) for i, init in enumerate([1, None, 1])]
    for reg in regs:
        b.set_next(reg, reg)
    b.add_output(regs[0], "q")
    aig = b.build()
    res = apply_parity(aig, RegisterGroup("v", [0, 1, 2]))
    assert res.hardened.latches[3].init == 0  # 1 ^ 0 ^ 1
    trace = simulate(res.hardened, Stimulus(0, 4, ((),) * 4))
    assert all(row[1] == 0 for row in trace.outputs)


# --- overhead and composition ----------------------------------------------------


def test_measure_overhead_toggle():
    aig = parse_aiger(TOGGLE_FF)
    res = apply_tmr(aig, [0])
    assert res.overhead.d_latches == 2
    assert res.overhead.d_ands == 5
    assert res.overhead.area_overhead == pytest.approx(7.0)
    assert res.overhead.percent == pytest.approx(700.0)


def test_measure_overhead_identity(counter):
    rec = measure_overhead(counter, counter)
    assert (rec.d_latches, rec.d_ands, rec.d_outputs) == (0, 0, 0)
    assert rec.area_overhead == 0.0


def test_transforms_compose(fsm):
    # Hamming on the state pair, then parity on a latch of the result using
    # the latch map to track where the original registers went.
    first = apply_hamming(fsm, RegisterGroup("state", [0, 1]))
    follow = first.latch_map[0]
    second = apply_parity(
        first.hardened, RegisterGroup("code", sorted(follow))
    )
    stim = random_stimulus(1, 24, seed=12)
    want, got = _co_simulate(fsm, second.hardened, stim)
    assert want == got
    validate(second.hardened)


def test_hardened_circuits_reserialize(counter):
    from ftpipe.aig import parse_aiger as parse, write_aiger

    for res in (
        apply_tmr(counter, [0, 2]),
        apply_hamming(counter, RegisterGroup("cnt", [0, 1, 2, 3])),
        apply_parity(counter, RegisterGroup("cnt", [0, 1, 2, 3])),
    ):
        text = write_aiger(res.hardened)
        again = parse(text)
        assert write_aiger(again) == text
