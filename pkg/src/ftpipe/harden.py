"""Structural hardening transforms applied directly to the AIG.

Three built-in strategies: triple modular redundancy with majority voters,
Hamming single-error correction over a register group, and detection-only
parity flags.  Every transform preserves the primary inputs, preserves the
original outputs in count, order, and fault-free function, and returns a map
from original latch indices to their replacements plus overhead counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

from .aig import Aig, AndGate, Latch, lit_var, validate, var_lit
from .graph import RegisterGroup


class IndexOutOfRange(Exception):
    pass


class WidthTooSmall(Exception):
    pass


class NonContiguousGroup(Exception):
    pass


@dataclass
class OverheadRecord:
    d_latches: int
    d_ands: int
    d_outputs: int
    area_overhead: float  # fractional: (ands+latches) ratio - 1

    @property
    def percent(self) -> float:
        return 100.0 * self.area_overhead


@dataclass
class TransformResult:
    hardened: Aig
    protected_map: dict[int, list[int]]  # original latch -> replacement latches
    added_outputs: list[tuple[str, int]]  # (name, literal)
    overhead: OverheadRecord
    latch_map: dict[int, list[int]] = field(default_factory=dict)  # total map


def measure_overhead(original: Aig, hardened: Aig) -> OverheadRecord:
    base = original.num_ands + original.num_latches
    grown = hardened.num_ands + hardened.num_latches
    return OverheadRecord(
        hardened.num_latches - original.num_latches,
        hardened.num_ands - original.num_ands,
        hardened.num_outputs - original.num_outputs,
        (grown / base - 1.0) if base else 0.0,
    )


class _NetBuilder:
    """Fresh-variable allocator and gate emitter for transform logic."""

    def __init__(self, max_var: int):
        self.max_var = max_var
        self.gates: list[AndGate] = []

    def new_var(self) -> int:
        self.max_var += 1
        return self.max_var

    def AND(self, a: int, b: int) -> int:
        var = self.new_var()
        self.gates.append(AndGate(var, a, b))
        return var_lit(var)

    def XOR(self, a: int, b: int) -> int:
        both = self.AND(a, b)
        neither = self.AND(a ^ 1, b ^ 1)
        return self.AND(both ^ 1, neither ^ 1)

    def xor_fold(self, lits: list[int]) -> int:
        return reduce(self.XOR, lits)

    def and_fold(self, lits: list[int]) -> int:
        return reduce(self.AND, lits)


def _subst(lit: int, lit_map: dict[int, int]) -> int:
    replacement = lit_map.get(lit_var(lit))
    if replacement is None:
        return lit
    return replacement ^ (lit & 1)


def _rebuild_symbols(aig: Aig, latch_names: dict[int, str | None]) -> dict:
    symbols = {
        (kind, pos): name
        for (kind, pos), name in aig.symbols.items()
        if kind in ("i", "o")
    }
    for pos, name in latch_names.items():
        if name is not None:
            symbols[("l", pos)] = name
    return symbols


def apply_tmr(aig: Aig, latch_indices: list[int]) -> TransformResult:
    """Triplicate each protected latch and vote on reads.

    maj(a,b,c) is built from exactly 5 AND nodes; the voter output replaces
    every read of the original state variable, so the shared next-state cone
    is recomputed from the voted value and all three replicas reconverge one
    cycle after any single upset.
    """
    protected = list(latch_indices)
    if len(set(protected)) != len(protected):
        raise IndexOutOfRange("duplicate latch indices")
    for idx in protected:
        if not 0 <= idx < aig.num_latches:
            raise IndexOutOfRange(f"latch index {idx} out of range")
    protected_set = set(protected)

    nb = _NetBuilder(aig.max_var)
    lit_map: dict[int, int] = {}
    replica_vars: dict[int, tuple[int, int, int]] = {}
    for pos in sorted(protected_set):
        a, b, c = nb.new_var(), nb.new_var(), nb.new_var()
        replica_vars[pos] = (a, b, c)
        la, lb, lc = var_lit(a), var_lit(b), var_lit(c)
        t_ab = nb.AND(la, lb)
        t_bc = nb.AND(lb, lc)
        t_ac = nb.AND(la, lc)
        none_of_two = nb.AND(t_ab ^ 1, t_bc ^ 1)
        minority = nb.AND(none_of_two, t_ac ^ 1)
        lit_map[aig.latches[pos].state] = minority ^ 1  # majority

    new_latches: list[Latch] = []
    latch_names: dict[int, str | None] = {}
    protected_map: dict[int, list[int]] = {}
    latch_map: dict[int, list[int]] = {}
    for pos, latch in enumerate(aig.latches):
        name = aig.latch_name(pos)
        if pos in protected_set:
            ids = []
            for rep, var in enumerate(replica_vars[pos]):
                ids.append(len(new_latches))
                latch_names[len(new_latches)] = f"{name}_t{rep}" if name else None
                new_latches.append(Latch(var, _subst(latch.next, lit_map), latch.init))
            protected_map[pos] = ids
            latch_map[pos] = ids
        else:
            latch_map[pos] = [len(new_latches)]
            latch_names[len(new_latches)] = name
            new_latches.append(Latch(latch.state, _subst(latch.next, lit_map), latch.init))

    hardened = Aig(
        max_var=nb.max_var,
        inputs=list(aig.inputs),
        latches=new_latches,
        outputs=[_subst(lit, lit_map) for lit in aig.outputs],
        ands=[
            AndGate(g.lhs, _subst(g.rhs0, lit_map), _subst(g.rhs1, lit_map))
            for g in aig.ands
        ]
        + nb.gates,
        symbols=_rebuild_symbols(aig, latch_names),
        comments=list(aig.comments),
    )
    validate(hardened)
    return TransformResult(
        hardened, protected_map, [], measure_overhead(aig, hardened), latch_map
    )


# --- Hamming code: software oracle first, then the synthesized logic ---------


def hamming_r(k: int) -> int:
    """Smallest r with 2^r >= k + r + 1."""
    r = 0
    while 2**r < k + r + 1:
        r += 1
    return r


def hamming_positions(k: int) -> tuple[int, list[int], list[int]]:
    """Total length n and the 1-indexed parity / data position lists."""
    r = hamming_r(k)
    n = k + r
    parity = [2**j for j in range(r)]
    data = [p for p in range(1, n + 1) if p not in parity]
    return n, parity, data


def hamming_encode(bits: list[int]) -> list[int]:
    """Codeword (index 0 holds position 1); data bits fill non-power-of-two
    positions lsb-first, each parity bit covers positions sharing its bit."""
    k = len(bits)
    n, parity, data = hamming_positions(k)
    word = [0] * (n + 1)  # 1-indexed
    for bit, pos in zip(bits, data):
        word[pos] = bit
    for p in parity:
        acc = 0
        for q in data:
            if q & p:
                acc ^= word[q]
        word[p] = acc
    return word[1:]


def hamming_syndrome(word: list[int]) -> int:
    syndrome = 0
    for idx, bit in enumerate(word, start=1):
        if bit:
            syndrome ^= idx
    return syndrome


def hamming_decode(word: list[int], k: int) -> list[int]:
    """Correct at most one flipped position, then extract the data bits."""
    _, _, data = hamming_positions(k)
    syndrome = hamming_syndrome(word)
    fixed = list(word)
    if 0 < syndrome <= len(word):
        fixed[syndrome - 1] ^= 1
    return [fixed[pos - 1] for pos in data]


def apply_hamming(aig: Aig, group: RegisterGroup) -> TransformResult:
    """Store the register group as a Hamming codeword of its next-state value.

    Parity bits occupy power-of-two positions (1-indexed).  Every original
    read of a data bit becomes the corrected decode: stored bit XOR (syndrome
    == its position), with the syndrome computed from the stored codeword.
    """
    members = list(group.latches)
    k = len(members)
    if k < 2:
        raise WidthTooSmall(f"group {group.name!r} has width {k}, need >= 2")
    for idx in members:
        if not 0 <= idx < aig.num_latches:
            raise IndexOutOfRange(f"latch index {idx} out of range")
    span = sorted(members)
    if span != list(range(span[0], span[0] + k)):
        raise NonContiguousGroup(f"group {group.name!r} latches {members} not contiguous")

    n, parity_pos, data_pos = hamming_positions(k)
    r = n - k
    nb = _NetBuilder(aig.max_var)
    code_var = {p: nb.new_var() for p in range(1, n + 1)}
    stored = {p: var_lit(code_var[p]) for p in range(1, n + 1)}

    syndrome = []
    for j in range(r):
        covered = [stored[q] for q in range(1, n + 1) if q & (1 << j)]
        syndrome.append(nb.xor_fold(covered))

    lit_map: dict[int, int] = {}
    for i, member in enumerate(members):
        pos = data_pos[i]
        match = nb.and_fold(
            [syndrome[j] ^ (0 if pos & (1 << j) else 1) for j in range(r)]
        )
        lit_map[aig.latches[member].state] = nb.XOR(stored[pos], match)

    next_lit: dict[int, int] = {}
    init_bit: dict[int, int | None] = {}
    for i, member in enumerate(members):
        next_lit[data_pos[i]] = _subst(aig.latches[member].next, lit_map)
        init_bit[data_pos[i]] = aig.latches[member].init
    for p in parity_pos:
        covered = [q for q in data_pos if q & p]
        next_lit[p] = nb.xor_fold([next_lit[q] for q in covered])
        init_bit[p] = reduce(
            lambda a, b: a ^ b, ((init_bit[q] or 0) for q in covered), 0
        )

    member_name = {data_pos[i]: aig.latch_name(m) for i, m in enumerate(members)}
    new_latches: list[Latch] = []
    latch_names: dict[int, str | None] = {}
    latch_map: dict[int, list[int]] = {}
    code_indices: list[int] = []
    member_set = set(members)
    for pos, latch in enumerate(aig.latches):
        if pos in member_set:
            if pos != span[0]:
                continue
            for p in range(1, n + 1):
                code_indices.append(len(new_latches))
                latch_names[len(new_latches)] = (
                    member_name[p] if p in member_name else f"{group.name}_par{p}"
                )
                new_latches.append(Latch(code_var[p], next_lit[p], init_bit[p]))
        else:
            latch_map[pos] = [len(new_latches)]
            latch_names[len(new_latches)] = aig.latch_name(pos)
            new_latches.append(Latch(latch.state, _subst(latch.next, lit_map), latch.init))
    protected_map = {member: list(code_indices) for member in members}
    latch_map.update(protected_map)

    hardened = Aig(
        max_var=nb.max_var,
        inputs=list(aig.inputs),
        latches=new_latches,
        outputs=[_subst(lit, lit_map) for lit in aig.outputs],
        ands=[
            AndGate(g.lhs, _subst(g.rhs0, lit_map), _subst(g.rhs1, lit_map))
            for g in aig.ands
        ]
        + nb.gates,
        symbols=_rebuild_symbols(aig, latch_names),
        comments=list(aig.comments),
    )
    validate(hardened)
    return TransformResult(
        hardened, protected_map, [], measure_overhead(aig, hardened), latch_map
    )


def apply_parity(aig: Aig, group: RegisterGroup) -> TransformResult:
    """Detection only: one extra latch stores the XOR of the group's
    next-state bits and a new `<group>_parity_err` output raises when the
    stored parity disagrees with the stored data.  The data path, and hence
    every original output, is untouched; no masking is claimed, so the
    protected map stays empty."""
    members = list(group.latches)
    if not members:
        raise WidthTooSmall(f"group {group.name!r} is empty")
    for idx in members:
        if not 0 <= idx < aig.num_latches:
            raise IndexOutOfRange(f"latch index {idx} out of range")

    nb = _NetBuilder(aig.max_var)
    parity_var = nb.new_var()
    parity_next = nb.xor_fold([aig.latches[m].next for m in members])
    parity_init = reduce(
        lambda a, b: a ^ b, ((aig.latches[m].init or 0) for m in members), 0
    )
    mismatch = nb.XOR(
        nb.xor_fold([var_lit(aig.latches[m].state) for m in members]),
        var_lit(parity_var),
    )

    latch_names = {pos: aig.latch_name(pos) for pos in range(aig.num_latches)}
    latch_names[aig.num_latches] = f"{group.name}_parity"
    flag_name = f"{group.name}_parity_err"
    symbols = _rebuild_symbols(aig, latch_names)
    symbols[("o", aig.num_outputs)] = flag_name

    hardened = Aig(
        max_var=nb.max_var,
        inputs=list(aig.inputs),
        latches=list(aig.latches) + [Latch(parity_var, parity_next, parity_init)],
        outputs=list(aig.outputs) + [mismatch],
        ands=list(aig.ands) + nb.gates,
        symbols=symbols,
        comments=list(aig.comments),
    )
    validate(hardened)
    latch_map = {pos: [pos] for pos in range(aig.num_latches)}
    return TransformResult(
        hardened,
        {},
        [(flag_name, mismatch)],
        measure_overhead(aig, hardened),
        latch_map,
    )
