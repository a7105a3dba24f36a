"""Typed circuit graph over an AIG, static structural features, and register
grouping.

Node ids are assigned in a fixed order: the constant node (id 0), then
primary inputs, latches, AND gates, and primary outputs, each in declaration
order.  Edges follow dataflow (driver to consumer) and carry the inversion
flag of the referencing literal.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .aig import Aig, lit_inverted, lit_var

KINDS = ("CONST", "PI", "PO", "AND", "LATCH")

STATIC_COLUMNS = (
    *(f"kind_{k}" for k in KINDS),
    "fan_in",
    "fan_out",
    "fwd_depth",
    "bwd_depth",
    *(f"nbr_{k}" for k in KINDS),
)


class Edge(NamedTuple):
    src: int
    dst: int
    inverted: bool


@dataclass
class CircuitGraph:
    """Directed typed graph; treated as immutable after construction."""

    nodes: list[tuple[int, str]]  # (id, kind)
    edges: list[Edge]
    latch_of: dict[int, int]  # node id -> latch position
    var_node: dict[int, int]  # AIG variable -> node id
    po_nodes: list[int]  # node id per output position
    in_adj: list[list[Edge]] = field(default_factory=list, repr=False)
    out_adj: list[list[Edge]] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.in_adj:
            self.in_adj = [[] for _ in self.nodes]
            self.out_adj = [[] for _ in self.nodes]
            for edge in self.edges:
                self.out_adj[edge.src].append(edge)
                self.in_adj[edge.dst].append(edge)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def kind(self, node: int) -> str:
        return self.nodes[node][1]

    def latch_node(self, latch_pos: int) -> int:
        for node, pos in self.latch_of.items():
            if pos == latch_pos:
                return node
        raise KeyError(latch_pos)


def build_graph(aig: Aig) -> CircuitGraph:
    """Build the typed graph: N = 1 + I + L + A + O nodes."""
    nodes: list[tuple[int, str]] = [(0, "CONST")]
    var_node: dict[int, int] = {0: 0}
    latch_of: dict[int, int] = {}

    for var in aig.inputs:
        var_node[var] = len(nodes)
        nodes.append((len(nodes), "PI"))
    for pos, latch in enumerate(aig.latches):
        var_node[latch.state] = len(nodes)
        latch_of[len(nodes)] = pos
        nodes.append((len(nodes), "LATCH"))
    for gate in aig.ands:
        var_node[gate.lhs] = len(nodes)
        nodes.append((len(nodes), "AND"))
    po_nodes = []
    for _ in aig.outputs:
        po_nodes.append(len(nodes))
        nodes.append((len(nodes), "PO"))

    edges: list[Edge] = []
    for gate in aig.ands:
        dst = var_node[gate.lhs]
        for lit in (gate.rhs0, gate.rhs1):
            edges.append(Edge(var_node[lit_var(lit)], dst, lit_inverted(lit)))
    for pos, latch in enumerate(aig.latches):
        dst = var_node[latch.state]
        edges.append(Edge(var_node[lit_var(latch.next)], dst, lit_inverted(latch.next)))
    for pos, lit in enumerate(aig.outputs):
        edges.append(Edge(var_node[lit_var(lit)], po_nodes[pos], lit_inverted(lit)))

    return CircuitGraph(nodes, edges, latch_of, var_node, po_nodes)


def _and_topo_order(graph: CircuitGraph) -> list[int]:
    """AND nodes ordered so every AND fanin comes first (latches cut paths)."""
    indeg = {
        node: sum(1 for e in graph.in_adj[node] if graph.kind(e.src) == "AND")
        for node, kind in graph.nodes
        if kind == "AND"
    }
    ready = deque(node for node, d in indeg.items() if d == 0)
    order: list[int] = []
    while ready:
        node = ready.popleft()
        order.append(node)
        for edge in graph.out_adj[node]:
            if edge.dst in indeg:
                indeg[edge.dst] -= 1
                if indeg[edge.dst] == 0:
                    ready.append(edge.dst)
    assert len(order) == len(indeg), "combinational cycle in validated graph"
    return order


def static_features(graph: CircuitGraph) -> np.ndarray:
    """Per-node static block, shape (N, 14); columns named in STATIC_COLUMNS.

    Depths count AND hops on the longest combinational path, with latches as
    cut points: forward depth is 0 at PIs, constants and latch outputs;
    backward depth is 0 at POs and latch inputs.
    """
    n = graph.num_nodes
    feats = np.zeros((n, len(STATIC_COLUMNS)), dtype=np.float64)
    kind_index = {k: i for i, k in enumerate(KINDS)}

    for node, kind in graph.nodes:
        feats[node, kind_index[kind]] = 1.0
        feats[node, 5] = len(graph.in_adj[node])
        feats[node, 6] = len(graph.out_adj[node])

    order = _and_topo_order(graph)
    fwd = np.zeros(n)
    for node in order:
        fwd[node] = 1 + max(
            (fwd[e.src] for e in graph.in_adj[node] if graph.kind(e.src) == "AND"),
            default=0,
        )
    for node, kind in graph.nodes:
        if kind == "PO":
            drivers = [e.src for e in graph.in_adj[node] if graph.kind(e.src) == "AND"]
            fwd[node] = max((fwd[d] for d in drivers), default=0)

    bwd = np.zeros(n)
    for node in reversed(order):
        bwd[node] = 1 + max(
            (bwd[e.dst] for e in graph.out_adj[node] if graph.kind(e.dst) == "AND"),
            default=0,
        )
        if not graph.out_adj[node]:
            bwd[node] = 0.0  # dangling gate observes nothing
    for node, kind in graph.nodes:
        if kind in ("PI", "CONST"):
            consumers = [e.dst for e in graph.out_adj[node] if graph.kind(e.dst) == "AND"]
            bwd[node] = max((bwd[c] for c in consumers), default=0)

    feats[:, 7] = fwd
    feats[:, 8] = bwd

    for node, _ in graph.nodes:
        neighbors = {e.src for e in graph.in_adj[node]} | {
            e.dst for e in graph.out_adj[node]
        }
        if neighbors:
            for nb in neighbors:
                feats[node, 9 + kind_index[graph.kind(nb)]] += 1.0
            feats[node, 9:14] /= len(neighbors)
    return feats


class RegisterGroup(NamedTuple):
    name: str
    latches: list[int]  # latch positions, lsb to msb


@dataclass
class RegisterMap:
    groups: list[RegisterGroup]
    latch_to_group: dict[int, int]  # latch position -> index into groups

    def group_of(self, latch_pos: int) -> RegisterGroup:
        return self.groups[self.latch_to_group[latch_pos]]


_INDEXED = re.compile(r"^(.+)\[(\d+)\]$")


def group_registers(aig: Aig) -> RegisterMap:
    """Partition latches into named registers.

    Latches named ``base[i]`` merge into group ``base`` (ordered by i) when
    the bit indices are exactly 0..w-1 with no duplicates; otherwise each
    keeps its full symbol name as a singleton.  Unnamed or unindexed latches
    become singletons named ``latch_<index>``.
    """
    names = [aig.latch_name(i) for i in range(aig.num_latches)]
    by_base: dict[str, dict[int, int]] = {}
    mergeable: dict[str, bool] = {}
    for pos, name in enumerate(names):
        m = _INDEXED.match(name) if name else None
        if not m:
            continue
        base, bit = m.group(1), int(m.group(2))
        bits = by_base.setdefault(base, {})
        if bit in bits:
            mergeable[base] = False
        bits[bit] = pos
    for base, bits in by_base.items():
        if set(bits) != set(range(len(bits))):
            mergeable[base] = False

    groups: list[RegisterGroup] = []
    latch_to_group: dict[int, int] = {}
    emitted: set[str] = set()
    for pos, name in enumerate(names):
        m = _INDEXED.match(name) if name else None
        if m and mergeable.get(m.group(1), True):
            base = m.group(1)
            if base in emitted:
                continue
            emitted.add(base)
            bits = by_base[base]
            members = [bits[i] for i in range(len(bits))]
            for member in members:
                latch_to_group[member] = len(groups)
            groups.append(RegisterGroup(base, members))
        else:
            label = name if m else f"latch_{pos}"
            latch_to_group[pos] = len(groups)
            groups.append(RegisterGroup(label, [pos]))
    return RegisterMap(groups, latch_to_group)
