"""Asset classification, strategy eligibility, and hardening-plan validation.

The analysis stage turns per-latch vulnerability predictions into typed
assets, assigns each a strategy constrained by the eligibility table, and the
plan builder then applies three deterministic checks (drop storage-less
assets, merge overlapping ones, repair non-compliant strategies) so that any
proposal list, however produced, ends up as a well-formed plan.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .aig import Aig, write_aiger
from .gnn import PredictionReport
from .graph import RegisterMap

ASSET_TYPES = (
    "fsm_state",
    "counter_reg",
    "datapath_reg",
    "control_reg",
    "memory",
    "matrix_unit",
)

RISK_ORDER = {"low": 0, "medium": 1, "high": 2}


class SchemaError(Exception):
    pass


class ParseFailure(Exception):
    pass


@dataclass(frozen=True)
class Asset:
    name: str
    asset_type: str
    width: int
    latch_indices: tuple[int, ...]
    risk: str

    def __post_init__(self):
        if self.asset_type not in ASSET_TYPES:
            raise ValueError(f"unknown asset type {self.asset_type!r}")
        if self.risk not in RISK_ORDER:
            raise ValueError(f"unknown risk level {self.risk!r}")
        if self.width != len(self.latch_indices):
            raise ValueError("width must equal the number of latch indices")


@dataclass(frozen=True)
class EligibilityRow:
    preferred: tuple[str, ...]
    alternative: tuple[str, ...]

    @property
    def allowed(self) -> tuple[str, ...]:
        return self.preferred + self.alternative


DEFAULT_TABLE: dict[str, EligibilityRow] = {
    "fsm_state": EligibilityRow(
        ("tmr_state", "fsm_hamming"), ("one_hot", "illegal_detect", "parity")
    ),
    "counter_reg": EligibilityRow(
        ("tmr_reg", "hamming"), ("cnt_comp", "secded", "parity")
    ),
    "datapath_reg": EligibilityRow(
        ("tmr_reg", "hamming"), ("secded", "parity", "parity_byte")
    ),
    "control_reg": EligibilityRow(("tmr_reg",), ("parity", "watchdog")),
    "memory": EligibilityRow(
        ("ecc_fifo", "sram_ecc"), ("scrubbing", "gray_ptr", "parity_byte")
    ),
    "matrix_unit": EligibilityRow(("abft_sec", "abft"), ("checksum",)),
}


def serialize_table(table: dict[str, EligibilityRow] = DEFAULT_TABLE) -> str:
    lines = []
    for asset_type in ASSET_TYPES:
        row = table[asset_type]
        lines.append(
            f"- {asset_type}: preferred {', '.join(row.preferred)}; "
            f"alternative {', '.join(row.alternative)}"
        )
    return "\n".join(lines)


@dataclass
class PlanEntry:
    asset: Asset
    strategy: str
    rationale: str = ""
    rag_queries: tuple[str, ...] = ()


@dataclass
class HardeningPlan:
    circuit_id: str
    entries: list[PlanEntry]


# --- heuristic classification ---------------------------------------------------


def _risk_of(score: float) -> str:
    if score >= 0.75:
        return "high"
    if score >= 0.5:
        return "medium"
    return "low"


def _type_of(name: str, width: int) -> str:
    lowered = name.lower()
    if "state" in lowered:
        return "fsm_state"
    if "cnt" in lowered or "count" in lowered:
        return "counter_reg"
    if "mem" in lowered:
        return "memory"
    if width == 1 and any(tok in lowered for tok in ("en", "valid", "ctrl")):
        return "control_reg"
    return "datapath_reg"


def classify_assets_heuristic(
    aig: Aig, reg_map: RegisterMap, report: PredictionReport
) -> list[Asset]:
    """Name-pattern fallback for semantic analysis: a register group becomes
    an asset when any of its latches is predicted vulnerable; risk follows the
    highest member score."""
    by_index = {p.index: p for p in report.registers}
    assets = []
    for group in reg_map.groups:
        members = [by_index[idx] for idx in group.latches if idx in by_index]
        if not members or not any(p.predicted for p in members):
            continue
        width = len(group.latches)
        assets.append(
            Asset(
                name=group.name,
                asset_type=_type_of(group.name, width),
                width=width,
                latch_indices=tuple(group.latches),
                risk=_risk_of(max(p.score for p in members)),
            )
        )
    return assets


def default_strategy(asset_type: str, table: dict[str, EligibilityRow] = DEFAULT_TABLE) -> str:
    return table[asset_type].preferred[0]


def _default_queries(asset: Asset, strategy: str) -> tuple[str, ...]:
    return (
        strategy.replace("_", " "),
        asset.asset_type.replace("_", " ") + " upset hardening",
        f"{asset.width} bit register {asset.risk} risk",
    )


def propose_from_assets(
    assets: list[Asset], table: dict[str, EligibilityRow] = DEFAULT_TABLE
) -> list[PlanEntry]:
    entries = []
    for asset in assets:
        strategy = default_strategy(asset.asset_type, table)
        entries.append(
            PlanEntry(
                asset=asset,
                strategy=strategy,
                rationale=(
                    f"{asset.name} classified {asset.asset_type} ({asset.risk} risk); "
                    f"first preferred strategy for the type"
                ),
                rag_queries=_default_queries(asset, strategy),
            )
        )
    return entries


# --- LLM-backed analysis ----------------------------------------------------------


_ANALYSIS_STEPS = """Work through three steps before answering:
1. Identify the overall structural category of the design (state machine,
   counter, datapath, storage block, arithmetic unit).
2. For each vulnerable register below, consider its update pattern, control
   dependencies, and usage sites; decide its asset type, width, and role.
3. Pick one strategy per asset, strictly from its eligibility row."""


def build_analysis_prompt(
    design_text: str,
    report: PredictionReport,
    table: dict[str, EligibilityRow] = DEFAULT_TABLE,
) -> str:
    return "\n\n".join(
        (
            _ANALYSIS_STEPS,
            "## design\n" + design_text,
            "## vulnerability report\n" + report.to_json(),
            "## eligibility table\n" + serialize_table(table),
            "Answer with a JSON array; each element: {\"name\": str, "
            "\"type\": str, \"latches\": [int], \"risk\": str, "
            "\"strategy\": str, \"rationale\": str, \"rag_queries\": [str]}.",
        )
    )


def _extract_json_array(text: str):
    # tolerate code fences and prose around the array
    start = text.find("[")
    if start < 0:
        raise ParseFailure("no JSON array in response")
    depth = 0
    for pos in range(start, len(text)):
        if text[pos] == "[":
            depth += 1
        elif text[pos] == "]":
            depth -= 1
            if depth == 0:
                try:
                    return json.loads(text[start : pos + 1])
                except json.JSONDecodeError as exc:
                    raise ParseFailure(f"bad JSON: {exc}") from exc
    raise ParseFailure("unterminated JSON array")


def _parse_proposals(text: str, reg_map: RegisterMap) -> list[PlanEntry]:
    raw = _extract_json_array(text)
    if not isinstance(raw, list):
        raise ParseFailure("response is not a list")
    group_by_name = {g.name: g for g in reg_map.groups}
    entries = []
    for item in raw:
        if not isinstance(item, dict):
            raise ParseFailure("proposal element is not an object")
        try:
            name = str(item["name"])
            asset_type = str(item["type"])
            strategy = str(item["strategy"])
        except KeyError as exc:
            raise ParseFailure(f"proposal missing {exc}") from exc
        if asset_type not in ASSET_TYPES:
            raise ParseFailure(f"unknown asset type {asset_type!r}")
        risk = str(item.get("risk", "medium"))
        if risk not in RISK_ORDER:
            raise ParseFailure(f"unknown risk {risk!r}")
        latches = item.get("latches")
        if latches is None and name in group_by_name:
            latches = list(group_by_name[name].latches)
        latches = tuple(int(x) for x in (latches or ()))
        entries.append(
            PlanEntry(
                asset=Asset(name, asset_type, len(latches), latches, risk),
                strategy=strategy,
                rationale=str(item.get("rationale", "")),
                rag_queries=tuple(str(q) for q in item.get("rag_queries", ())),
            )
        )
    return entries


def analyze_with_llm(
    aig: Aig,
    reg_map: RegisterMap,
    report: PredictionReport,
    client,
    table: dict[str, EligibilityRow] = DEFAULT_TABLE,
    retries: int = 2,
) -> list[PlanEntry]:
    """Chain-of-thought analysis through the chat backend; malformed replies
    are retried at most `retries` times, then the heuristic path takes over.
    An empty vulnerability report short-circuits without any client call."""
    if not any(p.predicted for p in report.registers):
        return []
    prompt = build_analysis_prompt(write_aiger(aig), report, table)
    for _ in range(retries + 1):
        replies = client.complete(prompt)
        reply = replies[0] if isinstance(replies, list) else replies
        try:
            return _parse_proposals(reply, reg_map)
        except ParseFailure:
            continue
    return propose_from_assets(classify_assets_heuristic(aig, reg_map, report), table)


# --- plan builder -----------------------------------------------------------------


def validate_plan(
    proposals: list[PlanEntry],
    aig: Aig,
    reg_map: RegisterMap,
    table: dict[str, EligibilityRow] = DEFAULT_TABLE,
    circuit_id: str = "circuit",
) -> HardeningPlan:
    """Three total checks, in order: drop proposals without storage, merge
    entries sharing latches (higher risk, first-listed strategy), and replace
    any strategy outside the asset's eligibility row with the row's first
    preferred one.  Running the result through again changes nothing."""
    group_by_name = {g.name: g for g in reg_map.groups}

    kept: list[dict] = []
    for entry in proposals:
        latches = [i for i in entry.asset.latch_indices if 0 <= i < aig.num_latches]
        if not latches and entry.asset.name in group_by_name:
            latches = list(group_by_name[entry.asset.name].latches)
        latches = list(dict.fromkeys(latches))
        if not latches:
            continue  # check 1: no physical storage
        overlapping = [k for k in kept if k["latches"] & set(latches)]
        if not overlapping:
            kept.append(
                {
                    "name": entry.asset.name,
                    "type": entry.asset.asset_type,
                    "risk": entry.asset.risk,
                    "order": list(latches),
                    "latches": set(latches),
                    "strategy": entry.strategy,
                    "rationale": entry.rationale,
                    "queries": list(entry.rag_queries),
                }
            )
            continue
        # check 2: merge into the first overlapping entry, which keeps its
        # name, type, and (first-listed) strategy
        target = overlapping[0]
        for other in overlapping[1:]:
            kept.remove(other)
            target["order"] += [i for i in other["order"] if i not in target["latches"]]
            target["latches"] |= other["latches"]
            if RISK_ORDER[other["risk"]] > RISK_ORDER[target["risk"]]:
                target["risk"] = other["risk"]
            target["queries"] += [q for q in other["queries"] if q not in target["queries"]]
        target["order"] += [i for i in latches if i not in target["latches"]]
        target["latches"] |= set(latches)
        if RISK_ORDER[entry.asset.risk] > RISK_ORDER[target["risk"]]:
            target["risk"] = entry.asset.risk
        target["queries"] += [q for q in entry.rag_queries if q not in target["queries"]]

    entries = []
    for k in kept:
        strategy = k["strategy"]
        row = table[k["type"]]
        if strategy not in row.allowed:
            strategy = row.preferred[0]  # check 3
        entries.append(
            PlanEntry(
                asset=Asset(k["name"], k["type"], len(k["order"]), tuple(k["order"]), k["risk"]),
                strategy=strategy,
                rationale=k["rationale"],
                rag_queries=tuple(k["queries"]),
            )
        )
    return HardeningPlan(circuit_id, entries)


# --- JSON round-trip ----------------------------------------------------------------


def plan_to_json(plan: HardeningPlan) -> str:
    return json.dumps(
        {
            "circuit": plan.circuit_id,
            "entries": [
                {
                    "asset": {
                        "name": e.asset.name,
                        "type": e.asset.asset_type,
                        "width": e.asset.width,
                        "latches": list(e.asset.latch_indices),
                        "risk": e.asset.risk,
                    },
                    "strategy": e.strategy,
                    "rationale": e.rationale,
                    "rag_queries": list(e.rag_queries),
                }
                for e in plan.entries
            ],
        },
        indent=2,
    )


def plan_from_json(text: str) -> HardeningPlan:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    try:
        entries = []
        for item in raw["entries"]:
            asset = item["asset"]
            entries.append(
                PlanEntry(
                    asset=Asset(
                        name=asset["name"],
                        asset_type=asset["type"],
                        width=asset["width"],
                        latch_indices=tuple(asset["latches"]),
                        risk=asset["risk"],
                    ),
                    strategy=item["strategy"],
                    rationale=item.get("rationale", ""),
                    rag_queries=tuple(item.get("rag_queries", ())),
                )
            )
        return HardeningPlan(raw["circuit"], entries)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed plan document: {exc}") from exc
