"""Prompt assembly, candidate generation, error classification, repair loop.

One rewrite loop serves a whole validated plan: generate a candidate (chat
backend producing text, or the deterministic structural mock that applies the
built-in transforms), verify it, and on failure classify the error, record it
in the failure knowledge base, and regenerate from a repair prompt. The loop
is bounded to an initial attempt plus three repairs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .aig import Aig, write_aiger
from .graph import RegisterGroup
from .harden import apply_hamming, apply_parity, apply_tmr
from .kb import FailureKb, KnowledgeBase, RetrievalHit, retrieve_topk
from .llm import ClientError
from .plan import HardeningPlan, plan_to_json

ERROR_CLASSES = (
    "PARSE_ERROR",
    "DANGLING_LITERAL",
    "MULTI_DRIVER",
    "COMBINATIONAL_CYCLE",
    "INTERFACE_MISMATCH",
    "FUNCTIONAL_MISMATCH",
    "RELIABILITY_REGRESSION",
    "TOOL_TIMEOUT",
    "OTHER",
)

MAX_REPAIRS = 3
DEFAULT_PROMPT_BUDGET = 24_000

SECTION_ORDER = (
    "original_code",
    "hardening_plan",
    "retrieved_strategies",
    "retrieved_templates",
    "asset_summary",
    "strategy_rationale",
    "failure_warnings",
)

# Truncation knocks out the cheapest context first and never the design itself.
_TRUNCATION_ORDER = (
    "retrieved_templates",
    "retrieved_strategies",
    "failure_warnings",
    "strategy_rationale",
    "asset_summary",
    "hardening_plan",
)


class NoCodeBlock(Exception):
    pass


class PlanUnsupportedByMock(Exception):
    pass


class BudgetExceeded(Exception):
    pass


class ExhaustedRepairRounds(Exception):
    def __init__(self, history):
        super().__init__(
            f"no passing candidate after {len(history)} generations"
        )
        self.history = history


@dataclass
class Prompt:
    sections: list[tuple[str, str]]

    def text(self) -> str:
        parts = []
        for name, body in self.sections:
            parts.append(f"## {name}\n{body}")
        return "\n\n".join(parts)

    def section(self, name: str) -> str:
        for key, body in self.sections:
            if key == name:
                return body
        raise KeyError(name)


@dataclass
class Candidate:
    kind: str  # "structural" | "textual"
    provenance: str
    aig: Aig | None = None
    text: str | None = None
    protected_map: dict[int, list[int]] = field(default_factory=dict)
    added_outputs: list[tuple[str, int]] = field(default_factory=list)
    strategies: tuple[str, ...] = ()

    def serialized(self) -> str:
        return write_aiger(self.aig) if self.kind == "structural" else (self.text or "")


# --- context assembly -----------------------------------------------------------


def _strategy_section(hits: list[RetrievalHit]) -> str:
    parts = []
    for hit in hits:
        doc = hit.strategy
        parts.append(
            f"### {doc.strategy_id}: {doc.title}\n"
            f"scenarios: {doc.applicable_scenarios}\n"
            f"principle: {doc.principle}\n"
            f"constraints: {doc.interface_constraints}\n"
            f"overhead: {doc.overhead_estimate}"
        )
    return "\n\n".join(parts)


def _template_section(hits: list[RetrievalHit]) -> str:
    parts = []
    for hit in hits:
        ex = hit.example
        parts.append(
            f"### {ex.strategy_id}\nbefore:\n```\n{ex.before_snippet}\n```\n"
            f"after:\n```\n{ex.after_snippet}\n```\nnotes: {ex.notes}"
        )
    return "\n\n".join(parts)


def _failure_section(failures) -> str:
    lines = []
    for rec in failures:
        recent = f"; recent: {rec.samples[-1]}" if rec.samples else ""
        lines.append(
            f"- strategy {rec.strategy} previously failed as {rec.error_class} "
            f"x{rec.count}{recent}"
        )
    return "\n".join(lines)


def assemble_context(
    plan: HardeningPlan,
    circuit_text: str,
    kb_hits: list[RetrievalHit],
    failures,
    budget: int = DEFAULT_PROMPT_BUDGET,
) -> Prompt:
    """Fixed section order; when over budget, sections are truncated starting
    with the retrieved templates. Only an oversized design itself is fatal."""
    sections = {
        "original_code": circuit_text,
        "hardening_plan": plan_to_json(plan),
        "retrieved_strategies": _strategy_section(kb_hits),
        "retrieved_templates": _template_section(kb_hits),
        "asset_summary": "\n".join(
            f"- {e.asset.name}: {e.asset.asset_type}, width {e.asset.width}, "
            f"risk {e.asset.risk}, latches {list(e.asset.latch_indices)}"
            for e in plan.entries
        ),
        "strategy_rationale": "\n".join(
            f"- {e.asset.name} -> {e.strategy}: {e.rationale}" for e in plan.entries
        ),
        "failure_warnings": _failure_section(failures),
    }
    if len(circuit_text) > budget:
        raise BudgetExceeded(
            f"original code is {len(circuit_text)} chars, budget {budget}"
        )
    total = sum(len(v) for v in sections.values())
    for name in _TRUNCATION_ORDER:
        if total <= budget:
            break
        excess = total - budget
        keep = max(0, len(sections[name]) - excess)
        total -= len(sections[name]) - keep
        sections[name] = sections[name][:keep]
    return Prompt([(name, sections[name]) for name in SECTION_ORDER])


def retrieve_for_plan(kb: KnowledgeBase, plan: HardeningPlan, k: int = 3) -> list[RetrievalHit]:
    """Union of per-entry top-k retrievals, deduplicated, capped at k."""
    hits: list[RetrievalHit] = []
    seen = set()
    for entry in plan.entries:
        query = " ".join(entry.rag_queries) or entry.strategy
        for hit in retrieve_topk(kb, query, k):
            if hit.strategy.strategy_id not in seen:
                seen.add(hit.strategy.strategy_id)
                hits.append(hit)
    hits.sort(key=lambda h: (-h.score, h.strategy.strategy_id))
    return hits[:k]


def lookup_failures(failure_kb: FailureKb | None, plan: HardeningPlan):
    if failure_kb is None:
        return []
    records = []
    seen = set()
    for entry in plan.entries:
        for rec in failure_kb.lookup(entry.strategy):
            key = (rec.strategy, rec.error_class)
            if key not in seen:
                seen.add(key)
                records.append(rec)
    return records


# --- backends ----------------------------------------------------------------------


_FENCE = re.compile(r"```[\w+-]*\n(.*?)```", re.DOTALL)


class ChatBackend:
    """Textual candidates from a chat client; the reply must contain a fenced
    code block, and the first one is taken verbatim."""

    def __init__(self, client, name: str = "chat"):
        self.client = client
        self.name = name

    def generate(self, circuit: Aig, plan: HardeningPlan, prompt: Prompt) -> Candidate:
        replies = self.client.complete(prompt.text())
        reply = replies[0] if isinstance(replies, list) else replies
        match = _FENCE.search(reply)
        if not match:
            raise NoCodeBlock("no fenced code block in response")
        return Candidate(
            kind="textual",
            provenance=self.name,
            text=match.group(1),
            strategies=tuple(e.strategy for e in plan.entries),
        )


class MockBackend:
    """Deterministic structural generation: apply the built-in transforms in
    plan order, tracking where original latches move between transforms."""

    name = "mock"

    def generate(self, circuit: Aig, plan: HardeningPlan, prompt: Prompt | None = None) -> Candidate:
        current = circuit
        total_map = {pos: [pos] for pos in range(circuit.num_latches)}
        protected_sources: list[int] = []
        for entry in plan.entries:
            mapped = [total_map[idx][0] for idx in entry.asset.latch_indices]
            strategy = entry.strategy
            if strategy in ("tmr_reg", "tmr_state"):
                result = apply_tmr(current, mapped)
                protected_sources.extend(entry.asset.latch_indices)
            elif strategy in ("hamming", "fsm_hamming", "secded"):
                result = apply_hamming(
                    current, RegisterGroup(entry.asset.name, mapped)
                )
                protected_sources.extend(entry.asset.latch_indices)
            elif strategy in ("parity", "parity_byte"):
                result = apply_parity(
                    current, RegisterGroup(entry.asset.name, mapped)
                )
            else:
                raise PlanUnsupportedByMock(
                    f"strategy {strategy!r} has no structural transform"
                )
            current = result.hardened
            total_map = {
                orig: [n for old in olds for n in result.latch_map[old]]
                for orig, olds in total_map.items()
            }
        protected_map = {src: list(total_map[src]) for src in protected_sources}
        added = [
            (current.output_name(pos), current.outputs[pos])
            for pos in range(circuit.num_outputs, current.num_outputs)
        ]
        return Candidate(
            kind="structural",
            provenance=self.name,
            aig=current,
            protected_map=protected_map,
            added_outputs=added,
            strategies=tuple(e.strategy for e in plan.entries),
        )


# --- error classification --------------------------------------------------------------


_CLASS_PATTERNS: list[tuple[str, str]] = [
    ("PARSE_ERROR", r"parse error|bad header|no fenced code block|not valid json"),
    ("DANGLING_LITERAL", r"dangling|undefined (variable|literal)"),
    ("MULTI_DRIVER", r"driven twice|multiple drivers|more than one driver|multi-?driver"),
    ("COMBINATIONAL_CYCLE", r"combinational cycle|cycle through|combinational loop"),
    ("INTERFACE_MISMATCH", r"interface mismatch|port list|missing output|missing input"),
    ("FUNCTIONAL_MISMATCH", r"functional mismatch|diverge|golden trace|traces differ"),
    ("RELIABILITY_REGRESSION", r"reliability regression|error rate|unmasked|injections through"),
    ("TOOL_TIMEOUT", r"timed out|timeout|configurationmissing|no \w+ adapter|spawn failure"),
]

_STAGE_DEFAULTS = {
    "structure": "PARSE_ERROR",
    "interface": "INTERFACE_MISMATCH",
    "function": "FUNCTIONAL_MISMATCH",
    "reliability": "RELIABILITY_REGRESSION",
}


def classify_error(stage: str, raw_message: str) -> str:
    """Ordered pattern rules over the raw message, then a stage-informed
    default, then OTHER. Total and deterministic."""
    lowered = raw_message.lower()
    for error_class, pattern in _CLASS_PATTERNS:
        if re.search(pattern, lowered):
            return error_class
    return _STAGE_DEFAULTS.get(stage, "OTHER")


REPAIR_DIRECTIVES = {
    "PARSE_ERROR": "emit one complete, well-formed design; header counts must match the body",
    "DANGLING_LITERAL": "every referenced literal must be defined by an input, a latch, or a gate",
    "MULTI_DRIVER": "ensure each variable is assigned by exactly one driver",
    "COMBINATIONAL_CYCLE": "break combinational feedback; every loop must pass through a latch",
    "INTERFACE_MISMATCH": "keep the primary inputs and original outputs exactly as declared; "
    "added flags need an _err suffix",
    "FUNCTIONAL_MISMATCH": "hardening must not change fault-free behavior; reproduce the "
    "original output traces exactly",
    "RELIABILITY_REGRESSION": "protected registers must mask injected faults and the overall "
    "error rate must not rise",
    "TOOL_TIMEOUT": "simplify the candidate so external checks finish within their time budget",
    "OTHER": "revisit the plan constraints and regenerate the design carefully",
}


def assemble_repair_prompt(
    plan: HardeningPlan,
    circuit_text: str,
    faulty_candidate: str,
    error_class: str,
    error_detail: str,
    kb_hits: list[RetrievalHit],
    failures,
) -> Prompt:
    """Original design, the faulty candidate, the classified error with its
    directive, and condensed retrieved context (principles only)."""
    condensed = "\n".join(
        f"- {hit.strategy.strategy_id}: {hit.strategy.principle}" for hit in kb_hits
    )
    return Prompt(
        [
            ("original_code", circuit_text),
            ("hardening_plan", plan_to_json(plan)),
            ("faulty_candidate", faulty_candidate),
            ("error_class", f"{error_class}: {error_detail}"),
            ("repair_directive", REPAIR_DIRECTIVES[error_class]),
            ("condensed_context", condensed),
            ("failure_warnings", _failure_section(failures)),
        ]
    )


# --- the loop ---------------------------------------------------------------------------


@dataclass
class RoundReport:
    round: int
    provenance: str
    status: str  # "pass" | "fail"
    stage: str
    error_class: str | None
    detail: str


@dataclass
class RewriteOutcome:
    candidate: Candidate
    rounds: list[RoundReport]
    verification: object  # VerificationReport

    def to_json_dict(self) -> dict:
        return {
            "status": "pass",
            "rounds": [
                {
                    "round": r.round,
                    "provenance": r.provenance,
                    "status": r.status,
                    "stage": r.stage,
                    "error_class": r.error_class,
                    "detail": r.detail,
                }
                for r in self.rounds
            ],
            "strategies": list(self.candidate.strategies),
            "protected_map": {
                str(k): v for k, v in self.candidate.protected_map.items()
            },
        }


def run_rewrite_loop(
    circuit: Aig,
    plan: HardeningPlan,
    backend,
    verifier,
    kb: KnowledgeBase | None = None,
    failure_kb: FailureKb | None = None,
    max_repairs: int = MAX_REPAIRS,
    budget: int = DEFAULT_PROMPT_BUDGET,
) -> RewriteOutcome:
    """Generate, verify, classify, record, repair; at most max_repairs + 1
    generations. verifier(circuit, candidate) must return a
    VerificationReport. Raises ExhaustedRepairRounds with the full history
    when every round fails."""
    circuit_text = write_aiger(circuit)
    kb_hits = retrieve_for_plan(kb, plan) if kb is not None else []
    failures = lookup_failures(failure_kb, plan)
    prompt = assemble_context(plan, circuit_text, kb_hits, failures, budget)
    attribution = plan.entries[0].strategy if plan.entries else "unplanned"

    history: list[RoundReport] = []
    for round_no in range(max_repairs + 1):
        try:
            candidate = backend.generate(circuit, plan, prompt)
        except (NoCodeBlock, PlanUnsupportedByMock, ClientError) as exc:
            error_class = classify_error("generation", str(exc))
            history.append(
                RoundReport(
                    round_no, getattr(backend, "name", "backend"), "fail",
                    "generation", error_class, str(exc),
                )
            )
            if failure_kb is not None:
                failure_kb.record(attribution, error_class, str(exc))
            prompt = assemble_repair_prompt(
                plan, circuit_text, "(generation produced no candidate)",
                error_class, str(exc), kb_hits,
                lookup_failures(failure_kb, plan),
            )
            continue
        report = verifier(circuit, candidate)
        if report.passed:
            history.append(
                RoundReport(
                    round_no, candidate.provenance, "pass", "reliability", None,
                    "all stages passed",
                )
            )
            return RewriteOutcome(candidate, history, report)
        failed = report.first_failure
        error_class = classify_error(failed.name, failed.detail)
        history.append(
            RoundReport(
                round_no, candidate.provenance, "fail", failed.name,
                error_class, failed.detail,
            )
        )
        if failure_kb is not None:
            failure_kb.record(attribution, error_class, failed.detail)
        prompt = assemble_repair_prompt(
            plan, circuit_text, candidate.serialized(), error_class,
            failed.detail, kb_hits, lookup_failures(failure_kb, plan),
        )
    raise ExhaustedRepairRounds(history)
