"""Four-stage candidate verification with short-circuiting.

Stage order is fixed: structure (re-serialize, re-parse, invariants),
interface (inputs identical, original outputs preserved as a prefix, added
outputs carry an _err suffix), function (fault-free co-simulation against the
golden trace), reliability (exhaustive injection campaigns on both circuits).
Textual candidates can only be checked through configured external tool
adapters; without one they fail with a ConfigurationMissing detail.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .aig import (
    Aig,
    CombinationalCycle,
    DanglingLiteral,
    MultiDriver,
    ParseError,
    parse_aiger,
    validate,
    write_aiger,
)
from .faultlab import CampaignResult, run_exhaustive
from .harden import OverheadRecord, measure_overhead
from .sim import Stimulus, simulate

STAGES = ("structure", "interface", "function", "reliability")


class ConfigurationMissing(Exception):
    pass


@dataclass
class StageResult:
    name: str
    status: str  # "pass" | "fail"
    detail: str

    @property
    def ok(self) -> bool:
        return self.status == "pass"


@dataclass
class VerificationReport:
    stages: list[StageResult] = field(default_factory=list)
    error_rate_before: float | None = None
    error_rate_after: float | None = None
    overhead: OverheadRecord | None = None

    @property
    def passed(self) -> bool:
        return len(self.stages) == len(STAGES) and all(s.ok for s in self.stages)

    @property
    def first_failure(self) -> StageResult | None:
        for stage in self.stages:
            if not stage.ok:
                return stage
        return None

    def to_json(self) -> str:
        payload = {
            "stages": [
                {"stage": s.name, "status": s.status, "detail": s.detail}
                for s in self.stages
            ],
            "error_rate_before": self.error_rate_before,
            "error_rate_after": self.error_rate_after,
        }
        if self.overhead is not None:
            payload["overhead"] = {
                "d_latches": self.overhead.d_latches,
                "d_ands": self.overhead.d_ands,
                "d_outputs": self.overhead.d_outputs,
                "area_overhead": self.overhead.area_overhead,
            }
        return json.dumps(payload, indent=2)


# --- external tool adapters ---------------------------------------------------


@dataclass
class Adapter:
    command: str  # template with a {file} placeholder
    timeout_s: float = 30.0


@dataclass
class AdapterResult:
    timed_out: bool
    returncode: int | None
    output: str

    @property
    def ok(self) -> bool:
        return not self.timed_out and self.returncode == 0


def external_adapter(adapter: Adapter, payload: str, suffix: str = ".v") -> AdapterResult:
    """Write the candidate to a temp file, run the command template on it."""
    with tempfile.NamedTemporaryFile(
        "w", suffix=suffix, delete=False
    ) as handle:
        handle.write(payload)
        path = handle.name
    try:
        argv = [tok.replace("{file}", path) for tok in shlex.split(adapter.command)]
        try:
            proc = subprocess.run(
                argv,
                capture_output=True,
                text=True,
                timeout=adapter.timeout_s,
            )
        except subprocess.TimeoutExpired:
            return AdapterResult(True, None, f"tool timed out after {adapter.timeout_s}s")
        except OSError as exc:
            return AdapterResult(False, None, f"spawn failure: {exc}")
        return AdapterResult(False, proc.returncode, proc.stdout + proc.stderr)
    finally:
        Path(path).unlink(missing_ok=True)


def _adapter_stage(
    stage: str, key: str, adapters: dict[str, Adapter] | None, text: str
) -> StageResult:
    adapter = (adapters or {}).get(key)
    if adapter is None:
        return StageResult(
            stage,
            "fail",
            f"ConfigurationMissing: no {key} adapter configured for textual candidates",
        )
    result = external_adapter(adapter, text)
    if result.timed_out:
        return StageResult(stage, "fail", result.output)
    if result.returncode != 0:
        return StageResult(
            stage, "fail", f"adapter exited {result.returncode}: {result.output.strip()}"
        )
    return StageResult(stage, "pass", f"{key} adapter passed")


# --- stages ----------------------------------------------------------------------


def check_structure(candidate: Aig | str, adapters: dict[str, Adapter] | None = None) -> StageResult:
    if isinstance(candidate, str):
        return _adapter_stage("structure", "syntax", adapters, candidate)
    try:
        reparsed = parse_aiger(write_aiger(candidate))
        validate(reparsed)
    except ParseError as exc:
        return StageResult("structure", "fail", f"parse error: {exc}")
    except (MultiDriver, DanglingLiteral, CombinationalCycle) as exc:
        return StageResult("structure", "fail", str(exc))
    return StageResult("structure", "pass", "re-serialized, re-parsed, invariants hold")


def check_interface(original: Aig, candidate: Aig) -> StageResult:
    if candidate.num_inputs != original.num_inputs:
        return StageResult(
            "interface",
            "fail",
            f"interface mismatch: {candidate.num_inputs} inputs, expected {original.num_inputs}",
        )
    for pos in range(original.num_inputs):
        if original.input_name(pos) != candidate.input_name(pos):
            return StageResult(
                "interface",
                "fail",
                f"interface mismatch: input {pos} named "
                f"{candidate.input_name(pos)!r}, expected {original.input_name(pos)!r}",
            )
    if candidate.num_outputs < original.num_outputs:
        return StageResult(
            "interface",
            "fail",
            f"interface mismatch: output count dropped to {candidate.num_outputs} "
            f"from {original.num_outputs}",
        )
    for pos in range(original.num_outputs):
        if original.output_name(pos) != candidate.output_name(pos):
            return StageResult(
                "interface",
                "fail",
                f"interface mismatch: output {pos} named "
                f"{candidate.output_name(pos)!r}, expected {original.output_name(pos)!r}",
            )
    for pos in range(original.num_outputs, candidate.num_outputs):
        name = candidate.output_name(pos)
        if name is None or not name.endswith("_err"):
            return StageResult(
                "interface",
                "fail",
                f"interface mismatch: added output {pos} ({name!r}) must carry an _err suffix",
            )
    return StageResult("interface", "pass", "inputs identical, outputs preserved as prefix")


def check_function(original: Aig, candidate: Aig, stim: Stimulus) -> StageResult:
    golden = simulate(original, stim).outputs
    got = simulate(candidate, stim).outputs
    width = original.num_outputs
    for cycle, (want_row, got_row) in enumerate(zip(golden, got)):
        if want_row != got_row[:width]:
            return StageResult(
                "function",
                "fail",
                f"functional mismatch at cycle {cycle}: expected {want_row}, "
                f"got {got_row[:width]}",
            )
    return StageResult("function", "pass", f"traces identical over {stim.cycles} cycles")


def aggregate_error_rate(result: CampaignResult) -> float:
    """Percentage of injections whose trace differs from golden."""
    total_inj = sum(s.n_inj for s in result.latches)
    total_err = sum(s.n_err for s in result.latches)
    return 100.0 * total_err / total_inj if total_inj else 0.0


def check_reliability(
    original: Aig,
    candidate: Aig,
    stim: Stimulus,
    protected_map: dict[int, list[int]],
) -> tuple[StageResult, float, float]:
    before = aggregate_error_rate(run_exhaustive(original, stim))
    campaign = run_exhaustive(
        candidate, stim, observed_outputs=list(range(original.num_outputs))
    )
    after = aggregate_error_rate(campaign)
    protected = {idx for targets in protected_map.values() for idx in targets}
    for stats in campaign.latches:
        if stats.index in protected and stats.n_err > 0:
            return (
                StageResult(
                    "reliability",
                    "fail",
                    f"reliability regression: protected latch {stats.index} "
                    f"({stats.name}) let {stats.n_err} of {stats.n_inj} injections through",
                ),
                before,
                after,
            )
    if after > before:
        return (
            StageResult(
                "reliability",
                "fail",
                f"reliability regression: error rate rose from {before:.2f}% to {after:.2f}%",
            ),
            before,
            after,
        )
    return (
        StageResult(
            "reliability", "pass", f"error rate {before:.2f}% -> {after:.2f}%"
        ),
        before,
        after,
    )


def make_verifier(stim: Stimulus, adapters: dict[str, Adapter] | None = None):
    """Adapt run_pipeline to the rewrite loop's verifier(original, candidate)
    shape; candidates carry their kind, payload, and protected map."""

    def verifier(original: Aig, candidate) -> VerificationReport:
        if getattr(candidate, "kind", "structural") == "structural":
            payload = candidate.aig
        else:
            payload = candidate.text
        return run_pipeline(
            original, payload, stim, getattr(candidate, "protected_map", {}), adapters
        )

    return verifier


def run_pipeline(
    original: Aig,
    candidate: Aig | str,
    stim: Stimulus,
    protected_map: dict[int, list[int]] | None = None,
    adapters: dict[str, Adapter] | None = None,
) -> VerificationReport:
    """Stages in fixed order with short-circuit; the report always comes back."""
    report = VerificationReport()
    stage = check_structure(candidate, adapters)
    report.stages.append(stage)
    if not stage.ok:
        return report
    if isinstance(candidate, str):
        # textual path: remaining stages each need their own adapter
        for name in STAGES[1:]:
            stage = _adapter_stage(name, name, adapters, candidate)
            report.stages.append(stage)
            if not stage.ok:
                return report
        return report
    report.overhead = measure_overhead(original, candidate)
    stage = check_interface(original, candidate)
    report.stages.append(stage)
    if not stage.ok:
        return report
    stage = check_function(original, candidate, stim)
    report.stages.append(stage)
    if not stage.ok:
        return report
    stage, before, after = check_reliability(
        original, candidate, stim, protected_map or {}
    )
    report.error_rate_before = before
    report.error_rate_after = after
    report.stages.append(stage)
    return report
