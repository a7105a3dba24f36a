"""SEU fault-injection campaigns, AVF computation, and threshold labeling.

An injection complements one latch's stored value at the start of one cycle,
before combinational evaluation.  A latch's AVF is the fraction of its
injections whose primary-output trace differs from the fault-free golden run
at any observed position.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .aig import Aig
from .sim import Engine, Stimulus, Trace


class IndexOutOfRange(Exception):
    pass


class BudgetExceeded(Exception):
    pass


class EmptyDesign(Exception):
    pass


EXHAUSTIVE_BUDGET = 100_000


@dataclass(frozen=True)
class InjectionSpec:
    latch_index: int
    cycle: int


@dataclass
class LatchStats:
    index: int
    name: str | None
    n_inj: int
    n_err: int

    @property
    def avf(self) -> float:
        return self.n_err / self.n_inj


@dataclass
class CampaignResult:
    mode: str  # "sampled" or "exhaustive"
    cycles: int
    latches: list[LatchStats]
    seed: int | None = None
    per_latch: int | None = None

    @property
    def avfs(self) -> list[float]:
        return [entry.avf for entry in self.latches]

    def to_json(self) -> str:
        doc = {"mode": self.mode, "cycles": self.cycles}
        if self.mode == "sampled":
            doc["seed"] = self.seed
            doc["per_latch"] = self.per_latch
        doc["latches"] = [
            {
                "index": e.index,
                "name": e.name,
                "n_inj": e.n_inj,
                "n_err": e.n_err,
                "avf": e.avf,
            }
            for e in self.latches
        ]
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CampaignResult":
        doc = json.loads(text)
        latches = [
            LatchStats(e["index"], e.get("name"), e["n_inj"], e["n_err"])
            for e in doc["latches"]
        ]
        return cls(doc["mode"], doc["cycles"], latches, doc.get("seed"), doc.get("per_latch"))


def _check_spec(aig: Aig, stim: Stimulus, spec: InjectionSpec) -> None:
    if not 0 <= spec.latch_index < aig.num_latches:
        raise IndexOutOfRange(f"latch index {spec.latch_index} out of range")
    if not 0 <= spec.cycle < stim.cycles:
        raise IndexOutOfRange(f"cycle {spec.cycle} outside stimulus of {stim.cycles}")


def _diff_word(golden, faulty, observed, width):
    mask = (1 << width) - 1
    diff = 0
    for g_row, f_row in zip(golden, faulty):
        for j in observed:
            diff |= f_row[j] ^ (g_row[j] and mask)
    return diff


def run_injection(
    aig: Aig,
    stim: Stimulus,
    spec: InjectionSpec,
    observed_outputs: list[int] | None = None,
) -> tuple[Trace, bool]:
    """Single injection; returns the faulty trace and whether it differs
    from the golden trace on the observed outputs (all outputs by default)."""
    _check_spec(aig, stim, spec)
    engine = Engine(aig)
    golden, _ = engine.run(stim.vectors)
    faulty, _ = engine.run(
        stim.vectors, flips={spec.cycle: {spec.latch_index: 1}}
    )
    observed = range(aig.num_outputs) if observed_outputs is None else observed_outputs
    differs = _diff_word(golden, faulty, observed, 1) != 0
    return Trace(stim.cycles, faulty), differs


def _campaign(
    aig: Aig,
    stim: Stimulus,
    cycles_per_latch,  # callable latch position -> sequence of cycles
    observed_outputs: list[int] | None,
) -> list[LatchStats]:
    engine = Engine(aig)
    golden, _ = engine.run(stim.vectors)
    observed = (
        list(range(aig.num_outputs)) if observed_outputs is None else observed_outputs
    )
    stats: list[LatchStats] = []
    for pos in range(aig.num_latches):
        cycles = cycles_per_latch(pos)
        width = len(cycles)
        flips: dict[int, dict[int, int]] = {}
        for run, cycle in enumerate(cycles):
            entry = flips.setdefault(int(cycle), {})
            entry[pos] = entry.get(pos, 0) | (1 << run)
        faulty, _ = engine.run(stim.vectors, width=width, flips=flips)
        diff = _diff_word(golden, faulty, observed, width)
        stats.append(
            LatchStats(pos, aig.latch_name(pos), width, bin(diff).count("1"))
        )
    return stats


def run_campaign(
    aig: Aig,
    stim: Stimulus,
    per_latch: int = 20,
    seed: int = 0,
    observed_outputs: list[int] | None = None,
) -> CampaignResult:
    """Sampled campaign: per latch, `per_latch` cycles drawn uniformly with
    replacement from a generator seeded by (seed, latch index), so results
    are independent of execution order."""
    if per_latch < 1:
        raise ValueError("per_latch must be at least 1")

    def cycles_for(pos: int):
        rng = np.random.default_rng([seed, pos])
        return rng.integers(0, stim.cycles, size=per_latch)

    stats = _campaign(aig, stim, cycles_for, observed_outputs)
    return CampaignResult("sampled", stim.cycles, stats, seed=seed, per_latch=per_latch)


def run_exhaustive(
    aig: Aig,
    stim: Stimulus,
    budget: int = EXHAUSTIVE_BUDGET,
    observed_outputs: list[int] | None = None,
) -> CampaignResult:
    """One injection per (latch, cycle) pair; deterministic and seed-free."""
    total = aig.num_latches * stim.cycles
    if total > budget:
        raise BudgetExceeded(f"{total} injections exceed budget {budget}")
    stats = _campaign(
        aig, stim, lambda pos: range(stim.cycles), observed_outputs
    )
    return CampaignResult("exhaustive", stim.cycles, stats)


@dataclass
class VulnLabelSet:
    labels: list[int]
    threshold_value: float
    threshold_mode: str
    avfs: list[float]
    names: list[str | None]

    def to_json(self) -> str:
        return json.dumps(
            {
                "mode": self.threshold_mode,
                "threshold_value": self.threshold_value,
                "latches": [
                    {"index": i, "name": self.names[i], "avf": self.avfs[i], "label": lab}
                    for i, lab in enumerate(self.labels)
                ],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "VulnLabelSet":
        doc = json.loads(text)
        latches = doc["latches"]
        return cls(
            [e["label"] for e in latches],
            doc["threshold_value"],
            doc["mode"],
            [e["avf"] for e in latches],
            [e.get("name") for e in latches],
        )


def derive_labels(
    result: CampaignResult, mode: str = "quantile", value: float = 0.5
) -> VulnLabelSet:
    """Label latches vulnerable (1) when avf is strictly above the threshold.

    mode "absolute" uses `value` directly; mode "quantile" takes the
    nearest-rank q-quantile of the AVF distribution as the threshold.
    """
    if not result.latches:
        raise EmptyDesign("no latches to label")
    avfs = result.avfs
    if mode == "absolute":
        threshold = float(value)
    elif mode == "quantile":
        if not 0 <= value <= 1:
            raise ValueError("quantile must lie in [0, 1]")
        ordered = sorted(avfs)
        rank = min(max(math.ceil(value * len(ordered)), 1), len(ordered))
        threshold = ordered[rank - 1]
    else:
        raise ValueError(f"unknown labeling mode {mode!r}")
    labels = [1 if avf > threshold else 0 for avf in avfs]
    return VulnLabelSet(
        labels,
        threshold,
        f"{mode}({value:g})",
        avfs,
        [entry.name for entry in result.latches],
    )
