"""Command-line pipeline surface.

One subcommand per stage (parse through verify), a closed-loop ``eval`` that
chains predict, plan, rewrite, and verify, and ``passk`` for the sampling
metric.  Artifacts are JSON documents; ``--format text`` renders summary
tables whose trade-off columns are Area(nodes), AO(%), and Err(%), and
``--figures`` drops charts next to the tabular output.

Exit codes: 0 success, 1 pipeline failure (machine-readable JSON on stderr),
2 usage error.  Settings come from ``ftp.toml``; flags override the file and
the FTP_LLM_* environment variables override both.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .aig import Aig, AigError, ParseError, parse_aiger, validate, write_aiger
from .config import Config, ConfigError, resolve_config
from .faultlab import (
    BudgetExceeded,
    CampaignResult,
    EmptyDesign,
    derive_labels,
    run_campaign,
    run_exhaustive,
)
from .figures import avf_chart, render_eval_figures, training_chart
from .gnn import (
    PredictionReport,
    TrainConfig,
    classification_metrics,
    init_model,
    load_model,
    predict_and_annotate,
    save_model,
    train,
)
from .graph import build_graph, group_registers
from .kb import FailureKb, KbError, load_kb
from .llm import ChatClient, ClientError
from .plan import (
    ParseFailure,
    SchemaError,
    analyze_with_llm,
    classify_assets_heuristic,
    plan_from_json,
    plan_to_json,
    propose_from_assets,
    validate_plan,
)
from .rewrite import (
    ChatBackend,
    ExhaustedRepairRounds,
    MockBackend,
    PlanUnsupportedByMock,
    run_rewrite_loop,
)
from .rewrite import BudgetExceeded as PromptBudgetExceeded
from .sim import (
    InputWidthMismatch,
    extract_features,
    parse_stimulus,
    random_stimulus,
    simulate,
)
from .verify import StageResult, VerificationReport, make_verifier, run_pipeline

DEFAULT_CYCLES = 32


class DomainError(Exception):
    pass


# --- pass@k -----------------------------------------------------------------------


def pass_at_k(n: int, c: int, k: int) -> Fraction:
    """Probability that at least one of k draws from n candidates (c correct)
    passes, computed exactly: 1 - prod_{i=n-c+1..n} (1 - k/i)."""
    if not 0 <= c <= n:
        raise DomainError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not 1 <= k <= n:
        raise DomainError(f"need 1 <= k <= n, got k={k}, n={n}")
    if n - c < k:
        return Fraction(1)
    miss = Fraction(1)
    for i in range(n - c + 1, n + 1):
        miss *= Fraction(i - k, i)
    return 1 - miss


# --- reports ----------------------------------------------------------------------


@dataclass
class EvalReport:
    pass_at: dict[int, float]
    metrics: dict[str, float]
    error_rate_before: float
    error_rate_after: float
    overhead: float | None
    rows: list[dict]

    def __post_init__(self):
        ordered = sorted(self.pass_at)
        values = [self.pass_at[k] for k in ordered]
        if any(not 0 <= v <= 1 for v in values):
            raise ValueError("pass@k values must lie in [0, 1]")
        if any(a > b + 1e-12 for a, b in zip(values, values[1:])):
            raise ValueError("pass@k must be non-decreasing in k")

    def to_json(self) -> str:
        return json.dumps(
            {
                "pass_at": {str(k): v for k, v in sorted(self.pass_at.items())},
                "metrics": self.metrics,
                "error_rate_before": self.error_rate_before,
                "error_rate_after": self.error_rate_after,
                "overhead": self.overhead,
                "rows": self.rows,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        return cls(
            {int(k): v for k, v in doc["pass_at"].items()},
            doc["metrics"],
            doc["error_rate_before"],
            doc["error_rate_after"],
            doc["overhead"],
            doc["rows"],
        )


def _fmt(value, digits: int = 2) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def _render_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]

    def line(cells):
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()

    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(headers), sep, *(line(r) for r in rows)])


TRADEOFF_HEADERS = ["Design", "Area(nodes)", "AO(%)", "Err(%)"]


def emit_report(report, format: str = "json") -> str:
    if format == "json":
        return report.to_json()
    if format != "text":
        raise ValueError(f"unknown report format {format!r}")

    if isinstance(report, EvalReport):
        rows = [
            [
                r["name"],
                str(r["area_nodes"]) if r.get("area_nodes") is not None else "-",
                _fmt(r.get("overhead_pct")),
                _fmt(r.get("error_pct")),
            ]
            for r in report.rows
        ]
        lines = [_render_table(TRADEOFF_HEADERS, rows), ""]
        lines.append(
            ", ".join(f"pass@{k} = {v:.4f}" for k, v in sorted(report.pass_at.items()))
        )
        m = report.metrics
        lines.append(
            "precision {p} recall {r} f1 {f} accuracy {a}".format(
                p=_fmt(m.get("precision")),
                r=_fmt(m.get("recall")),
                f=_fmt(m.get("f1")),
                a=_fmt(m.get("accuracy")),
            )
        )
        lines.append(
            f"error rate {_fmt(report.error_rate_before)}% -> "
            f"{_fmt(report.error_rate_after)}%"
        )
        return "\n".join(lines)

    if isinstance(report, VerificationReport):
        stage_rows = [[s.name, s.status, s.detail] for s in report.stages]
        overhead = report.overhead.percent if report.overhead else None
        summary = [["candidate", "-", _fmt(overhead), _fmt(report.error_rate_after)]]
        return "\n".join(
            [
                _render_table(["Stage", "Status", "Detail"], stage_rows),
                "",
                _render_table(TRADEOFF_HEADERS, summary),
            ]
        )

    if isinstance(report, CampaignResult):
        latch_rows = [
            [str(s.index), s.name or f"latch_{s.index}", str(s.n_inj), str(s.n_err), f"{s.avf:.4f}"]
            for s in report.latches
        ]
        total_inj = sum(s.n_inj for s in report.latches)
        total_err = sum(s.n_err for s in report.latches)
        err_pct = 100.0 * total_err / total_inj if total_inj else 0.0
        return "\n".join(
            [
                _render_table(["Latch", "Name", "Inj", "Err", "AVF"], latch_rows),
                "",
                _render_table(TRADEOFF_HEADERS, [["all", "-", "-", _fmt(err_pct)]]),
            ]
        )

    raise ValueError(f"unsupported report type {type(report).__name__}")


# --- shared helpers ---------------------------------------------------------------


def _load_circuit(path) -> Aig:
    aig = parse_aiger(Path(path).read_text(encoding="utf-8"))
    validate(aig)
    return aig


def _node_count(aig: Aig) -> int:
    return 1 + aig.num_inputs + aig.num_latches + aig.num_ands + aig.num_outputs


def _stimulus(args, aig: Aig, config: Config):
    if getattr(args, "stimulus", None):
        stim = parse_stimulus(Path(args.stimulus).read_text(encoding="utf-8"))
        if stim.input_count != aig.num_inputs:
            raise InputWidthMismatch(
                f"stimulus drives {stim.input_count} inputs, circuit has {aig.num_inputs}"
            )
        return stim
    seed = args.seed if args.seed is not None else config.faultlab.seed
    return random_stimulus(aig.num_inputs, args.cycles, seed)


def _run_campaign(args, aig: Aig, stim, config: Config) -> CampaignResult:
    """Exhaustive when affordable (or demanded), sampled otherwise."""
    budget = config.faultlab.exhaustive_budget
    total = aig.num_latches * stim.cycles
    if getattr(args, "exhaustive", False) or total <= budget:
        return run_exhaustive(aig, stim, budget)
    per_latch = (
        args.per_latch if getattr(args, "per_latch", None) is not None
        else config.faultlab.per_latch
    )
    seed = args.seed if args.seed is not None else config.faultlab.seed
    return run_campaign(aig, stim, per_latch=per_latch, seed=seed)


def _emit(text: str, output) -> None:
    if output:
        Path(output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _predict(model, aig: Aig, stim, circuit_id: str) -> PredictionReport:
    graph = build_graph(aig)
    features = extract_features(aig, stim)
    if features.f != model.hyper.F:
        raise ValueError(
            f"feature width {features.f} does not match model input {model.hyper.F}"
        )
    return predict_and_annotate(
        model, graph, features, group_registers(aig), circuit_id=circuit_id
    )


def _make_backend(name: str, config: Config):
    if name == "mock":
        return MockBackend()
    if name == "chat":
        return ChatBackend(ChatClient(config.llm.settings().with_env()))
    raise ValueError(f"unknown backend {name!r}")


def _load_protected_map(path) -> dict[int, list[int]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return {int(k): list(v) for k, v in doc.items()}


# --- subcommands ------------------------------------------------------------------


def cmd_parse(args, config: Config) -> int:
    aig = _load_circuit(args.circuit)
    doc = {
        "max_var": aig.max_var,
        "inputs": aig.num_inputs,
        "latches": aig.num_latches,
        "outputs": aig.num_outputs,
        "ands": aig.num_ands,
        "nodes": _node_count(aig),
        "input_names": [aig.input_name(i) for i in range(aig.num_inputs)],
        "latch_names": [aig.latch_name(i) for i in range(aig.num_latches)],
        "output_names": [aig.output_name(i) for i in range(aig.num_outputs)],
    }
    _emit(json.dumps(doc, indent=2), args.output)
    return 0


def cmd_simulate(args, config: Config) -> int:
    aig = _load_circuit(args.circuit)
    stim = _stimulus(args, aig, config)
    trace = simulate(aig, stim)
    outputs = [
        {
            "name": aig.output_name(pos) or f"o{pos}",
            "bits": [trace.outputs[t][pos] for t in range(trace.cycles)],
        }
        for pos in range(aig.num_outputs)
    ]
    _emit(json.dumps({"cycles": trace.cycles, "outputs": outputs}, indent=2), args.output)
    return 0


def cmd_features(args, config: Config) -> int:
    aig = _load_circuit(args.circuit)
    stim = _stimulus(args, aig, config)
    matrix = extract_features(aig, stim)
    doc = {
        "layout": list(matrix.layout),
        "nodes": matrix.n,
        "values": matrix.values.tolist(),
    }
    _emit(json.dumps(doc, indent=2), args.output)
    return 0


def cmd_inject(args, config: Config) -> int:
    aig = _load_circuit(args.circuit)
    stim = _stimulus(args, aig, config)
    result = _run_campaign(args, aig, stim, config)
    _emit(emit_report(result, args.format), args.output)
    if args.figures:
        directory = Path(args.figures)
        directory.mkdir(parents=True, exist_ok=True)
        avf_chart(result, directory / "avf.png")
    return 0


def cmd_label(args, config: Config) -> int:
    aig = _load_circuit(args.circuit)
    stim = _stimulus(args, aig, config)
    result = _run_campaign(args, aig, stim, config)
    labels = derive_labels(result, mode=args.mode, value=args.value)
    _emit(labels.to_json(), args.output)
    return 0


def cmd_train(args, config: Config) -> int:
    dataset = []
    for path in args.circuits:
        aig = _load_circuit(path)
        stim = _stimulus(args, aig, config)
        result = _run_campaign(args, aig, stim, config)
        labels = derive_labels(result, mode=args.mode, value=args.value)
        dataset.append((build_graph(aig), extract_features(aig, stim), labels.labels))

    feature_dim = dataset[0][1].f
    model = init_model(
        feature_dim, config.gnn.hidden, config.gnn.dropout, config.gnn.seed
    )
    epochs = args.epochs if args.epochs is not None else config.gnn.epochs
    cfg = TrainConfig(
        epochs=epochs,
        learning_rate=config.gnn.learning_rate,
        split_seed=config.gnn.split_seed,
    )
    model, history = train(model, dataset, cfg)
    model_path = args.model if args.model else config.paths.model_file
    save_model(model, model_path)
    doc = {
        "model": str(model_path),
        "epochs": epochs,
        "final_loss": history[-1]["loss"],
        "final_val_accuracy": history[-1]["val_accuracy"],
        "history": history,
    }
    _emit(json.dumps(doc, indent=2), args.output)
    if args.figures:
        directory = Path(args.figures)
        directory.mkdir(parents=True, exist_ok=True)
        training_chart(history, directory / "training.png")
    return 0


def cmd_predict(args, config: Config) -> int:
    aig = _load_circuit(args.circuit)
    stim = _stimulus(args, aig, config)
    model = load_model(args.model if args.model else config.paths.model_file)
    report = _predict(model, aig, stim, Path(args.circuit).stem)
    _emit(report.to_json(), args.output)
    return 0


def cmd_plan(args, config: Config) -> int:
    aig = _load_circuit(args.circuit)
    reg_map = group_registers(aig)
    if args.predictions:
        report = PredictionReport.from_json(
            Path(args.predictions).read_text(encoding="utf-8")
        )
    else:
        stim = _stimulus(args, aig, config)
        model = load_model(args.model if args.model else config.paths.model_file)
        report = _predict(model, aig, stim, Path(args.circuit).stem)
    if args.llm:
        client = ChatClient(config.llm.settings().with_env())
        proposals = analyze_with_llm(aig, reg_map, report, client)
    else:
        proposals = propose_from_assets(
            classify_assets_heuristic(aig, reg_map, report)
        )
    plan = validate_plan(proposals, aig, reg_map, circuit_id=Path(args.circuit).stem)
    _emit(plan_to_json(plan), args.output)
    return 0


def cmd_rewrite(args, config: Config) -> int:
    aig = _load_circuit(args.circuit)
    plan = plan_from_json(Path(args.plan).read_text(encoding="utf-8"))
    stim = _stimulus(args, aig, config)
    backend = _make_backend(args.backend, config)
    kb = load_kb(config.kb_dir(), dims=config.rag.dims)
    failure_kb = FailureKb(config.paths.failure_kb)
    verifier = make_verifier(stim, config.adapters or None)
    try:
        outcome = run_rewrite_loop(
            aig, plan, backend, verifier,
            kb=kb, failure_kb=failure_kb, max_repairs=args.max_repairs,
        )
    except ExhaustedRepairRounds as exc:
        doc = {
            "error": "ExhaustedRepairRounds",
            "detail": str(exc),
            "rounds": [
                {
                    "round": r.round,
                    "stage": r.stage,
                    "error_class": r.error_class,
                    "detail": r.detail,
                }
                for r in exc.history
            ],
        }
        print(json.dumps(doc, indent=2), file=sys.stderr)
        return 1
    if args.hardened:
        candidate = outcome.candidate
        payload = (
            write_aiger(candidate.aig) if candidate.kind == "structural"
            else candidate.text
        )
        Path(args.hardened).write_text(payload, encoding="utf-8")
    _emit(json.dumps(outcome.to_json_dict(), indent=2), args.output)
    return 0


def cmd_verify(args, config: Config) -> int:
    original = _load_circuit(args.original)
    candidate_path = Path(args.candidate)
    raw = candidate_path.read_text(encoding="utf-8")
    candidate: Aig | str
    if candidate_path.suffix in {".aag", ".aig"}:
        try:
            candidate = parse_aiger(raw)
        except ParseError as exc:
            report = VerificationReport(
                stages=[StageResult("structure", "fail", f"parse error: {exc}")]
            )
            _emit(emit_report(report, args.format), args.output)
            return 1
    else:
        candidate = raw
    protected = _load_protected_map(args.protected_map) if args.protected_map else {}
    stim = _stimulus(args, original, config)
    report = run_pipeline(original, candidate, stim, protected, config.adapters or None)
    _emit(emit_report(report, args.format), args.output)
    return 0 if report.passed else 1


def cmd_passk(args, config: Config) -> int:
    value = pass_at_k(args.n, args.c, args.k)
    print(f"{float(value):.4f}")
    return 0


def _train_for_eval(entry, args, config: Config):
    """Self-supervised per-design fit: the injection-derived labels of the
    design under evaluation train its own predictor, which keeps every label
    class represented on the training side."""
    features = entry["features"]
    model = init_model(
        features.f, config.gnn.hidden, config.gnn.dropout, config.gnn.seed
    )
    epochs = args.epochs if args.epochs is not None else config.gnn.epochs
    cfg = TrainConfig(
        epochs=epochs,
        learning_rate=config.gnn.learning_rate,
        split_seed=config.gnn.split_seed,
    )
    dataset = [(entry["graph"], features, entry["labels"].labels)]
    return train(model, dataset, cfg)


def cmd_eval(args, config: Config) -> int:
    designs = []
    for path in args.circuits:
        aig = _load_circuit(path)
        stim = _stimulus(args, aig, config)
        baseline = _run_campaign(args, aig, stim, config)
        labels = derive_labels(baseline, mode=args.mode, value=args.value)
        designs.append(
            {
                "name": Path(path).stem,
                "aig": aig,
                "stim": stim,
                "graph": build_graph(aig),
                "features": extract_features(aig, stim),
                "baseline": baseline,
                "labels": labels,
                "reg_map": group_registers(aig),
            }
        )

    shared_model = load_model(args.model) if args.model else None
    histories: dict[str, list[dict]] = {}

    kb = load_kb(config.kb_dir(), dims=config.rag.dims)
    failure_kb = FailureKb(config.paths.failure_kb)
    n = args.samples
    ks = [k for k in (1, 3) if k <= n]

    rows = []
    all_preds: list[int] = []
    all_labels: list[int] = []
    pass_sums = {k: Fraction(0) for k in ks}
    before_rates = []
    after_rates = []
    overheads = []

    for entry in designs:
        aig = entry["aig"]
        if shared_model is not None:
            model = shared_model
        else:
            model, histories[entry["name"]] = _train_for_eval(entry, args, config)
        prediction = predict_and_annotate(
            model, entry["graph"], entry["features"], entry["reg_map"],
            circuit_id=entry["name"],
        )
        all_preds.extend(prediction.predictions)
        all_labels.extend(entry["labels"].labels)
        proposals = propose_from_assets(
            classify_assets_heuristic(aig, entry["reg_map"], prediction)
        )
        plan = validate_plan(
            proposals, aig, entry["reg_map"], circuit_id=entry["name"]
        )
        verifier = make_verifier(entry["stim"], config.adapters or None)

        wins = 0
        passing = None
        for _ in range(n):
            backend = _make_backend(args.backend, config)
            try:
                outcome = run_rewrite_loop(
                    aig, plan, backend, verifier, kb=kb, failure_kb=failure_kb
                )
            except ExhaustedRepairRounds:
                continue
            wins += 1
            passing = outcome

        inj = sum(s.n_inj for s in entry["baseline"].latches)
        err = sum(s.n_err for s in entry["baseline"].latches)
        before = 100.0 * err / inj if inj else 0.0
        before_rates.append(before)
        if passing is not None:
            after = passing.verification.error_rate_after
            overhead = (
                passing.verification.overhead.percent
                if passing.verification.overhead else None
            )
            area = _node_count(passing.candidate.aig) if passing.candidate.aig else None
        else:
            after, overhead, area = None, None, None
        if after is not None:
            after_rates.append(after)
        if overhead is not None:
            overheads.append(overhead)
        for k in ks:
            pass_sums[k] += pass_at_k(n, wins, k)
        rows.append(
            {
                "name": entry["name"],
                "area_nodes": area,
                "overhead_pct": overhead,
                "error_pct": after,
                "error_before_pct": before,
                "samples": n,
                "passes": wins,
            }
        )

    metrics = classification_metrics(all_preds, all_labels)
    report = EvalReport(
        pass_at={k: float(pass_sums[k] / len(designs)) for k in ks},
        metrics={
            "precision": metrics.precision,
            "recall": metrics.recall,
            "f1": metrics.f1,
            "accuracy": metrics.accuracy,
        },
        error_rate_before=sum(before_rates) / len(before_rates),
        error_rate_after=(
            sum(after_rates) / len(after_rates) if after_rates else None
        ),
        overhead=sum(overheads) / len(overheads) if overheads else None,
        rows=rows,
    )
    _emit(emit_report(report, args.format), args.output)
    if args.figures:
        directory = Path(args.figures)
        plotted = [r for r in rows if r["overhead_pct"] is not None]
        render_eval_figures(plotted, directory)
        for name, history in histories.items():
            training_chart(history, directory / f"training_{name}.png")
    return 0


# --- argument wiring --------------------------------------------------------------


def _add_output(sub):
    sub.add_argument("-o", "--output", help="write the artifact here instead of stdout")


def _add_stim_flags(sub):
    sub.add_argument("--cycles", type=int, default=DEFAULT_CYCLES)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--stimulus", help="JSON stimulus file instead of random vectors")


def _add_campaign_flags(sub):
    sub.add_argument("--per-latch", dest="per_latch", type=int, default=None)
    sub.add_argument(
        "--exhaustive", action="store_true",
        help="require one injection per (latch, cycle) pair",
    )


def _add_label_flags(sub):
    sub.add_argument("--mode", choices=["quantile", "absolute"], default="quantile")
    sub.add_argument("--value", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftpipe",
        description="selective soft-error hardening pipeline for AIGER circuits",
    )
    parser.add_argument("--config", default=None, help="TOML config file (default: ftp.toml)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse and validate a circuit")
    p.add_argument("circuit")
    _add_output(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("simulate", help="fault-free simulation trace")
    p.add_argument("circuit")
    _add_stim_flags(p)
    _add_output(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("features", help="static and dynamic node features")
    p.add_argument("circuit")
    _add_stim_flags(p)
    _add_output(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("inject", help="fault-injection campaign")
    p.add_argument("circuit")
    _add_stim_flags(p)
    _add_campaign_flags(p)
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.add_argument("--figures", help="directory for rendered charts")
    _add_output(p)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("label", help="vulnerability labels from a campaign")
    p.add_argument("circuit")
    _add_stim_flags(p)
    _add_campaign_flags(p)
    _add_label_flags(p)
    _add_output(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train the vulnerability classifier")
    p.add_argument("circuits", nargs="+")
    _add_stim_flags(p)
    _add_campaign_flags(p)
    _add_label_flags(p)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--model", help="model file to write (default from config)")
    p.add_argument("--figures", help="directory for rendered charts")
    _add_output(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="per-register vulnerability predictions")
    p.add_argument("circuit")
    _add_stim_flags(p)
    p.add_argument("--model", help="model file (default from config)")
    _add_output(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("plan", help="hardening plan from predictions")
    p.add_argument("circuit")
    _add_stim_flags(p)
    p.add_argument("--model", help="model file (default from config)")
    p.add_argument("--predictions", help="prediction report JSON instead of a model")
    p.add_argument("--llm", action="store_true", help="analyze with the chat backend")
    _add_output(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("rewrite", help="apply a plan through the repair loop")
    p.add_argument("circuit")
    p.add_argument("--plan", required=True)
    p.add_argument("--backend", choices=["mock", "chat"], default="mock")
    p.add_argument("--max-repairs", dest="max_repairs", type=int, default=3)
    p.add_argument("--hardened", help="write the hardened design here")
    _add_stim_flags(p)
    _add_output(p)
    p.set_defaults(func=cmd_rewrite)

    p = sub.add_parser("verify", help="four-stage candidate verification")
    p.add_argument("original")
    p.add_argument("candidate")
    p.add_argument("--protected-map", dest="protected_map")
    p.add_argument("--format", choices=["json", "text"], default="json")
    _add_stim_flags(p)
    _add_output(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", help="closed loop: predict, plan, rewrite, verify")
    p.add_argument("circuits", nargs="+")
    _add_stim_flags(p)
    _add_campaign_flags(p)
    _add_label_flags(p)
    p.add_argument("--backend", choices=["mock", "chat"], default="mock")
    p.add_argument("--model", help="reuse a trained model instead of training")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.add_argument("--figures", help="directory for rendered charts")
    _add_output(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("passk", help="pass@k from sample counts")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--c", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_passk)

    return parser


_PIPELINE_ERRORS = (
    AigError,
    BudgetExceeded,
    EmptyDesign,
    ConfigError,
    SchemaError,
    ParseFailure,
    ClientError,
    KbError,
    InputWidthMismatch,
    PlanUnsupportedByMock,
    PromptBudgetExceeded,
    OSError,
    ValueError,
    json.JSONDecodeError,
)


def run_command(argv: list[str], config: Config | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if config is None:
            config = resolve_config(args.config)
        return args.func(args, config)
    except DomainError as exc:
        print(f"ftpipe {args.command}: {exc}", file=sys.stderr)
        return 2
    except _PIPELINE_ERRORS as exc:
        doc = {"error": type(exc).__name__, "detail": str(exc)}
        print(json.dumps(doc), file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    return run_command(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
