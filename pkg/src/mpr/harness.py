"""Dataset-level evaluation.

Three modes: zero_shot (no retrieval hint), in_context (the full pipeline),
and knn_baseline (majority vote alone, no generation).  Accuracy is exact
match between the predicted canonical label and the gold normalized answer.
All counting is integer; division happens once at reporting time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .datasets import INDEX_MAGIC, LabelSet, load_index, load_vqa
from .errors import ConfigError, DimensionError, GatewayUnavailable
from .gateway import MockGateway, ModelGateway, RemoteGateway
from .index import RetrievalIndex, RetrievalRecord, build_index
from .pipeline import AnswerPipeline
from .prompts import PromptConfig

MODES = ("zero_shot", "in_context", "knn_baseline")
BACKENDS = ("mock", "remote")

LABEL_SET_NOTE = "label set: union of test and retrieval gold answers"
WEIGHTING_NOTE = "overall accuracy weights every example equally across open and closed"


@dataclass(frozen=True, slots=True)
class EvalConfig:
    """One evaluation run, fully specified."""

    test_path: str
    retrieval_path: str | None = None
    k: int = 1
    mode: str = "in_context"
    backend: str = "mock"
    endpoint: str | None = None
    prompt: PromptConfig = field(default_factory=PromptConfig)
    seed: int = 0
    echo_threshold: int | None = None
    exclude_self: bool = True
    collect_traces: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.backend == "remote" and not self.endpoint:
            raise ConfigError("remote backend needs an endpoint")
        if self.mode in ("in_context", "knn_baseline"):
            if self.retrieval_path is None:
                raise ConfigError(f"mode {self.mode} needs a retrieval set")
            if self.k < 1:
                raise ConfigError(f"mode {self.mode} needs k >= 1, got {self.k}")
        if self.k < 0:
            raise ConfigError(f"k must be >= 0, got {self.k}")


@dataclass(frozen=True, slots=True)
class EvalReport:
    """Aggregate accuracy plus enough integers to audit it."""

    mode: str
    k: int
    n_total: int
    n_open: int
    n_closed: int
    n_correct: int
    n_correct_open: int
    n_correct_closed: int
    per_qtype: tuple[tuple[str, int, int], ...]
    notes: tuple[str, ...] = ()
    traces: tuple[dict, ...] = ()
    incomplete: bool = False

    @property
    def acc_overall(self) -> float:
        return self.n_correct / self.n_total if self.n_total else 0.0

    @property
    def acc_open(self) -> float:
        return self.n_correct_open / self.n_open if self.n_open else 0.0

    @property
    def acc_closed(self) -> float:
        return self.n_correct_closed / self.n_closed if self.n_closed else 0.0

    def qtype_rows(self) -> list[tuple[str, int, float]]:
        """(q_type, count, accuracy) sorted by count descending, name ascending."""
        rows = sorted(self.per_qtype, key=lambda row: (-row[1], row[0]))
        return [(name, count, correct / count if count else 0.0) for name, count, correct in rows]


def _build_gateway(cfg: EvalConfig) -> ModelGateway:
    if cfg.backend == "mock":
        return MockGateway(prompt_config=cfg.prompt, echo_threshold=cfg.echo_threshold)
    return RemoteGateway(cfg.endpoint)


def ingest(examples, gateway: ModelGateway) -> RetrievalIndex:
    """Encode every example into a retrieval record and build the index."""
    descriptor = gateway.descriptor()
    records = [
        RetrievalRecord(
            record_id=example.example_id,
            answer=example.answer,
            q_type=example.q_type,
            a_type=example.a_type,
            key=gateway.encode_pair(example.question, example.image_ref),
        )
        for example in examples
    ]
    return build_index(records, descriptor.key_dim)


def _is_index_file(path: str) -> bool:
    with open(path, "rb") as handle:
        return handle.read(4) == INDEX_MAGIC


def _load_retrieval(cfg: EvalConfig, gateway: ModelGateway):
    """Returns (index, retrieval_examples or None)."""
    if cfg.retrieval_path is None:
        return None, None
    if _is_index_file(cfg.retrieval_path):
        index = load_index(cfg.retrieval_path)
        if index.dim != gateway.descriptor().key_dim:
            raise DimensionError(
                f"index dim {index.dim} does not match backend key dim "
                f"{gateway.descriptor().key_dim}"
            )
        return index, None
    examples = load_vqa(cfg.retrieval_path, closed_vocab=None)
    if cfg.mode == "zero_shot":
        # Zero-shot touches the retrieval set only for its answer labels.
        return None, examples
    return ingest(examples, gateway), examples


def _label_set(test_examples, retrieval_examples, index: RetrievalIndex | None) -> LabelSet:
    answers = [example.answer for example in test_examples]
    if retrieval_examples is not None:
        answers.extend(example.answer for example in retrieval_examples)
    elif index is not None:
        answers.extend(record.answer for record in index.records)
    return LabelSet(answers)


def run_eval(cfg: EvalConfig) -> EvalReport:
    """Evaluate one configuration end to end."""
    test_examples = load_vqa(cfg.test_path, closed_vocab=None)
    gateway = _build_gateway(cfg)
    index, retrieval_examples = _load_retrieval(cfg, gateway)
    labels = _label_set(test_examples, retrieval_examples, index)
    pipeline = AnswerPipeline(gateway, index, labels, prompt_config=cfg.prompt)
    return _evaluate(pipeline, test_examples, cfg)


def _evaluate(pipeline: AnswerPipeline, test_examples, cfg: EvalConfig) -> EvalReport:
    n_total = n_open = n_closed = 0
    n_correct = n_correct_open = n_correct_closed = 0
    per_qtype: dict[str, list[int]] = {}
    traces: list[dict] = []
    incomplete = False
    k = 0 if cfg.mode == "zero_shot" else cfg.k
    for example in test_examples:
        query_id = example.example_id if cfg.exclude_self else None
        try:
            if cfg.mode == "knn_baseline":
                predicted = pipeline.knn_label(
                    example.question, example.image_ref, cfg.k, query_id=query_id
                )
                trace_record = None
            else:
                trace = pipeline.answer(
                    example.question,
                    example.image_ref,
                    k,
                    q_type=example.q_type,
                    query_id=query_id,
                )
                predicted = trace.label
                trace_record = trace.to_record()
        except GatewayUnavailable:
            incomplete = True
            break
        correct = predicted == example.answer
        n_total += 1
        n_correct += int(correct)
        if example.a_type == "open":
            n_open += 1
            n_correct_open += int(correct)
        else:
            n_closed += 1
            n_correct_closed += int(correct)
        bucket = per_qtype.setdefault(example.q_type, [0, 0])
        bucket[0] += 1
        bucket[1] += int(correct)
        if cfg.collect_traces:
            record = {
                "id": example.example_id,
                "gold": example.answer,
                "predicted": predicted,
                "correct": correct,
            }
            if trace_record is not None:
                record["trace"] = trace_record
            traces.append(record)
    notes = (
        LABEL_SET_NOTE,
        WEIGHTING_NOTE,
        f"backend: {cfg.backend}",
        f"seed: {cfg.seed}",
    )
    return EvalReport(
        mode=cfg.mode,
        k=k,
        n_total=n_total,
        n_open=n_open,
        n_closed=n_closed,
        n_correct=n_correct,
        n_correct_open=n_correct_open,
        n_correct_closed=n_correct_closed,
        per_qtype=tuple((name, c[0], c[1]) for name, c in sorted(per_qtype.items())),
        notes=notes,
        traces=tuple(traces),
        incomplete=incomplete,
    )


def knn_baseline(cfg: EvalConfig) -> EvalReport:
    """Majority-vote-only evaluation of the same configuration."""
    return run_eval(replace(cfg, mode="knn_baseline"))


def _with_k(cfg: EvalConfig, k: int) -> EvalConfig:
    mode = "zero_shot" if k == 0 else (cfg.mode if cfg.mode != "zero_shot" else "in_context")
    return replace(cfg, k=k, mode=mode)


def k_sweep(cfg: EvalConfig, ks) -> list[tuple[int, EvalReport]]:
    """One report per k; k=0 runs zero-shot regardless of the configured mode."""
    ks = list(ks)
    if not ks:
        raise ConfigError("k_sweep needs at least one k")
    if any(k < 0 for k in ks):
        raise ConfigError("every k in a sweep must be >= 0")
    if any(k > 0 for k in ks) and cfg.retrieval_path is None:
        raise ConfigError("sweeping k >= 1 needs a retrieval set")
    return [(k, run_eval(_with_k(cfg, k))) for k in ks]


def _pct(value: float) -> str:
    return f"{100.0 * value:.1f}%"


def report_render(report: EvalReport, fmt: str = "table") -> str:
    """Render a report as an aligned table or as one JSON line per metric."""
    if fmt == "records":
        lines = [
            json.dumps({"metric": "mode", "value": report.mode}),
            json.dumps({"metric": "k", "value": report.k}),
            json.dumps({"metric": "n_total", "value": report.n_total}),
            json.dumps({"metric": "n_open", "value": report.n_open}),
            json.dumps({"metric": "n_closed", "value": report.n_closed}),
            json.dumps({"metric": "acc_overall", "value": round(report.acc_overall, 6)}),
            json.dumps({"metric": "acc_open", "value": round(report.acc_open, 6)}),
            json.dumps({"metric": "acc_closed", "value": round(report.acc_closed, 6)}),
        ]
        for name, count, accuracy in report.qtype_rows():
            lines.append(
                json.dumps(
                    {
                        "metric": "per_qtype",
                        "q_type": name,
                        "count": count,
                        "accuracy": round(accuracy, 6),
                    },
                    ensure_ascii=False,
                )
            )
        for note in report.notes:
            lines.append(json.dumps({"metric": "note", "value": note}, ensure_ascii=False))
        if report.incomplete:
            lines.append(json.dumps({"metric": "incomplete", "value": True}))
        for trace in report.traces:
            lines.append(json.dumps({"metric": "example", **trace}, ensure_ascii=False))
        return "\n".join(lines) + "\n"
    if fmt != "table":
        raise ConfigError(f"unknown report format {fmt!r}")
    lines = [f"mode: {report.mode}  k: {report.k}  examples: {report.n_total}"]
    for note in report.notes:
        lines.append(f"note: {note}")
    if report.incomplete:
        lines.append("note: INCOMPLETE - the backend failed before the last example")
    rows = [
        ("open", report.n_open, report.acc_open),
        ("closed", report.n_closed, report.acc_closed),
        ("overall", report.n_total, report.acc_overall),
    ]
    qtype_rows = report.qtype_rows()
    name_width = max(
        [len("overall"), len("q_type")] + [len(name) for name, _, _ in qtype_rows]
    )
    count_width = max([len("n")] + [len(str(n)) for _, n, _ in rows + qtype_rows])
    lines.append(f"{'class'.ljust(name_width)}  {'n'.rjust(count_width)}  accuracy")
    for name, count, accuracy in rows:
        lines.append(f"{name.ljust(name_width)}  {str(count).rjust(count_width)}  {_pct(accuracy)}")
    if qtype_rows:
        lines.append(f"{'q_type'.ljust(name_width)}  {'n'.rjust(count_width)}  accuracy")
        for name, count, accuracy in qtype_rows:
            lines.append(
                f"{name.ljust(name_width)}  {str(count).rjust(count_width)}  {_pct(accuracy)}"
            )
    return "\n".join(lines) + "\n"
