"""Benchmark evaluation: dataset loading, answer grading, accuracy reports.

Question types cover multiple choice (lettered and numbered options),
numeric answers with tolerance, and match-the-following mappings. Grading is
total: any prediction string grades to correct or incorrect, never an
exception. Accuracies are percentages at two decimals, and ablation tables
report pairwise accuracy deltas at the same precision.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .agent import AblationConfig, Agent
from .errors import EvalError, ProviderError

log = logging.getLogger(__name__)

QTYPE_MCQ = "MCQ"
QTYPE_MCQN = "MCQN"
QTYPE_NUM = "NUM"
QTYPE_MATCH = "MATCH"
QTYPES = (QTYPE_MCQ, QTYPE_MCQN, QTYPE_NUM, QTYPE_MATCH)

DEFAULT_TOPIC = "general"
NUM_ABS_TOL = 1e-6
NUM_REL_TOL = 0.01

_FINAL_RE = re.compile(r"^\s*final answer\s*:\s*(.*)$", re.IGNORECASE | re.MULTILINE)
_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_PAIR_RE = re.compile(r"([A-Za-z0-9]+)\s*-\s*([A-Za-z0-9]+)")


@dataclass(frozen=True)
class QuestionRecord:
    id: str
    qtype: str
    text: str
    gold: object
    options: dict[str, str] = field(default_factory=dict)
    topic: str = DEFAULT_TOPIC

    def prompt_text(self) -> str:
        if self.qtype in (QTYPE_MCQ, QTYPE_MCQN):
            rendered = "\n".join(f"{label}) {body}"
                                 for label, body in self.options.items())
            return f"{self.text}\nOptions:\n{rendered}"
        return self.text


def _validate_record(doc: dict) -> QuestionRecord:
    for key in ("id", "qtype", "text", "gold"):
        if key not in doc:
            raise EvalError(f"missing field {key!r}")
    qtype = doc["qtype"]
    if qtype not in QTYPES:
        raise EvalError(f"unknown qtype {qtype!r}")
    options = doc.get("options") or {}
    gold = doc["gold"]
    if qtype in (QTYPE_MCQ, QTYPE_MCQN):
        if not isinstance(options, dict) or not options:
            raise EvalError("choice question needs a non-empty options map")
        if str(gold) not in options:
            raise EvalError(f"gold {gold!r} is not an option label")
        gold = str(gold)
    elif qtype == QTYPE_NUM:
        if isinstance(gold, bool) or not isinstance(gold, (int, float)):
            raise EvalError(f"numeric question needs a numeric gold, got {gold!r}")
        gold = float(gold)
        if not math.isfinite(gold):
            raise EvalError("numeric gold must be finite")
    elif qtype == QTYPE_MATCH:
        if not isinstance(gold, dict) or not gold:
            raise EvalError("match question needs a non-empty gold mapping")
        gold = {str(k).upper(): str(v).upper() for k, v in gold.items()}
        if len(set(gold.values())) != len(gold):
            raise EvalError("match gold must map keys to distinct values")
    return QuestionRecord(id=str(doc["id"]), qtype=qtype, text=str(doc["text"]),
                          gold=gold,
                          options={str(k): str(v) for k, v in options.items()},
                          topic=str(doc.get("topic", DEFAULT_TOPIC)))


def load_dataset(path: str | Path) -> tuple[list[QuestionRecord],
                                            list[tuple[int, str]]]:
    """Load a question file; invalid lines come back as (lineno, reason)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise EvalError(f"cannot read dataset {path}: {exc}") from exc
    records: list[QuestionRecord] = []
    diagnostics: list[tuple[int, str]] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = _validate_record(json.loads(line))
        except json.JSONDecodeError as exc:
            diagnostics.append((lineno, f"invalid JSON: {exc}"))
            continue
        except EvalError as exc:
            diagnostics.append((lineno, str(exc)))
            continue
        if record.id in seen_ids:
            diagnostics.append((lineno, f"duplicate question id {record.id!r}"))
            continue
        seen_ids.add(record.id)
        records.append(record)
    if not records:
        raise EvalError(f"dataset {path} has no valid question records")
    return records, diagnostics


# -- grading ----------------------------------------------------------------

def extract_answer_text(prediction: str) -> str:
    """Prefer the last Final Answer line; otherwise the whole prediction."""
    matches = _FINAL_RE.findall(prediction)
    if matches:
        tail = matches[-1].strip()
        if tail:
            return tail
    return prediction


def _last_option_label(text: str, labels: list[str]) -> str | None:
    pattern = re.compile(
        r"(?<![A-Za-z0-9])(" + "|".join(re.escape(l) for l in labels)
        + r")(?![A-Za-z0-9])", re.IGNORECASE)
    found = pattern.findall(text)
    if not found:
        return None
    lowered = {l.lower(): l for l in labels}
    return lowered[found[-1].lower()]


def grade(prediction: str, record: QuestionRecord,
          abs_tol: float = NUM_ABS_TOL, rel_tol: float = NUM_REL_TOL) -> bool:
    """Total grading: any string comes back correct or incorrect."""
    if not isinstance(prediction, str):
        return False
    tail = extract_answer_text(prediction)
    if record.qtype in (QTYPE_MCQ, QTYPE_MCQN):
        labels = list(record.options)
        picked = _last_option_label(tail, labels)
        if picked is None and tail is not prediction:
            picked = _last_option_label(prediction, labels)
        return picked == record.gold
    if record.qtype == QTYPE_NUM:
        numbers = _NUMBER_RE.findall(tail)
        if not numbers and tail is not prediction:
            numbers = _NUMBER_RE.findall(prediction)
        if not numbers:
            return False
        try:
            value = float(numbers[-1])
        except (ValueError, OverflowError):
            return False
        if not math.isfinite(value):
            return False
        gold = float(record.gold)
        return abs(value - gold) <= max(abs_tol, rel_tol * abs(gold))
    if record.qtype == QTYPE_MATCH:
        pairs = _PAIR_RE.findall(tail)
        if not pairs and tail is not prediction:
            pairs = _PAIR_RE.findall(prediction)
        if not pairs:
            return False
        mapping = {k.upper(): v.upper() for k, v in pairs}
        return mapping == record.gold
    return False


# -- reports ----------------------------------------------------------------

def _pct(n_correct: int, n: int) -> float:
    if n == 0:
        return 0.0
    return round(100.0 * n_correct / n, 2)


@dataclass(frozen=True)
class QuestionResult:
    id: str
    topic: str
    correct: bool
    prediction: str


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    ablation: str
    n: int
    n_correct: int
    accuracy: float
    per_topic: dict[str, dict]
    results: tuple[QuestionResult, ...]
    partial: bool = False

    def to_doc(self) -> dict:
        return {"dataset": self.dataset, "ablation": self.ablation,
                "n": self.n, "n_correct": self.n_correct,
                "accuracy": self.accuracy, "per_topic": self.per_topic,
                "partial": self.partial}


class EvalAborted(EvalError):
    """Provider failure mid-run; carries the partial report."""

    def __init__(self, message: str, report: EvalReport):
        super().__init__(message)
        self.report = report


def build_report(dataset: str, ablation_label: str,
                 results: list[QuestionResult], partial: bool = False) -> EvalReport:
    by_topic: dict[str, list[QuestionResult]] = {}
    for r in results:
        by_topic.setdefault(r.topic, []).append(r)
    per_topic = {
        topic: {"n": len(rs), "n_correct": sum(r.correct for r in rs),
                "accuracy": _pct(sum(r.correct for r in rs), len(rs))}
        for topic, rs in sorted(by_topic.items())}
    n_correct = sum(r.correct for r in results)
    return EvalReport(dataset=dataset, ablation=ablation_label,
                      n=len(results), n_correct=n_correct,
                      accuracy=_pct(n_correct, len(results)),
                      per_topic=per_topic, results=tuple(results),
                      partial=partial)


def save_report(report: EvalReport, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"id": r.id, "topic": r.topic, "correct": r.correct,
                         "prediction": r.prediction},
                        sort_keys=True, ensure_ascii=False)
             for r in report.results]
    (out / "results.jsonl").write_text(
        "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    summary = out / "summary.json"
    summary.write_text(json.dumps(report.to_doc(), sort_keys=True,
                                  ensure_ascii=False, indent=2) + "\n",
                       encoding="utf-8")
    return summary


def run_eval(records: list[QuestionRecord], ablation: AblationConfig,
             agent: Agent, dataset: str = "dataset",
             out_dir: str | Path | None = None) -> EvalReport:
    """Answer every question and grade it; question order is by record id.

    A provider failure aborts the run but saves and reports the questions
    graded so far.
    """
    results: list[QuestionResult] = []
    for record in sorted(records, key=lambda r: r.id):
        try:
            answer = agent.answer(record.prompt_text(), ablation)
        except ProviderError as exc:
            partial = build_report(dataset, ablation.label(), results,
                                   partial=True)
            if out_dir is not None:
                save_report(partial, out_dir)
            raise EvalAborted(
                f"provider failed on question {record.id}: {exc}",
                partial) from exc
        results.append(QuestionResult(
            id=record.id, topic=record.topic,
            correct=grade(answer.final, record), prediction=answer.final))
    report = build_report(dataset, ablation.label(), results)
    if out_dir is not None:
        save_report(report, out_dir)
    return report


# -- ablation arithmetic ----------------------------------------------------

def improvement(baseline_accuracy: float, augmented_accuracy: float) -> float:
    """Accuracy delta in percentage points, two decimals."""
    return round(augmented_accuracy - baseline_accuracy, 2)


@dataclass(frozen=True)
class AblationTable:
    dataset: str
    baseline: str
    accuracy: dict[str, float]

    def delta(self, a: str, b: str) -> float:
        """accuracy(a) minus accuracy(b), two decimals."""
        return improvement(self.accuracy[b], self.accuracy[a])

    def vs_baseline(self) -> dict[str, float]:
        return {label: self.delta(label, self.baseline)
                for label in self.accuracy if label != self.baseline}


def ablation_table(dataset: str, accuracies: dict[str, float],
                   baseline: str = "none") -> AblationTable:
    if baseline not in accuracies:
        raise EvalError(f"baseline {baseline!r} has no accuracy entry")
    return AblationTable(dataset=dataset, baseline=baseline,
                         accuracy={k: round(float(v), 2)
                                   for k, v in accuracies.items()})


def ablation_table_from_reports(reports: list[EvalReport],
                                baseline: str = "none") -> AblationTable:
    if not reports:
        raise EvalError("no reports to tabulate")
    datasets = {r.dataset for r in reports}
    if len(datasets) > 1:
        raise EvalError(f"reports span multiple datasets: {sorted(datasets)}")
    labels = [r.ablation for r in reports]
    if len(set(labels)) != len(labels):
        raise EvalError("duplicate ablation labels in reports")
    return ablation_table(reports[0].dataset,
                          {r.ablation: r.accuracy for r in reports}, baseline)


_CHECK = {True: "yes", False: "-"}


def render_ablation_table(table: AblationTable) -> str:
    """Plain-text grid: component columns, accuracy, delta vs baseline."""
    rows = [("knowledge base", "tool hub", "retriever", "accuracy", "delta")]
    order = [l for l in ("none", "tools", "kb", "kb,tools") if l in table.accuracy]
    order += [l for l in table.accuracy if l not in order]
    for label in order:
        ab = AblationConfig.from_label(label)
        delta = "" if label == table.baseline else (
            f"{table.delta(label, table.baseline):+.2f}")
        rows.append((_CHECK[ab.kb], _CHECK[ab.tools],
                     _CHECK[ab.kb or ab.tools],
                     f"{table.accuracy[label]:.2f}", delta))
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
             for row in rows]
    return "\n".join(lines)
