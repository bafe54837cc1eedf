"""Evaluation harness: dataset loaders, exact match, ROUGE-L, latency/cost
aggregation (median + interquartile range), and report emission.

Quartiles use linear interpolation (the "inclusive" convention); the report
header records this. BERTScore/BARTScore are out of scope — the report
schema reserves null slots so external scorers can merge their results.
"""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from . import pipeline as pipeline_mod
from .model import MODALITIES, Question, tokenize
from .structured import SqlTimeoutError, execute_sql

logger = logging.getLogger(__name__)

Gold = Union[str, tuple]


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class BenchmarkItem:
    question: Question
    gold_answer: Gold
    gold_sql: Optional[str] = None
    modality: str = "multimodal"
    dataset_profile: str = "fixture"

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if isinstance(self.gold_answer, str):
            if not self.gold_answer.strip():
                raise ValueError("gold answer is empty")
        elif not self.gold_answer:
            raise ValueError("gold answer set is empty")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _norm(text: str) -> str:
    return " ".join(str(text).split()).casefold()


def _as_value_set(value) -> frozenset[str]:
    if isinstance(value, (str, int, float)):
        return frozenset({_norm(str(value))})
    return frozenset(_norm(v) for v in value)


def exact_match(prediction, gold) -> int:
    """1 iff the normalized operands are equal.

    Normalization trims, collapses internal whitespace, and casefolds;
    value-set operands compare by set equality of normalized elements.
    Whitespace inside tokens stays significant ("81mg" != "81 mg").
    """
    return int(_as_value_set(prediction) == _as_value_set(gold))


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # iterative two-row DP; the test-suite oracle is an independent
    # full-matrix implementation
    prev = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                current.append(prev[j - 1] + 1)
            else:
                current.append(max(prev[j], current[j - 1]))
        prev = current
    return prev[-1]


def rouge_l(prediction: str, reference: str) -> tuple[float, float, float]:
    """(precision, recall, F1) of the longest common token subsequence."""
    pred = tokenize(prediction)
    ref = tokenize(reference)
    if not pred or not ref:
        return (0.0, 0.0, 0.0)
    lcs = _lcs_length(pred, ref)
    precision = lcs / len(pred)
    recall = lcs / len(ref)
    if precision + recall == 0.0:
        return (0.0, 0.0, 0.0)
    f1 = 2 * precision * recall / (precision + recall)
    return (precision, recall, f1)


def median_iqr(values: Sequence[float]) -> tuple[float, float, float]:
    """(median, q1, q3) by linear interpolation (inclusive convention)."""
    values = sorted(values)
    if not values:
        raise ValueError("median_iqr needs at least one value")
    if len(values) == 1:
        return (values[0], values[0], values[0])
    q1, med, q3 = statistics.quantiles(values, n=4, method="inclusive")
    return (med, q1, q3)


# ---------------------------------------------------------------------------
# dataset loaders
# ---------------------------------------------------------------------------

def _read_rows(path: Path) -> list[dict]:
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        rows = json.loads(text)
        if not isinstance(rows, list):
            raise DatasetError(f"{path}: top-level JSON must be a list")
        return rows
    rows = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}: row {i + 1}: invalid JSON: {exc}") from exc
    return rows


def _question_from_row(row: dict, i: int, default_id: str, profile: str) -> Question:
    try:
        return Question(
            id=str(row.get("id", default_id)),
            text=row["question"],
            patient_scope=str(row["patient_scope"]) if row.get("patient_scope") is not None else None,
            admission_scope=str(row["admission_scope"]) if row.get("admission_scope") is not None else None,
            category=row.get("category"),
        )
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"row {i + 1}: {exc}") from exc


def _load_fixture_row(row: dict, i: int, profile: str) -> BenchmarkItem:
    question = _question_from_row(row, i, f"item-{i + 1:04d}", profile)
    gold = row.get("gold_answer")
    if gold is None:
        raise DatasetError(f"row {i + 1}: missing gold_answer")
    if isinstance(gold, list):
        gold = tuple(gold)
    return BenchmarkItem(
        question=question,
        gold_answer=gold,
        gold_sql=row.get("gold_sql"),
        modality=row.get("modality", "multimodal"),
        dataset_profile=profile,
    )


def _load_ehrnoteqa_row(row: dict, i: int, profile: str) -> BenchmarkItem:
    question = _question_from_row(row, i, f"item-{i + 1:04d}", profile)
    choices = row.get("choices")
    if choices is None:
        choices = {
            key.split("_", 1)[1]: value
            for key, value in row.items()
            if key.startswith("choice_") and value is not None
        }
    answer_key = row.get("answer")
    if not choices or answer_key is None:
        raise DatasetError(f"row {i + 1}: multiple-choice row needs choices and an answer key")
    if answer_key not in choices:
        raise DatasetError(f"row {i + 1}: answer key {answer_key!r} not among choices")
    # open-ended conversion: the keyed choice text becomes the reference answer
    return BenchmarkItem(
        question=question,
        gold_answer=str(choices[answer_key]),
        modality="unstructured",
        dataset_profile=profile,
    )


def _load_ehrsql_row(row: dict, i: int, profile: str) -> tuple[Question, str]:
    question = _question_from_row(row, i, f"item-{i + 1:04d}", profile)
    gold_sql = row.get("query") or row.get("gold_sql")
    if not gold_sql:
        raise DatasetError(f"row {i + 1}: missing gold SQL")
    return question, gold_sql


def load_dataset(
    path: str | Path,
    profile: str,
    db_path: Optional[str | Path] = None,
    drop_slow_gold_sql: bool = False,
    gold_sql_timeout_s: float = 120.0,
) -> list[BenchmarkItem]:
    """Load a benchmark file into validated items.

    Malformed rows raise with their row index; nothing is dropped silently.
    For SQL-gold profiles with ``drop_slow_gold_sql`` set, gold queries are
    pre-executed against ``db_path`` and items whose gold SQL exceeds
    ``gold_sql_timeout_s`` are dropped with a logged count.
    """
    path = Path(path)
    rows = _read_rows(path)
    items: list[BenchmarkItem] = []
    dropped = 0
    for i, row in enumerate(rows):
        if not isinstance(row, dict):
            raise DatasetError(f"row {i + 1}: expected an object, got {type(row).__name__}")
        if profile == "ehrnoteqa":
            items.append(_load_ehrnoteqa_row(row, i, profile))
        elif profile in ("ehrsql", "drugehrqa") and "gold_answer" not in row and "answer" not in row:
            question, gold_sql = _load_ehrsql_row(row, i, profile)
            if db_path is None:
                raise DatasetError(f"row {i + 1}: gold answers come from executing gold SQL; a database is required")
            try:
                result = execute_sql(db_path, gold_sql, timeout_s=gold_sql_timeout_s)
            except SqlTimeoutError:
                if drop_slow_gold_sql:
                    dropped += 1
                    continue
                raise DatasetError(f"row {i + 1}: gold SQL exceeded {gold_sql_timeout_s}s")
            gold = tuple(str(v) for r in result.rows for v in r)
            if not gold:
                gold = ("",)
            items.append(
                BenchmarkItem(
                    question=question,
                    gold_answer=gold if len(gold) > 1 else gold[0] or "(no rows)",
                    gold_sql=gold_sql,
                    modality="structured",
                    dataset_profile=profile,
                )
            )
        else:
            row = dict(row)
            if "gold_answer" not in row and "answer" in row:
                row["gold_answer"] = row["answer"]
            items.append(_load_fixture_row(row, i, profile))
    if dropped:
        logger.info("dropped %d items whose gold SQL exceeded %.1fs", dropped, gold_sql_timeout_s)
    ids = [item.question.id for item in items]
    if len(set(ids)) != len(ids):
        raise DatasetError("duplicate question ids in dataset")
    return items


# ---------------------------------------------------------------------------
# benchmark runner and report
# ---------------------------------------------------------------------------

@dataclass
class ItemResult:
    question_id: str
    category: str
    modality: str
    prediction: str
    gold: Gold
    verdict: int
    rouge: Optional[tuple[float, float, float]]
    latency_ms: float
    cost: float
    trace_id: str
    error_class: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "category": self.category,
            "modality": self.modality,
            "prediction": self.prediction,
            "gold": list(self.gold) if isinstance(self.gold, tuple) else self.gold,
            "verdict": self.verdict,
            "rouge_l": list(self.rouge) if self.rouge is not None else None,
            "latency_ms": self.latency_ms,
            "cost": self.cost,
            "trace_id": self.trace_id,
            "error_class": self.error_class,
        }


@dataclass
class RunReport:
    items: list[ItemResult]
    aggregates: dict
    config_snapshot: dict

    def to_dict(self) -> dict:
        return {
            "conventions": {"quartiles": "linear interpolation (inclusive)"},
            "config": self.config_snapshot,
            "aggregates": self.aggregates,
            "items": [r.to_dict() for r in sorted(self.items, key=lambda r: r.question_id)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _aggregate(items: Sequence[ItemResult]) -> dict:
    # canonical order so float sums are independent of processing order
    items = sorted(items, key=lambda r: r.question_id)
    total = len(items)
    correct = sum(r.verdict for r in items)
    rouges = [r.rouge[2] for r in items if r.rouge is not None]
    latencies = [r.latency_ms for r in items]
    by_category: dict[str, dict] = {}
    for category in sorted({r.category for r in items}):
        cat_items = [r for r in items if r.category == category]
        med, q1, q3 = median_iqr([r.latency_ms for r in cat_items])
        by_category[category] = {
            "count": len(cat_items),
            "correct": sum(r.verdict for r in cat_items),
            "latency_ms": {"median": med, "q1": q1, "q3": q3},
            "cost_total": sum(r.cost for r in cat_items),
        }
    errors: dict[str, int] = {}
    for r in items:
        if r.error_class:
            errors[r.error_class] = errors.get(r.error_class, 0) + 1
    med, q1, q3 = median_iqr(latencies) if latencies else (0.0, 0.0, 0.0)
    return {
        "total_items": total,
        "correct": correct,
        "accuracy": correct / total if total else 0.0,
        "rouge_l_mean": sum(rouges) / len(rouges) if rouges else None,
        "rouge_l_median": statistics.median(rouges) if rouges else None,
        "latency_ms": {"median": med, "q1": q1, "q3": q3},
        "cost_total": sum(r.cost for r in items),
        "by_category": by_category,
        "errors": errors,
        "bertscore": None,
        "bartscore": None,
    }


def run_benchmark(
    items: Sequence[BenchmarkItem],
    runtime: pipeline_mod.Runtime,
    trace_store=None,
) -> RunReport:
    """Run every item through its modality's arms and score the predictions.

    Per-item pipeline failures are recorded as incorrect with the error
    class; they never abort the run. When ``trace_store`` is given, each
    item's TraceRecord is appended under the trace id its report row cites.

    Table descriptions are warmed once up front so no single item's trace
    carries the shared schema-review cost; per-item rows are therefore
    independent of processing order.
    """
    from . import structured as structured_mod

    try:
        catalog = runtime.catalog()
    except structured_mod.DatabaseUnreachableError:
        catalog = None
    if catalog is not None:
        for table in catalog.tables:
            structured_mod.describe_table(table, runtime.llm_backend, runtime.desc_cache, runtime.db_id)

    results: list[ItemResult] = []
    for item in items:
        question = item.question
        trace_id = f"trace-{question.id}"
        category = question.category or item.modality
        try:
            outcome = pipeline_mod.answer_question(runtime, question, item.modality)
        except Exception as exc:
            results.append(
                ItemResult(
                    question_id=question.id,
                    category=category,
                    modality=item.modality,
                    prediction="",
                    gold=item.gold_answer,
                    verdict=0,
                    rouge=None,
                    latency_ms=0.0,
                    cost=0.0,
                    trace_id=trace_id,
                    error_class=type(exc).__name__,
                )
            )
            continue
        if trace_store is not None:
            trace_store.append(trace_id, outcome.trace)
        prediction = outcome.prediction
        verdict = exact_match(prediction, item.gold_answer)
        rouge = rouge_l(prediction, item.gold_answer) if isinstance(item.gold_answer, str) else None
        results.append(
            ItemResult(
                question_id=question.id,
                category=category,
                modality=item.modality,
                prediction=prediction,
                gold=item.gold_answer,
                verdict=verdict,
                rouge=rouge,
                latency_ms=outcome.trace.total_latency_ms,
                cost=outcome.trace.total_cost,
                trace_id=trace_id,
            )
        )
    return RunReport(items=results, aggregates=_aggregate(results), config_snapshot=runtime.config_snapshot())


def emit_report(report: RunReport, path: Optional[str | Path] = None) -> str:
    """Serialize the report, re-verifying aggregates from the per-item rows."""
    recomputed = _aggregate(report.items)
    if recomputed != report.aggregates:
        raise ValueError("report aggregates do not match per-item rows")
    text = report.to_json()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def render_summary(report: RunReport) -> str:
    """Human-readable summary table."""
    agg = report.aggregates
    lines = [
        f"items: {agg['total_items']}  correct: {agg['correct']}  accuracy: {agg['accuracy']:.3f}",
        f"latency ms (median [q1, q3], inclusive quartiles): "
        f"{agg['latency_ms']['median']:.1f} [{agg['latency_ms']['q1']:.1f}, {agg['latency_ms']['q3']:.1f}]",
        f"total cost: {agg['cost_total']:.6f}",
    ]
    if agg["rouge_l_mean"] is not None:
        lines.append(f"rouge-l f1 mean: {agg['rouge_l_mean']:.4f}  median: {agg['rouge_l_median']:.4f}")
    lines.append(f"{'category':<24}{'n':>4}{'correct':>9}{'median ms':>11}")
    for category, stats in agg["by_category"].items():
        lines.append(
            f"{category:<24}{stats['count']:>4}{stats['correct']:>9}{stats['latency_ms']['median']:>11.1f}"
        )
    if agg["errors"]:
        lines.append("errors: " + ", ".join(f"{k}={v}" for k, v in sorted(agg["errors"].items())))
    return "\n".join(lines)
