"""Evaluation metrics: success rate, weighted-F1, format consistency, runtime."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import EmptyInputError, ShapeError

CONSISTENCY_PASS_THRESHOLD = 0.9


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over code points, two-row DP."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,  # deletion
                    current[j - 1] + 1,  # insertion
                    previous[j - 1] + (ca != cb),
                )
            )
        previous = current
    return previous[-1]


def consistency(generated: str, expected: str) -> float:
    """Format agreement ``1 - dist / max(len)``; two empty strings agree fully."""
    longest = max(len(generated), len(expected))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(generated, expected) / longest


def _check_lengths(preds: Sequence, truth: Sequence) -> None:
    if len(preds) != len(truth):
        raise ShapeError(f"{len(preds)} predictions vs {len(truth)} labels")
    if not truth:
        raise EmptyInputError("no samples")


def success_rate(preds: Sequence, truth: Sequence) -> float:
    _check_lengths(preds, truth)
    hits = sum(int(p == t) for p, t in zip(preds, truth))
    return 100.0 * hits / len(truth)


def weighted_f1(preds: Sequence, truth: Sequence) -> float:
    """Per-class F1 averaged with true-class support as weight, in percent."""
    _check_lengths(preds, truth)
    support = Counter(truth)
    predicted = Counter(preds)
    tp = Counter(t for p, t in zip(preds, truth) if p == t)
    total = 0.0
    for cls, n_true in support.items():
        n_pred = predicted.get(cls, 0)
        hits = tp.get(cls, 0)
        if hits == 0:
            continue
        precision = hits / n_pred
        recall = hits / n_true
        total += n_true * 2 * precision * recall / (precision + recall)
    return 100.0 * total / len(truth)


@dataclass(frozen=True)
class SampleOutcome:
    pred: int | None
    truth: int
    runtime: float
    consistency: float


@dataclass(frozen=True)
class EvalResult:
    success_rate: float
    weighted_f1: float
    mean_runtime: float
    consistency: float
    n_samples: int
    consistency_pass_rate: float | None = None

    def __post_init__(self):
        for name in ("success_rate", "weighted_f1", "consistency"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0 + 1e-9:
                raise ValueError(f"{name}={value} outside [0, 100]")
        if self.mean_runtime < 0:
            raise ValueError("negative runtime")


def evaluate(samples: Iterable[SampleOutcome | Mapping]) -> EvalResult:
    rows = [s if isinstance(s, SampleOutcome) else SampleOutcome(**s) for s in samples]
    if not rows:
        raise EmptyInputError("no samples to evaluate")
    # abstentions score as a wrong class that never occurs in the truth
    preds = [r.pred if r.pred is not None else 0 for r in rows]
    truth = [r.truth for r in rows]
    n = len(rows)
    return EvalResult(
        success_rate=success_rate(preds, truth),
        weighted_f1=weighted_f1(preds, truth),
        mean_runtime=sum(r.runtime for r in rows) / n,
        consistency=100.0 * sum(r.consistency for r in rows) / n,
        n_samples=n,
        consistency_pass_rate=100.0
        * sum(r.consistency >= CONSISTENCY_PASS_THRESHOLD for r in rows)
        / n,
    )


# --- report rows ------------------------------------------------------------

REPORT_COLUMNS = (
    "dataset",
    "llm",
    "prompting",
    "success",
    "weighted_f1",
    "runtime",
    "consistency",
    "n_samples",
    "consistency_pass_rate",
)
TABLE_HEADERS = (
    "Dataset",
    "LLMs",
    "Prompting",
    "Success (%)",
    "Weighted-F1 (%)",
    "Runtime (s)",
    "Consistency (%)",
)
NOT_IMPLEMENTED = "not implemented"


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    llm: str
    prompting: str
    result: EvalResult | None  # None marks a method the harness does not run

    def to_record(self) -> dict[str, str]:
        base = {"dataset": self.dataset, "llm": self.llm, "prompting": self.prompting}
        if self.result is None:
            return base | {c: (NOT_IMPLEMENTED if c == "success" else "") for c in REPORT_COLUMNS[3:]}
        r = self.result
        return base | {
            "success": _num(r.success_rate),
            "weighted_f1": _num(r.weighted_f1),
            "runtime": _num(r.mean_runtime),
            "consistency": _num(r.consistency),
            "n_samples": str(r.n_samples),
            "consistency_pass_rate": "" if r.consistency_pass_rate is None else _num(r.consistency_pass_rate),
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, str]) -> "ReportRow":
        if rec.get("success") == NOT_IMPLEMENTED:
            return cls(rec["dataset"], rec["llm"], rec["prompting"], None)
        pass_rate = rec.get("consistency_pass_rate", "")
        result = EvalResult(
            success_rate=float(rec["success"]),
            weighted_f1=float(rec["weighted_f1"]),
            mean_runtime=float(rec["runtime"]),
            consistency=float(rec["consistency"]),
            n_samples=int(rec.get("n_samples") or 0),
            consistency_pass_rate=float(pass_rate) if pass_rate else None,
        )
        return cls(rec["dataset"], rec["llm"], rec["prompting"], result)


def _num(value: float) -> str:
    # repr keeps full precision so CSV rows round-trip exactly
    return repr(round(float(value), 10))


def rows_to_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row.to_record())
    return buf.getvalue()


def rows_from_csv(text: str) -> list[ReportRow]:
    return [ReportRow.from_record(rec) for rec in csv.DictReader(io.StringIO(text))]


def render_table(rows: Sequence[ReportRow]) -> str:
    """Aligned plain-text table with the usual results columns."""
    body = []
    for row in rows:
        if row.result is None:
            cells = [row.dataset, row.llm, row.prompting, NOT_IMPLEMENTED, "-", "-", "-"]
        else:
            r = row.result
            cells = [
                row.dataset,
                row.llm,
                row.prompting,
                f"{r.success_rate:.2f}",
                f"{r.weighted_f1:.2f}",
                f"{r.mean_runtime:.2f}",
                f"{r.consistency:.0f}" if r.consistency == round(r.consistency) else f"{r.consistency:.2f}",
            ]
        body.append(cells)
    widths = [max(len(h), *(len(c[i]) for c in body)) if body else len(h) for i, h in enumerate(TABLE_HEADERS)]

    def line(cells):
        out = []
        for i, cell in enumerate(cells):
            out.append(cell.ljust(widths[i]) if i < 3 else cell.rjust(widths[i]))
        return "  ".join(out).rstrip()

    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(TABLE_HEADERS), rule, *(line(c) for c in body)]) + "\n"


__all__ = [
    "levenshtein",
    "consistency",
    "success_rate",
    "weighted_f1",
    "evaluate",
    "SampleOutcome",
    "EvalResult",
    "ReportRow",
    "rows_to_csv",
    "rows_from_csv",
    "render_table",
]
