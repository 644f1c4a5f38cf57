"""Questionnaire records, label scale and dataset ingestion.

Skip logic is encoded as an absent answer: a question the respondent was
routed past keeps its row, with ``answer=None``.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyInputError, ParseError, ValidationError

REQUIRED_COLUMNS = ("record_id", "turn_index", "category", "question", "answer", "label_name")


class MentalStateLabel(IntEnum):
    VERY_UNHAPPY = 1
    UNHAPPY = 2
    NEUTRAL = 3
    HAPPY = 4
    VERY_HAPPY = 5

    @property
    def ordinal(self) -> int:
        return int(self)

    @property
    def label_name(self) -> str:
        return self.name.lower().replace("_", " ")

    @classmethod
    def from_name(cls, name: str) -> "MentalStateLabel":
        key = " ".join(name.strip().lower().replace("_", " ").split())
        for label in cls:
            if label.label_name == key:
                return label
        raise ValidationError(f"unknown label name {name!r}")

    @classmethod
    def from_ordinal(cls, value: int) -> "MentalStateLabel":
        try:
            return cls(int(value))
        except ValueError:
            raise ValidationError(f"label ordinal {value!r} outside 1..5") from None


@dataclass(frozen=True)
class QAPair:
    category: str
    question: str
    answer: str | None
    turn_index: int

    def __post_init__(self):
        if not self.category or not self.category.strip():
            raise ValidationError(f"turn {self.turn_index}: empty category")
        if not self.question or not self.question.strip():
            raise ValidationError(f"turn {self.turn_index}: empty question")
        if self.turn_index < 0:
            raise ValidationError(f"negative turn index {self.turn_index}")

    @property
    def answered(self) -> bool:
        return self.answer is not None


@dataclass(frozen=True)
class SurveyRecord:
    record_id: str
    pairs: tuple[QAPair, ...]
    label: MentalStateLabel

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        turns = [p.turn_index for p in self.pairs]
        if len(set(turns)) != len(turns):
            raise ValidationError(f"record {self.record_id}: duplicate turn_index")
        if not any(p.answered for p in self.pairs):
            raise ValidationError(f"record {self.record_id}: no answered question")

    @property
    def categories(self) -> list[str]:
        """Categories with at least one answered pair, in first-turn order."""
        seen: dict[str, None] = {}
        for pair in effective_pairs(self):
            seen.setdefault(pair.category, None)
        return list(seen)

    def pairs_for(self, category: str) -> list[QAPair]:
        return [p for p in effective_pairs(self) if p.category == category]


@dataclass(frozen=True)
class Dataset:
    name: str
    records: tuple[SurveyRecord, ...]
    turns_per_record: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        schema = max((max(p.turn_index for p in r.pairs) + 1 for r in self.records), default=0)
        if self.turns_per_record == 0:
            object.__setattr__(self, "turns_per_record", schema)
        elif schema > self.turns_per_record:
            raise ValidationError(
                f"record schema length {schema} exceeds turns_per_record {self.turns_per_record}"
            )

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __add__(self, other: "Dataset") -> "Dataset":
        return Dataset(
            name=f"{self.name}+{other.name}",
            records=self.records + other.records,
            turns_per_record=max(self.turns_per_record, other.turns_per_record),
        )


@dataclass(frozen=True)
class DatasetStats:
    counts: dict[MentalStateLabel, int]
    turns_per_record: int

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def as_rows(self) -> list[tuple[str, int, int]]:
        return [(label.label_name, n, self.turns_per_record) for label, n in self.counts.items()]


def effective_pairs(record: SurveyRecord) -> list[QAPair]:
    """Pairs that were actually answered, in questionnaire order."""
    return [p for p in record.pairs if p.answered]


def dataset_stats(ds: Dataset) -> DatasetStats:
    if not ds.records:
        raise EmptyInputError("dataset has no records")
    counter = Counter(r.label for r in ds.records)
    counts = {label: counter.get(label, 0) for label in MentalStateLabel}
    return DatasetStats(counts=counts, turns_per_record=ds.turns_per_record)


def _normalize_answer(value) -> str | None:
    if value is None:
        return None
    text = str(value)
    return text if text.strip() else None


def _rows_to_dataset(name: str, rows: Iterable[tuple[int, dict]]) -> Dataset:
    grouped: dict[str, list[QAPair]] = {}
    labels: dict[str, MentalStateLabel] = {}
    for line, row in rows:
        if "label_name" not in row and "label" in row:
            row = {**row, "label_name": row["label"]}
        missing = [c for c in REQUIRED_COLUMNS if c not in row]
        if missing:
            raise ParseError(f"missing field(s) {', '.join(missing)}", line)
        try:
            turn = int(row["turn_index"])
        except (TypeError, ValueError):
            raise ParseError(f"turn_index {row['turn_index']!r} is not an integer", line) from None
        record_id = str(row["record_id"])
        try:
            label = MentalStateLabel.from_name(str(row["label_name"]))
        except ValidationError as exc:
            raise ValidationError(f"line {line}: {exc}") from None
        if labels.setdefault(record_id, label) != label:
            raise ValidationError(f"line {line}: record {record_id} has conflicting labels")
        try:
            pair = QAPair(
                category=str(row["category"] or ""),
                question=str(row["question"] or ""),
                answer=_normalize_answer(row["answer"]),
                turn_index=turn,
            )
        except ValidationError as exc:
            raise ValidationError(f"line {line}: {exc}") from None
        grouped.setdefault(record_id, []).append(pair)

    records = []
    for record_id, pairs in grouped.items():
        pairs.sort(key=lambda p: p.turn_index)
        records.append(SurveyRecord(record_id, tuple(pairs), labels[record_id]))
    return Dataset(name=name, records=tuple(records))


def _iter_jsonl(path: Path):
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line_no) from None
            if not isinstance(row, dict):
                raise ParseError("expected a JSON object", line_no)
            yield line_no, row


def _iter_csv(path: Path):
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        # header is line 1
        for line_no, row in enumerate(reader, start=2):
            if None in row:
                raise ParseError("too many columns", line_no)
            if any(v is None for v in row.values()):
                raise ParseError("too few columns", line_no)
            yield line_no, row


def load_dataset(path: str | Path, format: str | None = None) -> Dataset:
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format == "jsonl":
        rows = _iter_jsonl(path)
    elif format == "csv":
        rows = _iter_csv(path)
    else:
        raise ValueError(f"unsupported dataset format {format!r}")
    ds = _rows_to_dataset(path.stem, rows)
    if not ds.records:
        raise EmptyInputError(f"{path}: no records")
    return ds


def record_rows(record: SurveyRecord) -> list[dict]:
    return [
        {
            "record_id": record.record_id,
            "turn_index": p.turn_index,
            "category": p.category,
            "question": p.question,
            "answer": p.answer or "",
            "label_name": record.label.label_name,
        }
        for p in record.pairs
    ]


def save_dataset(ds: Dataset | Sequence[SurveyRecord], path: str | Path, format: str | None = None) -> None:
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    rows = [row for record in ds for row in record_rows(record)]
    if format == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    elif format == "csv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=REQUIRED_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    else:
        raise ValueError(f"unsupported dataset format {format!r}")
