"""Iterative chain-of-thought candidate generation.

Per answered category the backend is asked, in turn, for an aspect analysis,
the emotional keywords in that analysis, and a partial judgment built from the
best keyword. Every level's output becomes a candidate thought.
"""

from __future__ import annotations

import logging
import re
from dataclasses import asdict, dataclass, field, replace
from enum import IntEnum

from .errors import EmptyInputError, GenerationError, ThoughtFormatError
from .llm import GENERATION_TEMPERATURE, LLMBackend, fingerprint
from .prompts import format_consistency, format_pairs, marker_content, template
from .survey import QAPair, SurveyRecord

logger = logging.getLogger(__name__)


class ThoughtLevel(IntEnum):
    ASPECT = 1
    KEYWORD = 2
    RESPONSE = 3

    @property
    def marker(self) -> str:
        return {1: "ASPECT", 2: "KEYWORDS", 3: "RESPONSE"}[self.value]

    @property
    def template_name(self) -> str:
        return {1: "aspect", 2: "keywords", 3: "response"}[self.value]


@dataclass(frozen=True)
class Thought:
    id: str
    level: ThoughtLevel
    category: str
    text: str
    parent_id: str | None = None
    importance: float | None = None

    def __post_init__(self):
        if (self.parent_id is None) != (self.level == ThoughtLevel.ASPECT):
            raise ValueError(f"thought {self.id}: only aspect thoughts may lack a parent")

    def with_importance(self, value: float) -> "Thought":
        return replace(self, importance=float(value))

    def as_step(self) -> str:
        """Rendering used when the thought is placed in a prompt."""
        if self.level == ThoughtLevel.ASPECT:
            return f"[{self.category}] aspect analysis: {self.text}"
        if self.level == ThoughtLevel.KEYWORD:
            return f"[{self.category}] emotional keyword: {self.text}"
        return f"[{self.category}] partial judgment: {self.text}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["level"] = self.level.name.lower()
        return d


@dataclass(frozen=True)
class GenerationLogEntry:
    fingerprint: str
    category: str
    level: str
    status: str  # "ok" or "parse_error"
    consistency: float


@dataclass
class ICoTConfig:
    max_keywords: int = 3
    parse_retries: int = 2
    temperature: float = GENERATION_TEMPERATURE


@dataclass
class CandidateThoughts:
    record_id: str
    thoughts: list[Thought]
    generation_log: list[GenerationLogEntry] = field(default_factory=list)
    failed_categories: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.thoughts)

    @property
    def ids(self) -> list[str]:
        return [t.id for t in self.thoughts]

    @property
    def by_id(self) -> dict[str, Thought]:
        return {t.id: t for t in self.thoughts}

    @property
    def by_category(self) -> dict[str, list[Thought]]:
        out: dict[str, list[Thought]] = {}
        for t in self.thoughts:
            out.setdefault(t.category, []).append(t)
        return out

    @property
    def mean_consistency(self) -> float:
        if not self.generation_log:
            return 1.0
        return sum(e.consistency for e in self.generation_log) / len(self.generation_log)

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "thoughts": [t.to_dict() for t in self.thoughts],
            "generation_log": [asdict(e) for e in self.generation_log],
            "failed_categories": list(self.failed_categories),
        }


@dataclass(frozen=True)
class ParsedThought:
    content: str
    consistency: float


def parse_thought(raw: str, level: ThoughtLevel) -> ParsedThought:
    content = marker_content(raw, level.marker)
    if content is None:
        raise ThoughtFormatError(f"reply lacks the {level.marker}: marker")
    if not content:
        raise ThoughtFormatError(f"empty content after {level.marker}:")
    return ParsedThought(content=content, consistency=format_consistency(raw, level.template_name))


def _ask(
    llm: LLMBackend,
    level: ThoughtLevel,
    category: str,
    fields: dict,
    config: ICoTConfig,
    log: list[GenerationLogEntry] | None,
    parse=None,
):
    """Query one level, re-asking with a format reminder on parse failure."""
    parse = parse or (lambda raw: parse_thought(raw, level))
    tmpl = template(level.template_name)
    reminder = f"\n\nReminder: answer with exactly one line that starts with '{level.marker}:'."
    for attempt in range(config.parse_retries + 1):
        req = tmpl.request(temperature=config.temperature, **fields)
        if attempt:
            req = replace(req, user=req.user + reminder)
        raw = llm.complete(req).text
        try:
            parsed = parse(raw)
        except ThoughtFormatError as exc:
            logger.debug("%s/%s attempt %d: %s", category, level.name, attempt + 1, exc)
            if log is not None:
                log.append(GenerationLogEntry(fingerprint(req), category, level.name.lower(), "parse_error",
                                              format_consistency(raw, level.template_name)))
            continue
        if log is not None:
            score = parsed[0].consistency if isinstance(parsed, tuple) else parsed.consistency
            log.append(GenerationLogEntry(fingerprint(req), category, level.name.lower(), "ok", score))
        return parsed
    raise GenerationError(
        f"{category}: no parsable {level.marker} reply after {config.parse_retries + 1} attempts"
    )


def generate_aspect(
    pairs: list[QAPair],
    category: str,
    llm: LLMBackend,
    config: ICoTConfig | None = None,
    log: list[GenerationLogEntry] | None = None,
) -> Thought:
    config = config or ICoTConfig()
    answered = [p for p in pairs if p.answered and p.category == category]
    if not answered:
        raise EmptyInputError(f"category {category!r} has no answered pair")
    parsed = _ask(
        llm, ThoughtLevel.ASPECT, category,
        {"category": category, "pairs": format_pairs(answered)}, config, log,
    )
    return Thought(id=f"{category}/A", level=ThoughtLevel.ASPECT, category=category, text=parsed.content)


def _split_keywords(content: str, limit: int) -> list[str]:
    seen: dict[str, str] = {}
    for piece in re.split(r"[,;\n]", content):
        word = piece.strip().strip(".\"'").strip()
        if word and word.casefold() not in seen:
            seen[word.casefold()] = word
    return list(seen.values())[:limit]


def extract_keywords(
    aspect: Thought,
    llm: LLMBackend,
    config: ICoTConfig | None = None,
    log: list[GenerationLogEntry] | None = None,
) -> list[Thought]:
    config = config or ICoTConfig()
    if aspect.level != ThoughtLevel.ASPECT:
        raise ValueError(f"expected an aspect thought, got {aspect.level.name}")

    def parse(raw):
        parsed = parse_thought(raw, ThoughtLevel.KEYWORD)
        words = _split_keywords(parsed.content, config.max_keywords)
        if not words:
            raise ThoughtFormatError("no keywords listed")
        return parsed, words

    _, words = _ask(
        llm, ThoughtLevel.KEYWORD, aspect.category,
        {"category": aspect.category, "aspect": aspect.text, "max_keywords": config.max_keywords},
        config, log, parse=parse,
    )
    return [
        Thought(id=f"{aspect.category}/K{i}", level=ThoughtLevel.KEYWORD, category=aspect.category,
                text=word, parent_id=aspect.id)
        for i, word in enumerate(words)
    ]


def generate_response(
    keyword: Thought,
    llm: LLMBackend,
    aspect: Thought | None = None,
    config: ICoTConfig | None = None,
    log: list[GenerationLogEntry] | None = None,
) -> Thought:
    config = config or ICoTConfig()
    if keyword.level != ThoughtLevel.KEYWORD:
        raise ValueError(f"expected a keyword thought, got {keyword.level.name}")
    parsed = _ask(
        llm, ThoughtLevel.RESPONSE, keyword.category,
        {"category": keyword.category, "aspect": aspect.text if aspect else "", "keyword": keyword.text},
        config, log,
    )
    return Thought(id=f"{keyword.category}/R", level=ThoughtLevel.RESPONSE, category=keyword.category,
                   text=parsed.content, parent_id=keyword.id)


def run_icot(record: SurveyRecord, llm: LLMBackend, config: ICoTConfig | None = None) -> CandidateThoughts:
    """Greedy width-one chain per category: aspect -> keywords -> response.

    Categories are visited in sorted order so the request sequence (and hence
    cassette replay) does not depend on scheduling.
    """
    config = config or ICoTConfig()
    result = CandidateThoughts(record_id=record.record_id, thoughts=[])
    for category in sorted(record.categories):
        try:
            aspect = generate_aspect(record.pairs_for(category), category, llm, config, result.generation_log)
        except GenerationError as exc:
            logger.warning("record %s: %s", record.record_id, exc)
            result.failed_categories.append(category)
            continue
        result.thoughts.append(aspect)
        try:
            keywords = extract_keywords(aspect, llm, config, result.generation_log)
        except GenerationError as exc:
            logger.warning("record %s: %s", record.record_id, exc)
            continue
        result.thoughts.extend(keywords)
        try:
            response = generate_response(keywords[0], llm, aspect, config, result.generation_log)
        except GenerationError as exc:
            logger.warning("record %s: %s", record.record_id, exc)
            continue
        result.thoughts.append(response)
    if not result.thoughts:
        raise GenerationError(f"record {record.record_id}: generation failed for every category")
    return result
