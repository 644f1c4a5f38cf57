"""Prompt templates, expected output skeletons and lenient answer parsing.

Each ``*.txt`` asset holds a system prompt and a user prompt separated by a
``---`` line. User prompts use ``str.format`` placeholders.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable

from ..llm import LABEL_TEMPERATURE, PromptRequest
from ..metrics import consistency
from ..survey import MentalStateLabel, QAPair

TEMPLATE_VERSION = "1"

# Expected reply shape per template, already in skeleton form (see ``skeleton``).
EXPECTED_FORMAT = {
    "aspect": "ASPECT: {}",
    "keywords": "KEYWORDS: {}",
    "response": "RESPONSE: {}",
    "label": "LABEL: {n}",
    "io": "{n}",
    "cot": "{}\nFINAL: {n}",
    "tot_thought": "THOUGHT: {}",
    "tot_value": "SCORE: {n}",
}

MARKERS = ("ASPECT", "KEYWORDS", "RESPONSE", "LABEL", "FINAL", "THOUGHT", "SCORE")
_MARKER_LINE = re.compile(r"^\s*(%s)\s*:\s*(.*)$" % "|".join(MARKERS), re.IGNORECASE)
_NUMBER_SLOT = re.compile(r"\(?\s*\d+(?:\.\d+)?\s*\)?\.?")
_ORDINAL = re.compile(r"(?<![\d.])([1-5])(?!\d|\.\d)")
_NAMES = sorted(MentalStateLabel, key=lambda lab: -len(lab.label_name))


@dataclass(frozen=True)
class Template:
    name: str
    system: str
    user: str

    def request(self, temperature: float = LABEL_TEMPERATURE, seed_hint: int | None = None, **fields) -> PromptRequest:
        return PromptRequest(
            user=self.user.format(**fields),
            system=self.system,
            temperature=temperature,
            seed_hint=seed_hint,
        )


@lru_cache(maxsize=None)
def template(name: str) -> Template:
    raw = resources.files(__name__).joinpath(f"{name}.txt").read_text(encoding="utf-8")
    system, _, user = raw.partition("\n---\n")
    return Template(name=name, system=system.strip(), user=user.strip("\n"))


def format_pairs(pairs: Iterable[QAPair]) -> str:
    return "\n".join(f"Q: {p.question}\nA: {p.answer}" for p in pairs)


def skeleton(text: str) -> str:
    """Mask free text so only the reply's structure remains.

    Marker lines keep their marker, a lone number becomes ``{n}`` and any other
    run of free-text lines collapses to one ``{}``.
    """
    out: list[str] = []
    for raw in text.strip().splitlines():
        line = raw.strip()
        if not line:
            continue
        m = _MARKER_LINE.match(line)
        if m:
            out.append(f"{m.group(1)}: {_slot(m.group(2))}".rstrip())
            continue
        slot = _slot(line)
        if slot == "{}" and out and out[-1] == "{}":
            continue
        out.append(slot)
    return "\n".join(out)


def _slot(content: str) -> str:
    content = content.strip()
    if not content:
        return ""
    return "{n}" if _NUMBER_SLOT.fullmatch(content) else "{}"


def format_consistency(raw: str, template_name: str) -> float:
    return consistency(skeleton(raw), EXPECTED_FORMAT[template_name])


def parse_ordinal(text: str) -> MentalStateLabel | None:
    """First standalone 1..5 digit, else the first label name mentioned."""
    m = _ORDINAL.search(text)
    if m:
        return MentalStateLabel(int(m.group(1)))
    lowered = text.lower()
    best = None
    for label in _NAMES:
        hit = re.search(rf"\b{label.label_name}\b", lowered)
        if hit and (best is None or hit.start() < best[0]):
            best = (hit.start(), label)
    return best[1] if best else None


def marker_content(text: str, marker: str) -> str | None:
    """Content of the last line carrying ``marker``, or None."""
    found = None
    for line in text.splitlines():
        m = _MARKER_LINE.match(line)
        if m and m.group(1).upper() == marker:
            found = m.group(2).strip()
    return found


def parse_marked_ordinal(text: str, marker: str) -> MentalStateLabel | None:
    content = marker_content(text, marker)
    if content is None:
        return None
    return parse_ordinal(content)
