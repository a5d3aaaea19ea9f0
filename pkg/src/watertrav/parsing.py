"""Recover a rating dictionary from raw model text.

Models frequently wrap the requested JSON in prose, code fences, or
reasoning, and sometimes return no structure at all. Extraction tries four
tiers in fixed order and the first tier that yields a JSON object decides
the outcome; failures are returned as data (never raised) so they can flow
into evaluation as an explicit outcome.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .dataset import TraversabilityRating

EXTRACTION_TIERS = ("strict", "fenced", "embedded", "regex")

FAILURE_REASONS = (
    "no_structured_output",
    "missing_key",
    "out_of_range",
    "non_integer",
    "contradictory_duplicates",
)

EXCERPT_CHARS = 500

_FENCED_BLOCK = re.compile(r"```[a-zA-Z0-9_-]*[ \t]*\n?(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class ParsedRating:
    ratings: dict[str, TraversabilityRating]
    extraction_tier: str


@dataclass(frozen=True)
class ParseFailure:
    reason: str
    raw_excerpt: str

    def __post_init__(self):
        if self.reason not in FAILURE_REASONS:
            raise ValueError(f"unknown failure reason {self.reason!r}")


class _ContradictoryDuplicates(Exception):
    pass


def _pairs_hook(pairs):
    # Duplicate keys with conflicting values are a model contradiction, not
    # something to silently resolve.
    seen = {}
    for key, value in pairs:
        if key in seen and seen[key] != value:
            raise _ContradictoryDuplicates(key)
        seen[key] = value
    return seen


def _try_json_object(text: str):
    """Parse text as a JSON object. Returns a dict, the sentinel string
    'contradictory', or None when text is not a JSON object at all."""
    try:
        obj = json.loads(text, object_pairs_hook=_pairs_hook)
    except _ContradictoryDuplicates:
        return "contradictory"
    except (json.JSONDecodeError, RecursionError):
        return None
    return obj if isinstance(obj, dict) else None


def _balanced_candidates(text: str):
    """Balanced {...} substrings in order of start position, string-aware."""
    i = 0
    while True:
        start = text.find("{", i)
        if start < 0:
            return
        depth = 0
        in_string = False
        escaped = False
        end = -1
        for j in range(start, len(text)):
            ch = text[j]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    end = j
                    break
        if end < 0:
            return
        yield text[start : end + 1]
        i = start + 1


def _extract(raw_text: str, expected_keys) -> tuple[str, object] | None:
    """First (tier, JSON object or 'contradictory') found, else None."""
    strict = _try_json_object(raw_text.strip())
    if strict is not None:
        return "strict", strict

    for match in _FENCED_BLOCK.finditer(raw_text):
        obj = _try_json_object(match.group(1).strip())
        if obj is not None:
            return "fenced", obj

    for candidate in _balanced_candidates(raw_text):
        obj = _try_json_object(candidate)
        if obj is not None:
            return "embedded", obj

    if len(expected_keys) == 1:
        key = expected_keys[0]
        # 'rating' or the expected key, an optional separator, then a digit 1-4.
        pattern = re.compile(rf"(?:{re.escape(key)}|(?i:rating))\s*(?:[:=\-]|is)?\s*([1-4])(?!\d)")
        matches = pattern.findall(raw_text)
        if matches:
            # Chatty text states the final answer last; earlier mentions may
            # be restatements of the scheme.
            return "regex", {key: int(matches[-1])}
    return None


def _coerce_integer(value):
    """Integers and integer-valued strings pass; everything else is None."""
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        stripped = value.strip()
        if re.fullmatch(r"[+-]?\d+", stripped):
            return int(stripped)
    return None


def parse_rating(raw_text: str, expected_keys) -> ParsedRating | ParseFailure:
    """Extract ratings for every expected key from raw model text.

    Tiers in fixed order: strict (whole text is one JSON object), fenced
    (object inside a triple-backtick block), embedded (first balanced {...}
    that parses), regex (single-key queries only). The first tier producing a
    JSON object decides the outcome; its content is then validated, with no
    benefit-of-the-doubt coercion (2.5 is non_integer, never 3). Keys beyond
    the expected ones are ignored.
    """
    expected_keys = list(expected_keys)
    if not expected_keys:
        raise ValueError("expected_keys must be non-empty")
    excerpt = raw_text[:EXCERPT_CHARS]

    extracted = _extract(raw_text, expected_keys)
    if extracted is None:
        return ParseFailure("no_structured_output", excerpt)
    tier, obj = extracted
    if obj == "contradictory":
        return ParseFailure("contradictory_duplicates", excerpt)

    if any(key not in obj for key in expected_keys):
        return ParseFailure("missing_key", excerpt)

    ratings = {}
    for key in expected_keys:
        value = _coerce_integer(obj[key])
        if value is None:
            return ParseFailure("non_integer", excerpt)
        if not 1 <= value <= 4:
            return ParseFailure("out_of_range", excerpt)
        ratings[key] = TraversabilityRating(value)
    return ParsedRating(ratings=ratings, extraction_tier=tier)


def canonical_serialization(ratings: dict[str, TraversabilityRating]) -> str:
    """The canonical wire form; parsing it back is the identity (tier strict)."""
    return json.dumps({key: rating.value for key, rating in ratings.items()})
