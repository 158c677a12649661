"""Parsers for model completions.

Every parser here consumes raw completion text from a language model, so
none of them may crash on garbage. parse_yes_no and parse_triples are
total functions: any string input yields a result. parse_json_list is the
one parser that can fail, because an extraction stage cannot proceed
without its list.
"""

from __future__ import annotations

import csv
import io
import json
import re
from enum import Enum

from .kg import EmptyTermError, Fact, Term, normalize_term

_TOKEN_SPLIT = re.compile(r"[^\w]+", re.UNICODE)


class YesNoVerdict(Enum):
    YES = "yes"
    NO = "no"
    INVALID = "invalid"


class NoJsonArrayFound(ValueError):
    """Raised when a completion contains no JSON array of strings."""


def _tokens(raw: str) -> set[str]:
    # split on whitespace and punctuation so "Yes." and "yes," both count
    return {t.casefold() for t in _TOKEN_SPLIT.split(raw) if t}


def parse_choice(raw: str, options: tuple[str, ...]) -> str | None:
    """Detect exactly one of ``options`` among the completion's tokens.

    Tokens are produced by splitting on whitespace and punctuation and
    casefolding. Returns the single detected option, or None when zero or
    more than one option is present. Total: never raises on string input.
    """
    found = _tokens(raw).intersection(options)
    if len(found) == 1:
        return next(iter(found))
    return None


def parse_yes_no(raw: str) -> YesNoVerdict:
    """Parse a yes/no judgment out of a completion.

    The verdict is YES if "yes" appears among the tokens and "no" does
    not, NO in the mirrored case, and INVALID when both or neither
    appear. Invalid verdicts are excluded from score averages downstream,
    never coerced to a default answer.
    """
    choice = parse_choice(raw, ("yes", "no"))
    if choice == "yes":
        return YesNoVerdict.YES
    if choice == "no":
        return YesNoVerdict.NO
    return YesNoVerdict.INVALID


def parse_triples(raw: str) -> tuple[list[Fact], int]:
    """Parse (head, relation, tail) facts from a line-oriented completion.

    Each non-blank line is read as one 3-field CSV record with double
    quote quoting. Lines that do not yield exactly three non-empty fields
    (prose preambles, markdown fences, malformed rows) are skipped and
    counted; parsing is never fatal. Blank lines are ignored without
    counting. Order is preserved and duplicates are retained; graph
    deduplication is the caller's concern.

    Returns (facts, skipped_line_count).
    """
    facts: list[Fact] = []
    skipped = 0
    for line in raw.splitlines():
        if not line.strip():
            continue
        try:
            rows = list(csv.reader(io.StringIO(line), skipinitialspace=True))
        except csv.Error:
            skipped += 1
            continue
        if len(rows) != 1 or len(rows[0]) != 3:
            skipped += 1
            continue
        try:
            facts.append(Fact.from_raw(*rows[0]))
        except EmptyTermError:
            skipped += 1
    return facts, skipped


def facts_to_csv(facts: list[Fact]) -> str:
    """Serialize facts as quoted CSV, one record per line.

    Normalized field forms are written so the output is line-oriented
    (normalization collapses any newline into a space) and round-trips
    through parse_triples to the same normalized facts.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for f in facts:
        writer.writerow([f.head.normalized, f.relation.normalized, f.tail.normalized])
    return buf.getvalue()


def parse_json_list(raw: str, kind: str = "list") -> list[Term]:
    """Extract the first well-formed JSON array of strings from a completion.

    Tolerates surrounding prose and markdown code fences by scanning for
    the first decodable array whose elements are all strings. Entries are
    normalized and deduplicated (first occurrence wins); empty entries
    are dropped. Raises NoJsonArrayFound if no such array exists.
    ``kind`` only labels the error message.
    """
    decoder = json.JSONDecoder()
    idx = raw.find("[")
    while idx != -1:
        try:
            value, _ = decoder.raw_decode(raw, idx)
        except ValueError:
            value = None
        if isinstance(value, list) and all(isinstance(v, str) for v in value):
            terms: list[Term] = []
            for v in value:
                try:
                    terms.append(normalize_term(v))
                except EmptyTermError:
                    continue
            return list(dict.fromkeys(terms))
        idx = raw.find("[", idx + 1)
    raise NoJsonArrayFound(f"no JSON array of strings ({kind}) in completion")
