"""Hallucination correction driven by detection scores.

Three rewrite modes share one protocol: build a prompt that shows the
passage as a numbered sentence list (baseline mode tells the model only
that errors may exist; sentence mode lists the flagged sentences; fact
mode lists the flagged facts under their sentence numbers), parse the
completion back into exactly one sentence per original, then judge each
corrected sentence against a reference source. Judged outcomes are
factual, non-factual or refused (the sentence declines to state the
information); proportions are taken over judged sentences only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .dataset import DetectionInstance
from .kg import Fact
from .llm import GenerationParams, LlmClient, LlmError
from .parsing import parse_choice
from .scoring import ScoreReport, fact_sentence
from . import prompts


class CorrectionMode(str, Enum):
    BASELINE = "baseline"
    SENTENCE = "sentence"
    FACT = "fact"


class Judgment(str, Enum):
    FACTUAL = "factual"
    NON_FACTUAL = "non_factual"
    REFUSED = "refused"


class MalformedCorrection(Exception):
    """The rewrite completion contained no recoverable numbered sentences."""


class EmptyRun(ValueError):
    """No sentence received a valid judgment."""


_NUMBERED_LINE = re.compile(r"^\s*(\d+)\s*(?:[.)]\s*|\s)(.*\S)\s*$")

LEVEL_SENTENCE = "sentence"
LEVEL_FACT = "fact"


def flag_hallucinations(
    report: ScoreReport, level: str, threshold: float
) -> list[int] | list[tuple[int, Fact]]:
    """Items whose score strictly exceeds the threshold.

    Missing scores are never flagged. Sentence level returns sentence
    indices; fact level returns (sentence index, fact) pairs, so a fact
    repeated across sentences is flagged once per sentence it occurs in.
    """
    if level == LEVEL_SENTENCE:
        return [
            i
            for i, score in enumerate(report.sentence_scores)
            if score is not None and score > threshold
        ]
    if level == LEVEL_FACT:
        flagged: list[tuple[int, Fact]] = []
        for i, row in enumerate(report.sentence_facts):
            for fs in row:
                if fs.score is not None and fs.score > threshold:
                    flagged.append((i, fs.fact))
        return flagged
    raise ValueError(f"level must be {LEVEL_SENTENCE!r} or {LEVEL_FACT!r}, got {level!r}")


def _numbered(sentences: Sequence[str]) -> str:
    return "\n".join(f"{i + 1}. {s}" for i, s in enumerate(sentences))


def _format_stub(n: int) -> str:
    return "\n".join(f"{i + 1}." for i in range(n))


def _numbered_subset(indices: Sequence[int], sentences: Sequence[str]) -> str:
    # keep original sentence numbers so the model can map flags to lines
    return "\n".join(f"{i + 1}. {sentences[i]}" for i in sorted(set(indices)))


def _facts_block(flagged: Sequence[tuple[int, Fact]], sentences: Sequence[str]) -> str:
    by_sentence: dict[int, list[Fact]] = {}
    for i, f in flagged:
        by_sentence.setdefault(i, []).append(f)
    blocks = []
    for i in sorted(by_sentence):
        lines = [f"Sentence {i + 1}: {sentences[i]}"]
        lines.extend(f"- {fact_sentence(f)}" for f in by_sentence[i])
        blocks.append("\n".join(lines))
    return "\n".join(blocks)


def build_correction_prompt(
    instance: DetectionInstance,
    mode: CorrectionMode | str,
    flagged: Sequence | None = None,
) -> str:
    """Assemble the rewrite prompt for one passage and mode."""
    mode = CorrectionMode(mode)
    original_prompt = prompts.render(
        "original_prompt", concept_name=instance.concept_name or instance.id
    ).strip()
    common = {
        "input": original_prompt,
        "generated_sentences": _numbered(instance.sentences),
        "format": _format_stub(len(instance.sentences)),
    }
    if mode is CorrectionMode.BASELINE:
        return prompts.render("correct_baseline", **common)
    if flagged is None:
        raise ValueError(f"mode {mode.value!r} needs the flagged items")
    if mode is CorrectionMode.SENTENCE:
        return prompts.render(
            "correct_sentences",
            incorrect_sentences=_numbered_subset(flagged, instance.sentences),
            **common,
        )
    return prompts.render(
        "correct_facts",
        incorrect_facts=_facts_block(flagged, instance.sentences),
        **common,
    )


def parse_numbered_list(raw: str, n: int) -> list[str | None]:
    """Recover entries 1..n from a numbered-list completion.

    Accepts "1.", "1)" and bare-number prefixes; the first occurrence of
    a number wins; numbers outside 1..n are ignored. Missing entries are
    None. Raises MalformedCorrection when no entry at all is recoverable.
    """
    entries: dict[int, str] = {}
    for line in raw.splitlines():
        m = _NUMBERED_LINE.match(line)
        if not m:
            continue
        num = int(m.group(1))
        if 1 <= num <= n:
            entries.setdefault(num, m.group(2).strip())
    if not entries:
        raise MalformedCorrection(f"no numbered sentences found in completion: {raw[:120]!r}")
    return [entries.get(i + 1) for i in range(n)]


def correct(
    instance: DetectionInstance,
    mode: CorrectionMode | str,
    flagged: Sequence | None,
    client: LlmClient,
    params: GenerationParams,
) -> tuple[list[str], int]:
    """Rewrite the passage. Returns (corrected sentences, parse defects).

    The corrected list always has exactly one sentence per original:
    entries the model failed to return fall back to the original sentence
    and are counted as parse defects.
    """
    prompt = build_correction_prompt(instance, mode, flagged)
    completion = client.complete(prompt, params).completion
    entries = parse_numbered_list(completion, len(instance.sentences))
    corrected: list[str] = []
    defects = 0
    for original, entry in zip(instance.sentences, entries):
        if entry is None:
            corrected.append(original)
            defects += 1
        else:
            corrected.append(entry)
    return corrected, defects


def judge_sentence(
    sentence: str,
    full_text: str,
    source: str,
    client: LlmClient,
    params: GenerationParams,
) -> Judgment | None:
    """Three-way judgment of one corrected sentence against the source.

    Returns None when the call fails or the completion contains neither
    exactly one of yes / no / refused; such sentences stay unjudged.
    """
    prompt = prompts.render("judge_correction", source=source, full_text=full_text, input=sentence)
    try:
        completion = client.complete(prompt, params).completion
    except LlmError:
        return None
    choice = parse_choice(completion, ("yes", "no", "refused"))
    if choice == "yes":
        return Judgment.FACTUAL
    if choice == "no":
        return Judgment.NON_FACTUAL
    if choice == "refused":
        return Judgment.REFUSED
    return None


@dataclass
class CorrectionRun:
    """One corrected passage with flags, rewrites and judgments."""

    instance_id: str
    mode: str
    threshold: float | None
    original_sentences: list[str]
    corrected_sentences: list[str]
    flagged_sentences: list[int] = field(default_factory=list)
    flagged_facts: list[tuple[int, Fact]] = field(default_factory=list)
    judgments: list[Judgment | None] = field(default_factory=list)
    parse_defects: int = 0

    def __post_init__(self) -> None:
        if len(self.corrected_sentences) != len(self.original_sentences):
            raise ValueError(
                f"{len(self.corrected_sentences)} corrected sentences for "
                f"{len(self.original_sentences)} originals"
            )

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "mode": self.mode,
            "threshold": self.threshold,
            "original_sentences": list(self.original_sentences),
            "corrected_sentences": list(self.corrected_sentences),
            "flagged_sentences": list(self.flagged_sentences),
            "flagged_facts": [[i, f.to_triple()] for i, f in self.flagged_facts],
            "judgments": [j.value if j else None for j in self.judgments],
            "parse_defects": self.parse_defects,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CorrectionRun":
        return cls(
            instance_id=data["instance_id"],
            mode=data["mode"],
            threshold=data["threshold"],
            original_sentences=list(data["original_sentences"]),
            corrected_sentences=list(data["corrected_sentences"]),
            flagged_sentences=list(data["flagged_sentences"]),
            flagged_facts=[
                (i, Fact.from_raw(*triple)) for i, triple in data["flagged_facts"]
            ],
            judgments=[Judgment(j) if j else None for j in data["judgments"]],
            parse_defects=data["parse_defects"],
        )


def run_correction(
    instance: DetectionInstance,
    report: ScoreReport | None,
    mode: CorrectionMode | str,
    client: LlmClient,
    correct_params: GenerationParams,
    judge_params: GenerationParams,
    threshold: float | None = None,
) -> CorrectionRun:
    """Correct one passage end to end: flag, rewrite, judge."""
    mode = CorrectionMode(mode)
    if instance.source_bio is None:
        raise ValueError(f"instance {instance.id!r} has no reference source to judge against")

    flagged_sentences: list[int] = []
    flagged_facts: list[tuple[int, Fact]] = []
    flagged: Sequence | None = None
    if mode is CorrectionMode.SENTENCE:
        if report is None or threshold is None:
            raise ValueError("sentence mode needs a score report and a threshold")
        flagged_sentences = flag_hallucinations(report, LEVEL_SENTENCE, threshold)
        flagged = flagged_sentences
    elif mode is CorrectionMode.FACT:
        if report is None or threshold is None:
            raise ValueError("fact mode needs a score report and a threshold")
        flagged_facts = flag_hallucinations(report, LEVEL_FACT, threshold)
        flagged = flagged_facts

    corrected, defects = correct(instance, mode, flagged, client, correct_params)
    full_text = " ".join(corrected)
    judgments = [
        judge_sentence(s, full_text, instance.source_bio, client, judge_params)
        for s in corrected
    ]

    return CorrectionRun(
        instance_id=instance.id,
        mode=mode.value,
        threshold=threshold,
        original_sentences=list(instance.sentences),
        corrected_sentences=corrected,
        flagged_sentences=flagged_sentences,
        flagged_facts=flagged_facts,
        judgments=judgments,
        parse_defects=defects,
    )


def proportions(judgments: Sequence[Judgment | None]) -> dict[str, float]:
    """Fraction of judged sentences per outcome; sums to 1 over the three
    categories. Unjudged sentences (None) are excluded from the base."""
    judged = [j for j in judgments if j is not None]
    if not judged:
        raise EmptyRun("no sentence received a valid judgment")
    total = len(judged)
    return {
        outcome.value: sum(1 for j in judged if j is outcome) / total
        for outcome in Judgment
    }


@dataclass
class CorrectionReport:
    """Proportions for one mode against the baseline, with relative deltas."""

    mode: str
    proportions: dict[str, float]
    baseline_proportions: dict[str, float]
    relative_deltas: dict[str, float | None]
    judged: int
    baseline_judged: int

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "proportions": dict(self.proportions),
            "baseline_proportions": dict(self.baseline_proportions),
            "relative_deltas": dict(self.relative_deltas),
            "judged": self.judged,
            "baseline_judged": self.baseline_judged,
        }


def correction_report(
    judgments: Sequence[Judgment | None],
    baseline_judgments: Sequence[Judgment | None],
    mode: str = CorrectionMode.SENTENCE.value,
) -> CorrectionReport:
    """Compare a mode's judged proportions against the baseline's.

    Relative deltas are (p - p_base) / p_base per category, or None where
    the baseline proportion is zero.
    """
    p = proportions(judgments)
    base = proportions(baseline_judgments)
    deltas = {
        k: ((p[k] - base[k]) / base[k]) if base[k] != 0.0 else None for k in p
    }
    return CorrectionReport(
        mode=mode,
        proportions=p,
        baseline_proportions=base,
        relative_deltas=deltas,
        judged=sum(1 for j in judgments if j is not None),
        baseline_judged=sum(1 for j in baseline_judgments if j is not None),
    )
