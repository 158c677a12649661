"""Dataset ingestion for annotated passages with sampled regenerations.

The expected file is a JSON array of objects, one per passage, in the
layout of the public WikiBio GPT-3 hallucination benchmark:

    {
      "id": "instance-0001",              optional; generated when absent
      "concept_name": "Kenan Hasagic",    optional; subject of the passage
      "gpt3_text": "...",                 the passage under test
      "gpt3_sentences": ["...", ...],     its sentence segmentation
      "annotation": ["accurate", ...],    optional gold labels per sentence
      "gpt3_text_samples": ["...", ...],  stochastic re-generations (>= 1)
      "wiki_bio_text": "..."              optional reference source
    }

Labels use the values accurate / minor-inaccurate / major-inaccurate
(underscore spellings are accepted and normalized). All structural
problems raise SchemaMismatch naming the instance and field, so a bad
corpus fails loudly at load time rather than mid-run.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

LABEL_ACCURATE = "accurate"
LABEL_MINOR = "minor-inaccurate"
LABEL_MAJOR = "major-inaccurate"
LABELS = (LABEL_ACCURATE, LABEL_MINOR, LABEL_MAJOR)

_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


class SchemaMismatch(ValueError):
    def __init__(self, instance_id: str, field_name: str, message: str):
        self.instance_id = instance_id
        self.field_name = field_name
        super().__init__(f"{instance_id}: field {field_name!r}: {message}")


class UnknownLabel(ValueError):
    pass


@dataclass
class DetectionInstance:
    """One passage to scan, with its samples and optional gold labels."""

    id: str
    passage: str
    sentences: list[str]
    samples: list[str]
    sentence_labels: list[str] | None = None
    source_bio: str | None = None
    concept_name: str = ""

    def __post_init__(self) -> None:
        if not self.sentences:
            raise SchemaMismatch(self.id, "sentences", "must be non-empty")
        if not self.samples:
            raise SchemaMismatch(self.id, "samples", "at least one sample is required")
        if self.sentence_labels is not None and len(self.sentence_labels) != len(self.sentences):
            raise SchemaMismatch(
                self.id,
                "sentence_labels",
                f"{len(self.sentence_labels)} labels for {len(self.sentences)} sentences",
            )


def normalize_label(label: str) -> str:
    candidate = label.strip().casefold().replace("_", "-")
    if candidate not in LABELS:
        raise UnknownLabel(f"unknown sentence label {label!r}")
    return candidate


def binarize_label(label: str) -> bool:
    """True when the sentence is hallucinated (any inaccuracy), else False."""
    return normalize_label(label) != LABEL_ACCURATE


def passage_gold_score(labels: list[str]) -> float:
    """Passage-level gold score: the fraction of hallucinated sentences."""
    if not labels:
        raise ValueError("no labels")
    flags = [binarize_label(l) for l in labels]
    return sum(flags) / len(flags)


def split_sentences(text: str) -> list[str]:
    """Naive sentence splitter on terminal punctuation.

    Provided only for ad-hoc input without a given segmentation; curated
    datasets ship their own sentence lists, which always take precedence.
    """
    parts = [p.strip() for p in _SENTENCE_END.split(text.strip())]
    return [p for p in parts if p]


def _require(obj: dict, key: str, kind, instance_id: str):
    if key not in obj:
        raise SchemaMismatch(instance_id, key, "missing")
    value = obj[key]
    if not isinstance(value, kind):
        raise SchemaMismatch(instance_id, key, f"expected {kind.__name__}")
    return value


def _string_list(obj: dict, key: str, instance_id: str) -> list[str]:
    value = _require(obj, key, list, instance_id)
    if not all(isinstance(v, str) for v in value):
        raise SchemaMismatch(instance_id, key, "expected a list of strings")
    return list(value)


def load_dataset(path: str | Path) -> list[DetectionInstance]:
    """Load and validate a dataset file. See the module docstring for layout."""
    with Path(path).open("r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise SchemaMismatch("<corpus>", "<root>", "expected a JSON array of instances")

    instances: list[DetectionInstance] = []
    for i, obj in enumerate(data):
        default_id = f"instance-{i:04d}"
        if not isinstance(obj, dict):
            raise SchemaMismatch(default_id, "<instance>", "expected a JSON object")
        instance_id = obj.get("id") or default_id
        if not isinstance(instance_id, str):
            raise SchemaMismatch(default_id, "id", "expected a string")

        passage = _require(obj, "gpt3_text", str, instance_id)
        sentences = _string_list(obj, "gpt3_sentences", instance_id)
        samples = _string_list(obj, "gpt3_text_samples", instance_id)

        labels: list[str] | None = None
        if obj.get("annotation") is not None:
            labels = _string_list(obj, "annotation", instance_id)
            try:
                labels = [normalize_label(l) for l in labels]
            except UnknownLabel as exc:
                raise SchemaMismatch(instance_id, "annotation", str(exc))

        source_bio = obj.get("wiki_bio_text")
        if source_bio is not None and not isinstance(source_bio, str):
            raise SchemaMismatch(instance_id, "wiki_bio_text", "expected a string")
        concept = obj.get("concept_name", "")
        if not isinstance(concept, str):
            raise SchemaMismatch(instance_id, "concept_name", "expected a string")

        instances.append(
            DetectionInstance(
                id=instance_id,
                passage=passage,
                sentences=sentences,
                samples=samples,
                sentence_labels=labels,
                source_bio=source_bio,
                concept_name=concept,
            )
        )

    ids = [inst.id for inst in instances]
    if len(set(ids)) != len(ids):
        dupes = sorted({x for x in ids if ids.count(x) > 1})
        raise SchemaMismatch("<corpus>", "id", f"duplicate instance ids: {dupes}")
    return instances
