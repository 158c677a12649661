"""Staged knowledge-graph extraction from a passage and its samples.

The stages run in a fixed order: entity vocabulary, relation vocabulary,
one graph per passage sentence, then one graph per sampled regeneration
guided by the combined schema. Extracted facts outside the schema are
kept (a model is free to disobey the allowed lists) and only counted in
diagnostics; schema restriction is applied downstream where a score
explicitly asks for it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .dataset import DetectionInstance
from .kg import KnowledgeGraph, Schema, Term
from .llm import GenerationParams, LlmClient, LlmError
from .parsing import NoJsonArrayFound, parse_json_list, parse_triples
from . import prompts

STAGE_ENTITIES = "entities"
STAGE_RELATIONS = "relations"
STAGE_SENTENCE_KG = "sentence_kg"
STAGE_SAMPLE_KG = "sample_kg"


class ExtractionFailed(Exception):
    """An extraction stage could not produce its required output."""

    def __init__(self, stage: str, instance_id: str, message: str):
        self.stage = stage
        self.instance_id = instance_id
        super().__init__(f"{instance_id}: stage {stage!r}: {message}")


@dataclass
class ExtractionDiagnostics:
    """Counters for everything tolerated but worth surfacing."""

    sentence_skipped_lines: list[int] = field(default_factory=list)
    sample_skipped_lines: list[int] = field(default_factory=list)
    out_of_schema_facts: int = 0

    def to_dict(self) -> dict:
        return {
            "sentence_skipped_lines": list(self.sentence_skipped_lines),
            "sample_skipped_lines": list(self.sample_skipped_lines),
            "out_of_schema_facts": self.out_of_schema_facts,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExtractionDiagnostics":
        return cls(
            sentence_skipped_lines=list(data.get("sentence_skipped_lines", [])),
            sample_skipped_lines=list(data.get("sample_skipped_lines", [])),
            out_of_schema_facts=data.get("out_of_schema_facts", 0),
        )


@dataclass
class PassageExtraction:
    """Everything extracted for one passage, self-contained and serializable.

    The passage graph is always the union of the sentence graphs, so it
    is exposed as a recomputed property instead of a stored field.
    """

    instance_id: str
    passage: str
    sentences: list[str]
    samples: list[str]
    passage_schema: Schema
    sentence_kgs: list[KnowledgeGraph]
    sample_schema: Schema
    sample_kgs: list[KnowledgeGraph]
    diagnostics: ExtractionDiagnostics = field(default_factory=ExtractionDiagnostics)

    def __post_init__(self) -> None:
        if len(self.sentence_kgs) != len(self.sentences):
            raise ValueError(
                f"{len(self.sentence_kgs)} sentence graphs for {len(self.sentences)} sentences"
            )
        if len(self.sample_kgs) != len(self.samples):
            raise ValueError(
                f"{len(self.sample_kgs)} sample graphs for {len(self.samples)} samples"
            )

    @property
    def passage_kg(self) -> KnowledgeGraph:
        return KnowledgeGraph.union(self.sentence_kgs)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "passage": self.passage,
            "sentences": list(self.sentences),
            "samples": list(self.samples),
            "passage_schema": self.passage_schema.to_dict(),
            "sentence_kgs": [kg.to_triples() for kg in self.sentence_kgs],
            "sample_schema": self.sample_schema.to_dict(),
            "sample_kgs": [kg.to_triples() for kg in self.sample_kgs],
            "diagnostics": self.diagnostics.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PassageExtraction":
        return cls(
            instance_id=data["instance_id"],
            passage=data["passage"],
            sentences=list(data["sentences"]),
            samples=list(data["samples"]),
            passage_schema=Schema.from_dict(data["passage_schema"]),
            sentence_kgs=[KnowledgeGraph.from_triples(t) for t in data["sentence_kgs"]],
            sample_schema=Schema.from_dict(data["sample_schema"]),
            sample_kgs=[KnowledgeGraph.from_triples(t) for t in data["sample_kgs"]],
            diagnostics=ExtractionDiagnostics.from_dict(data.get("diagnostics", {})),
        )


def render_term_list(terms: Sequence[Term]) -> str:
    """Render a vocabulary for a prompt: a JSON array of the normalized
    names, sorted, so equal vocabularies always render identically."""
    return json.dumps(sorted({t.normalized for t in terms}), ensure_ascii=False)


def build_sample_schema(passage_schema: Schema, sentence_kgs: Sequence[KnowledgeGraph]) -> Schema:
    """The schema used for sample extraction: the passage schema extended
    with every entity and relation that appears in any sentence graph."""
    entities = list(passage_schema.entities)
    relations = list(passage_schema.relations)
    for kg in sentence_kgs:
        entities.extend(kg.entities)
        relations.extend(kg.relations)
    return Schema.from_terms(entities, relations)


def count_out_of_schema(kgs: Sequence[KnowledgeGraph], schema: Schema) -> int:
    total = 0
    for kg in kgs:
        total += len(kg) - len(kg.restrict(schema))
    return total


class KgExtractor:
    """Runs the staged extraction through one LLM client."""

    def __init__(self, client: LlmClient, params: GenerationParams):
        self.client = client
        self.params = params

    def _complete(self, prompt: str, stage: str, instance_id: str) -> str:
        try:
            return self.client.complete(prompt, self.params).completion
        except LlmError as exc:
            raise ExtractionFailed(stage, instance_id, str(exc)) from exc

    def _complete_many(self, prompt_list: list[str], stage: str, instance_id: str) -> list[str]:
        try:
            return [ex.completion for ex in self.client.complete_many(prompt_list, self.params)]
        except LlmError as exc:
            raise ExtractionFailed(stage, instance_id, str(exc)) from exc

    def extract_entities(self, passage: str, instance_id: str = "") -> list[Term]:
        prompt = prompts.render(
            "entities", input=passage, format_instructions=prompts.FORMAT_INSTRUCTIONS
        )
        completion = self._complete(prompt, STAGE_ENTITIES, instance_id)
        try:
            return parse_json_list(completion, kind="entities")
        except NoJsonArrayFound as exc:
            raise ExtractionFailed(STAGE_ENTITIES, instance_id, str(exc)) from exc

    def extract_relations(
        self, passage: str, entities: Sequence[Term], instance_id: str = ""
    ) -> list[Term]:
        prompt = prompts.render(
            "relations",
            input=passage,
            entities=render_term_list(entities),
            format_instructions=prompts.FORMAT_INSTRUCTIONS,
        )
        completion = self._complete(prompt, STAGE_RELATIONS, instance_id)
        try:
            return parse_json_list(completion, kind="relations")
        except NoJsonArrayFound as exc:
            raise ExtractionFailed(STAGE_RELATIONS, instance_id, str(exc)) from exc

    def _sentence_prompt(self, sentence: str, passage: str, schema: Schema) -> str:
        return prompts.render(
            "sentence_kg",
            input_sentence=sentence,
            input_text=passage,
            allowed_nodes=render_term_list(schema.entities),
            allowed_relationships=render_term_list(schema.relations),
        )

    def _sample_prompt(self, sample: str, schema: Schema) -> str:
        return prompts.render(
            "sample_kg",
            input=sample,
            allowed_nodes=render_term_list(schema.entities),
            allowed_relationships=render_term_list(schema.relations),
        )

    def extract_sentence_kg(
        self, sentence: str, passage: str, schema: Schema, instance_id: str = ""
    ) -> tuple[KnowledgeGraph, int]:
        """Extract one sentence graph. Returns (graph, skipped line count).

        Facts outside the schema are kept: the allowed lists steer the
        model, they do not filter its output.
        """
        completion = self._complete(
            self._sentence_prompt(sentence, passage, schema), STAGE_SENTENCE_KG, instance_id
        )
        facts, skipped = parse_triples(completion)
        return KnowledgeGraph(facts), skipped

    def extract_sample_kg(
        self, sample: str, schema: Schema, instance_id: str = ""
    ) -> tuple[KnowledgeGraph, int]:
        completion = self._complete(
            self._sample_prompt(sample, schema), STAGE_SAMPLE_KG, instance_id
        )
        facts, skipped = parse_triples(completion)
        return KnowledgeGraph(facts), skipped

    def extract_all(self, instance: DetectionInstance) -> PassageExtraction:
        """Run every stage for one instance, in order."""
        entities = self.extract_entities(instance.passage, instance.id)
        relations = self.extract_relations(instance.passage, entities, instance.id)
        passage_schema = Schema.from_terms(entities, relations)

        sentence_prompts = [
            self._sentence_prompt(s, instance.passage, passage_schema)
            for s in instance.sentences
        ]
        sentence_completions = self._complete_many(
            sentence_prompts, STAGE_SENTENCE_KG, instance.id
        )
        diagnostics = ExtractionDiagnostics()
        sentence_kgs: list[KnowledgeGraph] = []
        for completion in sentence_completions:
            facts, skipped = parse_triples(completion)
            sentence_kgs.append(KnowledgeGraph(facts))
            diagnostics.sentence_skipped_lines.append(skipped)

        sample_schema = build_sample_schema(passage_schema, sentence_kgs)

        sample_prompts = [self._sample_prompt(s, sample_schema) for s in instance.samples]
        sample_completions = self._complete_many(sample_prompts, STAGE_SAMPLE_KG, instance.id)
        sample_kgs: list[KnowledgeGraph] = []
        for completion in sample_completions:
            facts, skipped = parse_triples(completion)
            sample_kgs.append(KnowledgeGraph(facts))
            diagnostics.sample_skipped_lines.append(skipped)

        diagnostics.out_of_schema_facts = count_out_of_schema(sample_kgs, sample_schema)

        return PassageExtraction(
            instance_id=instance.id,
            passage=instance.passage,
            sentences=list(instance.sentences),
            samples=list(instance.samples),
            passage_schema=passage_schema,
            sentence_kgs=sentence_kgs,
            sample_schema=sample_schema,
            sample_kgs=sample_kgs,
            diagnostics=diagnostics,
        )
