"""Fact-level consistency scoring against sampled regenerations.

Every scorer maps a fact to a hallucination score in [0, 1], where 0
means consistently supported across samples and 1 means never supported.

  frequency  membership of the fact in each sample's graph (no LLM)
  llm_kg     one support judgment per sample graph
  llm_text   one support judgment per sample text

LLM judgments that cannot be parsed as yes or no are excluded from the
average rather than coerced; a fact with no valid judgment at all has a
missing score. Sentence scores aggregate fact scores (mean or max) over
non-missing values; the passage score is the mean of non-missing
sentence scores.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .extraction import PassageExtraction
from .kg import Fact, KnowledgeGraph, Schema
from .llm import GenerationParams, LlmClient, LlmError
from .parsing import YesNoVerdict, parse_yes_no
from . import prompts


class Scorer(str, Enum):
    FREQUENCY = "frequency"
    LLM_KG = "llm_kg"
    LLM_TEXT = "llm_text"


class Aggregation(str, Enum):
    MEAN = "mean"
    MAX = "max"


class NoSamplesError(ValueError):
    """A consistency score needs at least one sample."""


@dataclass
class FactScore:
    """One fact's hallucination score with response accounting."""

    fact: Fact
    score: float | None
    scorer: str
    valid_responses: int
    total_responses: int

    def to_dict(self) -> dict:
        return {
            "head": self.fact.head.raw,
            "relation": self.fact.relation.raw,
            "tail": self.fact.tail.raw,
            "score": self.score,
            "scorer": self.scorer,
            "valid_responses": self.valid_responses,
            "total_responses": self.total_responses,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FactScore":
        return cls(
            fact=Fact.from_raw(data["head"], data["relation"], data["tail"]),
            score=data["score"],
            scorer=data["scorer"],
            valid_responses=data["valid_responses"],
            total_responses=data["total_responses"],
        )


def frequency_score(fact: Fact, sample_kgs: Sequence[KnowledgeGraph]) -> float:
    """Fraction of samples whose graph does not contain the fact.

    Membership is exact triple equality after normalization. The ratio is
    formed in integer arithmetic with a single division, so the result is
    exactly k/N for some integer k.
    """
    if not sample_kgs:
        raise NoSamplesError("no sample graphs")
    hits = sum(1 for kg in sample_kgs if fact in kg)
    return (len(sample_kgs) - hits) / len(sample_kgs)


def psi_average(verdicts: Sequence[YesNoVerdict]) -> tuple[float | None, int]:
    """Average the per-sample judgments: yes counts 0, no counts 1.

    Invalid verdicts are dropped. Returns (score, valid_count); the score
    is None when no verdict is valid, and (#no)/(#yes + #no) otherwise,
    formed with a single division.
    """
    yes = sum(1 for v in verdicts if v is YesNoVerdict.YES)
    no = sum(1 for v in verdicts if v is YesNoVerdict.NO)
    valid = yes + no
    if valid == 0:
        return None, 0
    return no / valid, valid


def serialize_kg_for_prompt(kg: KnowledgeGraph) -> str:
    """Render a graph for a prompt: one head,relation,tail CSV line per
    fact, sorted lexicographically by normalized triple."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for f in sorted(kg.facts, key=lambda f: f.key):
        writer.writerow([f.head.raw, f.relation.raw, f.tail.raw])
    return buf.getvalue().rstrip("\n")


def fact_sentence(fact: Fact) -> str:
    """Render a fact for a prompt as a readable (head, relation, tail) tuple."""
    return f"({fact.head.raw}, {fact.relation.raw}, {fact.tail.raw})"


def _settle(
    client: LlmClient, prompt_list: Sequence[str], params: GenerationParams
) -> list[str | LlmError]:
    """Complete all prompts, returning completions or the per-call error,
    joined in input order."""

    def one(prompt: str) -> str | LlmError:
        try:
            return client.complete(prompt, params).completion
        except LlmError as exc:
            return exc

    if len(prompt_list) <= 1:
        return [one(p) for p in prompt_list]
    with ThreadPoolExecutor(max_workers=client.max_in_flight) as pool:
        return list(pool.map(one, prompt_list))


@dataclass
class _BatchOutcome:
    scores: list[FactScore]
    invalid_verdicts: int = 0
    failed_calls: int = 0
    llm_calls: int = 0
    errors: list[str] = field(default_factory=list)


def _support_prompts(
    fact: Fact,
    scorer: Scorer,
    sample_kgs: Sequence[KnowledgeGraph],
    samples: Sequence[str],
) -> list[str]:
    line = fact_sentence(fact)
    if scorer is Scorer.LLM_KG:
        return [
            prompts.render("fact_vs_kg", input=line, knowledge_graph=serialize_kg_for_prompt(kg))
            for kg in sample_kgs
        ]
    return [prompts.render("fact_vs_text", input=line, context=text) for text in samples]


def _score_fact_batch(
    facts: Sequence[Fact],
    scorer: Scorer,
    sample_kgs: Sequence[KnowledgeGraph],
    samples: Sequence[str],
    client: LlmClient | None,
    params: GenerationParams | None,
) -> _BatchOutcome:
    n = len(sample_kgs)
    if scorer is Scorer.FREQUENCY:
        return _BatchOutcome(
            scores=[
                FactScore(f, frequency_score(f, sample_kgs), scorer.value, n, n) for f in facts
            ]
        )

    if client is None or params is None:
        raise ValueError(f"scorer {scorer.value!r} needs an LLM client and params")

    rows = [_support_prompts(f, scorer, sample_kgs, samples) for f in facts]
    flat = [p for row in rows for p in row]
    settled = _settle(client, flat, params)

    outcome = _BatchOutcome(scores=[], llm_calls=len(flat))
    pos = 0
    for f, row in zip(facts, rows):
        verdicts: list[YesNoVerdict] = []
        for result in settled[pos : pos + len(row)]:
            if isinstance(result, LlmError):
                outcome.failed_calls += 1
                outcome.errors.append(f"{fact_sentence(f)}: {result}")
                verdicts.append(YesNoVerdict.INVALID)
            else:
                verdicts.append(parse_yes_no(result))
        pos += len(row)
        outcome.invalid_verdicts += sum(1 for v in verdicts if v is YesNoVerdict.INVALID)
        score, valid = psi_average(verdicts)
        outcome.scores.append(FactScore(f, score, scorer.value, valid, len(row)))
    return outcome


def llm_kg_score(
    fact: Fact,
    sample_kgs: Sequence[KnowledgeGraph],
    client: LlmClient,
    params: GenerationParams,
) -> FactScore:
    """Score one fact against each sample's graph with one LLM judgment each."""
    if not sample_kgs:
        raise NoSamplesError("no sample graphs")
    return _score_fact_batch([fact], Scorer.LLM_KG, sample_kgs, [], client, params).scores[0]


def llm_text_score(
    fact: Fact,
    samples: Sequence[str],
    client: LlmClient,
    params: GenerationParams,
) -> FactScore:
    """Score one fact against each sample text with one LLM judgment each."""
    if not samples:
        raise NoSamplesError("no samples")
    return _score_fact_batch([fact], Scorer.LLM_TEXT, [], samples, client, params).scores[0]


def aggregate_sentence(
    scores: Sequence[float | None], aggregation: Aggregation | str
) -> float | None:
    """Aggregate fact scores to one sentence score over non-missing values.

    Returns None when every fact score is missing or there are no facts.
    """
    aggregation = Aggregation(aggregation)
    xs = [s for s in scores if s is not None]
    if not xs:
        return None
    if aggregation is Aggregation.MAX:
        return max(xs)
    return sum(xs) / len(xs)


def aggregate_passage(sentence_scores: Sequence[float | None]) -> float | None:
    """Mean over non-missing sentence scores; None when all are missing."""
    xs = [s for s in sentence_scores if s is not None]
    if not xs:
        return None
    return sum(xs) / len(xs)


def kg_size_passage_score(
    sample_kgs: Sequence[KnowledgeGraph], schema: Schema
) -> float:
    """Negated mean size of the schema-restricted sample graphs.

    A passage whose samples consistently yield rich graphs over its own
    vocabulary scores low (more negative); empty graphs score 0.0. This
    is the one place schema restriction is applied.
    """
    if not sample_kgs:
        raise NoSamplesError("no sample graphs")
    total = sum(len(kg.restrict(schema)) for kg in sample_kgs)
    if total == 0:
        return 0.0
    return -total / len(sample_kgs)


@dataclass
class ScoreDiagnostics:
    invalid_verdicts: int = 0
    failed_calls: int = 0
    scoring_llm_calls: int = 0
    fact_errors: list[str] = field(default_factory=list)
    extraction: dict | None = None

    def to_dict(self) -> dict:
        return {
            "invalid_verdicts": self.invalid_verdicts,
            "failed_calls": self.failed_calls,
            "scoring_llm_calls": self.scoring_llm_calls,
            "fact_errors": list(self.fact_errors),
            "extraction": self.extraction,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScoreDiagnostics":
        return cls(
            invalid_verdicts=data.get("invalid_verdicts", 0),
            failed_calls=data.get("failed_calls", 0),
            scoring_llm_calls=data.get("scoring_llm_calls", 0),
            fact_errors=list(data.get("fact_errors", [])),
            extraction=data.get("extraction"),
        )


@dataclass
class ScoreReport:
    """All scores for one passage: per fact, per sentence, whole passage."""

    instance_id: str
    scorer: str
    aggregation: str
    n_samples: int
    sentences: list[str]
    sentence_facts: list[list[FactScore]]
    sentence_scores: list[float | None]
    passage_score: float | None
    passage_fact_mean: float | None
    kg_size_score: float
    diagnostics: ScoreDiagnostics = field(default_factory=ScoreDiagnostics)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "scorer": self.scorer,
            "aggregation": self.aggregation,
            "n_samples": self.n_samples,
            "sentences": [
                {
                    "index": i,
                    "sentence": self.sentences[i],
                    "score": self.sentence_scores[i],
                    "facts": [fs.to_dict() for fs in self.sentence_facts[i]],
                }
                for i in range(len(self.sentences))
            ],
            "passage_score": self.passage_score,
            "passage_fact_mean": self.passage_fact_mean,
            "kg_size_score": self.kg_size_score,
            "diagnostics": self.diagnostics.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScoreReport":
        rows = data["sentences"]
        return cls(
            instance_id=data["instance_id"],
            scorer=data["scorer"],
            aggregation=data["aggregation"],
            n_samples=data["n_samples"],
            sentences=[r["sentence"] for r in rows],
            sentence_facts=[[FactScore.from_dict(f) for f in r["facts"]] for r in rows],
            sentence_scores=[r["score"] for r in rows],
            passage_score=data["passage_score"],
            passage_fact_mean=data["passage_fact_mean"],
            kg_size_score=data["kg_size_score"],
            diagnostics=ScoreDiagnostics.from_dict(data.get("diagnostics", {})),
        )


def score_instance(
    extraction: PassageExtraction,
    scorer: Scorer | str,
    aggregation: Aggregation | str = Aggregation.MEAN,
    client: LlmClient | None = None,
    params: GenerationParams | None = None,
    n_samples: int | None = None,
) -> ScoreReport:
    """Score every fact of a passage and aggregate to sentences and passage.

    A fact appearing in several sentences is scored once and the score is
    reused in each sentence. ``n_samples`` restricts scoring to the first
    n samples (prefix, not a random subset); None uses all of them.
    Per-fact failures become missing scores and diagnostics entries; they
    never abort the remaining facts.
    """
    scorer = Scorer(scorer)
    aggregation = Aggregation(aggregation)

    total = len(extraction.sample_kgs)
    if n_samples is None:
        n_samples = total
    if not 1 <= n_samples <= total:
        raise ValueError(f"n_samples must be in 1..{total}, got {n_samples}")
    sample_kgs = extraction.sample_kgs[:n_samples]
    samples = extraction.samples[:n_samples]
    if not sample_kgs:
        raise NoSamplesError("extraction has no samples")

    # one score per distinct fact, first-occurrence order across sentences
    unique: dict[tuple[str, str, str], Fact] = {}
    for kg in extraction.sentence_kgs:
        for f in kg:
            unique.setdefault(f.key, f)

    outcome = _score_fact_batch(
        list(unique.values()), scorer, sample_kgs, samples, client, params
    )
    by_key = {fs.fact.key: fs for fs in outcome.scores}

    sentence_facts = [[by_key[f.key] for f in kg] for kg in extraction.sentence_kgs]
    sentence_scores = [
        aggregate_sentence([fs.score for fs in row], aggregation) for row in sentence_facts
    ]
    passage_score = aggregate_passage(sentence_scores)
    passage_fact_mean = aggregate_passage([fs.score for fs in outcome.scores])

    diagnostics = ScoreDiagnostics(
        invalid_verdicts=outcome.invalid_verdicts,
        failed_calls=outcome.failed_calls,
        scoring_llm_calls=outcome.llm_calls,
        fact_errors=outcome.errors,
        extraction=extraction.diagnostics.to_dict(),
    )

    return ScoreReport(
        instance_id=extraction.instance_id,
        scorer=scorer.value,
        aggregation=aggregation.value,
        n_samples=n_samples,
        sentences=list(extraction.sentences),
        sentence_facts=sentence_facts,
        sentence_scores=sentence_scores,
        passage_score=passage_score,
        passage_fact_mean=passage_fact_mean,
        kg_size_score=kg_size_passage_score(sample_kgs, extraction.sample_schema),
        diagnostics=diagnostics,
    )
