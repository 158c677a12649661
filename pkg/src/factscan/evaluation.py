"""Evaluation of score reports against gold sentence labels.

Sentence level: AUC-PR of sentence scores against binarized labels
(any inaccuracy counts as hallucinated). Passage level: Pearson and
Spearman between passage scores and the fraction of hallucinated
sentences. Sentences or passages with missing scores are excluded by
default, with an explicit accounting; the alternative policy imputes
0.0 (treat unscorable as factual). Every result records which policy
produced it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .dataset import DetectionInstance, binarize_label, passage_gold_score
from .kg import Fact
from .llm import GenerationParams, LlmClient, LlmError
from .metrics import (
    ConstantInput,
    DegenerateLabels,
    MetricResult,
    auc_pr,
    pearson,
    spearman,
)
from .parsing import YesNoVerdict, parse_yes_no
from .scoring import (
    Aggregation,
    ScoreReport,
    Scorer,
    fact_sentence,
    score_instance,
)
from .extraction import PassageExtraction
from . import prompts

MISSING_EXCLUDE = "exclude"
MISSING_IMPUTE_ZERO = "impute_zero"
MISSING_MODES = (MISSING_EXCLUDE, MISSING_IMPUTE_ZERO)


class IdMismatch(ValueError):
    """A report's instance id is absent from the dataset."""


@dataclass
class EvaluationResult:
    sentence: MetricResult
    passage: MetricResult | None
    missing_mode: str

    def to_dict(self) -> dict:
        return {
            "sentence": self.sentence.to_dict(),
            "passage": self.passage.to_dict() if self.passage else None,
            "missing_mode": self.missing_mode,
        }


def _check_mode(missing_mode: str) -> None:
    if missing_mode not in MISSING_MODES:
        raise ValueError(f"missing_mode must be one of {MISSING_MODES}, got {missing_mode!r}")


def _labeled_instances(
    reports: Sequence[ScoreReport], instances: Sequence[DetectionInstance]
) -> list[tuple[ScoreReport, DetectionInstance]]:
    by_id = {inst.id: inst for inst in instances}
    pairs = []
    for report in reports:
        inst = by_id.get(report.instance_id)
        if inst is None:
            raise IdMismatch(f"report id {report.instance_id!r} is not in the dataset")
        if inst.sentence_labels is None:
            raise ValueError(f"instance {inst.id!r} has no sentence labels")
        if len(report.sentence_scores) != len(inst.sentences):
            raise ValueError(
                f"instance {inst.id!r}: report has {len(report.sentence_scores)} "
                f"sentence scores for {len(inst.sentences)} sentences"
            )
        pairs.append((report, inst))
    return pairs


def sentence_items(
    reports: Sequence[ScoreReport],
    instances: Sequence[DetectionInstance],
    missing_mode: str = MISSING_EXCLUDE,
) -> tuple[list[float], list[bool], int]:
    """Pool (score, hallucinated) sentence pairs across the corpus.

    Returns (scores, labels, n_excluded) after applying the missing-score
    policy.
    """
    _check_mode(missing_mode)
    scores: list[float] = []
    labels: list[bool] = []
    excluded = 0
    for report, inst in _labeled_instances(reports, instances):
        for score, label in zip(report.sentence_scores, inst.sentence_labels):
            if score is None:
                if missing_mode == MISSING_EXCLUDE:
                    excluded += 1
                    continue
                score = 0.0
            scores.append(score)
            labels.append(binarize_label(label))
    return scores, labels, excluded


def passage_items(
    reports: Sequence[ScoreReport],
    instances: Sequence[DetectionInstance],
    missing_mode: str = MISSING_EXCLUDE,
) -> tuple[list[float], list[float], int]:
    """Pool (passage score, gold hallucination fraction) pairs."""
    _check_mode(missing_mode)
    xs: list[float] = []
    ys: list[float] = []
    excluded = 0
    for report, inst in _labeled_instances(reports, instances):
        score = report.passage_score
        if score is None:
            if missing_mode == MISSING_EXCLUDE:
                excluded += 1
                continue
            score = 0.0
        xs.append(score)
        ys.append(passage_gold_score(inst.sentence_labels))
    return xs, ys, excluded


def evaluate_reports(
    reports: Sequence[ScoreReport],
    instances: Sequence[DetectionInstance],
    missing_mode: str = MISSING_EXCLUDE,
) -> EvaluationResult:
    """Compute sentence-level AUC-PR and passage-level correlations."""
    scores, labels, s_excluded = sentence_items(reports, instances, missing_mode)
    sentence = MetricResult(
        auc_pr=auc_pr(scores, labels),
        pearson=None,
        spearman=None,
        n=len(scores),
        n_excluded=s_excluded,
    )

    passage: MetricResult | None = None
    xs, ys, p_excluded = passage_items(reports, instances, missing_mode)
    if len(xs) >= 2:
        try:
            passage = MetricResult(
                auc_pr=None,
                pearson=pearson(xs, ys),
                spearman=spearman(xs, ys),
                n=len(xs),
                n_excluded=p_excluded,
            )
        except ConstantInput:
            passage = MetricResult(
                auc_pr=None, pearson=None, spearman=None, n=len(xs), n_excluded=p_excluded
            )
    return EvaluationResult(sentence=sentence, passage=passage, missing_mode=missing_mode)


@dataclass
class SweepPoint:
    """Metrics obtained when every instance is scored with its first n samples."""

    n: int
    sentence: MetricResult | None
    passage: MetricResult | None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "sentence": self.sentence.to_dict() if self.sentence else None,
            "passage": self.passage.to_dict() if self.passage else None,
        }


def sweep_samples(
    extractions: Sequence[PassageExtraction],
    instances: Sequence[DetectionInstance],
    scorer: Scorer | str,
    aggregation: Aggregation | str,
    n_values: Sequence[int],
    client: LlmClient | None = None,
    params: GenerationParams | None = None,
    missing_mode: str = MISSING_EXCLUDE,
) -> list[SweepPoint]:
    """Rescore the corpus with sample-count prefixes and evaluate each.

    For each n the first n samples of every instance are used (prefixes,
    never random subsets), so the point at the full sample count equals
    the full-sample evaluation. Points where a metric is undefined
    (degenerate labels, constant scores) carry None instead of aborting
    the sweep.
    """
    max_n = min(len(e.samples) for e in extractions)
    for n in n_values:
        if not 1 <= n <= max_n:
            raise ValueError(f"n={n} outside 1..{max_n} (smallest sample count)")

    points: list[SweepPoint] = []
    for n in n_values:
        reports = [
            score_instance(e, scorer, aggregation, client=client, params=params, n_samples=n)
            for e in extractions
        ]
        try:
            result = evaluate_reports(reports, instances, missing_mode)
            sentence, passage = result.sentence, result.passage
        except DegenerateLabels:
            sentence, passage = None, None
        points.append(SweepPoint(n=n, sentence=sentence, passage=passage))
    return points


def annotate_fact_judge(
    fact: Fact,
    source: str,
    client: LlmClient,
    params: GenerationParams,
) -> bool | None:
    """Ask an LLM whether a fact is supported by a reference source.

    Returns True (supported), False (not supported), or None when the
    call fails or the verdict cannot be parsed; unparsable judgments
    leave the fact unannotated rather than guessing.
    """
    prompt = prompts.render("annotate_fact", source=source, input=fact_sentence(fact))
    try:
        completion = client.complete(prompt, params).completion
    except LlmError:
        return None
    verdict = parse_yes_no(completion)
    if verdict is YesNoVerdict.YES:
        return True
    if verdict is YesNoVerdict.NO:
        return False
    return None
