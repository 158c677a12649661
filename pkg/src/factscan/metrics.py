"""Ranking and correlation metrics for detector evaluation.

Implemented directly (no numerics dependency) because the exact
tie-handling semantics are part of the contract: average precision is
the step-sum formulation with tied scores grouped into blocks, and
Spearman is Pearson on mean ranks with ties sharing their average rank.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from itertools import groupby
from typing import Sequence


class DegenerateLabels(ValueError):
    """AUC-PR needs at least one positive and one negative label."""


class ConstantInput(ValueError):
    """Correlation is undefined when either input is constant."""


@dataclass
class MetricResult:
    """One evaluation outcome with exclusion accounting.

    ``n`` items entered the metric; ``n_excluded`` were dropped first
    (missing scores under the exclude policy). Metrics that do not apply
    to a given task level are None.
    """

    auc_pr: float | None
    pearson: float | None
    spearman: float | None
    n: int
    n_excluded: int

    def to_dict(self) -> dict:
        return {
            "auc_pr": self.auc_pr,
            "pearson": self.pearson,
            "spearman": self.spearman,
            "n": self.n,
            "n_excluded": self.n_excluded,
        }


def auc_pr(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Area under the precision-recall curve via average precision.

    Items are ranked by descending score; tied scores form one block that
    contributes a single (recall increment x precision) term, so the
    result is invariant under any strictly monotone transform of the
    scores. With all scores equal it degenerates to the positive rate.
    """
    if len(scores) != len(labels):
        raise ValueError(f"{len(scores)} scores vs {len(labels)} labels")
    if not scores:
        raise DegenerateLabels("no items")
    n_pos = sum(1 for l in labels if l)
    if n_pos == 0 or n_pos == len(labels):
        raise DegenerateLabels("labels must include a positive and a negative")

    ranked = sorted(zip(scores, labels), key=lambda t: -t[0])
    ap = 0.0
    tp = 0
    seen = 0
    for _, block in groupby(ranked, key=lambda t: t[0]):
        items = list(block)
        block_tp = sum(1 for _, l in items if l)
        tp += block_tp
        seen += len(items)
        if block_tp:
            precision = tp / seen
            ap += (block_tp / n_pos) * precision
    return ap


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson product-moment correlation."""
    if len(xs) != len(ys):
        raise ValueError(f"{len(xs)} xs vs {len(ys)} ys")
    if len(xs) < 2:
        raise ValueError("need at least two points")
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantInput("an input sequence is constant")
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return sxy / math.sqrt(sxx * syy)


def average_ranks(xs: Sequence[float]) -> list[float]:
    """1-based ranks with ties sharing the mean of their rank positions."""
    order = sorted(range(len(xs)), key=lambda i: xs[i])
    ranks = [0.0] * len(xs)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        mean_rank = (i + j + 2) / 2  # positions are 1-based
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson on average ranks."""
    return pearson(average_ranks(xs), average_ranks(ys))


def random_baseline(n: int, seed: int) -> list[float]:
    """Seeded uniform [0, 1) scores, the no-skill reference ranking."""
    rng = random.Random(seed)
    return [rng.random() for _ in range(n)]
