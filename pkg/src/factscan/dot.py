"""Graphviz DOT export of a scored fact graph.

One edge per distinct fact, labeled with the relation, drawn head to
tail. Edge width grows with the hallucination score and the color flags
the threshold decision: red above the threshold, green at or below,
gray when the score is missing. Node identifiers are the normalized
entity names; labels show the original surface forms.
"""

from __future__ import annotations

from .scoring import FactScore, ScoreReport

_ESCAPES = str.maketrans({'"': '\\"', "\\": "\\\\"})


def _quote(s: str) -> str:
    return '"' + s.translate(_ESCAPES) + '"'


def _penwidth(score: float | None) -> float:
    if score is None:
        return 1.0
    return round(1.0 + 4.0 * score, 3)


def _color(score: float | None, threshold: float) -> str:
    if score is None:
        return "gray"
    return "red" if score > threshold else "green"


def export_dot(report: ScoreReport, threshold: float) -> str:
    """Render the report's fact graph as a DOT digraph."""
    unique: dict[tuple[str, str, str], FactScore] = {}
    for row in report.sentence_facts:
        for fs in row:
            unique.setdefault(fs.fact.key, fs)

    nodes: dict[str, str] = {}  # normalized id -> raw label
    for fs in unique.values():
        for term in (fs.fact.head, fs.fact.tail):
            nodes.setdefault(term.normalized, term.raw)

    lines = [f"digraph {_quote(report.instance_id or 'facts')} {{"]
    lines.append("  rankdir=LR;")
    lines.append("  node [shape=box, style=rounded];")
    for node_id in sorted(nodes):
        lines.append(f"  {_quote(node_id)} [label={_quote(nodes[node_id])}];")
    for key in sorted(unique):
        fs = unique[key]
        f = fs.fact
        attrs = ", ".join(
            [
                f"label={_quote(f.relation.raw)}",
                f"penwidth={_penwidth(fs.score)}",
                f"color={_quote(_color(fs.score, threshold))}",
            ]
        )
        lines.append(
            f"  {_quote(f.head.normalized)} -> {_quote(f.tail.normalized)} [{attrs}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
