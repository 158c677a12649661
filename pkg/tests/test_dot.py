"""DOT export: structure, widths, threshold colors, determinism."""

import pytest

from factscan import GenerationParams, KgExtractor, Scorer, export_dot, score_instance
from factscan.scoring import FactScore, ScoreReport

from conftest import mk_fact

PARAMS = GenerationParams(model_id="test-model")


@pytest.fixture()
def ada_report(fake_client, instances):
    extraction = KgExtractor(fake_client, PARAMS).extract_all(instances[0])
    return score_instance(extraction, Scorer.FREQUENCY, "max")


def report_of(*rows):
    """rows: (head, rel, tail, score) per fact, one sentence per row."""
    sentence_facts = [
        [FactScore(mk_fact(h, r, t), s, "frequency", 3, 3)] for h, r, t, s in rows
    ]
    return ScoreReport(
        instance_id="hand-built",
        scorer="frequency",
        aggregation="max",
        n_samples=3,
        sentences=["s"] * len(rows),
        sentence_facts=sentence_facts,
        sentence_scores=[row[0].score for row in sentence_facts],
        passage_score=None,
        passage_fact_mean=None,
        kg_size_score=0.0,
    )


class TestStructure:
    def test_digraph_named_after_instance(self, ada_report):
        dot = export_dot(ada_report, threshold=0.4)
        assert dot.startswith('digraph "instance-ada" {')
        assert dot.endswith("}\n")

    def test_every_entity_is_a_node(self, ada_report):
        dot = export_dot(ada_report, threshold=0.4)
        for node_id, label in [
            ("ada lovelace", "Ada Lovelace"),
            ("london", "London"),
            ("1815", "1815"),
            ("first computer program", "first computer program"),
        ]:
            assert f'"{node_id}" [label="{label}"];' in dot

    def test_one_edge_per_distinct_fact(self, ada_report):
        dot = export_dot(ada_report, threshold=0.4)
        assert dot.count(" -> ") == 3
        assert '"ada lovelace" -> "london"' in dot
        assert 'label="BORN IN"' in dot

    def test_repeated_fact_drawn_once(self):
        report = report_of(("a", "r", "b", 0.5), ("a", "r", "b", 0.5))
        assert export_dot(report, 0.4).count(" -> ") == 1

    def test_deterministic(self, ada_report):
        assert export_dot(ada_report, 0.4) == export_dot(ada_report, 0.4)


class TestEdgeStyling:
    def test_width_grows_with_score(self):
        dot = export_dot(report_of(("a", "r", "b", 0.0), ("c", "r", "d", 1.0)), 0.4)
        assert "penwidth=1.0" in dot
        assert "penwidth=5.0" in dot

    def test_width_formula(self):
        dot = export_dot(report_of(("a", "r", "b", 1 / 3)), 0.4)
        assert f"penwidth={round(1 + 4 / 3, 3)}" in dot

    def test_colors_follow_threshold(self):
        dot = export_dot(report_of(("a", "r", "b", 0.45), ("c", "r", "d", 0.35)), 0.4)
        edges = [l for l in dot.splitlines() if " -> " in l]
        assert any('"a" -> "b"' in e and 'color="red"' in e for e in edges)
        assert any('"c" -> "d"' in e and 'color="green"' in e for e in edges)

    def test_score_equal_to_threshold_is_green(self):
        dot = export_dot(report_of(("a", "r", "b", 0.4)), 0.4)
        assert 'color="green"' in dot

    def test_missing_score_is_gray_and_thin(self):
        dot = export_dot(report_of(("a", "r", "b", None)), 0.4)
        edge = next(l for l in dot.splitlines() if " -> " in l)
        assert 'color="gray"' in edge
        assert "penwidth=1.0" in edge

    def test_quotes_in_terms_are_escaped(self):
        report = report_of(('He said "hi"', "quoted as", "greeting", 0.1))
        dot = export_dot(report, 0.4)
        assert '\\"hi\\"' in dot
