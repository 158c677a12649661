"""Shared fixtures: a deterministic fake LLM backend and a small corpus.

FakeLlm answers every pipeline prompt from a scripted world: entity and
relation lists per passage, triples per sentence and per sample, rewrite
rules and judgments for correction. Its behavior is pure string
dispatch, so every test run (and every recorded session) is identical.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field

import pytest

from factscan.dataset import DetectionInstance
from factscan.kg import Fact, KnowledgeGraph, normalize_term
from factscan.llm import GenerationParams, LlmClient


def mk_fact(head: str, relation: str, tail: str) -> Fact:
    return Fact.from_raw(head, relation, tail)


def kg_of(*triples: tuple[str, str, str]) -> KnowledgeGraph:
    return KnowledgeGraph(Fact.from_raw(*t) for t in triples)


def csv_lines(triples: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(triples)
    return buf.getvalue()


def _between(text: str, start: str, end: str | None = None) -> str:
    i = text.find(start)
    if i == -1:
        return ""
    i += len(start)
    if end is None:
        return text[i:].strip()
    j = text.find(end, i)
    if j == -1:
        return text[i:].strip()
    return text[i:j].strip()


def _norm(s: str) -> str:
    return re.sub(r"\s+", " ", s.strip()).casefold()


@dataclass
class FakeWorld:
    entities: dict[str, list[str]] = field(default_factory=dict)
    relations: dict[str, list[str]] = field(default_factory=dict)
    sentence_triples: dict[str, str] = field(default_factory=dict)  # sentence -> completion
    sample_triples: dict[str, str] = field(default_factory=dict)  # sample text -> completion
    corrections: dict[str, str] = field(default_factory=dict)  # original -> corrected
    judgments: dict[str, str] = field(default_factory=dict)  # sentence -> yes/no/refused


class FakeLlm:
    """Rule-based backend; dispatches on template markers in the prompt."""

    name = "scripted"

    def __init__(self, world: FakeWorld):
        self.world = world

    def generate(self, prompt: str, params: GenerationParams) -> str:
        if "Extract every distinct entity" in prompt:
            passage = _between(prompt, "Text:\n")
            return json.dumps(self.world.entities[passage])
        if "identify the types of relations" in prompt:
            passage = _between(prompt, "Text:\n")
            return json.dumps(self.world.relations[passage])
        if "extract facts from the sentence alone" in prompt.casefold():
            sentence = _between(prompt, "Sentence:\n", "\n\nReturn one triple")
            return self.world.sentence_triples[sentence]
        if "Extract every fact stated in the whole text" in prompt:
            sample = _between(prompt, "Text:\n", "\n\nReturn one triple")
            return self.world.sample_triples[sample]
        if "supported by the knowledge graph" in prompt:
            return self._fact_vs_kg(prompt)
        if "supported by the text" in prompt:
            return self._fact_vs_text(prompt)
        if "supported by the reference source" in prompt:
            return self._fact_vs_source(prompt)
        if "Return the corrected passage" in prompt:
            return self._correction(prompt)
        if "reference source supports the sentence" in prompt:
            return self._judge(prompt)
        raise AssertionError(f"FakeLlm got an unexpected prompt: {prompt[:100]!r}")

    @staticmethod
    def _parse_fact_line(prompt: str) -> tuple[str, str, str] | None:
        line = _between(prompt, "Fact:\n", "\n\nAnswer with")
        m = re.match(r"^\((.*)\)$", line)
        if not m:
            return None
        parts = [p.strip() for p in m.group(1).split(", ")]
        if len(parts) != 3:
            return None
        return parts[0], parts[1], parts[2]

    def _fact_vs_kg(self, prompt: str) -> str:
        fact = self._parse_fact_line(prompt)
        if fact is None:
            return "no"
        graph = _between(prompt, "triple per line):\n", "\n\nFact:")
        keys = set()
        for row in csv.reader(io.StringIO(graph)):
            if len(row) == 3:
                keys.add(tuple(_norm(x) for x in row))
        return "yes" if tuple(_norm(x) for x in fact) in keys else "no"

    def _fact_vs_text(self, prompt: str) -> str:
        fact = self._parse_fact_line(prompt)
        if fact is None:
            return "no"
        context = _norm(_between(prompt, "Text:\n", "\n\nFact:"))
        head, _, tail = fact
        return "yes" if _norm(head) in context and _norm(tail) in context else "no"

    def _fact_vs_source(self, prompt: str) -> str:
        fact = self._parse_fact_line(prompt)
        if fact is None:
            return "no"
        source = _norm(_between(prompt, "Reference source:\n", "\n\nFact:"))
        head, _, tail = fact
        return "yes" if _norm(head) in source and _norm(tail) in source else "no"

    def _numbered_block(self, prompt: str) -> list[str]:
        block = _between(prompt, "Passage sentences:\n", "\n\n")
        sentences = []
        for line in block.splitlines():
            m = re.match(r"^(\d+)\.\s+(.*)$", line)
            if m:
                sentences.append(m.group(2))
        return sentences

    def _correction(self, prompt: str) -> str:
        sentences = self._numbered_block(prompt)
        flagged: set[int] = set()
        if "Sentences flagged as incorrect:" in prompt:
            block = _between(prompt, "Sentences flagged as incorrect:\n", "\n\nReturn")
            for line in block.splitlines():
                m = re.match(r"^(\d+)\.", line.strip())
                if m:
                    flagged.add(int(m.group(1)))
        elif "Facts flagged as incorrect:" in prompt:
            block = _between(prompt, "Facts flagged as incorrect:\n", "\n\nReturn")
            for line in block.splitlines():
                m = re.match(r"^Sentence (\d+):", line.strip())
                if m:
                    flagged.add(int(m.group(1)))
        else:
            # baseline mode: the model is told nothing, it rewrites nothing
            flagged = set()
        out = []
        for i, s in enumerate(sentences, start=1):
            if i in flagged:
                out.append(f"{i}. {self.world.corrections.get(s, s)}")
            else:
                out.append(f"{i}. {s}")
        return "\n".join(out)

    def _judge(self, prompt: str) -> str:
        sentence = _between(prompt, "Sentence to evaluate:\n", "\n\nAnswer with")
        if sentence in self.world.judgments:
            return self.world.judgments[sentence]
        source = _norm(_between(prompt, "Reference source:\n", "\n\nCorrected passage:"))
        return "yes" if _norm(sentence) in source else "no"


# ---------------------------------------------------------------------------
# fixture corpus: three small passages with fully scripted extractions

ADA_PASSAGE = "Ada Lovelace was born in London in 1815. She wrote the first computer program."
ADA_S1 = "Ada Lovelace was born in London in 1815."
ADA_S2 = "She wrote the first computer program."
ADA_BIO = (
    "Ada Lovelace was born in London in 1815. "
    "She published the first algorithm intended for a machine."
)
ADA_SAMPLES = [
    "Ada Lovelace was born in London in 1815 and is known for the Analytical Engine.",
    "Ada Lovelace was born in 1815. She wrote early notes on computing.",
    "Ada Lovelace, born in London, collaborated with Charles Babbage.",
]

MILO_PASSAGE = "Milo Vrabec is a Bosnian footballer. He plays for Zeljeznicar as a goalkeeper."
MILO_S1 = "Milo Vrabec is a Bosnian footballer."
MILO_S2 = "He plays for Zeljeznicar as a goalkeeper."
MILO_BIO = "Milo Vrabec is a Slovenian footballer who plays as a goalkeeper for Zeljeznicar."
MILO_SAMPLES = [
    "Milo Vrabec is a Slovenian footballer. He keeps goal for Zeljeznicar.",
    "Milo Vrabec, a Slovenian goalkeeper, plays for Zeljeznicar.",
    "Milo Vrabec is a footballer from Slovenia.",
]

MIRA_PASSAGE = (
    "Mira Holt is an astronomer. She discovered the comet Veles in 1998. "
    "She teaches at North Ridge University."
)
MIRA_S1 = "Mira Holt is an astronomer."
MIRA_S2 = "She discovered the comet Veles in 1998."
MIRA_S3 = "She teaches at North Ridge University."
MIRA_BIO = (
    "Mira Holt is an astronomer who discovered the asteroid Veles in 1999. "
    "She works at the Copern Observatory."
)
MIRA_SAMPLES = [
    "Mira Holt is an astronomer. She discovered the asteroid Veles.",
    "Mira Holt studies the night sky.",
    "Mira Holt is an astronomer. The asteroid Veles was found by her in 1999.",
]

ADA_CORRECTED_S2 = "She published the first algorithm intended for a machine."
MILO_CORRECTED_S1 = "Milo Vrabec is a Slovenian footballer."
MIRA_CORRECTED_S2 = "She discovered the asteroid Veles in 1999."
MIRA_CORRECTED_S3 = "It is not known where Mira Holt teaches."


def build_world() -> FakeWorld:
    world = FakeWorld()

    world.entities[ADA_PASSAGE] = ["Ada Lovelace", "London", "1815", "first computer program"]
    world.relations[ADA_PASSAGE] = ["BORN IN", "YEAR OF BIRTH", "AUTHOR OF"]
    world.sentence_triples[ADA_S1] = csv_lines(
        [["Ada Lovelace", "BORN IN", "London"], ["Ada Lovelace", "YEAR OF BIRTH", "1815"]]
    )
    world.sentence_triples[ADA_S2] = csv_lines(
        [["Ada Lovelace", "AUTHOR OF", "first computer program"]]
    )
    world.sample_triples[ADA_SAMPLES[0]] = csv_lines(
        [
            ["Ada Lovelace", "BORN IN", "London"],
            ["Ada Lovelace", "YEAR OF BIRTH", "1815"],
            ["Ada Lovelace", "WORKED ON", "Analytical Engine"],
        ]
    )
    world.sample_triples[ADA_SAMPLES[1]] = csv_lines(
        [["Ada Lovelace", "YEAR OF BIRTH", "1815"]]
    )
    # noise line exercises the skipped-line counter end to end
    world.sample_triples[ADA_SAMPLES[2]] = "Here are the extracted facts:\n" + csv_lines(
        [
            ["Ada Lovelace", "BORN IN", "London"],
            ["Ada Lovelace", "COLLABORATED WITH", "Charles Babbage"],
        ]
    )

    world.entities[MILO_PASSAGE] = [
        "Milo Vrabec", "Bosnian", "footballer", "Zeljeznicar", "goalkeeper",
    ]
    world.relations[MILO_PASSAGE] = ["NATIONALITY", "OCCUPATION", "CURRENT CLUB", "POSITION"]
    world.sentence_triples[MILO_S1] = csv_lines(
        [["Milo Vrabec", "NATIONALITY", "Bosnian"], ["Milo Vrabec", "OCCUPATION", "footballer"]]
    )
    world.sentence_triples[MILO_S2] = csv_lines(
        [["Milo Vrabec", "CURRENT CLUB", "Zeljeznicar"], ["Milo Vrabec", "POSITION", "goalkeeper"]]
    )
    world.sample_triples[MILO_SAMPLES[0]] = csv_lines(
        [["Milo Vrabec", "NATIONALITY", "Slovenian"], ["Milo Vrabec", "CURRENT CLUB", "Zeljeznicar"]]
    )
    world.sample_triples[MILO_SAMPLES[1]] = csv_lines(
        [
            ["Milo Vrabec", "NATIONALITY", "Slovenian"],
            ["Milo Vrabec", "CURRENT CLUB", "Zeljeznicar"],
            ["Milo Vrabec", "POSITION", "goalkeeper"],
        ]
    )
    world.sample_triples[MILO_SAMPLES[2]] = csv_lines(
        [["Milo Vrabec", "OCCUPATION", "footballer"], ["Milo Vrabec", "COUNTRY", "Slovenia"]]
    )

    world.entities[MIRA_PASSAGE] = [
        "Mira Holt", "astronomer", "comet Veles", "1998", "North Ridge University",
    ]
    world.relations[MIRA_PASSAGE] = ["OCCUPATION", "DISCOVERED", "YEAR OF DISCOVERY", "TEACHES AT"]
    world.sentence_triples[MIRA_S1] = csv_lines([["Mira Holt", "OCCUPATION", "astronomer"]])
    world.sentence_triples[MIRA_S2] = csv_lines(
        [["Mira Holt", "DISCOVERED", "comet Veles"], ["comet Veles", "YEAR OF DISCOVERY", "1998"]]
    )
    world.sentence_triples[MIRA_S3] = ""  # empty graph: missing sentence score downstream
    world.sample_triples[MIRA_SAMPLES[0]] = csv_lines(
        [["Mira Holt", "OCCUPATION", "astronomer"], ["Mira Holt", "DISCOVERED", "asteroid Veles"]]
    )
    world.sample_triples[MIRA_SAMPLES[1]] = ""  # a sample with an empty graph
    world.sample_triples[MIRA_SAMPLES[2]] = csv_lines(
        [
            ["Mira Holt", "OCCUPATION", "astronomer"],
            ["asteroid Veles", "YEAR OF DISCOVERY", "1999"],
        ]
    )

    world.corrections[ADA_S2] = ADA_CORRECTED_S2
    world.corrections[MILO_S1] = MILO_CORRECTED_S1
    world.corrections[MIRA_S2] = MIRA_CORRECTED_S2
    world.corrections[MIRA_S3] = MIRA_CORRECTED_S3

    world.judgments[ADA_S1] = "yes"
    world.judgments[ADA_S2] = "no"
    world.judgments[ADA_CORRECTED_S2] = "yes"
    world.judgments[MILO_S1] = "no"
    world.judgments[MILO_CORRECTED_S1] = "yes"
    world.judgments[MILO_S2] = "yes"
    world.judgments[MIRA_S1] = "yes"
    world.judgments[MIRA_S2] = "no"
    world.judgments[MIRA_CORRECTED_S2] = "yes"
    world.judgments[MIRA_S3] = "no"
    world.judgments[MIRA_CORRECTED_S3] = "refused"
    return world


def build_instances() -> list[DetectionInstance]:
    return [
        DetectionInstance(
            id="instance-ada",
            passage=ADA_PASSAGE,
            sentences=[ADA_S1, ADA_S2],
            samples=list(ADA_SAMPLES),
            sentence_labels=["accurate", "minor-inaccurate"],
            source_bio=ADA_BIO,
            concept_name="Ada Lovelace",
        ),
        DetectionInstance(
            id="instance-milo",
            passage=MILO_PASSAGE,
            sentences=[MILO_S1, MILO_S2],
            samples=list(MILO_SAMPLES),
            sentence_labels=["major-inaccurate", "accurate"],
            source_bio=MILO_BIO,
            concept_name="Milo Vrabec",
        ),
        DetectionInstance(
            id="instance-mira",
            passage=MIRA_PASSAGE,
            sentences=[MIRA_S1, MIRA_S2, MIRA_S3],
            samples=list(MIRA_SAMPLES),
            sentence_labels=["accurate", "minor-inaccurate", "major-inaccurate"],
            source_bio=MIRA_BIO,
            concept_name="Mira Holt",
        ),
    ]


def dataset_rows(instances: list[DetectionInstance]) -> list[dict]:
    return [
        {
            "id": inst.id,
            "concept_name": inst.concept_name,
            "gpt3_text": inst.passage,
            "gpt3_sentences": inst.sentences,
            "annotation": inst.sentence_labels,
            "gpt3_text_samples": inst.samples,
            "wiki_bio_text": inst.source_bio,
        }
        for inst in instances
    ]


@pytest.fixture(scope="session")
def world() -> FakeWorld:
    return build_world()


@pytest.fixture(scope="session")
def instances() -> list[DetectionInstance]:
    return build_instances()


@pytest.fixture(scope="session")
def dataset_file(tmp_path_factory, instances) -> str:
    path = tmp_path_factory.mktemp("data") / "fixture_dataset.json"
    path.write_text(
        json.dumps(dataset_rows(instances), indent=2, ensure_ascii=False), encoding="utf-8"
    )
    return str(path)


@pytest.fixture()
def fake_client(world) -> LlmClient:
    return LlmClient(FakeLlm(world))


def record_fixture_session(path: str, world: FakeWorld, instances) -> None:
    """Run the full pipeline against FakeLlm and record every exchange.

    Covers extraction, both LLM scorers and all three correction modes
    with the default thresholds, so CLI tests can replay any combination.
    """
    from factscan.config import RunConfig
    from factscan.correction import CorrectionMode, run_correction
    from factscan.extraction import KgExtractor
    from factscan.llm import record_session
    from factscan.scoring import Scorer, score_instance

    config = RunConfig()
    client = LlmClient(FakeLlm(world))
    extractor = KgExtractor(client, config.detection_params())
    for inst in instances:
        extraction = extractor.extract_all(inst)
        reports = {
            scorer: score_instance(
                extraction,
                scorer,
                config.aggregation,
                client=client,
                params=config.detection_params(),
            )
            for scorer in (Scorer.LLM_TEXT, Scorer.LLM_KG)
        }
        # correction flags follow the default-config report, like the CLI
        report = reports[Scorer(config.scorer)]
        thresholds = {
            CorrectionMode.BASELINE: None,
            CorrectionMode.SENTENCE: config.sentence_threshold,
            CorrectionMode.FACT: config.fact_threshold,
        }
        for mode, threshold in thresholds.items():
            run_correction(
                inst,
                report,
                mode,
                client,
                config.correction_params(),
                config.judge_params(),
                threshold=threshold,
            )
    record_session(client.exchanges, path)


@pytest.fixture(scope="session")
def session_file(tmp_path_factory, world, instances) -> str:
    path = tmp_path_factory.mktemp("sessions") / "fixture_session.jsonl"
    record_fixture_session(str(path), world, instances)
    return str(path)
