"""Knowledge-graph value types: terms, facts, graphs and schemas.

Matching throughout the package is exact string equality after a light
normalization (trim, collapse whitespace, casefold). Normalization is
deliberately conservative: no punctuation stripping, no lemmatization,
no fuzzy matching. Raw surface forms are kept alongside the normalized
forms so nothing shown to a model or an operator loses information.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator

_WS_RUN = re.compile(r"\s+")


class EmptyTermError(ValueError):
    """Raised when a term is empty or whitespace-only after trimming."""


def _normalize(raw: str) -> str:
    return _WS_RUN.sub(" ", raw.strip()).casefold()


@dataclass(frozen=True, eq=False)
class Term:
    """A single entity or relation name.

    Equality and hashing use only the normalized form, so two terms that
    differ in case or internal spacing compare equal. The raw form is
    carried for display and serialization.
    """

    raw: str
    normalized: str

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Term):
            return NotImplemented
        return self.normalized == other.normalized

    def __hash__(self) -> int:
        return hash(self.normalized)

    def __repr__(self) -> str:
        return f"Term({self.raw!r})"


def normalize_term(raw: str) -> Term:
    """Build a Term from raw text.

    Normalization is trim, collapse internal whitespace runs to a single
    space, then casefold. It is idempotent: normalizing a normalized form
    returns the same string.

    Raises EmptyTermError if the input is empty or whitespace-only.
    """
    if not isinstance(raw, str):
        raise TypeError(f"term must be a string, got {type(raw).__name__}")
    normalized = _normalize(raw)
    if not normalized:
        raise EmptyTermError("term is empty after trimming whitespace")
    return Term(raw=raw, normalized=normalized)


@dataclass(frozen=True, eq=False)
class Fact:
    """An ordered (head, relation, tail) triple.

    Equality and hashing use only the normalized fields. The triple is
    ordered: swapping head and tail yields a different fact.
    """

    head: Term
    relation: Term
    tail: Term

    @classmethod
    def from_raw(cls, head: str, relation: str, tail: str) -> "Fact":
        return cls(normalize_term(head), normalize_term(relation), normalize_term(tail))

    @property
    def key(self) -> tuple[str, str, str]:
        """Normalized (head, relation, tail) strings; the identity of the fact."""
        return (self.head.normalized, self.relation.normalized, self.tail.normalized)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Fact):
            return NotImplemented
        return self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        return f"Fact({self.head.raw!r}, {self.relation.raw!r}, {self.tail.raw!r})"

    def to_triple(self) -> list[str]:
        """Serialize as a raw ["head", "relation", "tail"] list."""
        return [self.head.raw, self.relation.raw, self.tail.raw]


@dataclass(frozen=True, eq=False)
class Schema:
    """Entity and relation vocabularies extracted from a text.

    Both collections are deduplicated under normalization and keep first
    occurrence order so downstream rendering is deterministic.
    """

    entities: tuple[Term, ...]
    relations: tuple[Term, ...]

    @classmethod
    def from_terms(cls, entities: Iterable[Term], relations: Iterable[Term]) -> "Schema":
        return cls(_dedupe(entities), _dedupe(relations))

    @property
    def entity_keys(self) -> frozenset[str]:
        return frozenset(t.normalized for t in self.entities)

    @property
    def relation_keys(self) -> frozenset[str]:
        return frozenset(t.normalized for t in self.relations)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Schema):
            return NotImplemented
        return (self.entity_keys, self.relation_keys) == (other.entity_keys, other.relation_keys)

    def __hash__(self) -> int:
        return hash((self.entity_keys, self.relation_keys))

    def union(self, other: "Schema") -> "Schema":
        return Schema.from_terms(
            list(self.entities) + list(other.entities),
            list(self.relations) + list(other.relations),
        )

    def to_dict(self) -> dict:
        return {
            "entities": [t.raw for t in self.entities],
            "relations": [t.raw for t in self.relations],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Schema":
        return cls.from_terms(
            [normalize_term(e) for e in data["entities"]],
            [normalize_term(r) for r in data["relations"]],
        )


def _dedupe(terms: Iterable[Term]) -> tuple[Term, ...]:
    # dict preserves first-occurrence order; Term hashes on normalized form
    return tuple(dict.fromkeys(terms))


class KnowledgeGraph:
    """A deduplicated, insertion-ordered collection of facts.

    Set semantics (membership, equality) are by normalized triple.
    Iteration order is first-occurrence order, which keeps every
    serialization of the same extraction byte-stable across runs.
    Entities and relations are always recomputed projections of the
    facts, so they cannot drift.
    """

    __slots__ = ("_facts", "_keys")

    def __init__(self, facts: Iterable[Fact] = ()):
        deduped: dict[tuple[str, str, str], Fact] = {}
        for f in facts:
            deduped.setdefault(f.key, f)
        self._facts: tuple[Fact, ...] = tuple(deduped.values())
        self._keys: frozenset[tuple[str, str, str]] = frozenset(deduped)

    @property
    def facts(self) -> tuple[Fact, ...]:
        return self._facts

    @property
    def entities(self) -> tuple[Term, ...]:
        terms: list[Term] = []
        for f in self._facts:
            terms.append(f.head)
            terms.append(f.tail)
        return _dedupe(terms)

    @property
    def relations(self) -> tuple[Term, ...]:
        return _dedupe(f.relation for f in self._facts)

    def __contains__(self, fact: Fact) -> bool:
        return fact.key in self._keys

    def __len__(self) -> int:
        return len(self._facts)

    def __iter__(self) -> Iterator[Fact]:
        return iter(self._facts)

    def __bool__(self) -> bool:
        return bool(self._facts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self._keys == other._keys

    def __hash__(self) -> int:
        return hash(self._keys)

    def __repr__(self) -> str:
        return f"KnowledgeGraph({len(self._facts)} facts)"

    @classmethod
    def union(cls, graphs: Iterable["KnowledgeGraph"]) -> "KnowledgeGraph":
        """Union by normalized triple; first occurrence wins on raw forms."""
        out: list[Fact] = []
        for g in graphs:
            out.extend(g.facts)
        return cls(out)

    def restrict(self, schema: Schema) -> "KnowledgeGraph":
        """Keep only facts whose head and tail are schema entities and whose
        relation is a schema relation. Membership is by normalized form."""
        ents = schema.entity_keys
        rels = schema.relation_keys
        return KnowledgeGraph(
            f
            for f in self._facts
            if f.head.normalized in ents
            and f.tail.normalized in ents
            and f.relation.normalized in rels
        )

    def schema(self) -> Schema:
        """The graph's own vocabulary: its entities and relations."""
        return Schema.from_terms(self.entities, self.relations)

    def to_triples(self) -> list[list[str]]:
        """Serialize as raw [head, relation, tail] string lists.

        Raw forms are preserved; normalized forms are recomputed on load.
        """
        return [f.to_triple() for f in self._facts]

    @classmethod
    def from_triples(cls, triples: Iterable[Iterable[str]]) -> "KnowledgeGraph":
        facts = []
        for t in triples:
            parts = list(t)
            if len(parts) != 3:
                raise ValueError(f"triple must have 3 fields, got {len(parts)}")
            facts.append(Fact.from_raw(*parts))
        return cls(facts)
