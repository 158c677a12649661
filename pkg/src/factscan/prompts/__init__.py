"""Prompt templates as versioned asset files.

Each template is a plain text file in this directory with named
placeholders in braces. The registry below declares exactly which
placeholders each template requires; loading verifies the file and
rendering fills all of them in a single pass (so placeholder-looking
text inside a value is never re-expanded).
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

PROMPT_SET_VERSION = "1"

# template name -> required placeholder fields
TEMPLATES: dict[str, tuple[str, ...]] = {
    "entities": ("input", "format_instructions"),
    "relations": ("input", "entities", "format_instructions"),
    "sentence_kg": ("input_sentence", "input_text", "allowed_nodes", "allowed_relationships"),
    "sample_kg": ("input", "allowed_nodes", "allowed_relationships"),
    "fact_vs_kg": ("input", "knowledge_graph"),
    "fact_vs_text": ("input", "context"),
    "correct_baseline": ("input", "generated_sentences", "format"),
    "correct_sentences": ("input", "generated_sentences", "incorrect_sentences", "format"),
    "correct_facts": ("input", "generated_sentences", "incorrect_facts", "format"),
    "judge_correction": ("source", "full_text", "input"),
    "annotate_fact": ("source", "input"),
    "original_prompt": ("concept_name",),
}

FORMAT_INSTRUCTIONS = (
    'Return the result as a JSON array of strings and nothing else, '
    'for example ["first item", "second item"].'
)


class UnknownTemplate(KeyError):
    pass


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Read a template file and verify it contains its declared placeholders."""
    if name not in TEMPLATES:
        raise UnknownTemplate(name)
    text = (resources.files(__package__) / f"{name}.txt").read_text(encoding="utf-8")
    for field in TEMPLATES[name]:
        if "{" + field + "}" not in text:
            raise ValueError(f"template {name!r} is missing placeholder {{{field}}}")
    return text


def render(name: str, **fields: str) -> str:
    """Render a template with exactly its declared fields.

    Raises if a declared field is missing or an undeclared one is given.
    Substitution is single-pass: values are inserted verbatim.
    """
    required = TEMPLATES.get(name)
    if required is None:
        raise UnknownTemplate(name)
    missing = set(required) - set(fields)
    extra = set(fields) - set(required)
    if missing or extra:
        raise ValueError(
            f"template {name!r}: missing fields {sorted(missing)}, unexpected {sorted(extra)}"
        )
    template = load_template(name)
    pattern = re.compile(r"\{(" + "|".join(re.escape(f) for f in required) + r")\}")
    return pattern.sub(lambda m: fields[m.group(1)], template)
