"""Closed paralinguistic tag vocabulary and tag canonicalization.

The vocabulary is configurable per corpus; the default set covers the
non-verbal vocalizations the pipeline annotates inline as ``<Name>`` spans.
"""

from __future__ import annotations

from dataclasses import dataclass


class UnknownTagError(ValueError):
    """A tag name falls outside the configured closed vocabulary."""

    def __init__(self, name: str):
        super().__init__(f"unknown paralinguistic tag: {name!r}")
        self.name = name


@dataclass(frozen=True)
class Tag:
    """One paralinguistic event anchored into the uniform token sequence."""

    category: str
    anchor_index: int = 0

    def __post_init__(self):
        if self.anchor_index < 0:
            raise ValueError("anchor_index must be >= 0")


class TagVocabulary:
    """Closed, case-insensitive set of canonical tag categories."""

    def __init__(self, categories: list[str] | tuple[str, ...]):
        if not categories:
            raise ValueError("vocabulary must not be empty")
        self.categories = tuple(categories)
        self._by_key = {c.strip().lower(): c for c in self.categories}

    def __contains__(self, name: str) -> bool:
        return name.strip().lower() in self._by_key

    def __iter__(self):
        return iter(self.categories)

    def canonicalize(self, name: str) -> str:
        """Case-insensitive, whitespace-trimmed lookup; raises UnknownTagError."""
        key = name.strip().lower()
        if key not in self._by_key:
            raise UnknownTagError(name.strip())
        return self._by_key[key]

    def normalize(self, name: str) -> str:
        """Like canonicalize, but unknown names fall back to a stable
        title-cased form instead of raising (used when tokenizing model
        output, where fabricated tags must survive as scorable tokens)."""
        key = name.strip().lower()
        if key in self._by_key:
            return self._by_key[key]
        return name.strip().title()


DEFAULT_TAG_VOCABULARY = TagVocabulary([
    "Laughter",
    "Crying",
    "Sighing",
    "Breathing",
    "Coughing",
    "Gasping",
    "Screaming",
    "Sniffing",
])


def canonicalize_tag(name: str, vocabulary: TagVocabulary = DEFAULT_TAG_VOCABULARY) -> str:
    """Resolve a raw tag name to its canonical category.

    Stable across calls; raises UnknownTagError for names outside the
    vocabulary (closed-vocabulary rule).
    """
    return vocabulary.canonicalize(name)
