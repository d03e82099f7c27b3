from __future__ import annotations

import re
from typing import Sequence

from timeline_qa.core.types import QueryOption

_LETTER = re.compile(r"^\s*(?:answer\s*:\s*)?\(?([A-Za-z])\)?\s*[.):]?\s*$", re.IGNORECASE)
_SPACES = re.compile(r"\s+")
_EDGE_PUNCT = ".,;:!?\"'`*"


def normalize_answer(text: str) -> str:
    text = text.strip().strip(_EDGE_PUNCT).strip()
    text = re.sub(r"^answer\s*:\s*", "", text, flags=re.IGNORECASE)
    return _SPACES.sub(" ", text.strip(_EDGE_PUNCT)).casefold()


def extract_letter(text: str, labels: Sequence[str]) -> str | None:
    """Option letter from "C", "C.", "(C)" or "Answer: C".

    None when the text is not a bare option label.
    """

    match = _LETTER.match(text)
    if match is None:
        return None
    letter = match.group(1).upper()
    return letter if letter in {label.upper() for label in labels} else None


def grade(answer: str, gold: str, options: Sequence[QueryOption] | None = None) -> bool:
    """Case-insensitive, symmetric comparison; multiple choice compares option letters."""

    if options:
        labels = [o.label for o in options]
        ours, theirs = extract_letter(answer, labels), extract_letter(gold, labels)
        return ours is not None and ours == theirs
    return normalize_answer(answer) == normalize_answer(gold) != ""
