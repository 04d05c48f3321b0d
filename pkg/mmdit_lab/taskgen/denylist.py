from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources
from typing import Iterable

from ..exceptions import DenylistViolation

_DATA = "mmdit_lab.taskgen.data"


def data_text(*parts: str) -> str:
    path = resources.files(_DATA)
    for part in parts:  # single-segment joinpath: Python < 3.12 compatibility
        path = path.joinpath(part)
    return path.read_text(encoding="utf-8")


def data_json(*parts: str):
    return json.loads(data_text(*parts))


@lru_cache(maxsize=None)
def load_denylist(name: str) -> tuple[str, ...]:
    """``data/denylists/<name>.txt``: one term per line, ``#`` comments."""
    terms = []
    for line in data_text("denylists", f"{name}.txt").splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            terms.append(line)
    return tuple(terms)


def _words(text: str) -> list[str]:
    return re.findall(r"[a-z0-9'-]+", text.lower())


def find_term(text: str, terms: Iterable[str]) -> str | None:
    """First term appearing in ``text`` as a whole word (or whole word run)."""
    padded = " " + " ".join(_words(text)) + " "
    for term in terms:
        if f" {' '.join(_words(term))} " in padded:
            return term
    return None


def check_text(text: str, terms: Iterable[str]) -> None:
    term = find_term(text, terms)
    if term is not None:
        raise DenylistViolation(text, term)


def head_noun(phrase: str) -> str:
    words = _words(phrase)
    return words[-1] if words else ""


def check_head_noun(phrase: str, terms: Iterable[str]) -> None:
    """Rejects phrases whose head noun (last word, singular or plural) is a denied term."""
    head = head_noun(phrase)
    for term in terms:
        if head in (term, f"{term}s", f"{term}es"):
            raise DenylistViolation(phrase, term)
