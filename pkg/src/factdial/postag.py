"""Lexicon and suffix-rule part-of-speech tagging.

A small shipped lexicon covers function words and common content words;
a gazetteer types proper nouns (person/place/org/other); everything else
falls through suffix rules and finally defaults to noun. Coarse tags
only: this feeds feature counts and keyword filters, not parsing.
"""

from __future__ import annotations

from importlib import resources

NOUN, VERB, ADJ, ADV = "noun", "verb", "adj", "adv"
PROPN, PRON, DET, ADP = "propn", "pron", "det", "adp"
NUM, CONJ, PUNCT, OTHER = "num", "conj", "punct", "other"

CONTENT_TAGS = frozenset({NOUN, VERB, ADJ, ADV, PROPN})

# ordered: first matching suffix wins, longer suffixes first
_SUFFIX_RULES = (
    ("ly", ADV),
    ("tion", NOUN), ("sion", NOUN), ("ment", NOUN), ("ness", NOUN),
    ("ity", NOUN), ("ship", NOUN), ("hood", NOUN), ("ism", NOUN),
    ("ous", ADJ), ("ful", ADJ), ("ive", ADJ), ("able", ADJ), ("ible", ADJ),
    ("less", ADJ), ("est", ADJ), ("ish", ADJ),
    ("ize", VERB), ("ise", VERB), ("ing", VERB), ("ed", VERB),
)


def _load_pairs(name: str) -> dict[str, str]:
    text = resources.files("factdial").joinpath("data", name).read_text(encoding="utf-8")
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        word, _, tag = line.partition(" ")
        out[word] = tag.strip()
    return out


def load_stopwords() -> frozenset[str]:
    text = resources.files("factdial").joinpath("data", "stopwords.txt").read_text(
        encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines()
                     if w.strip() and not w.startswith("#"))


def load_sentiment() -> dict[str, float]:
    raw = _load_pairs("sentiment.txt")
    return {w: float(v) for w, v in raw.items()}


class PosTagger:
    def __init__(self, lexicon: dict[str, str], gazetteer: dict[str, str]):
        self.lexicon = lexicon
        self.gazetteer = gazetteer  # token -> propn type (person/place/org/other)

    @classmethod
    def default(cls) -> "PosTagger":
        return cls(_load_pairs("pos_lexicon.txt"), _load_pairs("gazetteer.txt"))

    def tag(self, token: str) -> str:
        if not token:
            return OTHER
        if not any(c.isalnum() for c in token):
            return PUNCT
        if token[0].isdigit():
            return NUM
        if token in self.gazetteer:
            return PROPN
        hit = self.lexicon.get(token)
        if hit is not None:
            return hit
        for suffix, tag in _SUFFIX_RULES:
            if len(token) > len(suffix) + 2 and token.endswith(suffix):
                return tag
        return NOUN

    def tag_all(self, tokens: list[str]) -> list[str]:
        return [self.tag(t) for t in tokens]

    def propn_type(self, token: str) -> str | None:
        return self.gazetteer.get(token)

    def is_content(self, token: str) -> bool:
        return self.tag(token) in CONTENT_TAGS
