"""RAKE keyword extraction over pre-tokenized text.

Phrases are maximal runs free of stopwords and punctuation. Each word
scores degree/frequency, where degree counts co-occurrences within
phrases (including the word itself) and frequency counts appearances;
a phrase scores the sum of its word scores.
"""

from __future__ import annotations

from collections import Counter


def _is_break(token: str, stopwords: frozenset[str]) -> bool:
    return token in stopwords or not any(c.isalnum() for c in token)


def rake_keywords(tokens: list[str], stopwords: frozenset[str]) -> list[tuple[tuple[str, ...], float]]:
    """Scored phrases, best first; ties keep first-appearance order."""
    phrases: list[tuple[str, ...]] = []
    run: list[str] = []
    for tok in tokens:
        if _is_break(tok, stopwords):
            if run:
                phrases.append(tuple(run))
                run = []
        else:
            run.append(tok)
    if run:
        phrases.append(tuple(run))
    if not phrases:
        return []

    freq = Counter()
    degree = Counter()
    for phrase in phrases:
        for word in phrase:
            freq[word] += 1
            degree[word] += len(phrase)

    first_seen: dict[tuple[str, ...], int] = {}
    for i, phrase in enumerate(phrases):
        first_seen.setdefault(phrase, i)
    scored = [(phrase, sum(degree[w] / freq[w] for w in phrase))
              for phrase in first_seen]
    scored.sort(key=lambda ps: (-ps[1], first_seen[ps[0]]))
    return scored


def rake_keyword_tokens(tokens: list[str], stopwords: frozenset[str]) -> list[str]:
    """All words of all extracted phrases, in ranked order."""
    out: list[str] = []
    for phrase, _ in rake_keywords(tokens, stopwords):
        out.extend(phrase)
    return out
