"""Add-k smoothed n-gram language model for fluency scoring."""

from __future__ import annotations

import json
import math
from collections import Counter
from pathlib import Path

from .text import BOS, EOS


class NgramLm:
    """Counts (n-1)-token histories; add-k smoothing over a fixed vocabulary.

    Sentences are padded with n-1 leading BOS and one trailing EOS, so the
    end-of-sentence event is part of every score: a fluent sentence cut off
    mid-clause pays for its unlikely ending.
    """

    def __init__(self, n: int, vocab_size: int, k: float = 0.01):
        if n < 2:
            raise ValueError(f"lm: order must be >= 2, got {n}")
        if vocab_size < 1:
            raise ValueError("lm: vocab_size must be positive")
        if k <= 0:
            raise ValueError("lm: smoothing constant must be positive")
        self.n = n
        self.vocab_size = vocab_size
        self.k = k
        self.counts: dict[tuple[int, ...], Counter] = {}
        self.totals: dict[tuple[int, ...], int] = {}

    def _events(self, tokens: list[int]):
        padded = [BOS] * (self.n - 1) + list(tokens) + [EOS]
        for i in range(self.n - 1, len(padded)):
            yield tuple(padded[i - self.n + 1 : i]), padded[i]

    def train(self, sentences: list[list[int]]) -> "NgramLm":
        for sent in sentences:
            if not sent:
                continue
            for hist, tok in self._events(sent):
                self.counts.setdefault(hist, Counter())[tok] += 1
                self.totals[hist] = self.totals.get(hist, 0) + 1
        return self

    def logprob(self, history: tuple[int, ...], token: int) -> float:
        if len(history) != self.n - 1:
            raise ValueError(f"lm: history length {len(history)} for order {self.n}")
        c = self.counts.get(history, {}).get(token, 0) if history in self.counts else 0
        total = self.totals.get(history, 0)
        return math.log((c + self.k) / (total + self.k * self.vocab_size))

    def sequence_logprob(self, tokens: list[int]) -> float:
        return sum(self.logprob(h, t) for h, t in self._events(tokens))

    def per_token_logprob(self, tokens: list[int]) -> float:
        """Average over len(tokens)+1 events (each token plus EOS)."""
        if not tokens:
            return self.logprob((BOS,) * (self.n - 1), EOS)
        return self.sequence_logprob(tokens) / (len(tokens) + 1)

    def save(self, path) -> None:
        payload = {
            "version": 1,
            "n": self.n,
            "vocab_size": self.vocab_size,
            "k": self.k,
            "counts": [[list(h), [[t, c] for t, c in sorted(cnt.items())]]
                       for h, cnt in sorted(self.counts.items())],
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NgramLm":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("version") != 1:
            raise ValueError(f"lm: unsupported file version in {path}")
        lm = cls(payload["n"], payload["vocab_size"], payload["k"])
        for hist, pairs in payload["counts"]:
            h = tuple(hist)
            lm.counts[h] = Counter({t: c for t, c in pairs})
            lm.totals[h] = sum(c for _, c in pairs)
        return lm
