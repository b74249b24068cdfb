"""Latent Dirichlet Allocation via collapsed Gibbs sampling.

Small corpora and T=20 topics: plain per-token sampling is fast enough
and keeps the conditional distribution exactly the textbook one.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class LdaModel:
    def __init__(self, n_topics: int, vocab_size: int,
                 alpha: float = 0.1, beta: float = 0.01):
        if n_topics < 2:
            raise ValueError("lda: need at least 2 topics")
        if vocab_size < 1:
            raise ValueError("lda: vocab_size must be positive")
        self.n_topics = n_topics
        self.vocab_size = vocab_size
        self.alpha = alpha
        self.beta = beta
        self.topic_word = np.zeros((n_topics, vocab_size), dtype=np.float64)
        self.topic_totals = np.zeros(n_topics, dtype=np.float64)

    def _sample_doc(self, tokens: np.ndarray, doc_topic: np.ndarray,
                    assign: np.ndarray, rng: np.random.Generator,
                    update_model: bool) -> None:
        for i, w in enumerate(tokens):
            t_old = assign[i]
            doc_topic[t_old] -= 1
            if update_model:
                self.topic_word[t_old, w] -= 1
                self.topic_totals[t_old] -= 1
            p = (doc_topic + self.alpha) * (self.topic_word[:, w] + self.beta) \
                / (self.topic_totals + self.beta * self.vocab_size)
            p /= p.sum()
            t_new = int(np.searchsorted(np.cumsum(p), rng.random()))
            t_new = min(t_new, self.n_topics - 1)
            assign[i] = t_new
            doc_topic[t_new] += 1
            if update_model:
                self.topic_word[t_new, w] += 1
                self.topic_totals[t_new] += 1

    def infer(self, tokens: list[int], iterations: int = 50, seed: int = 0) -> np.ndarray:
        """Topic mixture for one document, topic-word counts held fixed."""
        if not tokens:
            return np.full(self.n_topics, 1.0 / self.n_topics)
        toks = np.asarray(tokens, dtype=np.int64)
        if toks.min() < 0 or toks.max() >= self.vocab_size:
            raise ValueError("lda: token id out of range")
        rng = np.random.default_rng(seed)
        assign = rng.integers(0, self.n_topics, size=len(toks))
        doc_topic = np.bincount(assign, minlength=self.n_topics).astype(np.float64)
        for _ in range(iterations):
            self._sample_doc(toks, doc_topic, assign, rng, update_model=False)
        dist = (doc_topic + self.alpha) / (len(toks) + self.n_topics * self.alpha)
        return dist

    def save(self, path) -> None:
        payload = {
            "version": 1,
            "n_topics": self.n_topics,
            "vocab_size": self.vocab_size,
            "alpha": self.alpha,
            "beta": self.beta,
            "topic_word": self.topic_word.tolist(),
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "LdaModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("version") != 1:
            raise ValueError(f"lda: unsupported file version in {path}")
        model = cls(payload["n_topics"], payload["vocab_size"],
                    payload["alpha"], payload["beta"])
        model.topic_word = np.asarray(payload["topic_word"], dtype=np.float64)
        if model.topic_word.shape != (model.n_topics, model.vocab_size):
            raise ValueError("lda: topic_word shape mismatch")
        model.topic_totals = model.topic_word.sum(axis=1)
        return model


def lda_fit(corpus: list[list[int]], n_topics: int, vocab_size: int,
            iterations: int = 200, alpha: float = 0.1, beta: float = 0.01,
            seed: int = 0) -> LdaModel:
    docs = [np.asarray(d, dtype=np.int64) for d in corpus if d]
    if not docs:
        raise ValueError("lda: corpus has no non-empty documents")
    for d in docs:
        if d.min() < 0 or d.max() >= vocab_size:
            raise ValueError("lda: token id out of range")
    model = LdaModel(n_topics, vocab_size, alpha, beta)
    rng = np.random.default_rng(seed)

    assigns = [rng.integers(0, n_topics, size=len(d)) for d in docs]
    doc_topics = [np.bincount(a, minlength=n_topics).astype(np.float64) for a in assigns]
    for d, a in zip(docs, assigns):
        np.add.at(model.topic_word, (a, d), 1.0)
        model.topic_totals += np.bincount(a, minlength=n_topics)

    for _ in range(iterations):
        for d, dt, a in zip(docs, doc_topics, assigns):
            model._sample_doc(d, dt, a, rng, update_model=True)
    return model
