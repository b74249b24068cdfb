"""Skip-gram word embeddings with negative sampling, plus cosine helpers."""

from __future__ import annotations

import numpy as np

from . import text
from .checkpoint import load_checkpoint, save_checkpoint


class EmbeddingTable:
    """One float64 row per vocabulary id."""

    def __init__(self, matrix: np.ndarray):
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ValueError(f"embeddings: expected 2-D matrix, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("embeddings: non-finite values")
        self.matrix = matrix

    @property
    def vocab_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def row(self, idx: int) -> np.ndarray:
        return self.matrix[idx]

    def save(self, path) -> None:
        save_checkpoint(path, {"embeddings": self.matrix},
                        {"kind": "embeddings", "dim": self.dim,
                         "vocab_size": self.vocab_size})

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        params, meta = load_checkpoint(path)
        if meta.get("kind") != "embeddings" or "embeddings" not in params:
            raise ValueError(f"embeddings: {path} is not an embedding file")
        return cls(params["embeddings"])


def avg_embedding(ids, table: EmbeddingTable) -> np.ndarray:
    """Mean of the rows for ids; empty input gives the zero vector."""
    idx = np.asarray(list(ids), dtype=np.int64)
    if idx.size == 0:
        return np.zeros(table.dim)
    return table.matrix[idx].mean(axis=0)


def sum_embedding(ids, table: EmbeddingTable) -> np.ndarray:
    # left-fold accumulation, so callers that build the same sum token by
    # token (the beam search does) get bitwise-identical vectors
    out = np.zeros(table.dim)
    for t in ids:
        out = out + table.matrix[t]
    return out


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; zero vectors compare as 0 rather than NaN."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    if np.array_equal(a, b):
        return 1.0  # identical vectors must score exactly 1, no rounding
    return float(a @ b / (na * nb))


def _sentence_pairs(sent: list[int], window: int) -> tuple[np.ndarray, np.ndarray]:
    centers, contexts = [], []
    n = len(sent)
    for i in range(n):
        lo = max(0, i - window)
        hi = min(n, i + window + 1)
        for j in range(lo, hi):
            if j != i:
                centers.append(sent[i])
                contexts.append(sent[j])
    return (np.asarray(centers, dtype=np.int64),
            np.asarray(contexts, dtype=np.int64))


def train_embeddings(
    corpus: list[list[int]],
    vocab_size: int,
    dim: int = 256,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    lr: float = 0.025,
    seed: int = 0,
) -> EmbeddingTable:
    """Skip-gram with negative sampling over token-id sentences.

    SGD one sentence at a time (vectorized within the sentence, so a
    token repeated in a batch stays a handful of summed steps, which
    keeps tiny vocabularies stable); negatives drawn from the unigram
    distribution raised to 0.75; learning rate decays linearly to near
    zero. Fully deterministic under seed.
    """
    if dim < 2:
        raise ValueError(f"embeddings: dim must be >= 2, got {dim}")
    if not corpus or all(len(s) == 0 for s in corpus):
        raise ValueError("embeddings: empty corpus")
    counts = np.zeros(vocab_size, dtype=np.float64)
    for sent in corpus:
        for t in sent:
            if not 0 <= t < vocab_size:
                raise ValueError(f"embeddings: token id {t} outside vocab of {vocab_size}")
            counts[t] += 1
    distinct = int((counts > 0).sum())
    if distinct < negatives + 1:
        raise ValueError(
            f"embeddings: {distinct} distinct tokens, need at least {negatives + 1}")

    noise = counts ** 0.75
    noise /= noise.sum()

    rng = np.random.default_rng(seed)
    w_in = rng.uniform(-0.5 / dim, 0.5 / dim, size=(vocab_size, dim))
    w_out = np.zeros((vocab_size, dim))

    sents = [_sentence_pairs(s, window) for s in corpus if len(s) >= 2]
    if not sents:
        raise ValueError("embeddings: no context pairs (all sentences length 1?)")
    total_steps = epochs * len(sents)
    step = 0

    for _ in range(epochs):
        for si in rng.permutation(len(sents)):
            c, o = sents[si]
            b = c.size
            cur_lr = lr * max(1e-4, 1.0 - step / total_steps)
            step += 1
            neg = rng.choice(vocab_size, size=(b, negatives), p=noise)

            vc = w_in[c]  # (b, d)
            # positive pairs, label 1
            f_pos = _sigmoid(np.einsum("bd,bd->b", vc, w_out[o]))
            g_pos = (f_pos - 1.0) * cur_lr  # (b,)
            d_in = g_pos[:, None] * w_out[o]
            np.add.at(w_out, o, -g_pos[:, None] * vc)
            # negative samples, label 0; a draw that hits the true context
            # contributes nothing
            f_neg = _sigmoid(np.einsum("bd,bkd->bk", vc, w_out[neg]))
            g_neg = f_neg * cur_lr  # (b, k)
            g_neg[neg == o[:, None]] = 0.0
            d_in += np.einsum("bk,bkd->bd", g_neg, w_out[neg])
            np.add.at(w_out, neg.reshape(-1),
                      -(g_neg[:, :, None] * vc[:, None, :]).reshape(-1, dim))
            np.add.at(w_in, c, -d_in)

    if not np.all(np.isfinite(w_in)):
        raise ArithmeticError("embeddings: training diverged to non-finite values")
    return EmbeddingTable(w_in)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def encode_and_train(sentences: list[list[str]], vocab: "text.Vocab", **kw) -> EmbeddingTable:
    corpus = [vocab.encode(s) for s in sentences]
    return train_embeddings(corpus, vocab_size=len(vocab), **kw)
