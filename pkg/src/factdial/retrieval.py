"""Response retrieval over past dialogues, ranked by BM25F.

Every training (context, response) pair becomes one two-field entry: the
S-field holds the flattened context tokens, the R-field the response.
A keyword query is built from tokens shared by at least two subject
facts; retrieval is conjunctive (every query token must appear in the
entry's combined fields) so the module abstains rather than guess.
"""

from __future__ import annotations

import json
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Dialogue, FactSet
from .postag import PosTagger
from .text import Vocab

MAGIC = b"FDIX"
FORMAT_VERSION = 1


@dataclass
class Bm25fParams:
    k1: float = 1.2
    b_s: float = 0.75
    b_r: float = 0.75
    w_s: float = 1.0
    w_r: float = 2.0


@dataclass
class RetrievalEntry:
    entry_id: int
    s_tokens: list[int]
    r_tokens: list[int]
    topic_id: str

    def contains(self, token: int) -> bool:
        return token in self.s_tokens or token in self.r_tokens


@dataclass
class KeywordQuery:
    tokens: list[int]
    # token -> indices of the subject facts it appeared in
    provenance: dict[int, list[int]] = field(default_factory=dict)


@dataclass
class RetrievalResult:
    entry: RetrievalEntry
    score: float


class InvertedIndex:
    """Immutable two-field index; postings sorted by entry id."""

    def __init__(self, entries: list[RetrievalEntry]):
        self.entries = entries
        self.postings: dict[int, list[tuple[int, int, int]]] = {}
        for e in entries:
            tf_s = Counter(e.s_tokens)
            tf_r = Counter(e.r_tokens)
            for tok in sorted(set(tf_s) | set(tf_r)):
                self.postings.setdefault(tok, []).append(
                    (e.entry_id, tf_s.get(tok, 0), tf_r.get(tok, 0)))
        self.len_s = np.asarray([len(e.s_tokens) for e in entries], dtype=np.float64)
        self.len_r = np.asarray([len(e.r_tokens) for e in entries], dtype=np.float64)
        self.avg_len_s = float(self.len_s.mean()) if entries else 0.0
        self.avg_len_r = float(self.len_r.mean()) if entries else 0.0

    def __len__(self) -> int:
        return len(self.entries)

    def doc_freq(self, token: int) -> int:
        return len(self.postings.get(token, ()))

    # -- persistence: manifest + u32 little-endian payload -------------------

    def save(self, path) -> None:
        manifest = {
            "format_version": FORMAT_VERSION,
            "n_entries": len(self.entries),
            "topic_ids": [e.topic_id for e in self.entries],
            "n_terms": len(self.postings),
        }
        blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            for e in self.entries:
                fh.write(struct.pack("<I", len(e.s_tokens)))
                fh.write(np.asarray(e.s_tokens, dtype="<u4").tobytes())
                fh.write(struct.pack("<I", len(e.r_tokens)))
                fh.write(np.asarray(e.r_tokens, dtype="<u4").tobytes())
            for tok in sorted(self.postings):
                plist = self.postings[tok]
                fh.write(struct.pack("<II", tok, len(plist)))
                fh.write(np.asarray(plist, dtype="<u4").tobytes())

    @classmethod
    def load(cls, path) -> "InvertedIndex":
        data = Path(path).read_bytes()
        if data[:4] != MAGIC:
            raise ValueError(f"index: bad magic in {path}")
        (mlen,) = struct.unpack("<Q", data[4:12])
        manifest = json.loads(data[12 : 12 + mlen].decode("utf-8"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"index: unsupported version in {path}")
        off = 12 + mlen

        def read_u32s(n):
            nonlocal off
            arr = np.frombuffer(data[off : off + 4 * n], dtype="<u4")
            off += 4 * n
            return arr

        entries = []
        for eid in range(manifest["n_entries"]):
            (ns,) = struct.unpack_from("<I", data, off)
            off += 4
            s = read_u32s(ns).astype(np.int64).tolist()
            (nr,) = struct.unpack_from("<I", data, off)
            off += 4
            r = read_u32s(nr).astype(np.int64).tolist()
            entries.append(RetrievalEntry(eid, s, r, manifest["topic_ids"][eid]))
        index = cls(entries)
        # stored postings are redundant with the entries; verify agreement
        for _ in range(manifest["n_terms"]):
            tok, n = struct.unpack_from("<II", data, off)
            off += 8
            stored = read_u32s(3 * n).astype(np.int64).reshape(n, 3)
            mine = np.asarray(index.postings.get(int(tok), []), dtype=np.int64)
            if mine.shape != stored.shape or not np.array_equal(mine, stored):
                raise ValueError(f"index: postings for token {tok} inconsistent")
        return index


def build_index(dialogues: list[Dialogue]) -> InvertedIndex:
    entries = [RetrievalEntry(i, d.flat_context(), list(d.response), d.topic_id)
               for i, d in enumerate(dialogues)]
    return InvertedIndex(entries)


# ---------------------------------------------------------------------------
# keyword queries
# ---------------------------------------------------------------------------

def extract_keywords(facts: FactSet, vocab: Vocab, tagger: PosTagger,
                     stopwords: frozenset[str]) -> KeywordQuery | None:
    """Tokens shared by >= 2 subject facts, minus stopwords.

    Emitted only when at least one kept token is content-bearing (noun,
    verb, adjective, adverb, or proper noun); otherwise None and the
    retrieval route abstains.
    """
    appearances: dict[int, list[int]] = {}
    for fi, fact in enumerate(facts.subject):
        for tok in set(fact.tokens):
            appearances.setdefault(tok, []).append(fi)

    tokens: list[int] = []
    provenance: dict[int, list[int]] = {}
    seen = set()
    for fact in facts.subject:  # first-appearance order, deterministic
        for tok in fact.tokens:
            if tok in seen or len(appearances.get(tok, ())) < 2:
                continue
            seen.add(tok)
            word = vocab.token(tok)
            if word in stopwords or word.startswith("<"):
                continue
            tokens.append(tok)
            provenance[tok] = appearances[tok]
    if not tokens:
        return None
    if not any(tagger.is_content(vocab.token(t)) for t in tokens):
        return None
    return KeywordQuery(tokens=tokens, provenance=provenance)


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------

def bm25f_score(query: list[int], entry: RetrievalEntry, index: InvertedIndex,
                params: Bm25fParams | None = None) -> float:
    """Weighted-field BM25: idf(q) * x / (k1 + x) summed over query terms,
    where x is the field-weighted, length-normalized term frequency."""
    p = params or Bm25fParams()
    n_docs = len(index)
    tf_s = Counter(entry.s_tokens)
    tf_r = Counter(entry.r_tokens)
    norm_s = 1.0 - p.b_s + p.b_s * (len(entry.s_tokens) / index.avg_len_s) \
        if index.avg_len_s > 0 else 1.0
    norm_r = 1.0 - p.b_r + p.b_r * (len(entry.r_tokens) / index.avg_len_r) \
        if index.avg_len_r > 0 else 1.0
    score = 0.0
    for q in query:
        x = 0.0
        if tf_s.get(q, 0):
            x += p.w_s * tf_s[q] / norm_s
        if tf_r.get(q, 0):
            x += p.w_r * tf_r[q] / norm_r
        if x == 0.0:
            continue
        n = index.doc_freq(q)
        idf = math.log((n_docs - n + 0.5) / (n + 0.5) + 1.0)
        score += idf * x / (p.k1 + x)
    return score


def retrieve(query: KeywordQuery, index: InvertedIndex,
             params: Bm25fParams | None = None, limit: int = 10) -> list[RetrievalResult]:
    """Entries containing every query token, best BM25F first, capped."""
    if not query.tokens:
        raise ValueError("retrieve: empty query")
    if not len(index):
        return []
    candidate_ids: set[int] | None = None
    for tok in query.tokens:
        ids = {eid for eid, _, _ in index.postings.get(tok, ())}
        candidate_ids = ids if candidate_ids is None else candidate_ids & ids
        if not candidate_ids:
            return []
    scored = [RetrievalResult(index.entries[eid],
                              bm25f_score(query.tokens, index.entries[eid], index, params))
              for eid in candidate_ids]
    scored.sort(key=lambda r: (-r.score, r.entry.entry_id))
    return scored[:limit]
