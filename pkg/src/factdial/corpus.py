"""Dialogue and facts datasets: schemas, tag categorization, fact selection."""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingTable, avg_embedding, cosine
from .jsonl import read_jsonl
from .text import Vocab, tokenize

log = logging.getLogger(__name__)

MAX_FACT_TOKENS = 64  # fact sentences are short; hard cap bounds memory

_SUBJECT_TAGS = frozenset({"title", "h", "h1", "h2", "h3", "h4", "h5", "h6"})
_WRAPPED = re.compile(
    r"^\s*<(?P<tag>[a-z][a-z0-9]*)(?:\s[^>]*)?>(?P<inner>.*)</(?P=tag)\s*>\s*$",
    re.IGNORECASE | re.DOTALL,
)
_ANY_TAG = re.compile(r"<\s*(/?)\s*([a-z][a-z0-9]*)(?:\s[^>]*)?(/?)\s*>", re.IGNORECASE)


@dataclass
class Dialogue:
    """One context/response pair, already tokenized to vocab ids."""

    topic_id: str
    context: list[list[int]]
    response: list[int]
    score: int = 0

    def __post_init__(self):
        if not self.context:
            raise ValueError(f"dialogue {self.topic_id}: empty context")
        if any(len(u) == 0 for u in self.context):
            raise ValueError(f"dialogue {self.topic_id}: empty utterance in context")

    def context_key(self) -> tuple:
        return tuple(tuple(u) for u in self.context)

    def flat_context(self) -> list[int]:
        return [t for u in self.context for t in u]


@dataclass
class Fact:
    """One fact sentence as token ids, with its bag-of-words counts."""

    tokens: list[int]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("fact: empty token list")

    def bow(self) -> tuple[np.ndarray, np.ndarray]:
        """(ids, counts) of the token multiset, ids ascending."""
        c = Counter(self.tokens)
        ids = np.asarray(sorted(c), dtype=np.int64)
        counts = np.asarray([c[i] for i in ids], dtype=np.float64)
        return ids, counts


@dataclass
class FactSet:
    topic_id: str
    subject: list[Fact] = field(default_factory=list)
    description: list[Fact] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.subject)

    @property
    def l(self) -> int:
        return len(self.description)


def _tags_balanced(line: str) -> bool:
    stack = []
    for m in _ANY_TAG.finditer(line):
        closing, name, selfclose = m.group(1), m.group(2).lower(), m.group(3)
        if selfclose:
            continue
        if closing:
            if not stack or stack[-1] != name:
                return False
            stack.pop()
        else:
            stack.append(name)
    return not stack


def _strip_tags(line: str) -> str:
    return _ANY_TAG.sub(" ", line).strip()


def categorize_facts(lines: list[str]) -> tuple[list[str], list[str]]:
    """Split raw fact lines into (subject, description) plain texts.

    Heading and title wrappers mark subject facts; paragraph wrappers and
    bare lines are descriptions. Any other tags are stripped and the line
    treated as untagged. Unbalanced markup gets the same treatment plus a
    warning.
    """
    subject: list[str] = []
    description: list[str] = []
    for line in lines:
        m = _WRAPPED.match(line)
        if m:
            tag = m.group("tag").lower()
            inner = _strip_tags(m.group("inner"))
            if tag in _SUBJECT_TAGS:
                subject.append(inner)
            else:
                description.append(inner)
            continue
        if _ANY_TAG.search(line) and not _tags_balanced(line):
            log.warning("facts: unbalanced markup treated as untagged: %.60s", line)
        description.append(_strip_tags(line))
    return subject, description


def build_factset(topic_id: str, lines: list[str], vocab: Vocab,
                  max_tokens: int = MAX_FACT_TOKENS) -> FactSet:
    """Categorize, tokenize, truncate, and drop empty fact lines."""
    subj_texts, desc_texts = categorize_facts(lines)

    def facts(texts: list[str]) -> list[Fact]:
        out = []
        for t in texts:
            ids = vocab.encode(tokenize(t)[:max_tokens])
            if ids:
                out.append(Fact(ids))
        return out

    return FactSet(topic_id, subject=facts(subj_texts), description=facts(desc_texts))


def select_facts(context: list[list[int]], pool: FactSet, table: EmbeddingTable,
                 cap: int = 10) -> FactSet:
    """Keep the cap most context-similar facts in each category.

    Similarity is the cosine between averaged word embeddings of the
    flattened context and of the fact. Order is score descending, pool
    order breaking ties.
    """
    if cap < 1:
        raise ValueError(f"select_facts: cap must be >= 1, got {cap}")
    ctx_vec = avg_embedding([t for u in context for t in u], table)

    def top(facts: list[Fact]) -> list[Fact]:
        scored = [cosine(ctx_vec, avg_embedding(f.tokens, table)) for f in facts]
        order = sorted(range(len(facts)), key=lambda i: (-scored[i], i))
        return [facts[i] for i in order[:cap]]

    return FactSet(pool.topic_id, subject=top(pool.subject),
                   description=top(pool.description))


def dedupe_by_score(rows: list[Dialogue]) -> list[Dialogue]:
    """Collapse rows with identical tokenized contexts to the max-score row.

    Ties keep the earliest row; output preserves first-occurrence order
    of each context.
    """
    best: dict[tuple, tuple[int, Dialogue]] = {}
    for i, row in enumerate(rows):
        key = row.context_key()
        if key not in best or row.score > best[key][1].score:
            first = best[key][0] if key in best else i
            best[key] = (first, row)
    return [row for _, row in sorted(best.values(), key=lambda fr: fr[0])]


# ---------------------------------------------------------------------------
# JSONL ingest
# ---------------------------------------------------------------------------

def load_raw_dialogues(path) -> list[dict]:
    """Read and validate {"topic_id", "context", "response", "score"} rows."""
    rows = []
    for i, row in enumerate(read_jsonl(path), 1):
        if not isinstance(row.get("topic_id"), str):
            raise ValueError(f"{path}: row {i}: missing topic_id")
        ctx = row.get("context")
        if not isinstance(ctx, list) or not ctx or not all(isinstance(u, str) for u in ctx):
            raise ValueError(f"{path}: row {i}: context must be a non-empty string list")
        if not isinstance(row.get("response"), str):
            raise ValueError(f"{path}: row {i}: missing response string")
        if not isinstance(row.get("score", 0), int):
            raise ValueError(f"{path}: row {i}: score must be an integer")
        rows.append(row)
    return rows


def load_raw_facts(path) -> dict[str, list[str]]:
    """Read {"topic_id", "lines"} rows into topic -> fact lines."""
    topics: dict[str, list[str]] = {}
    for i, row in enumerate(read_jsonl(path), 1):
        tid = row.get("topic_id")
        lines = row.get("lines")
        if not isinstance(tid, str) or not isinstance(lines, list) \
                or not all(isinstance(x, str) for x in lines):
            raise ValueError(f"{path}: row {i}: expected topic_id and string lines")
        topics.setdefault(tid, []).extend(lines)
    return topics


def encode_dialogues(raw: list[dict], vocab: Vocab, require_response: bool = True) -> list[Dialogue]:
    """Tokenize and map raw rows through the shared vocabulary.

    Rows whose context or response tokenizes to nothing are dropped with
    a warning rather than failing the whole file.
    """
    out = []
    for row in raw:
        ctx = [vocab.encode(tokenize(u)) for u in row["context"]]
        resp = vocab.encode(tokenize(row["response"]))
        if any(len(u) == 0 for u in ctx) or (require_response and not resp):
            log.warning("dialogues: dropping row with empty utterance (topic %s)",
                        row["topic_id"])
            continue
        out.append(Dialogue(topic_id=row["topic_id"], context=ctx,
                            response=resp, score=int(row.get("score", 0))))
    return out


def tokenized_sentences(raw_dialogues: list[dict], raw_facts: dict[str, list[str]]) -> list[list[str]]:
    """All token lists of the corpus, for vocabulary and embedding builds."""
    sents: list[list[str]] = []
    for row in raw_dialogues:
        for u in row["context"]:
            sents.append(tokenize(u))
        sents.append(tokenize(row["response"]))
    for lines in raw_facts.values():
        subj, desc = categorize_facts(lines)
        for t in subj + desc:
            sents.append(tokenize(t))
    return [s for s in sents if s]
