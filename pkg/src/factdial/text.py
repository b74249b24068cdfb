"""Tokenization and the shared token vocabulary."""

from __future__ import annotations

import json
import re
from collections import Counter
from pathlib import Path
from typing import Iterable

# Words (letters/digits/apostrophes) or single punctuation marks. Applying
# tokenize to " ".join(tokens) yields the same tokens back, which keeps
# stored corpora stable under re-processing.
_TOKEN_RE = re.compile(r"[a-z0-9']+|[^a-z0-9'\s]")

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")


def tokenize(text: str) -> list[str]:
    """Lowercase and split into word and punctuation tokens."""
    return _TOKEN_RE.findall(text.lower())


class Vocab:
    """Frozen token/id bijection with fixed reserved ids 0..3.

    Built from corpus frequencies: most frequent tokens first, ties by
    lexicographic order so builds are deterministic. The cap counts the
    four reserved entries.
    """

    def __init__(self, tokens: Iterable[str], max_size: int = 20000):
        if max_size < len(RESERVED):
            raise ValueError(f"vocab: max_size {max_size} below reserved count")
        self._id_to_token = list(RESERVED)
        seen = set(RESERVED)
        for tok in tokens:
            if tok in seen:
                raise ValueError(f"vocab: duplicate token {tok!r}")
            seen.add(tok)
            self._id_to_token.append(tok)
        if len(self._id_to_token) > max_size:
            raise ValueError(f"vocab: {len(self._id_to_token)} tokens exceed cap {max_size}")
        self.max_size = max_size
        self._token_to_id = {t: i for i, t in enumerate(self._id_to_token)}

    @classmethod
    def build(cls, sentences: Iterable[list[str]], max_size: int = 20000) -> "Vocab":
        counts = Counter()
        for sent in sentences:
            counts.update(sent)
        for r in RESERVED:
            counts.pop(r, None)
        ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        keep = [tok for tok, _ in ordered[: max_size - len(RESERVED)]]
        return cls(keep, max_size=max_size)

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id(self, token: str) -> int:
        return self._token_to_id.get(token, UNK)

    def token(self, idx: int) -> str:
        return self._id_to_token[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        get = self._token_to_id.get
        return [get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int], skip_reserved: bool = True) -> list[str]:
        toks = [self._id_to_token[i] for i in ids]
        if skip_reserved:
            toks = [t for t in toks if t not in RESERVED]
        return toks

    def save(self, path) -> None:
        doc = {"version": 1, "max_size": self.max_size,
               "tokens": self._id_to_token[len(RESERVED):]}
        Path(path).write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("version") != 1:
            raise ValueError(f"vocab: unsupported file version in {path}")
        return cls(doc["tokens"], max_size=doc["max_size"])
