"""Serving-side composition: loaded model bundle, sessions, respond().

respond() is the ensemble: the generator proposes its diverse-group
winners, retrieval proposes matching responses when the fact keywords
allow it, and the reranker picks from the union. Both the user turn and
the system's reply enter the rolling context, so self-turns count toward
the window.
"""

from __future__ import annotations

import hashlib
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import FactSet, build_factset, load_raw_facts
from .embeddings import EmbeddingTable
from .gbdt import GbdtModel
from .lda import LdaModel
from .lm import NgramLm
from .mhred import DecodeSession, EncodedState, Mhred, export_attention
from .postag import PosTagger, load_sentiment, load_stopwords
from .rerank import Candidate, RerankModels, rerank
from .retrieval import Bm25fParams, InvertedIndex, extract_keywords, retrieve
from .search import SearchConfig, diverse_beam_search, group_winners
from .text import BOS, PAD, UNK, Vocab, tokenize

log = logging.getLogger("factdial.ensemble")

# the decoder never surfaces padding, bos, or unk to a user
FORBIDDEN_TOKENS = (PAD, BOS, UNK)


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"ensemble: {what} missing at {p}")
    return p


def _file_version(path) -> str:
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return digest[:12]


class EnsembleBundle:
    """Immutable shared state for serving: model, index, reranker, facts."""

    def __init__(self, vocab: Vocab, model: Mhred, table: EmbeddingTable,
                 factsets: dict[str, FactSet], index: InvertedIndex,
                 models: RerankModels, search: SearchConfig,
                 fr_params: Bm25fParams, fr_limit: int, model_version: str):
        if not factsets:
            raise ValueError("ensemble: no fact sets loaded")
        self.vocab = vocab
        self.model = model
        self.table = table
        self.factsets = factsets
        self.index = index
        self.models = models
        self.search = search
        self.fr_params = fr_params
        self.fr_limit = fr_limit
        self.model_version = model_version
        self.default_topic = sorted(factsets)[0]

    @classmethod
    def load(cls, cfg: dict) -> "EnsembleBundle":
        model_cfg, fr_cfg = cfg["model"], cfg["fr"]
        vocab = Vocab.load(_require(model_cfg["vocab"], "vocabulary"))
        model = Mhred.load(_require(model_cfg["checkpoint"], "model checkpoint"))
        table = EmbeddingTable.load(_require(model_cfg["embeddings"], "embeddings"))
        if model.config.vocab_size != len(vocab):
            raise ValueError("ensemble: checkpoint vocabulary size does not match vocab file")
        if table.vocab_size != len(vocab):
            raise ValueError("ensemble: embedding table does not match vocab file")

        raw_facts = load_raw_facts(_require(model_cfg["facts"], "facts file"))
        factsets = {tid: build_factset(tid, lines, vocab)
                    for tid, lines in raw_facts.items()}
        index = InvertedIndex.load(_require(fr_cfg["index"], "retrieval index"))

        bundle_dir = _require(cfg["rerank"]["bundle"], "reranker bundle")
        models = RerankModels(
            vocab=vocab,
            lm2=NgramLm.load(_require(bundle_dir / "lm2.bin", "bigram model")),
            lm3=NgramLm.load(_require(bundle_dir / "lm3.bin", "trigram model")),
            table=table,
            lda=LdaModel.load(_require(bundle_dir / "lda.bin", "topic model")),
            tagger=PosTagger.default(),
            sentiment=load_sentiment(),
            stopwords=load_stopwords(),
            gbdt=GbdtModel.load(_require(bundle_dir / "gbdt.model", "classifier")),
        )

        search_cfg = cfg["search"]
        search = SearchConfig(
            beam_width=int(search_cfg["beam_width"]),
            groups=int(search_cfg["groups"]),
            lambda_div=float(search_cfg["lambda_div"]),
            gamma_fact=float(search_cfg["gamma_fact"]),
            max_len=int(search_cfg["max_len"]),
            forbidden=FORBIDDEN_TOKENS,
        )
        fr_params = Bm25fParams(k1=float(fr_cfg["k1"]),
                                b_s=float(fr_cfg["b_s"]), b_r=float(fr_cfg["b_r"]),
                                w_s=float(fr_cfg["w_s"]), w_r=float(fr_cfg["w_r"]))
        return cls(vocab, model, table, factsets, index, models, search,
                   fr_params, int(fr_cfg["limit"]),
                   _file_version(model_cfg["checkpoint"]))

    def factset(self, topic_id: str | None) -> FactSet:
        tid = topic_id if topic_id is not None else self.default_topic
        facts = self.factsets.get(tid)
        if facts is None:
            known = ", ".join(sorted(self.factsets))
            raise KeyError(f"ensemble: unknown topic '{tid}' (known: {known})")
        return facts


@dataclass
class Session:
    session_id: str
    topic_id: str
    facts: FactSet
    window: int
    context: list[list[int]] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    last_active: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def push(self, utterance: list[int]) -> None:
        # caller holds the lock; oldest turns fall off the window
        self.context.append(list(utterance))
        if len(self.context) > self.window:
            del self.context[: len(self.context) - self.window]


class SessionStore:
    def __init__(self, bundle: EnsembleBundle, window: int):
        if window < 1:
            raise ValueError("sessions: context window must be >= 1")
        self._bundle = bundle
        self._window = window
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, topic_id: str | None = None) -> Session:
        facts = self._bundle.factset(topic_id)
        session = Session(session_id=uuid.uuid4().hex,
                          topic_id=facts.topic_id, facts=facts,
                          window=self._window)
        with self._lock:
            self._sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> Session | None:
        with self._lock:
            return self._sessions.get(session_id)

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)


@dataclass
class RespondResult:
    winner: Candidate
    candidates: list[Candidate]
    attention: dict


def generate_candidates(bundle: EnsembleBundle, context: list[list[int]],
                        facts: FactSet) -> tuple[list[Candidate], EncodedState]:
    """Union of generator group winners and retrieval hits, untagged order."""
    encoded = bundle.model.encode(context, facts)
    session_view = DecodeSession(bundle.model, encoded)
    hyps = diverse_beam_search(session_view.step, session_view.initial_state(),
                               bundle.search, facts=facts, embeddings=bundle.table)
    candidates: list[Candidate] = []
    for hyp in group_winners(hyps):
        if not hyp.tokens:
            # an immediate end-of-sequence has no surface form to show
            log.warning("dropping empty generator hypothesis (logprob %.3f)",
                        hyp.logprob)
            continue
        candidates.append(Candidate(list(hyp.tokens), "mhred", hyp.logprob))

    query = extract_keywords(facts, bundle.vocab, bundle.models.tagger,
                             bundle.models.stopwords)
    if query is not None:
        hits = retrieve(query, bundle.index, bundle.fr_params, bundle.fr_limit)
        candidates.extend(Candidate(list(h.entry.r_tokens), "fr", h.score)
                          for h in hits if h.entry.r_tokens)
    return candidates, encoded


def respond(bundle: EnsembleBundle, session: Session, utterance: str,
            facts_override: FactSet | None = None) -> RespondResult:
    """One full turn; appends both the utterance and the winner to context."""
    words = tokenize(utterance)
    if not words:
        raise ValueError("respond: empty utterance")
    ids = bundle.vocab.encode(words)
    with session.lock:
        session.push(ids)
        context = [list(u) for u in session.context]
        facts = facts_override if facts_override is not None else session.facts

        candidates, encoded = generate_candidates(bundle, context, facts)
        if not candidates:
            raise RuntimeError("respond: no candidates from any source")
        ranked = rerank(candidates, context, facts, bundle.models)
        winner = ranked[0]

        session.push(winner.tokens)
        session.last_active = time.time()
    return RespondResult(winner=winner, candidates=ranked,
                         attention=export_attention(encoded, facts, bundle.vocab))
