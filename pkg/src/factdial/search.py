"""Beam search and diverse beam search over step-scoring models.

A model is any step function mapping (state, previous token) to
(log-probability vector, next state) plus an initial state. Hypothesis
scores Θ are plain sums of selected tokens' log-probabilities; the
diversity and fact penalties only steer the per-step selection and never
change Θ, so the final cross-group ranking is by raw likelihood.

Finished hypotheses keep their beam slots: a group (or the single beam)
holds at most B' sequences, finished ones are never evicted, and each
step fills the remaining slots from live extensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .corpus import FactSet
from .embeddings import EmbeddingTable, cosine, sum_embedding
from .text import BOS, EOS, UNK

StepFn = Callable[[object, int], tuple[np.ndarray, object]]


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]
    logprob: float            # Θ: sum of the tokens' step log-probabilities
    group: int = 1            # 1-based group index
    finished: bool = False
    state: object = None

    def surface(self, vocab) -> str:
        return " ".join(vocab.decode(self.tokens))


@dataclass
class SearchConfig:
    beam_width: int
    groups: int = 1
    lambda_div: float = 0.0
    gamma_fact: float = 0.0
    max_len: int = 40
    forbidden: tuple[int, ...] = (UNK,)
    # shortlist per live hypothesis; None means 2*B. exact=True scores the
    # whole vocabulary, which the oracle tests rely on.
    shortlist: int | None = None
    exact: bool = False

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError(f"search: beam width must be >= 1, got {self.beam_width}")
        if self.groups < 1 or self.beam_width % self.groups != 0:
            raise ValueError(
                f"search: beam width {self.beam_width} not divisible by {self.groups} groups")
        if self.lambda_div < 0 or self.gamma_fact < 0:
            raise ValueError("search: penalty weights must be nonnegative")
        if self.max_len < 1:
            raise ValueError("search: max_len must be >= 1")

    @property
    def group_width(self) -> int:
        return self.beam_width // self.groups


# ---------------------------------------------------------------------------
# penalties
# ---------------------------------------------------------------------------

def hamming_diversity(candidate_token: int, prior_tokens: Sequence[int]) -> float:
    """Fraction of earlier groups' step-t tokens that differ from the candidate.

    No earlier tokens (first group, or all earlier groups finished) gives 0.
    """
    if not prior_tokens:
        return 0.0
    differing = sum(1 for t in prior_tokens if t != candidate_token)
    return differing / len(prior_tokens)


def fact_penalty(prefix: Sequence[int], facts: FactSet, table: EmbeddingTable) -> float:
    """Mean cosine between the prefix's summed embeddings and each fact's.

    Sums, not averages, on both sides. No facts gives 0 so the selection
    objective stays total.
    """
    all_facts = facts.subject + facts.description
    if not all_facts:
        return 0.0
    prefix_vec = sum_embedding(prefix, table)
    return sum(cosine(prefix_vec, sum_embedding(f.tokens, table))
               for f in all_facts) / len(all_facts)


# ---------------------------------------------------------------------------
# beam search
# ---------------------------------------------------------------------------

def _candidate_tokens(lp: np.ndarray, cfg: SearchConfig) -> np.ndarray:
    if cfg.exact:
        return np.arange(lp.size)
    width = cfg.shortlist if cfg.shortlist is not None else 2 * cfg.beam_width
    if width >= lp.size:
        return np.arange(lp.size)
    return np.argpartition(-lp, width)[:width]


def _masked(logprobs: np.ndarray, cfg: SearchConfig) -> np.ndarray:
    lp = logprobs.astype(np.float64, copy=True)
    for t in cfg.forbidden:
        lp[t] = -math.inf
    return lp


def beam_search(step: StepFn, initial_state, config: SearchConfig,
                bos: int = BOS, eos: int = EOS) -> list[Hypothesis]:
    """Length-unnormalized beam search; hypotheses ranked by Θ descending."""
    if config.groups != 1 or config.lambda_div or config.gamma_fact:
        raise ValueError("beam_search: plain search takes G=1 and zero penalties")
    beam = [Hypothesis(tokens=(), logprob=0.0, state=initial_state)]
    for _ in range(config.max_len):
        finished = [h for h in beam if h.finished]
        live = [h for h in beam if not h.finished]
        if not live:
            break
        need = config.beam_width - len(finished)
        pool = []
        for idx, h in enumerate(live):
            prev = h.tokens[-1] if h.tokens else bos
            lp, new_state = step(h.state, prev)
            lp = _masked(lp, config)
            for tok in _candidate_tokens(lp, config):
                if lp[tok] == -math.inf:
                    continue
                pool.append((h.logprob + lp[tok], idx, int(tok), new_state))
        pool.sort(key=lambda c: (-c[0], c[1], c[2]))
        beam = finished
        for score, idx, tok, state in pool[:need]:
            h = live[idx]
            done = tok == eos or len(h.tokens) + 1 >= config.max_len
            beam.append(Hypothesis(tokens=h.tokens + (tok,), logprob=score,
                                   finished=done, state=None if done else state))
    return sorted(beam, key=lambda h: (-h.logprob, h.tokens))


# ---------------------------------------------------------------------------
# diverse beam search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _GroupHyp:
    """Search-internal hypothesis: adds the running embedding sum."""

    tokens: tuple[int, ...]
    logprob: float
    finished: bool
    state: object
    emb_sum: np.ndarray | None


def diverse_beam_search(
    step: StepFn,
    initial_state,
    config: SearchConfig,
    facts: FactSet | None = None,
    embeddings: EmbeddingTable | None = None,
    bos: int = BOS,
    eos: int = EOS,
    trace: list | None = None,
) -> list[Hypothesis]:
    """Group-wise beam search with diversity and fact-similarity penalties.

    Groups are processed in order every step; group g's selection sees the
    tokens groups 1..g-1 just chose at this step. Selection maximizes
    Θ + λ·Δ_div + γ·Δ_fact over (live hypothesis × token) extensions; the
    returned ranking uses raw Θ. `trace`, if given, collects one record
    per (step, group) with the live set and the chosen extensions, enough
    to replay the selection externally.
    """
    use_facts = (config.gamma_fact > 0 and facts is not None
                 and (facts.subject or facts.description))
    if use_facts and embeddings is None:
        raise ValueError("diverse_beam_search: fact penalty needs an embedding table")
    fact_sums = ([sum_embedding(f.tokens, embeddings)
                  for f in facts.subject + facts.description] if use_facts else [])

    def penalty_fact(emb_sum: np.ndarray) -> float:
        if not fact_sums:
            return 0.0
        return sum(cosine(emb_sum, fs) for fs in fact_sums) / len(fact_sums)

    zero_sum = np.zeros(embeddings.dim) if use_facts else None
    root = _GroupHyp(tokens=(), logprob=0.0, finished=False,
                     state=initial_state, emb_sum=zero_sum)
    groups: list[list[_GroupHyp]] = [[root] for _ in range(config.groups)]

    for t in range(config.max_len):
        if all(h.finished for g in groups for h in g):
            break
        prior_tokens: list[int] = []
        for gi, group in enumerate(groups):
            finished = [h for h in group if h.finished]
            live = [h for h in group if not h.finished]
            if not live:
                continue
            need = config.group_width - len(finished)
            pool = []
            for idx, h in enumerate(live):
                prev = h.tokens[-1] if h.tokens else bos
                lp, new_state = step(h.state, prev)
                lp = _masked(lp, config)
                for tok in _candidate_tokens(lp, config):
                    tok = int(tok)
                    if lp[tok] == -math.inf:
                        continue
                    base = h.logprob + lp[tok]
                    sel = base
                    if config.lambda_div:
                        sel += config.lambda_div * hamming_diversity(tok, prior_tokens)
                    emb_sum = None
                    if use_facts:
                        emb_sum = h.emb_sum + embeddings.matrix[tok]
                        sel += config.gamma_fact * penalty_fact(emb_sum)
                    pool.append((sel, base, idx, tok, new_state, emb_sum))
            pool.sort(key=lambda c: (-c[0], c[2], c[3]))
            chosen = pool[:need]
            if trace is not None:
                trace.append({
                    "t": t, "g": gi + 1,
                    "prior_tokens": list(prior_tokens),
                    "live": [(h.tokens, h.logprob) for h in live],
                    "need": need,
                    "selected": [(idx, tok, base, sel)
                                 for sel, base, idx, tok, _, _ in chosen],
                })
            new_group = list(finished)
            for sel, base, idx, tok, state, emb_sum in chosen:
                h = live[idx]
                done = tok == eos or len(h.tokens) + 1 >= config.max_len
                new_group.append(_GroupHyp(tokens=h.tokens + (tok,), logprob=base,
                                           finished=done,
                                           state=None if done else state,
                                           emb_sum=emb_sum))
                prior_tokens.append(tok)
            groups[gi] = new_group

    out = [Hypothesis(tokens=h.tokens, logprob=h.logprob, group=gi + 1,
                      finished=h.finished)
           for gi, group in enumerate(groups) for h in group]
    return sorted(out, key=lambda h: (-h.logprob, h.group, h.tokens))


def group_winners(hypotheses: list[Hypothesis]) -> list[Hypothesis]:
    """Best-Θ hypothesis of each group, in group order."""
    best: dict[int, Hypothesis] = {}
    for h in hypotheses:
        cur = best.get(h.group)
        if cur is None or h.logprob > cur.logprob or \
                (h.logprob == cur.logprob and h.tokens < cur.tokens):
            best[h.group] = h
    return [best[g] for g in sorted(best)]
