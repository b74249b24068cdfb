"""Search: penalties, beam search vs enumeration, DBS step oracle."""

import itertools
import math

import numpy as np
import pytest

from factdial.corpus import Fact, FactSet
from factdial.embeddings import EmbeddingTable, sum_embedding
from factdial.search import (
    Hypothesis,
    SearchConfig,
    beam_search,
    diverse_beam_search,
    fact_penalty,
    group_winners,
    hamming_diversity,
)
from factdial.text import BOS, EOS, UNK


# ---------------------------------------------------------------------------
# toy step models
# ---------------------------------------------------------------------------

def _log_softmax(logits):
    m = logits.max()
    return logits - (m + np.log(np.exp(logits - m).sum()))


class PositionModel:
    """Log-probs depend only on the step index; state is the index."""

    def __init__(self, vocab, length, seed, eos=0, eos_logit=-20.0):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(length, vocab))
        logits[:, eos] = eos_logit
        self.tables = np.stack([_log_softmax(r) for r in logits])

    def initial_state(self):
        return 0

    def step(self, state, prev):
        t = min(state, self.tables.shape[0] - 1)
        return self.tables[t], state + 1


class PrefixModel:
    """Log-probs are a pure function of every token consumed so far."""

    def __init__(self, vocab, seed, eos=0, eos_logit=-6.0):
        self.vocab = vocab
        self.seed = seed
        self.eos = eos
        self.eos_logit = eos_logit

    def initial_state(self):
        return ()

    def _logits(self, consumed):
        key = self.seed
        for i, t in enumerate(consumed):
            key = (key * 31 + (t + 1) * (i + 7)) % (2 ** 32)
        logits = np.random.default_rng(key).normal(size=self.vocab)
        logits[self.eos] = self.eos_logit
        return logits

    def step(self, state, prev):
        consumed = state + (prev,)
        return _log_softmax(self._logits(consumed)), consumed


def _enumerate_best(model, vocab, max_len, eos=0, bos=0):
    """Brute-force argmax over all sequences the searches could emit."""
    best_theta, best_tokens = -math.inf, None

    def rec(state, prev, tokens, theta):
        nonlocal best_theta, best_tokens
        lp, nstate = model.step(state, prev)
        for tok in range(vocab):
            th = theta + lp[tok]
            seq = tokens + (tok,)
            if tok == eos or len(seq) == max_len:
                if th > best_theta:
                    best_theta, best_tokens = th, seq
            else:
                rec(nstate, tok, seq, th)

    rec(model.initial_state(), bos, (), 0.0)
    return best_tokens, best_theta


# ---------------------------------------------------------------------------
# config and penalties
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(beam_width=0)
    with pytest.raises(ValueError):
        SearchConfig(beam_width=5, groups=2)
    with pytest.raises(ValueError):
        SearchConfig(beam_width=4, lambda_div=-0.1)
    assert SearchConfig(beam_width=15, groups=15).group_width == 1
    assert SearchConfig(beam_width=6, groups=2).group_width == 3


def test_hamming_diversity_fixtures():
    assert hamming_diversity(7, []) == 0.0
    assert hamming_diversity(7, [8, 9]) == 1.0
    assert hamming_diversity(7, [7, 9]) == 0.5
    assert hamming_diversity(7, [7, 7, 7]) == 0.0


def test_fact_penalty_identical_is_exactly_one():
    rng = np.random.default_rng(0)
    table = EmbeddingTable(rng.normal(size=(10, 4)))
    facts = FactSet("t", subject=[Fact([4, 5, 6])])
    assert fact_penalty([4, 5, 6], facts, table) == 1.0  # exact, not approx


def test_fact_penalty_orthogonal_is_zero():
    m = np.zeros((6, 2))
    m[4] = [1.0, 0.0]
    m[5] = [0.0, 1.0]
    table = EmbeddingTable(m)
    facts = FactSet("t", subject=[Fact([5])])
    assert fact_penalty([4], facts, table) == 0.0


def test_fact_penalty_matches_brute_force_three_facts():
    rng = np.random.default_rng(1)
    table = EmbeddingTable(rng.normal(size=(12, 5)))
    facts = FactSet("t", subject=[Fact([4, 5]), Fact([6])],
                    description=[Fact([7, 8, 9])])
    prefix = [10, 11, 4]
    got = fact_penalty(prefix, facts, table)

    def cos(a, b):
        return a @ b / (np.linalg.norm(a) * np.linalg.norm(b))

    pv = table.matrix[prefix].sum(axis=0)
    expect = np.mean([cos(pv, table.matrix[f.tokens].sum(axis=0))
                      for f in facts.subject + facts.description])
    assert got == pytest.approx(expect, abs=1e-12)
    assert -1.0 <= got <= 1.0


def test_fact_penalty_empty_and_order_invariant():
    rng = np.random.default_rng(2)
    table = EmbeddingTable(rng.normal(size=(10, 3)))
    assert fact_penalty([4, 5], FactSet("t"), table) == 0.0
    a = FactSet("t", subject=[Fact([4]), Fact([5])], description=[Fact([6])])
    b = FactSet("t", subject=[Fact([5]), Fact([4])], description=[Fact([6])])
    assert fact_penalty([7, 8], a, table) == pytest.approx(
        fact_penalty([7, 8], b, table), abs=1e-15)


# ---------------------------------------------------------------------------
# beam search
# ---------------------------------------------------------------------------

def test_beam_width_one_is_greedy():
    model = PositionModel(vocab=5, length=3, seed=3)
    cfg = SearchConfig(beam_width=1, max_len=3, forbidden=(), exact=True)
    hyps = beam_search(model.step, model.initial_state(), cfg, bos=0, eos=0)
    greedy = tuple(int(model.tables[t].argmax()) for t in range(3))
    assert hyps[0].tokens == greedy


def test_beam_search_finds_optimum_100_models():
    for seed in range(100):
        model = PositionModel(vocab=5, length=3, seed=seed)
        cfg = SearchConfig(beam_width=3, max_len=3, forbidden=(), exact=True)
        hyps = beam_search(model.step, model.initial_state(), cfg, bos=0, eos=0)
        best_tokens, best_theta = _enumerate_best(model, 5, 3)
        assert hyps[0].tokens == best_tokens, f"seed {seed}"
        assert hyps[0].logprob == pytest.approx(best_theta, abs=1e-12)


def test_wide_beam_exact_on_prefix_model():
    # beam covering every live prefix: the search must return the true optimum
    for seed in (0, 1, 2):
        model = PrefixModel(vocab=4, seed=seed)
        cfg = SearchConfig(beam_width=20, max_len=3, forbidden=(), exact=True)
        hyps = beam_search(model.step, model.initial_state(), cfg, bos=0, eos=0)
        best_tokens, best_theta = _enumerate_best(model, 4, 3)
        assert hyps[0].tokens == best_tokens
        assert hyps[0].logprob == pytest.approx(best_theta, abs=1e-12)


def test_beam_search_rejects_penalties():
    model = PositionModel(vocab=5, length=2, seed=0)
    with pytest.raises(ValueError):
        beam_search(model.step, 0, SearchConfig(beam_width=4, groups=2))


class UnkLovingModel:
    """unk has the best logit at every step; the mask must still win."""

    def __init__(self, vocab=8):
        logits = np.full(vocab, -2.0)
        logits[UNK] = 5.0
        logits[EOS] = -1.0
        self.lp = _log_softmax(logits)

    def initial_state(self):
        return 0

    def step(self, state, prev):
        return self.lp, state + 1


def test_unk_never_emitted():
    model = UnkLovingModel()
    cfg = SearchConfig(beam_width=4, max_len=5)
    for hyps in (beam_search(model.step, 0, cfg),
                 diverse_beam_search(model.step, 0,
                                     SearchConfig(beam_width=4, groups=2,
                                                  lambda_div=0.4, max_len=5))):
        assert hyps
        for h in hyps:
            assert UNK not in h.tokens
            assert math.isfinite(h.logprob)


def test_finished_hypotheses_keep_eos_and_theta():
    model = UnkLovingModel()
    cfg = SearchConfig(beam_width=2, max_len=6)
    hyps = beam_search(model.step, 0, cfg)
    done = [h for h in hyps if h.finished and h.tokens[-1] == EOS]
    assert done
    for h in done:
        # Θ is the sum of per-step log-probs of all its tokens, eos included
        assert h.logprob == pytest.approx(sum(model.lp[t] for t in h.tokens), abs=1e-12)


# ---------------------------------------------------------------------------
# diverse beam search
# ---------------------------------------------------------------------------

def test_dbs_reduction_identical_to_bs():
    for seed in range(10):
        model = PrefixModel(vocab=5, seed=seed, eos_logit=-3.0)
        cfg = SearchConfig(beam_width=4, groups=1, lambda_div=0.0,
                           gamma_fact=0.0, max_len=4, forbidden=(), exact=True)
        bs = beam_search(model.step, model.initial_state(), cfg, bos=0, eos=0)
        dbs = diverse_beam_search(model.step, model.initial_state(), cfg,
                                  bos=0, eos=0)
        assert [(h.tokens, h.finished) for h in bs] == \
               [(h.tokens, h.finished) for h in dbs]
        assert [h.logprob for h in bs] == pytest.approx([h.logprob for h in dbs])


def test_dbs_tie_broken_by_diversity():
    logits = np.array([-9.0, 2.0, 2.0, -4.0])  # tokens 1 and 2 tie at the top
    lp = _log_softmax(logits)

    def step(state, prev):
        return lp, state

    cfg = SearchConfig(beam_width=2, groups=2, lambda_div=0.4, max_len=1,
                       forbidden=(), exact=True)
    hyps = diverse_beam_search(step, 0, cfg, bos=0, eos=0)
    winners = group_winners(hyps)
    assert winners[0].tokens == (1,)  # group 1: plain argmax, low token id wins tie
    assert winners[1].tokens == (2,)  # group 2: diversity penalty breaks the tie


def test_dbs_bprime_one_configs():
    for b, g in ((15, 15), (5, 5)):
        model = PositionModel(vocab=6, length=3, seed=42)
        cfg = SearchConfig(beam_width=b, groups=g, lambda_div=0.4,
                           max_len=3, forbidden=(), exact=True)
        hyps = diverse_beam_search(model.step, model.initial_state(), cfg,
                                   bos=0, eos=0)
        assert sorted({h.group for h in hyps}) == list(range(1, g + 1))
        for gi in range(1, g + 1):
            assert sum(1 for h in hyps if h.group == gi) == 1


def _oracle_check_record(rec, model, facts, table, cfg, bos):
    """Recompute one group-step selection by exhaustive enumeration."""
    pool = []
    for idx, (tokens, theta) in enumerate(rec["live"]):
        state, prev = model.initial_state(), bos
        for tok in tokens:
            _, state = model.step(state, prev)
            prev = tok
        lp, _ = model.step(state, prev)
        lp = lp.astype(float).copy()
        for t in cfg.forbidden:
            lp[t] = -math.inf
        for tok in range(lp.size):
            if lp[tok] == -math.inf:
                continue
            base = theta + lp[tok]
            sel = base + cfg.lambda_div * hamming_diversity(tok, rec["prior_tokens"])
            if cfg.gamma_fact:
                sel += cfg.gamma_fact * fact_penalty(list(tokens) + [tok], facts, table)
            pool.append((sel, base, idx, tok))
    pool.sort(key=lambda c: (-c[0], c[2], c[3]))
    got = rec["selected"]
    assert len(got) == min(rec["need"], len(pool))
    for (esel, ebase, eidx, etok), (gidx, gtok, gbase, gsel) in zip(pool, got):
        assert (eidx, etok) == (gidx, gtok)
        assert gbase == pytest.approx(ebase, abs=1e-12)
        assert gsel == pytest.approx(esel, abs=1e-12)


def test_dbs_group_step_oracle():
    rng = np.random.default_rng(9)
    table = EmbeddingTable(rng.normal(size=(6, 4)))
    facts = FactSet("t", subject=[Fact([4, 5]), Fact([3])],
                    description=[Fact([2, 4])])
    cfg = SearchConfig(beam_width=4, groups=2, lambda_div=0.4, gamma_fact=10.0,
                       max_len=4, forbidden=(), exact=True)
    records = 0
    for seed in range(20):
        model = PrefixModel(vocab=6, seed=seed, eos_logit=-5.0)
        trace = []
        diverse_beam_search(model.step, model.initial_state(), cfg,
                            facts=facts, embeddings=table,
                            bos=0, eos=0, trace=trace)
        for rec in trace:
            _oracle_check_record(rec, model, facts, table, cfg, bos=0)
        records += len(trace)
    assert records >= 100


def test_dbs_needs_embeddings_for_fact_penalty():
    model = PositionModel(vocab=6, length=2, seed=0)
    cfg = SearchConfig(beam_width=2, groups=2, gamma_fact=1.0, max_len=2,
                       forbidden=(), exact=True)
    with pytest.raises(ValueError):
        diverse_beam_search(model.step, 0, cfg,
                            facts=FactSet("t", subject=[Fact([4])]),
                            embeddings=None, bos=0, eos=0)


def test_group_winners_orders_by_group():
    hyps = [
        Hypothesis(tokens=(5,), logprob=-1.0, group=2),
        Hypothesis(tokens=(4,), logprob=-2.0, group=1),
        Hypothesis(tokens=(6,), logprob=-0.5, group=2),
        Hypothesis(tokens=(7,), logprob=-1.5, group=1),
    ]
    winners = group_winners(hyps)
    assert [(w.group, w.tokens) for w in winners] == [(1, (7,)), (2, (6,))]


def test_dbs_final_ranking_is_raw_theta():
    # a hypothesis with the best raw likelihood must rank first even if its
    # group never benefited from penalties
    model = PositionModel(vocab=6, length=3, seed=11)
    cfg = SearchConfig(beam_width=4, groups=2, lambda_div=2.0, max_len=3,
                       forbidden=(), exact=True)
    hyps = diverse_beam_search(model.step, model.initial_state(), cfg,
                               bos=0, eos=0)
    thetas = [h.logprob for h in hyps]
    assert thetas == sorted(thetas, reverse=True)
