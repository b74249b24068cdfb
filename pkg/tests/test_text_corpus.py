"""Tokenizer, vocabulary, fact handling, dedupe, and embedding training."""

import itertools
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factdial.corpus import (
    Dialogue,
    Fact,
    FactSet,
    build_factset,
    categorize_facts,
    dedupe_by_score,
    select_facts,
)
from factdial.embeddings import (
    EmbeddingTable,
    avg_embedding,
    cosine,
    sum_embedding,
    train_embeddings,
)
from factdial.text import BOS, EOS, PAD, UNK, Vocab, tokenize


# ---------------------------------------------------------------------------
# tokenize
# ---------------------------------------------------------------------------

def test_tokenize_fixtures():
    assert tokenize("Lake Baikal!") == ["lake", "baikal", "!"]
    assert tokenize("") == []
    assert tokenize("it's 7,000 ft deep.") == ["it's", "7", ",", "000", "ft", "deep", "."]
    assert tokenize("  spaced\tout\nwords ") == ["spaced", "out", "words"]


def test_tokenize_idempotent_on_corpus():
    rng = np.random.default_rng(0)
    words = ["lake", "baikal", "deep!", "It's", "7,000", "ft.", "(really)", "?"]
    for _ in range(1000):
        sent = " ".join(rng.choice(words, size=rng.integers(1, 9)))
        toks = tokenize(sent)
        assert tokenize(" ".join(toks)) == toks


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=80))
def test_tokenize_idempotent_property(s):
    toks = tokenize(s)
    assert tokenize(" ".join(toks)) == toks


# ---------------------------------------------------------------------------
# vocab
# ---------------------------------------------------------------------------

def test_vocab_reserved_ids():
    v = Vocab.build([["a", "b"]], max_size=10)
    assert (PAD, BOS, EOS, UNK) == (0, 1, 2, 3)
    assert v.token(0) == "<pad>" and v.token(3) == "<unk>"
    assert v.id("never-seen") == UNK


def test_vocab_frequency_order_with_tie_break():
    sents = [["b", "b", "c", "a", "a", "a"], ["c"]]
    v = Vocab.build(sents, max_size=10)
    # a (3) first, then b and c tied at 2: alphabetical
    assert [v.token(i) for i in (4, 5, 6)] == ["a", "b", "c"]


def test_vocab_cap_keeps_most_frequent():
    sents = [["x"] * 5 + ["y"] * 3 + ["z"]]
    v = Vocab.build(sents, max_size=6)  # room for 2 real tokens
    assert len(v) == 6
    assert "x" in v and "y" in v and "z" not in v
    assert v.id("z") == UNK


def test_vocab_encode_decode_round_trip():
    v = Vocab.build([["hello", "world", "!"]], max_size=20)
    ids = v.encode(["hello", "world", "!", "martian"])
    assert ids[:3] != [UNK] * 3 and ids[3] == UNK
    assert v.decode(ids, skip_reserved=True) == ["hello", "world", "!"]
    assert v.decode([BOS, *ids[:2], EOS], skip_reserved=True) == ["hello", "world"]


def test_vocab_save_load(tmp_path):
    v = Vocab.build([["alpha", "beta", "beta"]], max_size=50)
    p = tmp_path / "vocab.json"
    v.save(p)
    w = Vocab.load(p)
    assert len(w) == len(v)
    assert all(w.token(i) == v.token(i) for i in range(len(v)))
    assert w.max_size == v.max_size


def test_vocab_rejects_too_small_cap():
    with pytest.raises(ValueError):
        Vocab([], max_size=3)


# ---------------------------------------------------------------------------
# fact categorization
# ---------------------------------------------------------------------------

def test_categorize_tag_rules():
    subj, desc = categorize_facts([
        "<title>lake baikal</title>",
        "it contains fresh water",
        "<h2>seven wonders</h2>",
        "<p>located in siberia</p>",
    ])
    assert subj == ["lake baikal", "seven wonders"]
    assert desc == ["it contains fresh water", "located in siberia"]


def test_categorize_all_heading_levels():
    lines = [f"<h{i}>heading {i}</h{i}>" for i in range(1, 7)]
    subj, desc = categorize_facts(lines)
    assert len(subj) == 6 and desc == []


def test_categorize_other_tags_stripped_to_description():
    subj, desc = categorize_facts(["<b>very</b> deep water", "<em>old</em>"])
    assert subj == []
    assert desc == ["very  deep water", "old"]


def test_categorize_case_insensitive_tags():
    subj, _ = categorize_facts(["<TITLE>Baikal</TITLE>", "<H3>depth</h3>"])
    assert subj == ["Baikal", "depth"]


def test_categorize_unbalanced_warns_and_defaults(caplog):
    with caplog.at_level(logging.WARNING, logger="factdial.corpus"):
        subj, desc = categorize_facts(["<h1>no closing tag here"])
    assert subj == []
    assert desc == ["no closing tag here"]
    assert any("unbalanced" in r.message for r in caplog.records)


def test_categorize_partitions_every_line():
    lines = ["<title>a</title>", "plain", "<p>b</p>", "<h4>c</h4>", "<i>d</i>", "<p>oops"]
    subj, desc = categorize_facts(lines)
    assert len(subj) + len(desc) == len(lines)


def test_build_factset_truncates_and_drops_empty():
    v = Vocab.build([[f"w{i}" for i in range(100)]], max_size=200)
    long_line = " ".join(f"w{i}" for i in range(100))
    fs = build_factset("t", [f"<p>{long_line}</p>", "<p>   </p>", "<h1>w1 w2</h1>"], v)
    assert fs.l == 1 and len(fs.description[0].tokens) == 64
    assert fs.k == 1 and len(fs.subject[0].tokens) == 2


def test_fact_bow_matches_multiset():
    f = Fact([5, 3, 5, 5, 2])
    ids, counts = f.bow()
    assert ids.tolist() == [2, 3, 5]
    assert counts.tolist() == [1.0, 1.0, 3.0]
    assert counts.sum() == len(f.tokens)


# ---------------------------------------------------------------------------
# fact selection
# ---------------------------------------------------------------------------

def _orthogonal_table(n, d):
    m = np.zeros((n, d))
    for i in range(n):
        m[i, i % d] = 1.0
    return EmbeddingTable(m)


def test_select_single_fact_kept():
    table = _orthogonal_table(8, 8)
    pool = FactSet("t", subject=[Fact([4])], description=[])
    out = select_facts([[5, 6]], pool, table, cap=10)
    assert out.k == 1 and out.l == 0


def test_select_identical_fact_ranks_first():
    rng = np.random.default_rng(1)
    table = EmbeddingTable(rng.normal(size=(10, 4)))
    ctx = [[4, 5, 6]]
    pool = FactSet("t", description=[Fact([7, 8]), Fact([4, 5, 6]), Fact([9])])
    out = select_facts(ctx, pool, table, cap=2)
    assert out.description[0].tokens == [4, 5, 6]
    vec = avg_embedding([4, 5, 6], table)
    assert cosine(vec, vec) == pytest.approx(1.0)


def test_select_matches_brute_force():
    rng = np.random.default_rng(2)
    table = EmbeddingTable(rng.normal(size=(40, 6)))
    ctx = [[4, 7], [9, 11, 13]]
    pool = FactSet("t", description=[Fact(list(rng.integers(4, 40, size=rng.integers(1, 6))))
                                     for _ in range(12)])
    out = select_facts(ctx, pool, table, cap=10)
    assert out.l == 10

    ctx_vec = avg_embedding([4, 7, 9, 11, 13], table)
    scores = [cosine(ctx_vec, avg_embedding(f.tokens, table)) for f in pool.description]
    expect = sorted(range(12), key=lambda i: (-scores[i], i))[:10]
    assert [f.tokens for f in out.description] == [pool.description[i].tokens for i in expect]


def test_select_categories_ranked_independently():
    table = _orthogonal_table(12, 12)
    ctx = [[4]]
    # subject facts far from context must still be kept: categories never mix
    pool = FactSet("t", subject=[Fact([10]), Fact([11])], description=[Fact([4])])
    out = select_facts(ctx, pool, table, cap=1)
    assert out.k == 1 and out.l == 1
    assert out.description[0].tokens == [4]


def test_select_rejects_bad_cap():
    with pytest.raises(ValueError):
        select_facts([[4]], FactSet("t"), _orthogonal_table(5, 5), cap=0)


# ---------------------------------------------------------------------------
# dedupe
# ---------------------------------------------------------------------------

def _dlg(ctx, score, topic="t", resp=(9,)):
    return Dialogue(topic_id=topic, context=[list(u) for u in ctx],
                    response=list(resp), score=score)


def test_dedupe_keeps_max_score():
    rows = [_dlg([[4, 5]], 5), _dlg([[4, 5]], 9), _dlg([[6]], 1)]
    out = dedupe_by_score(rows)
    assert [(r.context_key(), r.score) for r in out] == [(((4, 5),), 9), (((6,),), 1)]


def test_dedupe_tie_keeps_first():
    a, b = _dlg([[4]], 7, resp=(5,)), _dlg([[4]], 7, resp=(6,))
    out = dedupe_by_score([a, b])
    assert len(out) == 1 and out[0].response == [5]


def test_dedupe_unique_contexts_unchanged():
    rows = [_dlg([[4, i]], i) for i in range(5, 15)]
    assert dedupe_by_score(rows) == rows


def test_dedupe_against_brute_force():
    rng = np.random.default_rng(3)
    contexts = [[list(rng.integers(4, 12, size=rng.integers(1, 4)))
                 for _ in range(rng.integers(1, 3))] for _ in range(60)]
    rows = []
    for _ in range(1000):
        ctx = contexts[rng.integers(len(contexts))]
        rows.append(_dlg([list(u) for u in ctx], int(rng.integers(0, 200))))

    groups: dict[tuple, list[Dialogue]] = {}
    order: list[tuple] = []
    for r in rows:
        k = r.context_key()
        if k not in groups:
            order.append(k)
        groups.setdefault(k, []).append(r)
    expect = [max(groups[k], key=lambda r: r.score) for k in order]

    got = dedupe_by_score(rows)
    assert [(r.context_key(), r.score) for r in got] == \
           [(r.context_key(), r.score) for r in expect]


def test_dialogue_rejects_empty_utterance():
    with pytest.raises(ValueError):
        Dialogue(topic_id="t", context=[[]], response=[4])
    with pytest.raises(ValueError):
        Dialogue(topic_id="t", context=[], response=[4])


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------

def test_avg_embedding_fixtures():
    table = EmbeddingTable(np.arange(12, dtype=float).reshape(6, 2))
    np.testing.assert_allclose(avg_embedding([3], table), [6.0, 7.0])
    np.testing.assert_allclose(avg_embedding([], table), [0.0, 0.0])
    np.testing.assert_allclose(avg_embedding([2, 4], table), [(4 + 8) / 2, (5 + 9) / 2])
    np.testing.assert_allclose(sum_embedding([2, 4], table), [12.0, 14.0])
    np.testing.assert_allclose(sum_embedding([], table), [0.0, 0.0])


def test_cosine_basics():
    assert cosine(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == pytest.approx(1.0)
    assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    assert cosine(np.zeros(3), np.array([1.0, 2.0, 3.0])) == 0.0
    assert cosine(np.array([1.0, 0.0]), np.array([-2.0, 0.0])) == pytest.approx(-1.0)


def _topic_corpus(ids, n_sents, rng, length=8):
    return [list(rng.choice(ids, size=length)) for _ in range(n_sents)]


def test_embeddings_topic_separability():
    rng = np.random.default_rng(7)
    topic_a = list(range(4, 10))
    topic_b = list(range(10, 16))
    corpus = _topic_corpus(topic_a, 150, rng) + _topic_corpus(topic_b, 150, rng)
    table = train_embeddings(corpus, vocab_size=16, dim=16, window=3,
                             negatives=3, epochs=3, seed=0)

    def mean_cos(pairs):
        return np.mean([cosine(table.row(i), table.row(j)) for i, j in pairs])

    intra = mean_cos(list(itertools.combinations(topic_a, 2))
                     + list(itertools.combinations(topic_b, 2)))
    inter = mean_cos(list(itertools.product(topic_a, topic_b)))
    assert intra > inter


def test_embeddings_smoke_and_determinism():
    corpus = [[4, 5, 6, 7, 8, 9]]
    t1 = train_embeddings(corpus, vocab_size=10, dim=2, window=2, negatives=2,
                          epochs=2, seed=5)
    assert t1.matrix.shape == (10, 2)
    assert np.all(np.isfinite(t1.matrix))
    t2 = train_embeddings(corpus, vocab_size=10, dim=2, window=2, negatives=2,
                          epochs=2, seed=5)
    assert np.array_equal(t1.matrix, t2.matrix)
    t3 = train_embeddings(corpus, vocab_size=10, dim=2, window=2, negatives=2,
                          epochs=2, seed=6)
    assert not np.array_equal(t1.matrix, t3.matrix)


def test_embeddings_vocab_too_small_rejected():
    with pytest.raises(ValueError):
        train_embeddings([[4, 5]], vocab_size=6, dim=4, negatives=5)


def test_embedding_table_save_load(tmp_path):
    rng = np.random.default_rng(8)
    t = EmbeddingTable(rng.normal(size=(7, 3)))
    p = tmp_path / "emb.bin"
    t.save(p)
    u = EmbeddingTable.load(p)
    assert np.array_equal(t.matrix, u.matrix)


def test_embedding_table_rejects_wrong_kind(tmp_path):
    from factdial.checkpoint import save_checkpoint
    p = tmp_path / "not_emb.bin"
    save_checkpoint(p, {"w": np.eye(2)}, {"kind": "model"})
    with pytest.raises(ValueError):
        EmbeddingTable.load(p)
