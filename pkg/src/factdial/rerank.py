"""Candidate reranking: features, synthetic training data, ablation.

A candidate is scored in three blocks: properties of the candidate
itself (lengths, fluency, POS counts, fact coverage), similarity to the
previous utterance, and topic agreement with the whole context. A
boosted-tree classifier turns the feature vector into a confidence.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import Dialogue, FactSet
from .embeddings import EmbeddingTable, avg_embedding, cosine
from .gbdt import GbdtModel, accuracy, gbdt_train
from .lda import LdaModel
from .lm import NgramLm
from .postag import ADJ, ADV, NOUN, PROPN, VERB, PosTagger
from .rake import rake_keyword_tokens
from .text import Vocab

FEATURE_NAMES: tuple[str, ...] = (
    "length_chars", "length_words", "fluency_2", "fluency_3",
    "pos_noun", "pos_verb", "pos_adj", "pos_adv", "fact_ratio",
    "word_sim", "ngram2_sim", "ngram3_sim",
    "length_sim_chars", "length_sim_words",
    "embedding_sim", "sentiment_sim", "pos_sim", "propn_sim", "keyword_sim",
    "topic_sim",
)

FEATURE_CATEGORIES: dict[str, tuple[str, ...]] = {
    "candidate": FEATURE_NAMES[0:9],
    "pair": FEATURE_NAMES[9:19],
    "context": FEATURE_NAMES[19:20],
}

NEGATIVE_RULES = ("low-score", "corrupted", "both")


@dataclass
class RerankModels:
    """Everything feature extraction reads; immutable once assembled."""
    vocab: Vocab
    lm2: NgramLm
    lm3: NgramLm
    table: EmbeddingTable
    lda: LdaModel
    tagger: PosTagger
    sentiment: dict[str, float]
    stopwords: frozenset[str]
    gbdt: GbdtModel | None = None
    _topic_cache: dict = field(default_factory=dict, repr=False)

    def topic_vector(self, tokens: list[int]) -> np.ndarray:
        key = tuple(tokens)
        hit = self._topic_cache.get(key)
        if hit is None:
            hit = self.lda.infer(list(tokens), iterations=50, seed=0)
            self._topic_cache[key] = hit
        return hit


@dataclass
class Candidate:
    tokens: list[int]
    source: str  # "mhred" | "fr"
    raw_score: float
    confidence: float | None = None

    def surface(self, vocab: Vocab) -> str:
        return " ".join(vocab.token(t) for t in self.tokens)


@dataclass
class RerankExample:
    context: list[list[int]]
    candidate: list[int]
    label: int
    rule: str  # one of NEGATIVE_RULES or "genuine-positive"
    topic_id: str


def _count_cosine(a: Counter, b: Counter) -> float:
    """Cosine over sparse count vectors; two empty bags count as identical."""
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    if a == b:
        return 1.0
    dot = sum(c * b[k] for k, c in a.items() if k in b)
    na = math.sqrt(sum(c * c for c in a.values()))
    nb = math.sqrt(sum(c * c for c in b.values()))
    return dot / (na * nb)


def _ngrams(tokens: list[int], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _char_len(words: list[str]) -> int:
    return len(" ".join(words))


def _mean_sentiment(words: list[str], lexicon: dict[str, float]) -> float:
    if not words:
        return 0.0
    return sum(lexicon.get(w, 0.0) for w in words) / len(words)


def _pos_bag(words: list[str], tagger: PosTagger) -> Counter:
    bag = Counter()
    for tag in tagger.tag_all(words):
        if tag in (NOUN, PROPN):
            bag[NOUN] += 1
        elif tag in (VERB, ADJ, ADV):
            bag[tag] += 1
    return bag


def _propn_bag(words: list[str], tagger: PosTagger) -> Counter:
    bag = Counter()
    for w in words:
        kind = tagger.propn_type(w)
        if kind is not None:
            bag[kind] += 1
    return bag


def _keyword_vector(words: list[str], models: RerankModels) -> np.ndarray:
    kw = rake_keyword_tokens(words, models.stopwords)
    ids = [i for i in (models.vocab.id(w) for w in kw) if i >= 4]  # skip reserved
    return avg_embedding(ids, models.table)


def candidate_features(cand: list[int], facts: FactSet, models: RerankModels) -> np.ndarray:
    if not cand:
        raise ValueError("features: empty candidate")
    words = [models.vocab.token(t) for t in cand]
    bag = _pos_bag(words, models.tagger)
    fact_tokens = {t for f in facts.subject + facts.description for t in f.tokens}
    ratio = sum(1 for t in cand if t in fact_tokens) / len(cand)
    return np.asarray([
        float(_char_len(words)),
        float(len(cand)),
        models.lm2.per_token_logprob(cand),
        models.lm3.per_token_logprob(cand),
        float(bag[NOUN]), float(bag[VERB]), float(bag[ADJ]), float(bag[ADV]),
        ratio,
    ])


def _length_sim(a: float, b: float, lo: float, hi: float) -> float:
    # lengths min-max normalized over the batch; a constant batch pins 0.5
    if hi <= lo:
        return 1.0
    return 1.0 - abs((a - lo) / (hi - lo) - (b - lo) / (hi - lo))


def pair_features(prev: list[int], cand: list[int], models: RerankModels,
                  char_range: tuple[float, float] | None = None,
                  word_range: tuple[float, float] | None = None) -> np.ndarray:
    if not prev or not cand:
        raise ValueError("features: empty utterance")
    pw = [models.vocab.token(t) for t in prev]
    cw = [models.vocab.token(t) for t in cand]
    if char_range is None:
        char_range = (min(_char_len(pw), _char_len(cw)), max(_char_len(pw), _char_len(cw)))
    if word_range is None:
        word_range = (min(len(prev), len(cand)), max(len(prev), len(cand)))

    word_sim = _count_cosine(Counter(set(prev)), Counter(set(cand)))
    u_sent = _mean_sentiment(pw, models.sentiment)
    s_sent = _mean_sentiment(cw, models.sentiment)
    return np.asarray([
        word_sim,
        _count_cosine(_ngrams(prev, 2), _ngrams(cand, 2)),
        _count_cosine(_ngrams(prev, 3), _ngrams(cand, 3)),
        _length_sim(_char_len(pw), _char_len(cw), *char_range),
        _length_sim(len(prev), len(cand), *word_range),
        cosine(avg_embedding(prev, models.table), avg_embedding(cand, models.table)),
        1.0 - abs((u_sent - s_sent) / 2.0),
        _count_cosine(_pos_bag(pw, models.tagger), _pos_bag(cw, models.tagger)),
        _count_cosine(_propn_bag(pw, models.tagger), _propn_bag(cw, models.tagger)),
        cosine(_keyword_vector(pw, models), _keyword_vector(cw, models)),
    ])


def context_features(context: list[list[int]], cand: list[int],
                     models: RerankModels) -> np.ndarray:
    flat = [t for turn in context for t in turn]
    sim = cosine(models.topic_vector(flat), models.topic_vector(cand))
    return np.asarray([sim])


def extract_features(context: list[list[int]], candidates: list[list[int]],
                     facts: FactSet, models: RerankModels) -> np.ndarray:
    """Feature matrix, one row per candidate, columns per FEATURE_NAMES."""
    if not context or not candidates:
        raise ValueError("features: need a context and at least one candidate")
    prev = context[-1]
    all_words = [[models.vocab.token(t) for t in seq] for seq in [prev] + candidates]
    char_lens = [float(_char_len(w)) for w in all_words]
    word_lens = [float(len(w)) for w in all_words]
    char_range = (min(char_lens), max(char_lens))
    word_range = (min(word_lens), max(word_lens))

    rows = []
    for cand in candidates:
        rows.append(np.concatenate([
            candidate_features(cand, facts, models),
            pair_features(prev, cand, models, char_range, word_range),
            context_features(context, cand, models),
        ]))
    out = np.stack(rows)
    if not np.all(np.isfinite(out)):
        raise ValueError("features: non-finite value produced")
    return out


# ---------------------------------------------------------------------------
# synthetic training data
# ---------------------------------------------------------------------------

def corrupt_tokens(tokens: list[int], rng: np.random.Generator) -> list[int]:
    """ceil(0.1 n) adjacent swaps then ceil(0.1 n) deletions, keeping >= 1 token."""
    out = list(tokens)
    k = math.ceil(0.1 * len(out))
    for _ in range(k):
        if len(out) < 2:
            break
        i = int(rng.integers(0, len(out) - 1))
        out[i], out[i + 1] = out[i + 1], out[i]
    for _ in range(min(k, len(out) - 1)):
        del out[int(rng.integers(0, len(out)))]
    return out


def build_rerank_dataset(dialogues: list[Dialogue],
                         rng: np.random.Generator) -> list[RerankExample]:
    """One positive per high-scored row, one negative per positive,
    the negative's rule drawn uniformly."""
    positives = [d for d in dialogues if d.score > 100]
    lows = [d for d in dialogues if d.score <= 1]
    if not positives:
        raise ValueError("rerank-data: no rows scored above 100")
    if not lows:
        raise ValueError("rerank-data: no rows scored 1 or less")

    examples: list[RerankExample] = []
    for pos in positives:
        examples.append(RerankExample(pos.context, list(pos.response), 1,
                                      "genuine-positive", pos.topic_id))
        rule = NEGATIVE_RULES[int(rng.integers(0, len(NEGATIVE_RULES)))]
        if rule == "corrupted":
            neg = corrupt_tokens(pos.response, rng)
        else:
            other = [d for d in lows if d.topic_id != pos.topic_id]
            if not other:
                raise ValueError(
                    f"rerank-data: no low-scored rows outside topic '{pos.topic_id}'")
            pick = other[int(rng.integers(0, len(other)))]
            neg = list(pick.response)
            if rule == "both":
                neg = corrupt_tokens(neg, rng)
        examples.append(RerankExample(pos.context, neg, 0, rule, pos.topic_id))
    return examples


def dataset_matrix(examples: list[RerankExample],
                   factsets: dict[str, FactSet],
                   models: RerankModels) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for ex in examples:
        facts = factsets.get(ex.topic_id)
        if facts is None:
            raise ValueError(f"rerank-data: no facts for topic '{ex.topic_id}'")
        xs.append(extract_features(ex.context, [ex.candidate], facts, models)[0])
        ys.append(float(ex.label))
    return np.stack(xs), np.asarray(ys)


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------

def rerank(candidates: list[Candidate], context: list[list[int]],
           facts: FactSet, models: RerankModels) -> list[Candidate]:
    """Candidates by descending confidence; retrieval wins exact ties."""
    if not candidates:
        raise ValueError("rerank: no candidates")
    if models.gbdt is None:
        raise ValueError("rerank: no trained classifier in the model bundle")
    x = extract_features(context, [c.tokens for c in candidates], facts, models)
    conf = models.gbdt.predict(x, list(FEATURE_NAMES))
    scored = [Candidate(c.tokens, c.source, c.raw_score, float(p))
              for c, p in zip(candidates, conf)]
    scored.sort(key=lambda c: (-c.confidence, 0 if c.source == "fr" else 1, c.tokens))
    return scored


# ---------------------------------------------------------------------------
# ablation
# ---------------------------------------------------------------------------

def _resolve_ablation(name: str) -> tuple[str, ...]:
    if name in FEATURE_CATEGORIES:
        return FEATURE_CATEGORIES[name]
    if name in FEATURE_NAMES:
        return (name,)
    valid = ", ".join(list(FEATURE_NAMES) + list(FEATURE_CATEGORIES))
    raise ValueError(f"ablation: unknown feature '{name}'; valid names: {valid}")


def zero_features(x: np.ndarray, names: tuple[str, ...]) -> np.ndarray:
    out = np.array(x, copy=True)
    for name in names:
        out[:, FEATURE_NAMES.index(name)] = 0.0
    return out


@dataclass
class AblationReport:
    baseline_accuracy: float
    feature_deltas: dict[str, float]
    category_deltas: dict[str, float]


def _split(x, y, seed: int, test_frac: float = 0.25):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    n_test = max(1, int(len(y) * test_frac))
    test, train = order[:n_test], order[n_test:]
    return x[train], y[train], x[test], y[test]


def run_ablation(x: np.ndarray, y: np.ndarray, rounds: int = 100,
                 max_depth: int = 4, learning_rate: float = 0.1,
                 seed: int = 0, exclude: str | None = None) -> float:
    """Held-out accuracy with the named feature/category zeroed out."""
    cols = _resolve_ablation(exclude) if exclude is not None else ()
    xa = zero_features(x, cols) if cols else x
    xtr, ytr, xte, yte = _split(xa, y, seed)
    model = gbdt_train(xtr, ytr, list(FEATURE_NAMES), rounds=rounds,
                       max_depth=max_depth, learning_rate=learning_rate, seed=seed)
    return accuracy(model, xte, yte)


def ablation_report(x: np.ndarray, y: np.ndarray, rounds: int = 100,
                    max_depth: int = 4, learning_rate: float = 0.1,
                    seed: int = 0) -> AblationReport:
    baseline = run_ablation(x, y, rounds, max_depth, learning_rate, seed)
    feats = {name: run_ablation(x, y, rounds, max_depth, learning_rate, seed, name)
             - baseline for name in FEATURE_NAMES}
    cats = {name: run_ablation(x, y, rounds, max_depth, learning_rate, seed, name)
            - baseline for name in FEATURE_CATEGORIES}
    return AblationReport(baseline, feats, cats)
