"""Corpus-level word-overlap metrics and a diversity ratio.

All functions take tokenized text (lists of token strings). Metrics are
corpus-level: statistics are pooled over all (hypothesis, reference)
pairs before any ratio is taken, so single-sentence quirks average out
the way the standard toolkit scores do.
"""

from __future__ import annotations

import math
from collections import Counter

Pair = tuple[list[str], list[str]]  # (hypothesis, reference)

_VOWELS = set("aeiou")


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _check_corpus(pairs: list[Pair]) -> None:
    if not pairs:
        raise ValueError("metrics: empty corpus")
    for hyp, ref in pairs:
        if not ref:
            raise ValueError("metrics: empty reference")


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

def bleu_stats(pairs: list[Pair], max_n: int = 4) -> tuple[list[int], list[int], int, int]:
    """(clipped match counts, hypothesis n-gram totals, hyp len, ref len)."""
    _check_corpus(pairs)
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in pairs:
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            hg = _ngrams(hyp, n)
            rg = _ngrams(ref, n)
            matches[n - 1] += sum(min(c, rg[g]) for g, c in hg.items())
            totals[n - 1] += sum(hg.values())
    return matches, totals, hyp_len, ref_len


def bleu(pairs: list[Pair], max_n: int = 4) -> float:
    """Corpus BLEU with clipped n-gram precisions and brevity penalty.

    A zero precision is floored at 1e-9 instead of zeroing the whole
    geometric mean; orders for which the corpus has no hypothesis
    n-grams at all are left out of the mean.
    """
    matches, totals, hyp_len, ref_len = bleu_stats(pairs, max_n)
    log_sum = 0.0
    orders = 0
    for m, t in zip(matches, totals):
        if t == 0:
            continue
        orders += 1
        log_sum += math.log(max(m / t, 1e-9))
    if orders == 0 or hyp_len == 0:
        return 0.0
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return brevity * math.exp(log_sum / orders)


# ---------------------------------------------------------------------------
# NIST
# ---------------------------------------------------------------------------

def nist(pairs: list[Pair], max_n: int = 4) -> float:
    """Information-weighted n-gram co-occurrence.

    Info weights come from the reference side of the corpus:
    info(w1..wn) = log2(count(w1..wn-1) / count(w1..wn)), with the
    unigram denominator being the reference token count.
    """
    _check_corpus(pairs)
    ref_counts = [Counter() for _ in range(max_n + 1)]  # [0] unused beyond total
    total_ref_tokens = 0
    for _, ref in pairs:
        total_ref_tokens += len(ref)
        for n in range(1, max_n + 1):
            ref_counts[n].update(_ngrams(ref, n))

    def info(gram: tuple[str, ...]) -> float:
        n = len(gram)
        denom = ref_counts[n][gram]
        numer = total_ref_tokens if n == 1 else ref_counts[n - 1][gram[:-1]]
        if denom == 0 or numer == 0:
            return 0.0
        return math.log2(numer / denom)

    numerators = [0.0] * max_n
    denominators = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in pairs:
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            hg = _ngrams(hyp, n)
            rg = _ngrams(ref, n)
            denominators[n - 1] += sum(hg.values())
            for gram, c in hg.items():
                co = min(c, rg[gram])
                if co:
                    numerators[n - 1] += co * info(gram)

    score = sum(num / den for num, den in zip(numerators, denominators) if den > 0)
    if hyp_len == 0:
        return 0.0
    ratio = min(hyp_len / ref_len, 1.0)
    beta = math.log(0.5) / math.log(2.0 / 3.0) ** 2
    brevity = math.exp(beta * math.log(ratio) ** 2)
    return score * brevity


# ---------------------------------------------------------------------------
# METEOR (exact + stem stages)
# ---------------------------------------------------------------------------

def stem(word: str) -> str:
    """Tiny suffix stripper: plural endings, then -ing/-ed with
    double-consonant collapse. Both sides of a match are stemmed, so
    consistency matters more than linguistic accuracy."""
    w = word
    if w.endswith("ies") and len(w) > 4:
        w = w[:-3] + "i"
    elif w.endswith("sses"):
        w = w[:-2]
    elif w.endswith("s") and not w.endswith("ss") and not w.endswith("us") and len(w) > 3:
        w = w[:-1]
    for suffix in ("ing", "ed"):
        if w.endswith(suffix) and len(w) - len(suffix) >= 3 \
                and any(c in _VOWELS for c in w[: -len(suffix)]):
            w = w[: -len(suffix)]
            if len(w) >= 2 and w[-1] == w[-2] and w[-1] not in "lsz" \
                    and w[-1] not in _VOWELS:
                w = w[:-1]
            break
    return w


def align_unigrams(hyp: list[str], ref: list[str]) -> list[tuple[int, int]]:
    """Greedy left-to-right alignment: exact matches first, then stems."""
    pairs: list[tuple[int, int]] = []
    used_ref = [False] * len(ref)
    matched_hyp = [False] * len(hyp)
    for exact in (True, False):
        rkey = ref if exact else [stem(w) for w in ref]
        hkey = hyp if exact else [stem(w) for w in hyp]
        for i, key in enumerate(hkey):
            if matched_hyp[i]:
                continue
            for j, rk in enumerate(rkey):
                if not used_ref[j] and rk == key:
                    pairs.append((i, j))
                    used_ref[j] = True
                    matched_hyp[i] = True
                    break
    pairs.sort()
    return pairs


def _chunks(pairs: list[tuple[int, int]]) -> int:
    runs = 0
    prev = None
    for h, r in pairs:
        if prev is None or (h, r) != (prev[0] + 1, prev[1] + 1):
            runs += 1
        prev = (h, r)
    return runs


def meteor_simplified(pairs: list[Pair]) -> float:
    """Harmonic mean weighted 9:1 toward recall, times a fragmentation
    penalty 0.5*(chunks/matches)^3, pooled over the corpus."""
    _check_corpus(pairs)
    matches = 0
    chunks = 0
    hyp_len = 0
    ref_len = 0
    for hyp, ref in pairs:
        hyp_len += len(hyp)
        ref_len += len(ref)
        aligned = align_unigrams(hyp, ref)
        matches += len(aligned)
        chunks += _chunks(aligned)
    if matches == 0 or hyp_len == 0:
        return 0.0
    precision = matches / hyp_len
    recall = matches / ref_len
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1.0 - penalty)


# ---------------------------------------------------------------------------
# distinct-n
# ---------------------------------------------------------------------------

def distinct_n(hypotheses: list[list[str]], n: int) -> float:
    """Unique n-grams over total n-grams, pooled across all hypotheses."""
    if n < 1:
        raise ValueError("metrics: n must be >= 1")
    seen: set = set()
    total = 0
    for hyp in hypotheses:
        for i in range(len(hyp) - n + 1):
            seen.add(tuple(hyp[i : i + n]))
            total += 1
    return len(seen) / total if total else 0.0
