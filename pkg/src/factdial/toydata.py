"""Bundled demo corpus access and deterministic expansion.

The shipped corpus is 20 grounded dialogues over four topics plus a
handful of low-scored filler rows. That is enough to memorize but far
too small to train a classifier on, so expand_corpus grows it: each
topic carries a tiny phrase grammar whose cross product yields hundreds
of distinct, fluent, on-topic responses (scored high) and off-hand
filler (scored low). Everything is a pure function of the seed.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np


def _toy_text(name: str) -> str:
    return resources.files("factdial").joinpath("data", "toy", name).read_text(
        encoding="utf-8")


def load_toy_dialogues() -> list[dict]:
    return [json.loads(line) for line in _toy_text("dialogues.jsonl").splitlines() if line]


def load_toy_extras() -> list[dict]:
    return [json.loads(line) for line in _toy_text("extras.jsonl").splitlines() if line]


def load_toy_facts() -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for line in _toy_text("facts.jsonl").splitlines():
        if line:
            row = json.loads(line)
            out.setdefault(row["topic_id"], []).extend(row["lines"])
    return out


_GRAMMAR = {
    "baikal": {
        "subjects": ("the lake", "lake baikal", "the deep lake", "this old lake"),
        "verbs": ("holds", "keeps", "shows", "hides"),
        "objects": ("very clear water", "the oldest fresh water",
                    "a rare freshwater seal", "thick winter ice"),
        "tails": ("", "all year long", "deep below the surface", "far from any city"),
        "about": "lake baikal",
    },
    "sahara": {
        "subjects": ("the desert", "the sahara", "the hot sand", "this dry land"),
        "verbs": ("covers", "crosses", "burns", "swallows"),
        "objects": ("much of northern africa", "the old trade routes",
                    "the dry plains", "the wide horizon"),
        "tails": ("", "under the hot sun", "day after day", "mile after mile"),
        "about": "the sahara",
    },
    "everest": {
        "subjects": ("the mountain", "mount everest", "the high peak", "this famous peak"),
        "verbs": ("rises", "stands", "towers", "climbs"),
        "objects": ("above the clouds", "over nine kilometers",
                    "on the nepal border", "above every other peak"),
        "tails": ("", "in the thin air", "against the wind", "all year round"),
        "about": "mount everest",
    },
    "amazon": {
        "subjects": ("the forest", "the amazon", "the rainforest", "this vast forest"),
        "verbs": ("shelters", "feeds", "hides", "grows"),
        "objects": ("countless birds and fish", "many rare insects",
                    "tall old trees", "deep green life"),
        "tails": ("", "under heavy rain", "along the wide river", "across the basin"),
        "about": "the amazon",
    },
}

_CONTEXT_FORMS = (
    "tell me about {}",
    "what do you know about {}",
    "describe {} for me",
    "say something about {}",
    "what is special about {}",
    "give me a fact about {}",
)

_DULL_STARTERS = ("", "well", "honestly", "hmm", "oh")
_DULL_CORES = ("i do not know", "i am not sure", "maybe", "who cares",
               "no idea", "that is boring", "hard to say", "not my thing")
_DULL_CONTEXTS = ("and what else", "go on", "anything else", "really")


def expand_corpus(n_per_topic: int = 140, lows_per_topic: int = 30,
                  seed: int = 0) -> list[dict]:
    """Raw dialogue rows: n_per_topic distinct high-scored responses and
    lows_per_topic low-scored ones per topic, plus the bundled originals."""
    rng = np.random.default_rng(seed)
    rows = list(load_toy_dialogues()) + list(load_toy_extras())
    for topic in sorted(_GRAMMAR):
        g = _GRAMMAR[topic]
        combos = [" ".join(filter(None, (s, v, o, t)))
                  for s in g["subjects"] for v in g["verbs"]
                  for o in g["objects"] for t in g["tails"]]
        if n_per_topic > len(combos):
            raise ValueError(f"toydata: grammar for '{topic}' yields only "
                             f"{len(combos)} distinct responses")
        picks = rng.permutation(len(combos))[:n_per_topic]
        for i, pick in enumerate(picks):
            ctx = _CONTEXT_FORMS[i % len(_CONTEXT_FORMS)].format(g["about"])
            rows.append({"topic_id": topic, "context": [ctx],
                         "response": combos[pick],
                         "score": int(101 + rng.integers(0, 100))})
        dull = [" ".join(filter(None, (s, c)))
                for s in _DULL_STARTERS for c in _DULL_CORES]
        dull_picks = rng.permutation(len(dull))[:lows_per_topic]
        for i, pick in enumerate(dull_picks):
            rows.append({"topic_id": topic,
                         "context": [_DULL_CONTEXTS[i % len(_DULL_CONTEXTS)]],
                         "response": dull[pick],
                         "score": int(rng.integers(0, 2))})
    return rows
