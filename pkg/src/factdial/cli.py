"""Command line driving the pipeline: prep, embed, train, decode, index,
rerank-data, rerank-train, rerank-ablate, eval, serve, chat.

Every stage reads and writes plain artifacts (JSONL rows, checkpoints,
the binary retrieval index), so runs can be scripted or repeated step by
step. `chat` is a thin HTTP client against a running server and never
touches model files.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import toydata
from .config import load_config
from .embeddings import EmbeddingTable, encode_and_train
from .gbdt import GbdtModel, accuracy, gbdt_train
from .lda import LdaModel, lda_fit
from .lm import NgramLm
from .metrics import bleu, distinct_n, meteor_simplified, nist
from .mhred import Mhred, MhredConfig, greedy_decode, train
from .postag import PosTagger, load_sentiment, load_stopwords
from .rerank import (FEATURE_NAMES, RerankExample, RerankModels,
                     ablation_report, build_rerank_dataset, dataset_matrix)
from .retrieval import KeywordQuery, InvertedIndex, build_index, retrieve
from .search import SearchConfig, beam_search, diverse_beam_search, group_winners
from .text import Vocab, tokenize
from .jsonl import read_jsonl, write_jsonl

log = logging.getLogger("factdial.cli")

_SEED_HELP = "random seed (accepted by every subcommand; stages without randomness ignore it)"


# ---------------------------------------------------------------------------
# shared loading
# ---------------------------------------------------------------------------

def _prep_paths(prep_dir) -> dict[str, Path]:
    d = Path(prep_dir)
    return {"vocab": d / "vocab.json", "dialogues": d / "dialogues.jsonl",
            "train": d / "train.jsonl", "dev": d / "dev.jsonl",
            "facts": d / "facts.jsonl"}


def _load_prep(prep_dir):
    paths = _prep_paths(prep_dir)
    for name, p in paths.items():
        if not p.exists():
            raise FileNotFoundError(f"prep dir {prep_dir} is missing {p.name}; run prep first")
    vocab = Vocab.load(paths["vocab"])
    raw = corpus_mod.load_raw_dialogues(paths["dialogues"])
    facts = corpus_mod.load_raw_facts(paths["facts"])
    return vocab, raw, facts, paths


def _factsets(raw_facts: dict[str, list[str]], vocab: Vocab):
    return {tid: corpus_mod.build_factset(tid, lines, vocab)
            for tid, lines in raw_facts.items()}


def _paired_rows(dialogues, factsets):
    rows = []
    for d in dialogues:
        facts = factsets.get(d.topic_id)
        if facts is None:
            raise ValueError(f"no facts for topic '{d.topic_id}'")
        rows.append((d, facts))
    return rows


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_prep(args) -> int:
    if args.toy:
        raw = toydata.expand_corpus(args.expand, args.lows, args.seed)
        raw_facts = toydata.load_toy_facts()
    else:
        if not args.dialogues or not args.facts:
            raise SystemExit("prep: --dialogues and --facts are required without --toy")
        raw = []
        for path in args.dialogues:
            raw.extend(corpus_mod.load_raw_dialogues(path))
        raw_facts = corpus_mod.load_raw_facts(args.facts)

    vocab = Vocab.build(corpus_mod.tokenized_sentences(raw, raw_facts),
                        max_size=args.vocab_size)

    trainable = [r for r in raw if r.get("score", 0) >= args.train_min_score]
    if not trainable:
        raise SystemExit(f"prep: no rows scored >= {args.train_min_score}")
    order = np.random.default_rng(args.seed).permutation(len(trainable))
    n_dev = int(len(trainable) * args.dev_frac)
    dev = [trainable[i] for i in order[:n_dev]]
    train_rows = [trainable[i] for i in order[n_dev:]]
    if not dev:
        dev = list(train_rows)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab.save(out / "vocab.json")
    write_jsonl(out / "dialogues.jsonl", raw)
    write_jsonl(out / "train.jsonl", train_rows)
    write_jsonl(out / "dev.jsonl", dev)
    write_jsonl(out / "facts.jsonl",
                [{"topic_id": t, "lines": raw_facts[t]} for t in sorted(raw_facts)])
    print(f"prep: {len(raw)} rows ({len(train_rows)} train / {len(dev)} dev), "
          f"{len(raw_facts)} topics, vocab {len(vocab)} -> {out}")
    return 0


def cmd_embed(args) -> int:
    vocab, raw, raw_facts, _ = _load_prep(args.prep_dir)
    sentences = corpus_mod.tokenized_sentences(raw, raw_facts)
    table = encode_and_train(sentences, vocab, dim=args.dim, window=args.window,
                             negatives=args.negatives, epochs=args.epochs,
                             lr=args.lr, seed=args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    table.save(args.out)
    print(f"embed: {table.vocab_size} x {table.dim} -> {args.out}")
    return 0


def cmd_train(args) -> int:
    vocab, _, raw_facts, paths = _load_prep(args.prep_dir)
    factsets = _factsets(raw_facts, vocab)
    train_rows = _paired_rows(
        corpus_mod.encode_dialogues(corpus_mod.load_raw_dialogues(paths["train"]), vocab),
        factsets)
    dev_rows = _paired_rows(
        corpus_mod.encode_dialogues(corpus_mod.load_raw_dialogues(paths["dev"]), vocab),
        factsets)

    config = MhredConfig(vocab_size=len(vocab), hidden_dim=args.hidden_dim,
                         layers=args.layers, dropout=args.dropout,
                         max_decode_len=args.max_decode_len)
    model = Mhred(config, np.random.default_rng(args.seed))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    result = train(model, train_rows, dev_rows, epochs=args.epochs,
                   batch_size=args.batch_size, lr=args.lr, seed=args.seed,
                   checkpoint_path=args.out, log_path=args.log)
    if result.aborted:
        print("train: aborted on non-finite loss; best checkpoint kept", file=sys.stderr)
        return 1
    print(f"train: best dev ppl {result.best_dev_ppl:.4f} "
          f"(epoch {result.best_epoch}) -> {args.out}")
    return 0


def cmd_decode(args) -> int:
    vocab = Vocab.load(args.vocab)
    model = Mhred.load(args.checkpoint)
    raw_facts = corpus_mod.load_raw_facts(args.facts)
    if args.topic not in raw_facts:
        raise SystemExit(f"decode: unknown topic '{args.topic}' "
                         f"(known: {', '.join(sorted(raw_facts))})")
    facts = corpus_mod.build_factset(args.topic, raw_facts[args.topic], vocab)
    context = [vocab.encode(tokenize(u)) for u in args.utterance]
    if any(not u for u in context):
        raise SystemExit("decode: an utterance tokenized to nothing")

    encoded = model.encode(context, facts)
    if args.mode == "greedy":
        ids = greedy_decode(model, encoded, max_len=args.max_len)
        print(" ".join(vocab.decode(ids)))
        return 0

    table = None
    if args.mode == "diverse" and args.gamma_fact > 0:
        if not args.embeddings:
            raise SystemExit("decode: --embeddings is required for the fact bonus")
        table = EmbeddingTable.load(args.embeddings)
    from .mhred import DecodeSession
    session = DecodeSession(model, encoded)
    cfg = SearchConfig(beam_width=args.beam_width,
                       groups=args.groups if args.mode == "diverse" else 1,
                       lambda_div=args.lambda_div if args.mode == "diverse" else 0.0,
                       gamma_fact=args.gamma_fact if args.mode == "diverse" else 0.0,
                       max_len=args.max_len)
    hyps = diverse_beam_search(session.step, session.initial_state(), cfg,
                               facts=facts, embeddings=table) \
        if args.mode == "diverse" else \
        beam_search(session.step, session.initial_state(), cfg)
    shown = group_winners(hyps) if args.mode == "diverse" else hyps
    for h in shown:
        print(f"{h.logprob:9.4f}  {h.surface(vocab)}")
    return 0


def cmd_index(args) -> int:
    if args.index_cmd == "build":
        vocab, raw, _, _ = _load_prep(args.prep_dir)
        keep = [r for r in raw if r.get("score", 0) >= args.min_score]
        dialogues = corpus_mod.encode_dialogues(keep, vocab)
        if not dialogues:
            raise SystemExit(f"index: no rows scored >= {args.min_score}")
        index = build_index(dialogues)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        index.save(args.out)
        print(f"index: {len(index)} entries, {len(index.postings)} terms -> {args.out}")
        return 0

    vocab = Vocab.load(args.vocab)
    index = InvertedIndex.load(args.index)
    ids = [vocab.id(t) for t in args.token]
    results = retrieve(KeywordQuery(tokens=ids, provenance={}), index,
                       limit=args.limit)
    if not results:
        print("index: no entry contains every query token")
        return 0
    for r in results:
        text = " ".join(vocab.decode(r.entry.r_tokens))
        print(f"{r.score:8.4f}  [{r.entry.topic_id}] {text}")
    return 0


def cmd_rerank_data(args) -> int:
    vocab, raw, _, _ = _load_prep(args.prep_dir)
    dialogues = corpus_mod.encode_dialogues(raw, vocab)
    examples = build_rerank_dataset(dialogues, np.random.default_rng(args.seed))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(args.out, [{"context": ex.context, "candidate": ex.candidate,
                            "label": ex.label, "rule": ex.rule,
                            "topic_id": ex.topic_id} for ex in examples])
    pos = sum(1 for ex in examples if ex.label == 1)
    print(f"rerank-data: {len(examples)} examples "
          f"({pos} positive / {len(examples) - pos} negative) -> {args.out}")
    return 0


def _train_rerank_models(vocab, raw, table, args) -> RerankModels:
    dialogues = corpus_mod.encode_dialogues(raw, vocab)
    fluent = [list(d.response) for d in dialogues if d.score >= args.min_score]
    if not fluent:
        raise SystemExit(f"rerank-train: no rows scored >= {args.min_score} "
                         "to fit the fluency models")
    lda_docs = [d.flat_context() + list(d.response) for d in dialogues]
    return RerankModels(
        vocab=vocab,
        lm2=NgramLm(2, len(vocab)).train(fluent),
        lm3=NgramLm(3, len(vocab)).train(fluent),
        table=table,
        lda=lda_fit(lda_docs, args.lda_topics, len(vocab),
                    iterations=args.lda_iterations, seed=args.seed),
        tagger=PosTagger.default(),
        sentiment=load_sentiment(),
        stopwords=load_stopwords(),
    )


def _read_examples(path) -> list[RerankExample]:
    examples = []
    for row in read_jsonl(path):
        examples.append(RerankExample(
            context=[list(map(int, u)) for u in row["context"]],
            candidate=list(map(int, row["candidate"])),
            label=int(row["label"]), rule=row["rule"], topic_id=row["topic_id"]))
    return examples


def cmd_rerank_train(args) -> int:
    vocab, raw, raw_facts, _ = _load_prep(args.prep_dir)
    table = EmbeddingTable.load(args.embeddings)
    models = _train_rerank_models(vocab, raw, table, args)
    examples = _read_examples(args.dataset)
    x, y = dataset_matrix(examples, _factsets(raw_facts, vocab), models)
    gbdt = gbdt_train(x, y, list(FEATURE_NAMES), rounds=args.rounds,
                      max_depth=args.depth, learning_rate=args.learning_rate,
                      seed=args.seed)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    models.lm2.save(out / "lm2.bin")
    models.lm3.save(out / "lm3.bin")
    models.lda.save(out / "lda.bin")
    gbdt.save(out / "gbdt.model")
    np.savez(out / "features.npz", x=x, y=y)
    print(f"rerank-train: {len(examples)} examples, "
          f"train accuracy {accuracy(gbdt, x, y):.4f} -> {out}")
    return 0


def cmd_rerank_ablate(args) -> int:
    data = np.load(args.features)
    report = ablation_report(data["x"], data["y"], rounds=args.rounds,
                             max_depth=args.depth,
                             learning_rate=args.learning_rate, seed=args.seed)
    print(f"baseline held-out accuracy: {report.baseline_accuracy:.4f}")
    print("single-feature deltas (ablated - baseline, most damaging first):")
    for name, delta in sorted(report.feature_deltas.items(), key=lambda kv: kv[1]):
        print(f"  {name:18s} {delta:+.4f}")
    print("category deltas:")
    for name, delta in sorted(report.category_deltas.items(), key=lambda kv: kv[1]):
        print(f"  {name:18s} {delta:+.4f}")
    return 0


def cmd_eval(args) -> int:
    hyp_lines = Path(args.hyp).read_text(encoding="utf-8").splitlines()
    ref_lines = Path(args.ref).read_text(encoding="utf-8").splitlines()
    if len(hyp_lines) != len(ref_lines):
        raise SystemExit(f"eval: {len(hyp_lines)} hypotheses vs "
                         f"{len(ref_lines)} references")
    pairs = [(h.split(), r.split()) for h, r in zip(hyp_lines, ref_lines)]
    # BLEU and METEOR are conventionally reported on a 0-100 scale;
    # NIST and distinct-n are not.
    print(f"bleu4    {100.0 * bleu(pairs):.4f}")
    print(f"nist4    {nist(pairs):.4f}")
    print(f"meteor   {100.0 * meteor_simplified(pairs):.4f}")
    hyps = [h for h, _ in pairs]
    print(f"distinct1 {distinct_n(hyps, 1):.4f}")
    print(f"distinct2 {distinct_n(hyps, 2):.4f}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    cfg = load_config(args.config)
    if args.host:
        cfg["server"]["host"] = args.host
    if args.port:
        cfg["server"]["port"] = args.port
    app = create_app(cfg)
    uvicorn.run(app, host=cfg["server"]["host"], port=int(cfg["server"]["port"]),
                log_level="warning")
    return 0


def _print_reply(reply: dict, debug: bool) -> None:
    print(f"[{reply['source']} {reply['confidence']:.3f}] {reply['response']}")
    if debug and reply.get("candidates"):
        for c in reply["candidates"]:
            print(f"    {c['confidence']:.3f} {c['source']:5s} {c['text']}")


def cmd_chat(args) -> int:
    import httpx

    try:
        return _chat_loop(args, httpx)
    except httpx.HTTPError as exc:
        print(f"chat: cannot reach {args.url}: {exc}", file=sys.stderr)
        return 1


def _chat_loop(args, httpx) -> int:
    with httpx.Client(base_url=args.url, timeout=30.0) as client:
        r = client.post("/v1/sessions", json={"topic_id": args.topic})
        if r.status_code != 200:
            print(f"chat: session creation failed ({r.status_code}): {r.text}",
                  file=sys.stderr)
            return 1
        session = r.json()
        print(f"session {session['session_id']} on topic {session['topic_id']}")

        def turn(utterance: str) -> bool:
            r = client.post("/v1/chat", json={"session_id": session["session_id"],
                                              "utterance": utterance,
                                              "debug": args.debug})
            if r.status_code != 200:
                print(f"chat: server returned {r.status_code}: {r.text}",
                      file=sys.stderr)
                return False
            _print_reply(r.json(), args.debug)
            return True

        if args.utterance:
            for u in args.utterance:
                print(f"you> {u}")
                if not turn(u):
                    return 1
            return 0

        while True:
            try:
                line = input("you> ").strip()
            except EOFError:
                return 0
            if not line or line in ("/quit", "/exit"):
                return 0
            turn(line)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help=_SEED_HELP)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="factdial",
                                     description="facts-grounded dialogue pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="tokenize a corpus, build the vocabulary, split")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dialogues", nargs="+", help="raw dialogue JSONL files")
    p.add_argument("--facts", help="raw facts JSONL file")
    p.add_argument("--toy", action="store_true", help="use the bundled toy corpus")
    p.add_argument("--expand", type=int, default=0,
                   help="with --toy: extra high-scored rows per topic")
    p.add_argument("--lows", type=int, default=0,
                   help="with --toy: extra low-scored rows per topic")
    p.add_argument("--dev-frac", type=float, default=0.1)
    p.add_argument("--train-min-score", type=int, default=101)
    p.add_argument("--vocab-size", type=int, default=20000)
    _add_seed(p)
    p.set_defaults(fn=cmd_prep)

    p = sub.add_parser("embed", help="train word embeddings on the prepared corpus")
    p.add_argument("--prep-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--lr", type=float, default=0.025)
    _add_seed(p)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("train", help="train the grounded generator")
    p.add_argument("--prep-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden-dim", type=int, default=32)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--max-decode-len", type=int, default=16)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--log", default=None, help="JSONL epoch log path")
    _add_seed(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("decode", help="decode one context with a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--facts", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--topic", required=True)
    p.add_argument("--utterance", "-u", action="append", required=True,
                   help="context turn, oldest first (repeatable)")
    p.add_argument("--mode", choices=("greedy", "beam", "diverse"), default="greedy")
    p.add_argument("--beam-width", type=int, default=5)
    p.add_argument("--groups", type=int, default=5)
    p.add_argument("--lambda-div", type=float, default=0.4)
    p.add_argument("--gamma-fact", type=float, default=10.0)
    p.add_argument("--max-len", type=int, default=16)
    _add_seed(p)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("index", help="build or query the response retrieval index")
    isub = p.add_subparsers(dest="index_cmd", required=True)
    pb = isub.add_parser("build")
    pb.add_argument("--prep-dir", required=True)
    pb.add_argument("--out", required=True)
    pb.add_argument("--min-score", type=int, default=101)
    _add_seed(pb)
    pb.set_defaults(fn=cmd_index)
    pq = isub.add_parser("query")
    pq.add_argument("--index", required=True)
    pq.add_argument("--vocab", required=True)
    pq.add_argument("--token", "-t", action="append", required=True)
    pq.add_argument("--limit", type=int, default=10)
    _add_seed(pq)
    pq.set_defaults(fn=cmd_index)

    p = sub.add_parser("rerank-data", help="build labeled examples from scored rows")
    p.add_argument("--prep-dir", required=True)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(fn=cmd_rerank_data)

    p = sub.add_parser("rerank-train", help="fit the response classifier bundle")
    p.add_argument("--prep-dir", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--lda-topics", type=int, default=8)
    p.add_argument("--lda-iterations", type=int, default=60)
    p.add_argument("--min-score", type=int, default=101)
    _add_seed(p)
    p.set_defaults(fn=cmd_rerank_train)

    p = sub.add_parser("rerank-ablate", help="feature ablation on saved features")
    p.add_argument("--features", required=True, help="features.npz from rerank-train")
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--learning-rate", type=float, default=0.1)
    _add_seed(p)
    p.set_defaults(fn=cmd_rerank_ablate)

    p = sub.add_parser("eval", help="score hypothesis/reference files")
    p.add_argument("--hyp", required=True, help="one tokenized hypothesis per line")
    p.add_argument("--ref", required=True, help="one tokenized reference per line")
    _add_seed(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    _add_seed(p)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("chat", help="talk to a running server")
    p.add_argument("--url", default="http://127.0.0.1:8080")
    p.add_argument("--topic", default=None)
    p.add_argument("--debug", action="store_true")
    p.add_argument("--utterance", "-u", action="append",
                   help="scripted turn instead of the interactive prompt (repeatable)")
    _add_seed(p)
    p.set_defaults(fn=cmd_chat)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"factdial: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
