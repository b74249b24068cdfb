"""Memory-augmented hierarchical encoder-decoder dialogue model.

Utterances are encoded by a word-level GRU, utterance vectors by a
context-level GRU whose final state h_M seeds the decoder. A two-hop
key-value memory attends over subject facts first, then description
facts with the query h_M + o_subj; the shared hop matrix serves as
values in hop one and keys in hop two. The decoder combines the previous
word embedding, h_M, its own state, and the facts vector through a
maxout layer before the output softmax.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import GruParams, NumericError, Tape, Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import Dialogue, Fact, FactSet
from .jsonl import write_jsonl
from .optim import AdamState, adam_step, zero_grads
from .text import BOS, EOS


@dataclass
class MhredConfig:
    vocab_size: int
    hidden_dim: int = 256
    layers: int = 2
    dropout: float = 0.2
    max_decode_len: int = 40

    def __post_init__(self):
        if self.vocab_size < 5:
            raise ValueError("mhred: vocab_size must cover reserved ids plus content")
        if self.hidden_dim < 2 or self.layers < 1:
            raise ValueError("mhred: hidden_dim >= 2 and layers >= 1 required")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"mhred: dropout must be in [0, 1), got {self.dropout}")


@dataclass
class EncodedState:
    """Everything the decoder needs, fixed for the whole generation."""

    h_m: Tensor           # context vector, (d,)
    o_fact: Tensor        # concatenated fact vectors, (2d,)
    p_subj: np.ndarray    # hop-1 attention, (K,)
    p_desc: np.ndarray    # hop-2 attention, (L,)


def _stack_names(prefix: str, layers: int):
    return [f"{prefix}.{i}" for i in range(layers)]


class Mhred:
    """Model parameters plus the forward passes. Immutable after training."""

    def __init__(self, config: MhredConfig, rng: np.random.Generator):
        self.config = config
        d, v = config.hidden_dim, config.vocab_size
        self.embedding = Tensor.uniform((v, d), rng)
        self.utt = [GruParams.init(d, d, rng) for _ in range(config.layers)]
        self.ctx = [GruParams.init(d, d, rng) for _ in range(config.layers)]
        self.dec = [GruParams.init(d, d, rng) for _ in range(config.layers)]
        # memory matrices kept row-per-token so a BoW product is a weighted
        # row sum over the fact's token ids
        self.mem_a = Tensor.uniform((v, d), rng)
        self.mem_c = Tensor.uniform((v, d), rng)
        self.mem_d = Tensor.uniform((v, d), rng)
        self.w_z = Tensor.uniform((2 * d, d), rng)
        self.u_z = Tensor.uniform((2 * d, d), rng)
        self.v_z = Tensor.uniform((2 * d, d), rng)
        self.h_z = Tensor.uniform((2 * d, 2 * d), rng)
        self.w_e = Tensor.uniform((v, d), rng)

    # -- parameter plumbing -------------------------------------------------

    def params(self) -> dict[str, Tensor]:
        out = {"embedding": self.embedding,
               "mem_a": self.mem_a, "mem_c": self.mem_c, "mem_d": self.mem_d,
               "w_z": self.w_z, "u_z": self.u_z, "v_z": self.v_z,
               "h_z": self.h_z, "w_e": self.w_e}
        for stack, name in ((self.utt, "utt"), (self.ctx, "ctx"), (self.dec, "dec")):
            for i, gru in enumerate(stack):
                out.update(gru.named(f"{name}.{i}"))
        return out

    def save(self, path) -> None:
        save_checkpoint(path, self.params(), {"kind": "mhred", **asdict(self.config)})

    @classmethod
    def load(cls, path) -> "Mhred":
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "mhred":
            raise ValueError(f"mhred: {path} is not a model checkpoint")
        config = MhredConfig(**{k: meta[k] for k in
                                ("vocab_size", "hidden_dim", "layers",
                                 "dropout", "max_decode_len")})
        model = cls(config, np.random.default_rng(0))
        mine = model.params()
        if set(mine) != set(arrays):
            raise ValueError("mhred: checkpoint parameter names do not match config")
        for name, arr in arrays.items():
            if mine[name].data.shape != arr.shape:
                raise ValueError(f"mhred: shape mismatch for {name}")
            mine[name].data = arr
        return model

    def clone_params(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params().items()}

    def restore_params(self, snapshot: dict[str, np.ndarray]) -> None:
        for k, v in self.params().items():
            v.data = snapshot[k].copy()

    # -- encoders -----------------------------------------------------------

    def _run_stack(self, stack: list[GruParams], inputs: list[Tensor],
                   training: bool, rng) -> Tensor:
        """Stacked GRU over a sequence; returns the top layer's final state."""
        d = self.config.hidden_dim
        seq = inputs
        final = None
        for li, gru in enumerate(stack):
            if li > 0 and training and self.config.dropout > 0:
                seq = [ad.dropout(x, self.config.dropout, rng, True) for x in seq]
            h = Tensor.zeros(d)
            outs = []
            for x in seq:
                h = ad.gru_step(x, h, gru)
                outs.append(h)
            final = h
            seq = outs
        return final

    def encode_utterance(self, ids: list[int], training: bool = False,
                         rng: np.random.Generator | None = None) -> Tensor:
        if not ids:
            raise ValueError("mhred: empty utterance")
        inputs = [ad.embedding(self.embedding, t) for t in ids]
        return self._run_stack(self.utt, inputs, training, rng)

    def encode_context(self, utt_vecs: list[Tensor], training: bool = False,
                       rng: np.random.Generator | None = None) -> Tensor:
        if not utt_vecs:
            raise ValueError("mhred: empty context")
        return self._run_stack(self.ctx, utt_vecs, training, rng)

    def _hop(self, query: Tensor, facts: list[Fact], keys: Tensor, values: Tensor):
        """One memory hop: softmax attention of query over BoW-projected keys."""
        d = self.config.hidden_dim
        if not facts:
            return Tensor.zeros(d), np.zeros(0)
        mem = ad.stack_rows([ad.embedding_bag(keys, *f.bow()) for f in facts])
        val = ad.stack_rows([ad.embedding_bag(values, *f.bow()) for f in facts])
        p = ad.softmax(ad.matmul(mem, query), axis=-1)
        return ad.matmul(p, val), p.data.copy()

    def encode_facts(self, h_m: Tensor, facts: FactSet):
        """Two hops: subject facts first, then descriptions with h_M + o_subj."""
        o_subj, p_subj = self._hop(h_m, facts.subject, self.mem_a, self.mem_c)
        query = ad.add(h_m, o_subj)
        o_desc, p_desc = self._hop(query, facts.description, self.mem_c, self.mem_d)
        return ad.concat([o_subj, o_desc]), p_subj, p_desc

    def encode(self, context: list[list[int]], facts: FactSet,
               training: bool = False, rng=None) -> EncodedState:
        utt_vecs = [self.encode_utterance(u, training, rng) for u in context]
        h_m = self.encode_context(utt_vecs, training, rng)
        o_fact, p_subj, p_desc = self.encode_facts(h_m, facts)
        return EncodedState(h_m=h_m, o_fact=o_fact, p_subj=p_subj, p_desc=p_desc)

    # -- decoder ------------------------------------------------------------

    def initial_decoder_state(self, encoded: EncodedState) -> tuple[Tensor, ...]:
        return tuple(encoded.h_m for _ in range(self.config.layers))

    def _decode_logits(self, prev_token: int, states, encoded: EncodedState,
                       training: bool = False, rng=None):
        if not 0 <= prev_token < self.config.vocab_size:
            raise ValueError(f"mhred: token id {prev_token} out of range")
        emb = ad.embedding(self.embedding, prev_token)
        x = emb
        new_states = []
        for li, gru in enumerate(self.dec):
            if li > 0 and training and self.config.dropout > 0:
                x = ad.dropout(x, self.config.dropout, rng, True)
            h = ad.gru_step(x, states[li], gru)
            new_states.append(h)
            x = h
        s_t = new_states[-1]
        z = ad.add(ad.add(ad.matmul(self.w_z, emb), ad.matmul(self.u_z, encoded.h_m)),
                   ad.add(ad.matmul(self.v_z, s_t), ad.matmul(self.h_z, encoded.o_fact)))
        e = ad.maxout(z)
        if training and self.config.dropout > 0:
            e = ad.dropout(e, self.config.dropout, rng, True)
        return ad.matmul(self.w_e, e), tuple(new_states)

    def decode_step(self, prev_token: int, states, encoded: EncodedState,
                    training: bool = False, rng=None):
        """One generation step: (probability distribution, next states)."""
        logits, new_states = self._decode_logits(prev_token, states, encoded,
                                                 training, rng)
        return ad.softmax(logits), new_states

    # -- loss ---------------------------------------------------------------

    def row_loss(self, dialogue: Dialogue, facts: FactSet,
                 training: bool = False, rng=None) -> Tensor:
        """Teacher-forced mean token cross-entropy for one row."""
        encoded = self.encode(dialogue.context, facts, training, rng)
        states = self.initial_decoder_state(encoded)
        inputs = [BOS] + dialogue.response
        targets = dialogue.response + [EOS]
        total = None
        for prev, gold in zip(inputs, targets):
            logits, states = self._decode_logits(prev, states, encoded, training, rng)
            ce = ad.softmax_cross_entropy(logits, gold)
            total = ce if total is None else ad.add(total, ce)
        return ad.scale(total, 1.0 / len(targets))

    def sequence_loss(self, batch: list[tuple[Dialogue, FactSet]],
                      training: bool = False, rng=None) -> Tensor:
        """Mean of per-row losses."""
        if not batch:
            raise ValueError("mhred: empty batch")
        total = None
        for dialogue, facts in batch:
            loss = self.row_loss(dialogue, facts, training, rng)
            total = loss if total is None else ad.add(total, loss)
        return ad.scale(total, 1.0 / len(batch))


# ---------------------------------------------------------------------------
# attention report
# ---------------------------------------------------------------------------

def export_attention(encoded: EncodedState, facts: FactSet, vocab) -> dict:
    """Per-hop (fact text, weight) pairs, heaviest first."""

    def hop(weights: np.ndarray, fact_list: list[Fact]) -> list[dict]:
        pairs = [{"text": " ".join(vocab.decode(f.tokens)), "weight": float(w)}
                 for f, w in zip(fact_list, weights)]
        return sorted(pairs, key=lambda p: -p["weight"])

    return {"subject": hop(encoded.p_subj, facts.subject),
            "description": hop(encoded.p_desc, facts.description)}


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_dev_ppl: float = math.inf
    aborted: bool = False


def perplexity(model: Mhred, rows: list[tuple[Dialogue, FactSet]]) -> float:
    """exp of the token-level mean negative log likelihood."""
    total_nll = 0.0
    total_tokens = 0
    for dialogue, facts in rows:
        loss = model.row_loss(dialogue, facts, training=False)
        n = len(dialogue.response) + 1  # eos counts
        total_nll += loss.item() * n
        total_tokens += n
    return math.exp(total_nll / total_tokens)


def train(
    model: Mhred,
    train_rows: list[tuple[Dialogue, FactSet]],
    dev_rows: list[tuple[Dialogue, FactSet]],
    epochs: int = 20,
    batch_size: int = 40,
    lr: float = 1e-4,
    seed: int = 0,
    checkpoint_path=None,
    log_path=None,
) -> TrainResult:
    """Mini-batch Adam with best-dev-perplexity checkpointing.

    A non-finite loss or gradient aborts the run; the parameters (and
    any checkpoint on disk) are left at the best epoch seen so far.
    """
    if not train_rows or not dev_rows:
        raise ValueError("train: empty train or dev set")
    rng = np.random.default_rng(seed)
    params = model.params()
    opt = AdamState(lr=lr)
    result = TrainResult()
    best_snapshot = model.clone_params()

    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(train_rows))
        epoch_loss = 0.0
        n_batches = 0
        try:
            for start in range(0, len(order), batch_size):
                batch = [train_rows[i] for i in order[start : start + batch_size]]
                zero_grads(params)
                with Tape() as tape:
                    loss = model.sequence_loss(batch, training=True, rng=rng)
                    tape.backward(loss)
                adam_step(params, opt)
                epoch_loss += loss.item()
                n_batches += 1
            dev_ppl = perplexity(model, dev_rows)
        except NumericError:
            result.aborted = True
            model.restore_params(best_snapshot)
            break
        result.history.append({"epoch": epoch,
                               "train_loss": epoch_loss / max(n_batches, 1),
                               "dev_ppl": dev_ppl})
        if dev_ppl < result.best_dev_ppl:
            result.best_dev_ppl = dev_ppl
            result.best_epoch = epoch
            best_snapshot = model.clone_params()
            if checkpoint_path is not None:
                model.save(checkpoint_path)

    model.restore_params(best_snapshot)
    if log_path is not None:
        write_jsonl(log_path, result.history)
    return result


# ---------------------------------------------------------------------------
# search adapter
# ---------------------------------------------------------------------------

class DecodeSession:
    """Read-only decoding view of a model for one encoded context.

    step() maps (state, previous token) to (log-probabilities, state),
    the contract the beam searches consume. States are immutable tuples,
    so hypotheses can share them freely.
    """

    def __init__(self, model: Mhred, encoded: EncodedState):
        self.model = model
        self.encoded = encoded

    def initial_state(self):
        return self.model.initial_decoder_state(self.encoded)

    def step(self, state, prev_token: int):
        logits, new_state = self.model._decode_logits(prev_token, state, self.encoded)
        x = logits.data
        logprobs = x - (x.max() + np.log(np.exp(x - x.max()).sum()))
        return logprobs, new_state


def greedy_decode(model: Mhred, encoded: EncodedState, max_len: int | None = None) -> list[int]:
    """Argmax decoding; returns token ids without bos/eos."""
    session = DecodeSession(model, encoded)
    state = session.initial_state()
    out = []
    prev = BOS
    limit = max_len if max_len is not None else model.config.max_decode_len
    for _ in range(limit):
        logprobs, state = session.step(state, prev)
        prev = int(logprobs.argmax())
        if prev == EOS:
            break
        out.append(prev)
    return out


def copy_model(model: Mhred) -> Mhred:
    clone = Mhred(copy.deepcopy(model.config), np.random.default_rng(0))
    clone.restore_params(model.clone_params())
    return clone
