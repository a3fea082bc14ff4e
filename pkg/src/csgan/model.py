"""Style-conditioned transformer autoencoder and latent-space discriminator.

The generator is a pre-LayerNorm transformer encoder/decoder sharing one
token embedding table ``E`` (V x H). A learned style vector is added to every
encoder input position and also serves as the decoder's first input. The
discriminator mean-pools a latent sequence and classifies it with a small
feed-forward net.

Besides greedy (argmax) decoding the decoder can run "soft": each step's
output distribution is multiplied into ``E`` and the resulting mixture vector
is fed back as the next input, so generated sequences stay differentiable
and can be re-encoded and judged by the discriminator.
"""
from __future__ import annotations

import contextlib
import enum
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import numcore as nc
from .corpus import BOS, EOS, PAD, record_from_ids, Origin
from .errors import ConfigurationError, ShapeError

NEG_INF = -1e9


class Style(enum.Enum):
    MATRIX = "l_m"
    EMBEDDED = "l_e"
    ARTIFICIAL = "l_a"
    NATURAL = "l_n"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        for s in cls:
            if text in (s.value, s.name, s.name.lower()):
                return s
        raise ConfigurationError(f"unknown style {text!r}", code="BAD_STYLE")


STYLE_ROWS = {s: k for k, s in enumerate(Style)}


@dataclass(frozen=True)
class StageBinding:
    """Which two styles a stage uses; ``style0`` is discriminator label 0."""

    style0: Style
    style1: Style

    def __post_init__(self):
        if self.style0 is self.style1:
            raise ConfigurationError("a stage must bind two distinct styles")

    def label(self, style):
        if style is self.style0:
            return 0
        if style is self.style1:
            return 1
        raise ConfigurationError(f"style {style.value} is not bound in this stage", code="UNBOUND_STYLE")

    def __contains__(self, style):
        return style in (self.style0, self.style1)


STAGE1 = StageBinding(Style.MATRIX, Style.EMBEDDED)
STAGE2 = StageBinding(Style.ARTIFICIAL, Style.NATURAL)


@dataclass
class TransformerConfig:
    vocab_size: int
    n_layers: int = 3
    hidden: int = 256
    n_heads: int = 4
    ff_dim: int = 512
    max_len: int = 45
    n_styles: int = 2
    disc_hidden: int = 128
    dropout: float = 0.0
    dtype: str = "float32"

    def __post_init__(self):
        if self.hidden % self.n_heads:
            raise ConfigurationError("hidden size must be divisible by n_heads")
        if self.max_len < 2:
            raise ConfigurationError("max_len must be at least 2")


@dataclass
class Batch:
    ids: np.ndarray
    mask: np.ndarray

    @classmethod
    def from_records(cls, records):
        seqs = [r.ids if hasattr(r, "ids") else list(r) for r in records]
        if not seqs:
            raise ValueError("empty batch")
        width = max(len(s) for s in seqs)
        ids = np.full((len(seqs), width), PAD, dtype=np.int64)
        for k, s in enumerate(seqs):
            ids[k, :len(s)] = s
        return cls(ids, ids != PAD)

    @property
    def lengths(self):
        return self.mask.sum(axis=1)

    def __len__(self):
        return self.ids.shape[0]


@dataclass
class LatentBatch:
    values: nc.Tensor
    mask: np.ndarray

    @property
    def shape(self):
        return self.values.shape


@dataclass
class SoftSequence:
    dists: nc.Tensor
    soft_embs: nc.Tensor
    mask: np.ndarray


def sinusoidal_positions(n, dim, dtype=np.float64):
    pos = np.arange(n)[:, None]
    rate = np.exp(-math.log(10000.0) * (np.arange(0, dim, 2) / dim))
    table = np.zeros((n, dim))
    table[:, 0::2] = np.sin(pos * rate)
    table[:, 1::2] = np.cos(pos * rate[: dim // 2])
    return table.astype(dtype)


def init_params(cfg, rng):
    dt = np.dtype(cfg.dtype)
    H, F, V = cfg.hidden, cfg.ff_dim, cfg.vocab_size
    p = {}

    def dense(name, n_in, n_out):
        p[name + ".w"] = rng.normal(0.0, 1.0 / math.sqrt(n_in), (n_in, n_out))
        p[name + ".b"] = np.zeros(n_out)

    def norm(name):
        p[name + ".g"] = np.ones(H)
        p[name + ".b"] = np.zeros(H)

    def attention(name):
        for proj in ("q", "k", "v", "o"):
            dense(f"{name}.{proj}", H, H)

    p["tok_emb"] = rng.normal(0.0, 1.0, (V, H))
    p["style_emb"] = rng.normal(0.0, 1.0, (len(Style), H))
    for l in range(cfg.n_layers):
        pre = f"enc.{l}"
        norm(pre + ".ln1")
        attention(pre + ".self")
        norm(pre + ".ln2")
        dense(pre + ".ff1", H, F)
        dense(pre + ".ff2", F, H)
    norm("enc.ln_f")
    for l in range(cfg.n_layers):
        pre = f"dec.{l}"
        norm(pre + ".ln1")
        attention(pre + ".self")
        norm(pre + ".ln2")
        attention(pre + ".cross")
        norm(pre + ".ln3")
        dense(pre + ".ff1", H, F)
        dense(pre + ".ff2", F, H)
    norm("dec.ln_f")
    dense("out", H, V)
    dense("disc.h", H, cfg.disc_hidden)
    dense("disc.o", cfg.disc_hidden, 2)
    return {k: nc.Tensor(v.astype(dt), requires_grad=True) for k, v in p.items()}


@contextlib.contextmanager
def frozen(params):
    """Temporarily stop the given tensors from collecting gradients."""
    saved = [(t, t.requires_grad) for t in params]
    for t, _ in saved:
        t.requires_grad = False
    try:
        yield
    finally:
        for t, flag in saved:
            t.requires_grad = flag


class StyleTransferModel:
    def __init__(self, config, seed=0, binding=STAGE1, params=None):
        self.config = config
        self.binding = binding
        self.params = params if params is not None else init_params(config, np.random.default_rng(seed))
        self._dtype = np.dtype(config.dtype)
        self._pos = sinusoidal_positions(config.max_len, config.hidden, self._dtype)
        self._dropout_rng = np.random.default_rng(seed + 1)
        gen_bias = np.zeros(config.vocab_size, dtype=self._dtype)
        gen_bias[[PAD, BOS]] = NEG_INF
        self._gen_bias = gen_bias
        self._constant_encoder = False

    # parameter groups

    def generator_params(self):
        return {k: v for k, v in self.params.items() if not k.startswith("disc.")}

    def discriminator_params(self):
        return {k: v for k, v in self.params.items() if k.startswith("disc.")}

    def state_arrays(self):
        return {k: v.data for k, v in self.params.items()}

    def _p(self, name):
        p = self.params[name]
        if self._constant_encoder and (name.startswith("enc.") or name == "style_emb"):
            return nc.Tensor(p.data)
        return p

    # building blocks

    def _style_vec(self, style):
        if style not in self.binding:
            self.binding.label(style)
        return nc.getitem(self._p("style_emb"), slice(STYLE_ROWS[style], STYLE_ROWS[style] + 1))

    def _ln(self, x, name):
        return nc.layer_norm(x, self._p(name + ".g"), self._p(name + ".b"))

    def _dense(self, x, name):
        return nc.linear(x, self._p(name + ".w"), self._p(name + ".b"))

    def _heads(self, x):
        B, T, H = x.shape
        nh = self.config.n_heads
        return nc.transpose(nc.reshape(x, (B, T, nh, H // nh)), (0, 2, 1, 3))

    def _merge(self, x):
        B, nh, T, dh = x.shape
        return nc.reshape(nc.transpose(x, (0, 2, 1, 3)), (B, T, nh * dh))

    def _attend(self, q, k, v, bias):
        dh = q.shape[-1]
        scores = nc.scale(nc.matmul(q, nc.swapaxes(k, -1, -2)), 1.0 / math.sqrt(dh))
        if bias is not None:
            scores = scores + bias
        return nc.matmul(nc.softmax(scores, axis=-1), v)

    def _self_attention(self, h, name, bias):
        q = self._heads(self._dense(h, name + ".q"))
        k = self._heads(self._dense(h, name + ".k"))
        v = self._heads(self._dense(h, name + ".v"))
        return self._dense(self._merge(self._attend(q, k, v, bias)), name + ".o")

    def _ff(self, h, name):
        h = nc.relu(self._dense(h, name + ".ff1"))
        return self._dense(h, name + ".ff2")

    def _drop(self, x):
        return nc.dropout(x, self.config.dropout, self._dropout_rng)

    def _positions(self, T):
        if T > self.config.max_len:
            raise ShapeError("positions", (T,), (self.config.max_len,), "sequence longer than max_len")
        return self._pos[:T]

    # encoder

    def _encoder(self, x, mask):
        bias = np.where(mask, 0.0, NEG_INF).astype(self._dtype)[:, None, None, :]
        for l in range(self.config.n_layers):
            pre = f"enc.{l}"
            x = x + self._drop(self._self_attention(self._ln(x, pre + ".ln1"), pre + ".self", bias))
            x = x + self._drop(self._ff(self._ln(x, pre + ".ln2"), pre))
        return self._ln(x, "enc.ln_f")

    def _encode_inputs(self, emb, mask, style):
        T = emb.shape[1]
        x = emb + self._positions(T) + self._style_vec(style)
        return LatentBatch(self._encoder(x, mask), mask)

    def encode(self, batch, style):
        """Latent sequence for token ids under ``style`` (B x T x H)."""
        if not isinstance(batch, Batch):
            batch = Batch.from_records(batch)
        emb = nc.embedding_lookup(self._p("tok_emb"), batch.ids)
        return self._encode_inputs(emb, batch.mask, style)

    def reencode_soft(self, seq, style, encoder_grad=True):
        """Run the shared encoder over soft word vectors instead of token ids.

        With ``encoder_grad=False`` the encoder weights and style table act as
        constants here: gradients still flow back into ``seq``, but not into
        the parameters that produced the view the discriminator sees.
        """
        if encoder_grad:
            return self._encode_inputs(seq.soft_embs, seq.mask, style)
        self._constant_encoder = True
        try:
            return self._encode_inputs(seq.soft_embs, seq.mask, style)
        finally:
            self._constant_encoder = False

    # decoder

    def _decoder_layers(self, x, memory, self_bias, mem_bias):
        for l in range(self.config.n_layers):
            pre = f"dec.{l}"
            x = x + self._drop(self._self_attention(self._ln(x, pre + ".ln1"), pre + ".self", self_bias))
            h = self._ln(x, pre + ".ln2")
            q = self._heads(self._dense(h, pre + ".cross.q"))
            k = self._heads(self._dense(memory, pre + ".cross.k"))
            v = self._heads(self._dense(memory, pre + ".cross.v"))
            att = self._dense(self._merge(self._attend(q, k, v, mem_bias)), pre + ".cross.o")
            x = x + self._drop(att)
            x = x + self._drop(self._ff(self._ln(x, pre + ".ln3"), pre))
        return self._ln(x, "dec.ln_f")

    def decoder_logits(self, z, style, batch):
        """Teacher-forced next-token logits for ``batch.ids[:, 1:]`` (B x T-1 x V)."""
        if not isinstance(batch, Batch):
            batch = Batch.from_records(batch)
        B, T = batch.ids.shape
        start = nc.reshape(self._style_vec(style), (1, 1, -1)) + np.zeros((B, 1, 1), dtype=self._dtype)
        prev = nc.embedding_lookup(self._p("tok_emb"), batch.ids[:, 1:T - 1])
        x = nc.concat([start, prev], axis=1) + self._positions(T - 1)
        causal = np.triu(np.full((T - 1, T - 1), NEG_INF, dtype=self._dtype), k=1)
        mem_bias = np.where(z.mask, 0.0, NEG_INF).astype(self._dtype)[:, None, None, :]
        h = self._decoder_layers(x, z.values, causal, mem_bias)
        return self._dense(h, "out")

    def _start_decoding(self, z):
        mem = []
        for l in range(self.config.n_layers):
            pre = f"dec.{l}.cross"
            mem.append((self._heads(self._dense(z.values, pre + ".k")),
                        self._heads(self._dense(z.values, pre + ".v"))))
        bias = np.where(z.mask, 0.0, NEG_INF).astype(self._dtype)[:, None, None, :]
        return {"mem": mem, "mem_bias": bias, "cache": [None] * self.config.n_layers}

    def _decoder_step(self, x, state):
        """Advance the decoder by one position (x is B x 1 x H, positions added)."""
        for l in range(self.config.n_layers):
            pre = f"dec.{l}"
            h = self._ln(x, pre + ".ln1")
            q = self._heads(self._dense(h, pre + ".self.q"))
            k = self._heads(self._dense(h, pre + ".self.k"))
            v = self._heads(self._dense(h, pre + ".self.v"))
            if state["cache"][l] is not None:
                k = nc.concat([state["cache"][l][0], k], axis=2)
                v = nc.concat([state["cache"][l][1], v], axis=2)
            state["cache"][l] = (k, v)
            x = x + self._dense(self._merge(self._attend(q, k, v, None)), pre + ".self.o")
            h = self._ln(x, pre + ".ln2")
            q = self._heads(self._dense(h, pre + ".cross.q"))
            mk, mv = state["mem"][l]
            x = x + self._dense(self._merge(self._attend(q, mk, mv, state["mem_bias"])), pre + ".cross.o")
            x = x + self._ff(self._ln(x, pre + ".ln3"), pre)
        return self._dense(self._ln(x, "dec.ln_f"), "out")

    def _start_input(self, style, batch_size):
        start = nc.reshape(self._style_vec(style), (1, 1, -1))
        return start + np.broadcast_to(self._pos[:1], (batch_size, 1, self.config.hidden))

    def decode_greedy(self, z, style, max_steps=None, vocab=None):
        """Argmax decoding; returns id lists ``[BOS, ..., EOS]`` (records if ``vocab`` given).

        A sequence that never emits EOS stops at ``max_steps`` ids in total.
        """
        max_steps = min(max_steps or self.config.max_len, self.config.max_len)
        B = z.values.shape[0]
        outs = [[BOS] for _ in range(B)]
        done = np.zeros(B, dtype=bool)
        E = self._p("tok_emb")
        with nc.no_grad():
            state = self._start_decoding(z)
            x = self._start_input(style, B)
            for t in range(max_steps - 1):
                logits = self._decoder_step(x, state).data[:, 0, :] + self._gen_bias
                nxt = logits.argmax(axis=-1)
                for b in np.flatnonzero(~done):
                    outs[b].append(int(nxt[b]))
                done |= nxt == EOS
                if done.all() or t + 1 >= max_steps - 1:
                    break
                x = nc.embedding_lookup(E, nxt[:, None]) + self._pos[t + 1:t + 2]
        if vocab is not None:
            return [record_from_ids(ids, vocab, Origin.GENERATED) for ids in outs]
        return outs

    def decode_soft(self, z, style, lengths=None, temperature=1.0):
        """Free-running continuous-softmax decoding.

        Row 0 of the result is the fixed BOS token; each later row is the
        softmax over the vocabulary at that step and its mixture embedding
        ``dist @ E``, which is also the next step's input. ``lengths`` gives
        the number of rows per example (defaults to the source lengths).
        """
        if temperature <= 0:
            raise ValueError(f"temperature must be positive, got {temperature}")
        lengths = z.mask.sum(axis=1) if lengths is None else np.asarray(lengths)
        steps = int(lengths.max())
        if steps > self.config.max_len:
            raise ShapeError("decode_soft", (steps,), (self.config.max_len,), "too many steps")
        B = z.values.shape[0]
        E = self._p("tok_emb")
        V = self.config.vocab_size
        bos_ids = np.full((B, 1), BOS)
        bos_dist = np.zeros((B, 1, V), dtype=self._dtype)
        bos_dist[:, :, BOS] = 1.0
        dists = [nc.Tensor(bos_dist)]
        embs = [nc.embedding_lookup(E, bos_ids)]
        state = self._start_decoding(z)
        x = self._start_input(style, B)
        for t in range(steps - 1):
            logits = self._decoder_step(x, state) + self._gen_bias
            d = nc.softmax(logits, axis=-1, temperature=temperature)
            e = nc.matmul(d, E)
            dists.append(d)
            embs.append(e)
            x = e + self._pos[t + 1:t + 2]
        mask = np.arange(steps)[None, :] < lengths[:, None]
        return SoftSequence(nc.concat(dists, axis=1), nc.concat(embs, axis=1), mask)

    # discriminator

    def discriminate(self, z):
        """Two-class logits from the masked mean of a latent sequence."""
        if z.values.shape[-1] != self.config.hidden:
            raise ShapeError("discriminate", z.values.shape, (self.config.hidden,))
        pooled = nc.mean_pool(z.values, axis=1, mask=z.mask)
        h = nc.relu(self._dense(pooled, "disc.h"))
        return self._dense(h, "disc.o")

    # persistence

    def save(self, path, stage=None, extra=None):
        nc.save_arrays(path, self.state_arrays())
        manifest = {
            "config": asdict(self.config),
            "stage": stage,
            "binding": [self.binding.style0.value, self.binding.style1.value],
        }
        manifest.update(extra or {})
        with open(str(path) + ".json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path, binding=None):
        with open(str(path) + ".json", encoding="utf-8") as fh:
            manifest = json.load(fh)
        config = TransformerConfig(**manifest["config"])
        if binding is None:
            binding = StageBinding(*(Style.parse(s) for s in manifest["binding"]))
        arrays = nc.load_arrays(path)
        params = {k: nc.Tensor(v, requires_grad=True) for k, v in arrays.items()}
        expected = set(init_params(config, np.random.default_rng(0)))
        if set(params) != expected:
            raise ConfigurationError(f"{path}: checkpoint parameter names do not match the config",
                                     code="BAD_CHECKPOINT")
        return cls(config, binding=binding, params=params)

    def clone(self, binding=None):
        params = {k: nc.Tensor(v.data.copy(), requires_grad=True) for k, v in self.params.items()}
        return StyleTransferModel(self.config, binding=binding or self.binding, params=params)
