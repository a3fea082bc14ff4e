"""Two-stage adversarial training.

Stage 1 treats the matrix and embedded monolingual corpora as two styles.
Its matrix-to-embedded transfers then serve as negative (artificial) examples
against real code-switched text in stage 2, which starts from the stage-1
weights. Both stages optimise the same objective: reconstruction of every
sentence under both styles, plus an adversarial term pushing the soft-decoded
transfers toward the target style label of a latent-space discriminator.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .corpus import decode_to_text, write_lines
from .errors import ConfigurationError, NonFiniteError, TrainingError
from .model import Batch, StageBinding, Style, StyleTransferModel, frozen

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("iter", "L_G_matrix", "L_G_embedded", "L_D_matrix", "L_D_embedded", "L_adv", "disc_acc")


@dataclass
class StageConfig:
    stage: int = 1
    style0: Style = Style.MATRIX
    style1: Style = Style.EMBEDDED
    lr_gen: float = 1e-3
    lr_disc: float = 1e-4
    schedule: str = "constant"
    pretrain_iters: int = 300
    adv_weight: float = 1.0
    batch_size: int = 32
    total_iters: int = 3000
    seed: int = 0
    d_steps: int = 1
    temperature: float = 1.0
    clip_norm: float = 5.0
    cut_frac: float = 0.1
    stlr_ratio: float = 32.0
    mix_negatives: bool = False
    # let the adversarial loss train the encoder through the re-encoding pass
    critic_encoder_grad: bool = False

    def __post_init__(self):
        self.style0 = Style.parse(self.style0)
        self.style1 = Style.parse(self.style1)
        if self.stage not in (1, 2):
            raise ConfigurationError(f"stage must be 1 or 2, got {self.stage}")
        if self.adv_weight < 0:
            raise ConfigurationError("adv_weight must be non-negative")
        if self.schedule not in ("constant", "stlr"):
            raise ConfigurationError(f"unknown schedule {self.schedule!r}")

    @classmethod
    def stage1(cls, **kw):
        return cls(**{"stage": 1, "style0": Style.MATRIX, "style1": Style.EMBEDDED,
                      "schedule": "constant", **kw})

    @classmethod
    def stage2(cls, **kw):
        return cls(**{"stage": 2, "style0": Style.ARTIFICIAL, "style1": Style.NATURAL,
                      "schedule": "stlr", "pretrain_iters": 0, **kw})

    @property
    def binding(self):
        return StageBinding(self.style0, self.style1)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["style0"], d["style1"] = self.style0.value, self.style1.value
        return d

    def lr_at(self, t, base):
        if self.schedule == "constant":
            return base
        sched = nc.StlrSchedule(base, max(1, self.total_iters), self.cut_frac, self.stlr_ratio)
        return nc.stlr_lr(t, sched)


@dataclass
class LossReport:
    iter: int
    g_matrix: float = 0.0
    g_embedded: float = 0.0
    d_matrix: float = 0.0
    d_embedded: float = 0.0
    adv: float = 0.0
    disc_acc: float = 0.0

    def row(self):
        return [self.iter, self.g_matrix, self.g_embedded, self.d_matrix,
                self.d_embedded, self.adv, self.disc_acc]


def write_loss_csv(path, reports):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_COLUMNS)
        for r in reports:
            w.writerow([r.iter] + [repr(float(x)) for x in r.row()[1:]])


def _batch(records):
    kept = [r for r in records if len(r.ids) >= 2]
    if len(kept) < len(records):
        warnings.warn(f"skipping {len(records) - len(kept)} empty record(s)", stacklevel=3)
    if not kept:
        raise ValueError("no usable records in batch")
    return Batch.from_records(kept)


def reconstruction_loss(model, batch, style, z=None):
    """Teacher-forced mean token NLL of ``batch`` decoded under ``style``.

    ``z`` is the source latent; by default the batch encoded under the same
    style. Passing a latent encoded under the other style gives the
    cross-style reconstruction term.
    """
    if not isinstance(batch, Batch):
        batch = _batch(batch)
    if z is None:
        z = model.encode(batch, style)
    logits = model.decoder_logits(z, style, batch)
    return nc.cross_entropy(logits, batch.ids[:, 1:], batch.mask[:, 1:])


def _recon_terms(model, b0, b1, binding):
    s0, s1 = binding.style0, binding.style1
    z = {
        (0, 0): model.encode(b0, s0), (0, 1): model.encode(b0, s1),
        (1, 1): model.encode(b1, s1), (1, 0): model.encode(b1, s0),
    }
    # losses are grouped by the style the decoder is conditioned on
    g0 = nc.scale(reconstruction_loss(model, b0, s0, z[0, 0]) + reconstruction_loss(model, b1, s0, z[1, 0]), 0.5)
    g1 = nc.scale(reconstruction_loss(model, b0, s1, z[0, 1]) + reconstruction_loss(model, b1, s1, z[1, 1]), 0.5)
    return z, g0, g1


def transfer_latent(model, z, style, temperature=1.0, encoder_grad=True):
    """Soft-decode ``z`` under ``style`` and re-encode the result under the same style."""
    seq = model.decode_soft(z, style, temperature=temperature)
    return model.reencode_soft(seq, style, encoder_grad=encoder_grad)


def _label_loss(model, z, label):
    logits = model.discriminate(z)
    targets = np.full(logits.shape[0], label)
    return nc.cross_entropy(logits, targets), int((logits.data.argmax(axis=-1) == label).sum())


def discriminator_step(model, b0, b1, opt, lr, temperature=1.0, clip_norm=5.0):
    """One discriminator update; generator weights are only read.

    Label-0 inputs are the style-0 sentences encoded under style 0, their
    re-encoded reconstructions, and their transfers into style 1 (labelled by
    origin). Label-1 inputs mirror this for style-1 sentences.
    """
    binding = model.binding
    s0, s1 = binding.style0, binding.style1
    with nc.no_grad():
        z00, z11 = model.encode(b0, s0), model.encode(b1, s1)
        groups0 = [z00, transfer_latent(model, z00, s0, temperature),
                   transfer_latent(model, model.encode(b0, s1), s1, temperature)]
        groups1 = [z11, transfer_latent(model, z11, s1, temperature),
                   transfer_latent(model, model.encode(b1, s0), s0, temperature)]
    opt.zero_grad()
    gen = list(model.generator_params().values())
    with frozen(gen):
        terms0 = [_label_loss(model, z, 0) for z in groups0]
        terms1 = [_label_loss(model, z, 1) for z in groups1]
        l0 = nc.scale(sum((t[0] for t in terms0[1:]), terms0[0][0]), 1.0 / len(terms0))
        l1 = nc.scale(sum((t[0] for t in terms1[1:]), terms1[0][0]), 1.0 / len(terms1))
        (l0 + l1).backward()
    nc.clip_grad_norm(opt.params.values(), clip_norm)
    opt.step(lr)
    correct = sum(t[1] for t in terms0 + terms1)
    total = len(groups0) * len(b0) + len(groups1) * len(b1)
    return {"d_matrix": l0.item(), "d_embedded": l1.item(), "disc_acc": correct / total}


def generator_losses(model, b0, b1, adv_weight=1.0, temperature=1.0, critic_encoder_grad=False):
    """Total generator objective and its logged parts (Tensors).

    Unless ``critic_encoder_grad`` is set, the re-encoding that feeds the
    discriminator treats encoder weights as constants. Otherwise the cheapest
    way to fool the discriminator is to wash content out of the pooled latent
    rather than change the generated words.
    """
    binding = model.binding
    z, g0, g1 = _recon_terms(model, b0, b1, binding)
    total = g0 + g1
    parts = {"g_matrix": g0, "g_embedded": g1}
    if adv_weight > 0:
        t01 = transfer_latent(model, z[0, 1], binding.style1, temperature, critic_encoder_grad)
        t10 = transfer_latent(model, z[1, 0], binding.style0, temperature, critic_encoder_grad)
        adv = _label_loss(model, t01, 1)[0] + _label_loss(model, t10, 0)[0]
        total = total + nc.scale(adv, adv_weight)
        parts["adv"] = adv
    return total, parts


def generator_adversarial_step(model, b0, b1, opt, lr, adv_weight=1.0, temperature=1.0, clip_norm=5.0,
                               critic_encoder_grad=False):
    """One generator update with the discriminator held fixed."""
    opt.zero_grad()
    with frozen(list(model.discriminator_params().values())):
        total, parts = generator_losses(model, b0, b1, adv_weight, temperature, critic_encoder_grad)
        total.backward()
    nc.clip_grad_norm(opt.params.values(), clip_norm)
    opt.step(lr)
    return {k: v.item() for k, v in parts.items()}


def _check_corpora(corpus0, corpus1):
    if not corpus0 or not corpus1:
        raise ConfigurationError("both style corpora must be nonempty", code="EMPTY_CORPUS")


def _draw(rng, records, batch_size):
    idx = rng.choice(len(records), size=min(batch_size, len(records)), replace=False)
    return _batch([records[i] for i in idx])


def _guard(fn, it, *args, **kw):
    try:
        out = fn(*args, **kw)
    except NonFiniteError as exc:
        raise TrainingError(f"training diverged at iteration {it}: {exc}") from exc
    if not all(np.isfinite(v) for v in out.values()):
        raise TrainingError(f"non-finite loss at iteration {it}: {out}")
    return out


def pretrain_generator(model, corpus0, corpus1, cfg):
    """Reconstruction-only warm-up of the generator; returns the loss stream."""
    _check_corpora(corpus0, corpus1)
    model.binding = cfg.binding
    rng = np.random.default_rng(cfg.seed)
    opt = nc.Adam(model.generator_params(), lr=cfg.lr_gen)
    reports = []
    for it in range(cfg.pretrain_iters):
        b0, b1 = _draw(rng, corpus0, cfg.batch_size), _draw(rng, corpus1, cfg.batch_size)
        out = _guard(generator_adversarial_step, it, model, b0, b1, opt, cfg.lr_gen,
                     adv_weight=0.0, clip_norm=cfg.clip_norm)
        reports.append(LossReport(it, **out))
    return reports


def reconstruction_accuracy(model, records, style, batch_size=64):
    """Fraction of content tokens (EOS included) that greedy decoding reproduces in place."""
    hits = total = 0
    for rec, out in zip(records, transfer(model, records, style, vocab=None, batch_size=batch_size)):
        gold = rec.ids[1:]
        got = out[1:len(rec.ids)]
        total += len(gold)
        hits += sum(a == b for a, b in zip(gold, got))
    return hits / total


def fit_reconstruction(model, records, style, max_iters=2000, lr=1e-3, batch_size=32,
                       target_loss=None, check_every=50, clip_norm=5.0, seed=0):
    """Teacher-forced reconstruction of ``records`` under a single style.

    Stops early once the full-corpus loss drops below ``target_loss``
    (checked every ``check_every`` iterations). Returns the per-iteration
    batch losses.
    """
    rng = np.random.default_rng(seed)
    opt = nc.Adam(model.generator_params(), lr=lr)
    full = _batch(records)
    losses = []
    for it in range(max_iters):
        opt.zero_grad()
        loss = reconstruction_loss(model, _draw(rng, records, batch_size), style)
        loss.backward()
        nc.clip_grad_norm(opt.params.values(), clip_norm)
        opt.step(lr)
        losses.append(loss.item())
        if target_loss is not None and (it + 1) % check_every == 0:
            with nc.no_grad():
                if reconstruction_loss(model, full, style).item() < target_loss:
                    break
    return losses


@dataclass
class StageResult:
    model: StyleTransferModel
    losses: list
    config: StageConfig


def train_stage(corpus0, corpus1, cfg, init=None, model_config=None):
    """Alternate discriminator and generator updates for ``cfg.total_iters`` iterations.

    ``init`` is the starting model (copied, never mutated). Stage 2 requires
    it; stage 1 falls back to a fresh model built from ``model_config``.
    """
    _check_corpora(corpus0, corpus1)
    if init is None:
        if cfg.stage == 2:
            raise ConfigurationError("stage 2 must be initialised from a stage-1 model",
                                     code="MISSING_STAGE1_INIT")
        if model_config is None:
            raise ConfigurationError("need an init model or a model config")
        model = StyleTransferModel(model_config, seed=cfg.seed, binding=cfg.binding)
    else:
        model = init.clone(binding=cfg.binding)
    rng = np.random.default_rng(cfg.seed)
    g_opt = nc.Adam(model.generator_params(), lr=cfg.lr_gen)
    d_opt = nc.Adam(model.discriminator_params(), lr=cfg.lr_disc)
    reports = []
    for it in range(cfg.total_iters):
        b0, b1 = _draw(rng, corpus0, cfg.batch_size), _draw(rng, corpus1, cfg.batch_size)
        rep = LossReport(it)
        for _ in range(cfg.d_steps):
            d = _guard(discriminator_step, it, model, b0, b1, d_opt, cfg.lr_at(it, cfg.lr_disc),
                       cfg.temperature, cfg.clip_norm)
            rep = dataclasses.replace(rep, **d)
        g = _guard(generator_adversarial_step, it, model, b0, b1, g_opt, cfg.lr_at(it, cfg.lr_gen),
                   cfg.adv_weight, cfg.temperature, cfg.clip_norm, cfg.critic_encoder_grad)
        reports.append(dataclasses.replace(rep, **g))
        if it % 50 == 0:
            log.info("stage %d iter %d %s", cfg.stage, it, reports[-1])
    return StageResult(model, reports, cfg)


def transfer(model, records, src_style, dst_style=None, vocab=None, batch_size=64):
    """Greedy outputs for ``records`` encoded under ``src_style`` and decoded under ``dst_style``."""
    dst_style = dst_style or src_style
    out = []
    for k in range(0, len(records), batch_size):
        chunk = _batch(records[k:k + batch_size])
        with nc.no_grad():
            z = model.encode(chunk, src_style)
            out.extend(model.decode_greedy(z, dst_style, vocab=vocab))
    return out


def generate_negatives(model, matrix_corpus, vocab, embedded_corpus=None, mix=False, seed=0):
    """Stage-1 matrix sentences rendered in the embedded style, one per input.

    With ``mix`` a random subset drawn from both transfer directions is
    returned instead (needs ``embedded_corpus``).
    """
    s0, s1 = model.binding.style0, model.binding.style1
    negs = transfer(model, matrix_corpus, s1, vocab=vocab)
    if mix:
        if not embedded_corpus:
            raise ConfigurationError("mixed negatives need the embedded corpus")
        pool = negs + transfer(model, embedded_corpus, s0, vocab=vocab)
        rng = np.random.default_rng(seed)
        negs = [pool[i] for i in rng.choice(len(pool), size=len(matrix_corpus), replace=False)]
    return negs


def figure2_generations(stage1_negatives, stage2_model, corpora, vocab, style=Style.NATURAL):
    """Generated corpora compared against real CS: stage-1 outputs and stage-2 outputs by source."""
    return {
        "stage1": stage1_negatives,
        "stage2_from_negatives": transfer(stage2_model, stage1_negatives, style, vocab=vocab),
        "from_matrix": transfer(stage2_model, corpora.matrix, style, vocab=vocab),
        "from_embedded": transfer(stage2_model, corpora.embedded, style, vocab=vocab),
    }


def corpus_hash(records):
    h = hashlib.sha256()
    for r in records:
        h.update((" ".join(map(str, r.ids)) + "\n").encode())
    return h.hexdigest()


def persist_stage(result, out_dir, corpora_hashes=None):
    os.makedirs(out_dir, exist_ok=True)
    ckpt = os.path.join(out_dir, "model.ckpt")
    losses = os.path.join(out_dir, "losses.csv")
    result.model.save(ckpt, stage=result.config.stage)
    write_loss_csv(losses, result.losses)
    manifest = {
        "stage": result.config.stage,
        "seed": result.config.seed,
        "config": result.config.to_dict(),
        "model_config": dataclasses.asdict(result.model.config),
        "corpus_hashes": corpora_hashes or {},
        "checkpoint": ckpt,
        "loss_csv": losses,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


@dataclass
class PipelineResult:
    stage1: StageResult
    negatives: list
    stage2: StageResult
    pretrain_losses: list = field(default_factory=list)


def run_pipeline(corpora, vocab, model_config, cfg1, cfg2, out_dir=None):
    """Pretrain, stage 1, negative generation, stage 2; artifacts written to ``out_dir`` if given."""
    if not corpora.real_cs:
        raise ConfigurationError("the real code-switched corpus is empty", code="EMPTY_CORPUS")
    _check_corpora(corpora.matrix, corpora.embedded)
    if cfg2.stage != 2 or cfg1.stage != 1:
        raise ConfigurationError("pipeline needs a stage-1 and a stage-2 config")
    model = StyleTransferModel(model_config, seed=cfg1.seed, binding=cfg1.binding)
    pre = pretrain_generator(model, corpora.matrix, corpora.embedded, cfg1)
    s1 = train_stage(corpora.matrix, corpora.embedded, cfg1, init=model)
    hashes = {"matrix": corpus_hash(corpora.matrix), "embedded": corpus_hash(corpora.embedded)}
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_loss_csv(os.path.join(out_dir, "pretrain_losses.csv"), pre)
        persist_stage(s1, os.path.join(out_dir, "stage1"), hashes)
    negatives = generate_negatives(s1.model, corpora.matrix, vocab, corpora.embedded,
                                   mix=cfg1.mix_negatives, seed=cfg1.seed)
    if out_dir:
        write_lines(os.path.join(out_dir, "negatives.txt"), [decode_to_text(r, vocab) for r in negatives])
    s2 = train_stage(negatives, corpora.real_cs, cfg2, init=s1.model)
    if out_dir:
        persist_stage(s2, os.path.join(out_dir, "stage2"),
                      {"negatives": corpus_hash(negatives), "real_cs": corpus_hash(corpora.real_cs)})
    return PipelineResult(s1, negatives, s2, pre)
