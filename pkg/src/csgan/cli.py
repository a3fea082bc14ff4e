"""``csgan``: data prep, both training stages, generation and CS-metric reports.

A typical run on synthetic data::

    csgan synth --seed 7 --out data
    csgan vocab --data data --run run
    csgan pretrain --data data --run run --seed 7
    csgan train --stage 1 --data data --run run --seed 7 --init run/pretrain/model.ckpt
    csgan negatives --data data --run run --model run/stage1/model.ckpt
    csgan train --stage 2 --data data --run run --seed 7 --init run/stage1/model.ckpt
    csgan generate --data data --run run --model run/stage2/model.ckpt --source matrix --style l_n
    csgan evaluate --run run data/real_cs.txt run/negatives.txt run/generated/matrix_l_n.txt
    csgan report --run run --reference run/reports/real_cs.json run/reports/*.json

Exit status is 0 on success, 2 for configuration errors and 3 for training
or other runtime failures; failures also print ``error_code=<CODE>`` on
standard error.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .corpus import (
    DEFAULT_MAX_LEN,
    Lang,
    Origin,
    SynthConfig,
    Vocabulary,
    build_vocabulary,
    decode_to_text,
    load_corpus,
    read_lines,
    synth_corpora,
    write_lines,
)
from .errors import ConfigurationError, InvariantError, NonFiniteError, TrainingError
from .metrics import CsMetricsReport, compare_reports, corpus_report, write_comparison_csv
from .model import Style, StyleTransferModel, TransformerConfig
from .training import (
    StageConfig,
    corpus_hash,
    generate_negatives,
    persist_stage,
    pretrain_generator,
    train_stage,
    transfer,
    write_loss_csv,
)

log = logging.getLogger("csgan")

CONFIG_SECTIONS = ("seed", "n_sentences", "max_len", "synth", "model", "stage1", "stage2")
MODEL_KEYS = ("n_layers", "hidden", "n_heads", "ff_dim", "disc_hidden", "dropout", "dtype")

# flag name -> (section, key); sections "stage" apply to whichever stage runs
OVERRIDES = {
    "n_sentences": (None, "n_sentences"),
    "max_len": (None, "max_len"),
    "p_sw": ("synth", "p_sw"),
    "layers": ("model", "n_layers"),
    "hidden": ("model", "hidden"),
    "heads": ("model", "n_heads"),
    "ff_dim": ("model", "ff_dim"),
    "iters": ("stage", "total_iters"),
    "pretrain_iters": ("stage", "pretrain_iters"),
    "batch_size": ("stage", "batch_size"),
    "lr_gen": ("stage", "lr_gen"),
    "lr_disc": ("stage", "lr_disc"),
    "adv_weight": ("stage", "adv_weight"),
    "temperature": ("stage", "temperature"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        print("error_code=USAGE", file=sys.stderr)
        sys.exit(2)


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def load_config(args, stage=None):
    """Merge the JSON config file with command-line overrides."""
    cfg = {"seed": None, "n_sentences": 400, "max_len": DEFAULT_MAX_LEN,
           "synth": {}, "model": {}, "stage1": {}, "stage2": {}}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{args.config}: not valid JSON ({exc})", code="BAD_CONFIG") from None
        unknown = set(raw) - set(CONFIG_SECTIONS)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}", code="BAD_CONFIG")
        for key, value in raw.items():
            if isinstance(cfg[key], dict):
                cfg[key].update(value)
            else:
                cfg[key] = value
    for flag, (section, key) in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if section is None:
            cfg[key] = value
        elif section == "stage":
            cfg[f"stage{stage or 1}"][key] = value
        else:
            cfg[section][key] = value
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    bad = set(cfg["model"]) - set(MODEL_KEYS)
    if bad:
        raise ConfigurationError(f"unknown model keys: {sorted(bad)}", code="BAD_CONFIG")
    return cfg


def stage_config(cfg, stage):
    fields = {f.name for f in dataclasses.fields(StageConfig)}
    section = cfg[f"stage{stage}"]
    bad = set(section) - fields
    if bad:
        raise ConfigurationError(f"unknown stage{stage} keys: {sorted(bad)}", code="BAD_CONFIG")
    kw = {**section, "seed": cfg["seed"]}
    return StageConfig.stage1(**kw) if stage == 1 else StageConfig.stage2(**kw)


def model_config(cfg, vocab):
    return TransformerConfig(vocab_size=vocab.size_v, max_len=cfg["max_len"], **cfg["model"])


def write_manifest(path, command, args, cfg, inputs=(), outputs=(), extra=None):
    manifest = {
        "command": command,
        "version": __version__,
        "argv": sys.argv[1:],
        "args": {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
                 if k != "func"},
        "config": cfg,
        "seed": cfg.get("seed") if cfg else None,
        "inputs": {str(p): file_hash(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    manifest.update(extra or {})
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _need(path, what):
    if not Path(path).exists():
        raise ConfigurationError(f"{what} not found: {path}", code="MISSING_INPUT")
    return Path(path)


def _data_files(args):
    d = Path(args.data)
    return {name: d / f"{name}.txt" for name in ("matrix", "embedded", "real_cs")}


def _vocab(args):
    return Vocabulary.load(_need(Path(args.run) / "vocab.tsv", "vocabulary (run `csgan vocab` first)"))


def _corpus(path, vocab, cfg, origin):
    recs = load_corpus(_need(path, "corpus"), vocab, cfg["max_len"], origin)
    if not recs:
        raise ConfigurationError(f"{path}: corpus is empty", code="EMPTY_CORPUS")
    return recs


def cmd_synth(args):
    cfg = load_config(args)
    synth = SynthConfig(**{**cfg["synth"], "seed": cfg["seed"]})
    data = synth_corpora(cfg["seed"], cfg["n_sentences"], synth)
    data.write(args.out)
    out = Path(args.out)
    outputs = [out / f for f in ("matrix.txt", "embedded.txt", "real_cs.txt", "synth_config.json")]
    write_manifest(out / "manifest_synth.json", "synth", args, cfg, outputs=outputs)
    print(f"wrote {len(data.matrix)} matrix, {len(data.embedded)} embedded and "
          f"{len(data.real_cs)} code-switched sentences to {out}")


def cmd_vocab(args):
    cfg = load_config(args)
    files = _data_files(args)
    cs_lines = read_lines(files["real_cs"]) if files["real_cs"].exists() else []
    vocab = build_vocabulary(read_lines(_need(files["matrix"], "matrix corpus")),
                             read_lines(_need(files["embedded"], "embedded corpus")),
                             cs_lines, min_count=args.min_count)
    run = Path(args.run)
    run.mkdir(parents=True, exist_ok=True)
    vocab.save(run / "vocab.tsv")
    counts = {lang.value: len(vocab.ids_with(lang)) for lang in Lang}
    inputs = [p for p in files.values() if p.exists()]
    write_manifest(run / "manifest_vocab.json", "vocab", args, cfg, inputs, [run / "vocab.tsv"],
                   {"size_v": vocab.size_v, "partition": counts})
    print(f"vocabulary of {vocab.size_v} ids: {counts}")


def cmd_pretrain(args):
    cfg = load_config(args, stage=1)
    vocab = _vocab(args)
    files = _data_files(args)
    matrix = _corpus(files["matrix"], vocab, cfg, Origin.MATRIX_CORPUS)
    embedded = _corpus(files["embedded"], vocab, cfg, Origin.EMBEDDED_CORPUS)
    sc = stage_config(cfg, 1)
    model = StyleTransferModel(model_config(cfg, vocab), seed=sc.seed, binding=sc.binding)
    losses = pretrain_generator(model, matrix, embedded, sc)
    out = Path(args.run) / "pretrain"
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.ckpt", stage=0)
    write_loss_csv(out / "losses.csv", losses)
    write_manifest(out / "manifest.json", "pretrain", args, cfg,
                   [files["matrix"], files["embedded"], Path(args.run) / "vocab.tsv"],
                   [out / "model.ckpt", out / "losses.csv"], {"stage_config": sc.to_dict()})
    last = losses[-1] if losses else None
    print(f"pretrained {sc.pretrain_iters} iterations" + (f"; final losses {last.g_matrix:.4f} "
                                                          f"{last.g_embedded:.4f}" if last else ""))


def cmd_train(args):
    cfg = load_config(args, stage=args.stage)
    if args.stage == 2 and not args.init:
        raise ConfigurationError("stage 2 needs --init pointing at a stage-1 checkpoint",
                                 code="MISSING_STAGE1_INIT")
    vocab = _vocab(args)
    files = _data_files(args)
    run = Path(args.run)
    if args.stage == 1:
        src0, src1 = files["matrix"], files["embedded"]
        origins = (Origin.MATRIX_CORPUS, Origin.EMBEDDED_CORPUS)
    else:
        src0, src1 = Path(args.negatives or run / "negatives.txt"), files["real_cs"]
        origins = (Origin.GENERATED, Origin.REAL_CS)
    corpus0 = _corpus(src0, vocab, cfg, origins[0])
    corpus1 = _corpus(src1, vocab, cfg, origins[1])
    sc = stage_config(cfg, args.stage)
    init = StyleTransferModel.load(_need(args.init, "init checkpoint")) if args.init else None
    if init is not None and init.config.vocab_size != vocab.size_v:
        raise ConfigurationError("init checkpoint was trained with a different vocabulary",
                                 code="VOCAB_MISMATCH")
    result = train_stage(corpus0, corpus1, sc, init=init, model_config=model_config(cfg, vocab))
    out = run / f"stage{args.stage}"
    inputs = [src0, src1, run / "vocab.tsv"] + ([Path(args.init)] if args.init else [])
    manifest = persist_stage(result, out, {str(src0): corpus_hash(corpus0), str(src1): corpus_hash(corpus1)})
    write_manifest(out / "manifest.json", "train", args, cfg, inputs,
                   [out / "model.ckpt", out / "losses.csv"],
                   {"stage": args.stage, "stage_config": manifest["config"],
                    "model_config": manifest["model_config"], "corpus_hashes": manifest["corpus_hashes"]})
    if result.losses:
        last = result.losses[-1]
        print(f"stage {args.stage}: {sc.total_iters} iterations; final disc_acc {last.disc_acc:.3f}, "
              f"adv {last.adv:.4f}")


def cmd_negatives(args):
    cfg = load_config(args, stage=1)
    vocab = _vocab(args)
    files = _data_files(args)
    model = StyleTransferModel.load(_need(args.model, "stage-1 checkpoint"))
    cfg["max_len"] = model.config.max_len
    matrix = _corpus(files["matrix"], vocab, cfg, Origin.MATRIX_CORPUS)
    embedded = _corpus(files["embedded"], vocab, cfg, Origin.EMBEDDED_CORPUS) if args.mix else None
    negs = generate_negatives(model, matrix, vocab, embedded, mix=args.mix, seed=args.seed or 0)
    out = Path(args.out or Path(args.run) / "negatives.txt")
    write_lines(out, [decode_to_text(r, vocab) for r in negs])
    inputs = [files["matrix"], Path(args.model)] + ([files["embedded"]] if args.mix else [])
    write_manifest(out.with_name(out.stem + "_manifest.json"), "negatives", args, cfg, inputs, [out])
    print(f"wrote {len(negs)} negative examples to {out}")


def cmd_generate(args):
    cfg = load_config(args)
    vocab = _vocab(args)
    files = _data_files(args)
    run = Path(args.run)
    named = {"matrix": files["matrix"], "embedded": files["embedded"], "negatives": run / "negatives.txt"}
    src = named.get(args.source, Path(args.source))
    label = args.source if args.source in named else Path(args.source).stem
    style = Style.parse(args.style)
    model = StyleTransferModel.load(_need(args.model, "checkpoint"))
    cfg["max_len"] = model.config.max_len
    if style not in (model.binding.style0, model.binding.style1):
        raise ConfigurationError(f"style {style.value} is not bound by this checkpoint "
                                 f"({model.binding.style0.value}/{model.binding.style1.value})",
                                 code="UNBOUND_STYLE")
    records = _corpus(src, vocab, cfg, Origin.GENERATED)
    outs = transfer(model, records, style, vocab=vocab)
    out = Path(args.out or run / "generated" / f"{label}_{style.value}.txt")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_lines(out, [decode_to_text(r, vocab) for r in outs])
    write_manifest(out.with_name(out.stem + "_manifest.json"), "generate", args, cfg,
                   [src, Path(args.model)], [out])
    print(f"wrote {len(outs)} sentences to {out}")


def cmd_evaluate(args):
    cfg = load_config(args)
    vocab = _vocab(args)
    out_dir = Path(args.out or Path(args.run) / "reports")
    out_dir.mkdir(parents=True, exist_ok=True)
    default_lang = Lang.MATRIX if args.default_lang == "matrix" else Lang.EMBEDDED
    written = []
    for path in args.inputs:
        recs = _corpus(path, vocab, cfg, Origin.GENERATED)
        rep = corpus_report(recs, vocab, default_lang, name=Path(path).stem)
        target = out_dir / f"{rep.corpus}.json"
        target.write_text(rep.to_json() + "\n", encoding="utf-8")
        written.append(target)
        print(f"{rep.corpus}: " + " ".join(f"{m}={v}" for m, v in zip(
            ("m_index", "lang_entropy", "i_index", "burstiness"), rep.row()[1:5])))
    write_manifest(out_dir / "manifest_evaluate.json", "evaluate", args, cfg,
                   [Path(p) for p in args.inputs] + [Path(args.run) / "vocab.tsv"], written)


def _read_report(path):
    try:
        return CsMetricsReport.from_json(_need(path, "report").read_text(encoding="utf-8"))
    except (json.JSONDecodeError, TypeError) as exc:
        raise ConfigurationError(f"{path}: not a metrics report ({exc})", code="BAD_REPORT") from None


def cmd_report(args):
    reference = _read_report(args.reference)
    candidates = {}
    for path in args.candidates:
        if Path(path).resolve() == Path(args.reference).resolve():
            continue
        rep = _read_report(path)
        candidates[rep.corpus or Path(path).stem] = rep
    rows = compare_reports(candidates, reference)
    out = Path(args.out or Path(args.run) / "report.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_comparison_csv(out, rows, reference)
    write_manifest(out.with_name(out.stem + "_manifest.json"), "report", args, {},
                   [Path(args.reference), *(Path(p) for p in args.candidates)], [out])
    print(out.read_text(encoding="utf-8"), end="")


def build_parser():
    parser = _Parser(prog="csgan", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text, seed_required=False, data=True):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON run configuration (flags override its values)")
        p.add_argument("--seed", type=int, required=seed_required)
        p.add_argument("--run", default="run", help="run directory for artifacts (default: run)")
        if data:
            p.add_argument("--data", default="data",
                           help="directory with matrix.txt, embedded.txt, real_cs.txt (default: data)")
        return p

    p = command("synth", cmd_synth, "write deterministic synthetic corpora", seed_required=True, data=False)
    p.add_argument("--out", default="data")
    p.add_argument("--n-sentences", dest="n_sentences", type=int)
    p.add_argument("--p-sw", dest="p_sw", type=float)

    p = command("vocab", cmd_vocab, "build the partitioned vocabulary")
    p.add_argument("--min-count", type=int, default=1)

    for name, func, help_text in (("pretrain", cmd_pretrain, "reconstruction-only generator warm-up"),
                                  ("train", cmd_train, "adversarial training for one stage")):
        p = command(name, func, help_text, seed_required=True)
        p.add_argument("--max-len", dest="max_len", type=int)
        for flag in ("layers", "hidden", "heads", "ff-dim", "iters", "pretrain-iters", "batch-size"):
            p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=int)
        for flag in ("lr-gen", "lr-disc", "adv-weight", "temperature"):
            p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=float)
        if name == "train":
            p.add_argument("--stage", type=int, choices=(1, 2), required=True)
            p.add_argument("--init", help="starting checkpoint (required for stage 2)")
            p.add_argument("--negatives", help="stage-2 negative examples (default: RUN/negatives.txt)")

    p = command("negatives", cmd_negatives, "render matrix sentences in the embedded style")
    p.add_argument("--model", required=True)
    p.add_argument("--mix", action="store_true", help="draw from both transfer directions")
    p.add_argument("--out")

    p = command("generate", cmd_generate, "greedy generation from a source corpus under a style")
    p.add_argument("--model", required=True)
    p.add_argument("--source", required=True, help="matrix, embedded, negatives, or a text file")
    p.add_argument("--style", required=True, help="l_m, l_e, l_a or l_n")
    p.add_argument("--out")

    p = command("evaluate", cmd_evaluate, "CS metrics for one or more text files", data=False)
    p.add_argument("inputs", nargs="+")
    p.add_argument("--default-lang", choices=("matrix", "embedded"), default="matrix",
                   help="language assigned to SHARED tokens")
    p.add_argument("--out", help="report directory (default: RUN/reports)")

    p = command("report", cmd_report, "compare metric reports against the real-CS reference", data=False)
    p.add_argument("--reference", required=True)
    p.add_argument("candidates", nargs="+")
    p.add_argument("--out", help="CSV path (default: RUN/report.csv)")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors, --help, --version
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigurationError as exc:
        return _fail(exc, exc.code, 2)
    except (InvariantError, FileNotFoundError, IsADirectoryError) as exc:
        return _fail(exc, "BAD_INPUT", 2)
    except (TrainingError, NonFiniteError) as exc:
        return _fail(exc, "TRAINING_FAILED", 3)
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the runtime exit status
        log.debug("unhandled error", exc_info=True)
        return _fail(exc, "RUNTIME", 3)
    return 0


def _fail(exc, code, status):
    print(f"csgan: error: {exc}", file=sys.stderr)
    print(f"error_code={code}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
