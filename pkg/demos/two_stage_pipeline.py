"""
The two-stage pipeline on a toy synthetic corpus
================================================

Stage 1 learns to move sentences between the two monolingual styles.
Its matrix-to-embedded transfers become artificial code-switched negatives.
Stage 2 starts from the stage-1 weights and learns to turn those negatives,
and any other source, into the natural code-switched style.

The run below uses a smaller budget than configs/desk_benchmark.json (the
settings the acceptance checks use) and takes a few minutes on one core. At
this size the transfers are rough and vary a lot from seed to seed.
"""
from csgan import TransformerConfig
from csgan.corpus import SynthConfig, decode_to_text, synth_corpora
from csgan.metrics import compare_reports, corpus_report, stream_from_records
from csgan.training import StageConfig, figure2_generations, run_pipeline

data = synth_corpora(0, 200, SynthConfig(p_sw=0.3))
vocab = data.vocabulary()
corpora = data.encode(vocab, 12)
print(f"{len(corpora.matrix)} matrix, {len(corpora.embedded)} embedded, {len(corpora.real_cs)} real CS sentences;"
      f" vocabulary of {vocab.size_v}")
switched = next(r for r in corpora.real_cs if stream_from_records([r], vocab).tags.any())
print("real CS example:", decode_to_text(switched, vocab))

mc = TransformerConfig(vocab_size=vocab.size_v, n_layers=2, hidden=64, n_heads=4, ff_dim=128, max_len=12)
c1 = StageConfig.stage1(seed=0, total_iters=600, pretrain_iters=200, batch_size=16)
c2 = StageConfig.stage2(seed=0, total_iters=300, batch_size=16, adv_weight=20.0)
res = run_pipeline(corpora, vocab, mc, c1, c2)

last = res.stage1.losses[-1]
print(f"stage 1 end: G losses {last.g_matrix:.3f}/{last.g_embedded:.3f}, D accuracy {last.disc_acc:.2f}")
# show the sentences stage 1 changed most
changed = sorted(zip(corpora.matrix, res.negatives),
                 key=lambda p: -stream_from_records([p[1]], vocab).tags.mean())
for src, neg in changed[:3]:
    print(f"  {decode_to_text(src, vocab):40s} -> {decode_to_text(neg, vocab)}")

gens = figure2_generations(res.negatives, res.stage2.model, corpora, vocab)
reference = corpus_report(corpora.real_cs, vocab)
rows = compare_reports({k: corpus_report(v, vocab) for k, v in gens.items()}, reference)
print(f"\n{'corpus':24s} {'M-index':>8s} {'|dM|':>6s}")
for row in rows:
    print(f"{row.report.corpus:24s} {row.report.m_index:8.3f} {row.distances['m_index']:6.3f}")
print(f"{'real_cs':24s} {reference.m_index:8.3f}")
