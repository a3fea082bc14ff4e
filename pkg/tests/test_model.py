import numpy as np
import pytest

from csgan import numcore as nc
from csgan.corpus import BOS, EOS
from csgan.errors import ConfigurationError
from csgan.model import (
    STAGE1,
    STAGE2,
    Batch,
    SoftSequence,
    Style,
    StyleTransferModel,
    TransformerConfig,
)
from conftest import random_records, toy_config
from gradcheck import numeric_grad, rel_error


def _batch(rng, n=3, vocab_size=20, max_len=4):
    return Batch.from_records(random_records(rng, n, vocab_size, max_len=max_len))


def test_paper_sized_latent_shape():
    model = StyleTransferModel(TransformerConfig(vocab_size=30), seed=0)
    batch = Batch.from_records([[BOS, 5, 6, 7, EOS], [BOS, 8, 9, 10, EOS]])
    z = model.encode(batch, Style.MATRIX)
    assert z.values.shape == (2, 5, 256)
    assert z.values.dtype == np.float32


def test_style_changes_latent(toy_model):
    batch = _batch(np.random.default_rng(0))
    zm = toy_model.encode(batch, Style.MATRIX).values.data
    ze = toy_model.encode(batch, Style.EMBEDDED).values.data
    assert not np.allclose(zm, ze)


def test_zero_style_embeddings_make_styles_identical(toy_model):
    toy_model.params["style_emb"].data[:] = 0.0
    batch = _batch(np.random.default_rng(0))
    zm = toy_model.encode(batch, Style.MATRIX).values.data
    ze = toy_model.encode(batch, Style.EMBEDDED).values.data
    np.testing.assert_array_equal(zm, ze)


def test_unbound_style_is_rejected(toy_model):
    batch = _batch(np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        toy_model.encode(batch, Style.NATURAL)
    toy_model.binding = STAGE2
    toy_model.encode(batch, Style.NATURAL)


def test_untrained_greedy_output_is_well_formed_and_deterministic():
    model = StyleTransferModel(toy_config(max_len=45), seed=5)
    batch = _batch(np.random.default_rng(1), n=4)
    z = model.encode(batch, Style.MATRIX)
    outs = model.decode_greedy(z, Style.MATRIX)
    assert outs == model.decode_greedy(z, Style.MATRIX)
    for ids in outs:
        assert ids[0] == BOS
        assert all(0 <= i < 20 for i in ids)
        assert ids[-1] == EOS or len(ids) == 45
        assert EOS not in ids[1:-1]


def test_incremental_decoder_matches_teacher_forcing(toy_model):
    """Stepwise decoding with cached keys reproduces the parallel causal pass."""
    batch = Batch.from_records([[BOS, 5, 9, 4, EOS]])
    z = toy_model.encode(batch, Style.MATRIX)
    full = toy_model.decoder_logits(z, Style.MATRIX, batch).data
    state = toy_model._start_decoding(z)
    x = toy_model._start_input(Style.MATRIX, 1)
    E = toy_model.params["tok_emb"]
    steps = []
    for t in range(full.shape[1]):
        steps.append(toy_model._decoder_step(x, state).data[:, 0])
        x = nc.embedding_lookup(E, batch.ids[:, t + 1:t + 2]) + toy_model._pos[t + 1:t + 2]
    np.testing.assert_allclose(np.stack(steps, axis=1), full, atol=1e-12)


def test_soft_rows_are_distributions(toy_model):
    batch = _batch(np.random.default_rng(2))
    seq = toy_model.decode_soft(toy_model.encode(batch, Style.MATRIX), Style.EMBEDDED, temperature=0.5)
    np.testing.assert_allclose(seq.dists.data.sum(axis=-1), 1.0, atol=1e-6)
    np.testing.assert_allclose(seq.soft_embs.data, seq.dists.data @ toy_model.params["tok_emb"].data,
                               atol=1e-12)
    assert seq.soft_embs.shape[:2] == batch.ids.shape
    np.testing.assert_array_equal(seq.mask, batch.mask)


def test_soft_decode_rejects_nonpositive_temperature(toy_model):
    z = toy_model.encode(_batch(np.random.default_rng(2)), Style.MATRIX)
    with pytest.raises(ValueError):
        toy_model.decode_soft(z, Style.MATRIX, temperature=0.0)


def test_reencode_of_one_hot_rows_equals_discrete_encode(toy_model):
    batch = _batch(np.random.default_rng(4), n=4)
    onehot = np.eye(20)[batch.ids]
    E = toy_model.params["tok_emb"]
    seq = SoftSequence(nc.Tensor(onehot), nc.matmul(nc.Tensor(onehot), E), batch.mask)
    soft = toy_model.reencode_soft(seq, Style.EMBEDDED).values.data
    hard = toy_model.encode(batch, Style.EMBEDDED).values.data
    np.testing.assert_allclose(soft[batch.mask], hard[batch.mask], atol=1e-5)


def _sharpen(model, factor):
    model.params["out.w"].data *= factor
    model.params["out.b"].data *= factor


def greedy_margins(model, z, style):
    """Greedy ids plus the smallest top-1 vs top-2 logit gap met along the path."""
    state = model._start_decoding(z)
    x = model._start_input(style, z.values.shape[0])
    E = model.params["tok_emb"]
    ids, margin = [], np.inf
    with nc.no_grad():
        for t in range(z.values.shape[1] - 1):
            logits = model._decoder_step(x, state).data[:, 0] + model._gen_bias
            top2 = np.sort(logits, axis=-1)[:, -2:]
            margin = min(margin, float((top2[:, 1] - top2[:, 0]).min()))
            nxt = logits.argmax(axis=-1)
            ids.append(nxt)
            x = nc.embedding_lookup(E, nxt[:, None]) + model._pos[t + 1:t + 2]
    return np.stack(ids, axis=1), margin


def test_soft_path_converges_to_greedy_with_large_margin(toy_model):
    batch = _batch(np.random.default_rng(6), n=4)
    z = toy_model.encode(batch, Style.MATRIX)
    ids0, margin = greedy_margins(toy_model, z, Style.EMBEDDED)
    # scaling the output layer scales every logit gap and keeps the greedy path
    _sharpen(toy_model, 25.0 / margin)
    ids, margin = greedy_margins(toy_model, z, Style.EMBEDDED)
    np.testing.assert_array_equal(ids, ids0)
    assert margin >= 20
    seq = toy_model.decode_soft(z, Style.EMBEDDED, lengths=np.full(4, batch.ids.shape[1]))
    hard = toy_model.params["tok_emb"].data[ids]
    assert np.abs(seq.soft_embs.data[:, 1:] - hard).max() < 1e-3


def test_low_temperature_soft_argmax_matches_greedy(toy_model):
    batch = _batch(np.random.default_rng(7), n=3)
    z = toy_model.encode(batch, Style.MATRIX)
    ids, _ = greedy_margins(toy_model, z, Style.MATRIX)
    seq = toy_model.decode_soft(z, Style.MATRIX, lengths=np.full(3, batch.ids.shape[1]), temperature=1e-4)
    np.testing.assert_array_equal(seq.dists.data[:, 1:].argmax(axis=-1), ids)


def test_soft_path_gradient_reaches_encoder_and_matches_fd(toy_model):
    batch = _batch(np.random.default_rng(8), n=2)
    weights = np.random.default_rng(0).normal(size=(2, batch.ids.shape[1], 8))
    target = toy_model.params["enc.0.self.q.w"]

    def loss():
        seq = toy_model.decode_soft(toy_model.encode(batch, Style.MATRIX), Style.EMBEDDED)
        return nc.tsum(seq.soft_embs * weights)

    target.grad = None
    loss().backward()
    assert np.abs(target.grad).max() > 0
    numeric = numeric_grad(lambda: float(loss().data), target.data)
    assert rel_error(target.grad, numeric) < 1e-4


def test_style_embedding_gradient_through_reencode(toy_model):
    batch = _batch(np.random.default_rng(9), n=2)
    style = toy_model.params["style_emb"]

    def pooled():
        seq = toy_model.decode_soft(toy_model.encode(batch, Style.MATRIX), Style.EMBEDDED)
        z = toy_model.reencode_soft(seq, Style.EMBEDDED)
        return nc.tsum(nc.mean_pool(z.values, 1, z.mask) * np.arange(1, 9))

    style.grad = None
    pooled().backward()
    assert np.abs(style.grad[1]).max() > 0
    numeric = numeric_grad(lambda: float(pooled().data), style.data)
    assert rel_error(style.grad, numeric) < 1e-4


def test_discriminator_on_constant_latent(toy_model):
    from csgan.model import LatentBatch

    z = LatentBatch(nc.Tensor(np.ones((3, 4, 8))), np.ones((3, 4), dtype=bool))
    logits = toy_model.discriminate(z).data
    assert logits.shape == (3, 2) and np.isfinite(logits).all()
    p = nc.softmax(nc.Tensor(logits)).data
    np.testing.assert_allclose(p.sum(axis=-1), 1.0)


def test_discriminator_ignores_padding(toy_model):
    recs = [[BOS, 5, 6, EOS], [BOS, 7, EOS]]
    short = Batch.from_records(recs)
    padded = Batch(np.pad(short.ids, ((0, 0), (0, 2))), np.pad(short.mask, ((0, 0), (0, 2))))
    a = toy_model.discriminate(toy_model.encode(short, Style.MATRIX)).data
    b = toy_model.discriminate(toy_model.encode(padded, Style.MATRIX)).data
    assert np.abs(a - b).max() < 1e-5


def test_discriminator_rejects_all_masked_example(toy_model):
    from csgan.model import LatentBatch

    mask = np.array([[True, True], [False, False]])
    with pytest.raises(ValueError):
        toy_model.discriminate(LatentBatch(nc.Tensor(np.ones((2, 2, 8))), mask))


def test_checkpoint_reload_is_bit_identical(tmp_path, toy_model):
    batch = _batch(np.random.default_rng(10))
    path = tmp_path / "toy.ckpt"
    toy_model.save(path, stage=1)
    back = StyleTransferModel.load(path)
    assert back.binding == STAGE1
    assert list(back.params) == list(toy_model.params)
    a = toy_model.discriminate(toy_model.encode(batch, Style.MATRIX)).data
    b = back.discriminate(back.encode(batch, Style.MATRIX)).data
    assert a.tobytes() == b.tobytes()


def test_single_encoder_stack_shared_by_both_paths(toy_model):
    names = list(toy_model.params)
    assert len(names) == len(set(names))
    enc_layers = {n.split(".")[1] for n in names if n.startswith("enc.") and n.split(".")[1].isdigit()}
    assert enc_layers == {"0", "1"}
    assert not any(n.startswith(("reenc", "enc2")) for n in names)


def test_constant_encoder_reencode_keeps_values_and_blocks_weight_grads(toy_model):
    batch = _batch(np.random.default_rng(11), n=2)
    with nc.no_grad():
        seq = toy_model.decode_soft(toy_model.encode(batch, Style.MATRIX), Style.EMBEDDED)
    soft = nc.Tensor(seq.soft_embs.data, requires_grad=True)
    seq = SoftSequence(seq.dists, soft, seq.mask)
    weights = np.arange(1, 9)
    grads = {}
    for flag in (True, False):
        for p in toy_model.params.values():
            p.grad = None
        soft.grad = None
        z = toy_model.reencode_soft(seq, Style.EMBEDDED, encoder_grad=flag)
        nc.tsum(nc.mean_pool(z.values, 1, z.mask) * weights).backward()
        grads[flag] = (z.values.data, soft.grad, toy_model.params["enc.1.ff2.w"].grad,
                       toy_model.params["style_emb"].grad)
    np.testing.assert_array_equal(grads[True][0], grads[False][0])
    np.testing.assert_array_equal(grads[True][1], grads[False][1])
    assert np.abs(grads[True][2]).max() > 0 and np.abs(grads[True][3]).max() > 0
    assert grads[False][2] is None and grads[False][3] is None
    assert not toy_model._constant_encoder
