"""Model construction, forward/loss, schedule, training loop, checkpoints, decoding."""

import math

import numpy as np
import pytest

from vlg.autodiff import Tensor
from vlg.errors import (ConfigError, CorruptionError, DecodeError, LengthError, RangeError,
                        VersionError, VocabError)
from vlg.model import (ModelConfig, TrainConfig, build_model, encode_images, forward, forward_batch,
                       generate, generate_batch, load_checkpoint, load_split, loss, lr_at,
                       make_batch, read_checkpoint, save_checkpoint, train)
from vlg.model.checkpoint import frozen_checksum
from vlg.model.evaluate import evaluate_rows, score_prediction, summarize
from vlg.tokenizer import PAT_END, PAT_START, P, arity_mask, decode

from helpers import model_grad_error

TINY = ModelConfig(d_model=16, n_layers=2, n_heads=2, encoder_layers=1, seed=3)


@pytest.fixture(scope="module")
def splits(small_dataset):
    return load_split(small_dataset, "train"), load_split(small_dataset, "val")


def tiny_batch(model, data, idx=(0, 1)):
    idx = list(idx)
    return make_batch(data.seqs(idx), enc=encode_images(model, data.images[idx]))


# ------------------------------------------------------------ construction

def test_fresh_regression_output_is_zero(splits):
    m = build_model(TINY)
    b = tiny_batch(m, splits[0])
    logits, reg = forward_batch(m, b.tokens, b.params, b.enc)
    assert not reg.data.any()
    assert np.all(np.isfinite(logits.data)) and logits.data.std() > 0


def test_same_seed_same_parameters():
    a, b = build_model(TINY), build_model(TINY)
    assert all(np.array_equal(a[n], b[n]) for n in a.params)
    c = build_model(ModelConfig(d_model=16, n_layers=2, n_heads=2, encoder_layers=1, seed=4))
    assert not np.array_equal(a["tok_emb"], c["tok_emb"])


def test_freeze_mask():
    m = build_model(TINY)
    assert m.frozen and all(n.startswith("enc.") or ".xattn." in n for n in m.frozen)
    assert "dec.0.xattn.wq" in m.frozen and "dec.0.attn.wq" not in m.frozen
    assert {"tok_emb", "head.w", "reg.w2", "param_in.w"} <= set(m.trainable)
    assert m.n_params("frozen") + m.n_params("trainable") == m.n_params()


def test_norm_gains_and_biases():
    m = build_model(TINY)
    assert np.all(m["lnf.g"] == 1) and not m["lnf.b"].any() and not m["head.b"].any()


@pytest.mark.parametrize("bad", [dict(d_model=15), dict(n_layers=0), dict(patch=7),
                                 dict(param_arity=5), dict(vocab_size=3)])
def test_model_config_errors(bad):
    with pytest.raises(ConfigError):
        ModelConfig(**bad)


def test_input_errors(splits):
    m = build_model(TINY)
    b = tiny_batch(m, splits[0])
    with pytest.raises(VocabError):
        forward_batch(m, np.full_like(b.tokens, m.config.vocab_size), b.params, b.enc)
    long = np.zeros((1, m.config.max_seq + 1), np.int64)
    with pytest.raises(LengthError):
        forward_batch(m, long, np.zeros(long.shape + (P,)), b.enc[:1])


# ------------------------------------------------------------ forward/loss

def test_forward_deterministic_and_single_matches_batch(splits):
    m = build_model(TINY)
    tr = splits[0]
    l1, r1 = forward(m, tr.images[0], tr.texts[0], tr.streams[0])
    l2, r2 = forward(m, tr.images[0], tr.texts[0], tr.streams[0])
    assert np.array_equal(l1, l2) and np.array_equal(r1, r2)
    b = tiny_batch(m, tr, [0])
    lb, _ = forward_batch(m, b.tokens, b.params, b.enc)
    assert np.allclose(lb.data[0], l1[:-1], atol=1e-5)


def test_loss_components(splits):
    m = build_model(TINY)
    b = tiny_batch(m, splits[0])
    logits, reg = forward_batch(m, b.tokens, b.params, b.enc, b.targets)
    total, ce, rg = loss(logits, reg, b, 2.0)
    assert total.item() == pytest.approx(ce.item() + 2.0 * rg.item(), rel=1e-6)
    # zero regression output: the loss is the mean square of the live targets
    assert rg.item() == pytest.approx(float((b.target_params[b.reg_mask] ** 2).mean()), rel=1e-5)
    uniform = Tensor(np.zeros_like(logits.data))
    _, ce_u, _ = loss(uniform, reg, b)
    assert ce_u.item() == pytest.approx(math.log(m.config.vocab_size), rel=1e-6)


def test_reg_zero_without_live_targets(splits):
    m = build_model(TINY)
    b = tiny_batch(m, splits[0], [0])
    b.reg_mask[:] = False
    logits, reg = forward_batch(m, b.tokens, b.params, b.enc, b.targets)
    assert loss(logits, reg, b)[2].item() == 0.0


def test_end_to_end_gradient(splits):
    m = build_model(TINY, dtype=np.float64)
    rng = np.random.default_rng(0)
    # give the zero-initialized output layers weight so every path carries gradient
    for n in ("reg.w2", "reg.b2"):
        m.params[n].data = rng.normal(0, 0.3, size=m[n].shape)
    b = tiny_batch(m, splits[0])
    names = ["tok_emb", "param_in.w", "pos_emb", "dec.0.attn.wq", "dec.0.attn.wk", "dec.1.mlp.w1",
             "dec.1.ln2.g", "dec.1.attn.bo", "lnf.g", "head.w", "reg.w1", "reg.w2", "reg.b2"]
    assert model_grad_error(m, b, names, coords=8) <= 1e-3


# ---------------------------------------------------------------- schedule

def test_lr_schedule():
    assert lr_at(0, 21000) == 0.0
    assert lr_at(1000, 21000) == 6e-5
    assert lr_at(11000, 21000) == pytest.approx(3e-5, abs=1e-18)
    assert lr_at(21000, 21000) == 0.0
    with pytest.raises(RangeError):
        lr_at(21001, 21000)
    with pytest.raises(RangeError):
        lr_at(5, 100, warmup=100)


def test_effective_batch():
    assert TrainConfig(micro_batch=6, accum_steps=5, workers=16).effective_batch == 480
    with pytest.raises(ConfigError):
        TrainConfig(ema_decay=1.0)


# ---------------------------------------------------------------- training

def quick(tc_kwargs=None, model_kwargs=None):
    cfg = ModelConfig(d_model=16, n_layers=1, n_heads=2, encoder_layers=1, seed=1, **(model_kwargs or {}))
    kw = dict(epochs=1, micro_batch=4, accum_steps=1, peak_lr=1e-3, val_subsample=2, val_batch=4)
    kw.update(tc_kwargs or {})
    return build_model(cfg), TrainConfig(**kw)


def test_accumulation_matches_full_batch(splits):
    m1, tc1 = quick()
    m2, tc2 = quick(dict(micro_batch=1, accum_steps=4))
    r1 = train(m1, None, tc1, data=splits)
    r2 = train(m2, None, tc2, data=splits)
    assert r1.steps == r2.steps == 2
    for n in m1.trainable:
        assert np.allclose(m1[n], m2[n], atol=1e-5), n


def test_training_deterministic_and_frozen_intact(splits, tmp_path):
    m1, tc = quick(dict(epochs=2, micro_batch=2, accum_steps=2))
    m2, _ = quick()
    before = frozen_checksum(m1)
    r1 = train(m1, None, tc, data=splits, out=tmp_path)
    r2 = train(m2, None, tc, data=splits)
    assert r1.final_loss == r2.final_loss
    assert r1.frozen_before == r1.frozen_after == before
    assert len(r1.epochs) == 2
    assert (tmp_path / "train_log.csv").read_text().startswith("step,lr,ce,reg")
    assert (tmp_path / "epochs.csv").exists()
    assert read_checkpoint(r1.checkpoint).manifest["effective_batch"] == "2x2x1=4"


def test_training_reduces_loss(splits):
    m, tc = quick(dict(epochs=5, micro_batch=2, peak_lr=3e-3))
    res = train(m, None, tc, data=splits)
    assert res.epochs[-1]["val_ce"] < res.epochs[0]["val_ce"]


def test_ema_returns_averaged_weights(splits):
    m, tc = quick(dict(epochs=2, micro_batch=2, ema_decay=0.5))
    raw, tc_raw = quick(dict(epochs=2, micro_batch=2))
    train(m, None, tc, data=splits)
    train(raw, None, tc_raw, data=splits)
    assert not np.array_equal(m["head.w"], raw["head.w"])


# ------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip(splits, tmp_path):
    m, tc = quick(dict(micro_batch=2))
    res = train(m, None, tc, data=splits)
    path = save_checkpoint(m, res.state, tmp_path / "ck", TrainConfig(micro_batch=6, accum_steps=5, workers=16))
    ck = read_checkpoint(path)
    assert ck.manifest["effective_batch"] == "6x5x16=480"
    assert ck.state.t == res.state.t
    tr = splits[0]
    a = forward(m, tr.images[0], tr.texts[0], tr.streams[0])
    b = forward(ck.model, tr.images[0], tr.texts[0], tr.streams[0])
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_checkpoint_corruption(tmp_path):
    m = build_model(TINY)
    path = save_checkpoint(m, None, tmp_path / "ck")
    blob = path / "param.head.w.f32"
    data = blob.read_bytes()
    blob.write_bytes(data[:-4])
    with pytest.raises(CorruptionError):
        load_checkpoint(path)
    blob.write_bytes(data[:-4] + b"\x00\x00\x80\x7f")
    with pytest.raises(CorruptionError):
        load_checkpoint(path)
    blob.write_bytes(data)
    load_checkpoint(path)
    man = path / "manifest.txt"
    man.write_text(man.read_text().replace("format_version=1", "format_version=9"))
    with pytest.raises(VersionError):
        load_checkpoint(path)


# ---------------------------------------------------------------- decoding

def test_fresh_model_output_is_a_scored_failure(splits):
    m = build_model(TINY)
    va = splits[1]
    s = generate(m, va.images[0], va.texts[0], max_len=40)
    assert s.tokens[0] == PAT_START and not s.params.any()
    with pytest.raises(DecodeError):
        decode(s)
    row = score_prediction("x", s, va.patterns[0], va.prompts[0].constraints)
    assert row.failed and row.garment_acc == 0


def test_generate_matches_teacher_forced_forward(splits):
    m, tc = quick(dict(epochs=3, micro_batch=2, peak_lr=3e-3))
    train(m, None, tc, data=splits)
    va = splits[1]
    enc = encode_images(m, va.images[:3])
    streams = generate_batch(m, enc, va.texts[:3], max_len=30)
    for k, s in enumerate(streams):
        n = len(va.texts[k]) + 1
        tokens = np.concatenate([va.texts[k], [9], s.tokens])
        params = np.concatenate([np.zeros((n, P)), s.params])
        logits, reg = forward_batch(m, tokens[None, :-1], params[None, :-1], enc[k:k + 1])
        nxt = tokens[n + 1:]
        assert np.array_equal(logits.data[0, n:].argmax(-1), nxt)
        live = arity_mask(nxt)
        assert np.allclose(reg.data[0, n:][live], s.params[1:][live], atol=1e-5)


def test_generate_deterministic_and_batched(splits):
    m = build_model(TINY)
    va = splits[1]
    enc = encode_images(m, va.images)
    a = generate_batch(m, enc, va.texts, max_len=20)
    b = [generate_batch(m, enc[i:i + 1], va.texts[i:i + 1], max_len=20)[0] for i in range(len(va))]
    for x, y in zip(a, b):
        assert np.array_equal(x.tokens, y.tokens) and np.allclose(x.params, y.params, atol=1e-6)


def test_oracle_evaluation_is_perfect(splits):
    va = splits[1]
    s = summarize(evaluate_rows(None, va, oracle=True))
    assert s["garment_acc"] == 1.0 and s["vertex_l2_cm"] == 0.0 and s["failure_rate"] == 0.0
    assert s["text_alignment"] == 1.0
