"""Whole-model wiring: forward shapes, loss accounting, pad invariance,
ablation isolation, and the end-to-end gradient check."""

from __future__ import annotations

import numpy as np
import pytest

from temporec.config import RunConfig, apply_variant
from temporec.data import SequenceBatch
from temporec.gradcheck import grad_check
from temporec.model import Model
from temporec.rng import StreamScope, derive_rng
from temporec.tensor import Tape, backward


def tiny_cfg(**overrides):
    defaults = dict(d=8, L=6, n_layers=1, n_heads=1, dropout=0.0, k1=2, k2=2,
                    p_max=8, batch_size=4, epochs=1, seed=13,
                    lambda1=1.0, lambda2=1.0, lambda3=0.5, beta=0.4)
    defaults.update(overrides)
    return RunConfig(**defaults)


def tiny_features(n_items, d_txt, d_img, seed=0):
    rng = derive_rng("feat", seed)
    txt = np.vstack([np.zeros(d_txt), rng.normal(size=(n_items, d_txt))])
    img = np.vstack([np.zeros(d_img), rng.normal(size=(n_items, d_img))])
    return txt.astype(np.float32), img.astype(np.float32)


def tiny_batch(n_items=20, n_cat=3, L=6, B=3, seed=1):
    rng = derive_rng("batch", seed)
    lengths = rng.integers(2, L + 1, size=B)
    items = np.zeros((B, L), dtype=np.int64)
    ts = np.zeros((B, L), dtype=np.int64)
    iv = np.zeros((B, L), dtype=np.int64)
    cats = np.zeros((B, L, n_cat), dtype=np.float32)
    targets = rng.integers(1, n_items + 1, size=B)
    for b in range(B):
        n = int(lengths[b])
        seq_items = rng.integers(1, n_items + 1, size=n)
        seq_ts = np.sort(rng.integers(0, 5_000_000, size=n))
        items[b, L - n:] = seq_items
        ts[b, L - n:] = seq_ts
        iv[b, L - n + 1:] = np.diff(seq_ts)
        for j, it in enumerate(seq_items):
            cats[b, L - n + j, int(it) % n_cat] = 1.0
    return SequenceBatch(items, ts, iv, lengths.astype(np.int64),
                         targets.astype(np.int64), cats)


def build_model(cfg=None, n_items=20, n_cat=3, dtype=np.float64, seed=0):
    cfg = cfg or tiny_cfg()
    txt, img = tiny_features(n_items, d_txt=5, d_img=4, seed=seed)
    return Model(cfg, n_items=n_items, n_categories=n_cat, min_timestamp=0,
                 txt_features=txt, img_features=img, dtype=dtype)


def test_forward_shapes_and_score_surface():
    model = build_model()
    batch = tiny_batch()
    state = model.forward(batch)
    for m in ("id", "txt", "img"):
        assert state.H[m].shape == (3, 8)
        assert state.streams[m].shape == (3, 6, 8)
    scores = model.score_items(state.H, model.full_catalog())
    assert scores.shape == (3, 20)


def test_score_items_rejects_padding_candidate():
    model = build_model()
    state = model.forward(tiny_batch())
    with pytest.raises(ValueError, match="padding"):
        model.score_items(state.H, np.array([0, 1, 2]))


def test_loss_breakdown_total_identity():
    model = build_model()
    scope = StreamScope(model.cfg.seed, 0, 0)
    _, breakdown = model.training_loss(tiny_batch(), scope, training=False)
    expected = (breakdown.main + model.cfg.lambda1 * breakdown.cp
                + model.cfg.lambda2 * breakdown.idcl
                + model.cfg.lambda3 * breakdown.pcl)
    assert breakdown.total == pytest.approx(expected, abs=1e-6)
    assert breakdown.main > 0 and breakdown.cp > 0


def test_loss_invariant_to_pad_slot_timestamps_and_intervals():
    model = build_model()
    scope = StreamScope(model.cfg.seed, 0, 0)
    batch = tiny_batch()
    _, base = model.training_loss(batch, scope, training=False)
    pad = batch.pad_mask
    poked = SequenceBatch(batch.items,
                          np.where(pad, 999_999, batch.timestamps),
                          np.where(pad, 777, batch.intervals),
                          batch.valid_lengths, batch.target_index,
                          batch.target_categories)
    _, moved = model.training_loss(poked, scope, training=False)
    assert base.as_dict() == moved.as_dict()


def test_same_seed_same_losses():
    a = build_model()
    b = build_model()
    scope = StreamScope(13, 0, 0)
    _, la = a.training_loss(tiny_batch(), scope)
    _, lb = b.training_loss(tiny_batch(), scope)
    assert la.as_dict() == lb.as_dict()


def test_tmoe_disabled_forces_pcl_to_zero():
    cfg = apply_variant(tiny_cfg(), "-TMoE")
    model = build_model(cfg)
    scope = StreamScope(cfg.seed, 0, 0)
    _, breakdown = model.training_loss(tiny_batch(), scope)
    assert breakdown.pcl == 0.0
    assert model.tmoe is None and model.pcl_W is None


def test_ablation_isolation_at_step_zero():
    # identical seeds: -CP differs from full only in the cp component
    full = build_model(tiny_cfg())
    nocp = build_model(apply_variant(tiny_cfg(), "-CP"))
    scope = StreamScope(13, 0, 0)
    batch = tiny_batch()
    _, bf = full.training_loss(batch, scope, training=False)
    _, bn = nocp.training_loss(batch, scope, training=False)
    assert bn.cp == 0.0 and bf.cp > 0.0
    assert bn.main == bf.main
    assert bn.idcl == bf.idcl
    assert bn.pcl == bf.pcl


def test_zero_lambda_matches_disabled_gradients():
    batch = tiny_batch()
    grads = {}
    for tag, cfg in (("zero", tiny_cfg(lambda2=0.0)),
                     ("off", tiny_cfg(lambda2=0.0, enable_idcl=False))):
        model = build_model(cfg)
        scope = StreamScope(cfg.seed, 0, 0)
        model.zero_grads()
        with Tape():
            total, _ = model.training_loss(batch, scope, training=False)
            backward(total)
        grads[tag] = {k: t.grad.copy() for k, t in model.params.items()}
    assert grads["zero"].keys() == grads["off"].keys()
    for name in grads["zero"]:
        np.testing.assert_array_equal(grads["zero"][name], grads["off"][name],
                                      err_msg=name)


def test_modality_ablation_shrinks_model():
    cfg = apply_variant(tiny_cfg(), "-Image")
    model = Model(cfg, n_items=20, n_categories=3, min_timestamp=0,
                  txt_features=tiny_features(20, 5, 4)[0], img_features=None,
                  dtype=np.float64)
    assert model.modalities == ("id", "txt")
    assert "img" not in model.store.frozen
    batch = tiny_batch()
    _, breakdown = model.training_loss(batch, StreamScope(cfg.seed, 0, 0),
                                       training=False)
    assert np.isfinite(breakdown.total)
    assert not any(name.startswith(("proj.img", "enc.img", "pcl.img"))
                   for name in model.params)


def test_alternative_config_paths_run_finite():
    batch = tiny_batch()
    for overrides in (dict(score_space="interactive"),
                      dict(causal=False),
                      dict(train_examples="last_target")):
        model = build_model(tiny_cfg(**overrides))
        _, breakdown = model.training_loss(batch, StreamScope(13, 0, 0),
                                           training=False)
        assert np.isfinite(breakdown.total), overrides


def test_full_model_gradients_match_finite_differences():
    # the acceptance-scale configuration: every trainable tensor, full loss
    model = build_model(tiny_cfg())
    batch = tiny_batch()
    scope = StreamScope(model.cfg.seed, 0, 0)

    def f():
        total, _ = model.training_loss(batch, scope, training=False)
        return total

    names = list(model.params)
    assert any(n.startswith("imoe.") for n in names)
    assert any(n.startswith("tmoe.") for n in names)
    assert any(n.startswith("pcl.") for n in names)
    report = grad_check(f, list(model.params.values()), step=1e-5,
                        tolerance=1e-4)
    assert report.passed, report.format()
