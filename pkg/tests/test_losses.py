"""Objectives: closed forms, invariances, augmentation, weighted combination."""

from __future__ import annotations

import numpy as np
import pytest

from temporec import tensor as T
from temporec import losses as LS
from temporec.rng import derive_rng
from temporec.tensor import Tape, Tensor, backward


def const(data):
    return T.constant(np.asarray(data, dtype=np.float64), dtype=np.float64)


def var(data, name="w"):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True, name=name)


# -- main loss ----------------------------------------------------------------

def test_main_loss_uniform_scores_is_log_catalog_size():
    scores = const(np.zeros((3, 20)))
    loss = LS.main_loss(scores, np.array([0, 7, 19]))
    assert loss.item() == pytest.approx(np.log(20), abs=1e-5)


def test_main_loss_saturates_at_zero():
    scores = np.zeros((1, 10))
    scores[0, 4] = 1000.0
    assert LS.main_loss(const(scores), np.array([4])).item() == pytest.approx(0.0, abs=1e-9)


def test_main_loss_frozen_value():
    loss = LS.main_loss(const([[1.0, 2.0, 3.0]]), np.array([2]))
    assert loss.item() == pytest.approx(0.407605964444, abs=1e-9)


def test_main_loss_decreases_when_target_score_rises():
    base = np.array([[0.3, -0.2, 0.9, 0.0]])
    lo = LS.main_loss(const(base), np.array([1])).item()
    base[0, 1] += 0.5
    hi = LS.main_loss(const(base), np.array([1])).item()
    assert hi < lo


def test_main_loss_rejects_bad_target():
    with pytest.raises(ValueError, match="out of range"):
        LS.main_loss(const(np.zeros((1, 5))), np.array([5]))


# -- category prediction -------------------------------------------------------

def _cp_inputs(logits, labels, pad):
    B, L, C = logits.shape
    d = 2
    x = {"id": const(np.zeros((B, L, d)))}
    W = const(np.zeros((d, C)))
    b = var(np.zeros(C), "cp.b")
    b.data[...] = 0.0
    return x, W, b


def test_cp_loss_zero_logits_symmetry():
    # one valid slot, 4 categories, zero logits -> 4 ln 2 whatever the labels
    labels = np.array([[[1.0, 0.0, 1.0, 0.0]]])
    pad = np.array([[False]])
    x = {"id": const(np.zeros((1, 1, 2)))}
    W, b = const(np.zeros((2, 4))), const(np.zeros(4))
    loss = LS.cp_loss(x, W, b, labels, pad, ("id",))
    assert loss.item() == pytest.approx(2.77258872224, abs=1e-5)
    other = LS.cp_loss(x, W, b, np.array([[[0.0, 1.0, 1.0, 1.0]]]), pad, ("id",))
    assert other.item() == pytest.approx(loss.item(), abs=1e-12)


def test_cp_loss_confident_and_correct_approaches_zero():
    labels = np.array([[[1.0, 0.0]]])
    pad = np.array([[False]])
    x = {"id": const(np.ones((1, 1, 1)))}
    W = const(np.array([[40.0, -40.0]]))
    b = const(np.zeros(2))
    loss = LS.cp_loss(x, W, b, labels, pad, ("id",))
    assert loss.item() == pytest.approx(0.0, abs=1e-9)


def test_cp_loss_frozen_probability_pair():
    # probabilities (0.9, 0.2) with labels (1, 0): -ln0.9 - ln0.8
    logits = np.array([np.log(9.0), np.log(0.25)])
    x = {"id": const(np.ones((1, 1, 1)))}
    W = const(logits[None, :])
    b = const(np.zeros(2))
    labels = np.array([[[1.0, 0.0]]])
    loss = LS.cp_loss(x, W, b, labels, np.array([[False]]), ("id",))
    assert loss.item() == pytest.approx(0.328504066972, abs=1e-9)


def test_cp_loss_pad_slots_contribute_nothing():
    rng = derive_rng("cp", 0)
    B, L, C, d = 2, 4, 3, 5
    x_data = rng.normal(size=(B, L, d))
    labels = (rng.random((B, L, C)) < 0.4).astype(np.float64)
    pad = np.array([[True, True, False, False],
                    [False, False, False, False]])
    W, b = const(rng.normal(size=(d, C))), const(rng.normal(size=C))
    base = LS.cp_loss({"id": const(x_data)}, W, b, labels, pad, ("id",)).item()
    poked = x_data.copy()
    poked[0, 0] = 77.0
    poked_labels = labels.copy()
    poked_labels[0, 1] = 1.0
    again = LS.cp_loss({"id": const(poked)}, W, b, poked_labels, pad, ("id",)).item()
    assert again == base


# -- contrastive losses ---------------------------------------------------------

def test_idcl_single_row_batch_is_exactly_zero():
    H = const([[1.0, 2.0]])
    assert LS.idcl_loss(H, H, tau=0.5).item() == 0.0


def test_idcl_frozen_orthonormal_value():
    H = const(np.eye(2))
    loss = LS.idcl_loss(H, H, tau=1.0)
    assert loss.item() == pytest.approx(0.313261687518, abs=1e-9)


def test_idcl_scale_invariance():
    rng = derive_rng("idcl", 1)
    H = rng.normal(size=(4, 6))
    X = rng.normal(size=(4, 6))
    base = LS.idcl_loss(const(H), const(X), tau=0.2).item()
    H2, X2 = H.copy(), X.copy()
    H2[1] *= 37.0
    X2[2] *= 0.003
    scaled = LS.idcl_loss(const(H2), const(X2), tau=0.2).item()
    assert scaled == pytest.approx(base, rel=1e-9)


def test_idcl_joint_permutation_invariance():
    rng = derive_rng("idcl", 2)
    H = rng.normal(size=(5, 4))
    X = rng.normal(size=(5, 4))
    perm = np.array([3, 0, 4, 2, 1])
    base = LS.idcl_loss(const(H), const(X), tau=0.3).item()
    moved = LS.idcl_loss(const(H[perm]), const(X[perm]), tau=0.3).item()
    assert moved == pytest.approx(base, rel=1e-9)


def test_pcl_loss_single_row_and_identical_views():
    H = const([[0.3, -0.4]])
    assert LS.pcl_loss({"txt": (H, H)}).item() == 0.0
    H2 = const(np.eye(2))
    loss = LS.pcl_loss({"txt": (H2, H2), "img": (H2, H2)})
    assert loss.item() == pytest.approx(0.313261687518, abs=1e-9)
    sims = T.cosine_similarity(H2, H2).data
    np.testing.assert_allclose(np.diag(sims), 1.0, atol=1e-6)


# -- placeholder augmentation ----------------------------------------------------

def _aug_setup(B=2, L=6, d=4, beta=0.5, lengths=(4, 6)):
    rng = derive_rng("aug", 0)
    streams = {m: const(rng.normal(size=(B, L, d))) for m in ("txt", "img")}
    r1 = const(rng.normal(size=(B, L, d)))
    r2 = const(rng.normal(size=(B, L, d)))
    W = {m: const(rng.normal(size=(2 * d, d))) for m in ("txt", "img")}
    b = {m: const(rng.normal(size=d)) for m in ("txt", "img")}
    return streams, r1, r2, W, b, np.array(lengths)


def test_pcl_augment_beta_zero_is_bitwise_identity():
    streams, r1, r2, W, b, lengths = _aug_setup(beta=0.0)
    out, mask = LS.pcl_augment(streams, r1, r2, W, b, 0.0, lengths,
                               derive_rng("a", 1))
    assert not mask.any()
    for m in streams:
        assert out[m] is streams[m]


def test_pcl_augment_replaces_expected_count_at_same_positions():
    streams, r1, r2, W, b, lengths = _aug_setup()
    out, mask = LS.pcl_augment(streams, r1, r2, W, b, 0.5, lengths,
                               derive_rng("a", 2))
    assert mask[0].sum() == 2 and mask[1].sum() == 3
    assert not mask[0, :2].any()  # replacements stay inside the valid region
    for m in ("txt", "img"):
        changed = np.any(out[m].data != streams[m].data, axis=-1)
        np.testing.assert_array_equal(changed, mask)


def test_pcl_augment_zero_head_writes_constant():
    streams, r1, r2, W, b, lengths = _aug_setup()
    W = {m: const(np.zeros((8, 4))) for m in W}
    b = {m: const(np.full(4, 2.5)) for m in b}
    out, mask = LS.pcl_augment(streams, r1, r2, W, b, 0.5, lengths,
                               derive_rng("a", 3))
    for m in out:
        replaced = out[m].data[mask]
        np.testing.assert_allclose(replaced, 2.5)


def test_pcl_augment_is_seed_deterministic():
    streams, r1, r2, W, b, lengths = _aug_setup()
    _, m1 = LS.pcl_augment(streams, r1, r2, W, b, 0.4, lengths, derive_rng("s", 7))
    _, m2 = LS.pcl_augment(streams, r1, r2, W, b, 0.4, lengths, derive_rng("s", 7))
    np.testing.assert_array_equal(m1, m2)


# -- combination -------------------------------------------------------------------

def test_total_loss_zero_weights_return_main_object():
    main = const(1.25)
    total = LS.total_loss(main, const(9.0), const(9.0), const(9.0), 0.0, 0.0, 0.0)
    assert total is main


def test_total_loss_arithmetic():
    total = LS.total_loss(const(1.0), const(1.0), const(1.0), const(1.0),
                          1.0, 1.0, 1.0)
    assert total.item() == pytest.approx(4.0)
    mixed = LS.total_loss(const(0.5), const(2.0), const(0.3), const(0.4),
                          1.0, 0.5, 0.5)
    assert mixed.item() == pytest.approx(2.85, abs=1e-9)


def test_total_loss_rejects_negative_weights():
    with pytest.raises(ValueError, match="lambda2"):
        LS.total_loss(const(1.0), None, None, None, 1.0, -0.1, 0.0)


def test_zero_weight_gradients_equal_term_skipped():
    w = var(np.array([0.4, -0.3]), "w")

    def main_term():
        return T.tensor_sum(T.elementwise_mul(w, w))

    def aux_term():
        return T.tensor_sum(T.exp(w))

    with Tape():
        backward(LS.total_loss(main_term(), aux_term(), None, None,
                               0.0, 0.0, 0.0))
    g_zero_weight = w.grad.copy()
    w.zero_grad()
    with Tape():
        backward(main_term())
    np.testing.assert_array_equal(g_zero_weight, w.grad)
