"""Finite-difference verification suites behind the ``gradcheck`` command."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .config import RunConfig
from .data import SequenceBatch
from .encoder import SequenceEncoder
from .features import ParamRegistry
from .gradcheck import GradCheckReport, grad_check
from .losses import cp_loss, idcl_loss, main_loss, pcl_loss
from .model import Model
from .moe import InteractiveMoE, TemporalMoE, absolute_time_embedding, \
    assemble_gate_input
from .rng import StreamScope, derive_rng

MODS = ("id", "txt", "img")


def _const(rng, shape):
    return T.constant(rng.normal(size=shape), dtype=np.float64)


def check_primitives(tolerance: float = 1e-6) -> GradCheckReport:
    rng = derive_rng("check", "primitives")
    reg = ParamRegistry(0, np.float64)
    a = reg.normal("a", (3, 4), std=1.0)
    w = reg.normal("w", (4, 5), std=1.0)
    b = reg.normal("b", (5,), std=1.0)
    g = reg.ones("ln.g", (5,))
    z = reg.zeros("ln.b", (5,))
    probe = _const(rng, (3, 5))

    def f():
        h = T.layer_norm(T.add(T.matmul(a, w), b), g, z)
        h = T.gelu(h)
        h = T.softmax_last_dim(h)
        return T.tensor_sum(T.elementwise_mul(h, probe))

    return grad_check(f, list(reg.tensors.values()), step=1e-6,
                      tolerance=tolerance)


def check_moe(tolerance: float = 1e-4) -> GradCheckReport:
    rng = derive_rng("check", "moe")
    reg = ParamRegistry(1, np.float64)
    d = 8
    imoe = InteractiveMoE(reg, MODS, d, k1=2, alpha_init=0.1)
    tmoe = TemporalMoE(reg, MODS, d, k2=2, p_max=6)
    e = {m: _const(rng, (2, 3, d)) for m in MODS}
    pos = rng.integers(0, 6, size=(2, 3))
    days = rng.random((2, 3)) * 40
    probe = {m: _const(rng, (2, 3, d)) for m in MODS}

    def f():
        e_prime = imoe.forward(e)
        r1 = T.embedding_lookup(tmoe.interval_table, pos)
        r2 = absolute_time_embedding(days, tmoe.l, tmoe.z, 10000.0)
        out = tmoe.forward(e_prime, assemble_gate_input("both", r1, r2))
        total = None
        for m in MODS:
            term = T.tensor_sum(T.elementwise_mul(out[m], probe[m]))
            total = term if total is None else T.add(total, term)
        return total

    return grad_check(f, list(reg.tensors.values()), step=1e-6,
                      tolerance=tolerance)


def check_encoder(tolerance: float = 1e-4) -> GradCheckReport:
    rng = derive_rng("check", "encoder")
    reg = ParamRegistry(2, np.float64)
    enc = SequenceEncoder(reg, "id", d=8, n_layers=1, n_heads=1, dropout=0.0)
    x = _const(rng, (2, 4, 8))
    pad = np.array([[True, False, False, False]] * 2)
    probe = _const(rng, (2, 8))

    def f():
        return T.tensor_sum(T.elementwise_mul(enc.encode(x, pad), probe))

    return grad_check(f, list(reg.tensors.values()), step=1e-6,
                      tolerance=tolerance)


def check_losses(tolerance: float = 1e-4) -> GradCheckReport:
    rng = derive_rng("check", "losses")
    reg = ParamRegistry(3, np.float64)
    B, L, d, C, V = 3, 4, 6, 3, 9
    H = reg.normal("H", (B, d), std=1.0)
    cat = reg.normal("catalog", (V, d), std=1.0)
    targets_vec = reg.normal("targets", (B, d), std=1.0)
    cp_W = reg.normal("cp.W", (d, C), std=1.0)
    cp_b = reg.zeros("cp.b", (C,))
    x = reg.normal("x", (B, L, d), std=1.0)
    labels = (rng.random((B, L, C)) < 0.5).astype(np.float64)
    pad = np.zeros((B, L), dtype=bool)
    pad[0, :2] = True
    target_cols = rng.integers(0, V, size=B)

    def f():
        scores = T.matmul(H, T.transpose_last_two(cat))
        main = main_loss(scores, target_cols)
        cp = cp_loss({"id": x}, cp_W, cp_b, labels, pad, ("id",))
        idcl = idcl_loss(H, targets_vec, tau=0.2)
        pcl = pcl_loss({"txt": (H, targets_vec)})
        return T.add(T.add(main, cp), T.add(idcl, pcl))

    return grad_check(f, list(reg.tensors.values()), step=1e-6,
                      tolerance=tolerance)


def check_full(tolerance: float = 1e-4) -> GradCheckReport:
    cfg = RunConfig(d=8, L=6, n_layers=1, n_heads=1, dropout=0.0, k1=2, k2=2,
                    p_max=8, seed=13, beta=0.4)
    rng = derive_rng("check", "full")
    n_items, n_cat = 20, 3
    txt = np.vstack([np.zeros(5), rng.normal(size=(n_items, 5))])
    img = np.vstack([np.zeros(4), rng.normal(size=(n_items, 4))])
    model = Model(cfg, n_items, n_cat, min_timestamp=0,
                  txt_features=txt, img_features=img, dtype=np.float64)

    B, L = 2, cfg.L
    lengths = np.array([3, 6])
    items = np.zeros((B, L), dtype=np.int64)
    ts = np.zeros((B, L), dtype=np.int64)
    iv = np.zeros((B, L), dtype=np.int64)
    cats = np.zeros((B, L, n_cat), dtype=np.float32)
    for b in range(B):
        n = int(lengths[b])
        seq = rng.integers(1, n_items + 1, size=n)
        stamps = np.sort(rng.integers(0, 3_000_000, size=n))
        items[b, L - n:] = seq
        ts[b, L - n:] = stamps
        iv[b, L - n + 1:] = np.diff(stamps)
        for j, it in enumerate(seq):
            cats[b, L - n + j, int(it) % n_cat] = 1.0
    batch = SequenceBatch(items, ts, iv, lengths,
                          rng.integers(1, n_items + 1, size=B), cats)
    scope = StreamScope(cfg.seed, 0, 0)

    def f():
        total, _ = model.training_loss(batch, scope, training=False)
        return total

    return grad_check(f, list(model.params.values()), step=1e-5,
                      tolerance=tolerance)


SUITES = {
    "primitives": check_primitives,
    "moe": check_moe,
    "encoder": check_encoder,
    "losses": check_losses,
    "full": check_full,
}
