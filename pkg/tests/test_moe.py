"""Interactive and temporal mixtures: routing, residuals, time embeddings."""

from __future__ import annotations

import numpy as np
import pytest

from temporec import tensor as T
from temporec.features import ParamRegistry
from temporec.gradcheck import grad_check
from temporec.moe import (InteractiveMoE, TemporalMoE, absolute_time_embedding,
                          assemble_gate_input, interval_positions)
from temporec.rng import derive_rng
from temporec.tensor import Tensor

MODS = ("id", "txt", "img")


def rand_streams(rng, B=2, L=3, d=4):
    return {m: T.constant(rng.normal(size=(B, L, d)), dtype=np.float64)
            for m in MODS}


def test_alpha_zero_makes_interactive_moe_the_identity():
    reg = ParamRegistry(0, np.float64)
    moe = InteractiveMoE(reg, MODS, d=4, k1=3, alpha_init=0.0)
    e = rand_streams(derive_rng("imoe", 1))
    out = moe.forward(e)
    for m in MODS:
        np.testing.assert_array_equal(out[m].data, e[m].data)


def test_single_expert_routing_is_one():
    reg = ParamRegistry(0, np.float64)
    moe = InteractiveMoE(reg, MODS, d=4, k1=1)
    e = rand_streams(derive_rng("imoe", 2))
    gates = moe.routing(e["txt"], "txt")
    np.testing.assert_allclose(gates.data, np.ones((2, 3, 1)))


def test_equal_logits_average_the_experts_dense_oracle():
    reg = ParamRegistry(3, np.float64)
    d = 4
    moe = InteractiveMoE(reg, MODS, d=d, k1=2, alpha_init=1.0)
    for m in MODS:
        moe.router_W[m].data[...] = 0.0
        moe.router_b[m].data[...] = 0.0
    e = rand_streams(derive_rng("imoe", 3), B=1, L=1, d=d)
    out = moe.forward(e)
    # dense recomputation on the single slot
    e_inter = np.concatenate([e[m].data[0, 0] for m in MODS])
    for m in MODS:
        mix = 0.5 * sum(e_inter @ moe.expert_W[m][i].data + moe.expert_b[m][i].data
                        for i in range(2))
        np.testing.assert_allclose(out[m].data[0, 0], e[m].data[0, 0] + mix,
                                   rtol=1e-12)


def test_router_rows_are_probability_simplices():
    reg = ParamRegistry(1, np.float64)
    moe = InteractiveMoE(reg, MODS, d=4, k1=5)
    tmoe = TemporalMoE(reg, MODS, d=4, k2=3, p_max=10)
    e = rand_streams(derive_rng("imoe", 4))
    gate_in = T.constant(derive_rng("g", 0).normal(size=(2, 3, 8)) * 5,
                         dtype=np.float64)
    for gates in (moe.routing(e["id"], "id"), tmoe.routing(gate_in)):
        assert (gates.data >= 0).all()
        np.testing.assert_allclose(gates.data.sum(axis=-1), 1.0, atol=1e-6)


def test_interval_positions_values_and_monotonicity():
    assert interval_positions(np.array([0]), 100.0, 2200)[0] == 0
    assert interval_positions(np.array([1]), 100.0, 2200)[0] == 69
    assert interval_positions(np.array([10 ** 9]), 100.0, 2200)[0] == 2072
    assert interval_positions(np.array([10 ** 9]), 100.0, 2000)[0] == 1999
    a = np.sort(derive_rng("iv", 0).integers(0, 10 ** 9, size=200))
    pos = interval_positions(a, 100.0, 2200)
    assert (np.diff(pos) >= 0).all()


def test_interval_positions_reject_bad_inputs():
    with pytest.raises(ValueError, match="mu"):
        interval_positions(np.array([1]), 0.0, 10)
    with pytest.raises(ValueError, match="negative"):
        interval_positions(np.array([-1]), 100.0, 10)


def test_absolute_time_embedding_frozen_values():
    d = 4
    l = Tensor(np.ones(d), requires_grad=True, name="l")
    z = Tensor(np.zeros(d), requires_grad=True, name="z")
    t = np.array([[1.0]])
    out = absolute_time_embedding(t, l, z, freq=10000.0)
    expected = [np.cos(1.0), 0.995004165278, 0.999950000417, 0.9999995]
    np.testing.assert_allclose(out.data[0, 0], expected, rtol=1e-9)


def test_absolute_time_embedding_limits():
    d = 6
    l = Tensor(np.ones(d))
    z = Tensor(np.zeros(d))
    np.testing.assert_allclose(
        absolute_time_embedding(np.zeros((2, 3)), l, z, 100.0).data, 1.0)
    z_quarter = Tensor(np.full(d, np.pi / 2))
    np.testing.assert_allclose(
        absolute_time_embedding(np.zeros((1, 1)), l, z_quarter, 100.0).data,
        0.0, atol=1e-6)
    t = derive_rng("abs", 0).random((3, 4)) * 5000
    out = absolute_time_embedding(t, l, z, 10000.0).data
    assert (out >= -1).all() and (out <= 1).all()


def test_temporal_single_unit_expert_is_identity():
    reg = ParamRegistry(0, np.float64)
    tmoe = TemporalMoE(reg, MODS, d=4, k2=1, p_max=10)
    tmoe.experts[0].data[...] = 1.0
    e = rand_streams(derive_rng("tmoe", 1))
    gate_in = T.constant(np.zeros((2, 3, 8)), dtype=np.float64)
    out = tmoe.forward(e, gate_in)
    for m in MODS:
        np.testing.assert_allclose(out[m].data, e[m].data, rtol=1e-12)


def test_temporal_routing_ignores_content():
    reg = ParamRegistry(2, np.float64)
    tmoe = TemporalMoE(reg, MODS, d=4, k2=3, p_max=10)
    gate_in = T.constant(derive_rng("t", 2).normal(size=(2, 3, 8)),
                         dtype=np.float64)
    a = tmoe.forward(rand_streams(derive_rng("c", 0)), gate_in)
    gates = tmoe.routing(gate_in)
    gates_again = tmoe.routing(gate_in)
    np.testing.assert_array_equal(gates.data, gates_again.data)
    # identical time rows -> identical routing even with different content
    same_time = T.constant(np.broadcast_to(gate_in.data[:, :1], (2, 3, 8)).copy(),
                           dtype=np.float64)
    rows = tmoe.routing(same_time).data
    np.testing.assert_array_equal(rows[:, 0], rows[:, 1])
    np.testing.assert_array_equal(rows[:, 0], rows[:, 2])
    del a


def test_temporal_two_expert_mix_coordinatewise_oracle():
    reg = ParamRegistry(5, np.float64)
    d = 3
    tmoe = TemporalMoE(reg, MODS, d=d, k2=2, p_max=10)
    e = rand_streams(derive_rng("tm", 3), B=1, L=1, d=d)
    # router weights chosen so the gate lands on [0.3, 0.7]
    gate = np.log(np.array([0.3, 0.7]))
    tmoe.router_W.data[...] = 0.0
    tmoe.router_b.data[...] = gate
    out = tmoe.forward(e, T.constant(np.zeros((1, 1, 2 * d)), dtype=np.float64))
    e_temp = np.concatenate([e[m].data[0, 0] for m in MODS])
    expected = (0.3 * tmoe.experts[0].data * e_temp
                + 0.7 * tmoe.experts[1].data * e_temp)
    got = np.concatenate([out[m].data[0, 0] for m in MODS])
    np.testing.assert_allclose(got, expected, rtol=1e-12)


def test_gate_input_variants():
    rng = derive_rng("var", 0)
    r1 = T.constant(rng.normal(size=(1, 2, 3)), dtype=np.float64)
    r2 = T.constant(rng.normal(size=(1, 2, 3)), dtype=np.float64)
    cos_iv = T.constant(np.ones((1, 2, 3)), dtype=np.float64)
    both = assemble_gate_input("both", r1, r2)
    np.testing.assert_array_equal(both.data,
                                  np.concatenate([r1.data, r2.data], axis=-1))
    interval = assemble_gate_input("interval_only", r1, r2)
    np.testing.assert_array_equal(interval.data[..., 3:], 0.0)
    np.testing.assert_array_equal(interval.data[..., :3], r1.data)
    absolute = assemble_gate_input("absolute_only", r1, r2)
    np.testing.assert_array_equal(absolute.data[..., :3], 0.0)
    cos_variant = assemble_gate_input("cos_interval", r1, r2, cos_iv)
    np.testing.assert_array_equal(cos_variant.data[..., :3], 1.0)
    with pytest.raises(ValueError, match="unknown"):
        assemble_gate_input("day_of_year", r1, r2)


def test_moe_gradients_match_finite_differences():
    reg = ParamRegistry(11, np.float64)
    d, k = 8, 2
    moe = InteractiveMoE(reg, MODS, d=d, k1=k, alpha_init=0.1)
    tmoe = TemporalMoE(reg, MODS, d=d, k2=k, p_max=6)
    rng = derive_rng("moe-fd", 0)
    e = {m: T.constant(rng.normal(size=(2, 3, d)), dtype=np.float64) for m in MODS}
    pos = rng.integers(0, 6, size=(2, 3))
    t_days = rng.random((2, 3)) * 30
    probe = {m: T.constant(rng.normal(size=(2, 3, d)), dtype=np.float64)
             for m in MODS}

    def f():
        e_prime = moe.forward(e)
        r1 = T.embedding_lookup(tmoe.interval_table, pos)
        r2 = absolute_time_embedding(t_days, tmoe.l, tmoe.z, 10000.0)
        out = tmoe.forward(e_prime, assemble_gate_input("both", r1, r2))
        pieces = [T.tensor_sum(T.elementwise_mul(out[m], probe[m])) for m in MODS]
        return T.add(T.add(pieces[0], pieces[1]), pieces[2])

    report = grad_check(f, list(reg.tensors.values()), step=1e-6, tolerance=1e-4)
    assert report.passed, report.format()
