"""Two-level mixture of experts.

Level one routes each modality's slot vector to experts that read the full
cross-modal concatenation; level two routes purely on time embeddings and
applies per-coordinate scaling experts to the concatenated streams.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .features import ParamRegistry
from .tensor import Tensor


def _tile(weights: Tensor, n: int, dtype) -> Tensor:
    """Broadcast (B, L, 1) routing weights across an n-wide feature axis."""
    ones = T.constant(np.ones((1, n)), dtype=dtype)
    return T.matmul(weights, ones)


def _mix_experts(gates: Tensor, expert_outputs: list[Tensor], dtype) -> Tensor:
    k = len(expert_outputs)
    width = expert_outputs[0].shape[-1]
    pieces = T.split_last_dim(gates, [1] * k)
    mixed = None
    for piece, out in zip(pieces, expert_outputs):
        term = T.elementwise_mul(out, _tile(piece, width, dtype))
        mixed = term if mixed is None else T.add(mixed, term)
    return mixed


class InteractiveMoE:
    """Cross-modal key-feature extraction with residual output."""

    def __init__(self, registry: ParamRegistry, modalities: tuple[str, ...],
                 d: int, k1: int, alpha_init: float = 0.1):
        if k1 < 1:
            raise ValueError(f"interactive MoE needs k1 >= 1, got {k1}")
        self.modalities = modalities
        self.d = d
        self.k1 = k1
        self.dtype = registry.dtype
        joint = len(modalities) * d
        self.alpha = {m: registry.full(f"imoe.{m}.alpha", (1,), alpha_init)
                      for m in modalities}
        self.router_W = {m: registry.normal(f"imoe.{m}.router.W", (d, k1))
                         for m in modalities}
        self.router_b = {m: registry.zeros(f"imoe.{m}.router.b", (k1,))
                         for m in modalities}
        self.expert_W = {m: [registry.normal(f"imoe.{m}.expert{i}.W", (joint, d))
                             for i in range(k1)] for m in modalities}
        self.expert_b = {m: [registry.zeros(f"imoe.{m}.expert{i}.b", (d,))
                             for i in range(k1)] for m in modalities}

    def routing(self, e_m: Tensor, m: str) -> Tensor:
        return T.softmax_last_dim(
            T.add(T.matmul(e_m, self.router_W[m]), self.router_b[m]))

    def forward(self, e: dict[str, Tensor]) -> dict[str, Tensor]:
        e_inter = T.concat_last_dim([e[m] for m in self.modalities])
        out = {}
        for m in self.modalities:
            gates = self.routing(e[m], m)
            expert_outs = [T.add(T.matmul(e_inter, W), b)
                           for W, b in zip(self.expert_W[m], self.expert_b[m])]
            mixed = _mix_experts(gates, expert_outs, self.dtype)
            out[m] = T.add(e[m], T.scale(mixed, self.alpha[m]))
        return out


def interval_positions(intervals: np.ndarray, mu: float, p_max: int) -> np.ndarray:
    """Log-compressed interval buckets: floor(mu * ln(a + 1)), clamped."""
    if mu <= 0:
        raise ValueError(f"interval_positions: mu must be positive, got {mu}")
    a = np.asarray(intervals)
    if np.any(a < 0):
        raise ValueError("interval_positions: negative interval")
    pos = np.floor(mu * np.log(a.astype(np.float64) + 1.0)).astype(np.int64)
    return np.minimum(pos, p_max - 1)


def absolute_time_embedding(t: np.ndarray, l: Tensor, z: Tensor,
                            freq: float) -> Tensor:
    """Trainable cosine features of a (B, L) time matrix -> (B, L, d).

    Coordinate i evaluates cos(l_i * t / freq^(i/d) + z_i); everything lands
    in [-1, 1] and is differentiable in l and z.
    """
    if freq <= 1:
        raise ValueError(f"absolute_time_embedding: freq must exceed 1, got {freq}")
    d = l.shape[0]
    dtype = l.dtype
    scales = freq ** (-np.arange(d, dtype=np.float64) / d)
    base = T.constant(t[..., None].astype(np.float64) * scales, dtype=dtype)
    return T.cos(T.add(T.elementwise_mul(base, l), z))


def assemble_gate_input(variant: str, r1: Tensor, r2: Tensor,
                        cos_interval: Tensor | None = None) -> Tensor:
    """Router input for the temporal level, shaped (B, L, 2d) in every mode."""
    zeros = T.constant(np.zeros(r1.shape), dtype=r1.dtype)
    if variant == "both":
        return T.concat_last_dim([r1, r2])
    if variant == "interval_only":
        return T.concat_last_dim([r1, zeros])
    if variant == "absolute_only":
        return T.concat_last_dim([zeros, r2])
    if variant == "cos_interval":
        if cos_interval is None:
            raise ValueError("cos_interval variant needs the cosine interval block")
        return T.concat_last_dim([cos_interval, r2])
    raise ValueError(f"unknown time embedding variant {variant!r}")


class TemporalMoE:
    """Time-routed per-coordinate scaling over the concatenated streams."""

    def __init__(self, registry: ParamRegistry, modalities: tuple[str, ...],
                 d: int, k2: int, p_max: int):
        if k2 < 1:
            raise ValueError(f"temporal MoE needs k2 >= 1, got {k2}")
        self.modalities = modalities
        self.d = d
        self.k2 = k2
        self.p_max = p_max
        self.dtype = registry.dtype
        joint = len(modalities) * d
        self.interval_table = registry.normal("tmoe.interval_table", (p_max, d))
        self.l = registry.ones("tmoe.abs.l", (d,))
        self.z = registry.zeros("tmoe.abs.z", (d,))
        self.router_W = registry.normal("tmoe.router.W", (2 * d, k2))
        self.router_b = registry.zeros("tmoe.router.b", (k2,))
        # multiplicative experts start near the identity: zero-mean init would
        # randomly sign-flip content coordinates before the encoders see them
        self.experts = [registry.unit_normal(f"tmoe.expert{i}.w", (joint,))
                        for i in range(k2)]

    def routing(self, gate_input: Tensor) -> Tensor:
        return T.softmax_last_dim(
            T.add(T.matmul(gate_input, self.router_W), self.router_b))

    def forward(self, e_prime: dict[str, Tensor],
                gate_input: Tensor) -> dict[str, Tensor]:
        gates = self.routing(gate_input)
        e_temp = T.concat_last_dim([e_prime[m] for m in self.modalities])
        expert_outs = [T.elementwise_mul(e_temp, w) for w in self.experts]
        mixed = _mix_experts(gates, expert_outs, self.dtype)
        chunks = T.split_last_dim(mixed, [self.d] * len(self.modalities))
        return dict(zip(self.modalities, chunks))
