"""Per-modality Transformer encoders with causal and padding masks."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .features import ParamRegistry
from .rng import StreamScope
from .tensor import Tensor

MASK_FILL = -1e9  # finite so fully-masked pad rows stay NaN-free


class SequenceEncoder:
    """Stacked self-attention blocks reading out the last (valid) position.

    Sequences are right-aligned, so the newest item always occupies the final
    slot; attention never looks into padding, and with ``causal`` it never
    looks ahead either.
    """

    def __init__(self, registry: ParamRegistry, name: str, d: int,
                 n_layers: int, n_heads: int, dropout: float,
                 causal: bool = True):
        if d % n_heads != 0:
            raise ValueError(f"d={d} not divisible by n_heads={n_heads}")
        self.name = name
        self.d = d
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.head_dim = d // n_heads
        self.dropout = dropout
        self.causal = causal
        p = f"enc.{name}"
        self.pre_ln = (registry.ones(f"{p}.pre_ln.g", (d,)),
                       registry.zeros(f"{p}.pre_ln.b", (d,)))
        self.layers = []
        for j in range(n_layers):
            q = f"{p}.layer{j}"
            self.layers.append({
                "Wq": registry.normal(f"{q}.attn.Wq", (d, d)),
                "bq": registry.zeros(f"{q}.attn.bq", (d,)),
                "Wk": registry.normal(f"{q}.attn.Wk", (d, d)),
                "bk": registry.zeros(f"{q}.attn.bk", (d,)),
                "Wv": registry.normal(f"{q}.attn.Wv", (d, d)),
                "bv": registry.zeros(f"{q}.attn.bv", (d,)),
                "Wo": registry.normal(f"{q}.attn.Wo", (d, d)),
                "bo": registry.zeros(f"{q}.attn.bo", (d,)),
                "ln1": (registry.ones(f"{q}.ln1.g", (d,)),
                        registry.zeros(f"{q}.ln1.b", (d,))),
                "W1": registry.normal(f"{q}.ffn.W1", (d, 4 * d)),
                "b1": registry.zeros(f"{q}.ffn.b1", (4 * d,)),
                "W2": registry.normal(f"{q}.ffn.W2", (4 * d, d)),
                "b2": registry.zeros(f"{q}.ffn.b2", (d,)),
                "ln2": (registry.ones(f"{q}.ln2.g", (d,)),
                        registry.zeros(f"{q}.ln2.b", (d,))),
            })

    def _attention_mask(self, pad_mask: np.ndarray) -> np.ndarray:
        B, L = pad_mask.shape
        blocked = np.broadcast_to(pad_mask[:, None, :], (B, L, L)).copy()
        if self.causal:
            blocked |= np.triu(np.ones((L, L), dtype=bool), k=1)
        return blocked

    def _dropout(self, x: Tensor, training: bool, scope: StreamScope | None,
                 label: str) -> Tensor:
        if not training or self.dropout == 0.0:
            return x
        if scope is None:
            raise ValueError("training-mode encoder needs a stream scope")
        return T.dropout(x, self.dropout, True, scope.rng(label))

    def hidden_states(self, x: Tensor, pad_mask: np.ndarray,
                      training: bool = False,
                      scope: StreamScope | None = None,
                      tag: str = "main") -> Tensor:
        """(B, L, d) sequence plus pad mask -> (B, L, d) per-position states."""
        if pad_mask.all(axis=1).any():
            raise ValueError("encode: a row is entirely padding")
        p = f"enc.{self.name}"
        L = x.shape[1]
        mask = self._attention_mask(pad_mask)
        inv_sqrt = 1.0 / np.sqrt(self.head_dim)

        h = T.layer_norm(x, *self.pre_ln)
        h = self._dropout(h, training, scope, f"{p}.in.{tag}")
        for j, layer in enumerate(self.layers):
            q = T.add(T.matmul(h, layer["Wq"]), layer["bq"])
            k = T.add(T.matmul(h, layer["Wk"]), layer["bk"])
            v = T.add(T.matmul(h, layer["Wv"]), layer["bv"])
            sizes = [self.head_dim] * self.n_heads
            head_outs = []
            for qh, kh, vh in zip(T.split_last_dim(q, sizes),
                                  T.split_last_dim(k, sizes),
                                  T.split_last_dim(v, sizes)):
                scores = T.scale(T.matmul(qh, T.transpose_last_two(kh)), inv_sqrt)
                weights = T.softmax_last_dim(T.masked_fill(scores, mask, MASK_FILL))
                head_outs.append(T.matmul(weights, vh))
            attn = T.add(T.matmul(T.concat_last_dim(head_outs), layer["Wo"]),
                         layer["bo"])
            attn = self._dropout(attn, training, scope, f"{p}.layer{j}.attn.{tag}")
            h = T.layer_norm(T.add(h, attn), *layer["ln1"])

            ffn = T.add(T.matmul(T.gelu(T.add(T.matmul(h, layer["W1"]),
                                              layer["b1"])),
                                 layer["W2"]),
                        layer["b2"])
            ffn = self._dropout(ffn, training, scope, f"{p}.layer{j}.ffn.{tag}")
            h = T.layer_norm(T.add(h, ffn), *layer["ln2"])
        return h

    def encode(self, x: Tensor, pad_mask: np.ndarray, training: bool = False,
               scope: StreamScope | None = None, tag: str = "main") -> Tensor:
        """(B, L, d) sequence plus pad mask -> (B, d) last-position state.

        Right-alignment puts the newest valid item in slot L-1, so the
        readout position is uniform across the batch.
        """
        h = self.hidden_states(x, pad_mask, training, scope, tag)
        L = x.shape[1]
        last = np.zeros(L)
        last[L - 1] = 1.0
        pick = T.constant(last, dtype=x.dtype)
        return T.tensor_sum(T.elementwise_mul(T.transpose_last_two(h), pick),
                            axis=-1)
