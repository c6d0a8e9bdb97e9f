"""Initial item representations: trainable ID embeddings, frozen modality
features behind trainable projections, and shared position embeddings."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .rng import derive_rng
from .tensor import Tensor


class ParamRegistry:
    """Creates and owns every trainable tensor, keyed by canonical name.

    Initialization draws are keyed per tensor name so the values do not
    depend on creation order.
    """

    def __init__(self, seed: int, dtype=np.float32):
        self.seed = seed
        self.dtype = dtype
        self.tensors: dict[str, Tensor] = {}

    def _register(self, name: str, values: np.ndarray) -> Tensor:
        if name in self.tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(values.astype(self.dtype), requires_grad=True, name=name)
        self.tensors[name] = t
        return t

    def normal(self, name: str, shape: tuple[int, ...], std: float = 0.02) -> Tensor:
        rng = derive_rng("init", self.seed, name)
        return self._register(name, rng.normal(0.0, std, size=shape))

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self._register(name, np.zeros(shape))

    def ones(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self._register(name, np.ones(shape))

    def full(self, name: str, shape: tuple[int, ...], value: float) -> Tensor:
        return self._register(name, np.full(shape, value))

    def unit_normal(self, name: str, shape: tuple[int, ...],
                    std: float = 0.02) -> Tensor:
        rng = derive_rng("init", self.seed, name)
        return self._register(name, 1.0 + rng.normal(0.0, std, size=shape))


class FeatureStore:
    """ID embedding table plus frozen text/image feature matrices.

    Row 0 of every table is the padding row and stays zero; the frozen
    matrices never require gradients.
    """

    def __init__(self, registry: ParamRegistry, n_items: int, d: int,
                 txt_features: np.ndarray | None = None,
                 img_features: np.ndarray | None = None):
        self.n_items = n_items
        self.d = d
        self.id_table = registry.normal("embed.id_table", (n_items + 1, d))
        self.id_table.data[0] = 0.0
        self.frozen: dict[str, Tensor] = {}
        for name, matrix in (("txt", txt_features), ("img", img_features)):
            if matrix is None:
                continue
            if matrix.shape[0] != n_items + 1:
                raise ValueError(
                    f"{name} features have {matrix.shape[0]} rows for "
                    f"{n_items} items (+1 padding row)")
            self.frozen[name] = T.constant(matrix, dtype=registry.dtype)

    @property
    def modalities(self) -> tuple[str, ...]:
        return ("id", *self.frozen.keys())

    def feature_dim(self, modality: str) -> int:
        return self.frozen[modality].shape[1]


class ProjectionHeads:
    """Per-modality linear maps into the shared width, plus position rows."""

    def __init__(self, registry: ParamRegistry, store: FeatureStore, d: int, L: int):
        self.d = d
        self.L = L
        self.W: dict[str, Tensor] = {}
        self.b: dict[str, Tensor] = {}
        for m in store.frozen:
            self.W[m] = registry.normal(f"proj.{m}.W", (store.feature_dim(m), d))
            self.b[m] = registry.zeros(f"proj.{m}.b", (d,))
        self.pos_table = registry.normal("embed.pos_table", (L, d))


def project_features(store: FeatureStore, heads: ProjectionHeads,
                     item_indices: np.ndarray) -> dict[str, Tensor]:
    """Per-modality (B, L, d) representations for an index matrix.

    Padding rows map to zero ID vectors and zero frozen features, so the
    projected text/image value at a pad slot is just the bias (masked later).
    """
    out = {"id": T.embedding_lookup(store.id_table, item_indices)}
    for m, frozen in store.frozen.items():
        raw = T.embedding_lookup(frozen, item_indices)
        out[m] = T.add(T.matmul(raw, heads.W[m]), heads.b[m])
    return out


def add_position(x_m: Tensor, heads: ProjectionHeads) -> Tensor:
    """Shift every slot by its position row (shared across modalities)."""
    B, L = x_m.shape[0], x_m.shape[1]
    if L > heads.L:
        raise ValueError(f"sequence length {L} exceeds position table {heads.L}")
    positions = np.broadcast_to(np.arange(L, dtype=np.int64), (B, L))
    return T.add(x_m, T.embedding_lookup(heads.pos_table, positions))


def catalog_vectors(store: FeatureStore, heads: ProjectionHeads,
                    candidates: np.ndarray) -> dict[str, Tensor]:
    """Prediction-side item vectors (initial representations) per modality."""
    if np.any(candidates == 0):
        raise ValueError("catalog scoring rejects the padding index 0")
    out = {"id": T.embedding_lookup(store.id_table, candidates)}
    for m, frozen in store.frozen.items():
        raw = T.embedding_lookup(frozen, candidates)
        out[m] = T.add(T.matmul(raw, heads.W[m]), heads.b[m])
    return out
