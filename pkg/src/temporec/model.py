"""Full model assembly: representations -> MoE levels -> encoders -> scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import RunConfig
from .data import SequenceBatch
from .encoder import SequenceEncoder
from .features import (FeatureStore, ParamRegistry, ProjectionHeads,
                       add_position, catalog_vectors, project_features)
from .losses import (LossBreakdown, cp_loss, idcl_loss, main_loss, pcl_augment,
                     pcl_loss, total_loss)
from .moe import (InteractiveMoE, TemporalMoE, absolute_time_embedding,
                  assemble_gate_input, interval_positions)
from .rng import StreamScope, derive_rng
from .tensor import Tensor

DAY_SECONDS = 86400.0


@dataclass
class ForwardState:
    x_init: dict[str, Tensor]
    streams: dict[str, Tensor]
    H: dict[str, Tensor]
    r1: Tensor | None
    r2: Tensor | None


class Model:
    """Trainable state and forward passes for one run configuration."""

    def __init__(self, cfg: RunConfig, n_items: int, n_categories: int,
                 min_timestamp: int,
                 txt_features: np.ndarray | None = None,
                 img_features: np.ndarray | None = None,
                 dtype=np.float32):
        if cfg.use_text and txt_features is None:
            raise ValueError("config enables text but no text features were given")
        if cfg.use_image and img_features is None:
            raise ValueError("config enables images but no image features were given")
        self.cfg = cfg
        self.n_items = n_items
        self.n_categories = n_categories
        self.min_timestamp = min_timestamp
        self.dtype = dtype
        self.modalities = cfg.modalities

        reg = ParamRegistry(cfg.seed, dtype)
        self.registry = reg
        self.store = FeatureStore(
            reg, n_items, cfg.d,
            txt_features=txt_features if cfg.use_text else None,
            img_features=img_features if cfg.use_image else None)
        self.heads = ProjectionHeads(reg, self.store, cfg.d, cfg.L)
        self.imoe = (InteractiveMoE(reg, self.modalities, cfg.d, cfg.k1,
                                    cfg.alpha_init)
                     if cfg.enable_imoe else None)
        self.tmoe = (TemporalMoE(reg, self.modalities, cfg.d, cfg.k2, cfg.p_max)
                     if cfg.enable_tmoe else None)
        self.encoders = {m: SequenceEncoder(reg, m, cfg.d, cfg.n_layers,
                                            cfg.n_heads, cfg.dropout, cfg.causal)
                         for m in self.modalities}

        joint = len(self.modalities) * cfg.d
        if cfg.enable_cp:
            self.cp_W = reg.normal("cp.W", (joint, n_categories))
            self.cp_b = reg.zeros("cp.b", (n_categories,))
        else:
            self.cp_W = self.cp_b = None

        self.pcl_modalities = tuple(m for m in self.modalities if m != "id")
        if cfg.enable_pcl and cfg.enable_tmoe and self.pcl_modalities:
            self.pcl_W = {m: reg.normal(f"pcl.{m}.W", (2 * cfg.d, cfg.d))
                          for m in self.pcl_modalities}
            self.pcl_b = {m: reg.zeros(f"pcl.{m}.b", (cfg.d,))
                          for m in self.pcl_modalities}
        else:
            self.pcl_W = self.pcl_b = None

    @property
    def params(self) -> dict[str, Tensor]:
        return self.registry.tensors

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def mask_padding_grad(self) -> None:
        # keep the padding row of the ID table frozen at zero
        grad = self.store.id_table.grad
        if grad is not None:
            grad[0] = 0.0

    # -- time channels -----------------------------------------------------

    def normalized_times(self, batch: SequenceBatch) -> np.ndarray:
        """Days since corpus start per slot, zero at padding."""
        t = (batch.timestamps - self.min_timestamp) / DAY_SECONDS
        return np.where(batch.pad_mask, 0.0, t)

    def time_embeddings(self, batch: SequenceBatch) -> tuple[Tensor, Tensor, Tensor]:
        """(r1, r2, router input) for the temporal level."""
        assert self.tmoe is not None
        cfg = self.cfg
        intervals = np.where(batch.pad_mask, 0, batch.intervals)
        pos = interval_positions(intervals, cfg.mu, cfg.p_max)
        r1 = T.embedding_lookup(self.tmoe.interval_table, pos)
        r2 = absolute_time_embedding(self.normalized_times(batch),
                                     self.tmoe.l, self.tmoe.z, cfg.freq)
        cos_iv = None
        if cfg.time_variant == "cos_interval":
            cos_iv = absolute_time_embedding(intervals / DAY_SECONDS,
                                             self.tmoe.l, self.tmoe.z, cfg.freq)
        gate_input = assemble_gate_input(cfg.time_variant, r1, r2, cos_iv)
        return r1, r2, gate_input

    # -- forward passes ------------------------------------------------------

    def forward(self, batch: SequenceBatch, training: bool = False,
                scope: StreamScope | None = None) -> ForwardState:
        x_init = project_features(self.store, self.heads, batch.items)
        e = {m: add_position(x_init[m], self.heads) for m in self.modalities}
        e_prime = self.imoe.forward(e) if self.imoe else e

        r1 = r2 = None
        if self.tmoe is not None:
            r1, r2, gate_input = self.time_embeddings(batch)
            streams = self.tmoe.forward(e_prime, gate_input)
        else:
            streams = e_prime

        pad = batch.pad_mask
        H = {m: self.encoders[m].encode(streams[m], pad, training, scope, "main")
             for m in self.modalities}
        return ForwardState(x_init=x_init, streams=streams, H=H, r1=r1, r2=r2)

    def score_items(self, H: dict[str, Tensor],
                    candidates: np.ndarray) -> Tensor:
        """Summed per-modality dot products against candidate item vectors."""
        candidates = np.asarray(candidates, dtype=np.int64)
        cat = catalog_vectors(self.store, self.heads, candidates)
        if self.cfg.score_space == "interactive" and self.imoe is not None:
            cat = self.imoe.forward(cat)
        scores = None
        for m in self.modalities:
            term = T.matmul(H[m], T.transpose_last_two(cat[m]))
            scores = term if scores is None else T.add(scores, term)
        return scores

    def full_catalog(self) -> np.ndarray:
        return np.arange(1, self.n_items + 1, dtype=np.int64)

    # -- losses ----------------------------------------------------------------

    def training_loss(self, batch: SequenceBatch, scope: StreamScope,
                      training: bool = True) -> tuple[Tensor, LossBreakdown]:
        cfg = self.cfg
        state = self.forward(batch, training=training, scope=scope)
        scores = self.score_items(state.H, self.full_catalog())
        main = main_loss(scores, batch.target_index - 1)

        cp = None
        if self.cp_W is not None and cfg.lambda1 != 0.0:
            cp = cp_loss(state.x_init, self.cp_W, self.cp_b,
                         batch.target_categories, batch.pad_mask,
                         self.modalities)

        idcl = None
        if cfg.enable_idcl and cfg.lambda2 != 0.0:
            targets = T.embedding_lookup(self.store.id_table, batch.target_index)
            idcl = idcl_loss(state.H["id"], targets, cfg.tau)

        pcl = None
        if (self.pcl_W is not None and cfg.lambda3 != 0.0
                and state.r1 is not None):
            rng = derive_rng("pcl", cfg.seed, scope.epoch, scope.step)
            aug_streams, _ = pcl_augment(
                {m: state.streams[m] for m in self.pcl_modalities},
                state.r1, state.r2, self.pcl_W, self.pcl_b,
                cfg.beta, batch.valid_lengths, rng)
            pairs = {}
            for m in self.pcl_modalities:
                H_aug = self.encoders[m].encode(aug_streams[m], batch.pad_mask,
                                                training, scope, "aug")
                pairs[m] = (state.H[m], H_aug)
            pcl = pcl_loss(pairs)

        total = total_loss(main, cp, idcl, pcl,
                           cfg.lambda1, cfg.lambda2, cfg.lambda3)

        def val(t):
            return float(t.data.reshape(())) if t is not None else 0.0

        breakdown = LossBreakdown(main=val(main), cp=val(cp), idcl=val(idcl),
                                  pcl=val(pcl), total=val(total),
                                  lambda1=cfg.lambda1, lambda2=cfg.lambda2,
                                  lambda3=cfg.lambda3)
        return total, breakdown

    def eval_scores(self, batch: SequenceBatch) -> np.ndarray:
        """Full-catalog scores with dropout off and no gradient recording."""
        state = self.forward(batch, training=False, scope=None)
        return self.score_items(state.H, self.full_catalog()).data
