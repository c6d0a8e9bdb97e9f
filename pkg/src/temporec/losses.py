"""The four training objectives and their weighted combination.

All softmax-style terms run through a detached-max log-sum-exp so nothing
overflows; cosine denominators are floored inside the similarity primitive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class LossBreakdown:
    main: float
    cp: float
    idcl: float
    pcl: float
    total: float
    lambda1: float
    lambda2: float
    lambda3: float

    def as_dict(self) -> dict[str, float]:
        return {"main": self.main, "cp": self.cp, "idcl": self.idcl,
                "pcl": self.pcl, "total": self.total}


def _row_logsumexp(x: Tensor) -> Tensor:
    """(B, n) -> (B, 1). The per-row max shift is a detached constant, which
    leaves the gradient exact."""
    m = x.data.max(axis=-1, keepdims=True)
    shifted = T.subtract(x, T.constant(np.broadcast_to(m, x.shape), dtype=x.dtype))
    lse = T.log(T.tensor_sum(T.exp(shifted), axis=-1, keepdims=True))
    return T.add(lse, T.constant(m, dtype=x.dtype))


def _diagonal(x: Tensor) -> Tensor:
    """(B, B) -> (B, 1) diagonal extraction via a one-hot mask."""
    eye = T.constant(np.eye(x.shape[0]), dtype=x.dtype)
    return T.tensor_sum(T.elementwise_mul(x, eye), axis=-1, keepdims=True)


def _softplus(x: Tensor) -> Tensor:
    """log(1 + e^x) built from the stable two-term log-sum-exp."""
    c = np.maximum(x.data, 0.0)
    a = T.exp(T.subtract(x, T.constant(c, dtype=x.dtype)))
    b = T.constant(np.exp(-c), dtype=x.dtype)
    return T.add(T.log(T.add(a, b)), T.constant(c, dtype=x.dtype))


def main_loss(scores: Tensor, targets: np.ndarray) -> Tensor:
    """Full-catalog softmax cross-entropy, averaged over the batch.

    ``targets`` holds 0-based candidate-column indices.
    """
    B, n = scores.shape
    targets = np.asarray(targets)
    if targets.min() < 0 or targets.max() >= n:
        raise ValueError(f"main_loss: target column out of range [0, {n})")
    onehot = np.zeros((B, n))
    onehot[np.arange(B), targets] = 1.0
    picked = T.tensor_sum(
        T.elementwise_mul(scores, T.constant(onehot, dtype=scores.dtype)),
        axis=-1, keepdims=True)
    return T.tensor_mean(T.subtract(_row_logsumexp(scores), picked))


def cp_loss(x_initial: dict[str, Tensor], cp_W: Tensor, cp_b: Tensor,
            target_categories: np.ndarray, pad_mask: np.ndarray,
            modalities: tuple[str, ...]) -> Tensor:
    """Multi-label category prediction on the initial item representations.

    Binary cross-entropy per category, summed over categories and valid
    slots, averaged over the batch; pad slots contribute exactly zero.
    """
    joint = T.concat_last_dim([x_initial[m] for m in modalities])
    logits = T.add(T.matmul(joint, cp_W), cp_b)
    y = T.constant(target_categories, dtype=logits.dtype)
    # BCE-with-logits: softplus(z) - z*y, stable for any magnitude
    bce = T.subtract(_softplus(logits), T.elementwise_mul(logits, y))
    valid = (~pad_mask).astype(logits.data.dtype)
    mask3 = np.repeat(valid[:, :, None], logits.shape[-1], axis=2)
    masked = T.elementwise_mul(bce, T.constant(mask3, dtype=logits.dtype))
    return T.scale(T.tensor_sum(masked), 1.0 / pad_mask.shape[0])


def _infonce(sim: Tensor) -> Tensor:
    """Mean over rows of -log softmax(sim)[i, i]."""
    return T.tensor_mean(T.subtract(_row_logsumexp(sim), _diagonal(sim)))


def idcl_loss(H_id: Tensor, x_id_targets: Tensor, tau: float) -> Tensor:
    """In-batch contrastive alignment of sequence states with target IDs."""
    if tau <= 0:
        raise ValueError(f"idcl_loss: tau must be positive, got {tau}")
    sim = T.cosine_similarity(H_id, x_id_targets)
    return _infonce(T.scale(sim, 1.0 / tau))


def pcl_augment(streams: dict[str, Tensor], r1: Tensor, r2: Tensor,
                placeholder_W: dict[str, Tensor], placeholder_b: dict[str, Tensor],
                beta: float, valid_lengths: np.ndarray,
                rng: np.random.Generator) -> tuple[dict[str, Tensor], np.ndarray]:
    """Replace a deterministic fraction of valid slots with time placeholders.

    The same positions are swapped in every stream; each replacement is the
    modality head applied to [r1; r2] at that slot. Returns the augmented
    streams and the boolean replacement mask.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"pcl_augment: beta must be in [0, 1), got {beta}")
    some = next(iter(streams.values()))
    B, L, d = some.shape
    replace = np.zeros((B, L), dtype=bool)
    if beta > 0.0:
        for b in range(B):
            n_valid = int(valid_lengths[b])
            count = int(np.floor(beta * n_valid + 0.5))
            if count == 0:
                continue
            chosen = rng.choice(n_valid, size=count, replace=False)
            replace[b, L - n_valid + chosen] = True
    if not replace.any():
        return dict(streams), replace

    gate_pair = T.concat_last_dim([r1, r2])
    keep3 = np.repeat((~replace).astype(some.data.dtype)[:, :, None], d, axis=2)
    swap3 = np.repeat(replace.astype(some.data.dtype)[:, :, None], d, axis=2)
    keep_c = T.constant(keep3, dtype=some.dtype)
    swap_c = T.constant(swap3, dtype=some.dtype)
    out = {}
    for m, stream in streams.items():
        placeholder = T.add(T.matmul(gate_pair, placeholder_W[m]),
                            placeholder_b[m])
        out[m] = T.add(T.elementwise_mul(stream, keep_c),
                       T.elementwise_mul(placeholder, swap_c))
    return out, replace


def pcl_loss(pairs: dict[str, tuple[Tensor, Tensor]]) -> Tensor:
    """Average InfoNCE (temperature 1) between original and augmented states."""
    if not pairs:
        raise ValueError("pcl_loss: no modality pairs supplied")
    total = None
    for H, H_aug in pairs.values():
        term = _infonce(T.cosine_similarity(H, H_aug))
        total = term if total is None else T.add(total, term)
    return T.scale(total, 1.0 / len(pairs))


def total_loss(main: Tensor, cp: Tensor | None, idcl: Tensor | None,
               pcl: Tensor | None, lambda1: float, lambda2: float,
               lambda3: float) -> Tensor:
    """Weighted sum; a zero weight removes the term from the graph entirely."""
    for name, w in (("lambda1", lambda1), ("lambda2", lambda2), ("lambda3", lambda3)):
        if w < 0:
            raise ValueError(f"total_loss: {name} must be >= 0, got {w}")
    total = main
    for term, weight in ((cp, lambda1), (idcl, lambda2), (pcl, lambda3)):
        if term is not None and weight != 0.0:
            total = T.add(total, T.scale(term, weight))
    return total
