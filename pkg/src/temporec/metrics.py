"""Leave-one-out ranking metrics over the full candidate set."""

from __future__ import annotations

import numpy as np


def rank_of_target(scores: np.ndarray, target_col: int) -> int:
    """1-based rank; ties resolve in favour of the lower column index."""
    s = scores[target_col]
    higher = int(np.sum(scores > s))
    tied_before = int(np.sum(scores[:target_col] == s))
    return higher + tied_before + 1


def ndcg_at(rank: int, k: int) -> float:
    return 1.0 / np.log2(rank + 1.0) if rank <= k else 0.0


def mrr_at(rank: int, k: int) -> float:
    return 1.0 / rank if rank <= k else 0.0


def ranking_metrics(ranks: np.ndarray, k_list=(5, 10)) -> dict[str, float]:
    out = {}
    for k in k_list:
        out[f"ndcg@{k}"] = float(np.mean([ndcg_at(r, k) for r in ranks]))
        out[f"mrr@{k}"] = float(np.mean([mrr_at(r, k) for r in ranks]))
    return out
