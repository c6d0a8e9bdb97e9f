"""Scikit-learn style estimator facade over the training engine.

``fit`` consumes raw (user, item, timestamp) triples plus optional per-item
category labels and frozen modality features; ``predict`` ranks the catalog
for new interaction histories. Hyper-parameters mirror the engine config so
``get_params``/``set_params``/``clone`` compose with the wider ecosystem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .config import RunConfig
from .data import (Example, build_dataset, interactions_from_triples,
                   kcore_filter, make_batches)
from .metrics import rank_of_target, ranking_metrics
from .train import evaluate, train


def check_interactions(X) -> list[tuple[str, str, int]]:
    """Validate and normalize interaction triples.

    Accepts any array-like of (user, item, timestamp) rows; timestamps must
    be non-negative integers.
    """
    arr = np.asarray(X, dtype=object)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(
            f"expected an (n, 3) array of (user, item, timestamp) rows, "
            f"got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("no interactions supplied")
    triples = []
    for row in arr:
        user, item, ts = row
        ts = int(ts)
        if ts < 0:
            raise ValueError(f"negative timestamp {ts} for user {user!r}")
        triples.append((str(user), str(item), ts))
    return triples


def _feature_matrix(features: dict[str, np.ndarray] | None,
                    item_tokens: list[str], name: str) -> np.ndarray | None:
    if features is None:
        return None
    dims = {np.asarray(v).shape for v in features.values()}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise ValueError(f"{name} features must share one 1-d shape, got {dims}")
    dim = next(iter(dims))[0]
    out = np.zeros((len(item_tokens) + 1, dim), dtype=np.float32)
    missing = 0
    for i, token in enumerate(item_tokens, start=1):
        vec = features.get(token)
        if vec is None:
            missing += 1
            continue
        out[i] = np.asarray(vec, dtype=np.float32)
    if missing == len(item_tokens):
        raise ValueError(f"{name} features cover none of the fitted items")
    return out


class MoESequenceRecommender(BaseEstimator):
    """Next-item recommender with hierarchical time-aware expert mixing.

    Parameters mirror the engine configuration: ``d`` is the shared hidden
    width, ``L`` the sequence window, ``k1``/``k2`` the expert counts of the
    two mixture levels, ``lambda1..3`` the auxiliary loss weights, and the
    ``enable_*`` switches toggle individual components for ablations.
    """

    def __init__(self, d=64, L=50, n_layers=2, n_heads=2, dropout=0.2,
                 k1=4, k2=4, mu=100.0, freq=10000.0, p_max=2200,
                 time_variant="both", alpha_init=0.1, tau=0.2, beta=0.3,
                 lambda1=1.0, lambda2=1.0, lambda3=0.5, lr=1e-3,
                 batch_size=128, epochs=100, patience=10, seed=42,
                 grad_clip=5.0, causal=True, train_examples="per_target",
                 score_space="initial", enable_cp=True, enable_idcl=True,
                 enable_pcl=True, enable_imoe=True, enable_tmoe=True,
                 kcore=0, verbose=False):
        self.d = d
        self.L = L
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.dropout = dropout
        self.k1 = k1
        self.k2 = k2
        self.mu = mu
        self.freq = freq
        self.p_max = p_max
        self.time_variant = time_variant
        self.alpha_init = alpha_init
        self.tau = tau
        self.beta = beta
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lambda3 = lambda3
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.patience = patience
        self.seed = seed
        self.grad_clip = grad_clip
        self.causal = causal
        self.train_examples = train_examples
        self.score_space = score_space
        self.enable_cp = enable_cp
        self.enable_idcl = enable_idcl
        self.enable_pcl = enable_pcl
        self.enable_imoe = enable_imoe
        self.enable_tmoe = enable_tmoe
        self.kcore = kcore
        self.verbose = verbose

    # -- sklearn plumbing ---------------------------------------------------

    def _config(self, use_text: bool, use_image: bool) -> RunConfig:
        skip = {"kcore", "verbose"}
        kwargs = {k: v for k, v in self.get_params().items() if k not in skip}
        return RunConfig(use_text=use_text, use_image=use_image, **kwargs)

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise ValueError("this estimator has not been fitted yet")

    # -- estimator API ---------------------------------------------------------

    def fit(self, X, y=None, *, item_categories=None, txt_features=None,
            img_features=None):
        """Train on interaction triples.

        ``item_categories`` maps item token -> iterable of category ids;
        ``txt_features``/``img_features`` map item token -> 1-d vector and
        enable the corresponding modality when given.
        """
        log = interactions_from_triples(check_interactions(X))
        if self.kcore > 0:
            log = kcore_filter(log, self.kcore)
            if log.n_actions == 0:
                raise ValueError(f"kcore={self.kcore} filtering removed everything")
        cfg = self._config(use_text=txt_features is not None,
                           use_image=img_features is not None)
        cats = {token: set(ids) for token, ids in (item_categories or {}).items()}
        item_tokens = sorted(log.item_ids())
        dataset = build_dataset(log, cats, L=cfg.L,
                                per_target=cfg.train_examples == "per_target")
        dataset.txt_features = _feature_matrix(txt_features, item_tokens, "text")
        dataset.img_features = _feature_matrix(img_features, item_tokens, "image")

        log_fn = (lambda rep: print(rep.as_dict())) if self.verbose else None
        result = train(cfg, dataset, log_fn=log_fn)
        self.config_ = cfg
        self.dataset_ = dataset
        self.model_ = result.model
        self.reports_ = result.reports
        self.item_tokens_ = dataset.item_tokens
        self.n_items_ = dataset.n_items
        return self

    def _history_batch(self, X):
        self._require_fitted()
        triples = check_interactions(X)
        unknown = {t[1] for t in triples} - set(self.dataset_.item_index)
        if unknown:
            raise ValueError(f"unknown items in history: {sorted(unknown)[:5]}")
        log = interactions_from_triples(triples)
        users = list(log.by_user)
        examples = []
        for user in users:
            seq = log.by_user[user]
            examples.append(Example(user, [it.item_id for it in seq],
                                    [it.timestamp for it in seq],
                                    self.item_tokens_[0], seq[-1].timestamp))
        (batch,) = make_batches(examples, self.dataset_.item_index,
                                self.dataset_.categories, len(examples),
                                self.config_.L)
        return users, batch

    def predict_scores(self, X):
        """Full-catalog score matrix for each user history in ``X``."""
        users, batch = self._history_batch(X)
        return users, self.model_.eval_scores(batch)

    def predict(self, X):
        """Most likely next item token per user, users in sorted order."""
        users, scores = self.predict_scores(X)
        best = np.argmax(scores, axis=1)
        return np.array([self.item_tokens_[j] for j in best], dtype=object)

    def predict_topk(self, X, k=10):
        users, scores = self.predict_scores(X)
        order = np.argsort(-scores, kind="stable", axis=1)[:, :k]
        return [[self.item_tokens_[j] for j in row] for row in order]

    def score(self, X, y=None):
        """Mean leave-one-out NDCG@10 over the users in ``X``."""
        self._require_fitted()
        triples = check_interactions(X)
        log = interactions_from_triples(triples)
        ranks = []
        for user, seq in log.by_user.items():
            if len(seq) < 2:
                raise ValueError(f"user {user!r} needs >= 2 interactions to score")
            target = seq[-1].item_id
            if target not in self.dataset_.item_index:
                raise ValueError(f"target item {target!r} was not seen during fit")
            history = [(it.user_id, it.item_id, it.timestamp) for it in seq[:-1]]
            _, scores = self.predict_scores(history)
            ranks.append(rank_of_target(scores[0],
                                        self.dataset_.item_index[target] - 1))
        return ranking_metrics(np.asarray(ranks))["ndcg@10"]

    def evaluate_split(self, which: str = "test") -> dict[str, float]:
        """Ranking metrics on the internal leave-one-out split."""
        self._require_fitted()
        return evaluate(self.model_, self.dataset_, which)
