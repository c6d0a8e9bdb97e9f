"""Adam optimization loop, evaluation, early stopping, and ablations."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import restore_params, save_checkpoint
from .config import RunConfig, apply_variant, dump_config
from .data import Dataset, load_dataset
from .metrics import rank_of_target, ranking_metrics
from .model import Model
from .rng import StreamScope
from .tensor import Tape, Tensor, backward


class TrainingDiverged(RuntimeError):
    pass


class Adam:
    """Per-tensor moment accumulators with bias correction."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        correct1 = 1.0 - b1 ** self.step_count
        correct2 = 1.0 - b2 ** self.step_count
        for name, t in self.params.items():
            g = t.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / correct1) / (np.sqrt(v / correct2) + self.eps)
            t.data -= (self.lr * update).astype(t.data.dtype)


def clip_global_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint norm is at most ``max_norm``."""
    total = 0.0
    for t in params.values():
        total += float(np.sum(t.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / norm
        for t in params.values():
            t.grad *= factor
    return norm


@dataclass
class MetricsReport:
    epoch: int
    main: float
    cp: float
    idcl: float
    pcl: float
    total: float
    metrics: dict[str, float]
    wall_time_seconds: float

    def as_dict(self) -> dict:
        out = {"epoch": self.epoch, "main": self.main, "cp": self.cp,
               "idcl": self.idcl, "pcl": self.pcl, "total": self.total}
        out.update(self.metrics)
        out["wall_time_seconds"] = self.wall_time_seconds
        return out


@dataclass
class TrainResult:
    model: Model
    reports: list[MetricsReport] = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = -1.0


def evaluate(model: Model, dataset: Dataset, which: str = "valid",
             k_list=(5, 10), batch_size: int = 256) -> dict[str, float]:
    """Rank the ground-truth item against the whole catalog, per user."""
    examples = getattr(dataset.split, which)
    if not examples:
        raise ValueError(f"evaluate: split {which!r} is empty")
    batches = dataset.batches(which, batch_size, model.cfg.L, shuffle_seed=None)
    ranks = []
    for batch in batches:
        scores = model.eval_scores(batch)
        for row, target in enumerate(batch.target_index):
            ranks.append(rank_of_target(scores[row], int(target) - 1))
    return ranking_metrics(np.asarray(ranks), k_list)


def train(cfg: RunConfig, dataset: Dataset, out_dir: str | Path | None = None,
          log_fn=None, dtype=np.float32, restore_best: bool = True) -> TrainResult:
    """Full training run with per-epoch validation and early stopping.

    Deterministic for a fixed (seed, config, dataset): batch order, dropout,
    and augmentation all derive from counter-based streams. With
    ``restore_best`` the model ends at its best-validation snapshot,
    otherwise at the final epoch.
    """
    model = Model(cfg, n_items=dataset.n_items,
                  n_categories=dataset.n_categories,
                  min_timestamp=dataset.min_timestamp,
                  txt_features=dataset.txt_features,
                  img_features=dataset.img_features,
                  dtype=dtype)
    optimizer = Adam(model.params, lr=cfg.lr)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.txt").write_text(dump_config(cfg), encoding="utf-8")

    result = TrainResult(model=model)
    best_params: dict[str, np.ndarray] | None = None
    stale = 0
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        batches = dataset.batches("train", cfg.batch_size, cfg.L,
                                  shuffle_seed=f"{cfg.seed}/{epoch}")
        sums = {"main": 0.0, "cp": 0.0, "idcl": 0.0, "pcl": 0.0, "total": 0.0}
        seen = 0
        for step, batch in enumerate(batches):
            scope = StreamScope(cfg.seed, epoch, step)
            model.zero_grads()
            with Tape():
                total, breakdown = model.training_loss(batch, scope)
                if not np.isfinite(breakdown.total):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} batch {step}: "
                        f"{breakdown.as_dict()}")
                backward(total)
            model.mask_padding_grad()
            clip_global_norm(model.params, cfg.grad_clip)
            optimizer.step()
            model.store.id_table.data[0] = 0.0
            for key, value in breakdown.as_dict().items():
                sums[key] += value * batch.size
            seen += batch.size

        metrics = evaluate(model, dataset, "valid")
        report = MetricsReport(
            epoch=epoch,
            main=sums["main"] / seen, cp=sums["cp"] / seen,
            idcl=sums["idcl"] / seen, pcl=sums["pcl"] / seen,
            total=sums["total"] / seen,
            metrics=metrics,
            wall_time_seconds=time.perf_counter() - started)
        result.reports.append(report)
        if log_fn is not None:
            log_fn(report)

        score = metrics["ndcg@10"]
        if score > result.best_metric:
            result.best_metric = score
            result.best_epoch = epoch
            best_params = {k: t.data.copy() for k, t in model.params.items()}
            if out_dir is not None:
                save_checkpoint(model.params, out_dir / "best.ckpt")
            stale = 0
        else:
            stale += 1
            if cfg.patience > 0 and stale >= cfg.patience:
                break

    if restore_best and best_params is not None:
        restore_params(model.params, best_params)
    return result


def prepare_training_data(cfg: RunConfig, data_dir: str | Path) -> Dataset:
    """Load a dataset directory honouring the config's modality switches."""
    return load_dataset(data_dir, L=cfg.L,
                        per_target=cfg.train_examples == "per_target",
                        use_text=cfg.use_text, use_image=cfg.use_image)


def run_ablation(cfg: RunConfig, data_dir: str | Path, variant: str,
                 out_dir: str | Path | None = None,
                 log_fn=None) -> tuple[TrainResult, dict[str, float]]:
    """Train one ablation variant and report its test metrics."""
    variant_cfg = apply_variant(cfg, variant)
    dataset = prepare_training_data(variant_cfg, data_dir)
    result = train(variant_cfg, dataset, out_dir=out_dir, log_fn=log_fn)
    test_metrics = evaluate(result.model, dataset, "test")
    return result, test_metrics
