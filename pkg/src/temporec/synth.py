"""Deterministic desk-scale dataset synthesis.

Interest drift, when enabled, layers two explicit-time signals on top of the
per-user taste vectors: a slow early-to-late migration of category interest,
and a fast global season cycle where the currently popular category is a
function of absolute time. Consecutive interactions often land in different
season phases, so recent sequence content alone goes stale while a model
that reads timestamps can track the active phase. Items that share a
category get correlated text/image feature vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import compute_stats, interactions_from_triples
from .hmft import write_hmft
from .rng import derive_rng

DAY = 86400


@dataclass
class SynthConfig:
    n_users: int
    n_items: int
    d_txt: int = 16
    d_img: int = 16
    n_categories: int = 4
    min_interactions: int = 8
    max_interactions: int = 14
    drift: bool = False
    seed: int = 0
    span_days: int = 240
    burst_prob: float = 0.45
    season_days: int = 20      # length of one global popularity phase
    season_weight: float = 0.75  # share of drift-mode picks that follow the season


def _category_mix(rng: np.random.Generator, n_cat: int, bias: str) -> np.ndarray:
    alpha = np.ones(n_cat)
    half = max(1, n_cat // 2)
    if bias == "early":
        alpha[:half] = 6.0
    elif bias == "late":
        alpha[half:] = 6.0
    return rng.dirichlet(alpha)


def generate(cfg: SynthConfig, out_dir: str | Path) -> None:
    """Write interactions.tsv, items.tsv, feature files, and stats.json."""
    if cfg.n_items < 2:
        raise ValueError(f"synth: need at least 2 items, got {cfg.n_items}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    item_rng = derive_rng("synth", cfg.seed, "items")
    n_cat = cfg.n_categories
    item_tokens = [f"i{idx:04d}" for idx in range(cfg.n_items)]
    primary_cat = np.arange(cfg.n_items) % n_cat
    extra_cat = item_rng.random(cfg.n_items) < 0.25

    cat_txt = item_rng.normal(size=(n_cat, cfg.d_txt))
    cat_img = item_rng.normal(size=(n_cat, cfg.d_img))

    txt = np.zeros((cfg.n_items, cfg.d_txt), dtype=np.float32)
    img = np.zeros((cfg.n_items, cfg.d_img), dtype=np.float32)
    categories: list[set[int]] = []
    for i in range(cfg.n_items):
        cats = {int(primary_cat[i])}
        if extra_cat[i]:
            cats.add(int((primary_cat[i] + 1) % n_cat))
        categories.append(cats)
        base_t = cat_txt[sorted(cats)].mean(axis=0)
        base_i = cat_img[sorted(cats)].mean(axis=0)
        txt[i] = base_t + 0.35 * item_rng.normal(size=cfg.d_txt)
        img[i] = base_i + 0.35 * item_rng.normal(size=cfg.d_img)

    items_by_cat = [np.flatnonzero([(c in cs) for cs in categories])
                    for c in range(n_cat)]
    item_use = np.zeros(cfg.n_items, dtype=np.int64)
    span = cfg.span_days * DAY
    triples: list[tuple[str, str, int]] = []

    season = cfg.season_days * DAY
    for u in range(cfg.n_users):
        rng = derive_rng("synth", cfg.seed, "user", u)
        early = _category_mix(rng, n_cat, "early" if cfg.drift else "flat")
        late = _category_mix(rng, n_cat, "late") if cfg.drift else early
        n_inter = int(rng.integers(cfg.min_interactions, cfg.max_interactions + 1))
        t = int(rng.integers(0, max(1, span // 8)))
        prev_cat = None
        for _ in range(n_inter):
            frac = min(1.0, t / span)
            pref = (1.0 - frac) * early + frac * late
            if prev_cat is not None and rng.random() < cfg.burst_prob:
                cat = prev_cat
                gap = int(rng.integers(120, 2 * 3600))
            elif cfg.drift and rng.random() < cfg.season_weight:
                # the globally popular category is a pure function of time
                cat = (t // season) % n_cat
                gap = int(rng.integers(2 * DAY, 14 * DAY))
            else:
                cat = int(rng.choice(n_cat, p=pref / pref.sum()))
                gap = int(rng.integers(2 * DAY, 14 * DAY))
            pool = items_by_cat[cat]
            weights = 1.0 / (1.0 + item_use[pool]) ** 2
            item = int(rng.choice(pool, p=weights / weights.sum()))
            item_use[item] += 1
            triples.append((f"u{u:04d}", item_tokens[item], t))
            prev_cat = cat
            t += gap

    log = interactions_from_triples(triples)
    lines = [f"{it.user_id}\t{it.item_id}\t{it.timestamp}\n"
             for seq in log.by_user.values() for it in seq]
    (out_dir / "interactions.tsv").write_text("".join(lines), encoding="utf-8")

    item_lines = [f"{tok}\t{','.join(str(c) for c in sorted(categories[i]))}\n"
                  for i, tok in enumerate(item_tokens)]
    (out_dir / "items.tsv").write_text("".join(item_lines), encoding="utf-8")

    write_hmft(out_dir / "txt_features.hmft", item_tokens, txt)
    write_hmft(out_dir / "img_features.hmft", item_tokens, img)
    (out_dir / "stats.json").write_text(compute_stats(log).to_json() + "\n",
                                        encoding="utf-8")


def category_shift_statistic(data_dir: str | Path) -> float:
    """Chi-squared distance between early-half and late-half category counts."""
    from .data import load_interactions, load_item_categories

    data_dir = Path(data_dir)
    log = load_interactions(data_dir / "interactions.tsv")
    cats = load_item_categories(data_dir / "items.tsv")
    events = sorted(((it.timestamp, it.item_id) for it in log.all_interactions()))
    n_cat = max((c for cs in cats.values() for c in cs), default=0) + 1
    half = len(events) // 2
    counts = np.zeros((2, n_cat))
    for pos, (_, item) in enumerate(events):
        for c in cats.get(item, ()):
            counts[0 if pos < half else 1, c] += 1
    counts += 1e-9
    p = counts[0] / counts[0].sum()
    q = counts[1] / counts[1].sum()
    return float(((p - q) ** 2 / (p + q)).sum() * 2)
