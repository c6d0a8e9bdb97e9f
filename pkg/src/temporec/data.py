"""Interaction ingestion, k-core filtering, leave-one-out splits, batching.

Items are indexed by contiguous integers 1..n_items with 0 reserved for
padding; sequences are right-aligned so the newest item always sits in the
last slot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hmft import read_hmft
from .rng import derive_rng

PAD = 0


@dataclass(frozen=True)
class Interaction:
    user_id: str
    item_id: str
    timestamp: int


@dataclass
class InteractionLog:
    """Per-user interactions, deduplicated and sorted by (timestamp, item)."""

    by_user: dict[str, list[Interaction]] = field(default_factory=dict)

    @property
    def n_users(self) -> int:
        return len(self.by_user)

    @property
    def n_actions(self) -> int:
        return sum(len(v) for v in self.by_user.values())

    def item_ids(self) -> set[str]:
        return {it.item_id for seq in self.by_user.values() for it in seq}

    @property
    def n_items(self) -> int:
        return len(self.item_ids())

    def all_interactions(self):
        for seq in self.by_user.values():
            yield from seq


@dataclass
class DatasetStats:
    n_users: int
    n_items: int
    n_actions: int
    avg_actions_per_user: float
    avg_actions_per_item: float
    sparsity: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2)


def compute_stats(log: InteractionLog) -> DatasetStats:
    n_users, n_items, n_actions = log.n_users, log.n_items, log.n_actions
    denom_u = n_users or 1
    denom_i = n_items or 1
    return DatasetStats(
        n_users=n_users,
        n_items=n_items,
        n_actions=n_actions,
        avg_actions_per_user=n_actions / denom_u,
        avg_actions_per_item=n_actions / denom_i,
        sparsity=1.0 - n_actions / (denom_u * denom_i),
    )


def _build_log(interactions: set[tuple[str, str, int]]) -> InteractionLog:
    by_user: dict[str, list[Interaction]] = {}
    for user_id, item_id, ts in interactions:
        by_user.setdefault(user_id, []).append(Interaction(user_id, item_id, ts))
    for seq in by_user.values():
        seq.sort(key=lambda it: (it.timestamp, it.item_id))
    return InteractionLog(by_user=dict(sorted(by_user.items())))


def load_interactions(path: str | Path) -> InteractionLog:
    """Parse a ``user<TAB>item<TAB>timestamp`` TSV, deduplicating triples."""
    seen: set[tuple[str, str, int]] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ValueError(f"{path}: malformed line {line_no}: {line!r}")
            user_id, item_id, ts_raw = fields
            try:
                ts = int(ts_raw)
            except ValueError:
                raise ValueError(
                    f"{path}: non-integer timestamp on line {line_no}: {ts_raw!r}")
            if ts < 0:
                raise ValueError(
                    f"{path}: negative timestamp on line {line_no}: {ts}")
            if not user_id or not item_id:
                raise ValueError(f"{path}: empty id on line {line_no}")
            seen.add((user_id, item_id, ts))
    return _build_log(seen)


def interactions_from_triples(triples) -> InteractionLog:
    """Build a log from in-memory (user, item, timestamp) triples."""
    seen: set[tuple[str, str, int]] = set()
    for user_id, item_id, ts in triples:
        ts = int(ts)
        if ts < 0:
            raise ValueError(f"negative timestamp {ts} for user {user_id!r}")
        seen.add((str(user_id), str(item_id), ts))
    return _build_log(seen)


def load_item_categories(path: str | Path) -> dict[str, set[int]]:
    """Parse ``item_id<TAB>cat0,cat1,...`` lines; the category field may be empty."""
    cats: dict[str, set[int]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) == 1:
                fields = [fields[0], ""]
            if len(fields) != 2:
                raise ValueError(f"{path}: malformed line {line_no}: {line!r}")
            item_id, cat_field = fields
            ids = {int(c) for c in cat_field.split(",") if c != ""}
            if any(c < 0 for c in ids):
                raise ValueError(f"{path}: negative category on line {line_no}")
            cats[item_id] = ids
    return cats


def kcore_filter(log: InteractionLog, k: int) -> InteractionLog:
    """Largest sub-log where every user and every item keeps >= k interactions.

    Users and items below the threshold are removed alternately until a fixed
    point; the result is independent of removal order.
    """
    if k < 1:
        raise ValueError(f"kcore_filter: k must be >= 1, got {k}")
    triples = {(it.user_id, it.item_id, it.timestamp)
               for it in log.all_interactions()}
    while True:
        user_deg: dict[str, int] = {}
        item_deg: dict[str, int] = {}
        for user_id, item_id, _ in triples:
            user_deg[user_id] = user_deg.get(user_id, 0) + 1
            item_deg[item_id] = item_deg.get(item_id, 0) + 1
        bad_users = {u for u, d in user_deg.items() if d < k}
        bad_items = {i for i, d in item_deg.items() if d < k}
        if not bad_users and not bad_items:
            break
        triples = {t for t in triples
                   if t[0] not in bad_users and t[1] not in bad_items}
    return _build_log(triples)


def time_histogram(log: InteractionLog, bins: int) -> np.ndarray:
    """Equal-width counts over [min_ts, max_ts]; the last bin is closed."""
    if bins < 1:
        raise ValueError(f"time_histogram: bins must be >= 1, got {bins}")
    ts = np.array([it.timestamp for it in log.all_interactions()], dtype=np.int64)
    if ts.size == 0:
        raise ValueError("time_histogram: empty log")
    lo, hi = ts.min(), ts.max()
    counts = np.zeros(bins, dtype=np.int64)
    if hi == lo:
        counts[0] = ts.size
        return counts
    width = (hi - lo) / bins
    idx = np.minimum((ts - lo) / width, bins - 1).astype(np.int64)
    np.add.at(counts, idx, 1)
    return counts


# ---------------------------------------------------------------------------
# splits and batches
# ---------------------------------------------------------------------------

@dataclass
class Example:
    user_id: str
    prefix_items: list[str]
    prefix_ts: list[int]
    target_item: str
    target_ts: int


@dataclass
class Split:
    train: list[Example]
    valid: list[Example]
    test: list[Example]


def split_leave_one_out(log: InteractionLog, max_len: int,
                        per_target: bool = True) -> Split:
    """Last interaction per user -> test, second-to-last -> validation.

    The remaining region yields training examples: one per prefix position by
    default, or only the final one when ``per_target`` is off. Prefixes carry
    at most the latest ``max_len`` items.
    """
    train: list[Example] = []
    valid: list[Example] = []
    test: list[Example] = []
    for user_id, seq in log.by_user.items():
        if len(seq) < 3:
            raise ValueError(
                f"split_leave_one_out: user {user_id!r} has {len(seq)} < 3 interactions")
        items = [it.item_id for it in seq]
        ts = [it.timestamp for it in seq]
        n = len(seq)

        def make(k: int) -> Example:
            lo = max(0, k - max_len)
            return Example(user_id, items[lo:k], ts[lo:k], items[k], ts[k])

        test.append(make(n - 1))
        valid.append(make(n - 2))
        targets = range(1, n - 2) if n > 3 else range(1, 2)
        if per_target:
            train.extend(make(k) for k in targets)
        else:
            train.append(make(max(targets)))
    return Split(train=train, valid=valid, test=test)


@dataclass
class SequenceBatch:
    """Right-aligned padded sequences with interval and absolute-time channels."""

    items: np.ndarray              # (B, L) int64, 0 = padding
    timestamps: np.ndarray         # (B, L) int64, 0 at padding
    intervals: np.ndarray          # (B, L) int64, first valid slot = 0
    valid_lengths: np.ndarray      # (B,) int64
    target_index: np.ndarray       # (B,) int64, never padding
    target_categories: np.ndarray  # (B, L, C) float32 multi-hot per in-sequence item

    @property
    def pad_mask(self) -> np.ndarray:
        return self.items == PAD

    @property
    def size(self) -> int:
        return self.items.shape[0]


def _encode_example(ex: Example, item_index: dict[str, int], L: int,
                    categories: np.ndarray, out_items, out_ts, out_iv, out_cat):
    window_items = ex.prefix_items[-L:]
    window_ts = ex.prefix_ts[-L:]
    n = len(window_items)
    if n == 0:
        raise ValueError(f"example for user {ex.user_id!r} has an empty prefix")
    start = L - n
    for j, (item, ts) in enumerate(zip(window_items, window_ts)):
        idx = item_index[item]
        out_items[start + j] = idx
        out_ts[start + j] = ts
        out_iv[start + j] = 0 if j == 0 else ts - window_ts[j - 1]
        out_cat[start + j] = categories[idx]


def make_batches(examples: list[Example], item_index: dict[str, int],
                 categories: np.ndarray, batch_size: int, L: int,
                 shuffle_seed: int | str | None = None) -> list[SequenceBatch]:
    """Deterministically shuffled, left-padded batches; the tail batch may be short."""
    if batch_size < 1 or L < 1:
        raise ValueError(f"make_batches: batch_size={batch_size}, L={L}")
    order = np.arange(len(examples))
    if shuffle_seed is not None:
        order = derive_rng("batches", shuffle_seed).permutation(len(examples))
    n_cat = categories.shape[1]
    batches = []
    for lo in range(0, len(examples), batch_size):
        chunk = [examples[i] for i in order[lo:lo + batch_size]]
        b = len(chunk)
        items = np.zeros((b, L), dtype=np.int64)
        ts = np.zeros((b, L), dtype=np.int64)
        iv = np.zeros((b, L), dtype=np.int64)
        cats = np.zeros((b, L, n_cat), dtype=np.float32)
        lengths = np.zeros(b, dtype=np.int64)
        target = np.zeros(b, dtype=np.int64)
        for row, ex in enumerate(chunk):
            _encode_example(ex, item_index, L, categories,
                            items[row], ts[row], iv[row], cats[row])
            lengths[row] = min(len(ex.prefix_items), L)
            target[row] = item_index[ex.target_item]
        batches.append(SequenceBatch(items, ts, iv, lengths, target, cats))
    return batches


# ---------------------------------------------------------------------------
# dataset assembly
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """Indexed interactions, splits, category labels, and frozen features."""

    log: InteractionLog
    item_index: dict[str, int]
    item_tokens: list[str]             # position i-1 holds the token for index i
    categories: np.ndarray             # (n_items+1, C) float32, row 0 zero
    n_categories: int
    split: Split
    min_timestamp: int
    txt_features: np.ndarray | None = None   # (n_items+1, d_txt), row 0 zero
    img_features: np.ndarray | None = None

    @property
    def n_items(self) -> int:
        return len(self.item_tokens)

    def batches(self, which: str, batch_size: int, L: int,
                shuffle_seed: int | str | None = None) -> list[SequenceBatch]:
        examples = getattr(self.split, which)
        return make_batches(examples, self.item_index, self.categories,
                            batch_size, L, shuffle_seed)


def _align_features(path: str | Path, item_tokens: list[str]) -> np.ndarray:
    ids, matrix = read_hmft(path)
    row_of = {item_id: row for row, item_id in enumerate(ids)}
    missing = [t for t in item_tokens if t not in row_of]
    if missing:
        raise ValueError(
            f"{path}: no feature rows for {len(missing)} items, e.g. {missing[:3]}")
    out = np.zeros((len(item_tokens) + 1, matrix.shape[1]), dtype=np.float32)
    for i, token in enumerate(item_tokens, start=1):
        out[i] = matrix[row_of[token]]
    return out


def build_dataset(log: InteractionLog, item_categories: dict[str, set[int]],
                  L: int, per_target: bool = True,
                  txt_path: str | Path | None = None,
                  img_path: str | Path | None = None) -> Dataset:
    """Index items, attach category labels and features, and split the log."""
    item_tokens = sorted(log.item_ids())
    item_index = {token: i for i, token in enumerate(item_tokens, start=1)}

    known = [c for token in item_tokens for c in item_categories.get(token, ())]
    n_categories = (max(known) + 1) if known else 1
    categories = np.zeros((len(item_tokens) + 1, n_categories), dtype=np.float32)
    for token, idx in item_index.items():
        for c in item_categories.get(token, ()):
            categories[idx, c] = 1.0

    split = split_leave_one_out(log, max_len=L, per_target=per_target)
    min_ts = min(it.timestamp for it in log.all_interactions())
    txt = _align_features(txt_path, item_tokens) if txt_path else None
    img = _align_features(img_path, item_tokens) if img_path else None
    return Dataset(log=log, item_index=item_index, item_tokens=item_tokens,
                   categories=categories, n_categories=n_categories,
                   split=split, min_timestamp=min_ts,
                   txt_features=txt, img_features=img)


def load_dataset(data_dir: str | Path, L: int, per_target: bool = True,
                 use_text: bool = True, use_image: bool = True) -> Dataset:
    """Load a prepared/synthesized dataset directory.

    Feature files for disabled modalities are never opened.
    """
    data_dir = Path(data_dir)
    log = load_interactions(data_dir / "interactions.tsv")
    cats = load_item_categories(data_dir / "items.tsv")
    txt = data_dir / "txt_features.hmft" if use_text else None
    img = data_dir / "img_features.hmft" if use_image else None
    return build_dataset(log, cats, L=L, per_target=per_target,
                         txt_path=txt, img_path=img)
