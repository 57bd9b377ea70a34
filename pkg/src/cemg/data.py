"""Interaction data: loading, core filtering, leave-one-out splits, synthesis."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(Exception):
    pass


class ParseError(DatasetError):
    pass


class EmptyDatasetError(DatasetError):
    pass


@dataclass
class InteractionLog:
    """Chronological user->item events with dense id registries.

    events keep file order (a multiset: duplicates are retained); per_user[u]
    is that user's item sequence sorted by timestamp, ties broken by input
    order.
    """

    user_ids: list[str]              # dense uid -> raw id
    item_ids: list[str]              # dense iid -> raw id
    events: np.ndarray               # (E, 3) int64 rows: user, item, timestamp
    per_user: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.per_user) == 0:
            self.per_user = _build_per_user(len(self.user_ids), self.events)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_interactions(self) -> int:
        return int(self.events.shape[0])


@dataclass
class ItemCatalog:
    """Per-item modality feature rows aligned with an item registry.

    Items missing a feature row carry the column mean of that modality and a
    presence flag of False.
    """

    item_ids: list[str]
    visual: np.ndarray               # (N, d_v) float32
    text: np.ndarray                 # (N, d_t) float32
    visual_present: np.ndarray       # (N,) bool
    text_present: np.ndarray         # (N,) bool

    def __post_init__(self):
        n = len(self.item_ids)
        for name, mat in (("visual", self.visual), ("text", self.text)):
            if mat.shape[0] != n:
                raise DatasetError(f"{name} features have {mat.shape[0]} rows for {n} items")
            if not np.isfinite(mat).all():
                raise DatasetError(f"{name} features contain NaN/Inf")

    def align_to(self, item_ids: list[str]) -> "ItemCatalog":
        """Reorder/subset rows to a new registry, mean-imputing missing items."""
        index = {raw: i for i, raw in enumerate(self.item_ids)}
        out = []
        for mat, present in ((self.visual, self.visual_present), (self.text, self.text_present)):
            real = mat[present] if present.any() else mat
            mean = real.mean(axis=0) if real.shape[0] else np.zeros(mat.shape[1], mat.dtype)
            rows = np.tile(mean.astype(np.float32), (len(item_ids), 1))
            flags = np.zeros(len(item_ids), dtype=bool)
            for j, raw in enumerate(item_ids):
                i = index.get(raw)
                if i is not None and present[i]:
                    rows[j] = mat[i]
                    flags[j] = True
            out.append((rows, flags))
        return ItemCatalog(list(item_ids), out[0][0], out[1][0], out[0][1], out[1][1])


@dataclass
class SplitDataset:
    """Leave-one-out split: per-user train prefix, one valid and one test target."""

    users: list[int]                 # retained dense user ids, ascending
    train: dict[int, np.ndarray]
    valid_target: dict[int, int]
    test_target: dict[int, int]
    n_users: int                     # registry sizes of the source log
    n_items: int
    min_len: int = 3


@dataclass
class DatasetStats:
    n_users: int
    n_items: int
    n_interactions: int
    avg_len: float
    sparsity: float

    def to_json_dict(self) -> dict:
        return {
            "n_users": self.n_users,
            "n_items": self.n_items,
            "n_interactions": self.n_interactions,
            "avg_len": self.avg_len,
            "sparsity": self.sparsity,
        }


def _build_per_user(n_users: int, events: np.ndarray) -> list[np.ndarray]:
    seqs: list[np.ndarray] = []
    if events.shape[0] == 0:
        return [np.empty(0, dtype=np.int64) for _ in range(n_users)]
    by_user: list[list[tuple[int, int, int]]] = [[] for _ in range(n_users)]
    for pos in range(events.shape[0]):
        u, i, t = events[pos]
        by_user[u].append((int(t), pos, int(i)))
    for rows in by_user:
        rows.sort(key=lambda r: (r[0], r[1]))  # stable in input order for equal timestamps
        seqs.append(np.array([i for _, _, i in rows], dtype=np.int64))
    return seqs


def load_interactions(path: str | Path, delimiter: str = "\t") -> InteractionLog:
    """Parse `user<TAB>item<TAB>unix_timestamp` lines into a dense-id log."""
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(delimiter)
            if len(parts) != 3:
                raise ParseError(f"{path}: line {lineno}: expected 3 fields, got {len(parts)}")
            raw_u, raw_i, raw_t = parts
            try:
                ts = int(raw_t)
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: bad timestamp {raw_t!r}") from None
            u = users.setdefault(raw_u, len(users))
            i = items.setdefault(raw_i, len(items))
            rows.append((u, i, ts))
    if not rows:
        raise EmptyDatasetError(f"{path}: no events")
    events = np.array(rows, dtype=np.int64)
    return InteractionLog(list(users), list(items), events)


def filter_core(log: InteractionLog, k: int = 5) -> InteractionLog:
    """Iteratively drop users/items with fewer than k events until fixpoint.

    Duplicated events count individually; id registries are re-densified in
    prior dense-id order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    events = log.events
    keep = np.ones(events.shape[0], dtype=bool)
    while True:
        u_counts = np.bincount(events[keep, 0], minlength=log.n_users)
        i_counts = np.bincount(events[keep, 1], minlength=log.n_items)
        bad = (u_counts[events[:, 0]] < k) | (i_counts[events[:, 1]] < k)
        next_keep = keep & ~bad
        if next_keep.sum() == keep.sum():
            break
        keep = next_keep
    kept = events[keep]
    if kept.shape[0] == 0:
        raise EmptyDatasetError(f"{k}-core filtering removed every event")
    old_users = np.unique(kept[:, 0])
    old_items = np.unique(kept[:, 1])
    u_map = {int(o): n for n, o in enumerate(old_users)}
    i_map = {int(o): n for n, o in enumerate(old_items)}
    remapped = kept.copy()
    remapped[:, 0] = [u_map[int(u)] for u in kept[:, 0]]
    remapped[:, 1] = [i_map[int(i)] for i in kept[:, 1]]
    return InteractionLog(
        [log.user_ids[int(o)] for o in old_users],
        [log.item_ids[int(o)] for o in old_items],
        remapped,
    )


def leave_one_out_split(log: InteractionLog, min_len: int = 3) -> SplitDataset:
    """Last item per user is the test target, second-to-last validation, rest train."""
    users, train, valid, test = [], {}, {}, {}
    for u, seq in enumerate(log.per_user):
        if len(seq) < min_len:
            continue
        users.append(u)
        train[u] = seq[:-2].copy()
        valid[u] = int(seq[-2])
        test[u] = int(seq[-1])
    if not users:
        raise EmptyDatasetError(f"no user has at least {min_len} interactions")
    return SplitDataset(users, train, valid, test, log.n_users, log.n_items, min_len)


def compute_stats(log: InteractionLog) -> DatasetStats:
    if log.n_interactions == 0:
        raise EmptyDatasetError("empty log")
    n_u, n_i, n_e = log.n_users, log.n_items, log.n_interactions
    return DatasetStats(
        n_users=n_u,
        n_items=n_i,
        n_interactions=n_e,
        avg_len=n_e / n_u,
        sparsity=1.0 - n_e / (n_u * n_i),
    )


def generate_synthetic(
    seed: int,
    n_users: int,
    n_items: int,
    n_clusters: int,
    d_v: int,
    d_t: int,
    min_len: int = 6,
    max_len: int = 12,
    p_in: float = 0.8,
    noise_v: float = 0.5,
    noise_t: float = 0.5,
    center_scale: float = 1.0,
    popularity_exponent: float = 0.8,
) -> tuple[InteractionLog, ItemCatalog]:
    """Clustered synthetic stand-in where content predicts preference.

    Items belong to latent clusters whose per-modality Gaussian centers define
    the item features; users draw events from a home cluster with probability
    p_in, with within-cluster popularity skewed by popularity_exponent so a
    long tail of rarely-interacted items exists. Deterministic given seed.
    """
    if n_clusters > n_items:
        raise ValueError("n_clusters must be <= n_items")
    rng = np.random.default_rng(seed)
    item_cluster = np.arange(n_items) % n_clusters
    centers_v = rng.normal(0.0, center_scale, size=(n_clusters, d_v))
    centers_t = rng.normal(0.0, center_scale, size=(n_clusters, d_t))
    visual = centers_v[item_cluster] + noise_v * rng.standard_normal((n_items, d_v))
    text = centers_t[item_cluster] + noise_t * rng.standard_normal((n_items, d_t))

    members = [np.flatnonzero(item_cluster == c) for c in range(n_clusters)]
    weights = []
    for m in members:
        w = (np.arange(len(m)) + 1.0) ** (-popularity_exponent)
        weights.append(w / w.sum())

    home = rng.integers(0, n_clusters, size=n_users)
    rows = []
    for u in range(n_users):
        length = int(rng.integers(min_len, max_len + 1))
        for j in range(length):
            if n_clusters == 1 or rng.random() < p_in:
                c = int(home[u])
            else:
                c = int(rng.integers(0, n_clusters - 1))
                if c >= home[u]:
                    c += 1
            item = int(rng.choice(members[c], p=weights[c]))
            rows.append((u, item, j))
    events = np.array(rows, dtype=np.int64)
    log = InteractionLog(
        [f"u{u}" for u in range(n_users)],
        [f"i{i}" for i in range(n_items)],
        events,
    )
    catalog = ItemCatalog(
        list(log.item_ids),
        visual.astype(np.float32),
        text.astype(np.float32),
        np.ones(n_items, dtype=bool),
        np.ones(n_items, dtype=bool),
    )
    return log, catalog


def load_catalog(
    item_ids: list[str],
    visual_path: str | Path,
    visual_ids_path: str | Path,
    text_path: str | Path,
    text_ids_path: str | Path,
) -> ItemCatalog:
    """Load EMB feature matrices with row-aligned raw-id sidecars, aligned to a registry."""
    from .io import read_emb

    def _load(emb_path, ids_path):
        mat = read_emb(emb_path)
        raw = Path(ids_path).read_text(encoding="utf-8").splitlines()
        if len(raw) != mat.shape[0]:
            raise DatasetError(f"{ids_path}: {len(raw)} ids for {mat.shape[0]} feature rows")
        if not np.isfinite(mat).all():
            raise DatasetError(f"{emb_path}: features contain NaN/Inf")
        return mat, raw

    vis, vis_ids = _load(visual_path, visual_ids_path)
    txt, txt_ids = _load(text_path, text_ids_path)
    # Build a temporary catalog over the union of raw ids, then align.
    union = list(dict.fromkeys(vis_ids + txt_ids))
    pos_v = {r: i for i, r in enumerate(vis_ids)}
    pos_t = {r: i for i, r in enumerate(txt_ids)}
    v_rows = np.zeros((len(union), vis.shape[1]), dtype=np.float32)
    t_rows = np.zeros((len(union), txt.shape[1]), dtype=np.float32)
    v_flag = np.zeros(len(union), dtype=bool)
    t_flag = np.zeros(len(union), dtype=bool)
    for j, raw in enumerate(union):
        if raw in pos_v:
            v_rows[j] = vis[pos_v[raw]]
            v_flag[j] = True
        if raw in pos_t:
            t_rows[j] = txt[pos_t[raw]]
            t_flag[j] = True
    return ItemCatalog(union, v_rows, t_rows, v_flag, t_flag).align_to(item_ids)
