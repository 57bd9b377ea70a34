"""Item collaborative embeddings from the user-item graph.

Layer-wise symmetric-normalized neighborhood propagation (no transforms, no
nonlinearity), trained with pairwise ranking on training-prefix edges only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .data import SplitDataset
from .seeding import seed_all


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class BipartiteGraph:
    n_users: int
    n_items: int
    edges: np.ndarray        # (E, 2) int64, deduplicated, sorted by (u, i)
    deg_u: np.ndarray        # (n_users,) int64 incident-edge counts
    deg_i: np.ndarray


@dataclass
class CollabEmbeddings:
    user_emb: np.ndarray     # (n_users, d)
    item_emb: np.ndarray     # (n_items, d)
    n_layers: int


@dataclass
class CollabTrainConfig:
    d: int = 64
    n_layers: int = 3
    lr: float = 0.05
    epochs: int = 10
    reg: float = 1e-4
    seed: int = 0
    batch: int = 1024


def build_graph(split: SplitDataset) -> BipartiteGraph:
    """One edge per distinct (user, item) pair in the training prefixes."""
    pairs = set()
    for u in split.users:
        for i in split.train[u]:
            pairs.add((u, int(i)))
    if not pairs:
        raise ValueError("split has no training interactions")
    edges = np.array(sorted(pairs), dtype=np.int64)
    deg_u = np.bincount(edges[:, 0], minlength=split.n_users)
    deg_i = np.bincount(edges[:, 1], minlength=split.n_items)
    return BipartiteGraph(split.n_users, split.n_items, edges, deg_u, deg_i)


def _norm_adjacency(graph: BipartiteGraph) -> torch.Tensor:
    """Sparse (U+I)x(U+I) bipartite adjacency with 1/sqrt(deg_u*deg_i) weights."""
    u = graph.edges[:, 0]
    i = graph.edges[:, 1] + graph.n_users
    w = 1.0 / np.sqrt(graph.deg_u[graph.edges[:, 0]] * graph.deg_i[graph.edges[:, 1]])
    idx = torch.tensor(np.stack([np.concatenate([u, i]), np.concatenate([i, u])]))
    val = torch.tensor(np.concatenate([w, w]), dtype=torch.float64)
    n = graph.n_users + graph.n_items
    return torch.sparse_coo_tensor(idx, val, (n, n)).coalesce()


def _propagate_mean(adj: torch.Tensor, emb0: torch.Tensor, n_layers: int) -> torch.Tensor:
    layers = [emb0]
    x = emb0
    for _ in range(n_layers):
        x = torch.sparse.mm(adj, x)
        layers.append(x)
    return torch.stack(layers).mean(dim=0)


def propagate(graph: BipartiteGraph, emb0: CollabEmbeddings) -> CollabEmbeddings:
    """Average of propagation layers 0..n_layers; degree-0 nodes receive zeros."""
    adj = _norm_adjacency(graph)
    stacked = torch.tensor(
        np.concatenate([emb0.user_emb, emb0.item_emb]), dtype=torch.float64
    )
    out = _propagate_mean(adj, stacked, emb0.n_layers).numpy()
    return CollabEmbeddings(out[: graph.n_users], out[graph.n_users :], emb0.n_layers)


def bpr_loss(
    adj: torch.Tensor,
    emb0: torch.Tensor,
    users: torch.Tensor,
    pos: torch.Tensor,
    neg: torch.Tensor,
    n_users: int,
    n_layers: int,
    reg: float,
) -> torch.Tensor:
    """Mean softplus(-(s_pos - s_neg)) over pairs plus reg * ||emb0||^2."""
    final = _propagate_mean(adj, emb0, n_layers)
    ue = final[users]
    pe = final[pos + n_users]
    ne = final[neg + n_users]
    s_pos = (ue * pe).sum(dim=1)
    s_neg = (ue * ne).sum(dim=1)
    loss = F.softplus(-(s_pos - s_neg)).mean()
    if reg:
        loss = loss + reg * emb0.pow(2).sum()
    return loss


def _sample_negatives(rng: np.random.Generator, users: np.ndarray, interacted: list[set], n_items: int) -> np.ndarray:
    neg = rng.integers(0, n_items, size=len(users))
    for row, u in enumerate(users):
        while int(neg[row]) in interacted[u]:
            neg[row] = rng.integers(0, n_items)
    return neg


def bpr_train(graph: BipartiteGraph, cfg: CollabTrainConfig) -> CollabEmbeddings:
    """Plain-SGD pairwise training; returns the final propagated embeddings."""
    rng = seed_all(cfg.seed)
    adj = _norm_adjacency(graph)
    emb0 = torch.nn.Parameter(
        torch.tensor(
            rng.normal(0.0, 0.01, size=(graph.n_users + graph.n_items, cfg.d)),
            dtype=torch.float64,
        )
    )
    opt = torch.optim.SGD([emb0], lr=cfg.lr)
    interacted = [set() for _ in range(graph.n_users)]
    for u, i in graph.edges:
        interacted[int(u)].add(int(i))
    # users whose interaction set covers the catalog admit no negative sample
    trainable = np.array([len(interacted[int(u)]) < graph.n_items for u in graph.edges[:, 0]])
    edges = graph.edges[trainable]
    if edges.shape[0] == 0:
        raise ValueError("no trainable pairs: every user interacted with every item")

    for _ in range(cfg.epochs):
        order = rng.permutation(edges.shape[0])
        for start in range(0, len(order), cfg.batch):
            batch = edges[order[start : start + cfg.batch]]
            neg = _sample_negatives(rng, batch[:, 0], interacted, graph.n_items)
            loss = bpr_loss(
                adj,
                emb0,
                torch.tensor(batch[:, 0]),
                torch.tensor(batch[:, 1]),
                torch.tensor(neg),
                graph.n_users,
                cfg.n_layers,
                cfg.reg,
            )
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite pairwise loss (lr={cfg.lr}); lower lr or reg"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()

    with torch.no_grad():
        final = _propagate_mean(adj, emb0, cfg.n_layers).numpy()
    return CollabEmbeddings(final[: graph.n_users], final[graph.n_users :], cfg.n_layers)
