"""Modality reduction and collaborative-guided attention fusion.

Each item's visual and textual vectors are softmax-weighted using the
collaborative embedding as the attention query; the fused vector is the
weighted content sum concatenated with the collaborative embedding itself.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn


class ConfigurationError(ValueError):
    pass


@dataclass
class PcaReducer:
    mean: np.ndarray                 # (source_d,)
    components: np.ndarray           # (target_d, source_d), orthonormal rows
    explained_variance: np.ndarray   # (target_d,)

    def project(self, x: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(x) - self.mean) @ self.components.T

    def inverse(self, y: np.ndarray) -> np.ndarray:
        return np.atleast_2d(y) @ self.components + self.mean


def fit_pca(features: np.ndarray, target_d: int) -> PcaReducer:
    """Mean-centered maximal-variance projection with a deterministic sign rule:
    the largest-magnitude entry of every component is positive. Components past
    the input rank come from the SVD's orthonormal completion with variance 0.
    """
    x = np.asarray(features, dtype=np.float64)
    n, s = x.shape
    if target_d > min(n, s):
        raise ValueError(f"target_d={target_d} exceeds min(rows, cols)={min(n, s)}")
    mean = x.mean(axis=0)
    _, sv, vt = np.linalg.svd(x - mean, full_matrices=False)
    comps = vt[:target_d].copy()
    for r in range(comps.shape[0]):
        j = int(np.argmax(np.abs(comps[r])))
        if comps[r, j] < 0:
            comps[r] = -comps[r]
    var = sv[:target_d] ** 2 / max(n - 1, 1)
    tol = max(n, s) * np.finfo(np.float64).eps * (sv[0] if sv.size else 0.0)
    var[sv[:target_d] <= tol] = 0.0
    return PcaReducer(mean, comps, var)


def reduce_to_dim(features: np.ndarray, d: int) -> tuple[np.ndarray, PcaReducer]:
    """PCA to min(d, rank bound), zero-padding columns up to d when the raw
    modality is narrower than the fusion dimension."""
    x = np.asarray(features, dtype=np.float64)
    t = min(d, x.shape[0], x.shape[1])
    reducer = fit_pca(x, t)
    projected = reducer.project(x)
    if t < d:
        projected = np.hstack([projected, np.zeros((x.shape[0], d - t))])
    return projected, reducer


@dataclass
class AttentionWeights:
    alpha_v: float
    alpha_t: float


class GuidedFusion(nn.Module):
    """Learnable query/key projections producing 2-way modality weights.

    Ablation switches: inactive modalities are zeroed and dropped from the
    softmax; without collaborative guidance the weights fall back to uniform
    over the active modalities. Double precision keeps gradient checks tight.
    """

    def __init__(self, d: int, seed: int = 0, use_collab: bool = True,
                 use_visual: bool = True, use_text: bool = True):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        eye = torch.eye(d, dtype=torch.float64)
        noise = lambda: 0.01 * torch.randn(d, d, generator=gen, dtype=torch.float64)
        self.w_q = nn.Parameter(eye + noise())
        self.w_k = nn.Parameter(eye + noise())
        self.d = d
        self.use_collab = use_collab
        self.use_visual = use_visual
        self.use_text = use_text

    def attention(self, e_c: torch.Tensor, e_v: torch.Tensor, e_t: torch.Tensor) -> torch.Tensor:
        """Per-row (alpha_v, alpha_t); masked modalities get exactly 0."""
        n = e_c.shape[0]
        active = [self.use_visual, self.use_text]
        if not any(active):
            return torch.zeros((n, 2), dtype=torch.float64)
        if not self.use_collab or sum(active) == 1:
            alpha = torch.tensor(active, dtype=torch.float64) / sum(active)
            return alpha.expand(n, 2).clone()
        q = e_c @ self.w_q.T
        logits = torch.stack([(q * (e_v @ self.w_k.T)).sum(1), (q * (e_t @ self.w_k.T)).sum(1)], dim=1)
        logits = logits - logits.max(dim=1, keepdim=True).values
        return torch.softmax(logits, dim=1)

    def forward(self, e_c: torch.Tensor, e_v: torch.Tensor, e_t: torch.Tensor) -> torch.Tensor:
        for name, t in (("e_c", e_c), ("e_v", e_v), ("e_t", e_t)):
            if t.shape[1] != self.d:
                raise ConfigurationError(f"{name} has width {t.shape[1]}, fusion expects {self.d}")
        e_c = e_c if self.use_collab else torch.zeros_like(e_c)
        e_v = e_v if self.use_visual else torch.zeros_like(e_v)
        e_t = e_t if self.use_text else torch.zeros_like(e_t)
        alpha = self.attention(e_c, e_v, e_t)
        content = alpha[:, :1] * e_v + alpha[:, 1:] * e_t
        return torch.cat([content, e_c], dim=1)


def guided_attention(e_c: np.ndarray, e_v: np.ndarray, e_t: np.ndarray,
                     fusion: GuidedFusion) -> AttentionWeights:
    with torch.no_grad():
        a = fusion.attention(
            torch.as_tensor(e_c, dtype=torch.float64).reshape(1, -1),
            torch.as_tensor(e_v, dtype=torch.float64).reshape(1, -1),
            torch.as_tensor(e_t, dtype=torch.float64).reshape(1, -1),
        )[0]
    return AttentionWeights(float(a[0]), float(a[1]))


def fuse(e_c: np.ndarray, e_v: np.ndarray, e_t: np.ndarray, w: AttentionWeights) -> np.ndarray:
    """[alpha_v * e_v + alpha_t * e_t ; e_c] — the second half copies e_c verbatim."""
    e_c = np.asarray(e_c, dtype=np.float64)
    content = w.alpha_v * np.asarray(e_v, dtype=np.float64) + w.alpha_t * np.asarray(e_t, dtype=np.float64)
    return np.concatenate([content, e_c])


def fuse_catalog(visual_d: np.ndarray, text_d: np.ndarray, collab_items: np.ndarray,
                 fusion: GuidedFusion) -> np.ndarray:
    """Row-wise fusion of reduced modality matrices with item collaborative embeddings."""
    shapes = {"visual": visual_d, "text": text_d, "collab": collab_items}
    n = collab_items.shape[0]
    for name, mat in shapes.items():
        if mat.shape != (n, fusion.d):
            raise ConfigurationError(
                f"{name} matrix has shape {mat.shape}, expected ({n}, {fusion.d})"
            )
    with torch.no_grad():
        x = fusion(
            torch.as_tensor(collab_items, dtype=torch.float64),
            torch.as_tensor(visual_d, dtype=torch.float64),
            torch.as_tensor(text_d, dtype=torch.float64),
        )
    return x.numpy()
