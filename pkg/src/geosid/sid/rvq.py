"""Residual vector quantization by per-level k-means.

Each level clusters the residuals left by the previous one. Lloyd
iterations only move a point when another centroid is strictly closer, so
the recorded squared error never goes up between iterations, and every
level runs at least one centroid update, so a level never does worse than
leaving its residuals untouched.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class RvqModel:
    codebooks: list[np.ndarray]
    # one list of per-iteration squared errors per level
    error_trace: list[list[float]] = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.codebooks)

    @property
    def dim(self) -> int:
        return self.codebooks[0].shape[1]

    def to_json(self) -> str:
        payload = {
            "codebooks": [cb.tolist() for cb in self.codebooks],
            "error_trace": self.error_trace,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RvqModel":
        payload = json.loads(text)
        books = [np.asarray(cb, dtype=np.float64) for cb in payload["codebooks"]]
        return cls(books, payload.get("error_trace", []))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RvqModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _sq_dists(x: np.ndarray, centroids: np.ndarray, budget: int = 1 << 22) -> np.ndarray:
    # explicit differences rather than the dot-product expansion, so that
    # identical points get exactly zero distance
    k, d = centroids.shape
    step = max(1, budget // max(1, k * d))
    out = np.empty((x.shape[0], k))
    for start in range(0, x.shape[0], step):
        diff = x[start : start + step, None, :] - centroids[None, :, :]
        out[start : start + step] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; stops early once every point coincides with a centroid."""
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(x, x[chosen]).min(axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total <= 0.0:
            break
        idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(x, x[idx : idx + 1])[:, 0])
    return x[chosen].copy()


def lloyd(
    x: np.ndarray,
    centroids: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Run Lloyd iterations from ``centroids``.

    Returns (centroids, assignments, per-iteration squared error). Stops
    after ``max_iter`` updates, when assignments stop changing, or when the
    relative error change drops below ``tol``.
    """
    centroids = centroids.copy()
    dists = _sq_dists(x, centroids)
    assign = dists.argmin(axis=1)
    rows = np.arange(x.shape[0])
    errors = [float(dists[rows, assign].sum())]
    for _ in range(max_iter):
        for c in range(centroids.shape[0]):
            members = assign == c
            if members.any():
                centroids[c] = x[members].mean(axis=0)
            # empty clusters keep their previous centroid
        dists = _sq_dists(x, centroids)
        best = dists.argmin(axis=1)
        current = dists[rows, assign]
        move = dists[rows, best] < current
        new_assign = np.where(move, best, assign)
        err = float(dists[rows, new_assign].sum())
        changed = bool(move.any())
        assign = new_assign
        prev = errors[-1]
        errors.append(err)
        if not changed:
            break
        if prev > 0 and abs(prev - err) / prev < tol:
            break
    return centroids, assign, errors


def train_rvq(
    embeddings: np.ndarray | list,
    levels: int = 2,
    codebook_size: int = 28,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> RvqModel:
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected a non-empty (n, d) matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("embeddings contain non-finite values")
    if levels < 1 or codebook_size < 1:
        raise ValueError("levels and codebook_size must be >= 1")
    rng = np.random.default_rng(seed)
    residual = x.copy()
    books, trace = [], []
    for _ in range(levels):
        init = kmeans_pp_init(residual, codebook_size, rng)
        centroids, assign, errors = lloyd(residual, init, max_iter=max_iter, tol=tol)
        books.append(centroids)
        trace.append(errors)
        residual = residual - centroids[assign]
    return RvqModel(books, trace)


def encode_semantic(v: np.ndarray | list, model: RvqModel) -> list[int]:
    """Greedy nearest centroid per level on successive residuals."""
    r = np.asarray(v, dtype=np.float64)
    if r.shape != (model.dim,):
        raise ValueError(f"expected a vector of dimension {model.dim}, got shape {r.shape}")
    codes = []
    for book in model.codebooks:
        d = ((book - r) ** 2).sum(axis=1)
        idx = int(d.argmin())
        codes.append(idx)
        r = r - book[idx]
    return codes


def reconstruction_errors(x: np.ndarray, model: RvqModel) -> list[float]:
    """Total squared residual after each level when encoding every row of ``x``."""
    residual = np.asarray(x, dtype=np.float64).copy()
    out = []
    for book in model.codebooks:
        idx = _sq_dists(residual, book).argmin(axis=1)
        residual = residual - book[idx]
        out.append(float((residual**2).sum()))
    return out
