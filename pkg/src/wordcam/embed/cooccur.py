"""Embeddings from weighted least-squares factorization of co-occurrence
counts.

The objective per (i, j) entry is f(x) * (w_i . u_j + b_i + c_j - ln x)^2
with f(x) = min(1, (x / x_max)^alpha), optimized by AdaGrad. The final word
vector is the sum of the word and context vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from wordcam.corpus import PAD_ID
from wordcam.embed.channels import EmbeddingChannel, Source
from wordcam.errors import ConfigError, DataError

_CHUNK = 4096


def build_cooc(
    sentences: Sequence[Sequence[int]], window: int
) -> dict[tuple[int, int], int]:
    """Symmetric co-occurrence counts keyed by (min_id, max_id).

    Each ordered co-occurrence event inside +-window adds one count to its
    unordered pair; a token co-occurring with itself produces a diagonal
    entry.
    """
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    counts: dict[tuple[int, int], int] = {}
    for sent in sentences:
        n = len(sent)
        for t in range(n):
            a = sent[t]
            if a == PAD_ID:
                raise DataError("padding id in training sentences")
            for u in range(t + 1, min(n, t + window + 1)):
                b = sent[u]
                key = (a, b) if a <= b else (b, a)
                counts[key] = counts.get(key, 0) + 1
    if not counts:
        raise DataError("no co-occurrences: every sentence has fewer than 2 tokens")
    return counts


@dataclass
class CoocFit:
    w: np.ndarray  # word vectors (V, k)
    u: np.ndarray  # context vectors (V, k)
    b: np.ndarray  # word biases (V,)
    c: np.ndarray  # context biases (V,)
    epoch_losses: list[float] = field(default_factory=list)

    def predict(self, i: int, j: int) -> float:
        """Model value for an entry: should approach ln(count) when trained."""
        return float(self.w[i] @ self.u[j] + self.b[i] + self.c[j])


def fit_cooc(
    cooc: dict[tuple[int, int], int],
    vocab_size: int,
    k: int = 100,
    x_max: float = 100.0,
    alpha: float = 0.75,
    epochs: int = 25,
    lr: float = 0.05,
    seed: int = 0,
) -> CoocFit:
    if k < 1:
        raise ConfigError(f"embedding dimension must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    w = rng.uniform(-0.5 / k, 0.5 / k, size=(vocab_size, k))
    u = rng.uniform(-0.5 / k, 0.5 / k, size=(vocab_size, k))
    b = np.zeros(vocab_size)
    c = np.zeros(vocab_size)
    # AdaGrad accumulators start at 1 so the first steps are ~lr-sized
    gw = np.ones_like(w)
    gu = np.ones_like(u)
    gb = np.ones_like(b)
    gc = np.ones_like(c)

    # train both orientations of off-diagonal pairs, diagonal once
    rows, cols, xs = [], [], []
    for (i, j), x in sorted(cooc.items()):
        rows.append(i)
        cols.append(j)
        xs.append(x)
        if i != j:
            rows.append(j)
            cols.append(i)
            xs.append(x)
    rows_a = np.asarray(rows)
    cols_a = np.asarray(cols)
    logx = np.log(np.asarray(xs, dtype=np.float64))
    weight = np.minimum(1.0, (np.asarray(xs, dtype=np.float64) / x_max) ** alpha)

    fit = CoocFit(w, u, b, c)
    n = len(rows_a)
    for _ in range(epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, _CHUNK):
            sel = order[start : start + _CHUNK]
            i, j = rows_a[sel], cols_a[sel]
            f = weight[sel]
            diff = np.einsum("nk,nk->n", w[i], u[j]) + b[i] + c[j] - logx[sel]
            loss_sum += float((f * diff**2).sum())
            g = 2.0 * f * diff  # (n,)

            grad_wi = g[:, None] * u[j]
            grad_uj = g[:, None] * w[i]
            np.add.at(gw, i, grad_wi**2)
            np.add.at(gu, j, grad_uj**2)
            np.add.at(gb, i, g**2)
            np.add.at(gc, j, g**2)
            np.add.at(w, i, -lr * grad_wi / np.sqrt(gw[i]))
            np.add.at(u, j, -lr * grad_uj / np.sqrt(gu[j]))
            np.add.at(b, i, -lr * g / np.sqrt(gb[i]))
            np.add.at(c, j, -lr * g / np.sqrt(gc[j]))
        fit.epoch_losses.append(loss_sum / n)
    w[PAD_ID] = 0.0
    u[PAD_ID] = 0.0
    b[PAD_ID] = 0.0
    c[PAD_ID] = 0.0
    return fit


def train_cooc_factor(
    sentences: Sequence[Sequence[int]],
    vocab_size: int,
    k: int = 100,
    window: int = 3,
    x_max: float = 100.0,
    alpha: float = 0.75,
    epochs: int = 25,
    lr: float = 0.05,
    seed: int = 0,
    dtype=np.float32,
) -> EmbeddingChannel:
    """Build counts, factorize, and materialize word + context vector sums."""
    cooc = build_cooc(sentences, window)
    fit = fit_cooc(
        cooc, vocab_size, k=k, x_max=x_max, alpha=alpha, epochs=epochs,
        lr=lr, seed=seed,
    )
    table = (fit.w + fit.u).astype(dtype)
    table[PAD_ID] = 0.0
    return EmbeddingChannel(table, trainable=True, source=Source.COOC)
