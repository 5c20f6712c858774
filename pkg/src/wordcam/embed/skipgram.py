"""Skip-gram embeddings trained with negative sampling.

Pure-numpy SGD over (center, context) pairs. Pairs are processed in chunks
so the update arithmetic is vectorized; within a chunk, repeated rows
accumulate through ``np.add.at``. Deterministic given (sentence order, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from wordcam.corpus import PAD_ID
from wordcam.embed.channels import EmbeddingChannel, Source
from wordcam.errors import ConfigError, DataError

_CHUNK = 2048


def context_pairs(sentences: Sequence[Sequence[int]], window: int) -> np.ndarray:
    """All (center, context) id pairs within +-window, in corpus order."""
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    pairs: list[tuple[int, int]] = []
    for sent in sentences:
        n = len(sent)
        for t in range(n):
            lo = max(0, t - window)
            hi = min(n, t + window + 1)
            for u in range(lo, hi):
                if u != t:
                    pairs.append((sent[t], sent[u]))
    if not pairs:
        raise DataError("no context pairs: every sentence has fewer than 2 tokens")
    return np.asarray(pairs, dtype=np.int64)


class NoiseTable:
    """Unigram^0.75 negative-sampling distribution over real token ids."""

    def __init__(self, sentences: Sequence[Sequence[int]], vocab_size: int):
        counts = np.zeros(vocab_size, dtype=np.float64)
        for sent in sentences:
            for i in sent:
                if i == PAD_ID:
                    raise DataError("padding id in training sentences")
                counts[i] += 1
        weights = counts**0.75
        weights[PAD_ID] = 0.0
        total = weights.sum()
        if total <= 0:
            raise DataError("empty corpus: no tokens to sample negatives from")
        self.cdf = np.cumsum(weights / total)

    def sample(self, rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
        return np.searchsorted(self.cdf, rng.random(shape), side="right")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


@dataclass
class SkipGramFit:
    """Trained input/output tables plus the per-epoch mean pair loss."""

    w_in: np.ndarray
    w_out: np.ndarray
    epoch_losses: list[float] = field(default_factory=list)


def fit_skipgram(
    sentences: Sequence[Sequence[int]],
    vocab_size: int,
    k: int = 100,
    window: int = 3,
    negatives: int = 5,
    epochs: int = 5,
    lr: float = 0.025,
    seed: int = 0,
    chunk: int = _CHUNK,
) -> SkipGramFit:
    """Pairs inside a chunk update against the same stale parameters, so the
    chunk size should stay well below the typical per-token pair count;
    the default suits vocabularies in the thousands, tiny corpora should
    pass something like 32."""
    if k < 1:
        raise ConfigError(f"embedding dimension must be >= 1, got {k}")
    if negatives < 1:
        raise ConfigError(f"need at least one negative sample, got {negatives}")
    if chunk < 1:
        raise ConfigError(f"chunk must be >= 1, got {chunk}")
    rng = np.random.default_rng(seed)
    w_in = rng.uniform(-0.5 / k, 0.5 / k, size=(vocab_size, k))
    w_in[PAD_ID] = 0.0
    w_out = np.zeros((vocab_size, k))
    fit = SkipGramFit(w_in, w_out)
    if epochs == 0:
        # still validates the corpus so a pairless corpus fails fast
        context_pairs(sentences, window)
        return fit

    pairs = context_pairs(sentences, window)
    noise = NoiseTable(sentences, vocab_size)
    total_steps = epochs * len(pairs)
    done = 0
    for _ in range(epochs):
        loss_sum = 0.0
        for start in range(0, len(pairs), chunk):
            block = pairs[start : start + chunk]
            centers, contexts = block[:, 0], block[:, 1]
            step_lr = lr * max(1e-4, 1.0 - done / total_steps)
            done += len(block)

            v = w_in[centers]  # (n, k)
            u_pos = w_out[contexts]  # (n, k)
            negs = noise.sample(rng, (len(block), negatives))
            u_neg = w_out[negs]  # (n, neg, k)

            pos_score = np.einsum("nk,nk->n", v, u_pos)
            neg_score = np.einsum("nk,njk->nj", v, u_neg)
            # a negative that collides with the true context is skipped
            live = negs != contexts[:, None]

            g_pos = _sigmoid(pos_score) - 1.0  # (n,)
            g_neg = _sigmoid(neg_score) * live  # (n, neg)

            loss_sum += -(
                _log_sigmoid(pos_score).sum()
                + (_log_sigmoid(-neg_score) * live).sum()
            )

            grad_v = g_pos[:, None] * u_pos + np.einsum("nj,njk->nk", g_neg, u_neg)
            np.add.at(w_in, centers, -step_lr * grad_v)
            np.add.at(w_out, contexts, -step_lr * g_pos[:, None] * v)
            np.add.at(
                w_out,
                negs.reshape(-1),
                (-step_lr * g_neg[..., None] * v[:, None, :]).reshape(-1, k),
            )
        fit.epoch_losses.append(loss_sum / len(pairs))
    w_in[PAD_ID] = 0.0
    return fit


def train_skipgram(
    sentences: Sequence[Sequence[int]],
    vocab_size: int,
    k: int = 100,
    window: int = 3,
    negatives: int = 5,
    epochs: int = 5,
    lr: float = 0.025,
    seed: int = 0,
    dtype=np.float32,
    chunk: int = _CHUNK,
) -> EmbeddingChannel:
    """Train and materialize the center-word table as an embedding channel."""
    fit = fit_skipgram(
        sentences, vocab_size, k=k, window=window, negatives=negatives,
        epochs=epochs, lr=lr, seed=seed, chunk=chunk,
    )
    table = fit.w_in.astype(dtype)
    table[PAD_ID] = 0.0
    return EmbeddingChannel(table, trainable=True, source=Source.SKIPGRAM)
