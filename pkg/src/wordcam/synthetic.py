"""Synthetic review corpora with a planted sentiment token.

Each sentence is neutral filler plus exactly one planted token ("good" or
"bad") at a random position; the label is determined by the planted token.
Useful for end-to-end sanity checks: a sound attention mechanism must find
the planted word.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wordcam.corpus import Polarity, TokenizedExample


@dataclass(frozen=True)
class PlantedCorpus:
    examples: tuple[TokenizedExample, ...]
    positive_token: str
    negative_token: str


def planted_corpus(
    n_sentences: int = 2000,
    n_filler: int = 50,
    min_len: int = 8,
    max_len: int = 16,
    positive_token: str = "good",
    negative_token: str = "bad",
    seed: int = 0,
) -> PlantedCorpus:
    rng = np.random.default_rng(seed)
    filler = [f"filler{i:02d}" for i in range(n_filler)]
    examples = []
    for i in range(n_sentences):
        positive = i % 2 == 0
        planted = positive_token if positive else negative_token
        length = int(rng.integers(min_len, max_len + 1))
        words = [filler[int(j)] for j in rng.integers(0, n_filler, size=length)]
        words[int(rng.integers(0, length))] = planted
        label = Polarity.POSITIVE if positive else Polarity.NEGATIVE
        examples.append(TokenizedExample(tuple(words), label))
    return PlantedCorpus(tuple(examples), positive_token, negative_token)
