"""Embedding channels: V x k tables plus their update policy.

A channel is one embedding table used as one input plane of the CNN. Row 0
belongs to the padding token and is pinned to zero; the model additionally
masks id-0 positions, so the pin is structural, not just an initialization.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from wordcam.corpus import Vocabulary
from wordcam.errors import ConfigError, DataError

_MAGIC = b"WEMB1\n"


class Source(Enum):
    RAND = "rand"
    SKIPGRAM = "skipgram"
    COOC = "cooc"
    SUBWORD = "subword"


class InputMode(Enum):
    RAND = "rand"
    STATIC = "static"
    NON_STATIC = "non-static"
    TWO_CH = "2ch"
    FOUR_CH = "4ch"

    @classmethod
    def parse(cls, s: str) -> "InputMode":
        for m in cls:
            if m.value == s.lower():
                return m
        raise ConfigError(f"unknown input mode {s!r} (choose from "
                          f"{', '.join(m.value for m in cls)})")


@dataclass
class EmbeddingChannel:
    table: np.ndarray  # (V, k)
    trainable: bool
    source: Source

    def __post_init__(self):
        if self.table.ndim != 2 or self.table.shape[0] < 1:
            raise ConfigError(f"embedding table must be (V, k), got {self.table.shape}")
        if not np.all(np.isfinite(self.table)):
            raise DataError("embedding table contains non-finite entries")
        if np.any(self.table[0] != 0.0):
            raise DataError("padding row (id 0) must be zero")

    @property
    def vocab_size(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def copy(self, trainable: bool | None = None) -> "EmbeddingChannel":
        t = self.trainable if trainable is None else trainable
        return replace(self, table=self.table.copy(), trainable=t)

    def digest(self) -> str:
        import hashlib

        return hashlib.sha256(np.ascontiguousarray(self.table).tobytes()).hexdigest()


@dataclass
class ChannelConfig:
    mode: InputMode
    channels: tuple[EmbeddingChannel, ...]

    def __post_init__(self):
        expected = {
            InputMode.RAND: 1,
            InputMode.STATIC: 1,
            InputMode.NON_STATIC: 1,
            InputMode.TWO_CH: 2,
            InputMode.FOUR_CH: 4,
        }[self.mode]
        if len(self.channels) != expected:
            raise ConfigError(
                f"mode {self.mode.value} needs {expected} channel(s), "
                f"got {len(self.channels)}"
            )
        shapes = {c.table.shape for c in self.channels}
        if len(shapes) != 1:
            raise ConfigError(f"channels disagree on (V, k): {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.channels)

    def __iter__(self):
        return iter(self.channels)

    def __getitem__(self, i: int) -> EmbeddingChannel:
        return self.channels[i]

    @property
    def vocab_size(self) -> int:
        return self.channels[0].vocab_size

    @property
    def dim(self) -> int:
        return self.channels[0].dim


def init_random(
    vocab_size: int, k: int, seed: int, dtype=np.float32
) -> EmbeddingChannel:
    """Uniform [-0.25, 0.25] init with the padding row zeroed."""
    if vocab_size < 1 or k < 1:
        raise ConfigError(f"need V >= 1 and k >= 1, got V={vocab_size}, k={k}")
    rng = np.random.default_rng(seed)
    table = rng.uniform(-0.25, 0.25, size=(vocab_size, k)).astype(dtype)
    table[0] = 0.0
    return EmbeddingChannel(table, trainable=True, source=Source.RAND)


def assemble(
    mode: InputMode,
    rand: EmbeddingChannel | None = None,
    skipgram: EmbeddingChannel | None = None,
    cooc: EmbeddingChannel | None = None,
    subword: EmbeddingChannel | None = None,
) -> ChannelConfig:
    """Build the channel stack for an input mode from trained source tables.

    Two-channel mode pairs a frozen and a trainable copy of the same
    skip-gram table; four-channel mode stacks skip-gram, co-occurrence, and
    subword tables plus a second independent skip-gram copy, all trainable.
    """

    def need(ch: EmbeddingChannel | None, what: str) -> EmbeddingChannel:
        if ch is None:
            raise ConfigError(f"mode {mode.value} requires a {what} channel")
        return ch

    if mode is InputMode.RAND:
        chans = (need(rand, "random-init").copy(trainable=True),)
    elif mode is InputMode.STATIC:
        chans = (need(skipgram, "skip-gram").copy(trainable=False),)
    elif mode is InputMode.NON_STATIC:
        chans = (need(skipgram, "skip-gram").copy(trainable=True),)
    elif mode is InputMode.TWO_CH:
        sg = need(skipgram, "skip-gram")
        chans = (sg.copy(trainable=False), sg.copy(trainable=True))
    else:  # FOUR_CH
        sg = need(skipgram, "skip-gram")
        chans = (
            sg.copy(trainable=True),
            need(cooc, "co-occurrence").copy(trainable=True),
            need(subword, "subword").copy(trainable=True),
            sg.copy(trainable=True),
        )
    return ChannelConfig(mode, chans)


# ---------------------------------------------------------------------------
# Persistence: binary container and text interop
# ---------------------------------------------------------------------------


def save_channel(channel: EmbeddingChannel, path: Path | str) -> None:
    """Binary container: magic, JSON header, then row-major float32 data."""
    header = json.dumps(
        {
            "v": channel.vocab_size,
            "k": channel.dim,
            "source": channel.source.value,
            "trainable": channel.trainable,
        },
        sort_keys=True,
    ).encode("utf-8")
    body = np.ascontiguousarray(channel.table, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(body)


def load_channel(path: Path | str) -> EmbeddingChannel:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise DataError(f"{path}: not an embedding channel file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(hlen).decode("utf-8"))
        body = fh.read()
    table = np.frombuffer(body, dtype="<f4").reshape(meta["v"], meta["k"]).copy()
    return EmbeddingChannel(table, bool(meta["trainable"]), Source(meta["source"]))


def export_text(channel: EmbeddingChannel, vocab: Vocabulary, path: Path | str) -> None:
    """One ``token v1 ... vk`` line per vocabulary entry, pad row included."""
    if len(vocab) != channel.vocab_size:
        raise DataError("vocabulary size does not match channel table")
    with open(path, "w", encoding="utf-8") as fh:
        for i, tok in enumerate(vocab.id_to_token):
            vec = " ".join(repr(float(x)) for x in channel.table[i])
            fh.write(f"{tok} {vec}\n")


def import_text(
    path: Path | str,
    vocab: Vocabulary,
    trainable: bool = True,
    source: Source = Source.RAND,
) -> EmbeddingChannel:
    """Load ``token v1 ... vk`` lines; tokens missing from the file stay zero."""
    rows: dict[str, np.ndarray] = {}
    k = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        parts = line.split(" ")
        vec = np.array([float(x) for x in parts[1:]], dtype=np.float32)
        if k is None:
            k = vec.size
        elif vec.size != k:
            raise DataError(f"{path}: inconsistent vector lengths")
        rows[parts[0]] = vec
    if k is None:
        raise DataError(f"{path}: no vectors found")
    table = np.zeros((len(vocab), k), dtype=np.float32)
    for tok, vec in rows.items():
        idx = vocab.token_to_id.get(tok)
        if idx is not None and idx != 0:
            table[idx] = vec
    return EmbeddingChannel(table, trainable=trainable, source=source)
