"""The sentence CNN: padded input matrices, multi-height convolution banks
with ReLU, average pooling, and a fully connected output, with hand-written
backpropagation.

Conventions used throughout:

* ids arrive right-padded with the pad id to length d; true word counts
  travel separately because out-of-vocabulary tokens also encode to id 0.
* every id-0 position contributes an exactly-zero embedding row, so the pad
  row of a table never influences the loss and receives zero gradient.
* for filter height h the input is framed by h-1 zero rows on each side,
  giving feature maps of length I = d + h - 1 and placing every word in
  exactly h convolution windows.
* the pooled feature vector z concatenates heights in ascending order,
  filter index ascending within a height; the fully connected layer and the
  attention scores both index it that way.
* reductions (pooling means, losses) accumulate in float64 regardless of
  the storage dtype.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from wordcam.corpus import PAD_ID
from wordcam.embed.channels import ChannelConfig, EmbeddingChannel, InputMode, Source
from wordcam.errors import ConfigError, DataError

_CKPT_MAGIC = b"WCAMCKPT1\n"


@dataclass(frozen=True)
class ModelHyper:
    k: int
    d: int
    heights: tuple[int, ...] = (3, 4, 5)
    n_filters: int = 128
    n_classes: int = 2
    n_channels: int = 1

    def __post_init__(self):
        if self.k < 1 or self.d < 1 or self.n_filters < 1:
            raise ConfigError("k, d, and n_filters must all be >= 1")
        if self.n_classes < 2:
            raise ConfigError("need at least 2 classes")
        if self.n_channels < 1:
            raise ConfigError("need at least 1 channel")
        hs = tuple(sorted(self.heights))
        if not hs or any(h < 1 for h in hs) or len(set(hs)) != len(hs):
            raise ConfigError(f"heights must be distinct and >= 1, got {self.heights}")
        object.__setattr__(self, "heights", hs)

    @property
    def n_features(self) -> int:
        """Length of the pooled vector: one block of n_filters per height."""
        return len(self.heights) * self.n_filters

    def fmap_len(self, h: int) -> int:
        return self.d + h - 1

    def feature_slice(self, h: int) -> slice:
        i = self.heights.index(h)
        return slice(i * self.n_filters, (i + 1) * self.n_filters)


@dataclass
class ModelParams:
    hyper: ModelHyper
    conv_w: dict[int, np.ndarray]  # h -> (C, n_filters, h*k)
    conv_b: dict[int, np.ndarray]  # h -> (n_filters,)
    fc_w: np.ndarray  # (n_classes, n_features)
    fc_b: np.ndarray  # (n_classes,)

    @classmethod
    def init(
        cls,
        hyper: ModelHyper,
        seed: int = 0,
        w_scale: float = 0.1,
        b_init: float = 0.1,
        dtype=np.float32,
    ) -> "ModelParams":
        rng = np.random.default_rng(seed)
        conv_w = {}
        conv_b = {}
        for h in hyper.heights:
            conv_w[h] = rng.normal(
                0.0, w_scale, size=(hyper.n_channels, hyper.n_filters, h * hyper.k)
            ).astype(dtype)
            conv_b[h] = np.full(hyper.n_filters, b_init, dtype=dtype)
        fc_w = rng.normal(0.0, w_scale, size=(hyper.n_classes, hyper.n_features))
        return cls(hyper, conv_w, conv_b, fc_w.astype(dtype), np.zeros(hyper.n_classes, dtype=dtype))

    @classmethod
    def zeros(cls, hyper: ModelHyper, dtype=np.float32) -> "ModelParams":
        conv_w = {
            h: np.zeros((hyper.n_channels, hyper.n_filters, h * hyper.k), dtype=dtype)
            for h in hyper.heights
        }
        conv_b = {h: np.zeros(hyper.n_filters, dtype=dtype) for h in hyper.heights}
        return cls(
            hyper,
            conv_w,
            conv_b,
            np.zeros((hyper.n_classes, hyper.n_features), dtype=dtype),
            np.zeros(hyper.n_classes, dtype=dtype),
        )

    @property
    def dtype(self):
        return self.fc_w.dtype

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Parameter arrays in a fixed, documented order."""
        out = []
        for h in self.hyper.heights:
            out.append((f"conv_w[{h}]", self.conv_w[h]))
            out.append((f"conv_b[{h}]", self.conv_b[h]))
        out.append(("fc_w", self.fc_w))
        out.append(("fc_b", self.fc_b))
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.hyper,
            {h: w.copy() for h, w in self.conv_w.items()},
            {h: b.copy() for h, b in self.conv_b.items()},
            self.fc_w.copy(),
            self.fc_b.copy(),
        )

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            self.hyper,
            {h: w.astype(dtype) for h, w in self.conv_w.items()},
            {h: b.astype(dtype) for h, b in self.conv_b.items()},
            self.fc_w.astype(dtype),
            self.fc_b.astype(dtype),
        )

    def weight_sq_norm(self) -> float:
        """Sum of squared convolution and FC weights (biases excluded)."""
        total = float(np.sum(self.fc_w.astype(np.float64) ** 2))
        for w in self.conv_w.values():
            total += float(np.sum(w.astype(np.float64) ** 2))
        return total


@dataclass
class Gradients:
    conv_w: dict[int, np.ndarray]
    conv_b: dict[int, np.ndarray]
    fc_w: np.ndarray
    fc_b: np.ndarray
    emb: dict[int, np.ndarray] = field(default_factory=dict)  # trainable channels only


@dataclass
class ForwardTrace:
    """Everything forward() computed, kept for backprop and attention.

    Arrays carry a leading batch axis; single-sentence calls produce B=1.
    """

    ids: np.ndarray  # (B, d) right-padded with PAD_ID
    n_words: np.ndarray  # (B,) true token counts
    embedded: np.ndarray  # (B, C, d, k) with id-0 rows zeroed
    fmaps: dict[int, np.ndarray]  # h -> (B, I_h, n_filters), post-ReLU
    pooled: np.ndarray  # (B, n_features)
    dropout_mask: np.ndarray | None  # (B, n_features), includes 1/keep scaling
    pooled_dropped: np.ndarray  # (B, n_features)
    logits: np.ndarray  # (B, n_classes)
    mode: str

    @property
    def batch_size(self) -> int:
        return self.ids.shape[0]


# ---------------------------------------------------------------------------
# Elementary operations (single-example views used by tests and attention)
# ---------------------------------------------------------------------------


def pad_ids(ids: Sequence[int], d: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size > d:
        raise DataError(f"id sequence of length {ids.size} exceeds d={d}")
    out = np.full(d, PAD_ID, dtype=np.int64)
    out[: ids.size] = ids
    return out


def pad_input(ids: Sequence[int], channel: EmbeddingChannel, h: int, d: int) -> np.ndarray:
    """Embed one sentence and frame it with h-1 zero rows on each side.

    Sequences shorter than d are right-padded with the pad id first, so the
    result always has d + 2(h-1) rows.
    """
    padded = pad_ids(ids, d)
    if padded.max(initial=0) >= channel.vocab_size or padded.min(initial=0) < 0:
        raise DataError("token id out of range for the embedding table")
    emb = channel.table[padded].astype(channel.table.dtype, copy=True)
    emb[padded == PAD_ID] = 0.0
    frame = np.zeros((h - 1, channel.dim), dtype=emb.dtype)
    return np.concatenate([frame, emb, frame], axis=0)


def _windows(x: np.ndarray, h: int) -> np.ndarray:
    """Sliding windows over the row axis, flattened to rows of length h*k.

    x has shape (..., L, k); the result is (..., L-h+1, h*k) with window rows
    laid out position-major (row j holds x[j] .. x[j+h-1] concatenated).
    """
    length = x.shape[-2] - h + 1
    return np.concatenate([x[..., t : t + length, :] for t in range(h)], axis=-1)


def conv_relu(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """ReLU convolution responses: F[j, i] = relu(<w_i, window_j> + b_i).

    Accepts a single padded input (L, k) with filters (n_filters, h*k) or a
    channel stack (C, L, k) with filters (C, n_filters, h*k); channel inner
    products are summed before the bias and the ReLU.
    """
    x = np.asarray(x)
    w = np.asarray(w)
    if x.ndim == 2 and w.ndim == 2:
        x = x[None]
        w = w[None]
    if x.ndim != 3 or w.ndim != 3 or x.shape[0] != w.shape[0]:
        raise ValueError(f"inconsistent shapes: x {x.shape}, w {w.shape}")
    k = x.shape[-1]
    hk = w.shape[-1]
    if hk % k != 0:
        raise ValueError(f"filter width {hk} is not a multiple of k={k}")
    h = hk // k
    if x.shape[-2] < h:
        raise ValueError(f"input of {x.shape[-2]} rows is shorter than h={h}")
    wins = _windows(x, h)  # (C, I, h*k)
    pre = np.tensordot(wins, w, axes=([0, 2], [0, 2])) + b
    return np.maximum(pre, 0.0)


def avg_pool(fmap: np.ndarray) -> np.ndarray:
    """Mean over feature-map positions (axis -2), accumulated in float64."""
    out = np.asarray(fmap).mean(axis=-2, dtype=np.float64)
    return out.astype(fmap.dtype)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _as_batch(ids, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalize ids to a (B, d) matrix plus true lengths."""
    if isinstance(ids, np.ndarray) and ids.ndim == 2:
        if ids.shape[1] != d:
            raise DataError(f"id matrix width {ids.shape[1]} != d={d}")
        lengths = np.full(ids.shape[0], d, dtype=np.int64)
        return ids.astype(np.int64), lengths
    first = ids[0] if len(ids) else None
    if first is not None and not np.isscalar(first) and not isinstance(first, (int, np.integer)):
        rows = [pad_ids(s, d) for s in ids]
        lengths = np.asarray([min(len(s), d) for s in ids], dtype=np.int64)
        return np.stack(rows), lengths
    seq = np.asarray(ids, dtype=np.int64)
    return pad_ids(seq, d)[None], np.asarray([seq.size], dtype=np.int64)


def forward(
    ids,
    params: ModelParams,
    channels: ChannelConfig,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
    keep: float = 0.5,
    n_words: np.ndarray | None = None,
) -> ForwardTrace:
    """Run the CNN on one sentence or a batch.

    ``ids`` may be a single id sequence, a list of sequences, or a
    pre-padded (B, d) matrix (pass ``n_words`` alongside the latter). In
    train mode an inverted dropout mask with the given keep probability is
    applied to the pooled vector; infer mode is deterministic.
    """
    hyper = params.hyper
    if mode not in ("train", "infer"):
        raise ConfigError(f"mode must be 'train' or 'infer', got {mode!r}")
    if len(channels.channels) != hyper.n_channels:
        raise ConfigError(
            f"model expects {hyper.n_channels} channel(s), config has "
            f"{len(channels.channels)}"
        )
    ids_mat, lengths = _as_batch(ids, hyper.d)
    if n_words is not None:
        lengths = np.asarray(n_words, dtype=np.int64)
        if lengths.shape != (ids_mat.shape[0],):
            raise DataError("n_words must have one entry per batch row")
    if ids_mat.min(initial=0) < 0 or ids_mat.max(initial=0) >= channels.vocab_size:
        raise DataError("token id out of range for the embedding tables")

    dtype = params.dtype
    batch = ids_mat.shape[0]
    zero_mask = ids_mat == PAD_ID  # (B, d)
    embedded = np.empty((batch, hyper.n_channels, hyper.d, hyper.k), dtype=dtype)
    for c, ch in enumerate(channels.channels):
        e = ch.table[ids_mat].astype(dtype, copy=True)
        e[zero_mask] = 0.0
        embedded[:, c] = e

    fmaps: dict[int, np.ndarray] = {}
    pooled_parts = []
    for h in hyper.heights:
        pad = ((0, 0), (0, 0), (h - 1, h - 1), (0, 0))
        x = np.pad(embedded, pad)
        wins = _windows(x, h)  # (B, C, I, h*k)
        pre = np.tensordot(wins, params.conv_w[h], axes=([1, 3], [0, 2]))
        pre += params.conv_b[h]
        f = np.maximum(pre, 0.0)
        fmaps[h] = f
        pooled_parts.append(f.mean(axis=1, dtype=np.float64).astype(dtype))
    pooled = np.concatenate(pooled_parts, axis=1)  # (B, n)

    if mode == "train" and keep < 1.0:
        if rng is None:
            raise ConfigError("train-mode forward needs an rng for dropout")
        if not 0.0 < keep <= 1.0:
            raise ConfigError(f"keep probability must be in (0, 1], got {keep}")
        mask = (rng.random(pooled.shape) < keep).astype(dtype) / dtype.type(keep)
        pooled_dropped = pooled * mask
    else:
        mask = None
        pooled_dropped = pooled

    logits = pooled_dropped @ params.fc_w.T + params.fc_b
    return ForwardTrace(
        ids=ids_mat,
        n_words=lengths,
        embedded=embedded,
        fmaps=fmaps,
        pooled=pooled,
        dropout_mask=mask,
        pooled_dropped=pooled_dropped,
        logits=logits,
        mode=mode,
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy, computed in float64."""
    z = logits.astype(np.float64)
    lse = np.logaddexp.reduce(z, axis=-1)
    picked = z[np.arange(z.shape[0]), labels]
    return float((lse - picked).mean())


def loss_value(
    trace: ForwardTrace, params: ModelParams, labels: np.ndarray, lam: float
) -> float:
    """Mean cross-entropy plus (lam/2) * squared weight norm."""
    labels = np.asarray(labels)
    return cross_entropy(trace.logits, labels) + 0.5 * lam * params.weight_sq_norm()


def backward(
    trace: ForwardTrace,
    params: ModelParams,
    channels: ChannelConfig,
    labels,
    lam: float = 0.0,
) -> tuple[float, Gradients]:
    """Gradients of the regularized loss for every trainable parameter.

    The data term is averaged over the batch; the L2 term covers convolution
    and FC weights only. Embedding gradients are produced for trainable
    channels, with the pad row forced to zero.
    """
    hyper = params.hyper
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    batch = trace.batch_size
    if labels.shape != (batch,):
        raise DataError(f"expected {batch} label(s), got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= hyper.n_classes:
        raise DataError("label out of class range")
    if trace.mode != "train":
        raise ConfigError("backward needs a trace produced in train mode")
    dtype = params.dtype

    loss = loss_value(trace, params, labels, lam)
    probs = softmax(trace.logits)
    dy = probs
    dy[np.arange(batch), labels] -= 1.0
    dy = (dy / batch).astype(dtype)  # (B, c)

    g_fc_w = dy.T @ trace.pooled_dropped + dtype.type(lam) * params.fc_w
    g_fc_b = dy.sum(axis=0)
    dz = dy @ params.fc_w  # (B, n)
    if trace.dropout_mask is not None:
        dz = dz * trace.dropout_mask

    g_conv_w: dict[int, np.ndarray] = {}
    g_conv_b: dict[int, np.ndarray] = {}
    d_embedded = np.zeros_like(trace.embedded)  # (B, C, d, k)
    for h in hyper.heights:
        fmap = trace.fmaps[h]
        length = hyper.fmap_len(h)
        dzh = dz[:, hyper.feature_slice(h)]  # (B, nf)
        dpre = (dzh[:, None, :] / dtype.type(length)) * (fmap > 0.0)
        pad = ((0, 0), (0, 0), (h - 1, h - 1), (0, 0))
        wins = _windows(np.pad(trace.embedded, pad), h)  # (B, C, I, h*k)
        g_conv_w[h] = (
            np.einsum("bin,bciw->cnw", dpre, wins).astype(dtype)
            + dtype.type(lam) * params.conv_w[h]
        )
        g_conv_b[h] = dpre.sum(axis=(0, 1)).astype(dtype)

        dwins = np.einsum("bin,cnw->bciw", dpre, params.conv_w[h])
        dwins = dwins.reshape(batch, hyper.n_channels, length, h, hyper.k)
        dx = np.zeros(
            (batch, hyper.n_channels, hyper.d + 2 * (h - 1), hyper.k), dtype=dtype
        )
        for t in range(h):
            dx[:, :, t : t + length, :] += dwins[:, :, :, t, :]
        d_embedded += dx[:, :, h - 1 : h - 1 + hyper.d, :]

    emb_grads: dict[int, np.ndarray] = {}
    flat_ids = trace.ids.reshape(-1)
    for c, ch in enumerate(channels.channels):
        if not ch.trainable:
            continue
        g = np.zeros_like(ch.table, dtype=dtype)
        np.add.at(g, flat_ids, d_embedded[:, c].reshape(-1, hyper.k))
        g[PAD_ID] = 0.0
        emb_grads[c] = g

    return loss, Gradients(g_conv_w, g_conv_b, g_fc_w, g_fc_b, emb_grads)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(
    path,
    params: ModelParams,
    channels: ChannelConfig,
    vocab_hash: str,
    extra: dict | None = None,
) -> None:
    """Versioned binary container: hyperparameters, tensors, channel tables."""
    hyper = params.hyper
    arrays: list[np.ndarray] = []
    manifest: list[dict] = []

    def put(name: str, arr: np.ndarray):
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)})
        arrays.append(np.ascontiguousarray(arr))

    for h in hyper.heights:
        put(f"conv_w[{h}]", params.conv_w[h])
        put(f"conv_b[{h}]", params.conv_b[h])
    put("fc_w", params.fc_w)
    put("fc_b", params.fc_b)
    for i, ch in enumerate(channels.channels):
        put(f"channel[{i}]", ch.table)

    header = {
        "hyper": {
            "k": hyper.k,
            "d": hyper.d,
            "heights": list(hyper.heights),
            "n_filters": hyper.n_filters,
            "n_classes": hyper.n_classes,
            "n_channels": hyper.n_channels,
        },
        "mode": channels.mode.value,
        "channel_meta": [
            {"source": ch.source.value, "trainable": ch.trainable}
            for ch in channels.channels
        ],
        "vocab_sha256": vocab_hash,
        "manifest": manifest,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in arrays:
            fh.write(arr.tobytes())


def load_checkpoint(path) -> tuple[ModelParams, ChannelConfig, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise DataError(f"{path}: not a model checkpoint")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()

    hyper = ModelHyper(
        k=header["hyper"]["k"],
        d=header["hyper"]["d"],
        heights=tuple(header["hyper"]["heights"]),
        n_filters=header["hyper"]["n_filters"],
        n_classes=header["hyper"]["n_classes"],
        n_channels=header["hyper"]["n_channels"],
    )
    loaded: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["manifest"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * dt.itemsize
        arr = np.frombuffer(payload[offset : offset + nbytes], dtype=dt)
        loaded[entry["name"]] = arr.reshape(entry["shape"]).copy()
        offset += nbytes
    if offset != len(payload):
        raise DataError(f"{path}: trailing bytes in checkpoint payload")

    params = ModelParams(
        hyper,
        {h: loaded[f"conv_w[{h}]"] for h in hyper.heights},
        {h: loaded[f"conv_b[{h}]"] for h in hyper.heights},
        loaded["fc_w"],
        loaded["fc_b"],
    )
    chans = tuple(
        EmbeddingChannel(
            loaded[f"channel[{i}]"],
            trainable=meta["trainable"],
            source=Source(meta["source"]),
        )
        for i, meta in enumerate(header["channel_meta"])
    )
    config = ChannelConfig(InputMode(header["mode"]), chans)
    meta = {"vocab_sha256": header["vocab_sha256"], "extra": header["extra"]}
    return params, config, meta


def params_digest(params: ModelParams) -> str:
    """Stable hash over all parameter tensors, used to detect no-op training."""
    digest = hashlib.sha256()
    for name, arr in params.named_arrays():
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(arr).tobytes())
    return digest.hexdigest()
