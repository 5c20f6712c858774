"""Corpus ingestion: tokenization, rating-derived labels, vocabulary, splits.

Everything here is deterministic given (input order, seed). Token id 0 is
reserved for the padding token and is never produced for a real token;
out-of-vocabulary tokens at encode time also map to id 0.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import unicodedata
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from wordcam.errors import ConfigError, DataError

PAD_TOKEN = "<pad>"
PAD_ID = 0


class Polarity(Enum):
    """Binary sentiment class; EXCLUDED marks ratings outside both bands."""

    NEGATIVE = 0
    POSITIVE = 1
    EXCLUDED = 2

    @property
    def class_index(self) -> int:
        if self is Polarity.EXCLUDED:
            raise ValueError("excluded examples carry no class index")
        return self.value


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------


def _is_latin(ch: str) -> bool:
    try:
        return unicodedata.name(ch).startswith("LATIN")
    except ValueError:
        return False


class _CharMap(dict):
    """Lazy str.translate table: drop punctuation/digits, optionally fold case.

    Punctuation is any Unicode category P*; digits are category Nd. Case is
    folded for Latin script only; other scripts pass through unchanged.
    """

    def __init__(self, fold_case: bool):
        super().__init__()
        self.fold_case = fold_case

    def __missing__(self, codepoint: int):
        ch = chr(codepoint)
        cat = unicodedata.category(ch)
        if cat.startswith("P") or cat == "Nd":
            out = None
        elif self.fold_case and _is_latin(ch):
            out = ch.lower()
        else:
            out = ch
        self[codepoint] = out
        return out


_FOLDING_MAP = _CharMap(fold_case=True)
_PRESERVING_MAP = _CharMap(fold_case=False)


def tokenize(text: str, fold_case: bool = True) -> list[str]:
    """Split on whitespace, strip punctuation and digit characters per token.

    Tokens that become empty after stripping are dropped, so the result may
    be empty. Idempotent on its own (space-joined) output.
    """
    table = _FOLDING_MAP if fold_case else _PRESERVING_MAP
    out = []
    for run in text.split():
        tok = run.translate(table)
        if tok:
            out.append(tok)
    return out


# ---------------------------------------------------------------------------
# Rating schemes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelScheme:
    """Maps a numeric rating to a polarity.

    ``rating <= neg_max`` is negative, ``rating >= pos_min`` is positive,
    anything in between is excluded. ``step`` restricts ratings to multiples
    of that value (measured from ``lo``).
    """

    name: str
    lo: float
    hi: float
    neg_max: float
    pos_min: float
    step: float | None = None

    def validate(self, rating: float) -> None:
        if not np.isfinite(rating):
            raise DataError(f"{self.name}: non-finite rating {rating!r}")
        if rating < self.lo or rating > self.hi:
            raise DataError(
                f"{self.name}: rating {rating} outside scale [{self.lo}, {self.hi}]"
            )
        if self.step is not None:
            steps = (rating - self.lo) / self.step
            if abs(steps - round(steps)) > 1e-9:
                raise DataError(
                    f"{self.name}: rating {rating} is not a multiple of {self.step}"
                )


IMDB_SCHEME = LabelScheme("imdb", lo=1, hi=10, neg_max=4, pos_min=7, step=1)
WATCHA_SCHEME = LabelScheme("watcha", lo=0.5, hi=5.0, neg_max=2.0, pos_min=5.0, step=0.5)


def generic_scheme(lo: float, hi: float, neg_max: float, pos_min: float) -> LabelScheme:
    if not (lo <= neg_max < pos_min <= hi):
        raise ConfigError(
            f"thresholds must satisfy lo <= neg_max < pos_min <= hi, "
            f"got lo={lo} neg_max={neg_max} pos_min={pos_min} hi={hi}"
        )
    return LabelScheme("generic", lo=lo, hi=hi, neg_max=neg_max, pos_min=pos_min)


SCHEMES = {"imdb": IMDB_SCHEME, "watcha": WATCHA_SCHEME}


def label_from_rating(rating: float, scheme: LabelScheme) -> Polarity:
    """Classify a rating as Positive, Negative, or Excluded under a scheme."""
    scheme.validate(rating)
    if rating <= scheme.neg_max:
        return Polarity.NEGATIVE
    if rating >= scheme.pos_min:
        return Polarity.POSITIVE
    return Polarity.EXCLUDED


# ---------------------------------------------------------------------------
# Examples and vocabulary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RawReview:
    text: str
    rating: float

    def __post_init__(self):
        if not self.text.strip():
            raise DataError("review text is empty")


@dataclass(frozen=True)
class TokenizedExample:
    """A tokenized review with its resolved polarity (never EXCLUDED)."""

    tokens: tuple[str, ...]
    label: Polarity

    def __post_init__(self):
        if not self.tokens:
            raise DataError("example has no tokens")
        if self.label is Polarity.EXCLUDED:
            raise DataError("excluded examples cannot enter the corpus")


@dataclass(frozen=True)
class LabeledExample:
    """Encoded example: ids align 1:1 with ``tokens`` (both truncated to d)."""

    token_ids: tuple[int, ...]
    label: Polarity
    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.token_ids:
            raise DataError("example has no tokens")
        if len(self.token_ids) != len(self.tokens):
            raise DataError("token/id length mismatch")


class Vocabulary:
    """Bijective token<->id map; id 0 is the padding token.

    Ids are assigned by descending training frequency, ties broken
    lexicographically, so construction is independent of input order.
    """

    def __init__(self, id_to_token: list[str], counts: list[int]):
        if not id_to_token or id_to_token[0] != PAD_TOKEN:
            raise DataError("id 0 must be the padding token")
        if len(id_to_token) != len(set(id_to_token)):
            raise DataError("duplicate tokens in vocabulary")
        self.id_to_token = list(id_to_token)
        self.counts = list(counts)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def n_tokens(self) -> int:
        """Distinct real tokens, excluding the padding slot."""
        return len(self.id_to_token) - 1

    @classmethod
    def build(cls, token_seqs: Iterable[Sequence[str]]) -> "Vocabulary":
        freq: Counter = Counter()
        for toks in token_seqs:
            freq.update(toks)
        if not freq:
            raise DataError("cannot build a vocabulary from an empty corpus")
        if PAD_TOKEN in freq:
            raise DataError(f"corpus contains the reserved token {PAD_TOKEN!r}")
        ordered = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
        id_to_token = [PAD_TOKEN] + [t for t, _ in ordered]
        counts = [0] + [c for _, c in ordered]
        return cls(id_to_token, counts)

    def encode(self, tokens: Sequence[str], d: int) -> list[int]:
        """Token ids, truncated to at most ``d``; unknown tokens map to pad."""
        return [self.token_to_id.get(t, PAD_ID) for t in tokens[:d]]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def lines(self) -> list[str]:
        return [
            f"{tok}\t{i}\t{self.counts[i]}" for i, tok in enumerate(self.id_to_token)
        ]

    def digest(self) -> str:
        payload = "\n".join(self.lines()).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def save(self, path: Path | str) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path | str) -> "Vocabulary":
        id_to_token: list[str] = []
        counts: list[int] = []
        for lineno, line in enumerate(
            Path(path).read_text(encoding="utf-8").splitlines()
        ):
            if not line:
                continue
            try:
                tok, idx, count = line.split("\t")
            except ValueError as exc:
                raise DataError(f"{path}:{lineno + 1}: malformed vocab line") from exc
            if int(idx) != len(id_to_token):
                raise DataError(f"{path}:{lineno + 1}: ids out of order")
            id_to_token.append(tok)
            counts.append(int(count))
        return cls(id_to_token, counts)


def encode_example(ex: TokenizedExample, vocab: Vocabulary, d: int) -> LabeledExample:
    ids = vocab.encode(ex.tokens, d)
    return LabeledExample(tuple(ids), ex.label, tuple(ex.tokens[: len(ids)]))


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple
    test: tuple
    seed: int


def split(examples: Sequence, ratio: float = 0.7, seed: int = 0) -> CorpusSplit:
    """Stratified train/test split, deterministic for a fixed seed.

    Each class stratum contributes round(ratio * n) examples to train
    (clamped so neither side is empty), so the train fraction holds within
    one example per class.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must be in (0, 1), got {ratio}")
    by_class: dict[Polarity, list[int]] = {}
    for i, ex in enumerate(examples):
        by_class.setdefault(ex.label, []).append(i)
    for label, idxs in by_class.items():
        if len(idxs) < 2:
            raise DataError(f"class {label.name} has {len(idxs)} example(s), need >= 2")
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for label in sorted(by_class, key=lambda l: l.value):
        idxs = np.asarray(by_class[label])
        perm = rng.permutation(len(idxs))
        n_train = int(round(ratio * len(idxs)))
        n_train = min(max(n_train, 1), len(idxs) - 1)
        train_idx.extend(idxs[perm[:n_train]].tolist())
        test_idx.extend(idxs[perm[n_train:]].tolist())
    return CorpusSplit(
        train=tuple(examples[i] for i in train_idx),
        test=tuple(examples[i] for i in test_idx),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def load_imdb_dir(root: Path | str) -> list[RawReview]:
    """Read the ``{train,test}/{pos,neg}/<id>_<rating>.txt`` layout."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    reviews: list[RawReview] = []
    for part in ("train", "test"):
        for side in ("pos", "neg"):
            d = root / part / side
            if not d.is_dir():
                continue
            for f in sorted(d.glob("*.txt")):
                stem = f.stem
                try:
                    rating = float(stem.rsplit("_", 1)[1])
                except (IndexError, ValueError) as exc:
                    raise DataError(f"cannot parse rating from filename {f}") from exc
                text = f.read_text(encoding="utf-8")
                if not text.strip():
                    continue
                reviews.append(RawReview(text, rating))
    if not reviews:
        raise DataError(f"no reviews found under {root}")
    return reviews


def load_delimited(path: Path | str, delimiter: str | None = None) -> list[RawReview]:
    """Read a CSV/TSV with a ``text,rating`` header; delimiter auto-detected."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    raw = path.read_text(encoding="utf-8")
    if not raw.strip():
        raise DataError(f"dataset file is empty: {path}")
    if delimiter is None:
        header = raw.splitlines()[0]
        delimiter = "\t" if "\t" in header else ","
    reader = csv.DictReader(io.StringIO(raw), delimiter=delimiter)
    fields = [f.strip().lower() for f in reader.fieldnames or []]
    if "text" not in fields or "rating" not in fields:
        raise DataError(f"{path}: header must contain 'text' and 'rating' columns")
    key = {f.strip().lower(): f for f in reader.fieldnames}
    reviews: list[RawReview] = []
    for row in reader:
        text = (row[key["text"]] or "").strip()
        if not text:
            continue
        try:
            rating = float(row[key["rating"]])
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}: bad rating {row[key['rating']]!r}") from exc
        reviews.append(RawReview(text, rating))
    if not reviews:
        raise DataError(f"no usable rows in {path}")
    return reviews


# ---------------------------------------------------------------------------
# End-to-end preparation
# ---------------------------------------------------------------------------


@dataclass
class PreparedCorpus:
    vocab: Vocabulary
    train: tuple[LabeledExample, ...]
    test: tuple[LabeledExample, ...]
    seed: int
    d: int
    stats: dict
    # untruncated training sentences, for embedding training
    train_sentences: tuple[tuple[int, ...], ...] = ()


def label_reviews(
    reviews: Iterable[RawReview], scheme: LabelScheme, fold_case: bool = True
) -> tuple[list[TokenizedExample], dict]:
    """Tokenize and label; drops excluded ratings and empty tokenizations."""
    kept: list[TokenizedExample] = []
    n_excluded = 0
    n_empty = 0
    for rv in reviews:
        label = label_from_rating(rv.rating, scheme)
        if label is Polarity.EXCLUDED:
            n_excluded += 1
            continue
        toks = tokenize(rv.text, fold_case=fold_case)
        if not toks:
            n_empty += 1
            continue
        kept.append(TokenizedExample(tuple(toks), label))
    stats = {"excluded": n_excluded, "empty": n_empty, "kept": len(kept)}
    return kept, stats


def prepare(
    reviews: Iterable[RawReview],
    scheme: LabelScheme,
    d: int = 100,
    ratio: float = 0.7,
    seed: int = 0,
    fold_case: bool = True,
) -> PreparedCorpus:
    """Full pipeline: tokenize, label, split, build vocab on train, encode.

    The vocabulary sees only the training split, so test-time tokens absent
    from it encode to the padding id.
    """
    examples, stats = label_reviews(reviews, scheme, fold_case=fold_case)
    if not examples:
        raise DataError("no labeled examples after rating filter")
    parts = split(examples, ratio=ratio, seed=seed)
    vocab = Vocabulary.build(ex.tokens for ex in parts.train)
    train = tuple(encode_example(ex, vocab, d) for ex in parts.train)
    test = tuple(encode_example(ex, vocab, d) for ex in parts.test)
    # embeddings train on whole sentences, not the d-truncated model input
    train_sentences = tuple(
        tuple(vocab.encode(ex.tokens, len(ex.tokens))) for ex in parts.train
    )
    stats.update(
        {
            "train": len(train),
            "test": len(test),
            "train_pos": sum(1 for e in train if e.label is Polarity.POSITIVE),
            "train_neg": sum(1 for e in train if e.label is Polarity.NEGATIVE),
            "test_pos": sum(1 for e in test if e.label is Polarity.POSITIVE),
            "test_neg": sum(1 for e in test if e.label is Polarity.NEGATIVE),
            "vocab_size": vocab.n_tokens,
        }
    )
    return PreparedCorpus(vocab, train, test, seed, d, stats, train_sentences)


# ---------------------------------------------------------------------------
# Artifact persistence
# ---------------------------------------------------------------------------


def _example_line(ex: LabeledExample) -> str:
    ids = ",".join(str(i) for i in ex.token_ids)
    return f"{ex.label.name.lower()}\t{ids}\t{' '.join(ex.tokens)}"


def _parse_example_line(line: str, lineno: int, path: Path) -> LabeledExample:
    try:
        label_s, ids_s, toks_s = line.split("\t")
        label = Polarity[label_s.upper()]
        ids = tuple(int(x) for x in ids_s.split(","))
        toks = tuple(toks_s.split(" "))
    except (ValueError, KeyError) as exc:
        raise DataError(f"{path}:{lineno}: malformed example line") from exc
    return LabeledExample(ids, label, toks)


def save_prepared(corpus: PreparedCorpus, out_dir: Path | str) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "vocab": out / "vocab.tsv",
        "train": out / "train.tsv",
        "test": out / "test.tsv",
        "embed_corpus": out / "embed_corpus.txt",
        "meta": out / "meta.json",
    }
    corpus.vocab.save(paths["vocab"])
    for name in ("train", "test"):
        body = "\n".join(_example_line(ex) for ex in getattr(corpus, name))
        paths[name].write_text(body + "\n", encoding="utf-8")
    body = "\n".join(
        " ".join(str(i) for i in sent) for sent in corpus.train_sentences
    )
    paths["embed_corpus"].write_text(body + "\n", encoding="utf-8")
    meta = {
        "d": corpus.d,
        "seed": corpus.seed,
        "stats": corpus.stats,
        "vocab_sha256": corpus.vocab.digest(),
    }
    paths["meta"].write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return paths


def load_prepared(out_dir: Path | str) -> PreparedCorpus:
    out = Path(out_dir)
    meta_path = out / "meta.json"
    if not meta_path.is_file():
        raise DataError(f"no prepared corpus at {out} (missing meta.json)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    vocab = Vocabulary.load(out / "vocab.tsv")
    sides = {}
    for name in ("train", "test"):
        lines = (out / f"{name}.tsv").read_text(encoding="utf-8").splitlines()
        sides[name] = tuple(
            _parse_example_line(line, i + 1, out / f"{name}.tsv")
            for i, line in enumerate(lines)
            if line
        )
    sentences: tuple[tuple[int, ...], ...] = ()
    embed_path = out / "embed_corpus.txt"
    if embed_path.is_file():
        sentences = tuple(
            tuple(int(x) for x in line.split())
            for line in embed_path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        )
    return PreparedCorpus(
        vocab,
        sides["train"],
        sides["test"],
        meta["seed"],
        meta["d"],
        meta["stats"],
        sentences,
    )
