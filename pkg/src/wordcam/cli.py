"""Command-line pipeline: prepare data, train embeddings, train/evaluate
the classifier, and emit attention reports.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
divergence. All randomness funnels through the single --seed value, which
every command logs; reruns with identical inputs and seed produce
byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from wordcam import corpus as corpus_mod
from wordcam.attention import attend
from wordcam.embed import (
    ChannelConfig,
    InputMode,
    assemble,
    init_random,
    load_channel,
    save_channel,
    train_cooc_factor,
    train_skipgram,
    train_subword,
)
from wordcam.errors import ConfigError, DataError, DivergenceError
from wordcam.model import (
    ModelHyper,
    ModelParams,
    forward,
    load_checkpoint,
    params_digest,
    save_checkpoint,
)
from wordcam.report import (
    CLASS_NAMES,
    aggregate_top_words,
    from_attention,
    render_highlight,
)
from wordcam.train import (
    OptimizerConfig,
    TrainConfig,
    batch_arrays,
    evaluate,
    history_csv,
    train_epochs,
)

DATA_DIR_ENV = "WORDCAM_DATA_DIR"


@dataclass(frozen=True)
class RunConfig:
    """Every knob the pipeline exposes; flags and config files share keys."""

    # inputs and outputs
    data: str | None = None
    data_format: str = "imdb"  # imdb | csv | tsv
    scheme: str = "imdb"  # imdb | watcha | generic
    out: str = "run"
    corpus: str | None = None
    channels: str | None = None
    checkpoint: str | None = None
    vocab: str | None = None
    mode: str = "rand"
    seed: int = 0
    # generic rating scheme thresholds
    scale_lo: float = 1.0
    scale_hi: float = 10.0
    neg_max: float = 4.0
    pos_min: float = 7.0
    # corpus
    d: int = 100
    ratio: float = 0.7
    keep_case: bool = False
    # embeddings
    k: int = 100
    window: int = 3
    negatives: int = 5
    embed_epochs: int = 5
    embed_lr: float = 0.025
    x_max: float = 100.0
    alpha: float = 0.75
    ngram_min: int = 3
    ngram_max: int = 6
    bucket: int = 200000
    # model
    heights: str = "3,4,5"
    n_filters: int = 128
    # training
    batch_size: int = 64
    epochs: int = 5
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lam: float = 0.1
    dropout_keep: float = 0.5
    eval_every: int = 1
    # attention and reports
    sentence: str | None = None
    input: str | None = None
    label: str = "auto"  # auto | positive | negative
    fraction: float = 0.1
    bottom_fraction: float | None = None
    formats: str = "html,json"
    top_k: int = 5


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value: str):
    """Parse a config-file string into the field's type."""
    f = _FIELDS[name]
    default = f.default
    if isinstance(default, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {name}: expected a boolean, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def read_config_file(path: str) -> dict:
    """Flat ``key=value`` lines; '#' starts a comment; unknown keys rejected."""
    out: dict = {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = body.split("=", 1)
        key = key.strip().replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, value.strip())
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults < config file < explicit CLI flags."""
    merged = dataclasses.asdict(RunConfig())
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for name in _FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    return RunConfig(**merged)


def _add(parser: argparse.ArgumentParser, name: str, arg_type=None, help: str = "") -> None:
    """Add a RunConfig-backed option; default stays None so the merge can
    tell 'unset' from 'explicitly set to the default'."""
    field = _FIELDS[name]
    flag = "--" + name.replace("_", "-")
    if isinstance(field.default, bool):
        parser.add_argument(flag, dest=name, action="store_true", default=None,
                            help=help)
        return
    if arg_type is None:
        arg_type = type(field.default) if field.default is not None else str
    suffix = "" if field.default is None else f" (default: {field.default})"
    parser.add_argument(flag, dest=name, type=arg_type, default=None,
                        help=help + suffix)


def _parse_heights(spec: str) -> tuple[int, ...]:
    try:
        hs = tuple(int(x) for x in spec.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse heights {spec!r}") from exc
    if not hs:
        raise ConfigError("heights must name at least one filter height")
    return hs


def _scheme_from_config(cfg: RunConfig) -> corpus_mod.LabelScheme:
    if cfg.scheme in corpus_mod.SCHEMES:
        return corpus_mod.SCHEMES[cfg.scheme]
    if cfg.scheme == "generic":
        return corpus_mod.generic_scheme(
            cfg.scale_lo, cfg.scale_hi, cfg.neg_max, cfg.pos_min
        )
    raise ConfigError(f"unknown rating scheme {cfg.scheme!r}")


def _log_seed(cfg: RunConfig) -> None:
    print(f"seed: {cfg.seed}")


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------


def cmd_prepare(cfg: RunConfig) -> int:
    data = cfg.data or os.environ.get(DATA_DIR_ENV)
    if not data:
        raise ConfigError(f"--data is required (or set {DATA_DIR_ENV})")
    _log_seed(cfg)
    scheme = _scheme_from_config(cfg)
    if cfg.data_format == "imdb":
        reviews = corpus_mod.load_imdb_dir(data)
    elif cfg.data_format in ("csv", "tsv"):
        delim = "\t" if cfg.data_format == "tsv" else ","
        reviews = corpus_mod.load_delimited(data, delimiter=delim)
    else:
        raise ConfigError(f"unknown data format {cfg.data_format!r}")
    prepared = corpus_mod.prepare(
        reviews, scheme, d=cfg.d, ratio=cfg.ratio, seed=cfg.seed,
        fold_case=not cfg.keep_case,
    )
    corpus_mod.save_prepared(prepared, cfg.out)
    s = prepared.stats
    print(f"reviews: {s['kept']} kept, {s['excluded']} excluded, {s['empty']} empty")
    print(f"train: {s['train']} ({s['train_pos']} pos / {s['train_neg']} neg)")
    print(f"test:  {s['test']} ({s['test_pos']} pos / {s['test_neg']} neg)")
    print(f"vocabulary: {s['vocab_size']} tokens")
    print(f"wrote corpus artifacts to {cfg.out}")
    return 0


# ---------------------------------------------------------------------------
# embed
# ---------------------------------------------------------------------------


def _embed_channels(cfg: RunConfig, prepared: corpus_mod.PreparedCorpus) -> ChannelConfig:
    mode = InputMode.parse(cfg.mode)
    vocab_size = len(prepared.vocab)
    sentences = prepared.train_sentences or tuple(
        ex.token_ids for ex in prepared.train
    )
    rand = skipgram = cooc = subword = None
    if mode is InputMode.RAND:
        rand = init_random(vocab_size, cfg.k, seed=cfg.seed)
    else:
        skipgram = train_skipgram(
            sentences, vocab_size, k=cfg.k, window=cfg.window,
            negatives=cfg.negatives, epochs=cfg.embed_epochs, lr=cfg.embed_lr,
            seed=cfg.seed + 1,
        )
    if mode is InputMode.FOUR_CH:
        cooc = train_cooc_factor(
            sentences, vocab_size, k=cfg.k, window=cfg.window, x_max=cfg.x_max,
            alpha=cfg.alpha, epochs=max(cfg.embed_epochs * 5, 1), seed=cfg.seed + 2,
        )
        subword = train_subword(
            sentences, prepared.vocab.id_to_token, k=cfg.k, window=cfg.window,
            ngram_min=cfg.ngram_min, ngram_max=cfg.ngram_max, bucket=cfg.bucket,
            negatives=cfg.negatives, epochs=cfg.embed_epochs, lr=cfg.embed_lr,
            seed=cfg.seed + 3,
        )
    return assemble(mode, rand=rand, skipgram=skipgram, cooc=cooc, subword=subword)


def cmd_embed(cfg: RunConfig) -> int:
    if not cfg.corpus:
        raise ConfigError("--corpus is required (output directory of prepare)")
    _log_seed(cfg)
    prepared = corpus_mod.load_prepared(cfg.corpus)
    config = _embed_channels(cfg, prepared)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, ch in enumerate(config.channels):
        path = out / f"channel_{i}.emb"
        save_channel(ch, path)
        files.append(path.name)
        print(f"channel {i}: source={ch.source.value} trainable={ch.trainable} "
              f"shape={ch.table.shape}")
    meta = {
        "mode": config.mode.value,
        "k": config.dim,
        "vocab_sha256": prepared.vocab.digest(),
        "files": files,
        "seed": cfg.seed,
    }
    (out / "channels.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(files)} channel file(s) to {cfg.out}")
    return 0


def load_channels_dir(path: str) -> tuple[ChannelConfig, dict]:
    meta_path = Path(path) / "channels.json"
    if not meta_path.is_file():
        raise DataError(f"no channels at {path} (missing channels.json)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    chans = tuple(load_channel(Path(path) / name) for name in meta["files"])
    return ChannelConfig(InputMode(meta["mode"]), chans), meta


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        optimizer=OptimizerConfig(
            kind=cfg.optimizer, lr=cfg.lr, beta1=cfg.beta1,
            beta2=cfg.beta2, eps=cfg.adam_eps,
        ),
        lam=cfg.lam,
        keep=cfg.dropout_keep,
        seed=cfg.seed,
        eval_every=cfg.eval_every,
    )


def cmd_train(cfg: RunConfig) -> int:
    if not cfg.corpus:
        raise ConfigError("--corpus is required")
    if not cfg.channels:
        raise ConfigError("--channels is required (output directory of embed)")
    _log_seed(cfg)
    prepared = corpus_mod.load_prepared(cfg.corpus)
    channels, channels_meta = load_channels_dir(cfg.channels)
    if channels_meta.get("vocab_sha256") != prepared.vocab.digest():
        raise DataError("channels were trained against a different vocabulary")
    heights = _parse_heights(cfg.heights)
    hyper = ModelHyper(
        k=channels.dim,
        d=prepared.d,
        heights=heights,
        n_filters=cfg.n_filters,
        n_channels=len(channels.channels),
    )
    tconfig = _train_config(cfg)
    echo = {
        "mode": channels.mode.value,
        "heights": "/".join(str(h) for h in heights),
        "n_filters": cfg.n_filters,
        "batch_size": tconfig.batch_size,
        "epochs": tconfig.epochs,
        "optimizer": cfg.optimizer,
        "lr": cfg.lr,
        "lambda": tconfig.lam,
        "dropout_keep": tconfig.keep,
        "d": prepared.d,
        "k": channels.dim,
    }
    print("config: " + " ".join(f"{k}={v}" for k, v in echo.items()))

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    vocab_hash = prepared.vocab.digest()
    initial_params = ModelParams.init(hyper, seed=cfg.seed)
    initial_digest = params_digest(initial_params)

    def checkpoint_epoch(epoch: int, state) -> None:
        tmp = out / "last.ckpt.tmp"
        save_checkpoint(tmp, state.params, state.channels, vocab_hash,
                        extra={"epoch": epoch})
        tmp.replace(out / "last.ckpt")

    result = train_epochs(
        prepared.train, prepared.test, channels, hyper, tconfig,
        params=initial_params, on_epoch_end=checkpoint_epoch,
    )
    (out / "history.csv").write_text(history_csv(result.history), encoding="utf-8")
    save_checkpoint(
        out / "checkpoint.ckpt", result.best_params, result.best_channels,
        vocab_hash, extra={"best_accuracy": result.best_accuracy},
    )
    for rec in result.history:
        acc = "-" if rec.test_accuracy is None else f"{rec.test_accuracy:.4f}"
        print(f"epoch {rec.epoch}: train_loss={rec.train_loss:.4f} test_acc={acc}")
    if params_digest(result.params) == initial_digest:
        print("warning: parameters unchanged by training (lr=0?)")
    print(f"best test accuracy: {result.best_accuracy:.4f}")
    print(f"wrote checkpoint.ckpt, last.ckpt, history.csv to {cfg.out}")
    return 0


# ---------------------------------------------------------------------------
# attend
# ---------------------------------------------------------------------------


def _load_model(cfg: RunConfig):
    if not cfg.checkpoint:
        raise ConfigError("--checkpoint is required")
    params, channels, meta = load_checkpoint(cfg.checkpoint)
    vocab_path = cfg.vocab or str(Path(cfg.checkpoint).parent / "vocab.tsv")
    if not Path(vocab_path).is_file():
        raise DataError(
            f"vocabulary not found at {vocab_path}; pass --vocab explicitly"
        )
    vocab = corpus_mod.Vocabulary.load(vocab_path)
    if vocab.digest() != meta["vocab_sha256"]:
        raise DataError(f"vocabulary at {vocab_path} does not match the checkpoint")
    return params, channels, vocab


def _class_index(label: str) -> int | None:
    if label == "auto":
        return None
    if label in CLASS_NAMES:
        return CLASS_NAMES.index(label)
    raise ConfigError(f"--label must be auto, positive, or negative, got {label!r}")


def cmd_attend(cfg: RunConfig) -> int:
    params, channels, vocab = _load_model(cfg)
    _log_seed(cfg)
    if (cfg.sentence is None) == (cfg.input is None):
        raise ConfigError("pass exactly one of --sentence or --input")
    if cfg.sentence is not None:
        lines = [cfg.sentence]
    else:
        path = Path(cfg.input)
        if not path.is_file():
            raise DataError(f"input file not found: {path}")
        lines = [l for l in path.read_text(encoding="utf-8").splitlines() if l.strip()]
        if not lines:
            raise DataError(f"input file has no sentences: {path}")
    formats = [f.strip() for f in cfg.formats.split(",") if f.strip()]
    for fmt in formats:
        if fmt not in ("html", "json", "ansi"):
            raise ConfigError(f"unknown output format {fmt!r}")
    class_index = _class_index(cfg.label)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    d = params.hyper.d
    written = []
    for i, line in enumerate(lines):
        tokens = corpus_mod.tokenize(line, fold_case=not cfg.keep_case)[:d]
        if not tokens:
            raise DataError(f"sentence {i} has no tokens after tokenization")
        ids = vocab.encode(tokens, d)
        trace = forward(
            ids, params, channels, mode="infer",
            n_words=np.asarray([len(tokens)], dtype=np.int64),
        )
        result = attend(
            trace, params, tokens, class_index=class_index, fraction=cfg.fraction
        )
        doc = from_attention(result, bottom_fraction=cfg.bottom_fraction)
        stem = f"attend_{i:04d}"
        for fmt in formats:
            ext = {"html": "html", "json": "json", "ansi": "ansi.txt"}[fmt]
            (out / f"{stem}.{ext}").write_bytes(render_highlight(doc, fmt))
        written.append(stem)
        top = [tokens[p] for p in result.selected]
        print(f"{stem}: {CLASS_NAMES[result.class_index]} top={top}")
    print(f"wrote {len(written)} report(s) x {len(formats)} format(s) to {cfg.out}")
    return 0


# ---------------------------------------------------------------------------
# topwords
# ---------------------------------------------------------------------------


def cmd_topwords(cfg: RunConfig) -> int:
    if not cfg.corpus:
        raise ConfigError("--corpus is required")
    params, channels, _ = _load_model(cfg)
    _log_seed(cfg)
    prepared = corpus_mod.load_prepared(cfg.corpus)
    if not prepared.test:
        raise DataError("prepared corpus has an empty test split")
    results = []
    batch = 256
    for start in range(0, len(prepared.test), batch):
        chunk = prepared.test[start : start + batch]
        ids, lengths, _labels = batch_arrays(chunk, params.hyper.d)
        trace = forward(ids, params, channels, mode="infer", n_words=lengths)
        for j, ex in enumerate(chunk):
            results.append(
                attend(trace, params, ex.tokens, class_index=None, item=j)
            )
    table = aggregate_top_words(results, k=cfg.top_k)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "topwords.txt").write_text(table.to_text(), encoding="utf-8")
    (out / "topwords.csv").write_text(table.to_csv(), encoding="utf-8")
    print(table.to_text(), end="")
    print(f"wrote topwords.txt and topwords.csv to {cfg.out}")
    return 0


# ---------------------------------------------------------------------------
# evaluate (report the accuracy of a checkpoint on the test split)
# ---------------------------------------------------------------------------


def cmd_evaluate(cfg: RunConfig) -> int:
    if not cfg.corpus:
        raise ConfigError("--corpus is required")
    params, channels, _ = _load_model(cfg)
    prepared = corpus_mod.load_prepared(cfg.corpus)
    report = evaluate(params, channels, prepared.test)
    print(f"accuracy: {report.accuracy:.4f}  loss: {report.loss:.4f}")
    for cls in (1, 0):
        print(
            f"{CLASS_NAMES[cls]}: precision={report.precision[cls]:.4f} "
            f"recall={report.recall[cls]:.4f}"
        )
    return 0


# ---------------------------------------------------------------------------
# Argument wiring
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wordcam",
        description="Sentence sentiment CNN with per-word attention reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="tokenize, label, split, and encode a dataset")
    p.add_argument("--config", help="key=value config file")
    _add(p, "data", help="dataset path (IMDB directory or CSV/TSV file); "
         f"falls back to ${DATA_DIR_ENV}")
    _add(p, "data_format", help="imdb, csv, or tsv")
    _add(p, "scheme", help="rating scheme: imdb, watcha, or generic")
    _add(p, "scale_lo", help="generic scheme: smallest rating")
    _add(p, "scale_hi", help="generic scheme: largest rating")
    _add(p, "neg_max", help="generic scheme: ratings <= this are negative")
    _add(p, "pos_min", help="generic scheme: ratings >= this are positive")
    _add(p, "out", help="output directory for corpus artifacts")
    _add(p, "seed", help="split shuffling seed")
    _add(p, "d", help="maximum words per sentence")
    _add(p, "ratio", help="train fraction of the stratified split")
    _add(p, "keep_case", help="keep Latin-script case instead of folding")

    p = sub.add_parser("embed", help="train embedding channels for a mode")
    p.add_argument("--config", help="key=value config file")
    _add(p, "corpus", help="prepared corpus directory")
    _add(p, "mode", help="rand, static, non-static, 2ch, or 4ch")
    _add(p, "out", help="output directory for channel files")
    _add(p, "seed", help="embedding training seed")
    _add(p, "k", help="embedding dimension")
    _add(p, "window", help="context window size")
    _add(p, "negatives", help="negative samples per pair")
    _add(p, "embed_epochs", help="embedding training epochs")
    _add(p, "embed_lr", help="embedding learning rate")
    _add(p, "x_max", help="co-occurrence weighting cutoff")
    _add(p, "alpha", help="co-occurrence weighting exponent")
    _add(p, "ngram_min", help="smallest subword n-gram")
    _add(p, "ngram_max", help="largest subword n-gram")
    _add(p, "bucket", help="subword hash buckets")

    p = sub.add_parser("train", help="train the CNN classifier")
    p.add_argument("--config", help="key=value config file")
    _add(p, "corpus", help="prepared corpus directory")
    _add(p, "channels", help="embedded channels directory")
    _add(p, "out", help="output directory for checkpoints and history")
    _add(p, "seed", help="training seed")
    _add(p, "heights", help="comma-separated filter heights")
    _add(p, "n_filters", help="filters per height")
    _add(p, "batch_size", help="mini-batch size")
    _add(p, "epochs", help="training epochs")
    _add(p, "optimizer", help="adam or sgd")
    _add(p, "lr", help="learning rate")
    _add(p, "beta1", help="adam first-moment decay")
    _add(p, "beta2", help="adam second-moment decay")
    _add(p, "adam_eps", help="adam epsilon")
    _add(p, "lam", help="L2 weight penalty")
    _add(p, "dropout_keep", help="dropout keep probability on the pooled vector")
    _add(p, "eval_every", help="evaluate every N epochs")

    p = sub.add_parser("attend", help="score words of sentences with a checkpoint")
    p.add_argument("--config", help="key=value config file")
    _add(p, "checkpoint", help="model checkpoint path")
    _add(p, "vocab", help="vocabulary TSV (default: next to the checkpoint)")
    _add(p, "sentence", help="one sentence to score")
    _add(p, "input", help="file with one sentence per line")
    _add(p, "label", help="class to score: auto, positive, or negative")
    _add(p, "fraction", help="top fraction of words to highlight")
    _add(p, "bottom_fraction", arg_type=float,
         help="also mark this bottom fraction in the opposite color")
    _add(p, "formats", help="comma-separated output formats: html,json,ansi")
    _add(p, "out", help="output directory for reports")
    _add(p, "seed", help="logged for provenance; attention is deterministic")
    _add(p, "keep_case", help="keep Latin-script case instead of folding")

    p = sub.add_parser("topwords", help="frequent attended words over the test split")
    p.add_argument("--config", help="key=value config file")
    _add(p, "checkpoint", help="model checkpoint path")
    _add(p, "vocab", help="vocabulary TSV (default: next to the checkpoint)")
    _add(p, "corpus", help="prepared corpus directory")
    _add(p, "top_k", help="words taken from each sentence")
    _add(p, "out", help="output directory for the tables")
    _add(p, "seed", help="logged for provenance")

    p = sub.add_parser("evaluate", help="accuracy of a checkpoint on the test split")
    p.add_argument("--config", help="key=value config file")
    _add(p, "checkpoint", help="model checkpoint path")
    _add(p, "vocab", help="vocabulary TSV (default: next to the checkpoint)")
    _add(p, "corpus", help="prepared corpus directory")

    return parser


_COMMANDS = {
    "prepare": cmd_prepare,
    "embed": cmd_embed,
    "train": cmd_train,
    "attend": cmd_attend,
    "topwords": cmd_topwords,
    "evaluate": cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
