#!/usr/bin/env python3
"""Desk-scale IMDB experiment: stratified 5000/1000 subset, one or more
input modes, accuracy table plus attention samples.

Expects the unpacked archive (see scripts/download_imdb.py). The full run
with the default two modes takes a few minutes on one core.

Usage:
    python scripts/run_imdb_subset.py --imdb data/aclImdb --modes rand,static
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from wordcam.attention import attend
from wordcam.corpus import (
    IMDB_SCHEME,
    Vocabulary,
    encode_example,
    label_reviews,
    load_imdb_dir,
    split,
)
from wordcam.embed import (
    InputMode,
    assemble,
    init_random,
    train_cooc_factor,
    train_skipgram,
    train_subword,
)
from wordcam.model import ModelHyper, forward
from wordcam.report import accuracy_table, aggregate_top_words, from_attention, render_highlight
from wordcam.train import OptimizerConfig, TrainConfig, batch_arrays, train_epochs


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--imdb", default="data/aclImdb")
    parser.add_argument("--out", default="runs/imdb_subset")
    parser.add_argument("--modes", default="rand,static",
                        help="comma list from rand,static,non-static,2ch,4ch")
    parser.add_argument("--per-class", type=int, default=3000,
                        help="reviews sampled per class before the 5/6 split")
    parser.add_argument("--epochs", type=int, default=6)
    parser.add_argument("--embed-epochs", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    modes = [InputMode.parse(m) for m in args.modes.split(",") if m.strip()]

    t0 = time.time()
    print(f"loading {args.imdb} ...")
    examples, stats = label_reviews(load_imdb_dir(args.imdb), IMDB_SCHEME)
    print(f"{stats['kept']} labeled reviews ({stats['excluded']} excluded)")
    rng = np.random.default_rng(args.seed)
    pos = [e for e in examples if e.label.value == 1]
    neg = [e for e in examples if e.label.value == 0]
    subset = [pos[i] for i in rng.permutation(len(pos))[: args.per_class]]
    subset += [neg[i] for i in rng.permutation(len(neg))[: args.per_class]]
    parts = split(subset, ratio=5 / 6, seed=args.seed)
    vocab = Vocabulary.build(ex.tokens for ex in parts.train)
    d = 100
    train_set = [encode_example(ex, vocab, d) for ex in parts.train]
    test_set = [encode_example(ex, vocab, d) for ex in parts.test]
    sentences = [tuple(vocab.encode(ex.tokens, len(ex.tokens)))
                 for ex in parts.train]
    print(f"{len(train_set)} train / {len(test_set)} test, vocab {vocab.n_tokens}")

    need_sg = any(m is not InputMode.RAND for m in modes)
    skipgram = cooc = subword = None
    if need_sg:
        print("training skip-gram vectors ...")
        skipgram = train_skipgram(sentences, len(vocab), k=100, window=3,
                                  negatives=5, epochs=args.embed_epochs,
                                  seed=args.seed + 2)
    if any(m is InputMode.FOUR_CH for m in modes):
        print("training co-occurrence factorization ...")
        cooc = train_cooc_factor(sentences, len(vocab), k=100, window=3,
                                 epochs=max(args.embed_epochs * 5, 1),
                                 seed=args.seed + 3)
        print("training subword vectors ...")
        subword = train_subword(sentences, vocab.id_to_token, k=100, window=3,
                                epochs=args.embed_epochs, seed=args.seed + 4)

    hyper_for = lambda n: ModelHyper(k=100, d=d, heights=(3, 4, 5),
                                     n_filters=128, n_channels=n)
    config = TrainConfig(batch_size=64, epochs=args.epochs,
                         optimizer=OptimizerConfig("adam", 1e-3), lam=0.1,
                         keep=0.5, seed=args.seed)
    reports = {}
    best = {}
    for mode in modes:
        print(f"== {mode.value} ==")
        channels = assemble(
            mode,
            rand=init_random(len(vocab), 100, seed=args.seed + 1),
            skipgram=skipgram, cooc=cooc, subword=subword,
        )
        result = train_epochs(train_set, test_set, channels,
                              hyper_for(len(channels)), config)
        for rec in result.history:
            acc = "-" if rec.test_accuracy is None else f"{rec.test_accuracy:.4f}"
            print(f"  epoch {rec.epoch}: loss={rec.train_loss:.4f} acc={acc}")
        from wordcam.train import evaluate

        reports[mode.value] = evaluate(result.best_params, result.best_channels,
                                       test_set)
        best[mode.value] = result

    text, csv_text = accuracy_table(reports)
    print()
    print(text)
    (out / "accuracy.txt").write_text(text, encoding="utf-8")
    (out / "accuracy.csv").write_text(csv_text, encoding="utf-8")

    # attention samples and frequent attended words for the first mode
    mode = modes[0].value
    params = best[mode].best_params
    channels = best[mode].best_channels
    results = []
    for start in range(0, len(test_set), 256):
        chunk = test_set[start : start + 256]
        ids, lengths, _ = batch_arrays(chunk, d)
        trace = forward(ids, params, channels, mode="infer", n_words=lengths)
        for j, ex in enumerate(chunk):
            results.append(attend(trace, params, ex.tokens, item=j))
    for i, res in enumerate(results[:6]):
        doc = from_attention(res)
        (out / f"{mode}_sample_{i}.html").write_bytes(render_highlight(doc, "html"))
    table = aggregate_top_words(results, k=5)
    (out / f"{mode}_topwords.txt").write_text(table.to_text(), encoding="utf-8")
    print(f"finished in {time.time() - t0:.0f}s; outputs in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
