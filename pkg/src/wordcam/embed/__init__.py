"""Embedding channels for the CNN input: random, skip-gram, co-occurrence
factorization, and subword n-gram variants."""

from wordcam.embed.channels import (
    ChannelConfig,
    EmbeddingChannel,
    InputMode,
    Source,
    assemble,
    export_text,
    import_text,
    init_random,
    load_channel,
    save_channel,
)
from wordcam.embed.cooccur import CoocFit, build_cooc, fit_cooc, train_cooc_factor
from wordcam.embed.skipgram import SkipGramFit, fit_skipgram, train_skipgram
from wordcam.embed.subword import (
    SubwordFit,
    fit_subword,
    ngram_bucket,
    train_subword,
    word_ngrams,
)

__all__ = [
    "ChannelConfig",
    "EmbeddingChannel",
    "InputMode",
    "Source",
    "assemble",
    "export_text",
    "import_text",
    "init_random",
    "load_channel",
    "save_channel",
    "CoocFit",
    "build_cooc",
    "fit_cooc",
    "train_cooc_factor",
    "SkipGramFit",
    "fit_skipgram",
    "train_skipgram",
    "SubwordFit",
    "fit_subword",
    "ngram_bucket",
    "train_subword",
    "word_ngrams",
]
