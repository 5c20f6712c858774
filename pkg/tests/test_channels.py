import numpy as np
import pytest

from wordcam.corpus import Vocabulary
from wordcam.embed import (
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
from wordcam.errors import ConfigError, DataError


def test_init_random_single_row_is_pad():
    ch = init_random(1, 100, seed=0)
    assert ch.table.shape == (1, 100)
    assert np.all(ch.table == 0.0)


def test_init_random_deterministic_and_bounded():
    a = init_random(5, 100, seed=7)
    b = init_random(5, 100, seed=7)
    assert np.array_equal(a.table, b.table)
    assert np.abs(a.table).max() <= 0.25
    assert np.all(a.table[0] == 0.0)
    c = init_random(5, 100, seed=8)
    assert not np.array_equal(a.table, c.table)


def test_channel_rejects_nonzero_pad_row():
    table = np.ones((3, 4), dtype=np.float32)
    with pytest.raises(DataError):
        EmbeddingChannel(table, True, Source.RAND)
    table[0] = np.nan
    with pytest.raises(DataError):
        EmbeddingChannel(table, True, Source.RAND)


def _sources(v=8, k=5):
    def mk(source, seed):
        ch = init_random(v, k, seed=seed)
        return EmbeddingChannel(ch.table, trainable=True, source=source)

    return {
        "rand": mk(Source.RAND, 0),
        "skipgram": mk(Source.SKIPGRAM, 1),
        "cooc": mk(Source.COOC, 2),
        "subword": mk(Source.SUBWORD, 3),
    }


def test_assemble_rand():
    src = _sources()
    cfg = assemble(InputMode.RAND, rand=src["rand"])
    assert len(cfg.channels) == 1
    assert cfg.channels[0].trainable


def test_assemble_static_and_non_static():
    src = _sources()
    static = assemble(InputMode.STATIC, skipgram=src["skipgram"])
    assert not static.channels[0].trainable
    non_static = assemble(InputMode.NON_STATIC, skipgram=src["skipgram"])
    assert non_static.channels[0].trainable


def test_assemble_two_channel_copies():
    src = _sources()
    cfg = assemble(InputMode.TWO_CH, skipgram=src["skipgram"])
    frozen, trainable = cfg.channels
    assert (frozen.trainable, trainable.trainable) == (False, True)
    assert np.array_equal(frozen.table, trainable.table)
    # independent copies: updating one must not leak into the other
    trainable.table[1] += 1.0
    assert not np.array_equal(frozen.table, trainable.table)
    assert np.array_equal(frozen.table, src["skipgram"].table)


def test_assemble_four_channels_all_trainable():
    src = _sources()
    cfg = assemble(
        InputMode.FOUR_CH,
        skipgram=src["skipgram"],
        cooc=src["cooc"],
        subword=src["subword"],
    )
    assert len(cfg.channels) == 4
    assert all(ch.trainable for ch in cfg.channels)
    assert [ch.source for ch in cfg.channels] == [
        Source.SKIPGRAM, Source.COOC, Source.SUBWORD, Source.SKIPGRAM,
    ]
    # first and fourth start from the same table but are independent
    assert np.array_equal(cfg.channels[0].table, cfg.channels[3].table)
    cfg.channels[0].table[2] += 1.0
    assert not np.array_equal(cfg.channels[0].table, cfg.channels[3].table)


def test_assemble_missing_channel():
    with pytest.raises(ConfigError):
        assemble(InputMode.STATIC, rand=_sources()["rand"])
    with pytest.raises(ConfigError):
        assemble(InputMode.FOUR_CH, skipgram=_sources()["skipgram"])


def test_mode_parse():
    assert InputMode.parse("2ch") is InputMode.TWO_CH
    assert InputMode.parse("Non-Static") is InputMode.NON_STATIC
    with pytest.raises(ConfigError):
        InputMode.parse("fivech")


def test_channel_binary_roundtrip(tmp_path):
    ch = init_random(9, 7, seed=4)
    ch = EmbeddingChannel(ch.table, trainable=False, source=Source.SKIPGRAM)
    path = tmp_path / "ch.emb"
    save_channel(ch, path)
    loaded = load_channel(path)
    assert np.array_equal(loaded.table, ch.table)
    assert loaded.trainable is False
    assert loaded.source is Source.SKIPGRAM
    # identical bytes on rewrite
    save_channel(loaded, tmp_path / "ch2.emb")
    assert (tmp_path / "ch.emb").read_bytes() == (tmp_path / "ch2.emb").read_bytes()


def test_channel_binary_rejects_other_files(tmp_path):
    path = tmp_path / "junk.emb"
    path.write_bytes(b"not a channel")
    with pytest.raises(DataError):
        load_channel(path)


def test_text_export_import(tmp_path):
    vocab = Vocabulary.build([["ant", "bee", "cat"]])
    ch = init_random(len(vocab), 4, seed=2)
    path = tmp_path / "vectors.txt"
    export_text(ch, vocab, path)
    loaded = import_text(path, vocab)
    assert np.allclose(loaded.table, ch.table)
    # tokens missing from the file stay zero
    partial = tmp_path / "partial.txt"
    partial.write_text("bee 1.0 2.0 3.0 4.0\n", encoding="utf-8")
    got = import_text(partial, vocab)
    assert np.allclose(got.table[vocab.token_to_id["bee"]], [1, 2, 3, 4])
    assert np.all(got.table[vocab.token_to_id["ant"]] == 0.0)
