import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from wordcam.cli import RunConfig, build_parser, main, read_config_file
from wordcam.model import load_checkpoint


def make_csv(path: Path, n_per_class=12, seed=0):
    """Tiny but learnable dataset: positive rows carry 'delight', negative
    rows carry 'dreary', both amid shared filler."""
    rng = np.random.default_rng(seed)
    filler = ["the", "movie", "was", "seen", "by", "folks", "at", "night",
              "with", "friends"]
    rows = ["text,rating"]
    for i in range(n_per_class):
        pick = lambda: " ".join(
            filler[int(j)] for j in rng.integers(0, len(filler), size=5)
        )
        rows.append(f"a {pick()} delight truly,9")
        rows.append(f"a {pick()} dreary slog,2")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def run(args):
    return main([str(a) for a in args])


@pytest.fixture
def pipeline_dirs(tmp_path):
    data = make_csv(tmp_path / "reviews.csv")
    dirs = {
        "data": data,
        "corpus": tmp_path / "corpus",
        "channels": tmp_path / "channels",
        "run": tmp_path / "run",
        "reports": tmp_path / "reports",
    }
    return dirs


def _prepare(dirs, seed=3):
    return run([
        "prepare", "--data", dirs["data"], "--data-format", "csv",
        "--scheme", "imdb", "--out", dirs["corpus"], "--seed", seed, "--d", "12",
    ])


def _embed(dirs, mode="rand", seed=3):
    return run([
        "embed", "--corpus", dirs["corpus"], "--mode", mode,
        "--out", dirs["channels"], "--seed", seed, "--k", "12",
        "--embed-epochs", "2", "--window", "2", "--negatives", "2",
    ])


def _train(dirs, seed=3, extra=()):
    return run([
        "train", "--corpus", dirs["corpus"], "--channels", dirs["channels"],
        "--out", dirs["run"], "--seed", seed, "--heights", "2,3",
        "--n-filters", "4", "--epochs", "8", "--batch-size", "8",
        "--lam", "0.001", "--lr", "0.01", *extra,
    ])


def test_full_pipeline(pipeline_dirs, capsys):
    dirs = pipeline_dirs
    assert _prepare(dirs) == 0
    out = capsys.readouterr().out
    assert "seed: 3" in out
    assert "vocabulary:" in out
    for name in ("vocab.tsv", "train.tsv", "test.tsv", "meta.json",
                 "embed_corpus.txt"):
        assert (dirs["corpus"] / name).is_file()

    assert _embed(dirs) == 0
    assert (dirs["channels"] / "channel_0.emb").is_file()
    assert (dirs["channels"] / "channels.json").is_file()

    assert _train(dirs) == 0
    out = capsys.readouterr().out
    assert "config:" in out and "batch_size=8" in out
    for name in ("checkpoint.ckpt", "last.ckpt", "history.csv"):
        assert (dirs["run"] / name).is_file()
    header = (dirs["run"] / "history.csv").read_text().splitlines()[0]
    assert header == "epoch,train_loss,test_acc"

    # attend needs the vocabulary next to the checkpoint by default
    ckpt = dirs["run"] / "checkpoint.ckpt"
    rc = run([
        "attend", "--checkpoint", ckpt, "--vocab", dirs["corpus"] / "vocab.tsv",
        "--sentence", "a truly delight evening", "--out", dirs["reports"],
        "--formats", "html,json,ansi",
    ])
    assert rc == 0
    for ext in ("html", "json", "ansi.txt"):
        assert (dirs["reports"] / f"attend_0000.{ext}").is_file()
    payload = json.loads((dirs["reports"] / "attend_0000.json").read_text())
    assert {w["token"] for w in payload["words"]} == {"a", "truly", "delight",
                                                      "evening"}

    rc = run([
        "topwords", "--checkpoint", ckpt, "--vocab", dirs["corpus"] / "vocab.tsv",
        "--corpus", dirs["corpus"], "--out", dirs["reports"], "--top-k", "2",
    ])
    assert rc == 0
    assert (dirs["reports"] / "topwords.csv").is_file()

    rc = run([
        "evaluate", "--checkpoint", ckpt, "--vocab", dirs["corpus"] / "vocab.tsv",
        "--corpus", dirs["corpus"],
    ])
    assert rc == 0


def test_help_covers_every_config_key(capsys):
    parser = build_parser()
    blobs = []
    for action in parser._subparsers._group_actions[0].choices.values():
        blobs.append(action.format_help())
    combined = "\n".join(blobs)
    for field in dataclasses.fields(RunConfig):
        flag = "--" + field.name.replace("_", "-")
        assert flag in combined, f"{flag} missing from help"


def test_readme_documents_every_config_key():
    readme = (Path(__file__).resolve().parent.parent / "README.md").read_text(
        encoding="utf-8"
    )
    for field in dataclasses.fields(RunConfig):
        assert f"`{field.name}`" in readme, f"{field.name} missing from README"


def test_prepare_all_excluded_exits_3(tmp_path, capsys):
    path = tmp_path / "mid.csv"
    path.write_text("text,rating\nso so,5\nmeh,6\neh,5\n", encoding="utf-8")
    rc = run(["prepare", "--data", path, "--data-format", "csv",
              "--out", tmp_path / "c"])
    assert rc == 3
    assert "no labeled examples" in capsys.readouterr().err


def test_unknown_mode_exits_2(pipeline_dirs):
    dirs = pipeline_dirs
    assert _prepare(dirs) == 0
    rc = run(["embed", "--corpus", dirs["corpus"], "--mode", "7ch",
              "--out", dirs["channels"]])
    assert rc == 2


def test_missing_dataset_exits_3(tmp_path):
    rc = run(["prepare", "--data", tmp_path / "missing", "--out", tmp_path / "c"])
    assert rc == 3


def test_config_file_and_flag_precedence(pipeline_dirs, tmp_path, capsys):
    dirs = pipeline_dirs
    assert _prepare(dirs) == 0
    assert _embed(dirs) == 0
    conf = tmp_path / "run.conf"
    conf.write_text("epochs=1\nbatch_size=4\n# comment\nlam=0.5\n",
                    encoding="utf-8")
    capsys.readouterr()
    rc = run([
        "train", "--config", conf, "--corpus", dirs["corpus"],
        "--channels", dirs["channels"], "--out", dirs["run"],
        "--heights", "2", "--n-filters", "2", "--epochs", "2",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "epochs=2" in out  # flag wins over the file
    assert "batch_size=4" in out and "lambda=0.5" in out  # file wins defaults


def test_config_file_unknown_key_exits_2(pipeline_dirs, tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("optimiser=adam\n", encoding="utf-8")
    rc = run(["train", "--config", conf, "--corpus", "x", "--channels", "y"])
    assert rc == 2
    assert "unknown config key" in capsys.readouterr().err


def test_read_config_file_types(tmp_path):
    conf = tmp_path / "ok.conf"
    conf.write_text("epochs=7\nlr=0.5\nkeep_case=true\nmode=2ch\n",
                    encoding="utf-8")
    got = read_config_file(str(conf))
    assert got == {"epochs": 7, "lr": 0.5, "keep_case": True, "mode": "2ch"}


def test_lr_zero_warning(pipeline_dirs, capsys):
    dirs = pipeline_dirs
    assert _prepare(dirs) == 0
    assert _embed(dirs) == 0
    capsys.readouterr()
    assert _train(dirs, extra=["--lr", "0", "--epochs", "1"]) == 0
    assert "parameters unchanged" in capsys.readouterr().out


def test_attend_batch_preserves_order(pipeline_dirs, tmp_path):
    dirs = pipeline_dirs
    assert _prepare(dirs) == 0
    assert _embed(dirs) == 0
    assert _train(dirs, extra=["--epochs", "1"]) == 0
    sentences = ["a dreary slog tonight", "a delight truly", "movie was seen"]
    batch = tmp_path / "batch.txt"
    batch.write_text("\n".join(sentences) + "\n", encoding="utf-8")
    rc = run([
        "attend", "--checkpoint", dirs["run"] / "checkpoint.ckpt",
        "--vocab", dirs["corpus"] / "vocab.tsv", "--input", batch,
        "--out", dirs["reports"], "--formats", "json",
    ])
    assert rc == 0
    for i, sentence in enumerate(sentences):
        payload = json.loads(
            (dirs["reports"] / f"attend_{i:04d}.json").read_text()
        )
        got = [w["token"] for w in payload["words"] if w["token"] is not None]
        assert got == sentence.split()


def test_attend_wrong_vocab_detected(pipeline_dirs, tmp_path):
    dirs = pipeline_dirs
    assert _prepare(dirs) == 0
    assert _embed(dirs) == 0
    assert _train(dirs, extra=["--epochs", "1"]) == 0
    other = tmp_path / "other.tsv"
    other.write_text("<pad>\t0\t0\nword\t1\t3\n", encoding="utf-8")
    rc = run([
        "attend", "--checkpoint", dirs["run"] / "checkpoint.ckpt",
        "--vocab", other, "--sentence", "word", "--out", dirs["reports"],
    ])
    assert rc == 3


def test_embed_two_channel_writes_two_files(pipeline_dirs):
    dirs = pipeline_dirs
    assert _prepare(dirs) == 0
    assert _embed(dirs, mode="2ch") == 0
    meta = json.loads((dirs["channels"] / "channels.json").read_text())
    assert meta["mode"] == "2ch"
    assert len(meta["files"]) == 2
    for name in meta["files"]:
        assert (dirs["channels"] / name).is_file()


def test_embed_four_channel_end_to_end(pipeline_dirs):
    dirs = pipeline_dirs
    assert _prepare(dirs) == 0
    rc = run([
        "embed", "--corpus", dirs["corpus"], "--mode", "4ch",
        "--out", dirs["channels"], "--seed", "3", "--k", "8",
        "--embed-epochs", "1", "--window", "2", "--negatives", "2",
        "--bucket", "512",
    ])
    assert rc == 0
    meta = json.loads((dirs["channels"] / "channels.json").read_text())
    assert len(meta["files"]) == 4
    assert _train(dirs, extra=["--epochs", "1"]) == 0


def test_last_checkpoint_loadable_after_each_epoch(pipeline_dirs):
    dirs = pipeline_dirs
    assert _prepare(dirs) == 0
    assert _embed(dirs) == 0
    assert _train(dirs, extra=["--epochs", "2"]) == 0
    params, channels, meta = load_checkpoint(dirs["run"] / "last.ckpt")
    assert meta["extra"]["epoch"] == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exits_4(pipeline_dirs, capsys):
    dirs = pipeline_dirs
    assert _prepare(dirs) == 0
    assert _embed(dirs) == 0
    rc = _train(dirs, extra=["--optimizer", "sgd", "--lr", "1e25",
                             "--epochs", "20"])
    assert rc == 4
    assert "divergence" in capsys.readouterr().err


def test_data_dir_env_var(pipeline_dirs, monkeypatch):
    dirs = pipeline_dirs
    monkeypatch.setenv("WORDCAM_DATA_DIR", str(dirs["data"]))
    rc = run(["prepare", "--data-format", "csv", "--out", dirs["corpus"],
              "--d", "12"])
    assert rc == 0


def test_topwords_empty_test_split_exits_3(pipeline_dirs):
    dirs = pipeline_dirs
    assert _prepare(dirs) == 0
    assert _embed(dirs) == 0
    assert _train(dirs, extra=["--epochs", "1"]) == 0
    (dirs["corpus"] / "test.tsv").write_text("", encoding="utf-8")
    rc = run([
        "topwords", "--checkpoint", dirs["run"] / "checkpoint.ckpt",
        "--vocab", dirs["corpus"] / "vocab.tsv", "--corpus", dirs["corpus"],
        "--out", dirs["reports"],
    ])
    assert rc == 3
