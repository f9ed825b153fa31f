import json

import pytest

from diacmtl.cli import main
from diacmtl.synthetic import SyntheticLanguage, write_files

MODEL = ["--set", "char_emb_dim=8", "--set", "word_emb_dim=8", "--set", "hidden=6",
         "--set", "layers_main=1", "--epochs", "1"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    lang = SyntheticLanguage(0)
    write_files(root / "train", lang.lines(6, seed=1, max_words=5))
    write_files(root / "dev", lang.lines(3, seed=2, max_words=5))
    return root


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["train", "--train", str(corpus / "train"), "--dev", str(corpus / "dev"),
                 "--out", str(out), *MODEL])
    assert code == 0
    return out


def _files(root, name):
    return [str(root / f"{name}.{ext}") for ext in ("txt", "pos", "seg")]


def test_prepare_writes_dataset_and_stats(corpus, tmp_path, capsys):
    assert main(["prepare", *_files(corpus, "train"), "--out", str(tmp_path / "tr")]) == 0
    out = capsys.readouterr().out
    assert "sentences 6" in out and "OOV rate NA" in out
    lines = (tmp_path / "tr" / "dataset.jsonl").read_text().splitlines()
    assert len(lines) == 6 and "text" in json.loads(lines[0])
    assert main(["prepare", *_files(corpus, "dev"), "--out", str(tmp_path / "dv"),
                 "--train-vocab", str(tmp_path / "tr" / "vocab.json")]) == 0
    rate = capsys.readouterr().out.split("OOV rate ")[1].strip()
    assert rate.endswith("%") and 0.0 <= float(rate[:-1]) <= 100.0


def test_prepare_three_line_corpus(tmp_path, capsys):
    (tmp_path / "c.txt").write_text("kataba\nEalamu kataba\nEalamu\n")
    (tmp_path / "c.pos").write_text("VERB\nNOUN VERB\nNOUN\n")
    (tmp_path / "c.seg").write_text("kataba\nEalamu kataba\nEalamu\n")
    assert main(["prepare", *_files(tmp_path, "c"), "--out", str(tmp_path / "o")]) == 0
    assert "sentences 3" in capsys.readouterr().out


def test_misaligned_pos_is_a_validation_error(corpus, tmp_path, capsys):
    (tmp_path / "bad.txt").write_text((corpus / "train.txt").read_text())
    (tmp_path / "bad.seg").write_text((corpus / "train.seg").read_text())
    pos = (corpus / "train.pos").read_text().splitlines()
    pos[1] = pos[1] + " NOUN"
    (tmp_path / "bad.pos").write_text("\n".join(pos) + "\n")
    assert main(["prepare", *_files(tmp_path, "bad"), "--out", str(tmp_path / "o")]) == 2
    assert "line 2" in capsys.readouterr().err
    assert not (tmp_path / "o" / "dataset.jsonl").exists()


def test_missing_file_is_a_runtime_error(tmp_path, capsys):
    assert main(["prepare", *_files(tmp_path, "nothing"), "--out", str(tmp_path / "o")]) == 1
    assert "error:" in capsys.readouterr().err


def test_bad_flags_are_validation_errors(corpus, tmp_path):
    base = ["train", "--train", str(corpus / "train"), "--out", str(tmp_path)]
    assert main(base + ["--tasks", "seg,nope"]) == 2
    assert main(base + ["--set", "no_such_key=1"]) == 2
    assert main(base + ["--set", "hidden=-3"]) == 2


def test_train_outputs(trained):
    names = {p.name for p in trained.iterdir()}
    assert {"best.ckpt", "last.ckpt", "train.log.jsonl", "config.txt"} <= names
    assert "tasks=seg,syn,pos" in (trained / "config.txt").read_text()


def test_eval_is_byte_identical(trained, corpus, capsys):
    assert main(["eval", str(trained), str(corpus / "dev")]) == 0
    first = capsys.readouterr().out
    assert main(["eval", str(trained / "best.ckpt"), str(corpus / "dev")]) == 0
    assert capsys.readouterr().out == first
    keys = [line.split()[0] for line in first.splitlines()]
    assert keys[:4] == ["wer", "der", "ler", "lex"]


def test_restore_file_to_file(trained, tmp_path):
    (tmp_path / "in.txt").write_text("Elm ktb\n\n")
    assert main(["restore", str(trained), str(tmp_path / "in.txt"), str(tmp_path / "out.txt")]) == 0
    lines = (tmp_path / "out.txt").read_text().split("\n")
    assert lines[1] == "" and len(lines[0].split()) == 2


def test_significance(tmp_path, capsys):
    (tmp_path / "a.txt").write_text("8.5 8.6 8.4\n")
    (tmp_path / "b.txt").write_text("7.5, 7.6, 7.4\n")
    assert main(["significance", str(tmp_path / "a.txt"), str(tmp_path / "b.txt")]) == 0
    out = dict(line.split(" ", 1) for line in capsys.readouterr().out.splitlines())
    assert out["significant"] == "yes" and float(out["t"]) > 0
    (tmp_path / "c.txt").write_text("1 1 1\n")
    assert main(["significance", str(tmp_path / "c.txt"), str(tmp_path / "c.txt")]) == 2
    (tmp_path / "d.txt").write_text("1\n")
    assert main(["significance", str(tmp_path / "d.txt"), str(tmp_path / "a.txt")]) == 2


def test_synth_and_version(tmp_path, capsys):
    assert main(["synth", str(tmp_path / "s"), "--sentences", "4", "--emb-dim", "8"]) == 0
    assert len((tmp_path / "s.txt").read_text().splitlines()) == 4
    assert (tmp_path / "s.vec").read_text().split()[1] == "8"
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
