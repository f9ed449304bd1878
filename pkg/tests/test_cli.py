import shutil

import numpy as np
import pytest

from irislvq.cli import EXIT_CONFIG, EXIT_DIMENSION, EXIT_IO, EXIT_LOCALIZATION, main
from irislvq.features import read_feature_cache
from irislvq.image import write_pgm

SMALL = ["--classes", "3", "--images-per-class", "4", "--width", "200", "--height", "200", "--pupil-min", "15", "--pupil-max", "22"]
FAST = "lvq.epochs = 40\n"


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "fast.cfg").write_text(FAST)
    assert main(["synth", "--out", str(root / "ds"), "--seed", "1", *SMALL]) == 0
    assert main(["extract", str(root / "ds"), "--out", str(root / "feat"), "--config", str(root / "fast.cfg")]) == 0
    assert main(["train", str(root / "feat" / "features.txt"), "--out", str(root / "model.txt"), "--config", str(root / "fast.cfg")]) == 0
    return root


def test_pipeline_outputs(workdir, capsys):
    recs = read_feature_cache(workdir / "feat" / "features.txt")
    assert len(recs) == 12
    assert {r.split for r in recs} == {"train", "test"}
    assert (workdir / "feat" / "failures.txt").read_text() == "# irislvq-failures 1\n"
    report = workdir / "report.txt"
    assert main(["evaluate", str(workdir / "model.txt"), str(workdir / "ds"), "--out", str(report), "--config", str(workdir / "fast.cfg")]) == 0
    text = report.read_text()
    assert text.startswith("irislvq-report 1\n")
    for section in ("[config]", "[summary]", "[failures]", "[confusion]", "[per_class_accuracy]", "[images]"):
        assert section in text
    assert "lvq.epochs = 40" in text


def test_train_prints_accuracy_curves(workdir, capsys):
    out = workdir / "m2.txt"
    assert main(["train", str(workdir / "feat" / "features.txt"), "--out", str(out), "--config", str(workdir / "fast.cfg")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert sum(l.startswith("member ") for l in lines) == 3
    assert out.read_bytes() == (workdir / "model.txt").read_bytes()


def test_synth_and_extract_are_byte_identical(workdir, tmp_path):
    assert main(["synth", "--out", str(tmp_path / "ds"), "--seed", "1", *SMALL]) == 0
    for f in (workdir / "ds").rglob("*"):
        if f.is_file():
            assert (tmp_path / "ds" / f.relative_to(workdir / "ds")).read_bytes() == f.read_bytes()
    assert main(["extract", str(tmp_path / "ds"), "--out", str(tmp_path / "feat"), "--jobs", "2"]) == 0
    assert (tmp_path / "feat" / "features.txt").read_bytes() == (workdir / "feat" / "features.txt").read_bytes()


def test_localize_and_normalize_dumps(workdir, tmp_path):
    assert main(["localize", str(workdir / "ds"), "--out", str(tmp_path / "loc"), "--dump-debug", "--split", "test"]) == 0
    lines = (tmp_path / "loc" / "localization.txt").read_text().splitlines()
    assert lines[0] == "# irislvq-localization 1"
    assert all("\tok\t" in l for l in lines[2:])
    assert list((tmp_path / "loc" / "debug").rglob("*.edges.pgm"))
    hyp = next((tmp_path / "loc" / "debug").rglob("*.hypotheses.txt")).read_text().splitlines()
    assert len(hyp[0].split("#")[0].split()) == 4

    assert main(["normalize", str(workdir / "ds"), "--out", str(tmp_path / "norm"), "--split", "train"]) == 0
    tex = list((tmp_path / "norm").rglob("*.texture.pgm"))
    assert len(tex) == len(list((tmp_path / "norm").rglob("*.valid.pgm"))) > 0


def test_corrupt_image_is_isolated(workdir, tmp_path):
    ds = tmp_path / "ds"
    shutil.copytree(workdir / "ds", ds)
    victim = ds / "class01" / "image00.pgm"
    victim.write_bytes(victim.read_bytes()[:100])
    assert main(["extract", str(ds), "--out", str(tmp_path / "feat")]) == 0
    assert len(read_feature_cache(tmp_path / "feat" / "features.txt")) == 11
    failures = (tmp_path / "feat" / "failures.txt").read_text()
    assert "class01/image00.pgm\tfailed(decode)" in failures

    split = "train" if "class01/image00.pgm\t1\ttrain" in (ds / "manifest.txt").read_text() else "test"
    report = tmp_path / "r.txt"
    assert main(["evaluate", str(workdir / "model.txt"), str(ds), "--out", str(report), "--split", split]) == 0
    text = report.read_text()
    assert "class01/image00.pgm\t1\t-\tfailed(decode)" in text
    assert "decode 1" in text


def test_invalid_config_creates_nothing(workdir, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("lbp.P = 12\n")
    out = tmp_path / "never"
    for cmd in ("localize", "normalize", "extract"):
        assert main([cmd, str(workdir / "ds"), "--out", str(out), "--config", str(cfg)]) == EXIT_CONFIG
    assert main(["train", str(workdir / "feat" / "features.txt"), "--out", str(out / "m.txt"), "--config", str(cfg)]) == EXIT_CONFIG
    assert not out.exists()
    assert "config error" in capsys.readouterr().err


def test_classify_exit_codes(workdir, tmp_path, capsys):
    model = str(workdir / "model.txt")
    img = next((workdir / "ds" / "class02").glob("*.pgm"))
    assert main(["classify", model, str(img)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("label ")
    assert out.count("distance") == 3

    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P5\n20 20\n255\nxyz")
    assert main(["classify", model, str(bad)]) == EXIT_IO
    flat = tmp_path / "flat.pgm"
    write_pgm(flat, np.full((80, 80), 210, np.uint8))
    assert main(["classify", model, str(flat)]) == EXIT_LOCALIZATION
    assert main(["classify", str(tmp_path / "missing.txt"), str(flat)]) == EXIT_IO
    short = tmp_path / "short.txt"
    short.write_text("irislvq-features 1\n@record name=x label=0 split=test dimension=3 config=t\n1 2 3\n")
    assert main(["classify", model, str(short)]) == EXIT_DIMENSION


def test_train_rejects_mixed_dimensions(tmp_path):
    cache = tmp_path / "mixed.txt"
    cache.write_text(
        "irislvq-features 1\n"
        "@record name=a label=0 split=train dimension=2 config=t\n1 2\n"
        "@record name=b label=1 split=train dimension=3 config=t\n1 2 3\n"
    )
    assert main(["train", str(cache), "--out", str(tmp_path / "m.txt")]) == EXIT_DIMENSION
    assert not (tmp_path / "m.txt").exists()


def test_missing_manifest_is_io_error(tmp_path):
    assert main(["extract", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o")]) == EXIT_IO


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 2
