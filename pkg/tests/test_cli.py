import json
import subprocess
import sys

import pytest

from aasistx.cli import main
from aasistx.metrics import read_scores


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    assert main(["make-toy", str(root), "--n-train", "3", "--n-dev", "2", "--seconds", "0.5"]) == 0
    cfg = {
        "epochs": 3, "batch_size": 4, "lr": 0.001, "crop_seconds": 0.5,
        "data": {"train_manifest": str(root / "train.tsv"), "val_manifest": str(root / "dev.tsv"),
                 "out_dir": str(root / "run")},
    }
    (root / "config.json").write_text(json.dumps(cfg))
    return root


def test_train_evaluate_round_trip(corpus, capsys):
    assert main(["train", "--config", str(corpus / "config.json"), "--preset", "mha", "--seed", "3"]) == 0
    assert "trained preset mha" in capsys.readouterr().out
    assert (corpus / "run" / "best.pt").is_file() and (corpus / "run" / "metrics.csv").is_file()
    out = corpus / "scores.tsv"
    assert main(["evaluate", "--checkpoint", str(corpus / "run" / "best.pt"), "--manifest",
                 str(corpus / "dev.tsv"), "--out", str(out)]) == 0
    assert "EER" in capsys.readouterr().out
    assert len(read_scores(out)) == 4


def test_override_flag(corpus):
    assert main(["train", "--config", str(corpus / "config.json"), "--preset", "baseline",
                 "-o", "epochs=1", "-o", f"data.out_dir=\"{corpus / 'run1'}\""]) == 0
    assert (corpus / "run1" / "metrics.csv").read_text().count("\n") == 2


def test_ablate_writes_report(corpus, capsys):
    report = corpus / "ablation.txt"
    assert main(["ablate", "--config", str(corpus / "config.json"), "--presets", "baseline,full",
                 "--report", str(report), "-o", "epochs=1"]) == 0
    text = report.read_text()
    assert "Baseline AASIST" in text and "Full Proposed Modifications" in text
    assert report.with_suffix(".csv").read_text().count("\n") == 3


def test_config_error_exit_code(corpus, capsys):
    assert main(["train", "--config", str(corpus / "config.json"), "-o", "batch_size=0"]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_manifest_is_error(tmp_path, capsys):
    assert main(["train"]) == 2
    assert "manifest" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "aasistx", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("train", "evaluate", "ablate", "make-toy"):
        assert cmd in res.stdout
