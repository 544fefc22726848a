import csv
import hashlib
import math
import subprocess
import sys

import numpy as np
import pytest
import torch

from aasistx.config import PRESETS, TrainConfig, apply_preset, from_dict, load_config, to_dict
from aasistx.data import Manifest
from aasistx.frontend import ConfigError
from aasistx.metrics import compute_eer
from aasistx.toy import toy_examples, write_toy_corpus
from aasistx.trainer import (METRICS_FIELDS, ROW_LABELS, Checkpoint, TrainingDiverged, cosine_lr, crop, evaluate,
                             load_model, run_ablation, train, utterance_seed)

TRAIN = toy_examples(4, 0.5, 0, "tr")
DEV = toy_examples(3, 0.5, 1, "dev")


def tiny(preset="full", **kw) -> TrainConfig:
    base = dict(crop_seconds=0.5, batch_size=4, epochs=3, lr=1e-3)
    base.update(kw)
    return apply_preset(TrainConfig(**base), preset)


# schedule

def test_cosine_examples():
    assert cosine_lr(0, 1e-4, 300) == 1e-4
    assert cosine_lr(150, 1e-4, 300) == pytest.approx(5e-5, abs=1e-18)


@pytest.mark.parametrize("restart", [True, False])
def test_cosine_trace_closed_form(restart):
    for step in range(1500):
        t = step % 300 if restart else min(step, 300)
        ref = 0.5 * (1 + math.cos(math.pi * t / 300)) * 1e-4
        assert abs(cosine_lr(step, 1e-4, 300, restart) - ref) <= 1e-12
    assert cosine_lr(300, 1e-4, 300, True) == 1e-4
    assert cosine_lr(450, 1e-4, 300, False) == 0.0


def test_trained_lr_follows_schedule():
    r = train(tiny(epochs=3, cosine_t_max=4), TRAIN, DEV)
    steps_per_epoch = 2
    for rec in r.history:
        last = (rec.epoch + 1) * steps_per_epoch - 1
        assert rec.lr == cosine_lr(last, 1e-3, 4)


# seeding

def test_utterance_seed_matches_independent_hash():
    expected = int.from_bytes(hashlib.sha256(b"7/utt_001/3").digest()[:8], "big") >> 1
    assert utterance_seed(7, "utt_001", 3) == expected


def test_utterance_seed_stable_across_processes():
    code = "from aasistx.trainer import utterance_seed; print(utterance_seed(11, 'abc', 2))"
    outs = {subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True,
                           env={"PYTHONHASHSEED": str(h), "PATH": ""}).stdout.strip() for h in (0, 1, 2)}
    assert outs == {str(utterance_seed(11, "abc", 2))}


def test_crop_tiles_short_input():
    rng = np.random.default_rng(0)
    out = crop(np.arange(5, dtype=np.float32), 12, rng)
    assert out.size == 12
    assert set(out.tolist()) <= set(range(5))


def test_equal_seeds_equal_losses_float64():
    a = train(tiny(dtype="float64"), TRAIN, DEV)
    b = train(tiny(dtype="float64"), TRAIN, DEV)
    assert a.losses == b.losses


def test_different_seeds_differ():
    a = train(tiny(epochs=1, seed=0), TRAIN)
    b = train(tiny(epochs=1, seed=1), TRAIN)
    assert a.losses[0] != b.losses[0]


# epoch loop

def test_validation_skipped_during_warmup():
    data = toy_examples(5, 0.5, 2, "w")
    r = train(tiny(epochs=2), data, DEV)
    assert r.validations == 0
    assert all(rec.val_eer is None for rec in r.history)
    r = train(tiny(epochs=3), data, DEV)
    assert r.validations == 1


def test_best_checkpoint_is_minimum_validation():
    r = train(tiny(epochs=5), TRAIN, DEV)
    vals = [rec.val_eer for rec in r.history if rec.val_eer is not None]
    assert r.best.best_val_eer == min(vals)
    assert compute_eer(evaluate(r.best, DEV))[0] == pytest.approx(min(vals))


def test_loss_trigger_ramps_lambda_from_validation():
    cfg = tiny(epochs=6)
    cfg.loss.trigger_threshold = 1.01  # fires at the first validation
    r = train(cfg, TRAIN, DEV)
    lams = [rec.blend_lambda for rec in r.history]
    # first validation is at epoch 2; the trigger is seen at the start of epoch 3
    assert lams == [0.0, 0.0, 0.0, 0.0, 0.2, 0.4]
    assert r.last.loss_state["triggered"] and r.last.loss_state["trigger_epoch"] == 3


def test_augmentation_schedule_logged():
    r = train(tiny(epochs=2), TRAIN)
    assert [(rec.p, rec.kappa) for rec in r.history] == [(0.5, 1.0), pytest.approx((0.54, 1.08))]


def test_frozen_encoder_untouched_by_training():
    cfg = tiny("frozen_frontend")
    torch.manual_seed(0)
    r = train(cfg, TRAIN, DEV)
    fresh = load_model(r.last)
    ref = apply_preset(TrainConfig(), "frozen_frontend").model
    from aasistx.model import CountermeasureModel

    baseline = CountermeasureModel(ref)
    for (n, p), (_, q) in zip(fresh.encoder.named_parameters(), baseline.encoder.named_parameters()):
        assert torch.equal(p, q), n


def test_divergence_reports_step(monkeypatch):
    import aasistx.trainer as tr

    calls = {"n": 0}
    real = tr.hybrid_loss

    def flaky(*args, **kw):
        calls["n"] += 1
        loss = real(*args, **kw)
        return loss * float("nan") if calls["n"] == 3 else loss

    monkeypatch.setattr(tr, "hybrid_loss", flaky)
    with pytest.raises(TrainingDiverged, match="step 2"):
        train(tiny(), TRAIN)


def test_preflight_errors_before_training(monkeypatch):
    import aasistx.trainer as tr

    monkeypatch.setattr(tr, "hybrid_loss", lambda *a, **k: pytest.fail("training started"))
    with pytest.raises(ConfigError):
        train(tiny(crop_seconds=0.01), TRAIN)
    with pytest.raises(ConfigError):
        train(tiny(batch_size=0), TRAIN)
    with pytest.raises(ConfigError):
        train(tiny(), [])
    bad = tiny()
    bad.model.attention.num_heads = 5
    with pytest.raises(ConfigError):
        train(bad, TRAIN)


def test_missing_audio_is_preflight_error(tmp_path):
    (tmp_path / "m.tsv").write_text("u1\tgone.wav\tbonafide\n")
    with pytest.raises(ConfigError, match="missing"):
        train(tiny(), tmp_path / "m.tsv")


def test_out_dir_artifacts(tmp_path):
    r = train(tiny(), TRAIN, DEV, out_dir=tmp_path)
    assert (tmp_path / "best.pt").is_file() and (tmp_path / "last.pt").is_file()
    with open(tmp_path / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0].keys()) == METRICS_FIELDS == ("epoch", "train_loss", "val_eer", "lr", "p", "kappa",
                                                       "lambda")
    assert len(rows) == 3 and rows[0]["val_eer"] == "" and rows[2]["val_eer"] != ""
    assert float(rows[2]["train_loss"]) == pytest.approx(r.history[2].train_loss)


# checkpoints and evaluation

def test_checkpoint_round_trip_bit_identical(tmp_path):
    r = train(tiny(epochs=1), TRAIN)
    before = evaluate(r.last, DEV)
    r.last.save(tmp_path / "c.pt")
    after = evaluate(Checkpoint.load(tmp_path / "c.pt"), DEV)
    assert before == after
    assert evaluate(r.last, DEV) == before


def test_evaluate_empty_manifest(tmp_path):
    r = train(tiny(epochs=1), TRAIN)
    (tmp_path / "empty.tsv").write_text("")
    assert len(evaluate(r.last, tmp_path / "empty.tsv")) == 0
    assert len(evaluate(r.last, Manifest([]))) == 0


def test_evaluate_architecture_mismatch_lists_names():
    r = train(tiny("full", epochs=1), TRAIN)
    other = apply_preset(TrainConfig(crop_seconds=0.5), "baseline")
    with pytest.raises(ConfigError, match="attention.spectral"):
        evaluate(r.last, DEV, other)


def test_evaluate_one_record_per_utterance_full_length():
    r = train(tiny(epochs=1), TRAIN)
    mixed = TRAIN[:2] + toy_examples(1, 0.8, 5, "long")
    s = evaluate(r.last, mixed)
    assert [rec.id for rec in s.records] == [ex.waveform.id for ex in mixed]


def test_resume_matches_uninterrupted(tmp_path):
    full = train(tiny(epochs=10, dtype="float64"), TRAIN, DEV)
    first = train(tiny(epochs=5, dtype="float64"), TRAIN, DEV)
    first.last.save(tmp_path / "half.pt")
    resumed = train(tiny(epochs=10, dtype="float64"), TRAIN, DEV, resume=Checkpoint.load(tmp_path / "half.pt"))
    assert resumed.losses == full.losses
    assert resumed.best.best_val_eer == full.best.best_val_eer
    for k, v in full.last.model_state.items():
        assert torch.equal(v, resumed.last.model_state[k]), k


# config

def test_config_round_trip_and_overrides(tmp_path):
    cfg = apply_preset(TrainConfig(), "mha")
    assert from_dict(to_dict(cfg)) == cfg
    (tmp_path / "c.json").write_text('{"epochs": 4, "model": {"attention": {"num_heads": 2}}}')
    loaded = load_config(tmp_path / "c.json", ["lr=0.001", "augmentation.schedule.ramp_epochs=3",
                                               "data.out_dir=runs/x"])
    assert loaded.epochs == 4 and loaded.model.attention.num_heads == 2 and loaded.lr == 0.001
    assert loaded.augmentation.schedule.ramp_epochs == 3 and loaded.data.out_dir == "runs/x"


def test_config_rejects_unknown_keys(tmp_path):
    (tmp_path / "c.json").write_text('{"epochz": 4}')
    with pytest.raises(ConfigError, match="epochz"):
        load_config(tmp_path / "c.json")


def test_preset_switches():
    table = {p: apply_preset(TrainConfig(), p) for p in PRESETS}
    assert not table["baseline"].model.frontend.frozen and not table["baseline"].model.frontend.pretrained
    assert not table["trainable_frontend"].model.frontend.frozen
    assert table["trainable_frontend"].model.frontend.pretrained
    assert all(table[p].model.frontend.frozen for p in ("frozen_frontend", "mha", "fusion", "full"))
    assert [table[p].model.attention.formalism for p in PRESETS] == ["pairwise_gat"] * 3 + ["mha"] * 3
    assert [table[p].model.fusion.strategy for p in PRESETS] == ["max"] * 4 + ["attention"] * 2
    assert [table[p].augmentation.enabled for p in PRESETS] == [False] * 5 + [True]


def test_defaults():
    cfg = TrainConfig()
    assert (cfg.batch_size, cfg.epochs, cfg.lr, cfg.cosine_t_max, cfg.warmup_no_val_epochs) == (48, 20, 1e-4, 300, 2)


# ablation

def test_ablation_two_presets():
    rep = run_ablation(["baseline", "full"], tiny(epochs=3), TRAIN, DEV)
    assert [r.preset for r in rep.rows] == ["baseline", "full"]
    for r in rep.rows:
        assert r.error is None and 0.0 <= r.eer <= 1.0
        assert 0.0 <= float(r.eer_text) <= 100.0


def test_ablation_failure_stays_in_row():
    rep = run_ablation(["bogus", "baseline"], tiny(epochs=1), TRAIN, DEV)
    assert rep.rows[0].error and "bogus" in rep.rows[0].error and rep.rows[0].eer is None
    assert rep.rows[1].error is None and rep.rows[1].eer is not None
    assert "failed" in rep.render_text()


def test_ablation_needs_presets():
    with pytest.raises(ConfigError):
        run_ablation([], tiny(), TRAIN, DEV)


def test_report_rendering(tmp_path):
    from aasistx.trainer import AblationReport, AblationRow

    rep = AblationReport([AblationRow(p, ROW_LABELS[p], eer) for p, eer in zip(PRESETS, [.2758, .2167, .0876,
                                                                                      .0843, .0793, .0766])])
    text = rep.render_text()
    assert "Trainable Wav2Vec front-end" in text and "27.58" in text and "7.66" in text
    t1, t2, t3 = rep.tables()
    assert [label for label, _ in t1[1]] == ["Baseline AASIST", "Trainable Wav2Vec front-end",
                                             "Frozen Wav2Vec front-end", "Full Proposed Modifications"]
    assert [r.eer_text for _, r in t2[1]] == ["8.76", "8.43", "7.66"]
    assert [r.eer_text for _, r in t3[1]] == ["8.43", "7.93", "7.66"]
    txt, csv_path = rep.save(tmp_path / "report.txt")
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "preset,configuration,eer_percent,error" and len(lines) == 7
    assert lines[1] == 'baseline,"Baseline AASIST",27.58,'


def test_toy_corpus_writes_manifests(tmp_path):
    train_m, dev_m = write_toy_corpus(tmp_path, n_train=3, n_dev=2, seconds=0.25)
    from aasistx.data import load_examples, load_manifest

    tr = load_examples(load_manifest(train_m))
    assert len(tr) == 6 and len(load_manifest(dev_m)) == 4
    np.testing.assert_allclose(tr[0].waveform.samples, toy_examples(3, 0.25, 0, "train")[0].waveform.samples)
