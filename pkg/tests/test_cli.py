import csv
import json

import numpy as np
import pytest

from acoustic_occupancy.cli import EXIT_CONFIG, EXIT_INGEST, main
from acoustic_occupancy.features import AudioClip, read_feature_csv, write_wav
from acoustic_occupancy.synth import SynthScenario, scenario_to_dict

FAST = ["--bic-candidates", "2", "--em-max-iters", "40", "--em-n-init", "1"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    traj = [int(b) ** 2 for b in np.arange(45) % 15]
    sc = SynthScenario(trajectory=tuple(traj), frames_per_window=40, separation=20, seed=1)
    (root / "scenario.json").write_text(json.dumps(scenario_to_dict(sc)))
    assert main(["synth", str(root / "scenario.json"), "--out-dir", str(root / "data")]) == 0
    return root


def test_synth_layout(synth_dir):
    rows = list(csv.DictReader(open(synth_dir / "data" / "ground_truth.csv")))
    assert len(rows) == 45
    assert rows[0]["audio_path"] == "data/window_0000.csv"
    truth = json.loads((synth_dir / "data" / "truth.json").read_text())
    assert len(truth["generative_models"]) == 15


def test_train_predict_round_trip(synth_dir, capsys):
    model = synth_dir / "model.json"
    gt = synth_dir / "data" / "ground_truth.csv"
    args = ["train", str(gt), "-o", str(model), "--window-seconds", "200", *FAST]
    assert main(args) == 0
    first = model.read_bytes()
    assert "bin 14" in capsys.readouterr().out
    assert main(args) == 0
    assert model.read_bytes() == first
    capsys.readouterr()

    for k in (3, 20):
        feat = synth_dir / "data" / "data" / f"window_{k:04d}.csv"
        assert main(["predict", str(model), str(feat), "--json", "--strategy", "hmm-mv"]) == 0
        rec = json.loads(capsys.readouterr().out)
        assert rec["bin"] == k % 15
        assert rec["occupancy"] == (k % 15) ** 2


def test_evaluate(synth_dir, tmp_path, capsys):
    out = tmp_path / "report"
    args = ["evaluate", str(synth_dir / "data" / "ground_truth.csv"), "--window-sizes", "100,200",
            "--bootstrap-iters", "3", "--out-dir", str(out), *FAST]
    assert main(args) == 0
    text = capsys.readouterr().out
    assert "one-standard-error selection" in text
    assert (out / "rmse_by_window.csv").exists()
    rows = list(csv.DictReader(open(out / "rmse_by_window.csv")))
    assert {r["strategy"] for r in rows} == {"gmm-mv", "gmm-ppa", "hmm-mv", "hmm-ppa"}


def test_extract(tmp_path, capsys):
    rng = np.random.default_rng(0)
    wav = tmp_path / "a.wav"
    write_wav(wav, AudioClip(rng.uniform(-0.3, 0.3, 11050 * 2), 11050))
    assert main(["extract", str(wav), "-o", str(tmp_path / "f.csv"), "--summary"]) == 0
    feats = read_feature_csv(tmp_path / "f.csv")
    assert feats.dim == 60
    assert feats.n_frames == (22100 - 4096) // 1024 + 1
    summary = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert set(summary) >= {"spectral_centroid", "amplitude_std"}


def test_missing_ground_truth_is_ingest_error(tmp_path):
    assert main(["train", str(tmp_path / "missing.csv")]) == EXIT_INGEST


def test_bad_config_is_config_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"no_such_key": 1}')
    wav = tmp_path / "a.wav"
    write_wav(wav, AudioClip(np.zeros(8192), 11050))
    assert main(["extract", str(wav), "--config", str(cfg)]) == EXIT_CONFIG
    assert main(["extract", str(wav), "--fft-size", "1000"]) == EXIT_CONFIG


def test_config_file_and_flags(tmp_path, synth_dir, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"em": {"max_iters": 30, "n_init": 1}, "bic_candidates": [2],
                               "window_seconds": 100}))
    out = tmp_path / "m.json"
    assert main(["train", str(synth_dir / "data" / "ground_truth.csv"), "--config", str(cfg),
                 "-o", str(out), "--seed", "5"]) == 0
    doc = json.loads(out.read_text())
    assert doc["config"]["em"]["max_iters"] == 30
    assert doc["config"]["seed"] == 5
    assert doc["config"]["window_seconds"] == 100
