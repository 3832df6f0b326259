"""Extractor contract tests, including the downstream-ingestion check."""

import json
import wave

import numpy as np
import pytest

from uqembed import AudioSpec, build_random_checkpoint, conform, load_encoder, load_wav
from uqembed.cli import main as cli_main
from uqembed.extract import extract

EMBED_DIM = 1024


def _write_wav(path, rate, seconds, channels=2, freq=440.0, seed=None):
    t = np.arange(int(rate * seconds)) / rate
    if seed is None:
        signal = 0.4 * np.sin(2 * np.pi * freq * t)
    else:
        signal = 0.2 * np.random.default_rng(seed).standard_normal(t.shape)
    data = np.tile(signal[:, None], (1, channels))
    pcm = (data * 32767).astype(np.int16)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("audio")
    _write_wav(root / "song_a.wav", 44100, 2.0, channels=2, freq=440.0)
    _write_wav(root / "song_b.wav", 8000, 1.0, channels=1, freq=220.0)
    _write_wav(root / "song_c.wav", 24000, 50.0, channels=2, seed=3)
    return root


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "encoder.npz"
    build_random_checkpoint(path, seed=7, embed_dim=EMBED_DIM)
    return path


class TestAudioConditioning:
    def test_resample_and_pad(self):
        spec = AudioSpec()
        rng = np.random.default_rng(0)
        samples = rng.normal(size=(2, 44100 * 2))
        out = conform(samples, 44100, spec)
        assert out.shape == (2, spec.n_samples)
        # 2 s of content resampled to 24 kHz, zeros afterwards
        assert np.any(out[:, : 48000] != 0.0)
        assert np.all(out[:, 48005:] == 0.0)

    def test_trim_keeps_leading_audio(self):
        spec = AudioSpec()
        samples = np.ones((1, spec.n_samples + 1000))
        out = conform(samples, spec.sample_rate, spec)
        assert out.shape == (1, spec.n_samples)
        assert np.all(out == 1.0)

    def test_load_wav_shapes(self, fixture_dir):
        rate, samples = load_wav(fixture_dir / "song_a.wav")
        assert rate == 44100
        assert samples.shape[0] == 2
        assert np.max(np.abs(samples)) <= 1.0


class TestExtractContract:
    def test_three_file_fixture(self, fixture_dir, checkpoint, tmp_path):
        out_csv = tmp_path / "features.csv"
        manifest = extract(fixture_dir, checkpoint, out_csv)
        lines = out_csv.read_text().splitlines()
        header = lines[0].split(",")
        assert header == ["stimulus_id"] + [f"f{j}" for j in range(EMBED_DIM)]
        assert len(lines) == 4
        ids = [line.split(",", 1)[0] for line in lines[1:]]
        assert ids == ["song_a", "song_b", "song_c"]
        assert manifest["n_files"] == 3
        assert manifest["skipped_ids"] == []
        sidecar = json.loads(
            out_csv.with_suffix(".csv.manifest.json").read_text())
        assert sidecar["checkpoint_sha256"] == manifest["checkpoint_sha256"]

    def test_bit_stable_across_runs(self, fixture_dir, checkpoint, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        extract(fixture_dir, checkpoint, a)
        extract(fixture_dir, checkpoint, b)
        assert a.read_bytes() == b.read_bytes()

    def test_passes_downstream_ingestion(self, fixture_dir, checkpoint, tmp_path):
        # The emitted CSV must load through the primary toolkit unchanged.
        uqreg_data = pytest.importorskip("uqreg.data")
        out_csv = tmp_path / "features.csv"
        extract(fixture_dir, checkpoint, out_csv)

        ids = ["song_a", "song_b", "song_c"]
        rng = np.random.default_rng(1)
        annotations = [
            uqreg_data.AnnotationSet(sid, tuple(
                (f"r{k}", int(rng.integers(1, 10)), int(rng.integers(1, 10)))
                for k in range(10)))
            for sid in ids
        ]
        ann_csv, split_csv = tmp_path / "ann.csv", tmp_path / "splits.csv"
        uqreg_data.write_annotations_csv(ann_csv, annotations)
        uqreg_data.write_splits_csv(
            split_csv, {"song_a": "train", "song_b": "val", "song_c": "test"})
        dataset = uqreg_data.load_dataset(out_csv, ann_csv, split_csv)
        assert dataset.feature_dim == EMBED_DIM
        assert len(dataset.targets) == 3

    def test_silent_clip_deterministic(self, checkpoint, tmp_path):
        audio = tmp_path / "audio"
        audio.mkdir()
        spec = AudioSpec()
        silent = np.zeros((2, spec.n_samples), dtype=np.int16)
        with wave.open(str(audio / "silence.wav"), "wb") as fh:
            fh.setnchannels(2)
            fh.setsampwidth(2)
            fh.setframerate(spec.sample_rate)
            fh.writeframes(silent.T.tobytes())
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        extract(audio, checkpoint, a)
        extract(audio, checkpoint, b)
        row = a.read_text().splitlines()[1]
        values = np.array([float(v) for v in row.split(",")[1:]])
        assert np.all(np.isfinite(values))
        assert a.read_bytes() == b.read_bytes()

    def test_undecodable_file_skipped(self, fixture_dir, checkpoint, tmp_path, caplog):
        import logging
        import shutil
        audio = tmp_path / "audio"
        shutil.copytree(fixture_dir, audio)
        (audio / "broken.wav").write_bytes(b"not really a wav file")
        out_csv = tmp_path / "features.csv"
        with caplog.at_level(logging.WARNING, logger="uqembed.extract"):
            manifest = extract(audio, checkpoint, out_csv)
        assert manifest["skipped_ids"] == ["broken"]
        assert manifest["n_files"] == 3
        assert any("broken" in rec.message for rec in caplog.records)

    def test_missing_checkpoint_aborts(self, fixture_dir, tmp_path):
        with pytest.raises(FileNotFoundError, match="checkpoint"):
            extract(fixture_dir, tmp_path / "nope.npz", tmp_path / "out.csv")

    def test_cli_exit_codes(self, fixture_dir, checkpoint, tmp_path, capsys):
        code = cli_main(["extract", "--audio-dir", str(fixture_dir),
                         "--checkpoint", str(checkpoint),
                         "--out", str(tmp_path / "f.csv")])
        assert code == 0
        code = cli_main(["extract", "--audio-dir", str(fixture_dir),
                         "--checkpoint", str(tmp_path / "missing.npz"),
                         "--out", str(tmp_path / "f2.csv")])
        assert code == 2
        assert "checkpoint" in capsys.readouterr().err
