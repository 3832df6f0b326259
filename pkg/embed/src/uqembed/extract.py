"""Batch extraction: audio directory -> uqreg features CSV + sidecar manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .audio import conform, load_wav
from .encoder import load_encoder

logger = logging.getLogger(__name__)

AUDIO_SUFFIXES = (".wav",)


def _format_float(x: float) -> str:
    return repr(float(x))


def _file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def extract(audio_dir, checkpoint_path, out_csv) -> dict:
    """Embed every decodable WAV in audio_dir into one features-CSV row.

    Stimulus ids are the file stems. Undecodable files are skipped and
    listed in the log and the sidecar manifest; a missing checkpoint
    aborts. Returns the manifest record.
    """
    audio_dir = Path(audio_dir)
    if not audio_dir.is_dir():
        raise FileNotFoundError(f"audio directory not found: {audio_dir}")
    encoder = load_encoder(checkpoint_path)

    files = sorted(p for p in audio_dir.iterdir()
                   if p.suffix.lower() in AUDIO_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"no audio files in {audio_dir}")

    rows: dict[str, np.ndarray] = {}
    skipped: list[str] = []
    for path in files:
        sid = path.stem
        try:
            rate, samples = load_wav(path)
            conformed = conform(samples, rate, encoder.spec)
            rows[sid] = encoder.encode(conformed)
        except (ValueError, OSError) as exc:
            logger.warning("skipping undecodable file %s: %s", path.name, exc)
            skipped.append(sid)
    if not rows:
        raise ValueError(f"no decodable audio in {audio_dir}")
    if skipped:
        logger.warning("skipped %d undecodable file(s): %s", len(skipped), skipped)

    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    dim = encoder.embed_dim
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stimulus_id"] + [f"f{j}" for j in range(dim)])
        for sid in sorted(rows):
            writer.writerow([sid] + [_format_float(v) for v in rows[sid]])

    manifest = {
        "tool_version": __version__,
        "checkpoint": str(checkpoint_path),
        "checkpoint_sha256": _file_sha256(checkpoint_path),
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "embed_dim": dim,
        "sample_rate": encoder.spec.sample_rate,
        "duration_s": encoder.spec.duration_s,
        "n_files": len(rows),
        "skipped_ids": skipped,
        "output": str(out_csv),
    }
    manifest_path = out_csv.with_suffix(out_csv.suffix + ".manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    logger.info("wrote %d rows x %d features to %s", len(rows), dim, out_csv)
    return manifest
