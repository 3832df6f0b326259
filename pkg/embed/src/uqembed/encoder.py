"""Frozen embedding encoder backed by a self-contained checkpoint file.

The checkpoint (an .npz archive) fully determines the encoder: a mel
filterbank, a frame projection into the embedding space, and the framing
settings. Inference is pure numpy, so a fixed checkpoint yields bit-stable
embeddings run after run.

Pipeline per audio channel: frame the signal, Hann-window each frame, take
the power spectrum, apply the mel filterbank, log-compress, project into
the embedding space through a tanh, and average over frames. Channel
embeddings are computed independently and averaged afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioSpec

CHECKPOINT_VERSION = 1
DEFAULT_EMBED_DIM = 1024


@dataclass(frozen=True)
class FrozenEncoder:
    spec: AudioSpec
    n_fft: int
    hop: int
    mel_fb: np.ndarray        # (n_mels, n_fft//2 + 1)
    projection: np.ndarray    # (n_mels, embed_dim)

    @property
    def embed_dim(self) -> int:
        return self.projection.shape[1]

    def encode_channel(self, channel: np.ndarray) -> np.ndarray:
        """Time-averaged embedding of one channel, shape (embed_dim,)."""
        n = channel.shape[0]
        if n < self.n_fft:
            raise ValueError(f"signal shorter than one frame ({n} < {self.n_fft})")
        n_frames = 1 + (n - self.n_fft) // self.hop
        idx = (np.arange(self.n_fft)[None, :]
               + self.hop * np.arange(n_frames)[:, None])
        frames = channel[idx] * np.hanning(self.n_fft)[None, :]
        power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
        mel = power @ self.mel_fb.T
        log_mel = np.log(mel + 1e-8)
        embedded = np.tanh(log_mel @ self.projection)
        return embedded.mean(axis=0)

    def encode(self, samples: np.ndarray) -> np.ndarray:
        """Channel-averaged embedding of (channels, samples) audio."""
        per_channel = [self.encode_channel(ch) for ch in samples]
        return np.mean(per_channel, axis=0)


def _mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filterbank over the rfft bins."""
    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)

    n_bins = n_fft // 2 + 1
    fft_freqs = np.linspace(0.0, sample_rate / 2.0, n_bins)
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0),
                             n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, center, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        up = (fft_freqs - lo) / (center - lo)
        down = (hi - fft_freqs) / (hi - center)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def build_random_checkpoint(path, seed: int, embed_dim: int = DEFAULT_EMBED_DIM,
                            n_fft: int = 1024, hop: int = 512,
                            n_mels: int = 64,
                            spec: AudioSpec | None = None) -> None:
    """Write a randomly projected frozen encoder, deterministic per seed."""
    spec = spec or AudioSpec()
    rng = np.random.default_rng(seed)
    mel_fb = _mel_filterbank(n_mels, n_fft, spec.sample_rate)
    projection = rng.normal(0.0, 1.0 / np.sqrt(n_mels), size=(n_mels, embed_dim))
    np.savez(
        path,
        version=np.int64(CHECKPOINT_VERSION),
        sample_rate=np.int64(spec.sample_rate),
        duration_s=np.float64(spec.duration_s),
        n_fft=np.int64(n_fft),
        hop=np.int64(hop),
        mel_fb=mel_fb,
        projection=projection,
    )


def load_encoder(path) -> FrozenEncoder:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"encoder checkpoint not found: {path}")
    with np.load(path) as record:
        version = int(record["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version: {version}")
        spec = AudioSpec(sample_rate=int(record["sample_rate"]),
                         duration_s=float(record["duration_s"]))
        return FrozenEncoder(
            spec=spec,
            n_fft=int(record["n_fft"]),
            hop=int(record["hop"]),
            mel_fb=record["mel_fb"].copy(),
            projection=record["projection"].copy(),
        )
