"""WAV decoding and input conditioning: resample to 24 kHz, pad or trim to 45 s."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly


@dataclass(frozen=True)
class AudioSpec:
    """Input contract of the frozen encoder."""

    sample_rate: int = 24000
    duration_s: float = 45.0

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate * self.duration_s))


def load_wav(path) -> tuple[int, np.ndarray]:
    """Read a WAV file as float64 with shape (channels, samples).

    Integer PCM is scaled to [-1, 1]; mono files become one channel.
    """
    rate, data = wavfile.read(Path(path))
    data = np.asarray(data)
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype.kind == "i":
        scale = float(np.iinfo(data.dtype).max)
        samples = data.astype(np.float64) / scale
    elif data.dtype.kind == "u":
        info = np.iinfo(data.dtype)
        half = (info.max + 1) / 2.0
        samples = (data.astype(np.float64) - half) / half
    else:
        samples = data.astype(np.float64)
    return int(rate), samples.T


def conform(samples: np.ndarray, rate: int, spec: AudioSpec) -> np.ndarray:
    """Resample to the target rate, then zero-pad or trim to the target length.

    Padding appends zeros at the end; trimming keeps the leading portion.
    Returns shape (channels, spec.n_samples).
    """
    if samples.ndim != 2:
        raise ValueError("samples must be (channels, samples)")
    if rate != spec.sample_rate:
        ratio = Fraction(spec.sample_rate, rate)
        samples = resample_poly(samples, ratio.numerator, ratio.denominator, axis=1)
    n = spec.n_samples
    if samples.shape[1] >= n:
        return samples[:, :n]
    out = np.zeros((samples.shape[0], n), dtype=np.float64)
    out[:, : samples.shape[1]] = samples
    return out
