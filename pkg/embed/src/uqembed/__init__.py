"""uqembed: frozen-encoder audio feature extraction for the uqreg toolkit.

Decodes WAV stimuli, conforms them to the 24 kHz / 45 s input contract,
runs a frozen embedding encoder per audio channel, averages over time
frames and channels, and writes one 1024-dimensional row per stimulus in
the exact features-CSV format the uqreg data loader ingests.
"""

__version__ = "0.1.0"

from .audio import AudioSpec, load_wav, conform
from .encoder import FrozenEncoder, build_random_checkpoint, load_encoder
from .extract import extract

__all__ = [
    "AudioSpec", "load_wav", "conform",
    "FrozenEncoder", "build_random_checkpoint", "load_encoder",
    "extract",
]
