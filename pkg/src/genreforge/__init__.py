"""Music genre classification from grayscale spectrograms with 1-d CNNs.

Submodules
----------
audio        WAV decoding, downmixing, resampling
spectrogram  STFT, grayscale conversion, slicing
augment      overlap windows and pitch shifting
layers       layers with hand-written backward passes
network      basic / ResNet / DenseNet block networks
trainer      SGD training loop
ensemble     voting and SVM stacking
formats      manifests, caches, checkpoints
pipeline     preprocess / train / evaluate / predict
"""

from .audio import AudioClip, decode_wav, downmix_mono, encode_wav, resample
from .network import NetworkConfig, build_network
from .spectrogram import Slice, Spectrogram, make_spectrogram, slice_track
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "decode_wav",
    "downmix_mono",
    "encode_wav",
    "resample",
    "NetworkConfig",
    "build_network",
    "Slice",
    "Spectrogram",
    "make_spectrogram",
    "slice_track",
    "TrainConfig",
    "train",
]
