"""Grayscale spectrograms on a 128-band linear frequency axis at 50 frames/s.

The analysis is a Hann-windowed STFT (1024-point window and FFT, hop 441
samples at 22050 Hz). The 512 non-DC bins are averaged four at a time into
128 bands, converted to dB against the track maximum and mapped from
[-80, 0] dB onto [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import CANONICAL_RATE
from .errors import ShapeError, SliceError

__all__ = [
    "N_BANDS",
    "SLICE_FRAMES",
    "WINDOW_LEN",
    "FFT_LEN",
    "HOP",
    "FRAMES_PER_SECOND",
    "DB_FLOOR",
    "PROVENANCES",
    "Spectrogram",
    "Slice",
    "hann_window",
    "frame_count",
    "stft_magnitude",
    "to_grayscale",
    "make_spectrogram",
    "slice_track",
    "min_samples_for_frames",
]

N_BANDS = 128
SLICE_FRAMES = 128
WINDOW_LEN = 1024
FFT_LEN = 1024
HOP = 441
FRAMES_PER_SECOND = CANONICAL_RATE / HOP  # 50.0
DB_FLOOR = -80.0
PROVENANCES = ("original", "overlap", "pitch_shift", "pitch_shift_overlap")


@dataclass
class Spectrogram:
    """128-row grayscale grid; rows run low to high frequency, columns are frames."""

    values: np.ndarray
    frames_per_second: float = FRAMES_PER_SECOND
    source_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2 or self.values.shape[0] != N_BANDS:
            raise ShapeError(f"spectrogram must have {N_BANDS} rows, got shape {self.values.shape}")
        if self.values.shape[1] < 1:
            raise ShapeError("spectrogram needs at least one frame")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise ValueError("spectrogram values must lie in [0, 1]")

    @property
    def n_frames(self):
        return self.values.shape[1]


@dataclass
class Slice:
    values: np.ndarray
    source_id: str = ""
    offset_frames: int = 0
    provenance: str = "original"

    def __post_init__(self):
        if self.values.shape != (N_BANDS, SLICE_FRAMES):
            raise ShapeError(f"slice must be {N_BANDS}x{SLICE_FRAMES}, got {self.values.shape}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.offset_frames < 0:
            raise ValueError("offset_frames must be >= 0")


def hann_window(n):
    """Periodic Hann window of length ``n``."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_count(n_samples, window_len=WINDOW_LEN, hop=HOP):
    if n_samples < window_len:
        return 0
    return (n_samples - window_len) // hop + 1


def min_samples_for_frames(n_frames, window_len=WINDOW_LEN, hop=HOP):
    """Smallest signal length that yields ``n_frames`` STFT frames."""
    return window_len + (n_frames - 1) * hop


def stft_magnitude(clip, window_len=WINDOW_LEN, fft_len=FFT_LEN, hop=HOP):
    """Magnitude STFT with the DC row removed.

    Returns an array of shape ``(fft_len // 2, frames)``; row ``i`` holds DFT
    bin ``i + 1``.
    """
    if window_len > fft_len:
        raise ValueError(f"window_len {window_len} exceeds fft_len {fft_len}")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    x = np.asarray(clip.samples, dtype=np.float64)
    if x.shape[0] < window_len:
        raise ValueError(f"clip of {x.shape[0]} samples is shorter than one "
                         f"{window_len}-sample window")
    frames = np.lib.stride_tricks.sliding_window_view(x, window_len)[::hop]
    spec = np.abs(np.fft.rfft(frames * hann_window(window_len), n=fft_len, axis=1))
    return np.ascontiguousarray(spec[:, 1:].T)


def to_grayscale(mag, source_id="", frames_per_second=FRAMES_PER_SECOND):
    """Band-average 512 magnitude rows to 128 and map dB re. max onto [0, 1]."""
    mag = np.asarray(mag, dtype=np.float64)
    if mag.ndim != 2 or mag.shape[0] != 4 * N_BANDS:
        raise ShapeError(f"expected {4 * N_BANDS} magnitude rows, got shape {mag.shape}")
    bands = mag.reshape(N_BANDS, 4, mag.shape[1]).mean(axis=1)
    peak = bands.max()
    if peak <= 0.0:
        return Spectrogram(np.zeros(bands.shape, dtype=np.float32), frames_per_second, source_id)
    floor = peak * 10.0 ** (DB_FLOOR / 20.0)
    db = 20.0 * np.log10(np.maximum(bands, floor) / peak)
    gray = np.clip(1.0 + db / -DB_FLOOR, 0.0, 1.0)
    return Spectrogram(gray.astype(np.float32), frames_per_second, source_id)


def make_spectrogram(clip, source_id=""):
    if clip.sample_rate != CANONICAL_RATE:
        raise ValueError(f"make_spectrogram expects {CANONICAL_RATE} Hz audio, "
                         f"got {clip.sample_rate} Hz; resample first")
    mag = stft_magnitude(clip, WINDOW_LEN, FFT_LEN, HOP)
    return to_grayscale(mag, source_id=source_id)


def slice_track(spec, count, provenance="original"):
    """Cut ``count`` back-to-back 128-frame slices from the start of ``spec``."""
    max_count = spec.n_frames // SLICE_FRAMES
    if count > max_count:
        raise SliceError(f"{spec.source_id or 'spectrogram'} has {spec.n_frames} frames; "
                         f"{count} slices need {count * SLICE_FRAMES}, at most {max_count} fit",
                         max_count)
    return [
        Slice(spec.values[:, i * SLICE_FRAMES:(i + 1) * SLICE_FRAMES].copy(),
              spec.source_id, i * SLICE_FRAMES, provenance)
        for i in range(count)
    ]
