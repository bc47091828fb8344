"""Training-set augmentation: 50 % overlapping slices and semitone pitch shifts."""

from __future__ import annotations

import warnings
from collections import Counter

import numpy as np

from .spectrogram import N_BANDS, SLICE_FRAMES, Slice, Spectrogram, slice_track

__all__ = [
    "OVERLAP_HOP",
    "PITCH_SHIFT_SEMITONES",
    "semitone_ratio",
    "overlap_slices",
    "pitch_shift",
    "build_augmented_set",
    "provenance_histogram",
]

OVERLAP_HOP = SLICE_FRAMES // 2
PITCH_SHIFT_SEMITONES = 1.0


def semitone_ratio(semitones):
    return 2.0 ** (semitones / 12.0)


def overlap_slices(spec, region_frames):
    """128-frame slices at hop 64 over the first ``region_frames`` columns.

    Slices landing on a multiple of 128 are the originals; the ones in
    between are tagged ``overlap``.
    """
    if region_frames > spec.n_frames:
        raise ValueError(f"region of {region_frames} frames exceeds the "
                         f"{spec.n_frames}-frame spectrogram")
    if region_frames < SLICE_FRAMES:
        warnings.warn(f"region of {region_frames} frames is shorter than one slice; "
                      "no overlap slices generated", stacklevel=2)
        return []
    count = (region_frames - SLICE_FRAMES) // OVERLAP_HOP + 1
    out = []
    for i in range(count):
        offset = i * OVERLAP_HOP
        provenance = "original" if offset % SLICE_FRAMES == 0 else "overlap"
        out.append(Slice(spec.values[:, offset:offset + SLICE_FRAMES].copy(),
                         spec.source_id, offset, provenance))
    return out


def pitch_shift(spec, semitones):
    """Shift ``spec`` by ``semitones`` by remapping its frequency rows.

    Output row ``b`` samples the source at row position ``b / r`` with
    ``r = 2 ** (semitones / 12)`` by linear interpolation; positions past
    the top row read as silence (0).
    """
    if abs(semitones) > 12:
        raise ValueError(f"|semitones| must be <= 12, got {semitones}")
    if semitones == 0:
        return Spectrogram(spec.values.copy(), spec.frames_per_second, spec.source_id)
    src = np.arange(N_BANDS) / semitone_ratio(semitones)
    lo = np.floor(src).astype(np.int64)
    frac = (src - lo)[:, None]
    # rows outside [0, N_BANDS - 1] contribute zero
    padded = np.zeros((N_BANDS + 1, spec.n_frames), dtype=np.float64)
    padded[:N_BANDS] = spec.values
    valid = src <= N_BANDS - 1
    lo = np.where(valid, lo, N_BANDS)
    hi = np.where(valid, np.minimum(lo + 1, N_BANDS), N_BANDS)
    shifted = (1.0 - frac) * padded[lo] + frac * padded[hi]
    shifted[~valid] = 0.0
    return Spectrogram(np.clip(shifted, 0.0, 1.0), spec.frames_per_second, spec.source_id)


def build_augmented_set(spec, base_count, semitones=PITCH_SHIFT_SEMITONES):
    """Originals, their interleaved overlaps and pitch-shifted originals.

    Yields ``2 * base_count - 1`` overlap-window slices plus ``base_count``
    shifted slices, ``3 * base_count - 1`` in total.
    """
    region = base_count * SLICE_FRAMES
    if region > spec.n_frames:
        # reuse slice_track's error so the caller sees the achievable count
        slice_track(spec, base_count)
    windows = overlap_slices(spec, region)
    shifted = slice_track(pitch_shift(spec, semitones), base_count, provenance="pitch_shift")
    return windows + shifted


def provenance_histogram(slices):
    return dict(Counter(s.provenance for s in slices))
