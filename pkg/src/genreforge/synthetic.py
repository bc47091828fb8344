"""Synthetic "genre" corpora for smoke tests and demos.

Each genre is a distribution over note sequences: a register (range of
fundamentals), a note rate, a harmonic roll-off and a percussive noise
density. Neighbouring genres overlap in register, so the task is not
separable from a single band's energy alone.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio import CANONICAL_RATE, AudioClip, encode_wav
from .formats import ManifestEntry, write_manifest

__all__ = ["genre_style", "synth_track", "write_synthetic_corpus"]


def genre_style(index):
    """Generation parameters for genre ``index`` (any non-negative integer)."""
    return {
        "f0_low": 110.0 * 2.0 ** (0.9 * index),
        "f0_high": 110.0 * 2.0 ** (0.9 * index + 1.6),
        "notes_per_second": 1.5 + 1.25 * index,
        "harmonics": 6 - min(index, 4),
        "rolloff": 0.55 + 0.1 * (index % 3),
        "hits_per_second": 0.5 + 1.5 * (index % 3),
    }


def synth_track(index, rng, duration=30.0, rate=CANONICAL_RATE):
    style = genre_style(index)
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    out = np.zeros(n)
    n_notes = max(1, int(duration * style["notes_per_second"] * rng.uniform(0.8, 1.2)))
    bounds = np.sort(rng.uniform(0, n, n_notes - 1)).astype(int)
    starts = np.r_[0, bounds]
    ends = np.r_[bounds, n]
    for s, e in zip(starts, ends):
        if e <= s:
            continue
        f0 = np.exp(rng.uniform(np.log(style["f0_low"]), np.log(style["f0_high"])))
        seg_t = t[s:e] - t[s]
        env = np.exp(-seg_t * rng.uniform(0.5, 3.0))
        note = np.zeros(e - s)
        for h in range(1, style["harmonics"] + 1):
            if f0 * h >= rate / 2:
                break
            note += style["rolloff"] ** (h - 1) * np.sin(2 * np.pi * f0 * h * seg_t + rng.uniform(0, 2 * np.pi))
        out[s:e] += env * note
    n_hits = rng.poisson(duration * style["hits_per_second"])
    burst = int(0.05 * rate)
    decay = np.exp(-np.arange(burst) / (0.01 * rate))
    for pos in rng.integers(0, max(1, n - burst), n_hits):
        out[pos:pos + burst] += 0.6 * rng.standard_normal(burst) * decay
    out += rng.uniform(0.005, 0.05) * rng.standard_normal(n)
    out *= rng.uniform(0.3, 0.9) / max(1e-9, np.abs(out).max())
    return AudioClip(out, rate)


def write_synthetic_corpus(out_dir, genres=("blues", "classical", "metal"), split_counts=(20, 5, 5),
                           seed=0, duration=30.0):
    """Write WAV files and a ``manifest.csv`` under ``out_dir``; returns the manifest path.

    ``split_counts`` gives the number of train/val/test tracks per genre.
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    entries = []
    splits = ["train"] * split_counts[0] + ["val"] * split_counts[1] + ["test"] * split_counts[2]
    for gi, genre in enumerate(genres):
        (out_dir / genre).mkdir(parents=True, exist_ok=True)
        for j, split in enumerate(splits):
            rel = f"{genre}/{genre}.{j:05d}.wav"
            clip = synth_track(gi, rng, duration)
            (out_dir / rel).write_bytes(encode_wav(clip))
            entries.append(ManifestEntry(rel, genre, split))
    path = out_dir / "manifest.csv"
    write_manifest(path, entries)
    return path
