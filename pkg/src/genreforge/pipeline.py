"""End-to-end workflow: preprocess -> train -> evaluate -> predict.

``preprocess_command`` writes one spectrogram cache per track plus a CSV
slice index; augmented slices are listed for the train split only and are
rebuilt from the per-track cache when loaded, so no FFT is repeated.
"""

from __future__ import annotations

import logging
import os
import re
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio import CANONICAL_RATE, load_mono
from .augment import PITCH_SHIFT_SEMITONES, build_augmented_set, pitch_shift
from .ensemble import (
    average_features,
    confusion_matrix,
    svm_predict,
    svm_train,
    track_accuracy,
    vote_track,
)
from .errors import DurationError, GenreForgeError, SliceError
from .formats import (
    IndexEntry,
    load_checkpoint,
    load_manifest,
    read_cache,
    read_index,
    save_checkpoint,
    stratified_split,
    write_cache,
    write_index,
)
from .network import build_network
from .spectrogram import (
    SLICE_FRAMES,
    make_spectrogram,
    min_samples_for_frames,
    slice_track,
)
from .trainer import train

__all__ = [
    "SLICES_PER_TRACK",
    "THREADS_ENV",
    "PreprocessSummary",
    "LoadedSlices",
    "EvaluationReport",
    "preprocess_command",
    "load_slices",
    "index_labels",
    "train_command",
    "evaluate_command",
    "predict_command",
]

log = logging.getLogger(__name__)

SLICES_PER_TRACK = 10
THREADS_ENV = "GENREFORGE_THREADS"


@dataclass
class PreprocessSummary:
    index_path: Path
    tracks_ok: int = 0
    failures: list = field(default_factory=list)
    slices: int = 0


@dataclass
class LoadedSlices:
    x: np.ndarray
    labels: np.ndarray
    track_ids: list
    provenance: list


@dataclass
class EvaluationReport:
    method: str
    split: str
    labels: tuple
    segment_accuracy: float
    track_accuracy: float
    confusion: np.ndarray
    n_tracks: int
    n_segments: int

    def format(self):
        lines = [
            f"method={self.method} split={self.split} tracks={self.n_tracks} "
            f"segments={self.n_segments}",
            f"segment_accuracy={self.segment_accuracy:.4f}",
            f"track_accuracy={self.track_accuracy:.4f}",
            "confusion (rows=true, cols=predicted):",
        ]
        width = max(len(name) for name in self.labels)
        lines.append(" " * (width + 1) + " ".join(f"{name[:6]:>6}" for name in self.labels))
        for name, row in zip(self.labels, self.confusion):
            lines.append(f"{name:>{width}} " + " ".join(f"{v:>6d}" for v in row))
        return "\n".join(lines)


def _thread_count():
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
    return os.cpu_count() or 1


def _track_id(path):
    stem = str(Path(path).with_suffix(""))
    return re.sub(r"[^0-9A-Za-z._-]+", "__", stem).strip("_") or "track"


def _process_track(audio_path, cache_path, track_id):
    clip = load_mono(audio_path, CANONICAL_RATE)
    spec = make_spectrogram(clip, source_id=track_id)
    write_cache(cache_path, spec)
    return spec


def preprocess_command(manifest, out_dir, augment=False, slices_per_track=SLICES_PER_TRACK,
                       vocabulary=None, resplit_seed=None, threads=None):
    """Decode, analyse and cache every manifest track; write ``index.csv``.

    Per-file failures are logged and reported in the summary, not raised.
    """
    manifest = Path(manifest)
    out_dir = Path(out_dir)
    entries = load_manifest(manifest, vocabulary)
    if resplit_seed is not None:
        entries = stratified_split(entries, resplit_seed)
    base = manifest.parent
    ids = []
    taken = set()
    for e in entries:
        tid = _track_id(e.path)
        candidate, n = tid, 1
        while candidate in taken:
            n += 1
            candidate = f"{tid}_{n}"
        taken.add(candidate)
        ids.append(candidate)

    def work(i):
        e = entries[i]
        cache_rel = f"cache/{ids[i]}.spec"
        spec = _process_track(base / e.path, out_dir / cache_rel, ids[i])
        if augment and e.split == "train":
            slices = build_augmented_set(spec, slices_per_track)
        else:
            slices = slice_track(spec, slices_per_track)
        return [IndexEntry(ids[i], cache_rel, e.label, e.split, s.offset_frames, s.provenance)
                for s in slices]

    summary = PreprocessSummary(out_dir / "index.csv")
    rows = []
    workers = threads if threads is not None else _thread_count()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(work, i) for i in range(len(entries))]
        for e, fut in zip(entries, futures):
            try:
                rows.extend(fut.result())
                summary.tracks_ok += 1
            except (OSError, GenreForgeError, ValueError) as exc:
                log.warning("skipping %s: %s", e.path, exc)
                summary.failures.append((e.path, str(exc)))
    write_index(summary.index_path, rows)
    summary.slices = len(rows)
    log.info("preprocessed %d tracks (%d failed), %d slices indexed",
             summary.tracks_ok, len(summary.failures), summary.slices)
    return summary


def index_labels(entries):
    """Class names in index order (sorted), which fixes the label -> class mapping."""
    return tuple(sorted({e.label for e in entries}))


def load_slices(entries, index_dir, labels):
    """Materialize slice arrays for index rows; each cache file is read once."""
    index_dir = Path(index_dir)
    missing = sorted({e.cache for e in entries if not (index_dir / e.cache).is_file()})
    if missing:
        raise FileNotFoundError("missing spectrogram caches: " + ", ".join(missing))
    class_of = {name: i for i, name in enumerate(labels)}
    specs = {}
    shifted = {}
    x = np.empty((len(entries), 128, SLICE_FRAMES), dtype=np.float32)
    for row, e in enumerate(entries):
        if e.cache not in specs:
            specs[e.cache] = read_cache(index_dir / e.cache, e.track_id)
        spec = specs[e.cache]
        if e.provenance.startswith("pitch_shift"):
            if e.cache not in shifted:
                shifted[e.cache] = pitch_shift(spec, PITCH_SHIFT_SEMITONES)
            spec = shifted[e.cache]
        x[row] = spec.values[:, e.offset:e.offset + SLICE_FRAMES]
    y = np.array([class_of[e.label] for e in entries], dtype=np.int64)
    return LoadedSlices(x, y, [e.track_id for e in entries], [e.provenance for e in entries])


def _group_by_track(loaded):
    groups = OrderedDict()
    for i, tid in enumerate(loaded.track_ids):
        groups.setdefault(tid, []).append(i)
    return groups


def _track_features(net, loaded):
    """Mean 1024-d feature per track (inference mode) and the track labels."""
    _, _, feats = net.predict(loaded.x)
    groups = _group_by_track(loaded)
    x = np.stack([average_features(feats[idx]) for idx in groups.values()])
    y = np.array([loaded.labels[idx[0]] for idx in groups.values()])
    return list(groups), x, y


def train_command(index_path, net_cfg, train_cfg, out_ckpt, svm_c=1.0, svm_epochs=200,
                  log_fn=print):
    """Train the CNN, keep the best-validation weights, fit the stacking SVM, save."""
    index_path = Path(index_path)
    entries = read_index(index_path)
    labels = index_labels(entries)
    if net_cfg.num_classes != len(labels):
        raise GenreForgeError(f"index holds {len(labels)} classes {labels}, "
                              f"but --classes is {net_cfg.num_classes}")
    net_cfg = replace(net_cfg, labels=labels).validate()
    train_rows = [e for e in entries if e.split == "train"]
    val_rows = [e for e in entries if e.split == "val" and e.provenance == "original"]
    if not train_rows:
        raise GenreForgeError("slice index has no train slices")
    tr = load_slices(train_rows, index_path.parent, labels)
    va = load_slices(val_rows, index_path.parent, labels) if val_rows else None
    net = build_network(net_cfg, np.random.default_rng(train_cfg.seed))
    report = train(net, tr.x, tr.labels,
                   None if va is None else va.x, None if va is None else va.labels,
                   train_cfg, log=log_fn)
    originals = [e for e in train_rows if e.provenance == "original"]
    orig = load_slices(originals, index_path.parent, labels)
    _, feats, y = _track_features(net, orig)
    svm = None
    if len(np.unique(y)) >= 2:
        svm = svm_train(feats, C=svm_c, epochs=svm_epochs, seed=train_cfg.seed, labels=y,
                        num_classes=net_cfg.num_classes)
    save_checkpoint(out_ckpt, net, svm)
    return report, net, svm


def evaluate_command(ckpt, index_path, split="test", method="svm"):
    """Segment and track accuracy over the original slices of ``split``."""
    if method not in ("vote", "svm"):
        raise ValueError(f"method must be 'vote' or 'svm', got {method!r}")
    net, svm = load_checkpoint(ckpt)
    index_path = Path(index_path)
    rows = [e for e in read_index(index_path) if e.split == split and e.provenance == "original"]
    if not rows:
        raise GenreForgeError(f"split {split!r} has no slices in {index_path}")
    labels = net.cfg.labels
    unknown = sorted({e.label for e in rows} - set(labels))
    if unknown:
        raise GenreForgeError(f"labels {unknown} are not known to the checkpoint")
    loaded = load_slices(rows, index_path.parent, labels)
    logits, probs, feats = net.predict(loaded.x)
    seg_pred = np.argmax(logits, axis=1)
    groups = _group_by_track(loaded)
    results = []
    if method == "vote":
        for tid, idx in groups.items():
            pred = vote_track([(seg_pred[i], probs[i]) for i in idx])
            results.append((tid, pred, int(loaded.labels[idx[0]])))
    else:
        if svm is None:
            raise GenreForgeError("checkpoint has no SVM section; use --method vote")
        for tid, idx in groups.items():
            pred = svm_predict(svm, average_features(feats[idx]))
            results.append((tid, pred, int(loaded.labels[idx[0]])))
    k = net.cfg.num_classes
    return EvaluationReport(
        method=method,
        split=split,
        labels=labels,
        segment_accuracy=float(np.mean(seg_pred == loaded.labels)),
        track_accuracy=track_accuracy(results),
        confusion=confusion_matrix([r[2] for r in results], [r[1] for r in results], k),
        n_tracks=len(results),
        n_segments=len(rows),
    )


def predict_command(ckpt, audio_path, max_slices=SLICES_PER_TRACK):
    """Classify one audio file; returns ``(label, {label: mean softmax score})``."""
    net, _ = load_checkpoint(ckpt)
    clip = load_mono(audio_path, CANONICAL_RATE)
    needed = min_samples_for_frames(SLICE_FRAMES)
    if len(clip) < needed:
        raise DurationError(f"{audio_path}: {clip.duration:.3f} s of audio; at least "
                            f"{needed / CANONICAL_RATE:.3f} s ({needed} samples at "
                            f"{CANONICAL_RATE} Hz) are needed for one slice")
    spec = make_spectrogram(clip)
    count = min(max_slices, spec.n_frames // SLICE_FRAMES)
    try:
        slices = slice_track(spec, count)
    except SliceError as exc:  # pragma: no cover - guarded by the duration check
        raise DurationError(str(exc)) from exc
    x = np.stack([s.values for s in slices])
    _, probs, _ = net.predict(x)
    mean = probs.astype(np.float64).mean(axis=0)
    names = net.cfg.labels or tuple(str(i) for i in range(net.cfg.num_classes))
    return names[int(np.argmax(mean))], dict(zip(names, mean.tolist()))
