"""On-disk formats: dataset manifests, slice indexes, spectrogram caches, checkpoints.

All binary records are little-endian and open with a 4-byte magic and a
``u16`` format version.

Spectrogram cache (``.spec``)::

    b"SPEC" | u16 version | u32 bins | u32 frames | f32 frames_per_second
    | bins * frames f32, row-major

Checkpoint (``.ckpt``)::

    b"MGCN" | u16 version | u32 n | n bytes NetworkConfig JSON
    | u32 count | count x (u8 ndim | ndim x u32 dims | f32 data)
    | [b"SVMS" | u32 classes | u32 dim | f64 weights | f64 biases | f64 mean | f64 std]

The tensor list holds every parameter in build order followed by the
batch-norm running means and variances.
"""

from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import SvmModel
from .errors import FormatError, ManifestError
from .network import NetworkConfig, build_network
from .spectrogram import N_BANDS, PROVENANCES, Spectrogram

__all__ = [
    "GTZAN_GENRES",
    "FMA_GENRES",
    "VOCABULARIES",
    "SPLITS",
    "ManifestEntry",
    "IndexEntry",
    "load_manifest",
    "write_manifest",
    "stratified_split",
    "write_index",
    "read_index",
    "atomic_write_bytes",
    "spectrogram_to_bytes",
    "spectrogram_from_bytes",
    "write_cache",
    "read_cache",
    "checkpoint_to_bytes",
    "checkpoint_from_bytes",
    "save_checkpoint",
    "load_checkpoint",
]

GTZAN_GENRES = ("blues", "classical", "country", "disco", "hiphop",
                "jazz", "metal", "pop", "reggae", "rock")
FMA_GENRES = ("electronic", "experimental", "folk", "hip-hop",
              "instrumental", "international", "pop", "rock")
VOCABULARIES = {"gtzan": GTZAN_GENRES, "fma": FMA_GENRES}
SPLITS = ("train", "val", "test")

SPEC_MAGIC = b"SPEC"
SPEC_VERSION = 1
CKPT_MAGIC = b"MGCN"
CKPT_VERSION = 1
SVM_TAG = b"SVMS"


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    split: str


@dataclass(frozen=True)
class IndexEntry:
    track_id: str
    cache: str
    label: str
    split: str
    offset: int
    provenance: str


def load_manifest(path, vocabulary=None):
    """Parse a ``path,label,split`` CSV manifest.

    ``vocabulary`` is a key of :data:`VOCABULARIES`, an explicit label
    sequence, or ``None`` to accept whichever built-in vocabulary covers
    every label. Labels are compared case-insensitively.
    """
    if isinstance(vocabulary, str):
        candidates = {vocabulary: VOCABULARIES[vocabulary]}
    elif vocabulary is not None:
        candidates = {"custom": tuple(v.lower() for v in vocabulary)}
    else:
        candidates = dict(VOCABULARIES)
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["path", "label", "split"]:
        raise ManifestError(f"header must be 'path,label,split', got {header}", line=1)
    entries = []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ManifestError(f"expected 3 fields, got {len(row)}", line=lineno)
        p, label, split = (c.strip() for c in row)
        label = label.lower()
        if split not in SPLITS:
            raise ManifestError(f"unknown split {split!r}; expected one of {SPLITS}", line=lineno)
        candidates = {k: v for k, v in candidates.items() if label in v}
        if not candidates:
            raise ManifestError(f"unknown label {label!r}", line=lineno)
        if p in seen:
            raise ManifestError(f"duplicate path {p!r}", line=lineno)
        seen.add(p)
        entries.append(ManifestEntry(p, label, split))
    return entries


def write_manifest(path, entries):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path", "label", "split"])
    for e in entries:
        w.writerow([e.path, e.label, e.split])
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def stratified_split(entries, seed, fractions=(0.8, 0.1, 0.1)):
    """Reassign splits so each label is divided train/val/test by ``fractions``."""
    rng = np.random.default_rng(seed)
    by_label = {}
    for e in entries:
        by_label.setdefault(e.label, []).append(e)
    assigned = {}
    for label in sorted(by_label):
        group = by_label[label]
        order = rng.permutation(len(group))
        n_train = int(round(fractions[0] * len(group)))
        n_val = int(round(fractions[1] * len(group)))
        for rank, i in enumerate(order):
            split = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
            assigned[group[i].path] = split
    return [ManifestEntry(e.path, e.label, assigned[e.path]) for e in entries]


_INDEX_FIELDS = ["track_id", "cache", "label", "split", "offset", "provenance"]


def write_index(path, entries):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_INDEX_FIELDS)
    for e in entries:
        w.writerow([e.track_id, e.cache, e.label, e.split, e.offset, e.provenance])
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def read_index(path):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != _INDEX_FIELDS:
            raise FormatError(f"slice index header must be {','.join(_INDEX_FIELDS)}")
        out = []
        for row in reader:
            if row["provenance"] not in PROVENANCES or row["split"] not in SPLITS:
                raise FormatError(f"bad slice index row {row}")
            out.append(IndexEntry(row["track_id"], row["cache"], row["label"], row["split"],
                                  int(row["offset"]), row["provenance"]))
    return out


def atomic_write_bytes(path, data):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def spectrogram_to_bytes(spec):
    values = np.ascontiguousarray(spec.values, dtype="<f4")
    bins, frames = values.shape
    head = SPEC_MAGIC + struct.pack("<HIIf", SPEC_VERSION, bins, frames, spec.frames_per_second)
    return head + values.tobytes()


def spectrogram_from_bytes(data, source_id=""):
    head = struct.calcsize("<HIIf")
    if len(data) < 4 + head or data[:4] != SPEC_MAGIC:
        raise FormatError("spectrogram cache: bad magic")
    version, bins, frames, fps = struct.unpack("<HIIf", data[4:4 + head])
    if version != SPEC_VERSION:
        raise FormatError(f"spectrogram cache: unsupported version {version}")
    if bins != N_BANDS:
        raise FormatError(f"spectrogram cache: {bins} bins, expected {N_BANDS}")
    payload = data[4 + head:]
    if len(payload) != bins * frames * 4:
        raise FormatError(f"spectrogram cache: payload is {len(payload)} bytes, "
                          f"expected {bins * frames * 4}")
    values = np.frombuffer(payload, dtype="<f4").reshape(bins, frames).astype(np.float32)
    return Spectrogram(values, float(fps), source_id)


def write_cache(path, spec):
    atomic_write_bytes(path, spectrogram_to_bytes(spec))


def read_cache(path, source_id=""):
    return spectrogram_from_bytes(Path(path).read_bytes(), source_id)


def _pack_tensor(arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    return struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes()


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"checkpoint: truncated while reading {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, dtype, shape, what):
        n = int(np.prod(shape)) * np.dtype(dtype).itemsize
        return np.frombuffer(self.take(n, what), dtype=dtype).reshape(shape).copy()


def checkpoint_to_bytes(net, svm=None):
    cfg = net.cfg.to_json().encode("utf-8")
    parts = [CKPT_MAGIC, struct.pack("<HI", CKPT_VERSION, len(cfg)), cfg]
    arrays = net.state_arrays()
    parts.append(struct.pack("<I", len(arrays)))
    parts.extend(_pack_tensor(a) for a in arrays)
    if svm is not None:
        parts.append(SVM_TAG + struct.pack("<II", svm.num_classes, svm.dim))
        for a in (svm.weights, svm.biases, svm.mean, svm.std):
            parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return b"".join(parts)


def checkpoint_from_bytes(data):
    """Rebuild ``(network, svm_or_None)`` from checkpoint bytes."""
    r = _Reader(data)
    if r.take(4, "magic") != CKPT_MAGIC:
        raise FormatError("checkpoint: bad magic")
    version, n = r.unpack("<HI", "header")
    if version != CKPT_VERSION:
        raise FormatError(f"checkpoint: unsupported version {version}")
    cfg = NetworkConfig.from_json(r.take(n, "config").decode("utf-8"))
    net = build_network(cfg, rng=0, dtype=np.float32)
    (count,) = r.unpack("<I", "tensor count")
    arrays = []
    for i in range(count):
        (ndim,) = r.unpack("<B", f"tensor {i} rank")
        shape = r.unpack(f"<{ndim}I", f"tensor {i} shape")
        arrays.append(r.array("<f4", shape, f"tensor {i} data"))
    net.load_state_arrays(arrays)
    svm = None
    if r.pos < len(data):
        if r.take(4, "section tag") != SVM_TAG:
            raise FormatError("checkpoint: unknown trailing section")
        k, d = r.unpack("<II", "SVM header")
        svm = SvmModel(r.array("<f8", (k, d), "SVM weights"), r.array("<f8", (k,), "SVM biases"),
                       r.array("<f8", (d,), "SVM mean"), r.array("<f8", (d,), "SVM std"))
        if r.pos != len(data):
            raise FormatError("checkpoint: trailing bytes after SVM section")
    return net, svm


def save_checkpoint(path, net, svm=None):
    atomic_write_bytes(path, checkpoint_to_bytes(net, svm))


def load_checkpoint(path):
    return checkpoint_from_bytes(Path(path).read_bytes())
