import struct
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genreforge.ensemble import SvmModel
from genreforge.errors import FormatError, ManifestError
from genreforge.formats import (
    GTZAN_GENRES,
    IndexEntry,
    ManifestEntry,
    checkpoint_from_bytes,
    checkpoint_to_bytes,
    load_checkpoint,
    load_manifest,
    read_cache,
    read_index,
    save_checkpoint,
    spectrogram_from_bytes,
    spectrogram_to_bytes,
    stratified_split,
    write_cache,
    write_index,
    write_manifest,
)
from genreforge.network import NetworkConfig, build_network
from genreforge.spectrogram import Spectrogram


def write(tmp_path, text, name="m.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_manifest_single_entry(tmp_path):
    entries = load_manifest(write(tmp_path, "path,label,split\nblues/b01.wav,blues,train\n"))
    assert entries == [ManifestEntry("blues/b01.wav", "blues", "train")]


@pytest.mark.parametrize("body, line, needle", [
    ("a.wav,blues,train\nb.wav,blues,dev\n", 3, "split"),
    ("a.wav,blues,train\nb.wav,polka,train\n", 3, "label"),
    ("a.wav,blues,train\nb.wav,jazz,test\na.wav,rock,val\n", 4, "duplicate"),
    ("a.wav,blues\n", 2, "fields"),
])
def test_manifest_errors_carry_line_numbers(tmp_path, body, line, needle):
    with pytest.raises(ManifestError) as info:
        load_manifest(write(tmp_path, "path,label,split\n" + body))
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")
    assert needle in str(info.value)


def test_manifest_bad_header(tmp_path):
    with pytest.raises(ManifestError):
        load_manifest(write(tmp_path, "file,genre,split\na.wav,blues,train\n"))


def test_manifest_mixed_vocabularies_rejected(tmp_path):
    # "hiphop" is GTZAN and "folk" is FMA; no vocabulary holds both
    with pytest.raises(ManifestError) as info:
        load_manifest(write(tmp_path, "path,label,split\na.wav,hiphop,train\nb.wav,folk,train\n"))
    assert info.value.line == 3
    entries = load_manifest(write(tmp_path, "path,label,split\na.wav,Hip-Hop,train\n"), "fma")
    assert entries[0].label == "hip-hop"


def gtzan_manifest(tmp_path):
    rows = ["path,label,split"]
    for g in GTZAN_GENRES:
        for i in range(100):
            rows.append(f"{g}/{g}.{i:05d}.wav,{g},{('train', 'val', 'test')[i % 3]}")
    return write(tmp_path, "\n".join(rows) + "\n")


def test_gtzan_manifest_1000_lines(tmp_path):
    entries = load_manifest(gtzan_manifest(tmp_path))
    assert len(entries) == 1000
    assert Counter(e.label for e in entries) == {g: 100 for g in GTZAN_GENRES}


def test_manifest_write_round_trip(tmp_path):
    entries = load_manifest(gtzan_manifest(tmp_path))
    out = tmp_path / "copy.csv"
    write_manifest(out, entries)
    assert load_manifest(out) == entries


def test_stratified_split(tmp_path):
    entries = load_manifest(gtzan_manifest(tmp_path))
    split = stratified_split(entries, seed=3)
    assert [e.path for e in split] == [e.path for e in entries]
    counts = Counter((e.label, e.split) for e in split)
    for g in GTZAN_GENRES:
        assert (counts[(g, "train")], counts[(g, "val")], counts[(g, "test")]) == (80, 10, 10)
    assert split == stratified_split(entries, seed=3)
    assert split != stratified_split(entries, seed=4)


def test_index_round_trip(tmp_path):
    rows = [IndexEntry("t1", "cache/t1.spec", "rock", "train", 0, "original"),
            IndexEntry("t1", "cache/t1.spec", "rock", "train", 64, "overlap"),
            IndexEntry("t2", "cache/t2.spec", "pop", "test", 1152, "pitch_shift")]
    write_index(tmp_path / "index.csv", rows)
    assert read_index(tmp_path / "index.csv") == rows
    (tmp_path / "bad.csv").write_text("track_id,cache\nx,y\n")
    with pytest.raises(FormatError):
        read_index(tmp_path / "bad.csv")


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_cache_round_trip_bit_exact(frames, seed):
    values = np.random.default_rng(seed).uniform(0, 1, (128, frames)).astype(np.float32)
    spec = Spectrogram(values, 50.0)
    data = spectrogram_to_bytes(spec)
    assert len(data) == 4 + 2 + 4 + 4 + 4 + 128 * frames * 4
    back = spectrogram_from_bytes(data)
    assert back.values.tobytes() == values.tobytes()
    assert back.frames_per_second == 50.0


def test_cache_layout_and_file(tmp_path):
    spec = Spectrogram(np.linspace(0, 1, 128 * 3, dtype=np.float32).reshape(128, 3), 50.0)
    data = spectrogram_to_bytes(spec)
    assert data[:4] == b"SPEC"
    assert struct.unpack("<HIIf", data[4:18]) == (1, 128, 3, 50.0)
    assert struct.unpack("<f", data[18:22])[0] == spec.values[0, 0]
    assert struct.unpack("<f", data[22:26])[0] == spec.values[0, 1]  # row-major
    write_cache(tmp_path / "c" / "x.spec", spec)
    assert (tmp_path / "c" / "x.spec").read_bytes() == data
    assert read_cache(tmp_path / "c" / "x.spec", "x").source_id == "x"
    assert [p.name for p in (tmp_path / "c").iterdir()] == ["x.spec"]


@pytest.mark.parametrize("mutate", [
    lambda d: b"SPEX" + d[4:],
    lambda d: d[:-4],
    lambda d: d[:4] + struct.pack("<H", 9) + d[6:],
    lambda d: d[:6] + struct.pack("<I", 64) + d[10:],
])
def test_cache_rejects_corruption(mutate):
    data = spectrogram_to_bytes(Spectrogram(np.zeros((128, 2), np.float32)))
    with pytest.raises(FormatError):
        spectrogram_from_bytes(mutate(data))


def trained_like(variant="basic", seed=0):
    cfg = NetworkConfig(num_classes=3, block_variant=variant, stage_channels=(8, 8, 16, 16, 24),
                        growth_rate=4, labels=("a", "b", "c"))
    net = build_network(cfg, seed)
    x = np.random.default_rng(seed).uniform(0, 1, (4, 128, 128)).astype(np.float32)
    net.forward(x, training=True)  # moves the batch-norm running statistics
    return net


def toy_svm(k=3, d=1024, seed=0):
    rng = np.random.default_rng(seed)
    return SvmModel(rng.standard_normal((k, d)), rng.standard_normal(k),
                    rng.standard_normal(d), rng.uniform(0.5, 2, d))


@pytest.mark.parametrize("variant", ["basic", "resnet", "densenet"])
def test_checkpoint_round_trip_bit_exact(variant):
    net = trained_like(variant)
    svm = toy_svm()
    data = checkpoint_to_bytes(net, svm)
    assert data[:4] == b"MGCN"
    net2, svm2 = checkpoint_from_bytes(data)
    assert net2.cfg == net.cfg
    for a, b in zip(net.state_arrays(), net2.state_arrays()):
        assert a.shape == b.shape and a.tobytes() == b.tobytes()
    for name in ("weights", "biases", "mean", "std"):
        assert getattr(svm, name).tobytes() == getattr(svm2, name).tobytes()
    assert checkpoint_to_bytes(net2, svm2) == data
    x = np.random.default_rng(9).uniform(0, 1, (2, 128, 128)).astype(np.float32)
    np.testing.assert_array_equal(net.forward(x), net2.forward(x))


def test_checkpoint_without_svm(tmp_path):
    net = trained_like()
    save_checkpoint(tmp_path / "m.ckpt", net)
    net2, svm = load_checkpoint(tmp_path / "m.ckpt")
    assert svm is None
    assert checkpoint_to_bytes(net2) == checkpoint_to_bytes(net)


@pytest.mark.parametrize("mutate", [
    lambda d: b"XXXX" + d[4:],
    lambda d: d[:-10],
    lambda d: d + b"JUNK",
    lambda d: d[:4] + struct.pack("<H", 2) + d[6:],
])
def test_checkpoint_rejects_corruption(mutate):
    data = checkpoint_to_bytes(trained_like(), toy_svm())
    with pytest.raises(FormatError):
        checkpoint_from_bytes(mutate(data))
