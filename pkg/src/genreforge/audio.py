"""WAV decoding and sample-level audio plumbing.

Only RIFF/WAVE containers holding 16-bit little-endian PCM are accepted.
Compressed inputs (MP3, OGG, FLAC) must be converted to WAV beforehand,
e.g. ``ffmpeg -i track.mp3 -ac 1 -ar 22050 track.wav``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError

__all__ = [
    "CANONICAL_RATE",
    "AudioClip",
    "decode_wav",
    "decode_wav_channels",
    "encode_wav",
    "downmix_mono",
    "resample",
    "load_mono",
]

CANONICAL_RATE = 22050

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_EXTENSIBLE = 0xFFFE
# leading bytes of KSDATAFORMAT_SUBTYPE_PCM
_PCM_SUBTYPE_PREFIX = b"\x01\x00\x00\x00\x00\x00\x10\x00"


@dataclass
class AudioClip:
    """Mono sample sequence in [-1, 1] plus its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ShapeError(f"AudioClip samples must be 1-d, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.size and np.abs(self.samples).max() > 1.0:
            raise ValueError("AudioClip samples must lie in [-1, 1]")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return len(self) / self.sample_rate


def _iter_chunks(data):
    if len(data) < 12:
        raise FormatError("RIFF: file shorter than the 12-byte RIFF header")
    riff, _size, wave = struct.unpack("<4sI4s", data[:12])
    if riff != b"RIFF":
        raise FormatError(f"RIFF: bad magic {riff!r}, expected b'RIFF'")
    if wave != b"WAVE":
        raise FormatError(f"RIFF: form type {wave!r} is not b'WAVE'")
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack("<4sI", data[pos:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            # truncated data chunks are common in the wild; other chunks must be whole
            if cid != b"data":
                raise FormatError(f"{cid.decode('latin-1')!r}: chunk truncated "
                                  f"({len(body)} of {size} bytes)")
        yield cid, body
        pos += 8 + size + (size & 1)


def _parse_fmt(body):
    if len(body) < 16:
        raise FormatError(f"'fmt ': chunk is {len(body)} bytes, need at least 16")
    fmt_tag, channels, rate, _byte_rate, block_align, bits = struct.unpack("<HHIIHH", body[:16])
    if fmt_tag == WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 40 or body[24:32] != _PCM_SUBTYPE_PREFIX:
            raise FormatError("'fmt ': WAVE_FORMAT_EXTENSIBLE with a non-PCM subformat")
    elif fmt_tag != WAVE_FORMAT_PCM:
        raise FormatError(f"'fmt ': codec 0x{fmt_tag:04x} is not PCM")
    if bits != 16:
        raise FormatError(f"'fmt ': unsupported bit depth {bits}, only 16-bit PCM is read")
    if channels not in (1, 2):
        raise FormatError(f"'fmt ': unsupported channel count {channels}")
    if rate == 0:
        raise FormatError("'fmt ': sample rate is zero")
    if block_align != channels * 2:
        raise FormatError(f"'fmt ': block align {block_align} inconsistent with "
                          f"{channels} x 16-bit channels")
    return channels, rate


def decode_wav_channels(data):
    """Decode a 16-bit PCM WAV byte string into one AudioClip per channel."""
    data = bytes(data)
    fmt = None
    pcm = None
    for cid, body in _iter_chunks(data):
        if cid == b"fmt ":
            fmt = _parse_fmt(body)
        elif cid == b"data":
            pcm = body
    if fmt is None:
        raise FormatError("'fmt ': mandatory chunk missing")
    if pcm is None:
        raise FormatError("'data': mandatory chunk missing")
    channels, rate = fmt
    usable = len(pcm) - len(pcm) % (2 * channels)
    ints = np.frombuffer(pcm[:usable], dtype="<i2")
    samples = ints.astype(np.float64) / 32768.0
    return [AudioClip(samples[c::channels].copy(), rate) for c in range(channels)]


def decode_wav(data):
    """Decode a mono 16-bit PCM WAV byte string.

    Stereo files are rejected here; use :func:`decode_wav_channels` and
    :func:`downmix_mono` for those.
    """
    clips = decode_wav_channels(data)
    if len(clips) != 1:
        raise FormatError(f"'fmt ': {len(clips)} channels; decode_wav() reads mono only, "
                          "use decode_wav_channels() + downmix_mono()")
    return clips[0]


def encode_wav(clips):
    """Serialize one or more equal-length clips as 16-bit PCM WAV bytes.

    Samples are quantized by ``round(s * 32768)`` clipped to the int16 range,
    so clips that came out of :func:`decode_wav` round-trip exactly.
    """
    if isinstance(clips, AudioClip):
        clips = [clips]
    rate = clips[0].sample_rate
    n = len(clips[0])
    if any(len(c) != n or c.sample_rate != rate for c in clips):
        raise ShapeError("all channels must share length and sample rate")
    stacked = np.stack([c.samples for c in clips], axis=1)
    ints = np.clip(np.round(stacked * 32768.0), -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    channels = len(clips)
    fmt = struct.pack("<HHIIHH", WAVE_FORMAT_PCM, channels, rate, rate * channels * 2,
                      channels * 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def downmix_mono(left, right):
    """Samplewise mean of two channels."""
    if left.sample_rate != right.sample_rate:
        raise ShapeError(f"sample rate mismatch: {left.sample_rate} vs {right.sample_rate}")
    if len(left) != len(right):
        raise ShapeError(f"length mismatch: {len(left)} vs {len(right)}")
    return AudioClip((left.samples + right.samples) / 2.0, left.sample_rate)


def resample(clip, target_rate):
    """Linear-interpolation resampling to ``target_rate`` Hz.

    Output sample ``i`` is read at source position ``i * source / target``;
    the output holds ``floor(len * target / source)`` samples. No
    anti-alias filtering is applied.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    source_rate = clip.sample_rate
    if target_rate == source_rate:
        return AudioClip(clip.samples.copy(), source_rate)
    n = len(clip)
    m = (n * target_rate) // source_rate
    if m == 0:
        return AudioClip(np.zeros(0), target_rate)
    positions = np.arange(m) * (source_rate / target_rate)
    out = np.interp(positions, np.arange(n), clip.samples)
    return AudioClip(out, target_rate)


def load_mono(path, target_rate=CANONICAL_RATE):
    """Read a WAV file, average its channels and resample to ``target_rate``."""
    clips = decode_wav_channels(Path(path).read_bytes())
    clip = clips[0] if len(clips) == 1 else downmix_mono(*clips)
    return resample(clip, target_rate)
