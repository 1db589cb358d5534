"""Offline acoustic analysis: WAV parsing, segment RMS, dB SPL, and
environmental-noise power subtraction.

Only RIFF/WAVE containers with 16-bit little-endian PCM (mono or stereo)
are accepted. Samples are normalized by 32768, so parse -> serialize
round-trips the payload bit-exactly. Reported decibel levels are relative
unless a pascal calibration for digital full scale is supplied.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

P_REF_PA = 2e-5  # threshold of human hearing at 1 kHz
_FULL_SCALE = 32768.0


class MalformedWav(ValueError):
    """Container structure is broken (bad magic, truncated chunks, ...)."""


class UnsupportedEncoding(ValueError):
    """Valid container but not 16-bit integer PCM mono/stereo."""


class UndefinedLevel(ValueError):
    """SPL of a non-positive RMS amplitude is undefined."""


@dataclass(frozen=True)
class AudioClip:
    sample_rate: int
    channels: int
    samples: np.ndarray  # (frames, channels), float64 in [-1, 1)

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be > 0")
        if self.samples.shape[0] == 0:
            raise ValueError("clip must contain at least one sample")

    @property
    def duration(self) -> float:
        return self.samples.shape[0] / self.sample_rate

    def mono(self) -> np.ndarray:
        if self.channels == 1:
            return self.samples[:, 0]
        return self.samples.mean(axis=1)


@dataclass(frozen=True)
class Calibration:
    pa_per_unit: float = 1.0   # pascals per digital full-scale unit
    p_ref: float = P_REF_PA

    def __post_init__(self):
        if self.pa_per_unit <= 0 or self.p_ref <= 0:
            raise ValueError("calibration values must be > 0")


def _chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body_start = pos + 8
        yield cid, size, body_start
        pos = body_start + size + (size & 1)  # chunks are word-aligned


def parse_wav(data: bytes, mix_to_mono: bool = False) -> AudioClip:
    """Decode a 16-bit PCM RIFF/WAVE byte string."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWav("not a RIFF/WAVE container")
    fmt = None
    payload = None
    for cid, size, start in _chunks(data):
        if start + size > len(data):
            raise MalformedWav(f"chunk {cid!r} exceeds file size")
        if cid == b"fmt ":
            if size < 16:
                raise MalformedWav("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", data, start)
        elif cid == b"data":
            payload = data[start:start + size]
    if fmt is None or payload is None:
        raise MalformedWav("missing fmt or data chunk")
    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if audio_format != 1:
        raise UnsupportedEncoding(f"audio format {audio_format} is not integer PCM")
    if bits != 16:
        raise UnsupportedEncoding(f"bit depth {bits} unsupported (16-bit only)")
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"{channels} channels unsupported (mono/stereo only)")
    frame_bytes = 2 * channels
    if len(payload) == 0 or len(payload) % frame_bytes != 0:
        raise MalformedWav("data chunk is empty or not frame-aligned")
    ints = np.frombuffer(payload, dtype="<i2").astype(np.float64)
    samples = (ints / _FULL_SCALE).reshape(-1, channels)
    if mix_to_mono and channels == 2:
        samples = samples.mean(axis=1, keepdims=True)
        channels = 1
    return AudioClip(sample_rate=int(sample_rate), channels=channels, samples=samples)


def serialize_wav(clip: AudioClip) -> bytes:
    """Encode back to 16-bit PCM; inverse of parse_wav on its own output."""
    ints = np.clip(np.rint(clip.samples * _FULL_SCALE), -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    frame_bytes = 2 * clip.channels
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, clip.channels, clip.sample_rate,
        clip.sample_rate * frame_bytes, frame_bytes, 16,
        b"data", len(payload),
    )
    return header + payload


def _segment_indices(clip: AudioClip, segment) -> tuple:
    start_s, end_s = segment
    if start_s < 0 or end_s > clip.duration + 1e-12:
        raise ValueError(f"segment [{start_s}, {end_s}] outside clip of {clip.duration:.6f}s")
    i0 = int(round(start_s * clip.sample_rate))
    i1 = int(round(end_s * clip.sample_rate))
    i1 = min(i1, clip.samples.shape[0])
    if i1 <= i0:
        raise ValueError(f"segment [{start_s}, {end_s}] contains no samples")
    return i0, i1


def rms(clip: AudioClip, segment=None) -> float:
    """Root-mean-square amplitude over [start_s, end_s] (whole clip if None)."""
    mono = clip.mono()
    if segment is not None:
        i0, i1 = _segment_indices(clip, segment)
        mono = mono[i0:i1]
    return float(np.sqrt(np.mean(mono * mono)))


def spl_db(rms_amplitude: float, cal: Calibration = Calibration()) -> float:
    """Sound pressure level: 20 * log10(rms * pa_per_unit / p_ref)."""
    if rms_amplitude <= 0:
        raise UndefinedLevel("SPL undefined for non-positive RMS")
    return 20.0 * math.log10(rms_amplitude * cal.pa_per_unit / cal.p_ref)


def subtract_noise(rms_total: float, rms_env: float) -> float:
    """Remove ambient power: sqrt(max(0, total^2 - env^2))."""
    if rms_total < 0 or rms_env < 0:
        raise ValueError("RMS amplitudes must be >= 0")
    return math.sqrt(max(0.0, rms_total * rms_total - rms_env * rms_env))


def locomotion_spl(clip: AudioClip, loco_segment, env_segment,
                   cal: Calibration = Calibration()) -> float:
    """SPL of the locomotion segment after ambient-noise power subtraction."""
    l0, l1 = _segment_indices(clip, loco_segment)
    e0, e1 = _segment_indices(clip, env_segment)
    if max(l0, e0) < min(l1, e1):
        raise ValueError("locomotion and environment segments must be disjoint")
    cleaned = subtract_noise(rms(clip, loco_segment), rms(clip, env_segment))
    if cleaned <= 0:
        raise UndefinedLevel("locomotion indistinguishable from ambient noise")
    return spl_db(cleaned, cal)
