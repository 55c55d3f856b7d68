"""WAV (PCM16 mono) and TFSG container I/O.

TFSG v1, little-endian::

    "TFSG" | u32 version | u64 L | u32 a | u32 M | u32 convention | f64 lam
    | u32 rows | u32 cols | u8 payload_kind | f64 payload (row-major)

Complex payloads store interleaved (re, im) pairs.
"""
from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FormatError, ParameterError
from .gabor import Convention, GaborSystem, Spectrogram

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# WAV

PCM_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class AudioFile:
    samples: np.ndarray
    sample_rate: int = 16000
    channels: int = 1
    clipped: int = 0

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).ravel()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def _chunks(data: bytes, start: int):
    """Yield ``(id, offset_of_body, body)`` for each RIFF subchunk."""
    pos = start
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if body + size > len(data):
            raise FormatError(f"chunk {cid!r} declares {size} bytes but file ends early", pos + 4)
        yield cid, body, data[body : body + size]
        pos = body + size + (size & 1)


def read_wav(path) -> AudioFile:
    """Read a RIFF/WAVE PCM16 mono file, scaling samples by 1/32768."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise FormatError("file too short for a RIFF header", len(data))
    if data[:4] != b"RIFF":
        raise FormatError(f"expected 'RIFF', found {data[:4]!r}", 0)
    if data[8:12] != b"WAVE":
        raise FormatError(f"expected 'WAVE', found {data[8:12]!r}", 8)
    fmt = None
    payload = None
    for cid, offset, body in _chunks(data, 12):
        if cid == b"fmt ":
            if len(body) < 16:
                raise FormatError("fmt chunk shorter than 16 bytes", offset)
            fmt = (offset, struct.unpack_from("<HHIIHH", body, 0))
        elif cid == b"data":
            payload = (offset, body)
    if fmt is None:
        raise FormatError("no fmt chunk", 12)
    offset, (tag, channels, rate, _, _, bits) = fmt
    if tag not in (1, 0xFFFE):
        raise FormatError(f"unsupported format tag {tag} (only PCM)", offset)
    if channels != 1:
        raise FormatError(f"{channels} channels; only mono is supported", offset + 2)
    if bits != 16:
        raise FormatError(f"{bits}-bit samples; only 16-bit PCM is supported", offset + 14)
    if payload is None:
        raise FormatError("no data chunk", 12)
    offset, body = payload
    if len(body) % 2:
        raise FormatError("odd number of bytes in 16-bit data chunk", offset + len(body) - 1)
    samples = np.frombuffer(body, dtype="<i2").astype(float) / PCM_SCALE
    return AudioFile(samples, rate)


def write_wav(audio, path, sample_rate: Optional[int] = None) -> int:
    """Write PCM16 mono; returns the number of hard-clipped samples."""
    if isinstance(audio, AudioFile):
        samples, rate = audio.samples, audio.sample_rate
    else:
        samples, rate = np.asarray(getattr(audio, "samples", audio), dtype=float), getattr(audio, "sample_rate", 16000)
    if sample_rate is not None:
        rate = sample_rate
    samples = np.asarray(samples, dtype=float).ravel()
    if not np.all(np.isfinite(samples)):
        raise ParameterError("samples must be finite")
    ints = np.round(samples * PCM_SCALE)
    clipped = int(np.count_nonzero((ints > 32767) | (ints < -32768)))
    if clipped:
        logger.warning("clipped %d of %d samples to [-1, 1]", clipped, samples.size)
    pcm = np.clip(ints, -32768, 32767).astype("<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, rate, 2 * rate, 2, 16)
    header += b"data" + struct.pack("<I", len(pcm))
    with open(path, "wb") as fh:
        fh.write(header + pcm)
    return clipped


# ---------------------------------------------------------------------------
# TFSG

MAGIC = b"TFSG"
VERSION = 1
_HEADER = struct.Struct("<4sIQIIIdIIB")
COMPLEX, LOGMAG, FEATURE = 0, 1, 2
KIND_NAMES = {COMPLEX: "complex", LOGMAG: "logmag", FEATURE: "feature"}


@dataclass(frozen=True, eq=False)
class Container:
    """Raw TFSG contents: geometry, convention, kind and a 2-D payload."""

    L: int
    a: int
    M: int
    convention: Convention
    lam: float
    kind: int
    data: np.ndarray

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def matches(self, system: GaborSystem) -> bool:
        return (self.L, self.a, self.M) == (system.L, system.a, system.M)

    @classmethod
    def from_spectrogram(cls, spec: Spectrogram) -> "Container":
        s = spec.system
        return cls(s.L, s.a, s.M, spec.convention, s.lam, COMPLEX, spec.coefficients)


def write_tfsg(container: Container, path) -> None:
    data = np.asarray(container.data)
    if data.ndim != 2:
        raise ParameterError("TFSG payload must be two-dimensional")
    if container.kind not in KIND_NAMES:
        raise ParameterError(f"unknown payload kind {container.kind}")
    rows, cols = data.shape
    header = _HEADER.pack(
        MAGIC, VERSION, container.L, container.a, container.M, int(container.convention),
        float(container.lam), rows, cols, container.kind,
    )
    if container.kind == COMPLEX:
        payload = np.ascontiguousarray(data, dtype="<c16").view("<f8")
    else:
        payload = np.ascontiguousarray(data, dtype="<f8")
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())
    os.replace(tmp, path)


def read_tfsg(path) -> Container:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"header needs {_HEADER.size} bytes, file has {len(raw)}", len(raw))
    magic, version, L, a, M, conv, lam, rows, cols, kind = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if conv not in (0, 1, 2):
        raise FormatError(f"unknown convention code {conv}", 24)
    if kind not in KIND_NAMES:
        raise FormatError(f"unknown payload kind {kind}", _HEADER.size - 1)
    width = 16 if kind == COMPLEX else 8
    expected = rows * cols * width
    got = len(raw) - _HEADER.size
    if got != expected:
        raise FormatError(
            f"{KIND_NAMES[kind]} payload of {rows}x{cols} needs {expected} bytes, found {got}",
            _HEADER.size,
        )
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if kind == COMPLEX:
        data = body.view("<c16").reshape(rows, cols).astype(complex)
    else:
        data = body.reshape(rows, cols).astype(float)
    return Container(L, a, M, Convention(conv), lam, kind, data)
