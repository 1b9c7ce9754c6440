"""WAV and annotation I/O plus frame-level event rolls.

The WAV reader handles the RIFF/WAVE subset the datasets use: little-endian
PCM (format code 1), 16 or 24 bit, one or two channels. Unknown chunks are
skipped. Annotations are three-column TSV (onset, offset, label) in seconds;
the dataset manifest is a separate TSV mapping each clip to a fold and split
role.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    AnnotationError,
    ManifestError,
    RangeError,
    UnsupportedWavError,
    WavFormatError,
)

SPLIT_ROLES = ("train", "validation", "test")

# tolerance, in frames, used when snapping event boundaries onto the frame
# grid; absorbs float noise like 0.06/0.02 -> 2.9999999999999996
_FRAME_EPS = 1e-9


@dataclass(frozen=True)
class AudioClip:
    """Multichannel sample buffer: ``samples`` is ``(n_channels, n_samples)``
    float64 in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = self.samples
        if s.ndim != 2:
            raise WavFormatError(f"samples must be 2-D (channels, samples), got shape {s.shape}")
        if s.shape[0] not in (1, 2):
            raise UnsupportedWavError(f"only 1 or 2 channels supported, got {s.shape[0]}")
        if self.sample_rate <= 0:
            raise WavFormatError(f"sample rate must be positive, got {self.sample_rate}")
        if s.size and not np.all(np.isfinite(s)):
            raise WavFormatError("samples contain non-finite values")
        if s.size and np.max(np.abs(s)) > 1.0:
            raise WavFormatError("samples fall outside [-1, 1]")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate


class Event(NamedTuple):
    onset: float
    offset: float
    label: str


@dataclass(frozen=True)
class EventRoll:
    """Binary frames x classes activity matrix."""

    activity: np.ndarray
    hop_seconds: float
    class_names: tuple[str, ...]

    def __post_init__(self):
        a = self.activity
        if a.ndim != 2:
            raise AnnotationError(f"activity must be 2-D (frames, classes), got shape {a.shape}")
        if a.shape[1] != len(self.class_names):
            raise AnnotationError(
                f"{a.shape[1]} activity columns but {len(self.class_names)} class names"
            )
        if a.size and not np.isin(a, (0, 1)).all():
            raise AnnotationError("activity entries must be 0 or 1")
        if self.hop_seconds <= 0:
            raise RangeError(f"hop_seconds must be positive, got {self.hop_seconds}")

    @property
    def n_frames(self) -> int:
        return self.activity.shape[0]

    @property
    def n_classes(self) -> int:
        return self.activity.shape[1]


class ManifestRow(NamedTuple):
    audio_path: str
    annotation_path: str
    fold: int
    role: str


def read_wav(path) -> AudioClip:
    """Read a PCM WAV file, scaling samples to [-1, 1] by ``2**(bits-1)``."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    raw = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        size = int.from_bytes(data[pos + 4 : pos + 8], "little")
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            raw = body
        pos += 8 + size + (size & 1)  # chunks are word aligned

    if fmt is None or raw is None:
        raise WavFormatError(f"{path}: missing fmt or data chunk")
    if len(fmt) < 16:
        raise WavFormatError(f"{path}: fmt chunk too short ({len(fmt)} bytes)")

    audio_format, n_channels, sample_rate, _, _, bits = struct.unpack("<HHIIHH", fmt[:16])
    if audio_format != 1:
        raise UnsupportedWavError(f"{path}: only PCM (format 1) supported, got format {audio_format}")
    if bits not in (16, 24):
        raise UnsupportedWavError(f"{path}: only 16 or 24 bit supported, got {bits}")
    if n_channels not in (1, 2):
        raise UnsupportedWavError(f"{path}: only 1 or 2 channels supported, got {n_channels}")

    frame_bytes = (bits // 8) * n_channels
    if len(raw) % frame_bytes:
        raise WavFormatError(f"{path}: data size {len(raw)} is not a whole number of frames")

    if bits == 16:
        ints = np.frombuffer(raw, dtype="<i2").astype(np.int32)
    else:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)

    samples = ints.astype(np.float64) / float(1 << (bits - 1))
    samples = samples.reshape(-1, n_channels).T.copy()
    return AudioClip(samples=samples, sample_rate=int(sample_rate))


def write_wav(path, clip: AudioClip, bit_depth: int = 16) -> None:
    """Write a PCM WAV file at the given bit depth (16 or 24)."""
    if bit_depth not in (16, 24):
        raise UnsupportedWavError(f"only 16 or 24 bit supported, got {bit_depth}")
    full = 1 << (bit_depth - 1)
    ints = np.ascontiguousarray(
        np.clip(np.rint(clip.samples.T * full), -full, full - 1), dtype=np.int32
    )

    if bit_depth == 16:
        payload = ints.astype("<i2").tobytes()
    else:
        payload = ints.astype("<i4").view(np.uint8).reshape(-1, 4)[:, :3].tobytes()

    n_channels = clip.n_channels
    block_align = n_channels * bit_depth // 8
    byte_rate = clip.sample_rate * block_align
    pad = b"\x00" if len(payload) & 1 else b""
    riff_size = 4 + 8 + 16 + 8 + len(payload) + len(pad)

    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", riff_size) + b"WAVE")
        fh.write(b"fmt " + struct.pack("<IHHIIHH", 16, 1, n_channels, clip.sample_rate, byte_rate, block_align, bit_depth))
        fh.write(b"data" + struct.pack("<I", len(payload)))
        fh.write(payload)
        fh.write(pad)


def to_mono(clip: AudioClip) -> AudioClip:
    """Arithmetic mean across channels; mono input is returned unchanged."""
    if clip.n_channels == 1:
        return clip
    return AudioClip(samples=clip.samples.mean(axis=0, keepdims=True), sample_rate=clip.sample_rate)


def read_annotations(path, class_names: Sequence[str]) -> list[Event]:
    """Parse an ``onset<TAB>offset<TAB>label`` TSV into an event list."""
    vocab = set(class_names)
    events = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise AnnotationError(f"{path}: line {lineno}: expected 'onset<TAB>offset<TAB>label'")
        try:
            onset = float(parts[0])
            offset = float(parts[1])
        except ValueError:
            raise AnnotationError(f"{path}: line {lineno}: onset/offset are not decimal seconds") from None
        label = parts[2]
        if label not in vocab:
            raise AnnotationError(f"{path}: line {lineno}: unknown label {label!r}")
        if onset < 0:
            raise AnnotationError(f"{path}: line {lineno}: onset must be >= 0, got {onset}")
        if not offset > onset:
            raise AnnotationError(f"{path}: line {lineno}: offset {offset} must exceed onset {onset}")
        events.append(Event(onset, offset, label))
    return events


def write_annotations(events: Sequence[Event], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(f"{ev.onset:.6f}\t{ev.offset:.6f}\t{ev.label}\n")


def event_frame_span(onset: float, offset: float, hop_seconds: float, n_frames: int) -> tuple[int, int]:
    """Half-open frame range [start, end) of frames whose interval
    ``[f*hop, (f+1)*hop)`` overlaps ``[onset, offset)``, clipped to the roll."""
    start = int(np.floor(onset / hop_seconds + _FRAME_EPS))
    end = int(np.ceil(offset / hop_seconds - _FRAME_EPS))
    return max(0, start), min(n_frames, max(end, start))


def events_to_roll(
    events: Sequence[Event],
    n_frames: int,
    hop_seconds: float,
    class_names: Sequence[str],
) -> EventRoll:
    """Rasterize events onto the frame grid: a frame is active for a class
    iff its interval overlaps any event of that class. Events running past
    the end of the roll are clipped, not rejected."""
    if n_frames <= 0:
        raise RangeError(f"n_frames must be positive, got {n_frames}")
    if hop_seconds <= 0:
        raise RangeError(f"hop_seconds must be positive, got {hop_seconds}")
    index = {name: i for i, name in enumerate(class_names)}
    activity = np.zeros((n_frames, len(class_names)), dtype=np.uint8)
    for ev in events:
        if ev.label not in index:
            raise AnnotationError(f"event label {ev.label!r} not in class vocabulary")
        start, end = event_frame_span(ev.onset, ev.offset, hop_seconds, n_frames)
        activity[start:end, index[ev.label]] = 1
    return EventRoll(activity=activity, hop_seconds=hop_seconds, class_names=tuple(class_names))


def read_manifest(path) -> list[ManifestRow]:
    """Parse and validate an ``audio<TAB>annotation<TAB>fold<TAB>role`` TSV."""
    rows: list[ManifestRow] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ManifestError(f"{path}: line {lineno}: expected 4 tab-separated columns")
        audio, annot, fold_s, role = parts
        try:
            fold = int(fold_s)
        except ValueError:
            raise ManifestError(f"{path}: line {lineno}: fold {fold_s!r} is not an integer") from None
        if role not in SPLIT_ROLES:
            raise ManifestError(f"{path}: line {lineno}: role must be one of {SPLIT_ROLES}, got {role!r}")
        rows.append(ManifestRow(audio, annot, fold, role))

    folds = sorted({r.fold for r in rows})
    if rows and folds != list(range(1, len(folds) + 1)):
        raise ManifestError(f"{path}: fold ids {folds} do not cover 1..{len(folds)}")
    seen: set[tuple[str, int]] = set()
    for r in rows:
        key = (r.audio_path, r.fold)
        if key in seen:
            raise ManifestError(f"{path}: clip {r.audio_path!r} has more than one role in fold {r.fold}")
        seen.add(key)
    return rows


def write_manifest(rows: Sequence[ManifestRow], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(f"{r.audio_path}\t{r.annotation_path}\t{r.fold}\t{r.role}\n")
