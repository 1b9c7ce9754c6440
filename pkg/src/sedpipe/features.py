"""The four feature classes and training-sequence assembly.

All extractors share the 20 ms hop and centered framing, so one clip yields
the same frame count F whatever the analysis window:

  mbe          mono log mel energies                  (F, 40, 1)
  bin-mbe      per-channel log mel energies           (F, 40, 2)
  bin-mul-mbe  per-channel, windows 1024/4096/16384   (F, 40, 6)
  bin-fft      per-channel STFT magnitude and phase   (F, 1024, 4)
"""

from __future__ import annotations

import logging
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dsp
from .audio_io import AudioClip, EventRoll, to_mono
from .errors import ChannelError, ConfigError, RangeError, ShapeError, StateError

log = logging.getLogger(__name__)

FEATURE_CLASSES = ("mbe", "bin-mbe", "bin-mul-mbe", "bin-fft")

# (bins, channels) contract per feature class
FEATURE_SHAPES = {
    "mbe": (40, 1),
    "bin-mbe": (40, 2),
    "bin-mul-mbe": (40, 6),
    "bin-fft": (1024, 4),
}

MULTIRES_WINDOWS = (1024, 4096, 16384)

_STD_FLOOR = 1e-8
_ARCHIVE_MAGIC = b"SEDF"
_ARCHIVE_VERSION = 1
_CLASS_IDS = {name: i + 1 for i, name in enumerate(FEATURE_CLASSES)}
_CLASS_FROM_ID = {i: name for name, i in _CLASS_IDS.items()}


@dataclass(frozen=True)
class FeatureTensor:
    """frames x bins x channels array of one feature class."""

    data: np.ndarray
    feature_class: str
    hop_seconds: float

    def __post_init__(self):
        if self.feature_class not in FEATURE_SHAPES:
            raise ConfigError(f"unknown feature class {self.feature_class!r}")
        d = self.data
        if d.ndim != 3:
            raise ShapeError(f"feature data must be 3-D (F, B, Ch), got shape {d.shape}")
        if d.size and not np.all(np.isfinite(d)):
            raise ShapeError("feature data contains non-finite values")
        ch = d.shape[2]
        expected_ch = FEATURE_SHAPES[self.feature_class][1]
        # bin counts follow the config (n_mels, fft size); channel counts are
        # fixed per class except bin-mul-mbe, which scales with the window set
        if self.feature_class == "bin-mul-mbe":
            if ch < 2 or ch % 2:
                raise ShapeError(f"bin-mul-mbe needs an even channel count >= 2, got {ch}")
        elif ch != expected_ch:
            raise ShapeError(f"{self.feature_class} expects {expected_ch} channel(s), got {ch}")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_bins(self) -> int:
        return self.data.shape[1]

    @property
    def n_channels(self) -> int:
        return self.data.shape[2]


def _frame_params(sample_rate: int, window_ms: float, hop_ms: float) -> tuple[int, int]:
    window_len = int(round(window_ms * sample_rate / 1000.0))
    hop = int(round(hop_ms * sample_rate / 1000.0))
    if window_len < 1 or hop < 1:
        raise RangeError(f"window {window_ms} ms / hop {hop_ms} ms too short at {sample_rate} Hz")
    return window_len, hop


def effective_f_max(f_max: float, sample_rate: int) -> float:
    """Clamp the filterbank ceiling to Nyquist, warning rather than failing
    so a nominal 22500 Hz config still runs on 44.1 kHz audio."""
    nyquist = sample_rate / 2.0
    if f_max > nyquist:
        warnings.warn(
            f"f_max {f_max:g} Hz exceeds Nyquist {nyquist:g} Hz; clamping to Nyquist",
            UserWarning,
            stacklevel=2,
        )
        return nyquist
    return f_max


def _mel_channel(
    samples: np.ndarray,
    sample_rate: int,
    window_len: int,
    fft_size: int,
    hop: int,
    bank: dsp.MelFilterbank,
) -> np.ndarray:
    spectra = dsp.stft(samples, window_len, fft_size, hop)
    return dsp.log_mel_energies(dsp.power_spectrum(spectra), bank)


def extract_mbe(
    clip: AudioClip,
    n_mels: int = 40,
    f_min: float = 0.0,
    f_max: float = 22500.0,
    window_ms: float = 40.0,
    hop_ms: float = 20.0,
    fft_size: int = 2048,
) -> FeatureTensor:
    """Single-channel log mel energies, (F, n_mels, 1)."""
    if clip.n_channels != 1:
        raise ChannelError(f"mbe needs mono input, got {clip.n_channels} channels")
    window_len, hop = _frame_params(clip.sample_rate, window_ms, hop_ms)
    bank = dsp.mel_filterbank(
        n_mels, fft_size, clip.sample_rate, f_min, effective_f_max(f_max, clip.sample_rate)
    )
    mel = _mel_channel(clip.samples[0], clip.sample_rate, window_len, fft_size, hop, bank)
    return FeatureTensor(data=mel[:, :, None], feature_class="mbe", hop_seconds=hop_ms / 1000.0)


def extract_bin_mbe(
    clip: AudioClip,
    n_mels: int = 40,
    f_min: float = 0.0,
    f_max: float = 22500.0,
    window_ms: float = 40.0,
    hop_ms: float = 20.0,
    fft_size: int = 2048,
) -> FeatureTensor:
    """Per-channel log mel energies, (F, n_mels, 2), channel order (L, R)."""
    if clip.n_channels != 2:
        raise ChannelError(f"bin-mbe needs stereo input, got {clip.n_channels} channel(s)")
    window_len, hop = _frame_params(clip.sample_rate, window_ms, hop_ms)
    bank = dsp.mel_filterbank(
        n_mels, fft_size, clip.sample_rate, f_min, effective_f_max(f_max, clip.sample_rate)
    )
    channels = [
        _mel_channel(clip.samples[ch], clip.sample_rate, window_len, fft_size, hop, bank)
        for ch in range(2)
    ]
    return FeatureTensor(
        data=np.stack(channels, axis=2), feature_class="bin-mbe", hop_seconds=hop_ms / 1000.0
    )


def extract_bin_mul_mbe(
    clip: AudioClip,
    n_mels: int = 40,
    f_min: float = 0.0,
    f_max: float = 22500.0,
    hop_ms: float = 20.0,
    windows: Sequence[int] = MULTIRES_WINDOWS,
) -> FeatureTensor:
    """Multi-resolution per-channel log mel energies, (F, n_mels, 2*len(windows)).

    Each resolution analyzes ``w`` samples with an FFT of the same size; the
    channel axis interleaves resolution-major: (w0 L, w0 R, w1 L, w1 R, ...).
    """
    if clip.n_channels != 2:
        raise ChannelError(f"bin-mul-mbe needs stereo input, got {clip.n_channels} channel(s)")
    _, hop = _frame_params(clip.sample_rate, 40.0, hop_ms)
    f_top = effective_f_max(f_max, clip.sample_rate)
    channels = []
    for w in windows:
        bank = dsp.mel_filterbank(n_mels, w, clip.sample_rate, f_min, f_top)
        for ch in range(2):
            channels.append(_mel_channel(clip.samples[ch], clip.sample_rate, w, w, hop, bank))
    return FeatureTensor(
        data=np.stack(channels, axis=2), feature_class="bin-mul-mbe", hop_seconds=hop_ms / 1000.0
    )


def extract_bin_fft(
    clip: AudioClip,
    window_ms: float = 40.0,
    hop_ms: float = 20.0,
    fft_size: int = 2048,
    log_magnitude: bool = False,
) -> FeatureTensor:
    """Per-channel STFT magnitude and phase, (F, fft_size//2, 4).

    The DC bin is dropped so a 2048-point transform yields exactly 1024 bins;
    channel order is (mag L, mag R, phase L, phase R), phase in (-pi, pi].
    ``log_magnitude`` switches the magnitude planes to log scale.
    """
    if clip.n_channels != 2:
        raise ChannelError(f"bin-fft needs stereo input, got {clip.n_channels} channel(s)")
    window_len, hop = _frame_params(clip.sample_rate, window_ms, hop_ms)
    mags, phases = [], []
    for ch in range(2):
        spectra = dsp.stft(clip.samples[ch], window_len, fft_size, hop)[:, 1:]
        mag = np.abs(spectra)
        if log_magnitude:
            mag = np.log(np.maximum(mag, dsp.LOG_FLOOR))
        phase = np.angle(spectra)
        phase = np.where(phase <= -np.pi, np.pi, phase)
        mags.append(mag)
        phases.append(phase)
    return FeatureTensor(
        data=np.stack(mags + phases, axis=2),
        feature_class="bin-fft",
        hop_seconds=hop_ms / 1000.0,
    )


def extract(clip: AudioClip, feature_class: str, **kwargs) -> FeatureTensor:
    """Dispatch on feature class. Stereo input to ``mbe`` is downmixed with
    a log line rather than rejected, matching how mono experiments run on a
    binaural corpus."""
    if feature_class == "mbe":
        if clip.n_channels == 2:
            log.info("mbe on stereo input: averaging channels to mono")
            clip = to_mono(clip)
        return extract_mbe(clip, **kwargs)
    if feature_class == "bin-mbe":
        return extract_bin_mbe(clip, **kwargs)
    if feature_class == "bin-mul-mbe":
        return extract_bin_mul_mbe(clip, **kwargs)
    if feature_class == "bin-fft":
        return extract_bin_fft(clip, **kwargs)
    raise ConfigError(f"unknown feature class {feature_class!r}")


@dataclass(frozen=True)
class Normalizer:
    """Per (bin, channel) standardization statistics fit on training data."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape:
            raise ShapeError("mean and std must share a shape")
        if np.any(self.std <= 0):
            raise ShapeError("std entries must be strictly positive")


def fit_normalizer(tensors: Sequence[FeatureTensor]) -> Normalizer:
    if not tensors:
        raise StateError("cannot fit a normalizer on an empty training set")
    stacked = np.concatenate([t.data for t in tensors], axis=0)
    if stacked.shape[0] == 0:
        raise StateError("cannot fit a normalizer on zero frames")
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), _STD_FLOOR)
    return Normalizer(mean=mean, std=std)


def apply_normalizer(norm: Normalizer, tensor: FeatureTensor) -> FeatureTensor:
    if norm.mean.shape != tensor.data.shape[1:]:
        raise ShapeError(
            f"normalizer shape {norm.mean.shape} does not match tensor bins/channels "
            f"{tensor.data.shape[1:]}"
        )
    return FeatureTensor(
        data=(tensor.data - norm.mean) / norm.std,
        feature_class=tensor.feature_class,
        hop_seconds=tensor.hop_seconds,
    )


@dataclass(frozen=True)
class SequenceBatch:
    """Fixed-length training sequences with frame-validity masks.

    ``inputs`` is (n, T, B, Ch), ``targets`` (n, T, C) and ``mask`` (n, T);
    masked-off frames are zero padding excluded from loss and metrics.
    """

    inputs: np.ndarray
    targets: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 4 or self.targets.ndim != 3 or self.mask.ndim != 2:
            raise ShapeError("SequenceBatch arrays have wrong ranks")
        if not (
            self.inputs.shape[0] == self.targets.shape[0] == self.mask.shape[0]
            and self.inputs.shape[1] == self.targets.shape[1] == self.mask.shape[1]
        ):
            raise ShapeError("SequenceBatch arrays disagree on (n, T)")

    @property
    def n_sequences(self) -> int:
        return self.inputs.shape[0]

    @property
    def seq_len(self) -> int:
        return self.inputs.shape[1]

    def valid_frames(self) -> tuple[np.ndarray, np.ndarray]:
        """Concatenated (features, targets) of real frames, chunk order."""
        m = self.mask.astype(bool)
        return self.inputs[m], self.targets[m]

    @staticmethod
    def concat(batches: Sequence["SequenceBatch"]) -> "SequenceBatch":
        batches = [b for b in batches if b.n_sequences]
        if not batches:
            raise StateError("no sequences to concatenate")
        return SequenceBatch(
            inputs=np.concatenate([b.inputs for b in batches], axis=0),
            targets=np.concatenate([b.targets for b in batches], axis=0),
            mask=np.concatenate([b.mask for b in batches], axis=0),
        )


def chunk_sequences(tensor, roll: EventRoll, seq_len: int) -> SequenceBatch:
    """Split a clip into non-overlapping length-``seq_len`` sequences.

    The final partial window is zero padded on both features and targets
    and flagged invalid in the mask. ``tensor`` may be a FeatureTensor or a
    plain (F, B, Ch) array (the baseline's context windows use the latter).
    """
    data = tensor.data if isinstance(tensor, FeatureTensor) else np.asarray(tensor)
    if seq_len < 1:
        raise RangeError(f"sequence length must be >= 1, got {seq_len}")
    if data.ndim != 3:
        raise ShapeError(f"expected (F, B, Ch) features, got shape {data.shape}")
    if data.shape[0] != roll.n_frames:
        raise ShapeError(
            f"features have {data.shape[0]} frames but the roll has {roll.n_frames}"
        )
    f, b, ch = data.shape
    c = roll.n_classes
    n_seq = -(-f // seq_len)
    inputs = np.zeros((n_seq, seq_len, b, ch))
    targets = np.zeros((n_seq, seq_len, c))
    mask = np.zeros((n_seq, seq_len), dtype=bool)
    for s in range(n_seq):
        lo = s * seq_len
        hi = min(f, lo + seq_len)
        inputs[s, : hi - lo] = data[lo:hi]
        targets[s, : hi - lo] = roll.activity[lo:hi]
        mask[s, : hi - lo] = True
    return SequenceBatch(inputs=inputs, targets=targets, mask=mask)


def save_feature_archive(tensor: FeatureTensor, path) -> None:
    """Write the versioned binary archive: magic, header, float32 payload in
    frame-major order."""
    f, b, ch = tensor.data.shape
    header = struct.pack(
        "<4sHHIIId",
        _ARCHIVE_MAGIC,
        _ARCHIVE_VERSION,
        _CLASS_IDS[tensor.feature_class],
        f,
        b,
        ch,
        tensor.hop_seconds,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())


def load_feature_archive(path) -> FeatureTensor:
    raw = Path(path).read_bytes()
    head_size = struct.calcsize("<4sHHIIId")
    if len(raw) < head_size or raw[:4] != _ARCHIVE_MAGIC:
        raise StateError(f"{path}: not a feature archive")
    magic, version, class_id, f, b, ch, hop = struct.unpack("<4sHHIIId", raw[:head_size])
    if version != _ARCHIVE_VERSION:
        raise StateError(f"{path}: unsupported archive version {version}")
    if class_id not in _CLASS_FROM_ID:
        raise StateError(f"{path}: unknown feature class id {class_id}")
    payload = np.frombuffer(raw, dtype="<f4", offset=head_size)
    if payload.size != f * b * ch:
        raise StateError(f"{path}: payload size does not match header")
    data = payload.reshape(f, b, ch).astype(np.float64)
    return FeatureTensor(data=data, feature_class=_CLASS_FROM_ID[class_id], hop_seconds=hop)
