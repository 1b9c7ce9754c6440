from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from sedpipe import synth
from sedpipe.audio_io import AudioClip, ManifestRow, write_annotations, write_manifest, write_wav


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def stereo_clip(rng) -> AudioClip:
    """One second of deterministic stereo noise-plus-tone at 44.1 kHz."""
    n = 44100
    t = np.arange(n) / 44100.0
    left = 0.4 * np.sin(2 * np.pi * 440.0 * t) + 0.05 * rng.normal(size=n)
    right = 0.3 * np.sin(2 * np.pi * 880.0 * t) + 0.05 * rng.normal(size=n)
    samples = np.clip(np.stack([left, right]), -1.0, 1.0)
    return AudioClip(samples=samples, sample_rate=44100)


@pytest.fixture
def tiny_dataset():
    """Four short two-class clips plus their names, for training fixtures."""
    spec = synth.SynthSpec(
        n_clips=4,
        duration_s=4.0,
        class_count=2,
        polyphony_max=2,
        seed=11,
        events_per_clip=(3, 6),
        event_duration=(0.3, 1.2),
    )
    return synth.synth_dataset(spec), synth.class_names(spec)


def write_dataset(
    directory: Path,
    n_clips: int = 4,
    duration_s: float = 3.0,
    class_count: int = 2,
    folds: int = 2,
    seed: int = 21,
    template_mode: str = "distinct",
    sample_rate: int = 44100,
) -> Path:
    """Materialize a small synthetic dataset plus manifest on disk and
    return the manifest path."""
    directory.mkdir(parents=True, exist_ok=True)
    spec = synth.SynthSpec(
        n_clips=n_clips,
        duration_s=duration_s,
        class_count=class_count,
        polyphony_max=2,
        seed=seed,
        sample_rate=sample_rate,
        events_per_clip=(3, 6),
        event_duration=(0.3, 1.0),
        template_mode=template_mode,
    )
    rows = []
    with_validation = folds >= 3
    for i, (clip, events) in enumerate(synth.synth_dataset(spec)):
        stem = f"clip{i:03d}"
        write_wav(directory / f"{stem}.wav", clip, bit_depth=16)
        write_annotations(events, directory / f"{stem}.tsv")
        for fold in range(1, folds + 1):
            group = i % folds
            if group == fold - 1:
                role = "test"
            elif with_validation and group == fold % folds:
                role = "validation"
            else:
                role = "train"
            rows.append(ManifestRow(f"{stem}.wav", f"{stem}.tsv", fold, role))
    manifest = directory / "manifest.tsv"
    write_manifest(rows, manifest)
    return manifest
