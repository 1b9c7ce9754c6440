"""Polyphonic sound event detection toolkit.

Single-channel and binaural audio features feed a stacked convolutional
recurrent network, trained from scratch in numpy, and predictions are scored
with segment-based error rate and F-score.
"""

__version__ = "0.1.0"

from . import audio_io, config, dsp, experiment, features, metrics, nn, synth  # noqa: F401
from .errors import SedError  # noqa: F401
