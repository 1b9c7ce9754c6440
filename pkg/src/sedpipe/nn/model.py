"""Model graphs: the stacked convolutional-recurrent network, the dense
baseline, and checkpoint serialization."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import CheckpointError, ConfigError, ShapeError
from ..features import Normalizer
from .layers import (
    BatchNorm,
    BiGRU,
    Conv2D,
    Dropout,
    FlattenFreq,
    Layer,
    MaxPoolFreq,
    TimeDense,
    layer_from_descriptor,
)

_CHECKPOINT_MAGIC = b"SEDM"
_CHECKPOINT_VERSION = 1


class ModelGraph:
    """An ordered layer stack with a parameter registry.

    Parameters are addressed as ``"<layer index>.<name>"``; buffers (batch
    norm running statistics) ride along in snapshots and checkpoints so a
    restored model reproduces inference bit for bit.
    """

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x, training=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def parameters(self):
        for i, layer in enumerate(self.layers):
            for name in layer.param_order:
                yield f"{i}.{name}", layer.params[name]

    def gradient(self, key: str) -> np.ndarray:
        idx, name = key.split(".", 1)
        return self.layers[int(idx)].grads[name]

    def state_arrays(self):
        """Parameters then buffers, in declaration order, for serialization."""
        for i, layer in enumerate(self.layers):
            for name in layer.param_order:
                yield f"{i}.{name}", layer.params[name]
            for name in layer.buffer_order:
                yield f"{i}.buffer.{name}", layer.buffers[name]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {key: arr.copy() for key, arr in self.state_arrays()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for key, arr in self.state_arrays():
            np.copyto(arr, snap[key])

    def descriptor(self) -> list[dict]:
        return [layer.descriptor() for layer in self.layers]

    @classmethod
    def from_descriptor(cls, descriptors: list[dict]) -> "ModelGraph":
        return cls([layer_from_descriptor(d) for d in descriptors])

    def n_parameters(self) -> int:
        return sum(p.size for _, p in self.parameters())


@dataclass(frozen=True)
class CrnnArch:
    """Architecture knobs for :func:`build_crnn`.

    ``pool_factors`` must multiply to ``n_bins // 2`` so the conv block ends
    at (T, 2, filters); leave it empty to derive a plan automatically.
    """

    n_bins: int
    n_channels: int
    n_classes: int
    conv_layers: int = 3
    filters: int = 64
    pool_factors: tuple[int, ...] = ()
    gru_layers: int = 2
    gru_units: int = 64
    dense_layers: int = 1
    dense_units: int = 64
    dropout: float = 0.5


def pool_plan(n_bins: int, conv_layers: int) -> tuple[int, ...]:
    """Factor ``n_bins // 2`` into ``conv_layers`` pooling factors.

    Greedy largest-prime-first assignment to the currently smallest bucket;
    40 bins over 3 layers gives (5, 2, 2) and 1024 over 3 gives (8, 8, 8).
    """
    if conv_layers < 1:
        raise ConfigError(f"need at least one conv layer, got {conv_layers}")
    if n_bins % 2:
        raise ConfigError(f"bin count {n_bins} is odd; pooling cannot end at 2 bins")
    target = n_bins // 2
    primes = []
    rest = target
    p = 2
    while p * p <= rest:
        while rest % p == 0:
            primes.append(p)
            rest //= p
        p += 1
    if rest > 1:
        primes.append(rest)
    buckets = [1] * conv_layers
    for prime in sorted(primes, reverse=True):
        buckets[int(np.argmin(buckets))] *= prime
    if int(np.prod(buckets)) != target:
        raise ConfigError(f"cannot factor {target} into {conv_layers} pooling stages")
    return tuple(sorted(buckets, reverse=True))


def validate_pools(n_bins: int, pool_factors: tuple[int, ...]) -> None:
    b = n_bins
    for f in pool_factors:
        if f < 1 or b % f:
            raise ConfigError(f"pool factors {pool_factors} do not divide {n_bins} bins stagewise")
        b //= f
    if b != 2:
        raise ConfigError(
            f"pool factors {pool_factors} reduce {n_bins} bins to {b}, not to the required 2"
        )


def build_crnn(arch: CrnnArch, rng: np.random.Generator) -> ModelGraph:
    """conv(+bn+pool+dropout) stack -> flatten -> bigru stack -> dense stack
    -> sigmoid head of ``n_classes`` units."""
    pools = arch.pool_factors or pool_plan(arch.n_bins, arch.conv_layers)
    if len(pools) != arch.conv_layers:
        raise ConfigError(
            f"{arch.conv_layers} conv layers need {arch.conv_layers} pool factors, got {pools}"
        )
    validate_pools(arch.n_bins, pools)
    if arch.filters < 1 or arch.gru_units < 1 or (arch.dense_layers and arch.dense_units < 1):
        raise ConfigError("layer widths must be >= 1")
    if not 0.0 <= arch.dropout < 1.0:
        raise ConfigError(f"dropout must be in [0, 1), got {arch.dropout}")
    if arch.gru_layers < 1:
        raise ConfigError("the architecture requires at least one recurrent layer")

    layers: list[Layer] = []
    in_ch = arch.n_channels
    for pool in pools:
        layers.append(Conv2D(in_ch, arch.filters, rng=rng))
        layers.append(BatchNorm(arch.filters))
        layers.append(MaxPoolFreq(pool))
        layers.append(Dropout(arch.dropout))
        in_ch = arch.filters
    layers.append(FlattenFreq())
    width = 2 * arch.filters
    for _ in range(arch.gru_layers):
        layers.append(BiGRU(width, arch.gru_units, rng=rng))
        layers.append(Dropout(arch.dropout))
        width = 2 * arch.gru_units
    for _ in range(arch.dense_layers):
        layers.append(TimeDense(width, arch.dense_units, activation="linear", rng=rng))
        layers.append(Dropout(arch.dropout))
        width = arch.dense_units
    layers.append(TimeDense(width, arch.n_classes, activation="sigmoid", rng=rng))
    return ModelGraph(layers)


def build_baseline_mlp(
    n_classes: int,
    n_mels: int = 40,
    context: int = 5,
    hidden: int = 50,
    dropout_rate: float = 0.2,
    rng: np.random.Generator | None = None,
) -> ModelGraph:
    """Frame-wise dense baseline over stacked context windows.

    Input is (S, T, n_mels*context, 1); two hidden layers, one dropout, then
    the sigmoid head. With the defaults the input width is 200 = 40*5.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    width = n_mels * context
    return ModelGraph(
        [
            FlattenFreq(),
            TimeDense(width, hidden, activation="relu", rng=rng),
            TimeDense(hidden, hidden, activation="relu", rng=rng),
            Dropout(dropout_rate),
            TimeDense(hidden, n_classes, activation="sigmoid", rng=rng),
        ]
    )


def mbe_context_windows(tensor, context: int = 5) -> np.ndarray:
    """Stack ``context`` neighbouring mbe frames per step, edges replicated.

    (F, n_mels, 1) -> (F, n_mels*context, 1), centered windows.
    """
    from ..features import FeatureTensor  # local to avoid import cycle at module load

    if isinstance(tensor, FeatureTensor):
        if tensor.feature_class != "mbe":
            raise ConfigError(f"the baseline takes mbe features, got {tensor.feature_class!r}")
        data = tensor.data
    else:
        data = np.asarray(tensor)
    if data.ndim != 3 or data.shape[2] != 1:
        raise ShapeError(f"expected (F, B, 1) features, got shape {data.shape}")
    f, b, _ = data.shape
    half = context // 2
    idx = np.clip(np.arange(f)[:, None] + np.arange(-half, context - half), 0, f - 1)
    return data[idx, :, 0].reshape(f, context * b, 1)


def save_checkpoint(model: ModelGraph, path, normalizer: Normalizer | None = None) -> None:
    """Checkpoint layout: magic, version, JSON architecture descriptor, raw
    float64 parameter/buffer payload in declaration order, then optional
    normalizer statistics."""
    desc = json.dumps(model.descriptor(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", _CHECKPOINT_VERSION, len(desc)))
        fh.write(desc)
        for _, arr in model.state_arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        if normalizer is None:
            fh.write(struct.pack("<B", 0))
        else:
            fh.write(struct.pack("<B", 1))
            shape = normalizer.mean.shape
            fh.write(struct.pack("<B" + "I" * len(shape), len(shape), *shape))
            fh.write(np.ascontiguousarray(normalizer.mean, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(normalizer.std, dtype="<f8").tobytes())


def load_checkpoint(path, expect_descriptor: list[dict] | None = None):
    """Rebuild (model, normalizer) from a checkpoint file.

    ``expect_descriptor`` (e.g. the architecture a config implies) is
    checked against the stored descriptor and any mismatch is rejected.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint")
    version, desc_len = struct.unpack("<HI", raw[4:10])
    if version != _CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = 10
    try:
        descriptors = json.loads(raw[pos : pos + desc_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt architecture descriptor") from exc
    pos += desc_len
    if expect_descriptor is not None and descriptors != expect_descriptor:
        raise CheckpointError(f"{path}: architecture descriptor does not match the expected one")

    model = ModelGraph.from_descriptor(descriptors)
    for key, arr in model.state_arrays():
        nbytes = arr.size * 8
        chunk = raw[pos : pos + nbytes]
        if len(chunk) < nbytes:
            raise CheckpointError(f"{path}: truncated parameter payload at {key}")
        np.copyto(arr, np.frombuffer(chunk, dtype="<f8").reshape(arr.shape))
        pos += nbytes

    if pos >= len(raw):
        raise CheckpointError(f"{path}: missing normalizer trailer")
    (has_norm,) = struct.unpack("<B", raw[pos : pos + 1])
    pos += 1
    normalizer = None
    if has_norm:
        (ndim,) = struct.unpack("<B", raw[pos : pos + 1])
        pos += 1
        shape = struct.unpack("<" + "I" * ndim, raw[pos : pos + 4 * ndim])
        pos += 4 * ndim
        count = int(np.prod(shape)) if shape else 1
        mean = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
        pos += count * 8
        std = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
        pos += count * 8
        normalizer = Normalizer(mean=mean, std=std)
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    return model, normalizer
