"""Network layers with exact forward/backward passes in double precision.

Array conventions: the convolutional block works on (S, T, B, F) volumes
(batch, time, frequency bins, feature maps); the recurrent and dense block
works on (S, T, D). Every layer caches what its backward pass needs during
forward, so forward/backward pairs must not interleave across calls.
"""

from __future__ import annotations

import numpy as np

from ..errors import RangeError, ShapeError, StateError


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# sigmoid outputs are clamped into this interval so the cross-entropy and
# its gradient stay finite at saturation
SIGMOID_CLAMP = 1e-7


def uniform_init(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


class Layer:
    """Base: subclasses fill ``params``/``grads`` dicts and declare
    ``param_order`` (and ``buffer_order`` for non-trained state)."""

    param_order: tuple[str, ...] = ()
    buffer_order: tuple[str, ...] = ()

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    def zero_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}


class Conv2D(Layer):
    """3x3 same-padding cross-correlation over (time, frequency).

    (S, T, B, Cin) -> (S, T, B, filters). Bias-free: every architecture here
    follows a conv with batch norm, whose beta supplies the shift.
    """

    param_order = ("kernels",)

    def __init__(self, in_channels: int, filters: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.in_channels = in_channels
        self.filters = filters
        fan_in = 9 * in_channels
        fan_out = 9 * filters
        if rng is None:
            kernels = np.zeros((filters, 3, 3, in_channels))
        else:
            kernels = uniform_init(rng, (filters, 3, 3, in_channels), fan_in, fan_out)
        self.params = {"kernels": kernels}
        self._windows = None

    def forward(self, x, training=False, rng=None):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ShapeError(
                f"conv2d expects (S, T, B, {self.in_channels}), got shape {x.shape}"
            )
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
        self._windows = win
        return np.einsum("stbcij,nijc->stbn", win, self.params["kernels"], optimize=True)

    def backward(self, dout):
        if self._windows is None:
            raise StateError("conv2d backward before forward")
        k = self.params["kernels"]
        self.grads["kernels"] = np.einsum(
            "stbcij,stbn->nijc", self._windows, dout, optimize=True
        )
        dp = np.pad(dout, ((0, 0), (1, 1), (1, 1), (0, 0)))
        dwin = np.lib.stride_tricks.sliding_window_view(dp, (3, 3), axis=(1, 2))
        k_flipped = k[:, ::-1, ::-1, :]
        return np.einsum("stbnij,nijc->stbc", dwin, k_flipped, optimize=True)

    def descriptor(self):
        return {"type": "conv2d", "in_channels": self.in_channels, "filters": self.filters}


class BatchNorm(Layer):
    """Per-feature-map normalization over all leading axes.

    Training mode normalizes with batch statistics and folds them into the
    running estimates (momentum 0.9); inference normalizes with the running
    estimates and fails if none exist yet.
    """

    param_order = ("gamma", "beta")
    buffer_order = ("running_mean", "running_var", "updates")

    def __init__(self, n_features: int, eps: float = 1e-5, momentum: float = 0.9):
        super().__init__()
        self.n_features = n_features
        self.eps = eps
        self.momentum = momentum
        self.params = {"gamma": np.ones(n_features), "beta": np.zeros(n_features)}
        self.buffers = {
            "running_mean": np.zeros(n_features),
            "running_var": np.ones(n_features),
            "updates": np.zeros(1),
        }
        self._cache = None

    def forward(self, x, training=False, rng=None):
        if x.shape[-1] != self.n_features:
            raise ShapeError(f"batch norm expects {self.n_features} feature maps, got {x.shape[-1]}")
        axes = tuple(range(x.ndim - 1))
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1 - m) * mean
            self.buffers["running_var"] = m * self.buffers["running_var"] + (1 - m) * var
            self.buffers["updates"] = self.buffers["updates"] + 1
        else:
            if self.buffers["updates"][0] == 0:
                raise StateError("batch norm inference before any training update")
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean) * inv_std
        if training:
            self._cache = (x_hat, inv_std, axes)
        return self.params["gamma"] * x_hat + self.params["beta"]

    def backward(self, dout):
        if self._cache is None:
            raise StateError("batch norm backward requires a training-mode forward")
        x_hat, inv_std, axes = self._cache
        self.grads["gamma"] = np.sum(dout * x_hat, axis=axes)
        self.grads["beta"] = np.sum(dout, axis=axes)
        dxhat = dout * self.params["gamma"]
        return inv_std * (
            dxhat - dxhat.mean(axis=axes) - x_hat * (dxhat * x_hat).mean(axis=axes)
        )

    def descriptor(self):
        return {
            "type": "batch_norm",
            "n_features": self.n_features,
            "eps": self.eps,
            "momentum": self.momentum,
        }


class MaxPoolFreq(Layer):
    """Max pooling on the frequency axis only; time resolution is preserved.

    (S, T, B, F) -> (S, T, B//factor, F); ties go to the lowest bin index and
    the backward pass routes each gradient to its argmax.
    """

    def __init__(self, factor: int):
        super().__init__()
        if factor < 1:
            raise RangeError(f"pool factor must be >= 1, got {factor}")
        self.factor = factor
        self._cache = None

    def forward(self, x, training=False, rng=None):
        s, t, b, f = x.shape
        if b % self.factor:
            raise ShapeError(f"pool factor {self.factor} does not divide {b} bins")
        m = x.reshape(s, t, b // self.factor, self.factor, f)
        arg = m.argmax(axis=3)
        self._cache = (arg, x.shape)
        return np.take_along_axis(m, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]

    def backward(self, dout):
        if self._cache is None:
            raise StateError("max pool backward before forward")
        arg, shape = self._cache
        s, t, b, f = shape
        dm = np.zeros((s, t, b // self.factor, self.factor, f))
        np.put_along_axis(dm, arg[:, :, :, None, :], dout[:, :, :, None, :], axis=3)
        return dm.reshape(shape)

    def descriptor(self):
        return {"type": "max_pool_freq", "factor": self.factor}


class Dropout(Layer):
    """Inverted dropout: identity at inference, mask/keep scaling in training."""

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise RangeError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise StateError("dropout in training mode needs the run's generator")
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) >= self.rate) / keep
        return x * self._mask

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask

    def descriptor(self):
        return {"type": "dropout", "rate": self.rate}


class FlattenFreq(Layer):
    """(S, T, B, F) -> (S, T, B*F): joins the conv block to the recurrent one."""

    def __init__(self):
        super().__init__()
        self._shape = None

    def forward(self, x, training=False, rng=None):
        if x.ndim != 4:
            raise ShapeError(f"flatten expects a 4-D volume, got shape {x.shape}")
        self._shape = x.shape
        s, t, b, f = x.shape
        return x.reshape(s, t, b * f)

    def backward(self, dout):
        return dout.reshape(self._shape)

    def descriptor(self):
        return {"type": "flatten_freq"}


class BiGRU(Layer):
    """Bi-directional GRU, (S, T, D) -> (S, T, 2U).

    Cell (per direction, independent parameters):
        z = sig(x Wz + h Uz + bz)
        r = sig(x Wr + h Ur + br)
        c = tanh(x Wc + (r*h) Uc + bc)
        h' = (1 - z)*h + z*c
    The backward direction runs over reversed time; outputs are concatenated
    on the feature axis. Backward computes full BPTT gradients.
    """

    param_order = tuple(
        f"{d}_{n}" for d in ("fwd", "bwd") for n in ("Wz", "Wr", "Wc", "Uz", "Ur", "Uc", "bz", "br", "bc")
    )

    def __init__(self, in_dim: int, units: int, rng: np.random.Generator | None = None):
        super().__init__()
        if units < 1:
            raise RangeError(f"GRU units must be >= 1, got {units}")
        self.in_dim = in_dim
        self.units = units
        self.params = {}
        for d in ("fwd", "bwd"):
            for n in ("Wz", "Wr", "Wc"):
                self.params[f"{d}_{n}"] = (
                    uniform_init(rng, (in_dim, units), in_dim, units)
                    if rng is not None
                    else np.zeros((in_dim, units))
                )
            for n in ("Uz", "Ur", "Uc"):
                self.params[f"{d}_{n}"] = (
                    uniform_init(rng, (units, units), units, units)
                    if rng is not None
                    else np.zeros((units, units))
                )
            for n in ("bz", "br", "bc"):
                self.params[f"{d}_{n}"] = np.zeros(units)
        self._cache = None

    def _direction(self, x, d):
        p = self.params
        s, t, _ = x.shape
        u = self.units
        az_x = x @ p[f"{d}_Wz"] + p[f"{d}_bz"]
        ar_x = x @ p[f"{d}_Wr"] + p[f"{d}_br"]
        ac_x = x @ p[f"{d}_Wc"] + p[f"{d}_bc"]
        h = np.zeros((s, u))
        hs = np.zeros((s, t, u))
        steps = []
        for i in range(t):
            z = sigmoid(az_x[:, i] + h @ p[f"{d}_Uz"])
            r = sigmoid(ar_x[:, i] + h @ p[f"{d}_Ur"])
            rh = r * h
            c = np.tanh(ac_x[:, i] + rh @ p[f"{d}_Uc"])
            steps.append((h, z, r, c, rh))
            h = (1.0 - z) * h + z * c
            hs[:, i] = h
        return hs, steps

    def _direction_backward(self, x, dhs, steps, d):
        p = self.params
        s, t, _ = x.shape
        g = {n: np.zeros_like(p[f"{d}_{n}"]) for n in ("Wz", "Wr", "Wc", "Uz", "Ur", "Uc", "bz", "br", "bc")}
        dx = np.zeros_like(x)
        dh = np.zeros((s, self.units))
        for i in reversed(range(t)):
            h_prev, z, r, c, rh = steps[i]
            dh_total = dhs[:, i] + dh
            dz = dh_total * (c - h_prev)
            dc = dh_total * z
            dh = dh_total * (1.0 - z)
            dac = dc * (1.0 - c * c)
            drh = dac @ p[f"{d}_Uc"].T
            dh += drh * r
            dar = (drh * h_prev) * r * (1.0 - r)
            daz = dz * z * (1.0 - z)
            dh += daz @ p[f"{d}_Uz"].T + dar @ p[f"{d}_Ur"].T
            dx[:, i] = daz @ p[f"{d}_Wz"].T + dar @ p[f"{d}_Wr"].T + dac @ p[f"{d}_Wc"].T
            xt = x[:, i]
            g["Wz"] += xt.T @ daz
            g["Wr"] += xt.T @ dar
            g["Wc"] += xt.T @ dac
            g["Uz"] += h_prev.T @ daz
            g["Ur"] += h_prev.T @ dar
            g["Uc"] += rh.T @ dac
            g["bz"] += daz.sum(axis=0)
            g["br"] += dar.sum(axis=0)
            g["bc"] += dac.sum(axis=0)
        for n, v in g.items():
            self.grads[f"{d}_{n}"] = v
        return dx

    def forward(self, x, training=False, rng=None):
        if x.ndim != 3 or x.shape[2] != self.in_dim:
            raise ShapeError(f"bigru expects (S, T, {self.in_dim}), got shape {x.shape}")
        x_rev = x[:, ::-1]
        hs_f, steps_f = self._direction(x, "fwd")
        hs_b, steps_b = self._direction(x_rev, "bwd")
        self._cache = (x, x_rev, steps_f, steps_b)
        return np.concatenate((hs_f, hs_b[:, ::-1]), axis=2)

    def backward(self, dout):
        if self._cache is None:
            raise StateError("bigru backward before forward")
        x, x_rev, steps_f, steps_b = self._cache
        u = self.units
        dx_f = self._direction_backward(x, dout[:, :, :u], steps_f, "fwd")
        dx_b = self._direction_backward(x_rev, dout[:, ::-1, u:], steps_b, "bwd")
        return dx_f + dx_b[:, ::-1]

    def descriptor(self):
        return {"type": "bigru", "in_dim": self.in_dim, "units": self.units}


ACTIVATIONS = ("linear", "relu", "tanh", "sigmoid")


class TimeDense(Layer):
    """Shared dense map applied to every frame: out[t] = act(in[t] @ W + b)."""

    param_order = ("W", "b")

    def __init__(self, in_dim: int, units: int, activation: str = "linear",
                 rng: np.random.Generator | None = None):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise RangeError(f"unknown activation {activation!r}")
        self.in_dim = in_dim
        self.units = units
        self.activation = activation
        w = (
            uniform_init(rng, (in_dim, units), in_dim, units)
            if rng is not None
            else np.zeros((in_dim, units))
        )
        self.params = {"W": w, "b": np.zeros(units)}
        self._cache = None

    def forward(self, x, training=False, rng=None):
        if x.ndim != 3 or x.shape[2] != self.in_dim:
            raise ShapeError(f"time dense expects (S, T, {self.in_dim}), got shape {x.shape}")
        z = x @ self.params["W"] + self.params["b"]
        if self.activation == "linear":
            out = z
            act_cache = None
        elif self.activation == "relu":
            out = np.maximum(z, 0.0)
            act_cache = z > 0
        elif self.activation == "tanh":
            out = np.tanh(z)
            act_cache = out
        else:  # sigmoid, clamped so downstream cross-entropy stays finite
            out = np.clip(sigmoid(z), SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP)
            act_cache = out
        self._cache = (x, act_cache)
        return out

    def backward(self, dout):
        if self._cache is None:
            raise StateError("time dense backward before forward")
        x, act_cache = self._cache
        if self.activation == "linear":
            dz = dout
        elif self.activation == "relu":
            dz = dout * act_cache
        elif self.activation == "tanh":
            dz = dout * (1.0 - act_cache * act_cache)
        else:
            dz = dout * act_cache * (1.0 - act_cache)
        d = self.in_dim
        x2 = x.reshape(-1, d)
        dz2 = dz.reshape(-1, self.units)
        self.grads["W"] = x2.T @ dz2
        self.grads["b"] = dz2.sum(axis=0)
        return dz @ self.params["W"].T

    def descriptor(self):
        return {
            "type": "time_dense",
            "in_dim": self.in_dim,
            "units": self.units,
            "activation": self.activation,
        }


LAYER_TYPES = {
    "conv2d": Conv2D,
    "batch_norm": BatchNorm,
    "max_pool_freq": MaxPoolFreq,
    "dropout": Dropout,
    "flatten_freq": FlattenFreq,
    "bigru": BiGRU,
    "time_dense": TimeDense,
}


def layer_from_descriptor(desc: dict) -> Layer:
    kind = desc.get("type")
    if kind not in LAYER_TYPES:
        raise ShapeError(f"unknown layer type {kind!r}")
    kwargs = {k: v for k, v in desc.items() if k != "type"}
    return LAYER_TYPES[kind](**kwargs)
