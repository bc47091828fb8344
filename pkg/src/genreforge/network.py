"""1-d CNN over spectrogram slices with basic, residual or dense conv blocks.

Input slices ``(batch, 128, 128)`` are read as 128 frequency channels over
128 time steps, so every convolution spans the full frequency range of its
input. Layout with the default configuration::

    stage 0  conv k (128 -> 128) + BN + ReLU, pool 4     time 128 -> 32
    stage 1  block k (128 -> 128), pool 4                time 32 -> 8
    stage 2  block k (128 -> 256), pool 2                time 8 -> 4
    stage 3  block k (256 -> 256), pool 1                time 4 -> 4
    stage 4  conv 1 (256 -> 512) + BN + ReLU
    global max over time, dense 1024 + ReLU (feature tap), dropout, dense classes

A stage listed in ``replace_positions`` uses ``block_variant`` instead of
the plain conv block. Stage 0 is the "black box" entry convolution; the
later stages form the "red box".
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .layers import (
    BatchNorm,
    Conv1d,
    Dense,
    Dropout,
    GlobalMaxPool1d,
    Layer,
    MaxPool1d,
    ReLU,
    Sequential,
    concat_channels,
    softmax,
    split_channels,
)
from .spectrogram import N_BANDS, SLICE_FRAMES

__all__ = [
    "BLOCK_VARIANTS",
    "FEATURE_DIM",
    "NetworkConfig",
    "BasicBlock",
    "ResNetBlock",
    "DenseNetBlock",
    "Network",
    "build_network",
    "network_forward",
    "count_parameters",
]

BLOCK_VARIANTS = ("basic", "resnet", "densenet")
FEATURE_DIM = 1024


@dataclass
class NetworkConfig:
    num_classes: int = 8
    kernel_size: int = 4
    stage_channels: tuple = (128, 128, 256, 256, 512)
    pool_sizes: tuple = (4, 4, 2, 1)
    block_variant: str = "basic"
    replace_positions: tuple = (1, 2, 3)
    growth_rate: int = 32
    dropout_rate: float = 0.5
    labels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        self.stage_channels = tuple(int(c) for c in self.stage_channels)
        self.pool_sizes = tuple(int(p) for p in self.pool_sizes)
        self.replace_positions = tuple(sorted({int(p) for p in self.replace_positions}))
        self.labels = tuple(self.labels)

    def validate(self):
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.kernel_size not in (3, 4):
            raise ConfigError(f"kernel_size must be 3 or 4, got {self.kernel_size}")
        if len(self.stage_channels) != 5 or min(self.stage_channels) < 1:
            raise ConfigError(f"stage_channels needs 5 positive widths, got {self.stage_channels}")
        if len(self.pool_sizes) != 4 or min(self.pool_sizes) < 1:
            raise ConfigError(f"pool_sizes needs 4 values >= 1, got {self.pool_sizes}")
        t = SLICE_FRAMES
        for p in self.pool_sizes:
            t //= p
        if t < 1:
            raise ConfigError(f"pool_sizes {self.pool_sizes} shrink a {SLICE_FRAMES}-frame "
                              "slice to nothing")
        if self.block_variant not in BLOCK_VARIANTS:
            raise ConfigError(f"block_variant must be one of {BLOCK_VARIANTS}, "
                              f"got {self.block_variant!r}")
        if any(p not in range(5) for p in self.replace_positions):
            raise ConfigError(f"replace_positions must be within 0..4, got {self.replace_positions}")
        if self.block_variant == "densenet" and self.growth_rate < 1:
            raise ConfigError(f"growth_rate must be >= 1, got {self.growth_rate}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.labels and len(self.labels) != self.num_classes:
            raise ConfigError(f"{len(self.labels)} label names for {self.num_classes} classes")
        return self

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text)).validate()


class BasicBlock(Sequential):
    """conv(k) + BN + ReLU."""

    def __init__(self, in_channels, channels, k, rng, dtype=np.float32, name="basic",
                 input_grad=True):
        self.out_channels = channels
        super().__init__(
            Conv1d(in_channels, channels, k, rng, dtype, f"{name}.conv", input_grad),
            BatchNorm(channels, dtype=dtype, name=f"{name}.bn"),
            ReLU(),
        )


class ResNetBlock(Layer):
    """``ReLU(branch(x) + skip(x))`` with a two-conv branch.

    The skip is the identity when widths match, otherwise a 1x1 projection.
    """

    def __init__(self, in_channels, channels, k, rng, dtype=np.float32, name="resnet",
                 input_grad=True):
        self.out_channels = channels
        self.branch = Sequential(
            Conv1d(in_channels, channels, k, rng, dtype, f"{name}.conv1", input_grad),
            BatchNorm(channels, dtype=dtype, name=f"{name}.bn1"),
            ReLU(),
            Conv1d(channels, channels, k, rng, dtype, f"{name}.conv2"),
            BatchNorm(channels, dtype=dtype, name=f"{name}.bn2"),
        )
        self.projection = None
        if in_channels != channels:
            self.projection = Conv1d(in_channels, channels, 1, rng, dtype, f"{name}.proj", input_grad)
        self.out_relu = ReLU()
        self.input_grad = input_grad

    def children(self):
        kids = [self.branch]
        if self.projection is not None:
            kids.append(self.projection)
        return kids

    def forward(self, x, training=False):
        skip = x if self.projection is None else self.projection.forward(x, training)
        return self.out_relu.forward(self.branch.forward(x, training) + skip, training)

    def backward(self, grad):
        g = self.out_relu.backward(grad)
        dx = self.branch.backward(g)
        dskip = g if self.projection is None else self.projection.backward(g)
        if not self.input_grad:
            return None
        return dx + dskip


class DenseNetBlock(Layer):
    """Two densely connected conv layers followed by a 1x1 transition.

    ``x1 = H1(x0)``, ``x2 = H2([x0, x1])`` with each ``H`` = BN + ReLU + conv(k)
    producing ``growth`` channels; the concatenation ``[x0, x1, x2]`` of
    ``c + 2 * growth`` channels is compressed by conv(1) + BN + ReLU.
    """

    def __init__(self, in_channels, channels, k, rng, growth=32, dtype=np.float32,
                 name="densenet", input_grad=True):
        if growth < 1:
            raise ConfigError(f"growth must be >= 1, got {growth}")
        self.in_channels = in_channels
        self.growth = growth
        self.out_channels = channels
        self.pre_transition_channels = in_channels + 2 * growth
        self.h1 = Sequential(
            BatchNorm(in_channels, dtype=dtype, name=f"{name}.bn1"),
            ReLU(),
            Conv1d(in_channels, growth, k, rng, dtype, f"{name}.conv1"),
        )
        self.h2 = Sequential(
            BatchNorm(in_channels + growth, dtype=dtype, name=f"{name}.bn2"),
            ReLU(),
            Conv1d(in_channels + growth, growth, k, rng, dtype, f"{name}.conv2"),
        )
        self.transition = Sequential(
            Conv1d(self.pre_transition_channels, channels, 1, rng, dtype, f"{name}.transition"),
            BatchNorm(channels, dtype=dtype, name=f"{name}.bn3"),
            ReLU(),
        )
        self.input_grad = input_grad

    def children(self):
        return [self.h1, self.h2, self.transition]

    def dense_features(self, x, training=False):
        x1 = self.h1.forward(x, training)
        x01 = concat_channels(x, x1)
        x2 = self.h2.forward(x01, training)
        return concat_channels(x01, x2)

    def forward(self, x, training=False):
        return self.transition.forward(self.dense_features(x, training), training)

    def backward(self, grad):
        g = self.transition.backward(grad)
        g01, g2 = split_channels(g, [self.in_channels + self.growth, self.growth])
        g01 = g01 + self.h2.backward(g2)
        g0, g1 = split_channels(g01, [self.in_channels, self.growth])
        return g0 + self.h1.backward(g1)


def _make_block(variant, in_channels, channels, k, rng, cfg, dtype, name, input_grad):
    if variant == "basic":
        return BasicBlock(in_channels, channels, k, rng, dtype, name, input_grad)
    if variant == "resnet":
        return ResNetBlock(in_channels, channels, k, rng, dtype, name, input_grad)
    return DenseNetBlock(in_channels, channels, k, rng, cfg.growth_rate, dtype, name, input_grad)


class Network(Layer):
    """Full classifier. ``forward`` returns logits; ``features`` holds the 1024-d tap."""

    def __init__(self, cfg, rng, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        ch = cfg.stage_channels
        widths = (N_BANDS,) + ch
        self.stages = []
        for i in range(5):
            variant = cfg.block_variant if i in cfg.replace_positions else "basic"
            # stage 4 is the 1x1 conv standing in for a fully connected layer
            k = 1 if i == 4 else cfg.kernel_size
            block = _make_block(variant, widths[i], widths[i + 1], k, rng, cfg, self.dtype,
                                f"stage{i}.{variant}", input_grad=(i > 0))
            layers = [block]
            if i < 4:
                layers.append(MaxPool1d(cfg.pool_sizes[i]))
            self.stages.append(Sequential(*layers))
        self.global_pool = GlobalMaxPool1d()
        self.fc = Dense(ch[4], FEATURE_DIM, rng, self.dtype, "fc1024")
        self.fc_relu = ReLU()
        self.dropout = Dropout(cfg.dropout_rate, np.random.default_rng(rng.integers(2**63)))
        self.out = Dense(FEATURE_DIM, cfg.num_classes, rng, self.dtype, "logits")
        self.features = None

    def children(self):
        return self.stages + [self.fc, self.out]

    def reseed_dropout(self, seed):
        self.dropout.rng = np.random.default_rng(seed)

    def forward(self, x, training=False):
        if x.ndim != 3 or x.shape[1] != N_BANDS:
            raise ShapeError(f"network expects (batch, {N_BANDS}, time), got {x.shape}")
        x = np.asarray(x, dtype=self.dtype)
        for stage in self.stages:
            x = stage.forward(x, training)
        x = self.global_pool.forward(x, training)
        x = self.fc_relu.forward(self.fc.forward(x, training), training)
        self.features = x
        x = self.dropout.forward(x, training)
        return self.out.forward(x, training)

    def backward(self, grad):
        grad = self.out.backward(grad)
        grad = self.dropout.backward(grad)
        grad = self.fc.backward(self.fc_relu.backward(grad))
        grad = self.global_pool.backward(grad)
        for stage in reversed(self.stages):
            grad = stage.backward(grad)
        return grad

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def predict(self, x, batch_size=128):
        """Inference-mode ``(logits, softmax, features)`` over ``x`` in chunks."""
        logits, feats = [], []
        for i in range(0, x.shape[0], batch_size):
            logits.append(self.forward(x[i:i + batch_size], training=False))
            feats.append(self.features)
        logits = np.concatenate(logits)
        return logits, softmax(logits), np.concatenate(feats)

    def state_arrays(self):
        """Parameters then batch-norm running stats, in build order."""
        return [p.value for p in self.parameters()] + self.buffers()

    def load_state_arrays(self, arrays):
        mine = self.state_arrays()
        if len(arrays) != len(mine):
            raise ShapeError(f"state has {len(arrays)} arrays, network needs {len(mine)}")
        for dst, src in zip(mine, arrays):
            if dst.shape != src.shape:
                raise ShapeError(f"state array shape {src.shape} != {dst.shape}")
            dst[...] = src


def build_network(cfg, rng=None, dtype=np.float32):
    if rng is None:
        rng = np.random.default_rng(0)
    elif isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    return Network(cfg, rng, dtype)


def network_forward(net, batch, training=False):
    logits = net.forward(batch, training)
    return logits, net.features


def count_parameters(layer):
    return int(sum(p.value.size for p in layer.parameters()))
