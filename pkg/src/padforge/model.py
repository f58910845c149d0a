"""Network assembly: depthwise-separable feature extractor, 256-wide
feature head, and a linear SVC scoring layer trained with hinge loss.

The extractor is five downsampling blocks of [depthwise 3x3 + BN + ReLU,
pointwise + BN + ReLU] over the channel ladder 32..1024 (scaled by the
width multiplier), preceded by one separable stem unit and followed by
global average pooling and two ReLU dense layers down to 256 features.
The SVC layer scores W.T @ features + b; live iff the score is positive.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .nn import ShapeError

LIVE, SPOOF = "live", "spoof"

CHANNEL_LADDER = (32, 64, 128, 256, 512, 1024)
FEATURE_WIDTH = 256
HEAD_HIDDEN = 512
N_POOLS = 5

CHECKPOINT_MAGIC = b"PFCKPT1\n"


class ConfigError(ValueError):
    """Raised for invalid model or run configuration."""


@dataclass
class ModelConfig:
    input_size: int = 224
    input_channels: int = 1
    width_multiplier: float = 1.0
    svc_C: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.width_multiplier <= 1.0):
            raise ConfigError(f"width_multiplier must be in (0,1], got {self.width_multiplier}")
        if self.svc_C <= 0:
            raise ConfigError("svc_C must be positive")
        # Five pooling halvings; odd extents are cropped to even before
        # pooling, so anything that keeps every stage >= 2 is accepted.
        if self.input_size < 2 ** N_POOLS:
            raise ConfigError(
                f"input_size {self.input_size} too small for {N_POOLS} pooling halvings "
                f"(needs at least {2 ** N_POOLS})")

    def channels(self):
        return [max(1, round(c * self.width_multiplier)) for c in CHANNEL_LADDER]

    def to_dict(self):
        return {"input_size": self.input_size, "input_channels": self.input_channels,
                "width_multiplier": self.width_multiplier, "svc_C": self.svc_C}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def toy_config():
    return ModelConfig(input_size=56, width_multiplier=0.25)


# ---------------------------------------------------------------------------
# layers

class _Layer:
    trainable = ()

    def params(self):
        """Yields (name, array, decay) where decay marks weight-decay targets."""
        return []

    def forward(self, x, train):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


class DepthwiseConv(_Layer):
    def __init__(self, name, channels, ksize=3):
        self.name = name
        self.w = np.zeros((channels, ksize, ksize))
        self.grads = {}

    def params(self):
        return [(f"{self.name}.w", self.w, True)]

    def forward(self, x, train):
        self._x = x
        return nn.depthwise_conv2d(x, nn.ConvKernel("depthwise", self.w))

    def backward(self, dout):
        dx, dw = nn.depthwise_conv2d_backward(self._x, nn.ConvKernel("depthwise", self.w), dout)
        self.grads = {f"{self.name}.w": dw}
        return dx


class PointwiseConv(_Layer):
    def __init__(self, name, c_in, c_out):
        self.name = name
        self.w = np.zeros((c_out, c_in, 1, 1))
        self.grads = {}

    def params(self):
        return [(f"{self.name}.w", self.w, True)]

    def forward(self, x, train):
        self._x = x
        return nn.pointwise_conv2d(x, nn.ConvKernel("pointwise", self.w))

    def backward(self, dout):
        dx, dw = nn.pointwise_conv2d_backward(self._x, nn.ConvKernel("pointwise", self.w), dout)
        self.grads = {f"{self.name}.w": dw}
        return dx


class BatchNorm(_Layer):
    def __init__(self, name, channels):
        self.name = name
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.grads = {}

    def params(self):
        return [(f"{self.name}.gamma", self.gamma, False),
                (f"{self.name}.beta", self.beta, False),
                (f"{self.name}.running_mean", self.running_mean, False),
                (f"{self.name}.running_var", self.running_var, False)]

    def forward(self, x, train):
        out, self._cache = nn.batchnorm2d(x, self.gamma, self.beta,
                                          self.running_mean, self.running_var, train)
        return out

    def backward(self, dout):
        dx, dgamma, dbeta = nn.batchnorm2d_backward(dout, self._cache)
        self.grads = {f"{self.name}.gamma": dgamma, f"{self.name}.beta": dbeta}
        return dx


class ReLU(_Layer):
    def forward(self, x, train):
        self._x = x
        return nn.relu(x)

    def backward(self, dout):
        return nn.relu_backward(self._x, dout)


class MaxPool(_Layer):
    """2x2 stride-2 pool; odd extents are cropped to even first so toy
    input sizes like 56 survive all five halvings."""

    def forward(self, x, train):
        h, w = x.shape[2], x.shape[3]
        self._in_shape = (h, w)
        self._crop = (h - h % 2, w - w % 2)
        self._x = x[:, :, :self._crop[0], :self._crop[1]]
        return nn.maxpool2d(self._x)

    def backward(self, dout):
        dxc = nn.maxpool2d_backward(self._x, dout)
        h, w = self._in_shape
        if self._crop == (h, w):
            return dxc
        dx = np.zeros((dout.shape[0], dout.shape[1], h, w))
        dx[:, :, :self._crop[0], :self._crop[1]] = dxc
        return dx


class GlobalAvgPool(_Layer):
    def forward(self, x, train):
        self._x = x
        return nn.global_avg_pool(x)

    def backward(self, dout):
        return nn.global_avg_pool_backward(self._x, dout)


class Dense(_Layer):
    def __init__(self, name, d_in, d_out):
        self.name = name
        self.w = np.zeros((d_in, d_out))
        self.b = np.zeros(d_out)
        self.grads = {}

    def params(self):
        return [(f"{self.name}.w", self.w, True), (f"{self.name}.b", self.b, False)]

    def forward(self, x, train):
        self._x = x
        return nn.dense(x, self.w, self.b)

    def backward(self, dout):
        dx, dw, db = nn.dense_backward(self._x, self.w, dout)
        self.grads = {f"{self.name}.w": dw, f"{self.name}.b": db}
        return dx


# ---------------------------------------------------------------------------
# network

class Network:
    """Feature extractor + head + SVC layer with explicit backward."""

    def __init__(self, config: ModelConfig):
        self.config = config
        ch = config.channels()
        layers = []

        def sep_unit(tag, c_in, c_out):
            layers.extend([
                DepthwiseConv(f"{tag}.dw", c_in),
                BatchNorm(f"{tag}.dw_bn", c_in),
                ReLU(),
                PointwiseConv(f"{tag}.pw", c_in, c_out),
                BatchNorm(f"{tag}.pw_bn", c_out),
                ReLU(),
            ])

        sep_unit("stem", config.input_channels, ch[0])
        for i in range(N_POOLS):
            sep_unit(f"block{i + 1}", ch[i], ch[i + 1])
            layers.append(MaxPool())
        layers.append(GlobalAvgPool())
        layers.append(Dense("head.fc1", ch[N_POOLS], HEAD_HIDDEN))
        layers.append(ReLU())
        layers.append(Dense("head.fc2", HEAD_HIDDEN, FEATURE_WIDTH))
        layers.append(ReLU())
        self.feature_layers = layers
        self.svc = Dense("svc", FEATURE_WIDTH, 1)

    # -- parameter access ---------------------------------------------------

    def params(self):
        """Ordered name -> array view of every stored array (incl. BN stats)."""
        out = OrderedDict()
        for layer in self.feature_layers + [self.svc]:
            for name, arr, _ in layer.params():
                if name in out:
                    raise ValueError(f"duplicate parameter name {name}")
                out[name] = arr
        return out

    def trainable_params(self):
        """(name, array, decay) triples, excluding BN running stats."""
        out = []
        for layer in self.feature_layers + [self.svc]:
            for name, arr, decay in layer.params():
                if name.endswith((".running_mean", ".running_var")):
                    continue
                out.append((name, arr, decay))
        return out

    def grads(self):
        out = {}
        for layer in self.feature_layers + [self.svc]:
            out.update(getattr(layer, "grads", {}))
        return out

    # -- forward / backward -------------------------------------------------

    def forward_features(self, batch, train=False):
        """Runs the extractor and head; output is (N, 256) features."""
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.config.input_channels \
                or x.shape[2] != self.config.input_size or x.shape[3] != self.config.input_size:
            raise ShapeError(
                f"expected (N,{self.config.input_channels},{self.config.input_size},"
                f"{self.config.input_size}) batch, got {x.shape}")
        for layer in self.feature_layers:
            x = layer.forward(x, train)
        return x

    def svc_score(self, features):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != FEATURE_WIDTH:
            raise ShapeError(f"expected (N,{FEATURE_WIDTH}) features, got {features.shape}")
        return self.svc.forward(features, train=False)[:, 0]

    def backward(self, dscores):
        """Backprop from d(loss)/d(score) through SVC, head and blocks.

        Must follow a forward_features + svc_score pass on the same batch.
        Populates per-layer grads; returns d(loss)/d(input batch).
        """
        d = self.svc.backward(np.asarray(dscores)[:, None])
        for layer in reversed(self.feature_layers):
            d = layer.backward(d)
        return d


def build_model(config: ModelConfig, seed: int) -> Network:
    """Deterministic init: He-style normal(0, sqrt(2/fan_in)) for conv and
    dense weights, BN gamma=1/beta=0, SVC weight and bias zero."""
    net = Network(config)
    rng = np.random.default_rng(seed)
    for layer in net.feature_layers:
        if isinstance(layer, DepthwiseConv):
            fan_in = layer.w.shape[1] * layer.w.shape[2]  # one filter per channel
            layer.w[...] = rng.normal(0.0, np.sqrt(2.0 / fan_in), layer.w.shape)
        elif isinstance(layer, PointwiseConv):
            fan_in = layer.w.shape[1]
            layer.w[...] = rng.normal(0.0, np.sqrt(2.0 / fan_in), layer.w.shape)
        elif isinstance(layer, Dense):
            fan_in = layer.w.shape[0]
            layer.w[...] = rng.normal(0.0, np.sqrt(2.0 / fan_in), layer.w.shape)
    return net


# ---------------------------------------------------------------------------
# scoring

def hinge_loss(scores, labels, C):
    """Hinge loss C * sum(max(0, 1 - y*s)) with labels in {-1,+1}.

    Returns (loss, dloss/dscore). The subgradient at the margin boundary
    (y*s == 1) is 0.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if C <= 0:
        raise ValueError("C must be positive")
    margin = labels * scores
    loss = C * np.sum(np.maximum(0.0, 1.0 - margin))
    dscores = np.where(margin < 1.0, -C * labels, 0.0)
    return loss, dscores


def classify(raw_score):
    """live iff score > 0; a score of exactly 0 rejects as spoof."""
    if not np.isfinite(raw_score):
        raise ValueError(f"non-finite score {raw_score}")
    return LIVE if raw_score > 0 else SPOOF


def normalize_scores(raw):
    """Min-max normalization onto [0,1]; a constant set maps to all 0.5."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0:
        raise ValueError("empty score list")
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.full(raw.shape, 0.5)
    return (raw - lo) / (hi - lo)


@dataclass
class ScoreRecord:
    sample_id: str
    raw_score: float
    normalized_score: float
    predicted_label: str
    true_label: str


def score_records(ids, raw_scores, true_labels):
    raw_scores = np.asarray(raw_scores, dtype=np.float64)
    norm = normalize_scores(raw_scores)
    return [ScoreRecord(i, float(s), float(ns), classify(s), t)
            for i, s, ns, t in zip(ids, raw_scores, norm, true_labels)]


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(net: Network, path):
    """Versioned binary container: JSON header (config + name/shape table)
    followed by little-endian float64 payloads in header order."""
    params = net.params()
    header = {
        "format_version": 1,
        "config": net.config.to_dict(),
        "params": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<Q", len(hbytes)))
        f.write(hbytes)
        for arr in params.values():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Network:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        if header["format_version"] != 1:
            raise ValueError(f"unsupported checkpoint version {header['format_version']}")
        net = Network(ModelConfig.from_dict(header["config"]))
        params = net.params()
        for rec in header["params"]:
            arr = params[rec["name"]]
            if list(arr.shape) != rec["shape"]:
                raise ValueError(f"shape mismatch for {rec['name']}: "
                                 f"{rec['shape']} vs {list(arr.shape)}")
            payload = f.read(arr.size * 8)
            if len(payload) != arr.size * 8:
                raise ValueError(f"truncated checkpoint at {rec['name']}")
            arr[...] = np.frombuffer(payload, dtype="<f8").reshape(arr.shape)
    return net
