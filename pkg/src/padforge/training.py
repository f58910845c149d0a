"""Training loop: +/-1 label encoding, affine data augmentation, Adam with
decoupled weight decay, and deterministic per-sample seeding.

Determinism contract: (seed, config, dataset) fully determine the final
parameters and the per-epoch log. Every random draw flows from the config
seed; augmentation uses a per-(seed, epoch, sample_id) stream so results
do not depend on iteration order or worker count.
"""

from __future__ import annotations

import csv
import hashlib
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import metrics as metrics_mod
from .model import LIVE, SPOOF, Network, hinge_loss, score_records


class NumericalError(RuntimeError):
    """Raised when training encounters NaN/Inf losses or gradients."""


@dataclass
class AugmentConfig:
    rotation_max_degrees: float = 15.0
    horizontal_flip_prob: float = 0.5
    shear_max: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.horizontal_flip_prob <= 1.0):
            raise ValueError("horizontal_flip_prob must be in [0,1]")


@dataclass
class TrainConfig:
    learning_rate: float = 0.0001
    weight_decay: float = 0.0004
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    epochs: int = 30
    batch_size: int = 32
    svc_C: float = 1.0
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    decoupled_weight_decay: bool = True
    checkpoint_every: int = 0  # 0 = only final checkpoint

    def __post_init__(self):
        if isinstance(self.augmentation, dict):
            self.augmentation = AugmentConfig(**self.augmentation)
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    train_ace: float
    val_ace: float
    seconds: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "mean_loss", "train_ace", "val_ace", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.mean_loss), repr(r.train_ace),
                            repr(r.val_ace), f"{r.seconds:.3f}"])


def encode_label(label):
    """live -> +1, spoof -> -1."""
    if label == LIVE:
        return 1
    if label == SPOOF:
        return -1
    raise ValueError(f"unknown label {label!r}")


def decode_label(y):
    if y == 1:
        return LIVE
    if y == -1:
        return SPOOF
    raise ValueError(f"unknown encoded label {y!r}")


# ---------------------------------------------------------------------------
# augmentation

def _bilinear_warp(img, inv):
    """Samples img at inv @ (centered output coords); zero fill outside."""
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    yin = inv[0, 0] * ys + inv[0, 1] * xs + cy
    xin = inv[1, 0] * ys + inv[1, 1] * xs + cx
    y0 = np.floor(yin).astype(int)
    x0 = np.floor(xin).astype(int)
    fy, fx = yin - y0, xin - x0
    out = np.zeros_like(img)
    for dy, dx, wgt in ((0, 0, (1 - fy) * (1 - fx)), (0, 1, (1 - fy) * fx),
                        (1, 0, fy * (1 - fx)), (1, 1, fy * fx)):
        yy, xx = y0 + dy, x0 + dx
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        out[ok] += wgt[ok] * img[yy[ok], xx[ok]]
    return out


def rotate(img, degrees):
    """Rotation about the image center, bilinear sampling, zero fill."""
    t = np.deg2rad(degrees)
    inv = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    return _bilinear_warp(img, inv)


def hflip(img):
    return img[:, ::-1].copy()


def shear(img, factor):
    """Horizontal shear about the center (x' = x + factor*y), bilinear, zero fill."""
    inv = np.array([[1.0, 0.0], [-factor, 1.0]])
    return _bilinear_warp(img, inv)


def augment(image, aug: AugmentConfig, rng):
    """Applies rotation, horizontal flip, then shear to one (H,W) image.

    All three draws happen unconditionally so the rng stream shape does
    not depend on the drawn values.
    """
    angle = rng.uniform(-aug.rotation_max_degrees, aug.rotation_max_degrees)
    do_flip = rng.random() < aug.horizontal_flip_prob
    factor = rng.uniform(-aug.shear_max, aug.shear_max)
    out = image
    if angle != 0.0:
        out = rotate(out, angle)
    if do_flip:
        out = hflip(out)
    if factor != 0.0:
        out = shear(out, factor)
    return out


def sample_rng(seed, epoch, sample_id):
    """Deterministic per-sample stream, independent of iteration order."""
    digest = hashlib.blake2s(f"{seed}:{epoch}:{sample_id}".encode()).digest()[:8]
    return np.random.default_rng(int.from_bytes(digest, "little"))


# ---------------------------------------------------------------------------
# Adam

class AdamState:
    def __init__(self):
        self.m = {}
        self.v = {}


def adam_step(param_triples, grads, state: AdamState, t, config: TrainConfig):
    """One Adam update with bias correction over (name, array, decay) triples.

    Weight decay is decoupled (theta -= lr*wd*theta before the update) and
    applies only to triples flagged decay=True; with
    decoupled_weight_decay=False it is added to the gradient instead.
    """
    if t < 1:
        raise ValueError("step index must be >= 1")
    b1, b2, eps, lr = (config.adam_beta1, config.adam_beta2,
                       config.adam_epsilon, config.learning_rate)
    for name, arr, decay in param_triples:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name}")
        if decay and config.weight_decay:
            if config.decoupled_weight_decay:
                arr -= lr * config.weight_decay * arr
            else:
                g = g + config.weight_decay * arr
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(arr)
        v = state.v.get(name)
        if v is None:
            v = state.v[name] = np.zeros_like(arr)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        arr -= lr * mhat / (np.sqrt(vhat) + eps)


# ---------------------------------------------------------------------------
# epoch loop

def _ace(records):
    return metrics_mod.compute_metrics(records).ace


def _eval_scores(net, samples, batch_size=64):
    ids, raws, labels = [], [], []
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        batch = np.stack([s.image for s in chunk])[:, None, :, :]
        feats = net.forward_features(batch, train=False)
        raws.extend(net.svc_score(feats).tolist())
        ids.extend(s.id for s in chunk)
        labels.extend(s.label for s in chunk)
    return score_records(ids, raws, labels)


def evaluate(net: Network, samples):
    """Eval-mode scoring of a sample list -> ScoreRecords."""
    return _eval_scores(net, samples)


def train(net: Network, samples, config: TrainConfig, val_samples=None,
          checkpoint_hook=None):
    """Trains in place; returns (net, TrainLog).

    samples: list of data.Sample with loaded images. checkpoint_hook, if
    given, is called as hook(epoch, net) after the epochs selected by
    config.checkpoint_every.
    """
    if not samples:
        raise ValueError("empty training dataset")
    labels = {s.label for s in samples}
    if labels != {LIVE, SPOOF}:
        raise ValueError(f"training data must contain both classes, got {sorted(labels)}")

    state = AdamState()
    log = TrainLog()
    t = 0
    for epoch in range(1, config.epochs + 1):
        tic = time.perf_counter()
        order = np.random.default_rng((config.seed, epoch)).permutation(len(samples))
        epoch_records = []
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            chunk = [samples[i] for i in idx]
            batch = np.stack([
                augment(s.image, config.augmentation, sample_rng(config.seed, epoch, s.id))
                for s in chunk])[:, None, :, :]
            y = np.array([encode_label(s.label) for s in chunk], dtype=np.float64)

            feats = net.forward_features(batch, train=True)
            raw = net.svc_score(feats)
            loss, dscores = hinge_loss(raw, y, C=config.svc_C)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, "
                                     f"batch {start // config.batch_size}")
            net.backward(dscores)
            t += 1
            adam_step(net.trainable_params(), net.grads(), state, t, config)

            losses.append(loss / len(chunk))
            epoch_records.extend(score_records([s.id for s in chunk], raw,
                                               [s.label for s in chunk]))
        train_ace = _ace(epoch_records)
        val_ace = _ace(_eval_scores(net, val_samples)) if val_samples else float("nan")
        log.records.append(EpochRecord(epoch, float(np.mean(losses)), train_ace,
                                       val_ace, time.perf_counter() - tic))
        if checkpoint_hook and config.checkpoint_every \
                and epoch % config.checkpoint_every == 0:
            checkpoint_hook(epoch, net)
    return net, log
