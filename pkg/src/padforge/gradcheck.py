"""Central finite-difference gradient verification for every layer type
and for the end-to-end hinge loss.

Relative error is |analytic - numeric| / max(1, |analytic|, |numeric|),
so tiny gradients are compared absolutely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .model import ModelConfig, build_model, hinge_loss

DEFAULT_EPSILON = 1e-5


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tolerance: float
    passed: bool
    detail: str = ""


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))


def numerical_grad(f, arr, eps=DEFAULT_EPSILON, coords=None):
    """Central differences of scalar f with respect to arr, evaluated at
    the given flat coordinates (all coordinates if None)."""
    flat = arr.reshape(-1)
    if coords is None:
        coords = range(flat.size)
    grad = {}
    for i in coords:
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        grad[i] = (fp - fm) / (2 * eps)
    return grad


def compare_grads(f, arr, analytic, eps=DEFAULT_EPSILON, coords=None):
    """Max relative error between analytic grad and central differences.

    Raises FloatingPointError naming the first non-finite analytic
    coordinate, if any.
    """
    a_flat = analytic.reshape(-1)
    bad = np.flatnonzero(~np.isfinite(a_flat))
    if bad.size:
        raise FloatingPointError(f"non-finite analytic gradient at flat index {bad[0]}")
    numeric = numerical_grad(f, arr, eps, coords)
    return max(relative_error(a_flat[i], n) for i, n in numeric.items())


# ---------------------------------------------------------------------------
# per-layer checks
#
# Each check builds a scalar loss sum(forward(...) * R) for a fixed random
# R, computes the analytic gradient via the layer's backward pass, and
# compares against finite differences over inputs and parameters.

def _check_conv(rng, variant, flip_sign):
    x = rng.standard_normal((1, 2, 5, 5))
    if variant == "standard":
        w = rng.standard_normal((3, 2, 3, 3))
        fwd, bwd = nn.standard_conv2d, nn.standard_conv2d_backward
    elif variant == "depthwise":
        w = rng.standard_normal((2, 3, 3))
        fwd, bwd = nn.depthwise_conv2d, nn.depthwise_conv2d_backward
    else:
        w = rng.standard_normal((3, 2, 1, 1))
        fwd, bwd = nn.pointwise_conv2d, nn.pointwise_conv2d_backward
    kern = nn.ConvKernel(variant, w)
    r = rng.standard_normal(fwd(x, kern).shape)

    def loss():
        return float(np.sum(fwd(x, nn.ConvKernel(variant, w)) * r))

    dx, dw = bwd(x, kern, r)
    if flip_sign:
        dx = -dx
    return max(compare_grads(loss, x, dx), compare_grads(loss, w, dw))


def _check_maxpool(rng, flip_sign):
    x = rng.standard_normal((1, 2, 8, 8))
    r = rng.standard_normal((1, 2, 4, 4))

    def loss():
        return float(np.sum(nn.maxpool2d(x) * r))

    dx = nn.maxpool2d_backward(x, r)
    if flip_sign:
        dx = -dx
    return compare_grads(loss, x, dx)


def _check_batchnorm(rng, flip_sign):
    x = rng.standard_normal((4, 3, 5, 5))
    gamma = rng.standard_normal(3)
    beta = rng.standard_normal(3)
    r = rng.standard_normal(x.shape)

    def loss():
        out, _ = nn.batchnorm2d(x, gamma, beta, np.zeros(3), np.ones(3), train=True)
        return float(np.sum(out * r))

    out, cache = nn.batchnorm2d(x, gamma, beta, np.zeros(3), np.ones(3), train=True)
    dx, dgamma, dbeta = nn.batchnorm2d_backward(r, cache)
    if flip_sign:
        dx = -dx
    return max(compare_grads(loss, x, dx),
               compare_grads(loss, gamma, dgamma),
               compare_grads(loss, beta, dbeta))


def _check_relu(rng, flip_sign):
    # bounded away from 0 so finite differences do not straddle the kink
    x = rng.standard_normal((2, 3, 4, 4))
    x = np.where(np.abs(x) < 0.1, 0.1 * np.sign(x) + (x == 0) * 0.1, x)
    r = rng.standard_normal(x.shape)

    def loss():
        return float(np.sum(nn.relu(x) * r))

    dx = nn.relu_backward(x, r)
    if flip_sign:
        dx = -dx
    return compare_grads(loss, x, dx)


def _check_dense(rng, flip_sign):
    x = rng.standard_normal((3, 8))
    w = rng.standard_normal((8, 4))
    b = rng.standard_normal(4)
    r = rng.standard_normal((3, 4))

    def loss():
        return float(np.sum(nn.dense(x, w, b) * r))

    dx, dw, db = nn.dense_backward(x, w, r)
    if flip_sign:
        dx = -dx
    return max(compare_grads(loss, x, dx), compare_grads(loss, w, dw),
               compare_grads(loss, b, db))


def _check_svc_hinge(rng, flip_sign):
    feats = rng.standard_normal((6, 5))
    w = rng.standard_normal((5, 1))
    b = rng.standard_normal(1)
    y = rng.choice([-1.0, 1.0], size=6)

    def loss():
        scores = nn.dense(feats, w, b)[:, 0]
        return hinge_loss(scores, y, C=1.0)[0]

    scores = nn.dense(feats, w, b)[:, 0]
    _, dscores = hinge_loss(scores, y, C=1.0)
    dx, dw, db = nn.dense_backward(feats, w, dscores[:, None])
    if flip_sign:
        dx = -dx
    return max(compare_grads(loss, feats, dx), compare_grads(loss, w, dw),
               compare_grads(loss, b, db))


LAYER_CHECKS = {
    "standard_conv": lambda rng, f: _check_conv(rng, "standard", f),
    "depthwise_conv": lambda rng, f: _check_conv(rng, "depthwise", f),
    "pointwise_conv": lambda rng, f: _check_conv(rng, "pointwise", f),
    "maxpool": _check_maxpool,
    "batchnorm_train": _check_batchnorm,
    "relu": _check_relu,
    "dense": _check_dense,
    "svc_hinge": _check_svc_hinge,
}


def run_layer_checks(seed=0, tolerance=1e-4, flip_sign_layer=None):
    """Runs every per-layer check; flip_sign_layer injects a wrong-sign
    input gradient into the named check (test hook)."""
    results = []
    for name, fn in LAYER_CHECKS.items():
        rng = np.random.default_rng(seed)
        try:
            err = fn(rng, name == flip_sign_layer)
            results.append(CheckResult(name, err, tolerance, err <= tolerance))
        except FloatingPointError as e:
            results.append(CheckResult(name, float("inf"), tolerance, False, str(e)))
    return results


def end_to_end_check(config=None, seed=0, coords_per_param=4, eps=1e-6):
    """Finite-difference check of the full hinge-loss gradient against the
    network backward pass, sampling a few coordinates per parameter array.

    Returns the max relative error over all sampled coordinates.
    """
    if config is None:
        config = ModelConfig(input_size=64, width_multiplier=0.125)
    rng = np.random.default_rng(seed)
    net = build_model(config, seed=seed + 1)
    # zero-init SVC gives a zero gradient everywhere; perturb it
    net.svc.w[...] = rng.normal(0.0, 0.5, net.svc.w.shape)
    net.svc.b[...] = rng.normal(0.0, 0.5, net.svc.b.shape)
    x = rng.random((2, config.input_channels, config.input_size, config.input_size))
    y = np.array([1.0, -1.0])

    def loss():
        feats = net.forward_features(x, train=True)
        scores = net.svc_score(feats)
        return hinge_loss(scores, y, C=config.svc_C)[0]

    feats = net.forward_features(x, train=True)
    scores = net.svc_score(feats)
    _, dscores = hinge_loss(scores, y, C=config.svc_C)
    net.backward(dscores)
    grads = net.grads()

    worst = 0.0
    for name, arr, _ in net.trainable_params():
        g = grads[name].reshape(-1)
        n = arr.size
        coords = sorted(rng.choice(n, size=min(coords_per_param, n), replace=False).tolist())
        numeric = numerical_grad(loss, arr, eps, coords)
        for i, nv in numeric.items():
            worst = max(worst, relative_error(g[i], nv))
    return worst
