"""Independent brute-force reference implementations used by the tests.

Everything here is deliberately written as plain nested loops over the
mathematical definitions, with no code shared with the package.
"""

import numpy as np


def conv2d_loops(x, w, pad):
    """Six-nested-loop standard convolution, zero padding, stride 1."""
    n, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    ho, wo = h + 2 * pad - k + 1, wd + 2 * pad - k + 1
    out = np.zeros((n, cout, ho, wo))
    for b in range(n):
        for y in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(cin):
                        for p in range(k):
                            for q in range(k):
                                ii, jj = i + p - pad, j + q - pad
                                if 0 <= ii < h and 0 <= jj < wd:
                                    acc += w[y, c, p, q] * x[b, c, ii, jj]
                    out[b, y, i, j] = acc
    return out


def depthwise_loops(x, w, pad):
    """Per-channel 2-D convolution."""
    n, cin, h, wd = x.shape
    _, k, _ = w.shape
    ho, wo = h + 2 * pad - k + 1, wd + 2 * pad - k + 1
    out = np.zeros((n, cin, ho, wo))
    for b in range(n):
        for c in range(cin):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for p in range(k):
                        for q in range(k):
                            ii, jj = i + p - pad, j + q - pad
                            if 0 <= ii < h and 0 <= jj < wd:
                                acc += w[c, p, q] * x[b, c, ii, jj]
                    out[b, c, i, j] = acc
    return out


def pointwise_loops(x, w):
    """Per-pixel channel-mixing matrix multiply; w is (Y, X)."""
    n, cin, h, wd = x.shape
    cout = w.shape[0]
    out = np.zeros((n, cout, h, wd))
    for b in range(n):
        for i in range(h):
            for j in range(wd):
                out[b, :, i, j] = w @ x[b, :, i, j]
    return out


def maxpool_loops(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c, h // 2, w // 2))
    for b in range(n):
        for ch in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    out[b, ch, i, j] = x[b, ch, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max()
    return out


def dense_loops(x, w, b):
    n, d = x.shape
    m = w.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = b[j]
            for kk in range(d):
                acc += x[i, kk] * w[kk, j]
            out[i, j] = acc
    return out


def hinge_loops(scores, labels, c):
    loss = 0.0
    for s, y in zip(scores, labels):
        loss += c * max(0.0, 1.0 - y * s)
    return loss


def det_recount(live_scores, spoof_scores, threshold):
    """Exhaustive recount of error rates at one threshold (live iff > t)."""
    fa = sum(1 for s in spoof_scores if s > threshold)
    fr = sum(1 for s in live_scores if s <= threshold)
    return 100.0 * fa / len(spoof_scores), 100.0 * fr / len(live_scores)
