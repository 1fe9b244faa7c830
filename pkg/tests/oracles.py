"""Independent reference implementations used only by the tests.

Written deliberately in the most direct form (explicit loops, dense
matrices, exhaustive search) and sharing no code with the package.
"""

from __future__ import annotations

import math

import numpy as np


def brute_force_dtw(dist: np.ndarray):
    """Minimum cost and every optimal path over all monotone (1,0)/(0,1)/(1,1) paths."""
    ns, nt = dist.shape
    best = [math.inf, []]

    def walk(i, j, cost, path):
        cost += dist[i, j]
        path = path + [(i, j)]
        if cost > best[0] + 1e-12:
            return
        if i == ns - 1 and j == nt - 1:
            if cost < best[0] - 1e-12:
                best[0], best[1] = cost, [path]
            else:
                best[1].append(path)
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            if i + di < ns and j + dj < nt:
                walk(i + di, j + dj, cost, path)

    walk(0, 0, 0.0, [])
    return best[0], best[1]


def euclid_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            out[i, j] = math.sqrt(sum((a[i, d] - b[j, d]) ** 2 for d in range(1, a.shape[1])))
    return out


def mcd_loop(a: np.ndarray, b: np.ndarray, pairs) -> float:
    total = 0.0
    for i, j in pairs:
        s = 0.0
        for d in range(1, a.shape[1]):
            s += (a[i, d] - b[j, d]) ** 2
        total += 10.0 / math.log(10.0) * math.sqrt(2.0 * s)
    return total / len(pairs)


def delta_loop(x: np.ndarray) -> np.ndarray:
    T = x.shape[0]
    d = np.zeros_like(x, dtype=float)
    for t in range(T):
        if T < 2:
            break
        if t == 0:
            d[t] = x[1] - x[0]
        elif t == T - 1:
            d[t] = x[T - 1] - x[T - 2]
        else:
            d[t] = 0.5 * (x[t + 1] - x[t - 1])
    return d


def dense_window(T: int) -> np.ndarray:
    """(2T, T) matrix: rows 2t and 2t+1 produce the static and delta value of frame t."""
    W = np.zeros((2 * T, T))
    for t in range(T):
        W[2 * t, t] = 1.0
        if T < 2:
            continue
        if t == 0:
            W[2 * t + 1, 0], W[2 * t + 1, 1] = -1.0, 1.0
        elif t == T - 1:
            W[2 * t + 1, T - 2], W[2 * t + 1, T - 1] = -1.0, 1.0
        else:
            W[2 * t + 1, t - 1], W[2 * t + 1, t + 1] = -0.5, 0.5
    return W


def dense_mlpg(static_mean, delta_mean, cov_blocks) -> np.ndarray:
    """Dense (W' D^-1 W) y = W' D^-1 m per dimension; cov_blocks is (T, D, 2, 2)."""
    T, D = static_mean.shape
    W = dense_window(T)
    out = np.zeros((T, D))
    for d in range(D):
        prec = np.zeros((2 * T, 2 * T))
        m = np.zeros(2 * T)
        for t in range(T):
            prec[2 * t : 2 * t + 2, 2 * t : 2 * t + 2] = np.linalg.inv(cov_blocks[t, d])
            m[2 * t], m[2 * t + 1] = static_mean[t, d], delta_mean[t, d]
        out[:, d] = np.linalg.solve(W.T @ prec @ W, W.T @ prec @ m)
    return out


def gaussian_conditioning_trajectory(joint: np.ndarray, src_statics: np.ndarray) -> np.ndarray:
    """K=1 oracle: ML Gaussian on joint rows, condition target on source, dense MLPG."""
    D = src_statics.shape[1]
    h = 2 * D
    mu = joint.mean(axis=0)
    cov = (joint - mu).T @ (joint - mu) / joint.shape[0]
    sxx, syx, syy = cov[:h, :h], cov[h:, :h], cov[h:, h:]
    gain = syx @ np.linalg.inv(sxx)
    cond = syy - gain @ syx.T
    x = np.hstack([src_statics, delta_loop(src_statics)])
    mean = mu[h:] + (x - mu[:h]) @ gain.T
    T = x.shape[0]
    blocks = np.zeros((T, D, 2, 2))
    for d in range(D):
        b = np.array([[cond[d, d], cond[d, d + D]], [cond[d + D, d], cond[d + D, d + D]]])
        blocks[:, d] = b
    return dense_mlpg(mean[:, :D], mean[:, D:], blocks)


def mlp_loss(weights, biases, x, y, l2) -> float:
    h = x
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = h @ w + b
        if i < len(weights) - 1:
            h = np.maximum(h, 0.0)
    return float(np.mean((h - y) ** 2) + l2 * sum(np.sum(w * w) for w in weights))


def finite_difference_grads(weights, biases, x, y, l2, eps=1e-4):
    """Central differences of ``mlp_loss`` for every weight and bias entry."""
    params = [w.copy() for w in weights] + [b.copy() for b in biases]
    n_w = len(weights)
    grads = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            keep = p[idx]
            p[idx] = keep + eps
            up = mlp_loss(params[:n_w], params[n_w:], x, y, l2)
            p[idx] = keep - eps
            down = mlp_loss(params[:n_w], params[n_w:], x, y, l2)
            p[idx] = keep
            g[idx] = (up - down) / (2 * eps)
        grads.append(g)
    return grads[:n_w], grads[n_w:]


def third_octave_reference(x: np.ndarray, sr: int, centre: float) -> float:
    """Band power via a direct periodogram (no Welch), for sanity comparisons."""
    spec = np.abs(np.fft.rfft(x)) ** 2
    f = np.fft.rfftfreq(x.size, 1.0 / sr)
    sel = (f >= centre * 2 ** (-1 / 6)) & (f < centre * 2 ** (1 / 6))
    return float(10 * np.log10(np.mean(spec[sel])))
