"""Slow, independent reference implementations used as test oracles.

Everything here is written with plain loops and ``math`` so it shares no
code path with the package under test.
"""
import math

import numpy as np


def naive_matmul(a, b):
    n, k = len(a), len(a[0])
    m = len(b[0])
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return np.array(out)


def naive_softmax(z):
    e = [math.exp(v) for v in z]
    s = sum(e)
    return np.array([v / s for v in e])


def naive_arb_probs(z, counts, y):
    """exp(z_i) / sum_k (n_k / n_y) exp(z_k)."""
    den = sum(counts[k] / counts[y] * math.exp(z[k]) for k in range(len(z)))
    return np.array([math.exp(v) / den for v in z])


def naive_loss(z, y, counts=None):
    """Per-sample loss; ``counts=None`` is cross-entropy."""
    c = len(z)
    n = [1.0] * c if counts is None else [float(v) for v in counts]
    den = sum(n[k] / n[y] * math.exp(z[k]) for k in range(c))
    return -math.log(math.exp(z[y]) / den)


def naive_mean_loss(Z, labels, counts=None):
    return sum(naive_loss(z, y, counts) for z, y in zip(Z, labels)) / len(labels)


def naive_parts(G, H, labels, c):
    """parts[i][k] = sum over samples j of class k of G[j, i] * h_j."""
    b, d = H.shape
    out = np.zeros((c, c, d))
    for i in range(c):
        for j in range(b):
            for t in range(d):
                out[i, labels[j], t] += G[j, i] * H[j, t]
    return out


def fd_gradient(f, x, h=1e-5):
    """Central differences of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-6)
    return float(np.linalg.norm(a - b) / scale)


def brute_balance(W):
    """Balance metrics by explicit double loops over ordered pairs."""
    c = len(W)
    norms = [math.sqrt(sum(v * v for v in w)) for w in W]
    dots, coss = [], []
    M = [[0.0] * c for _ in range(c)]
    for i in range(c):
        row = 0.0
        for j in range(c):
            if j != i:
                row += sum(W[i][t] * W[j][t] for t in range(len(W[i])))
        for j in range(c):
            if j == i:
                continue
            dij = sum(W[i][t] * W[j][t] for t in range(len(W[i])))
            dots.append(dij)
            coss.append(dij / (norms[i] * norms[j]))
            M[i][j] = dij / row

    def var(xs):
        m = sum(xs) / len(xs)
        return sum((x - m) ** 2 for x in xs) / len(xs)

    angles = [math.degrees(math.acos(max(-1.0, min(1.0, x)))) for x in coss]
    return {
        "B_D2": var(dots),
        "B_A2": var(coss),
        "B_L2": var(norms),
        "M": np.array(M),
        "min_pairwise_angle_deg": min(angles),
        "mean_pairwise_cos": sum(coss) / len(coss),
        "norms": np.array(norms),
    }


def naive_mlp_forward(params, dims, X, act="relu"):
    f = {"relu": lambda u: max(u, 0.0), "tanh": math.tanh,
         "sigmoid": lambda u: 1.0 / (1.0 + math.exp(-u))}[act]
    L = len(dims) - 1
    out_H, out_Z = [], []
    for x in X:
        a = list(x)
        for l in range(1, L):
            W, b = params[f"W{l}"], params[f"b{l}"]
            a = [f(sum(W[r][t] * a[t] for t in range(len(a))) + b[r]) for r in range(len(W))]
        W = params[f"W{L}"]
        out_H.append(a)
        out_Z.append([sum(W[r][t] * a[t] for t in range(len(a))) for r in range(len(W))])
    return np.array(out_H), np.array(out_Z)
