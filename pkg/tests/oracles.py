"""Independent reference implementations used as test oracles."""

import numpy as np


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def direct_value(params, x):
    """Closed form w_out . s(W_k ... s(W_1 x + b_1) ...) + b_out, written out by hand."""
    h = np.asarray(x, dtype=float)
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.array([sigmoid(sum(w[i, j] * h[j] for j in range(w.shape[1])) + b[i]) for i in range(w.shape[0])])
    w, b = params.weights[-1], params.biases[-1]
    return float(sum(w[0, j] * h[j] for j in range(w.shape[1])) + b[0])


def fd_input_grad(fn, x, step=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        g[j] = (fn(x + e) - fn(x - e)) / (2 * step)
    return g


def fd_jacobian(fn, theta, step=1e-5):
    """Central-difference Jacobian of a vector-valued ``fn`` of a flat vector."""
    theta = np.asarray(theta, dtype=float)
    cols = []
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = step
        cols.append((np.asarray(fn(theta + e)) - np.asarray(fn(theta - e))) / (2 * step))
    return np.stack(cols, axis=-1)


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), floor))


def pair_count_auc(scores, labels):
    """O(n^2) Mann-Whitney: P(score_pos > score_neg) + 0.5 P(tie)."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def reachability_pairs(edges):
    """Brute-force transitive closure by repeated relaxation."""
    rel = set(edges)
    while True:
        new = {(a, d) for a, b in rel for c, d in rel if b == c} - rel
        if not new:
            return rel
        rel |= new
