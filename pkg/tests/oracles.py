"""Straight-line reference implementations used as test oracles.

Everything here works on plain Python floats and lists, one scalar at a
time, so it shares no code path with the vectorized package.
"""
from __future__ import annotations

import math


def naive_matmul(a, b):
    n, m = len(a), len(b[0])
    inner = len(b)
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(inner):
                s += a[i][k] * b[k][j]
            out[i][j] = s
    return out


def _dense(w, x, bias, transpose=False):
    rows = len(w[0]) if transpose else len(w)
    out = []
    for r in range(rows):
        s = bias[r]
        for c in range(len(x)):
            s += (w[c][r] if transpose else w[r][c]) * x[c]
        out.append(math.tanh(s))
    return out


def forward(W, b, x):
    """Codes and reconstruction of one input vector through the tied autoencoder."""
    K = len(W)
    h = list(x)
    for j in range(K):
        h = _dense(W[j], h, b[j])
    code = h
    for layer in range(K + 1, 2 * K + 1):
        h = _dense(W[2 * K - layer], h, b[layer - 1], transpose=True)
    return code, h


def hybrid_loss(W, b, user_profiles, item_profiles, pairs, lambda_theta, lambda_e,
                item_W=None, item_b=None):
    """Weighted sum of squared pair residuals, unsquared reconstruction norms and L2."""
    towers = [(W, b)] if item_W is None else [(W, b), (item_W, item_b)]
    iW, ib = towers[-1]
    user_out = [forward(W, b, x) for x in user_profiles]
    item_out = [forward(iW, ib, y) for y in item_profiles]

    fact = 0.0
    for u, i, r in pairs:
        dot = 0.0
        for a, c in zip(user_out[u][0], item_out[i][0]):
            dot += a * c
        fact += (r - dot) ** 2

    recon = 0.0
    for profiles, outs in ((user_profiles, user_out), (item_profiles, item_out)):
        for x, (_, xr) in zip(profiles, outs):
            sq = 0.0
            for p, q in zip(x, xr):
                sq += (q - p) ** 2
            recon += math.sqrt(sq)

    reg = 0.0
    for tw, tb in towers:
        for w in tw:
            for row in w:
                for v in row:
                    reg += v * v
        for vec in tb:
            for v in vec:
                reg += v * v
    return (1 - lambda_theta - lambda_e) * fact + lambda_e * recon + lambda_theta * reg


def user_metrics(ranked, relevant, cutoffs):
    """Definitional P@k, R@k, F@k, AP and RR for one ranked list."""
    out = {}
    for k in cutoffs:
        hits = 0
        for item in ranked[:k]:
            if item in relevant:
                hits += 1
        p = hits / k
        r = hits / len(relevant)
        out[f"P@{k}"] = p
        out[f"R@{k}"] = r
        out[f"F@{k}"] = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    ap = 0.0
    hits = 0
    rr = 0.0
    for pos, item in enumerate(ranked, 1):
        if item in relevant:
            hits += 1
            ap += hits / pos
            if rr == 0.0:
                rr = 1.0 / pos
    out["MAP"] = ap / len(relevant)
    out["MRR"] = rr
    return out


def mean_metrics(ranked_lists, relevance, cutoffs):
    users = sorted(u for u in ranked_lists if relevance.get(u))
    totals = {}
    for u in users:
        for name, v in user_metrics(list(ranked_lists[u]), relevance[u], cutoffs).items():
            totals[name] = totals.get(name, 0.0) + v
    return {name: v / len(users) for name, v in totals.items()}


def rank_by_score(scores, exclude=()):
    """Selection-sort ranking: highest score first, lowest index among ties."""
    remaining = [j for j in range(len(scores)) if j not in set(exclude)]
    order = []
    while remaining:
        best = remaining[0]
        for j in remaining[1:]:
            if scores[j] > scores[best]:
                best = j
        order.append(best)
        remaining.remove(best)
    return order
