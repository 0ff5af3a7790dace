"""Slow, obviously-correct reference implementations used only by the tests."""

from __future__ import annotations

import math

import numpy as np


def matmul_loops(a, b):
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def conv2d_loops(x, w, b=None, pad=0, stride=1):
    """(Ci, H, W) input, (Co, Ci, k, k) weight, zero padding."""
    ci, H, W = x.shape
    co, _, k, _ = w.shape
    xp = np.zeros((ci, H + 2 * pad, W + 2 * pad))
    xp[:, pad:pad + H, pad:pad + W] = x
    Ho = (H + 2 * pad - k) // stride + 1
    Wo = (W + 2 * pad - k) // stride + 1
    out = np.zeros((co, Ho, Wo))
    for o in range(co):
        for i in range(Ho):
            for j in range(Wo):
                s = 0.0 if b is None else b[o]
                for c in range(ci):
                    for u in range(k):
                        for v in range(k):
                            s += w[o, c, u, v] * xp[c, i * stride + u, j * stride + v]
                out[o, i, j] = s
    return out


def group_norm_loops(x, groups, gamma, beta, eps=1e-5):
    C, H, W = x.shape
    out = np.zeros_like(x)
    per = C // groups
    for g in range(groups):
        vals = x[g * per:(g + 1) * per].ravel()
        mu = sum(vals) / len(vals)
        var = sum((v - mu) ** 2 for v in vals) / len(vals)
        for c in range(g * per, (g + 1) * per):
            out[c] = (x[c] - mu) / math.sqrt(var + eps) * gamma[c] + beta[c]
    return out


def softmax_row(z):
    m = max(z)
    e = [math.exp(v - m) for v in z]
    s = sum(e)
    return [v / s for v in e]


def rmha_loops(x, p, wq, wk, wv, w1, w2, b1, b2, heads, wc, bc, wp, bp):
    """Index-loop attention with linear Q/K, shared position maps, per-head position term."""
    n, d = x.shape
    dh = d // heads
    q = x @ wq
    k = x @ wk
    v = x @ wv
    content = np.zeros((n, d))
    pos = np.zeros((n, 2 * heads))
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        for i in range(n):
            logits = []
            for j in range(n):
                s = 0.0
                for t in range(dh):
                    dp0, dp1 = p[i, 0] - p[j, 0], p[i, 1] - p[j, 1]
                    a1 = dp0 * w1[0, t] + dp1 * w1[1, t] + b1[t]
                    a2 = dp0 * w2[0, t] + dp1 * w2[1, t] + b2[t]
                    s += q[i, sl][t] * k[j, sl][t] * math.cos(a1) + q[i, sl][t] * math.cos(a2)
                logits.append(s / math.sqrt(dh))
            a = softmax_row(logits)
            for j in range(n):
                content[i, sl] += a[j] * v[j, sl]
                pos[i, 2 * h] += a[j] * (p[i, 0] - p[j, 0])
                pos[i, 2 * h + 1] += a[j] * (p[i, 1] - p[j, 1])
    return content @ wc + bc + pos @ wp + bp


def dice_loss_loops(probs, labels, eps=1e-4):
    """probs (M, H, W), labels (H, W): mean over classes of 1 - (2I + eps)/(Y + P + eps)."""
    M, H, W = probs.shape
    total = 0.0
    for m in range(M):
        inter = ysum = psum = 0.0
        for i in range(H):
            for j in range(W):
                y = 1.0 if labels[i, j] == m else 0.0
                inter += y * probs[m, i, j]
                ysum += y
                psum += probs[m, i, j]
        total += 1.0 - (2.0 * inter + eps) / (ysum + psum + eps)
    return total / M


def aw_ce_loops(probs, labels):
    M, H, W = probs.shape
    area = [0] * M
    for v in labels.ravel():
        area[int(v)] += 1
    inv = [1.0 / max(a, 1) for a in area]
    w = [v / sum(inv) for v in inv]
    s = 0.0
    for i in range(H):
        for j in range(W):
            m = int(labels[i, j])
            s -= w[m] * math.log(max(probs[m, i, j], 1e-12))
    return s / (H * W)


def dsc_loops(pred, truth, cls):
    p = t = both = 0
    for a, b in zip(np.ravel(pred), np.ravel(truth)):
        p += a == cls
        t += b == cls
        both += (a == cls) and (b == cls)
    return 100.0 if p + t == 0 else 100.0 * 2 * both / (p + t)


def boundary_loops(mask):
    H, W = mask.shape
    pts = []
    for r in range(H):
        for c in range(W):
            if not mask[r, c]:
                continue
            edge = False
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if not (0 <= rr < H and 0 <= cc < W) or not mask[rr, cc]:
                    edge = True
            if edge:
                pts.append((r, c))
    return pts


def percentile_linear(values, q):
    v = sorted(values)
    pos = (len(v) - 1) * q / 100.0
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (v[hi] - v[lo]) * (pos - lo)


def hd95_all_pairs(pred, truth, cls):
    a = boundary_loops(np.asarray(pred) == cls)
    b = boundary_loops(np.asarray(truth) == cls)

    def directed(src, dst):
        return [min(math.hypot(p[0] - q[0], p[1] - q[1]) for q in dst) for p in src]

    return max(percentile_linear(directed(a, b), 95), percentile_linear(directed(b, a), 95))


def point_in_polygon(x, y, poly):
    """Crossing-number test: an edge counts when exactly one endpoint lies strictly below y."""
    inside = False
    n = len(poly)
    for i in range(n):
        xi, yi = poly[i]
        xj, yj = poly[(i + 1) % n]
        if (yi > y) != (yj > y):
            if x < xi + (y - yi) * (xj - xi) / (yj - yi):
                inside = not inside
    return inside
