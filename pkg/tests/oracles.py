"""Brute-force reference implementations used only by the test-suite.

These deliberately use plain Python loops and share no code with the
package paths they check.
"""

import math
from itertools import product


def conv2d_loops(x, kernels, bias, padding):
    """x: H x W x C nested list/array, kernels: k1 x k2 x C x D."""
    h, w, c = len(x), len(x[0]), len(x[0][0])
    k1, k2, _, d = kernels.shape
    ph, pw = (k1 // 2, k2 // 2) if padding == "same" else (0, 0)
    ho, wo = h + 2 * ph - k1 + 1, w + 2 * pw - k2 + 1
    out = [[[0.0] * d for _ in range(wo)] for _ in range(ho)]
    for i in range(ho):
        for j in range(wo):
            for f in range(d):
                s = 0.0
                for m in range(k1):
                    for n in range(k2):
                        for ch in range(c):
                            r, q = i + m - ph, j + n - pw
                            if 0 <= r < h and 0 <= q < w:
                                s += kernels[m, n, ch, f] * x[r][q][ch]
                out[i][j][f] = s + bias[f]
    return out


def pool_loops(x, kind):
    h, w, c = len(x), len(x[0]), len(x[0][0])
    out = []
    for i in range(h // 2):
        row = []
        for j in range(w // 2):
            cell = []
            for ch in range(c):
                vals = [x[2 * i + a][2 * j + b][ch] for a in (0, 1) for b in (0, 1)]
                cell.append(max(vals) if kind == "max" else sum(vals) / 4.0)
            row.append(cell)
        out.append(row)
    return out


def sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def lstm_step_scalar(x, h, c, wx, wh, b):
    """Per-gate evaluation with explicit loops. wx/wh/b are dicts keyed by gate."""
    m = len(h)

    def pre(g, k):
        return (sum(wx[g][k][j] * x[j] for j in range(len(x)))
                + sum(wh[g][k][j] * h[j] for j in range(m)) + b[g][k])

    new_h, new_c = [], []
    for k in range(m):
        i = sig(pre("i", k))
        f = sig(pre("f", k))
        g = math.tanh(pre("c", k))
        o = sig(pre("o", k))
        ck = f * c[k] + i * g
        new_c.append(ck)
        new_h.append(o * math.tanh(ck))
    return new_h, new_c


def bce_loops(pred, actual, mask, eps=1e-7):
    tot, n = 0.0, 0
    for p, y, m in zip(pred, actual, mask):
        if not m:
            continue
        p = min(max(p, eps), 1 - eps)
        tot += -(y * math.log(p) + (1 - y) * math.log(1 - p))
        n += 1
    return tot / n


def mse_loops(pred, actual, mask):
    tot, n = 0.0, 0
    for p, y, m in zip(pred, actual, mask):
        if m:
            tot += (y - p) ** 2
            n += 1
    return tot / n


def mcce_loops(pred, actual, mask, eps=1e-7):
    tot, n = 0.0, 0
    for prow, yrow, m in zip(pred, actual, mask):
        if not m:
            continue
        n += 1
        for p, y in zip(prow, yrow):
            tot += -y * math.log(min(max(p, eps), 1 - eps))
    return tot / n


def auroc_pairwise(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    tot = 0.0
    for a, b in product(pos, neg):
        tot += 1.0 if a > b else 0.5 if a == b else 0.0
    return tot / (len(pos) * len(neg))


def aucpr_sweep(scores, labels):
    """Step-wise PR area: sum over distinct thresholds of (delta recall) * precision."""
    npos = sum(labels)
    area, prev_recall = 0.0, 0.0
    for m in sorted(set(scores), reverse=True):
        tp = sum(1 for s, l in zip(scores, labels) if s >= m and l)
        fp = sum(1 for s, l in zip(scores, labels) if s >= m and not l)
        recall = tp / npos
        precision = tp / (tp + fp)
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area


def pai_sort(scores, counts, cells, fraction):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], cells[i][0], cells[i][1]))
    n = max(1, math.floor(fraction * len(scores)))
    r = sum(counts[i] for i in order[:n])
    return (r / sum(counts)) / (n / len(scores))


def knn_scan(train_x, train_y, query, k):
    d = []
    for idx, row in enumerate(train_x):
        d.append((sum((a - b) ** 2 for a, b in zip(row, query)), idx))
    d.sort()
    return sum(train_y[idx] for _, idx in d[:k]) / k


def gnb_direct(train_x, train_y, query, var_floor=1e-9):
    classes = (0, 1)
    logp = []
    for cls in classes:
        rows = [r for r, y in zip(train_x, train_y) if y == cls]
        prior = len(rows) / len(train_x)
        lp = math.log(prior)
        for j in range(len(query)):
            col = [r[j] for r in rows]
            mu = sum(col) / len(col)
            var = sum((v - mu) ** 2 for v in col) / len(col) + var_floor
            lp += -0.5 * math.log(2 * math.pi * var) - (query[j] - mu) ** 2 / (2 * var)
        logp.append(lp)
    mx = max(logp)
    e = [math.exp(v - mx) for v in logp]
    return e[1] / (e[0] + e[1])


def bin_incidents(incidents, lon_min, lon_max, lat_min, lat_max, p, start, days, type_index):
    """Per-incident binning into a {(day,row,col,channel): count} dict."""
    counts = {}
    cw = (lon_max - lon_min) / p
    ch = (lat_max - lat_min) / p
    for inc in incidents:
        if not (lon_min <= inc.lon <= lon_max and lat_min <= inc.lat <= lat_max):
            continue
        day = (inc.timestamp.date() - start).days
        if not 0 <= day < days:
            continue
        row = min(math.floor((lat_max - inc.lat) / ch), p - 1)
        col = min(math.floor((inc.lon - lon_min) / cw), p - 1)
        key = (day, row, col, type_index[inc.crime_type])
        counts[key] = counts.get(key, 0) + 1
    return counts
