"""Independent reference implementations used as test oracles.

Everything here is written with plain Python floats and loops, without any
code from the package, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import itertools
import math


def sig(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


def scalar_lstm_step(wx, wh, b, x, h, c):
    """Scalar LSTM (one input, one unit). wx, wh, b are 4-tuples in (f, i, o, c) order."""
    f = sig(wx[0] * x + wh[0] * h + b[0])
    i = sig(wx[1] * x + wh[1] * h + b[1])
    o = sig(wx[2] * x + wh[2] * h + b[2])
    g = math.tanh(wx[3] * x + wh[3] * h + b[3])
    c_new = i * g + f * c
    h_new = o * math.tanh(c_new)
    return h_new, c_new, (f, i, o, g)


def lstm_step_lists(Wx, Wh, b, x, h, c):
    """General LSTM step on nested lists: Wx[gate][row][col], Wh[gate][row][col], b[gate][row]."""
    H = len(b[0])
    gates = []
    for k in range(4):
        z = []
        for r in range(H):
            s = b[k][r]
            s += sum(Wx[k][r][j] * x[j] for j in range(len(x)))
            s += sum(Wh[k][r][j] * h[j] for j in range(H))
            z.append(s)
        gates.append(z)
    f = [sig(v) for v in gates[0]]
    i = [sig(v) for v in gates[1]]
    o = [sig(v) for v in gates[2]]
    g = [math.tanh(v) for v in gates[3]]
    c_new = [i[r] * g[r] + f[r] * c[r] for r in range(H)]
    h_new = [o[r] * math.tanh(c_new[r]) for r in range(H)]
    return h_new, c_new


def rnn_step_lists(Wx, Wh, b, x, h):
    H = len(b)
    return [math.tanh(b[r] + sum(Wx[r][j] * x[j] for j in range(len(x)))
                      + sum(Wh[r][j] * h[j] for j in range(H))) for r in range(H)]


def unrolled_stack(layers, head_w, head_b, xs, kind="lstm"):
    """Step-by-step stacked recurrence; layers is a list of (Wx, Wh, b) nested lists."""
    states = []
    for Wx, Wh, b in layers:
        H = len(b[0]) if kind == "lstm" else len(b)
        states.append(([0.0] * H, [0.0] * H))
    preds = []
    for x in xs:
        inp = list(x)
        for k, (Wx, Wh, b) in enumerate(layers):
            h, c = states[k]
            if kind == "lstm":
                h, c = lstm_step_lists(Wx, Wh, b, inp, h, c)
            else:
                h = rnn_step_lists(Wx, Wh, b, inp, h)
            states[k] = (h, c)
            inp = h
        preds.append(sum(w * v for w, v in zip(head_w, inp)) + head_b)
    return preds


def power_iteration(P, iters=20000):
    n = len(P)
    pi = [1.0 / n] * n
    for _ in range(iters):
        pi = [sum(pi[i] * P[i][j] for i in range(n)) for j in range(n)]
        s = sum(pi)
        pi = [v / s for v in pi]
    return pi


def best_two_partition(points):
    """Exhaustive minimum-WCSS 2-partition (labels as a frozenset of index sets)."""
    n = len(points)
    best, best_cost = None, math.inf
    for mask in range(1, 2 ** (n - 1)):
        groups = ([p for j, p in enumerate(points) if mask >> j & 1],
                  [p for j, p in enumerate(points) if not mask >> j & 1])
        cost = 0.0
        for g in groups:
            m = [sum(c) / len(g) for c in zip(*g)]
            cost += sum(sum((a - b) ** 2 for a, b in zip(p, m)) for p in g)
        if cost < best_cost - 1e-12:
            best_cost = cost
            best = frozenset(frozenset(j for j in range(n) if (mask >> j & 1) == side)
                             for side in (0, 1))
    return best, best_cost


def partition_of(labels):
    groups = {}
    for j, lab in enumerate(labels):
        groups.setdefault(int(lab), set()).add(j)
    return frozenset(frozenset(g) for g in groups.values())


def silhouette_bruteforce(points, labels):
    n = len(points)
    dist = lambda p, q: math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q)))
    total = 0.0
    for i in range(n):
        same = [dist(points[i], points[j]) for j in range(n) if j != i and labels[j] == labels[i]]
        if not same:
            continue
        a = sum(same) / len(same)
        b = math.inf
        for lab in set(labels) - {labels[i]}:
            other = [dist(points[i], points[j]) for j in range(n) if labels[j] == lab]
            b = min(b, sum(other) / len(other))
        total += (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    return total / n


def cong_diff_trace(flag_indices, n_packets, pack_th):
    """Hand trace of the window counter: flags at 1-based packet indices."""
    flags = set(flag_indices)
    act = init = packs = 0
    out = []
    for p in range(1, n_packets + 1):
        if p in flags:
            act += 1
        packs += 1
        if packs == pack_th:
            out.append(act - init)
            init = act
            packs = 0
    return out


def all_labelings(n, k=2):
    return itertools.product(range(k), repeat=n)
