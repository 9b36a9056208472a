"""Independent reference computations used by the tests.

Nothing here calls into the library's attention or normalisation code: the
oracles are written as plain loops over Python floats so that agreement with
the vectorised implementation is meaningful.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, List, Sequence

import numpy as np

FIXTURES = __import__("pathlib").Path(__file__).parent / "fixtures"


def central_diff(f: Callable[[], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of ``f`` with respect to array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def max_rel_error(a: np.ndarray, n: np.ndarray, floor: float = 1e-8) -> float:
    a, n = np.asarray(a).reshape(-1), np.asarray(n).reshape(-1)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


# ---------------------------------------------------------------------------
# simplex projection as a quadratic program


def simplex_projection_qp(z: Sequence[float]) -> np.ndarray:
    """argmin_p ||p - z||^2 subject to p >= 0, sum p = 1.

    Solved through the KKT conditions of the QP: p_i = max(z_i - tau, 0) where
    the multiplier tau is the root of the monotone function
    phi(tau) = sum_i max(z_i - tau, 0) - 1.  The root is bracketed and bisected
    to machine resolution; the active set found this way then gives tau in
    closed form, (sum over the support of z_i - 1) / |support|.
    """
    z = [float(v) for v in z]
    lo, hi = min(z) - 1.0, max(z)

    def phi(t):
        return math.fsum(max(v - t, 0.0) for v in z) - 1.0

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if phi(mid) > 0:
            lo = mid
        else:
            hi = mid
    tau = 0.5 * (lo + hi)
    support = [v for v in z if v > tau]
    tau = (math.fsum(support) - 1.0) / len(support)
    return np.array([max(v - tau, 0.0) for v in z])


def simplex_projection_kkt_enumeration(z: Sequence[float]) -> np.ndarray:
    """Exhaustive active-set solution of the same QP (small vectors only).

    For each candidate support S, the equality-constrained minimiser is
    p_S = z_S - tau with tau = (sum z_S - 1)/|S|; the QP optimum is the feasible
    candidate (p_S > 0, z_j <= tau off S) with the smallest objective.
    """
    z = np.asarray(z, dtype=np.float64)
    n = len(z)
    best, best_obj = None, math.inf
    for k in range(1, n + 1):
        for S in itertools.combinations(range(n), k):
            tau = (math.fsum(z[list(S)]) - 1.0) / k
            p = np.zeros(n)
            p[list(S)] = z[list(S)] - tau
            if np.any(p[list(S)] < 0):
                continue
            obj = float(np.sum((p - z) ** 2))
            if obj < best_obj - 1e-15:
                best, best_obj = p, obj
    return best


# ---------------------------------------------------------------------------
# attention by explicit loops


def softmax_loop(v: Sequence[float]) -> List[float]:
    m = max(v)
    e = [math.exp(x - m) for x in v]
    s = math.fsum(e)
    return [x / s for x in e]


def dot(a: Sequence[float], b: Sequence[float]) -> float:
    return math.fsum(x * y for x, y in zip(a, b))


def hatt_brute(q_s, K_s, q_w, K_w, V_w, scale: float) -> np.ndarray:
    """sum_i a_i sum_j b_ij V_w[i][j] with a = softmax(q_s.K_s/s), b_i = softmax(q_w.K_w[i]/s)."""
    a = softmax_loop([dot(q_s, k) / scale for k in K_s])
    dv = len(V_w[0][0])
    out = [0.0] * dv
    for i in range(len(K_s)):
        b = softmax_loop([dot(q_w, k) / scale for k in K_w[i]])
        for j in range(len(K_w[i])):
            for c in range(dv):
                out[c] += a[i] * b[j] * V_w[i][j][c]
    return np.array(out)


def hierarchical_context_brute(word_reps, word_scores, sentence_scores, word_norm: str = "paragraph") -> np.ndarray:
    """Nested sum of word rows weighted by sparsemax sentence weights and softmax word weights."""
    a_s = simplex_projection_qp(sentence_scores)
    lengths = [len(r) for r in word_reps]
    if word_norm == "paragraph":
        a_w = softmax_loop(list(word_scores))
    else:
        a_w, start = [], 0
        for n in lengths:
            a_w += softmax_loop(list(word_scores[start : start + n]))
            start += n
    d = len(word_reps[0][0])
    out = [0.0] * d
    pos = 0
    for i, rows in enumerate(word_reps):
        for j, row in enumerate(rows):
            for c in range(d):
                out[c] += a_s[i] * a_w[pos] * row[c]
            pos += 1
    return np.array(out)


def scaled_dot_brute(Q, K, V, scale: float) -> np.ndarray:
    out = []
    for q in Q:
        w = softmax_loop([dot(q, k) / scale for k in K])
        out.append([math.fsum(w[j] * V[j][c] for j in range(len(K))) for c in range(len(V[0]))])
    return np.array(out)
