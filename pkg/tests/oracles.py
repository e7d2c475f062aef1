"""Independent brute-force oracles used by the test suite.

Nothing in here may import from cardioxmap: these are deliberately naive
re-implementations (finite differences, exhaustive enumeration, direct
rank arithmetic) that the library is checked against.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar f at x, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(1, |a|, |n|) over all entries."""
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / denom))


def shapley_values_exact(value_fn, n_players: int) -> np.ndarray:
    """Exact Shapley values by enumeration over all coalitions (n <= ~12).

    `value_fn(mask)` maps a boolean tuple of length n_players to the
    coalition's worth.
    """
    phi = np.zeros(n_players)
    players = list(range(n_players))
    fact = math.factorial
    for i in players:
        others = [p for p in players if p != i]
        for r in range(len(others) + 1):
            for subset in itertools.combinations(others, r):
                mask = [False] * n_players
                for p in subset:
                    mask[p] = True
                without = value_fn(tuple(mask))
                mask[i] = True
                with_i = value_fn(tuple(mask))
                weight = fact(r) * fact(n_players - r - 1) / fact(n_players)
                phi[i] += weight * (with_i - without)
    return phi


def spearman_by_ranks(x, y) -> float:
    """Tie-corrected Spearman: average ranks, then the plain product-moment
    correlation of the rank vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = math.sqrt(float(np.dot(rx, rx)) * float(np.dot(ry, ry)))
    if denom == 0.0:
        return float("nan")
    return float(np.dot(rx, ry) / denom)


def _average_ranks(v: np.ndarray) -> np.ndarray:
    """1-based ranks with ties replaced by the mean rank of the tie group."""
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        mean_rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def dice_count(pred: np.ndarray, truth: np.ndarray) -> float:
    """Dice from raw boolean arrays (already restricted to the region)."""
    pred = np.asarray(pred, dtype=bool).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    inter = int(np.sum(pred & truth))
    total = int(np.sum(pred)) + int(np.sum(truth))
    if total == 0:
        return 0.0
    return 2.0 * inter / total


def iou_count(pred: np.ndarray, truth: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=bool).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    inter = int(np.sum(pred & truth))
    union = int(np.sum(pred | truth))
    if union == 0:
        return 0.0
    return inter / union


def grid_threshold_search(values: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """Exhaustive sweep of the 101-point threshold grid, lowest-t tie-break.

    `values` and `truth` are flat arrays already restricted to the region.
    Returns (threshold, dice at threshold).
    """
    best_t, best_dice = 0.0, -1.0
    for step in range(101):
        t = step / 100.0
        d = dice_count(values >= t, truth)
        if d > best_dice:
            best_t, best_dice = t, d
    return best_t, best_dice
