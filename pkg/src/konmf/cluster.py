"""Labels from indicator matrices, Hungarian matching, accuracy, orthogonality."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError


@dataclass(frozen=True)
class Labeling:
    labels: np.ndarray
    soft: np.ndarray

    @property
    def k(self) -> int:
        return self.soft.shape[0]


@dataclass(frozen=True)
class AccuracyReport:
    acc: float
    mapping: tuple
    confusion: np.ndarray


def assign(h) -> Labeling:
    """Hard labels by column argmax (lowest index on ties) plus soft memberships.

    An all-zero column gets label 0 and uniform soft membership.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.size == 0:
        raise ValidationError(f"indicator matrix must be non-empty 2-D, got shape {h.shape}")
    k = h.shape[0]
    labels = np.argmax(h, axis=0)
    totals = h.sum(axis=0)
    soft = np.full_like(h, 1.0 / k)
    nz = totals > 0
    soft[:, nz] = h[:, nz] / totals[nz]
    return Labeling(labels=labels.astype(np.int64), soft=soft)


def _solve_assignment(c: np.ndarray):
    """Shortest-augmenting-path Hungarian method, O(k^3).

    Returns (row_to_col, u, v) with dual potentials satisfying
    u_i + v_j <= c_ij, equality on matched pairs.
    """
    n = c.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row matched to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = c[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    row_to_col = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        row_to_col[p[j] - 1] = j - 1
    return row_to_col, u[1:], v[1:]


def _augment(start_row, target_col, tight, row_to_col, col_to_row, blocked_rows, blocked_cols):
    """Find an alternating path from an unmatched row to a free column through tight edges."""
    n = tight.shape[0]
    parent_col = {}
    seen_cols = set()
    frontier = [start_row]
    while frontier:
        nxt = []
        for r in frontier:
            for j in range(n):
                if j in blocked_cols or j in seen_cols or not tight[r, j]:
                    continue
                seen_cols.add(j)
                parent_col[j] = r
                if j == target_col:
                    # unwind the path
                    col = j
                    while True:
                        row = parent_col[col]
                        prev = row_to_col[row]
                        row_to_col[row] = col
                        col_to_row[col] = row
                        if row == start_row:
                            return True
                        col = prev
                r2 = col_to_row[j]
                if r2 >= 0 and r2 not in blocked_rows:
                    nxt.append(r2)
        frontier = nxt
    return False


def hungarian(cost) -> tuple:
    """Minimum-cost assignment for a square cost matrix.

    Returns ``perm`` with ``perm[i]`` the column given to row i. Among all
    optimal assignments the lexicographically smallest ``perm`` is returned,
    so the result does not depend on solver internals.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ShapeError(f"cost matrix must be square, got shape {c.shape}")
    n = c.shape[0]
    if n == 0:
        return ()
    if not np.all(np.isfinite(c)):
        raise ValidationError("cost matrix must be finite")
    row_to_col, u, v = _solve_assignment(c)

    # every optimal assignment is a perfect matching on the tight edges of an optimal dual
    tol = 1e-9 * max(1.0, float(np.max(np.abs(c))))
    tight = (c - u[:, None] - v[None, :]) <= tol
    col_to_row = np.empty(n, dtype=np.int64)
    col_to_row[row_to_col] = np.arange(n)

    fixed_cols: set = set()
    for i in range(n):
        current = int(row_to_col[i])
        for j in range(current):
            if j in fixed_cols or not tight[i, j]:
                continue
            trial_r2c = row_to_col.copy()
            trial_c2r = col_to_row.copy()
            r = int(trial_c2r[j])
            # move row i onto column j; row r must find a path to the freed column
            trial_r2c[i] = j
            trial_c2r[j] = i
            trial_c2r[current] = -1
            trial_r2c[r] = -1
            blocked_rows = set(range(i + 1))
            blocked_cols = fixed_cols | {j}
            if _augment(r, current, tight, trial_r2c, trial_c2r, blocked_rows, blocked_cols):
                row_to_col, col_to_row = trial_r2c, trial_c2r
                break
        fixed_cols.add(int(row_to_col[i]))
    return tuple(int(j) for j in row_to_col)


def accuracy(pred, truth) -> AccuracyReport:
    """Fraction of samples whose mapped cluster matches the true class.

    ``pred`` may be a :class:`Labeling` or a label array. Clusters are matched
    to classes one-to-one by maximising agreement counts.
    """
    if isinstance(pred, Labeling):
        labels = pred.labels
        k_pred = pred.k
    else:
        labels = np.asarray(pred, dtype=np.int64)
        k_pred = int(labels.max()) + 1 if labels.size else 0
    truth = np.asarray(truth, dtype=np.int64)
    if labels.shape != truth.shape:
        raise ValidationError(f"length mismatch: {labels.size} predictions, {truth.size} labels")
    if truth.size == 0:
        raise ValidationError("cannot score an empty labelling")
    if labels.min() < 0 or truth.min() < 0:
        raise ValidationError("labels must be non-negative")
    k = max(k_pred, int(labels.max()) + 1, int(truth.max()) + 1)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (labels, truth), 1)
    mapping = hungarian(-confusion)
    matched = int(sum(confusion[c, mapping[c]] for c in range(k)))
    return AccuracyReport(acc=matched / truth.size, mapping=mapping, confusion=confusion)


def orthogonality_score(h) -> float:
    """Diagonal mass of H H^T over its total mass, in (0, 1]; 1 iff rows are orthogonal."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2:
        raise ShapeError(f"indicator matrix must be 2-D, got shape {h.shape}")
    g = h @ h.T
    total = float(g.sum())
    if not total > 0:
        raise ValidationError("orthogonality undefined for an all-zero indicator matrix")
    return float(np.trace(g)) / total


def orthogonality_ratio(h) -> float:
    """Diagonal over off-diagonal mass of H H^T; ``inf`` for orthogonal rows."""
    h = np.asarray(h, dtype=np.float64)
    g = h @ h.T
    diag = float(np.trace(g))
    off = float(g.sum()) - diag
    if diag == 0 and off == 0:
        raise ValidationError("orthogonality undefined for an all-zero indicator matrix")
    return diag / off if off > 0 else float("inf")


def batch_orthogonality(h: np.ndarray) -> np.ndarray:
    """Vectorised :func:`orthogonality_score` over a stack (..., k, n); NaN for zero stacks."""
    g = h @ np.swapaxes(h, -1, -2)
    diag = np.trace(g, axis1=-2, axis2=-1)
    total = g.sum(axis=(-2, -1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, diag / np.where(total > 0, total, 1.0), np.nan)
