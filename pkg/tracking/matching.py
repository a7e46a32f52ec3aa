"""Distances and the assignment solver used by the tracker and the evaluator."""

import numpy as np
from scipy.optimize import linear_sum_assignment

FORBIDDEN = np.inf


def iou(box_a: np.ndarray, box_b: np.ndarray) -> float:
    """Intersection over union of two tlwh boxes."""
    ax, ay, aw, ah = np.asarray(box_a, dtype=np.float64)
    bx, by, bw, bh = np.asarray(box_b, dtype=np.float64)
    iw = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    ih = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return float(inter / union) if union > 0 else 0.0


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IOU of n×4 and m×4 tlwh arrays."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    if not len(a) or not len(b):
        return np.zeros((len(a), len(b)))
    a1, a2 = a[:, None, :2], a[:, None, :2] + a[:, None, 2:]
    b1, b2 = b[None, :, :2], b[None, :, :2] + b[None, :, 2:]
    wh = np.clip(np.minimum(a2, b2) - np.maximum(a1, b1), 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """``1 - cos(a, b)`` in [0, 2]; degenerate norms give 1."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        return 1.0
    return float(np.clip(1.0 - a @ b / (na * nb), 0.0, 2.0))


def cosine_distance_matrix(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Pairwise cosine distance between row embeddings of two matrices."""
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    if not len(rows) or not len(cols):
        return np.zeros((len(rows), len(cols)))
    rn, cn = np.linalg.norm(rows, axis=1), np.linalg.norm(cols, axis=1)
    sim = (rows @ cols.T) / np.maximum(np.outer(rn, cn), 1e-300)
    dist = np.clip(1.0 - sim, 0.0, 2.0)
    dist[(rn < 1e-12)[:, None] | (cn < 1e-12)[None, :]] = 1.0
    return dist


def hungarian(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost partial assignment that never uses forbidden cells.

    Forbidden cells hold ``FORBIDDEN`` (or any non-finite value). The solver
    first maximizes the number of allowed pairs and then minimizes their total
    cost, so rows whose every cell is forbidden stay unassigned.

    Args:
        cost: n×m cost matrix.

    Returns:
        (row, col) pairs sorted lexicographically.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or 0 in cost.shape:
        return []
    allowed = np.isfinite(cost)
    if not allowed.any():
        return []
    finite = cost[allowed]
    # One extra forbidden pair must outweigh any spread of finite totals.
    big = 1.0 + 2.0 * min(cost.shape) * max(1.0, float(np.abs(finite).max()))
    rows, cols = linear_sum_assignment(np.where(allowed, cost, big))
    return sorted((int(r), int(c)) for r, c in zip(rows, cols) if allowed[r, c])


def gated_matches(cost: np.ndarray, threshold: float) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Solve the assignment with every cell above ``threshold`` forbidden.

    Returns:
        Tuple of (matches, unmatched rows, unmatched cols).
    """
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    matches = hungarian(np.where(cost <= threshold, cost, FORBIDDEN))
    used_r, used_c = {r for r, _ in matches}, {c for _, c in matches}
    return matches, [r for r in range(n) if r not in used_r], [c for c in range(m) if c not in used_c]
