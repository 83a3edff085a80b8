"""Optimal bipartite assignment and IoU-gated track/detection matching.

The solver wraps :func:`scipy.optimize.linear_sum_assignment` and then pins
the tie-break: among all minimum-cost assignments it returns the one whose
row-sorted pair list is lexicographically smallest, so golden tests are
stable across platforms and scipy versions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .masks import Box, box_iou

# relative slack for "same total cost" during tie refinement; structured ties
# (equal matrix entries) compare exactly, random float costs never tie
_TIE_RTOL = 1e-9


@dataclass
class MatchResult:
    """Partition of track and detection indices after gating."""

    matches: list[tuple[int, int]] = field(default_factory=list)
    unmatched_tracks: list[int] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)


def _optimal_total(cost: np.ndarray) -> float:
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def solve_assignment(cost) -> list[tuple[int, int]]:
    """Minimum-cost pairing of size min(rows, cols), ties broken by (row, col).

    Raises ValueError on non-finite entries. Degenerate shapes (zero rows or
    columns) yield an empty pairing.
    """
    matrix = np.asarray(cost, dtype=float)
    if matrix.ndim != 2:
        matrix = matrix.reshape(len(cost), -1) if len(cost) else matrix.reshape(0, 0)
    if matrix.size and not np.isfinite(matrix).all():
        raise ValueError("cost matrix contains non-finite entries")
    n_rows, n_cols = matrix.shape
    k = min(n_rows, n_cols)
    if k == 0:
        return []

    target = _optimal_total(matrix)
    pairs: list[tuple[int, int]] = []
    row_pool = list(range(n_rows))
    col_pool = list(range(n_cols))
    fixed = 0.0
    while len(pairs) < k:
        need = k - len(pairs) - 1
        chosen = None
        for i, r in enumerate(row_pool):
            rest_rows = row_pool[i + 1 :]
            if len(rest_rows) < need:
                break  # later rows cannot supply enough pairs
            for c in col_pool:
                candidate = fixed + matrix[r, c]
                if need:
                    sub = matrix[np.ix_(rest_rows, [x for x in col_pool if x != c])]
                    candidate += _optimal_total(sub)
                if abs(candidate - target) <= _TIE_RTOL * max(1.0, abs(target)):
                    chosen = (i, r, c)
                    break
            if chosen:
                break
        if chosen is None:  # numerically impossible unless the tolerance misfires
            raise RuntimeError("assignment refinement failed to reproduce the optimum")
        i, r, c = chosen
        pairs.append((r, c))
        fixed += matrix[r, c]
        row_pool = row_pool[i + 1 :]
        col_pool.remove(c)
    return pairs


def gated_match(
    track_boxes: list[Box], det_boxes: list[Box], iou_gate: float
) -> MatchResult:
    """Associate detections to tracks by box IoU, demoting pairs below the gate."""
    result = MatchResult()
    if not track_boxes or not det_boxes:
        result.unmatched_tracks = list(range(len(track_boxes)))
        result.unmatched_detections = list(range(len(det_boxes)))
        return result

    iou = np.array([[box_iou(t, d) for d in det_boxes] for t in track_boxes])
    pairs = solve_assignment(1.0 - iou)

    matched_t: set[int] = set()
    matched_d: set[int] = set()
    for r, c in pairs:
        if iou[r, c] < iou_gate:
            continue
        result.matches.append((r, c))
        matched_t.add(r)
        matched_d.add(c)
    result.unmatched_tracks = [i for i in range(len(track_boxes)) if i not in matched_t]
    result.unmatched_detections = [j for j in range(len(det_boxes)) if j not in matched_d]
    return result
