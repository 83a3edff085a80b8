"""Box-level tracking evaluation: CLEAR counts (MOTA, FP, FN, IDSW, MT, ML)
and identity-level IDF1, both at a configurable IoU threshold.

Frame matching keeps each ground-truth id's last known prediction while the
pair stays above threshold and re-solves the remainder with the assignment
module, maximizing IoU. Identity switches are counted against the last known
match of each ground truth, across gaps. Ignore-flagged ground truth never
grants a true positive and only suppresses false positives.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .assignment import gated_match, solve_assignment
from .masks import Box, box_iou


@dataclass(frozen=True)
class GtEntry:
    frame: int
    id: int
    box: Box
    class_id: int = 0
    ignore: bool = False


@dataclass(frozen=True)
class PredEntry:
    frame: int
    id: int
    box: Box
    class_id: int = 0


@dataclass
class EvalReport:
    mota: float
    idf1: float
    idsw: int
    fp: int
    fn: int
    tp: int
    mt: int
    ml: int
    iou_threshold: float
    gt_total: int

    def to_dict(self) -> dict:
        return {
            "MOTA": self.mota,
            "IDF1": self.idf1,
            "IDSW": self.idsw,
            "FP": self.fp,
            "FN": self.fn,
            "TP": self.tp,
            "MT": self.mt,
            "ML": self.ml,
            "iou_threshold": self.iou_threshold,
            "gt_total": self.gt_total,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        headers = ["MOTA", "IDF1", "IDSW", "FP", "FN", "TP", "MT", "ML"]
        values = [f"{self.mota:.3f}", f"{self.idf1:.3f}", str(self.idsw), str(self.fp),
                  str(self.fn), str(self.tp), str(self.mt), str(self.ml)]
        widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
        head = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
        row = "  ".join(v.rjust(w) for v, w in zip(values, widths))
        return head + "\n" + row


@dataclass
class FrameMatch:
    """One frame's matching outcome."""

    matches: dict[int, int]
    tp: int
    fp: int
    fn: int


def _suppressed(pred_box: Box, ignore_boxes: list[Box]) -> bool:
    # majority of the prediction lies inside an ignore region
    for ig in ignore_boxes:
        ix = max(pred_box.x, ig.x)
        iy = max(pred_box.y, ig.y)
        ix2 = min(pred_box.x + pred_box.w, ig.x + ig.w)
        iy2 = min(pred_box.y + pred_box.h, ig.y + ig.h)
        inter = max(0, ix2 - ix) * max(0, iy2 - iy)
        if inter / pred_box.area > 0.5:
            return True
    return False


def match_frame(
    gt_entries: list[GtEntry],
    pred_entries: list[PredEntry],
    prev_matches: dict[int, int],
    iou_threshold: float,
) -> FrameMatch:
    """Match one frame's boxes, honoring previous associations first."""
    consider = {g.id: g for g in gt_entries if not g.ignore}
    ignore_boxes = [g.box for g in gt_entries if g.ignore]
    preds = {p.id: p for p in pred_entries}

    matches: dict[int, int] = {}
    for gt_id in sorted(consider):
        pred_id = prev_matches.get(gt_id)
        if pred_id is None or pred_id in matches.values() or pred_id not in preds:
            continue
        if box_iou(consider[gt_id].box, preds[pred_id].box) >= iou_threshold:
            matches[gt_id] = pred_id

    free_gts = [consider[i] for i in sorted(consider) if i not in matches]
    taken = set(matches.values())
    free_preds = [preds[i] for i in sorted(preds) if i not in taken]
    if free_gts and free_preds:
        # gate at the threshold itself: kept pairs are exactly the qualified ones
        mr = gated_match([g.box for g in free_gts], [p.box for p in free_preds],
                         iou_threshold)
        for gi, pi in mr.matches:
            matches[free_gts[gi].id] = free_preds[pi].id

    matched_preds = set(matches.values())
    fp = sum(
        1
        for pid in sorted(preds)
        if pid not in matched_preds and not _suppressed(preds[pid].box, ignore_boxes)
    )
    return FrameMatch(
        matches=matches,
        tp=len(matches),
        fp=fp,
        fn=len(consider) - len(matches),
    )


def _check_unique(entries, label: str) -> None:
    seen = set()
    for e in entries:
        key = (e.frame, e.id)
        if key in seen:
            raise ValueError(f"duplicate (frame, id) {key} in {label} stream")
        seen.add(key)


def _by_frame(entries) -> dict[int, list]:
    grouped = defaultdict(list)
    for e in entries:
        grouped[e.frame].append(e)
    return grouped


def _run_frames(gt_stream, pred_stream, iou_threshold):
    _check_unique(gt_stream, "ground-truth")
    _check_unique(pred_stream, "prediction")
    gt_frames = _by_frame(gt_stream)
    pred_frames = _by_frame(pred_stream)

    tp = fp = fn = idsw = 0
    last_match: dict[int, int] = {}
    gt_frame_count: dict[int, int] = defaultdict(int)
    gt_matched_count: dict[int, int] = defaultdict(int)

    for frame in sorted(set(gt_frames) | set(pred_frames)):
        gts = gt_frames.get(frame, [])
        fm = match_frame(gts, pred_frames.get(frame, []), last_match, iou_threshold)
        tp += fm.tp
        fp += fm.fp
        fn += fm.fn
        for g in gts:
            if not g.ignore:
                gt_frame_count[g.id] += 1
        for gt_id, pred_id in fm.matches.items():
            gt_matched_count[gt_id] += 1
            if gt_id in last_match and last_match[gt_id] != pred_id:
                idsw += 1
            last_match[gt_id] = pred_id
    return tp, fp, fn, idsw, gt_frame_count, gt_matched_count


def matched_frames_per_gt(gt_stream, pred_stream, iou_threshold) -> dict[int, int]:
    """Frames on which each ground-truth id was matched (ids with 0 included)."""
    _, _, _, _, frame_count, matched = _run_frames(gt_stream, pred_stream, iou_threshold)
    return {gt_id: matched.get(gt_id, 0) for gt_id in frame_count}


def compute_idf1(gt_stream, pred_stream, iou_threshold: float) -> float:
    """Identity F1 under the best global gt-id/pred-id assignment."""
    _check_unique(gt_stream, "ground-truth")
    _check_unique(pred_stream, "prediction")
    gt_frames = _by_frame(gt_stream)
    pred_frames = _by_frame(pred_stream)

    gt_ids = sorted({g.id for gs in gt_frames.values() for g in gs if not g.ignore})
    pred_ids = sorted({p.id for ps in pred_frames.values() for p in ps})
    gt_total = sum(1 for gs in gt_frames.values() for g in gs if not g.ignore)
    pred_total = sum(len(ps) for ps in pred_frames.values())
    if not gt_ids or not pred_ids:
        return 0.0

    gt_pos = {g: i for i, g in enumerate(gt_ids)}
    pred_pos = {p: j for j, p in enumerate(pred_ids)}
    co = np.zeros((len(gt_ids), len(pred_ids)), dtype=np.int64)
    for frame in sorted(set(gt_frames) & set(pred_frames)):
        for g in gt_frames[frame]:
            if g.ignore:
                continue
            for p in pred_frames[frame]:
                if box_iou(g.box, p.box) >= iou_threshold:
                    co[gt_pos[g.id], pred_pos[p.id]] += 1

    pairs = solve_assignment(-co.astype(float))
    idtp = int(sum(co[i, j] for i, j in pairs))
    return 2.0 * idtp / (gt_total + pred_total)


def compute_clear(gt_stream, pred_stream, iou_threshold: float) -> EvalReport:
    """Full report: CLEAR counts plus IDF1 at the same threshold."""
    tp, fp, fn, idsw, frame_count, matched_count = _run_frames(
        gt_stream, pred_stream, iou_threshold
    )
    gt_total = sum(frame_count.values())
    mt = ml = 0
    for gt_id, total in frame_count.items():
        ratio = matched_count.get(gt_id, 0) / total
        if ratio >= 0.8:
            mt += 1
        if ratio <= 0.2:
            ml += 1
    if gt_total:
        mota = 1.0 - (fn + fp + idsw) / gt_total
    else:
        mota = 1.0 if fp + idsw == 0 else 0.0
    return EvalReport(
        mota=mota,
        idf1=compute_idf1(gt_stream, pred_stream, iou_threshold),
        idsw=idsw,
        fp=fp,
        fn=fn,
        tp=tp,
        mt=mt,
        ml=ml,
        iou_threshold=iou_threshold,
        gt_total=gt_total,
    )
