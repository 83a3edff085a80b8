"""File formats: MOTChallenge-style CSV for detections, ground truth and
results, JSON-lines trace logs, and report serialization.

Rows are ``frame,id,x,y,w,h,conf,class,vis`` with 1-based frames and integer
pixel coordinates. Detection rows carry id -1 and vis -1; ground-truth rows
use conf as the consider flag (0 marks an ignore region) and vis as the
visibility ratio. Floats are written with repr so parse(render(x)) == x.
"""

from __future__ import annotations

import json
from collections import defaultdict
from typing import Iterable, Mapping, Sequence

from .engine import FrameResult, trace_events
from .masks import Box
from .metrics import EvalReport, GtEntry, PredEntry
from .trajectory import Detection


def _fmt(value: float) -> str:
    return repr(int(value)) if float(value).is_integer() else repr(value)


def _split_row(line: str, lineno: int) -> list[str]:
    parts = [p.strip() for p in line.split(",")]
    if len(parts) != 9:
        raise ValueError(f"line {lineno}: expected 9 fields, got {len(parts)}")
    return parts


def _parse_row(line: str, lineno: int) -> tuple[int, int, Box, float, int, float]:
    parts = _split_row(line, lineno)
    try:
        frame = int(parts[0])
        obj_id = int(parts[1])
        box = Box(int(parts[2]), int(parts[3]), int(parts[4]), int(parts[5]))
        conf = float(parts[6])
        class_id = int(parts[7])
        vis = float(parts[8])
    except ValueError as e:
        raise ValueError(f"line {lineno}: {e}") from None
    if frame < 1:
        raise ValueError(f"line {lineno}: frames are 1-based, got {frame}")
    return frame, obj_id, box, conf, class_id, vis


def parse_detections(path: str) -> dict[int, list[Detection]]:
    """Per-frame detection lists; frames must be non-decreasing in the file."""
    stream: dict[int, list[Detection]] = defaultdict(list)
    last_frame = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            frame, _, box, conf, class_id, _ = _parse_row(line, lineno)
            if frame < last_frame:
                raise ValueError(f"line {lineno}: frame {frame} after frame {last_frame}")
            last_frame = frame
            stream[frame].append(Detection(box, conf, class_id))
    return dict(stream)


def render_detections(stream: Mapping[int, Sequence[Detection]]) -> str:
    lines = []
    for frame in sorted(stream):
        for det in stream[frame]:
            b = det.box
            lines.append(
                f"{frame},-1,{b.x},{b.y},{b.w},{b.h},{_fmt(det.confidence)},{det.class_id},-1"
            )
    return "\n".join(lines) + ("\n" if lines else "")


def parse_gt(path: str) -> list[GtEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            frame, obj_id, box, conf, class_id, _ = _parse_row(line, lineno)
            entries.append(GtEntry(frame, obj_id, box, class_id, ignore=conf == 0))
    return entries


def render_gt(entries: Iterable[GtEntry], visibility: Mapping[tuple[int, int], float] | None = None) -> str:
    lines = []
    for e in entries:
        vis = (visibility or {}).get((e.frame, e.id), 1.0)
        conf = 0 if e.ignore else 1
        lines.append(
            f"{e.frame},{e.id},{e.box.x},{e.box.y},{e.box.w},{e.box.h},{conf},{e.class_id},{_fmt(vis)}"
        )
    return "\n".join(lines) + ("\n" if lines else "")


def parse_results(path: str) -> list[PredEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            frame, obj_id, box, _, class_id, _ = _parse_row(line, lineno)
            entries.append(PredEntry(frame, obj_id, box, class_id))
    return entries


def render_results(results: Sequence[FrameResult]) -> str:
    """Result rows from engine output; conf carries the logits score, or 1 on
    a track's initialization frame (no propagation yet)."""
    lines = []
    for res in results:
        for rec in res.records:
            b = rec.box
            conf = "1" if rec.logits is None else _fmt(rec.logits)
            lines.append(
                f"{res.frame},{rec.track_id},{b.x},{b.y},{b.w},{b.h},{conf},{rec.class_id},1"
            )
    return "\n".join(lines) + ("\n" if lines else "")


def render_trace(results: Sequence[FrameResult]) -> str:
    lines = [json.dumps(event) for event in trace_events(results)]
    return "\n".join(lines) + ("\n" if lines else "")


def results_to_pred_entries(results: Sequence[FrameResult]) -> list[PredEntry]:
    return [
        PredEntry(res.frame, rec.track_id, rec.box, rec.class_id)
        for res in results
        for rec in res.records
    ]


def write_report(report: EvalReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
