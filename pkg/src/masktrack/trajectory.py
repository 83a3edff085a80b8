"""Trajectory lifecycle: state classification, logits statistics, and the
addition / removal / reconstruction predicates.

States order as lost < suspicious < pending < reliable. A trajectory is lost
exactly while its latest logits sit at or below the lowest threshold, and the
lost-frame counter runs only inside that state.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, fields
from enum import IntEnum

from .masks import Box, Mask, box_from_mask, box_region_overlap
from .assignment import MatchResult


class TrajectoryState(IntEnum):
    LOST = 0
    SUSPICIOUS = 1
    PENDING = 2
    RELIABLE = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "TrajectoryState":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown trajectory state {label!r}") from None


@dataclass
class TrackerConfig:
    """Every tracking threshold in one validated record.

    Defaults are the published operating point; per-sequence detection
    thresholds are supplied by the caller, never auto-tuned.
    """

    tau_r: float = 8.0
    tau_p: float = 6.0
    tau_s: float = 2.0
    tolerance_frames: int = 25
    r_threshold: float = 0.5
    variance_window: int = 10
    det_conf_threshold: float = 0.5
    miou_occlusion_threshold: float = 0.8
    logits_sig_delta: float = 1.0
    match_iou_gate: float = 0.3
    emit_min_state: TrajectoryState = TrajectoryState.PENDING

    def __post_init__(self) -> None:
        if isinstance(self.emit_min_state, str):
            self.emit_min_state = TrajectoryState.from_label(self.emit_min_state)
        if not (self.tau_r > self.tau_p > self.tau_s):
            raise ValueError(
                f"need tau_r > tau_p > tau_s, got {self.tau_r}, {self.tau_p}, {self.tau_s}"
            )
        if self.tolerance_frames < 1:
            raise ValueError("tolerance_frames must be >= 1")
        if self.variance_window < 2:
            raise ValueError("variance_window must be >= 2")
        for name in ("r_threshold", "det_conf_threshold", "miou_occlusion_threshold",
                     "match_iou_gate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.logits_sig_delta < 0:
            raise ValueError("logits_sig_delta must be >= 0")

    def to_json(self) -> str:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["emit_min_state"] = self.emit_min_state.label
        return json.dumps(data, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "TrackerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "TrackerConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class Detection:
    """One detector proposal."""

    box: Box
    confidence: float
    class_id: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass
class Trajectory:
    """One tracked object and its rolling quality statistics."""

    id: int
    class_id: int = 0
    state: TrajectoryState = TrajectoryState.RELIABLE
    logits_history: deque[float] = field(default_factory=deque)
    frames_lost: int = 0
    last_mask: Mask | None = None
    last_box: Box | None = None
    created_frame: int = 0
    last_conditioning_frame: int = 0

    @property
    def latest_logits(self) -> float | None:
        return self.logits_history[-1] if self.logits_history else None


def new_trajectory(track_id: int, prompt_box: Box, frame: int, class_id: int = 0) -> Trajectory:
    """Fresh trajectory conditioned on a prompt this frame.

    Starts reliable with an empty history; the first propagation fills both.
    """
    return Trajectory(
        id=track_id,
        class_id=class_id,
        state=TrajectoryState.RELIABLE,
        last_box=prompt_box,
        created_frame=frame,
        last_conditioning_frame=frame,
    )


def classify_state(logits: float, cfg: TrackerConfig) -> TrajectoryState:
    """Four-level quality state from the latest logits score.

    Reliable strictly above tau_r, lost at or below tau_s, the two middle
    bands half-open in between.
    """
    if math.isnan(logits):
        raise ValueError("logits is NaN")
    if logits > cfg.tau_r:
        return TrajectoryState.RELIABLE
    if logits > cfg.tau_p:
        return TrajectoryState.PENDING
    if logits > cfg.tau_s:
        return TrajectoryState.SUSPICIOUS
    return TrajectoryState.LOST


def logits_variance(history, n: int) -> float:
    """Population variance of the most recent min(n, len) logits."""
    values = list(history)[-n:] if n > 0 else []
    if not values:
        raise ValueError("logits history is empty")
    mean = sum(values) / len(values)
    return sum((v - mean) ** 2 for v in values) / len(values)


def update_trajectory(
    traj: Trajectory, mask: Mask | None, logits: float, frame: int, cfg: TrackerConfig
) -> Trajectory:
    """Fold one propagation step into the trajectory (mutates and returns it)."""
    traj.logits_history.append(logits)
    while len(traj.logits_history) > cfg.variance_window:
        traj.logits_history.popleft()
    traj.state = classify_state(logits, cfg)
    if traj.state == TrajectoryState.LOST:
        traj.frames_lost += 1
    else:
        traj.frames_lost = 0
    traj.last_mask = mask
    traj.last_box = box_from_mask(mask) if mask is not None else None
    return traj


def should_remove(traj: Trajectory, cfg: TrackerConfig) -> bool:
    """Lost strictly beyond the tolerance window."""
    return traj.state == TrajectoryState.LOST and traj.frames_lost > cfg.tolerance_frames


def addition_filter(
    dets: list[Detection], match: MatchResult, region: Mask, cfg: TrackerConfig
) -> list[Detection]:
    """Three-stage gate for new-object prompts.

    Keeps detections that are high-confidence, were left unmatched by the
    association step, and sit mostly inside the untracked region.
    """
    accepted = []
    for idx in match.unmatched_detections:
        det = dets[idx]
        if det.confidence <= cfg.det_conf_threshold:
            continue
        if box_region_overlap(det.box, region) > cfg.r_threshold:
            accepted.append(det)
    return accepted


def should_reconstruct(
    traj: Trajectory, matched_det: Detection | None, cfg: TrackerConfig
) -> bool:
    """Recondition only a pending trajectory that matched a confident detection."""
    return (
        traj.state == TrajectoryState.PENDING
        and matched_det is not None
        and matched_det.confidence > cfg.det_conf_threshold
    )
