"""Per-frame orchestration of the tracking pipeline over an abstract
segmentation backend.

Frame order is fixed: propagate, update trajectories, arbitrate occlusions,
associate detections, recondition, add, remove. Detections only ever feed
initialization and reconditioning prompts; tracking itself is the backend's
mask propagation. One engine instance is a single-writer loop for one
sequence; run as many engines concurrently as you like, each with its own
backend session.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Protocol, Sequence

from .assignment import gated_match
from .interaction import PurgeDirective, resolve_interactions
from .masks import Box, ImageGrid, Mask, untracked_region
from .trajectory import (
    Detection,
    TrackerConfig,
    Trajectory,
    TrajectoryState,
    addition_filter,
    new_trajectory,
    should_reconstruct,
    should_remove,
    update_trajectory,
)


class BackendError(RuntimeError):
    """Backend failure; carries the frame at which the sequence aborted."""

    def __init__(self, frame: int, message: str):
        super().__init__(f"frame {frame}: {message}")
        self.frame = frame


class SegmentationBackend(Protocol):
    """What the engine needs from any mask tracker.

    Handles are opaque and unique; ``propagate`` must report every live
    handle exactly once, and a purge delivered before the next propagation
    must affect that propagation.
    """

    def init_object(self, prompt_box: Box, frame: int) -> int: ...

    def propagate(self, frame: int) -> dict[int, tuple[Mask, float]]: ...

    def purge_memory(self, handle: int, frame: int) -> None: ...

    def recondition(self, handle: int, prompt_box: Box, frame: int) -> None: ...

    def drop_object(self, handle: int) -> None: ...


@dataclass(frozen=True)
class TrackRecord:
    track_id: int
    box: Box
    state: TrajectoryState
    logits: float | None
    class_id: int


@dataclass
class FrameResult:
    frame: int
    records: list[TrackRecord] = field(default_factory=list)
    purges: list[PurgeDirective] = field(default_factory=list)
    reconditions: list[int] = field(default_factory=list)
    additions: list[int] = field(default_factory=list)
    removals: list[int] = field(default_factory=list)


class TrackingEngine:
    def __init__(
        self,
        backend: SegmentationBackend,
        grid: ImageGrid,
        cfg: TrackerConfig | None = None,
        *,
        enable_addition: bool = True,
        enable_interaction: bool = True,
        enable_reconstruction: bool = True,
    ):
        self.backend = backend
        self.grid = grid
        self.cfg = cfg or TrackerConfig()
        self.enable_addition = enable_addition
        self.enable_interaction = enable_interaction
        self.enable_reconstruction = enable_reconstruction
        self.trajectories: dict[int, Trajectory] = {}
        self._handle_of: dict[int, int] = {}
        self._next_id = 1
        self._last_frame: int | None = None
        self._bootstrapped = False

    def step(self, frame: int, detections: Sequence[Detection]) -> FrameResult:
        """Process one frame; frames must arrive in strictly increasing order."""
        if self._last_frame is not None and frame <= self._last_frame:
            raise ValueError(f"frame {frame} is not after frame {self._last_frame}")
        self._last_frame = frame
        first_step = not self._bootstrapped
        self._bootstrapped = True
        cfg = self.cfg
        result = FrameResult(frame=frame)

        # 1-2. propagate and fold the new masks/logits into every live track
        try:
            propagated = self.backend.propagate(frame)
        except Exception as e:
            raise BackendError(frame, str(e)) from e
        live_handles = set(self._handle_of.values())
        if set(propagated) != live_handles:
            raise BackendError(frame, "propagate did not report every live handle exactly once")
        track_of_handle = {h: tid for tid, h in self._handle_of.items()}
        current_masks: dict[int, Mask] = {}
        for handle in sorted(propagated, key=lambda h: track_of_handle[h]):
            mask, logits = propagated[handle]
            traj = self.trajectories[track_of_handle[handle]]
            update_trajectory(traj, mask, logits, frame, cfg)
            current_masks[traj.id] = mask

        # 3. occlusion arbitration, purges delivered before the next propagate
        if self.enable_interaction:
            result.purges = resolve_interactions(self.trajectories, current_masks, frame, cfg)
            for directive in result.purges:
                self._call_backend(
                    frame,
                    self.backend.purge_memory,
                    self._handle_of[directive.trajectory_id],
                    frame,
                )

        # 4. associate confident detections with current track boxes
        high_conf = [d for d in detections if d.confidence > cfg.det_conf_threshold]
        track_ids = sorted(
            tid for tid, t in self.trajectories.items() if t.last_box is not None
        )
        match = gated_match(
            [self.trajectories[tid].last_box for tid in track_ids],
            [d.box for d in high_conf],
            cfg.match_iou_gate,
        )

        # 5. quality reconstruction for pending tracks that matched well
        if self.enable_reconstruction:
            for t_idx, d_idx in match.matches:
                traj = self.trajectories[track_ids[t_idx]]
                det = high_conf[d_idx]
                if should_reconstruct(traj, det, cfg):
                    self._call_backend(
                        frame, self.backend.recondition, self._handle_of[traj.id], det.box, frame
                    )
                    traj.last_conditioning_frame = frame
                    traj.logits_history.clear()  # fresh prompt, fresh statistics
                    result.reconditions.append(traj.id)

        # 6. admit unmatched detections that fall in the untracked region;
        # with addition disabled only the first frame initializes (static
        # single-prompt usage), nothing joins later
        if self.enable_addition or first_step:
            region = untracked_region(self.grid, list(current_masks.values()))
            for det in addition_filter(high_conf, match, region, cfg):
                handle = self._call_backend(frame, self.backend.init_object, det.box, frame)
                traj = new_trajectory(self._next_id, det.box, frame, det.class_id)
                self._next_id += 1
                self.trajectories[traj.id] = traj
                self._handle_of[traj.id] = handle
                result.additions.append(traj.id)

        # 7. drop tracks lost beyond tolerance
        for tid in sorted(self.trajectories):
            traj = self.trajectories[tid]
            if should_remove(traj, cfg):
                self._call_backend(frame, self.backend.drop_object, self._handle_of[tid])
                del self.trajectories[tid]
                del self._handle_of[tid]
                result.removals.append(tid)

        # 8. emit
        for tid in sorted(self.trajectories):
            traj = self.trajectories[tid]
            if traj.state >= cfg.emit_min_state and traj.last_box is not None:
                result.records.append(
                    TrackRecord(tid, traj.last_box, traj.state, traj.latest_logits, traj.class_id)
                )
        return result

    def _call_backend(self, frame: int, fn, *args):
        try:
            return fn(*args)
        except Exception as e:
            raise BackendError(frame, str(e)) from e


def run_sequence(
    n_frames: int,
    detection_stream: Mapping[int, Sequence[Detection]],
    backend: SegmentationBackend,
    grid: ImageGrid,
    cfg: TrackerConfig | None = None,
    *,
    enable_addition: bool = True,
    enable_interaction: bool = True,
    enable_reconstruction: bool = True,
) -> list[FrameResult]:
    """Drive frames 1..n_frames from a per-frame detection mapping."""
    engine = TrackingEngine(
        backend,
        grid,
        cfg,
        enable_addition=enable_addition,
        enable_interaction=enable_interaction,
        enable_reconstruction=enable_reconstruction,
    )
    return [engine.step(f, detection_stream.get(f, [])) for f in range(1, n_frames + 1)]


def trace_events(results: Sequence[FrameResult]) -> Iterator[dict]:
    """Lifecycle events in pipeline order, one dict per event, bit-stable."""
    for res in results:
        for directive in res.purges:
            yield {"frame": res.frame, "event": "purge", "id": directive.trajectory_id}
        for tid in res.reconditions:
            yield {"frame": res.frame, "event": "recondition", "id": tid}
        for tid in res.additions:
            yield {"frame": res.frame, "event": "add", "id": tid}
        for tid in res.removals:
            yield {"frame": res.frame, "event": "remove", "id": tid}
