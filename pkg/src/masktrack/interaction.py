"""Cross-object occlusion arbitration.

When two masks overlap heavily one tracker is probably segmenting the other's
object. The loser is picked by logits gap when the gap is decisive, otherwise
by logits variance over the recent window: an abrupt score drop leaves a
*smaller* window variance than a long gradual decline, and the abrupt drop is
the occluded one. Every decision function here is pure.
"""

from __future__ import annotations

from dataclasses import dataclass

from .masks import Mask, mask_iou
from .trajectory import TrackerConfig, Trajectory, logits_variance


@dataclass(frozen=True)
class OcclusionPair:
    id_a: int
    id_b: int
    miou: float


@dataclass(frozen=True)
class PurgeDirective:
    """Drop one trajectory's memory entry for one frame."""

    trajectory_id: int
    frame: int


def detect_occlusion_pairs(masks: dict[int, Mask], cfg: TrackerConfig) -> list[OcclusionPair]:
    """All id pairs whose mask IoU exceeds the occlusion threshold.

    Sorted by descending overlap, then ascending (id_a, id_b).
    """
    ids = sorted(masks)
    pairs = []
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            value = mask_iou(masks[a], masks[b])
            if value > cfg.miou_occlusion_threshold:
                pairs.append(OcclusionPair(a, b, value))
    pairs.sort(key=lambda p: (-p.miou, p.id_a, p.id_b))
    return pairs


def identify_occluded(traj_a: Trajectory, traj_b: Trajectory, cfg: TrackerConfig) -> int:
    """Pick the occluded member of an overlapping pair.

    Decisive logits gap -> lower score loses. Otherwise smaller window
    variance loses; with too little history on either side, fall back to the
    score comparison. Exact ties go to the higher id.
    """
    if not traj_a.logits_history or not traj_b.logits_history:
        raise ValueError("both trajectories need at least one logits sample")
    la = traj_a.logits_history[-1]
    lb = traj_b.logits_history[-1]
    if abs(la - lb) > cfg.logits_sig_delta:
        return traj_a.id if la < lb else traj_b.id

    if len(traj_a.logits_history) >= 2 and len(traj_b.logits_history) >= 2:
        va = logits_variance(traj_a.logits_history, cfg.variance_window)
        vb = logits_variance(traj_b.logits_history, cfg.variance_window)
        if va != vb:
            return traj_a.id if va < vb else traj_b.id
    elif la != lb:
        return traj_a.id if la < lb else traj_b.id
    return max(traj_a.id, traj_b.id)


def resolve_interactions(
    trajectories: dict[int, Trajectory],
    masks: dict[int, Mask],
    frame: int,
    cfg: TrackerConfig,
) -> list[PurgeDirective]:
    """Purge directives for this frame's occlusion pairs.

    Pairs are handled in descending-overlap order; a trajectory gets at most
    one directive, and once a pair names a survivor that survivor cannot be
    purged by a later pair the same frame.
    """
    directives = []
    purged: set[int] = set()
    survivors: set[int] = set()
    for pair in detect_occlusion_pairs(masks, cfg):
        occluded = identify_occluded(trajectories[pair.id_a], trajectories[pair.id_b], cfg)
        other = pair.id_b if occluded == pair.id_a else pair.id_a
        if occluded in purged or occluded in survivors:
            continue
        purged.add(occluded)
        survivors.add(other)
        directives.append(PurgeDirective(occluded, frame))
    return directives
