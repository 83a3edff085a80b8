"""Tracking-by-segmentation control plane.

Masks propagate frame to frame through a pluggable segmentation backend;
detections only seed and refresh prompts. The package provides the mask
algebra, assignment, trajectory lifecycle, occlusion arbitration, the engine
loop, a deterministic synthetic backend for verification, and CLEAR/IDF1
evaluation.
"""

from .assignment import MatchResult, gated_match, solve_assignment
from .engine import (
    BackendError,
    FrameResult,
    SegmentationBackend,
    TrackingEngine,
    TrackRecord,
    run_sequence,
    trace_events,
)
from .interaction import (
    OcclusionPair,
    PurgeDirective,
    detect_occlusion_pairs,
    identify_occluded,
    resolve_interactions,
)
from .masks import (
    Box,
    CorruptMaskError,
    ImageGrid,
    Mask,
    box_from_mask,
    box_iou,
    box_region_overlap,
    box_to_mask,
    clamp_box,
    decode_mask,
    encode_mask,
    mask_from_text,
    mask_iou,
    mask_to_text,
    untracked_region,
)
from .metrics import EvalReport, GtEntry, PredEntry, compute_clear, compute_idf1, match_frame
from .synthetic import (
    SCENARIOS,
    SceneObject,
    SceneScript,
    SimParams,
    SyntheticBackend,
    generate_detections,
    ground_truth_entries,
    load_scenario,
    occluded_fraction,
    render_ground_truth,
)
from .trajectory import (
    Detection,
    TrackerConfig,
    Trajectory,
    TrajectoryState,
    addition_filter,
    classify_state,
    logits_variance,
    new_trajectory,
    should_reconstruct,
    should_remove,
    update_trajectory,
)

__version__ = "0.1.0"
