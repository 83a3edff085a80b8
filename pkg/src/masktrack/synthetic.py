"""Deterministic synthetic world and segmentation backend.

Scripts describe rectangles moving between waypoints with a z order; the
backend emulates a mask tracker's documented failure modes on top of that
geometry: a logits score that decays linearly with staleness and occlusion,
a seven-entry memory window, and identity theft when a heavy occlusion frame
stays in memory. Everything is a pure function of (script, params, calls).

Logits model per handle:

    logits = max(0, l_max - a*(frame - last_conditioning)
                       - b*occluded_fraction
                       - c*poisoned_entries_in_memory)

While the lock target is more than 80% covered the handle emits the
*occluder's* visible mask instead of its own - the mis-segmentation that the
occlusion arbiter exists to catch. If such a frame's memory entry survives
into the next propagation, the lock permanently switches to the occluder.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, fields

import numpy as np

from .masks import Box, ImageGrid, Mask, box_iou, encode_mask
from .trajectory import Detection

HEAVY_OCCLUSION = 0.8
MEMORY_RECENT = 6  # non-conditional entries kept besides the conditional one


@dataclass(frozen=True)
class SceneObject:
    key: str
    birth: int
    death: int
    waypoints: tuple[tuple[int, Box], ...]
    z: int
    class_id: int = 1

    def alive(self, frame: int) -> bool:
        return self.birth <= frame <= self.death


@dataclass(frozen=True)
class SceneScript:
    grid: ImageGrid
    objects: tuple[SceneObject, ...]

    def __post_init__(self) -> None:
        zs = [o.z for o in self.objects]
        if len(set(zs)) != len(zs):
            raise ValueError("z depth values must be unique")
        keys = [o.key for o in self.objects]
        if len(set(keys)) != len(keys):
            raise ValueError("object keys must be unique")
        for obj in self.objects:
            if not obj.waypoints:
                raise ValueError(f"object {obj.key} has no waypoints")
            frames = [f for f, _ in obj.waypoints]
            if frames != sorted(set(frames)):
                raise ValueError(f"object {obj.key} waypoints must strictly increase")
            if obj.birth > frames[0]:
                raise ValueError(f"object {obj.key} born after its first waypoint")
            if obj.birth > obj.death:
                raise ValueError(f"object {obj.key} dies before it is born")
            for _, box in obj.waypoints:
                if box.x < 0 or box.y < 0 or box.x + box.w > self.grid.width \
                        or box.y + box.h > self.grid.height:
                    raise ValueError(f"object {obj.key} waypoint box {box} leaves the grid")

    @property
    def last_frame(self) -> int:
        return max(o.death for o in self.objects)

    def to_dict(self) -> dict:
        return {
            "grid": {"width": self.grid.width, "height": self.grid.height},
            "objects": [
                {
                    "key": o.key,
                    "birth": o.birth,
                    "death": o.death,
                    "z": o.z,
                    "class_id": o.class_id,
                    "waypoints": [[f, [b.x, b.y, b.w, b.h]] for f, b in o.waypoints],
                }
                for o in self.objects
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "SceneScript":
        grid = ImageGrid(data["grid"]["width"], data["grid"]["height"])
        objects = tuple(
            SceneObject(
                key=o["key"],
                birth=o["birth"],
                death=o["death"],
                z=o["z"],
                class_id=o.get("class_id", 1),
                waypoints=tuple((f, Box(*xywh)) for f, xywh in o["waypoints"]),
            )
            for o in data["objects"]
        )
        return cls(grid, objects)

    @classmethod
    def from_json(cls, text: str) -> "SceneScript":
        return cls.from_dict(json.loads(text))


@dataclass
class SimParams:
    """Knobs of the synthetic logits/detector model, all seed-driven."""

    l_max: float = 9.0
    drift_per_frame: float = 0.02
    occlusion_penalty: float = 6.0
    corruption_penalty: float = 4.0
    det_noise: int = 0
    det_dropout: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.l_max <= 0:
            raise ValueError("l_max must be positive")
        for name in ("drift_per_frame", "occlusion_penalty", "corruption_penalty"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.det_noise < 0:
            raise ValueError("det_noise must be >= 0")
        if not 0.0 <= self.det_dropout <= 1.0:
            raise ValueError("det_dropout must be a probability")

    def to_json(self) -> str:
        return json.dumps({f.name: getattr(self, f.name) for f in fields(self)}, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "SimParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown simulation keys: {sorted(unknown)}")
        return cls(**data)


def interpolate_box(obj: SceneObject, frame: int) -> Box:
    """Object rectangle at ``frame``, linear between waypoints, held outside."""
    points = obj.waypoints
    if frame <= points[0][0]:
        return points[0][1]
    if frame >= points[-1][0]:
        return points[-1][1]
    for (f0, b0), (f1, b1) in zip(points, points[1:]):
        if f0 <= frame <= f1:
            t = (frame - f0) / (f1 - f0)
            return Box(
                int(round(b0.x + t * (b1.x - b0.x))),
                int(round(b0.y + t * (b1.y - b0.y))),
                int(round(b0.w + t * (b1.w - b0.w))),
                int(round(b0.h + t * (b1.h - b0.h))),
            )
    raise AssertionError("unreachable: waypoints cover the interior")


def _check_frame(script: SceneScript, frame: int) -> None:
    if frame < 1 or frame > script.last_frame:
        raise ValueError(f"frame {frame} outside script span 1..{script.last_frame}")


def _rect_bitmap(grid: ImageGrid, box: Box) -> np.ndarray:
    bitmap = np.zeros((grid.height, grid.width), dtype=bool)
    bitmap[box.y : box.y + box.h, box.x : box.x + box.w] = True
    return bitmap


def _visible_bitmap(script: SceneScript, obj: SceneObject, frame: int) -> np.ndarray:
    bitmap = _rect_bitmap(script.grid, interpolate_box(obj, frame))
    for other in script.objects:
        if other.z > obj.z and other.alive(frame):
            bitmap &= ~_rect_bitmap(script.grid, interpolate_box(other, frame))
    return bitmap


def render_ground_truth(script: SceneScript, frame: int) -> dict[str, tuple[Mask, Box]]:
    """Visible-part mask and full rectangle box per alive object."""
    _check_frame(script, frame)
    out = {}
    for obj in script.objects:
        if obj.alive(frame):
            out[obj.key] = (
                encode_mask(_visible_bitmap(script, obj, frame), script.grid),
                interpolate_box(obj, frame),
            )
    return out


def occluded_fraction(script: SceneScript, obj: SceneObject, frame: int) -> float:
    """Share of the object's rectangle covered by nearer alive objects."""
    rect = _rect_bitmap(script.grid, interpolate_box(obj, frame))
    visible = _visible_bitmap(script, obj, frame)
    total = int(rect.sum())
    return (total - int(visible.sum())) / total


def dominant_occluder(script: SceneScript, obj: SceneObject, frame: int) -> SceneObject | None:
    """Nearer object covering the most of ``obj``; ties go to the nearest."""
    rect = _rect_bitmap(script.grid, interpolate_box(obj, frame))
    best: tuple[int, int] | None = None
    winner = None
    for other in script.objects:
        if other.z <= obj.z or not other.alive(frame):
            continue
        covered = int((rect & _rect_bitmap(script.grid, interpolate_box(other, frame))).sum())
        if covered == 0:
            continue
        rank = (covered, other.z)
        if best is None or rank > best:
            best = rank
            winner = other
    return winner


def generate_detections(script: SceneScript, frame: int, params: SimParams) -> list[Detection]:
    """Detector stand-in: jittered ground-truth boxes, occlusion-discounted
    confidence, seed-deterministic per (seed, frame)."""
    _check_frame(script, frame)
    rng = random.Random(f"{params.seed}:{frame}")
    detections = []
    for obj in sorted(script.objects, key=lambda o: o.key):
        if not obj.alive(frame):
            continue
        if rng.random() < params.det_dropout:
            continue
        occ = occluded_fraction(script, obj, frame)
        box = interpolate_box(obj, frame)
        if params.det_noise:
            n = params.det_noise
            x = box.x + rng.randint(-n, n)
            y = box.y + rng.randint(-n, n)
            w = max(1, box.w + rng.randint(-n, n))
            h = max(1, box.h + rng.randint(-n, n))
            x = min(max(x, 0), script.grid.width - 1)
            y = min(max(y, 0), script.grid.height - 1)
            w = min(w, script.grid.width - x)
            h = min(h, script.grid.height - y)
            box = Box(x, y, w, h)
        detections.append(Detection(box, 0.95 - 0.5 * occ, obj.class_id))
    return detections


def ground_truth_entries(
    script: SceneScript, n_frames: int
) -> tuple[list["GtEntry"], dict[tuple[int, int], float]]:
    """Evaluation stream for a script: full-rectangle boxes, 1-based ids in
    key order, plus a (frame, id) -> visibility map."""
    from .metrics import GtEntry  # local import keeps metrics optional here

    id_of = {obj.key: i + 1 for i, obj in enumerate(sorted(script.objects, key=lambda o: o.key))}
    entries = []
    visibility = {}
    for frame in range(1, n_frames + 1):
        for obj in sorted(script.objects, key=lambda o: o.key):
            if not obj.alive(frame):
                continue
            entries.append(GtEntry(frame, id_of[obj.key], interpolate_box(obj, frame),
                                   obj.class_id))
            visibility[(frame, id_of[obj.key])] = 1.0 - occluded_fraction(script, obj, frame)
    return entries, visibility


@dataclass
class _MemoryEntry:
    frame: int
    conditional: bool
    poisoned: bool = False
    occluder_key: str | None = None


@dataclass
class _HandleState:
    lock_key: str | None
    last_conditioning: int
    memory: list[_MemoryEntry] = field(default_factory=list)


class SyntheticBackend:
    """Seedable in-process segmentation backend over a scene script.

    One instance is one session; calls within a session are single-writer.
    """

    def __init__(self, script: SceneScript, params: SimParams | None = None):
        self.script = script
        self.params = params or SimParams()
        self._handles: dict[int, _HandleState] = {}
        self._next_handle = 1

    # -- backend contract ---------------------------------------------------

    def init_object(self, prompt_box: Box, frame: int) -> int:
        handle = self._next_handle
        self._next_handle += 1
        self._handles[handle] = _HandleState(
            lock_key=self._lock_target(prompt_box, frame),
            last_conditioning=frame,
            memory=[_MemoryEntry(frame, conditional=True)],
        )
        return handle

    def propagate(self, frame: int) -> dict[int, tuple[Mask, float]]:
        _check_frame(self.script, frame)
        out: dict[int, tuple[Mask, float]] = {}
        for handle in sorted(self._handles):
            st = self._handles[handle]
            self._apply_theft(st, frame)
            obj = self._object(st.lock_key)
            if obj is None or not obj.alive(frame):
                mask = encode_mask(
                    np.zeros(self.script.grid.area, dtype=bool), self.script.grid
                )
                logits = 0.0
                st.memory.append(_MemoryEntry(frame, conditional=False))
            else:
                occ = occluded_fraction(self.script, obj, frame)
                if occ > HEAVY_OCCLUSION:
                    occluder = dominant_occluder(self.script, obj, frame)
                    mask = encode_mask(
                        _visible_bitmap(self.script, occluder, frame), self.script.grid
                    )
                    entry = _MemoryEntry(frame, False, poisoned=True,
                                         occluder_key=occluder.key)
                else:
                    mask = encode_mask(
                        _visible_bitmap(self.script, obj, frame), self.script.grid
                    )
                    entry = _MemoryEntry(frame, False)
                corrupt = sum(1 for e in st.memory if e.poisoned)
                p = self.params
                logits = max(
                    0.0,
                    p.l_max
                    - p.drift_per_frame * (frame - st.last_conditioning)
                    - p.occlusion_penalty * occ
                    - p.corruption_penalty * corrupt,
                )
                st.memory.append(entry)
            self._trim_memory(st)
            out[handle] = (mask, logits)
        return out

    def purge_memory(self, handle: int, frame: int) -> None:
        st = self._state(handle)
        st.memory = [e for e in st.memory if e.conditional or e.frame != frame]

    def recondition(self, handle: int, prompt_box: Box, frame: int) -> None:
        st = self._state(handle)
        st.lock_key = self._lock_target(prompt_box, frame)
        st.last_conditioning = frame
        st.memory = [_MemoryEntry(frame, conditional=True)]

    def drop_object(self, handle: int) -> None:
        self._state(handle)
        del self._handles[handle]

    # -- internals ----------------------------------------------------------

    def _state(self, handle: int) -> _HandleState:
        if handle not in self._handles:
            raise ValueError(f"unknown handle {handle}")
        return self._handles[handle]

    def _object(self, key: str | None) -> SceneObject | None:
        for obj in self.script.objects:
            if obj.key == key:
                return obj
        return None

    def _lock_target(self, prompt_box: Box, frame: int) -> str | None:
        best_iou = 0.0
        best_key = None
        for obj in sorted(self.script.objects, key=lambda o: o.key):
            if not obj.alive(frame):
                continue
            iou = box_iou(prompt_box, interpolate_box(obj, frame))
            if iou > best_iou:
                best_iou = iou
                best_key = obj.key
        return best_key

    def _apply_theft(self, st: _HandleState, frame: int) -> None:
        # an unpurged heavy-occlusion entry from the previous frame steals the lock
        for e in st.memory:
            if not e.conditional and e.frame == frame - 1 and e.poisoned:
                st.lock_key = e.occluder_key
                return

    @staticmethod
    def _trim_memory(st: _HandleState) -> None:
        recent = [e for e in st.memory if not e.conditional]
        while len(recent) > MEMORY_RECENT:
            victim = recent.pop(0)
            st.memory.remove(victim)


# -- scenario library --------------------------------------------------------

_GRID = ImageGrid(96, 64)


def _static(key: str, box: Box, birth: int, death: int, z: int, class_id: int = 1) -> SceneObject:
    return SceneObject(key, birth, death, ((birth, box),), z, class_id)


def _moving(key: str, start: tuple[int, Box], end: tuple[int, Box], z: int,
            class_id: int = 1) -> SceneObject:
    return SceneObject(key, start[0], end[0], (start, end), z, class_id)


def scenario_s0() -> SceneScript:
    """Single static object; the bootstrap sanity scene."""
    return SceneScript(_GRID, (_static("a", Box(30, 20, 16, 16), 1, 30, z=1),))


def scenario_s1() -> SceneScript:
    """Two objects crossing mid-sequence; the occlusion-arbitration scene."""
    return SceneScript(
        _GRID,
        (
            _moving("a", (1, Box(8, 24, 16, 16)), (65, Box(72, 24, 16, 16)), z=2),
            _moving("b", (1, Box(72, 24, 16, 16)), (65, Box(8, 24, 16, 16)), z=1),
        ),
    )


def scenario_s2() -> SceneScript:
    """Late-born, early-dying second object; exercises addition and removal."""
    return SceneScript(
        _GRID,
        (
            _static("a", Box(8, 8, 12, 12), 1, 80, z=1),
            _static("b", Box(60, 40, 12, 12), 20, 45, z=2),
        ),
    )


def scenario_s3() -> SceneScript:
    """Long slow take with no occlusion; prompt staleness accumulates."""
    return SceneScript(
        _GRID,
        (_moving("a", (1, Box(8, 24, 16, 16)), (120, Box(64, 24, 16, 16)), z=1),),
    )


def scenario_s4() -> SceneScript:
    """Three objects converging on one spot; the pileup scene."""
    return SceneScript(
        _GRID,
        (
            _moving("a", (1, Box(6, 24, 16, 16)), (61, Box(66, 24, 16, 16)), z=1),
            _moving("b", (1, Box(66, 24, 16, 16)), (61, Box(6, 24, 16, 16)), z=2),
            _moving("c", (1, Box(36, 4, 16, 16)), (61, Box(36, 44, 16, 16)), z=3),
        ),
    )


SCENARIOS = {
    "S0": scenario_s0,
    "S1": scenario_s1,
    "S2": scenario_s2,
    "S3": scenario_s3,
    "S4": scenario_s4,
}


def load_scenario(name_or_path: str) -> SceneScript:
    """Built-in scenario by name, or a scene-script JSON file by path."""
    if name_or_path in SCENARIOS:
        return SCENARIOS[name_or_path]()
    try:
        with open(name_or_path, encoding="utf-8") as fh:
            return SceneScript.from_json(fh.read())
    except FileNotFoundError:
        raise ValueError(
            f"unknown scenario {name_or_path!r}: not a built-in "
            f"({', '.join(sorted(SCENARIOS))}) and not a readable file"
        ) from None
