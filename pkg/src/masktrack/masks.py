"""Binary masks as run-length encodings plus the pixel-set algebra built on them.

Masks are canonical row-major RLE: the first run counts background pixels and
may be zero, every later run is positive, and the runs sum to the grid area.
All pixel arithmetic is exact integer counting; ratios divide once, in floats.
Everything here is a pure function on immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class CorruptMaskError(ValueError):
    """A mask's runs do not describe its grid."""


@dataclass(frozen=True)
class ImageGrid:
    """Pixel dimensions shared by every mask and box in a sequence."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")

    @property
    def area(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class Mask:
    """Run-length encoded binary region on a grid.

    ``runs`` alternates background/foreground counts starting with background.
    """

    grid: ImageGrid
    runs: tuple[int, ...]

    def __post_init__(self) -> None:
        runs = self.runs
        if not runs:
            raise CorruptMaskError("mask must have at least one run")
        if runs[0] < 0 or any(r <= 0 for r in runs[1:]):
            raise CorruptMaskError(f"non-canonical runs {runs}: only the first run may be 0")
        total = sum(runs)
        if total != self.grid.area:
            raise CorruptMaskError(
                f"runs sum to {total}, grid is {self.grid.width}x{self.grid.height}={self.grid.area}"
            )

    @property
    def foreground_count(self) -> int:
        return sum(self.runs[1::2])

    def is_empty(self) -> bool:
        return self.foreground_count == 0


@dataclass(frozen=True)
class Box:
    """Integer pixel rectangle, half-open [x, x+w) x [y, y+h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box must have positive extent, got w={self.w} h={self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h


def encode_mask(bitmap, grid: ImageGrid) -> Mask:
    """Encode a row-major boolean array into canonical RLE on ``grid``."""
    flat = np.asarray(bitmap, dtype=bool).reshape(-1)
    if flat.size != grid.area:
        raise ValueError(f"bitmap has {flat.size} pixels, grid needs {grid.area}")
    starts = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], starts, [flat.size]))
    lengths = np.diff(bounds)
    runs = tuple(int(r) for r in lengths)
    if flat[0]:
        runs = (0, *runs)  # leading zero background run keeps the bg/fg alternation
    return Mask(grid, runs)


def decode_mask(mask: Mask) -> np.ndarray:
    """Row-major boolean array for ``mask``; inverse of :func:`encode_mask`."""
    total = sum(mask.runs)
    if total != mask.grid.area:  # unreachable through the constructor, kept for raw tuples
        raise CorruptMaskError(f"runs sum to {total}, expected {mask.grid.area}")
    values = np.zeros(len(mask.runs), dtype=bool)
    values[1::2] = True
    return np.repeat(values, mask.runs)


def mask_iou(a: Mask, b: Mask) -> float:
    """Intersection-over-union of two masks; 0.0 when the union is empty."""
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")
    fa = decode_mask(a)
    fb = decode_mask(b)
    inter = int(np.count_nonzero(fa & fb))
    union = int(np.count_nonzero(fa | fb))
    if union == 0:
        return 0.0
    return inter / union


def untracked_region(grid: ImageGrid, masks) -> Mask:
    """Complement of the union of ``masks``: the pixels no current track covers."""
    covered = np.zeros(grid.area, dtype=bool)
    for m in masks:
        if m.grid != grid:
            raise ValueError(f"grid mismatch: {m.grid} vs {grid}")
        covered |= decode_mask(m)
    return encode_mask(~covered, grid)


def box_from_mask(mask: Mask) -> Box | None:
    """Tight bounding box of the foreground, or None for an empty mask."""
    idx = np.flatnonzero(decode_mask(mask))
    if idx.size == 0:
        return None
    w = mask.grid.width
    xs = idx % w
    ys = idx // w
    x0 = int(xs.min())
    y0 = int(ys.min())
    return Box(x0, y0, int(xs.max()) - x0 + 1, int(ys.max()) - y0 + 1)


def clamp_box(box: Box, grid: ImageGrid) -> Box | None:
    """Intersect ``box`` with the grid; None when nothing remains."""
    x0 = max(box.x, 0)
    y0 = max(box.y, 0)
    x1 = min(box.x + box.w, grid.width)
    y1 = min(box.y + box.h, grid.height)
    if x1 <= x0 or y1 <= y0:
        return None
    return Box(x0, y0, x1 - x0, y1 - y0)


def box_region_overlap(box: Box, region: Mask) -> float:
    """Fraction of ``box`` covered by foreground pixels of ``region``.

    The box is clamped to the grid first; a box that clamps away entirely is
    an input error because the ratio is undefined.
    """
    clamped = clamp_box(box, region.grid)
    if clamped is None:
        raise ValueError(f"box {box} has no area inside grid {region.grid}")
    flat = decode_mask(region).reshape(region.grid.height, region.grid.width)
    window = flat[clamped.y : clamped.y + clamped.h, clamped.x : clamped.x + clamped.w]
    return int(np.count_nonzero(window)) / clamped.area


def box_iou(a: Box, b: Box) -> float:
    """Rectangle intersection-over-union in exact integer arithmetic."""
    ix = max(a.x, b.x)
    iy = max(a.y, b.y)
    ix2 = min(a.x + a.w, b.x + b.w)
    iy2 = min(a.y + a.h, b.y + b.h)
    iw = ix2 - ix
    ih = iy2 - iy
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union


def box_to_mask(box: Box, grid: ImageGrid) -> Mask:
    """Rasterize a box (clamped to the grid) as a mask."""
    bitmap = np.zeros((grid.height, grid.width), dtype=bool)
    clamped = clamp_box(box, grid)
    if clamped is not None:
        bitmap[clamped.y : clamped.y + clamped.h, clamped.x : clamped.x + clamped.w] = True
    return encode_mask(bitmap, grid)


def mask_to_text(mask: Mask) -> str:
    """Golden-file text form: ``w h r0 r1 ...`` space-separated decimals."""
    return " ".join(str(v) for v in (mask.grid.width, mask.grid.height, *mask.runs))


def mask_from_text(line: str) -> Mask:
    """Parse the text form produced by :func:`mask_to_text`."""
    parts = line.split()
    if len(parts) < 3:
        raise ValueError(f"mask line needs width, height and at least one run: {line!r}")
    try:
        values = [int(p) for p in parts]
    except ValueError as e:
        raise ValueError(f"mask line has a non-integer field: {line!r}") from e
    grid = ImageGrid(values[0], values[1])
    return Mask(grid, tuple(values[2:]))
