"""Raster stage: shape support, outer contour, patch labelling, patchy distance map.

Coordinates follow the image convention: ``x`` is the column, ``y`` the row,
and ``y`` grows downward. A pixel's coordinate is its center.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy import ndimage as ndi

from .errors import ContourTooShort, DimensionMismatch, NoForeground, NotPowerOfTwo

FOUR_CONNECTED = ndi.generate_binary_structure(2, 1)
EIGHT_CONNECTED = ndi.generate_binary_structure(2, 2)

INTERIOR = "Interior"
COMPLEMENTARY = "Complementary"

# Moore neighbourhood in clockwise order (as seen on screen, y down), starting west.
_MOORE = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}


@dataclass(frozen=True)
class ThresholdPolicy:
    """Bright pixels (>= tau) inside the shape are interior patches."""

    tau: float = 128


@dataclass(frozen=True)
class EnclosurePolicy:
    """Structure pixels (>= tau) are walls; regions they enclose are interior.

    A region within ``margin`` pixels (Euclidean, to the nearest pixel outside
    the shape) of the outer boundary is taken to be closed off by the contour
    and becomes complementary.
    """

    tau: float = 128
    margin: float = 4.0


PatchPolicy = Union[ThresholdPolicy, EnclosurePolicy]


@dataclass(frozen=True)
class SampledContour:
    """Equal arc-length samples of a closed contour.

    Samples are stored relative to an integer ``origin`` so that translating
    the source raster by an integer vector leaves ``local`` bit-identical.
    """

    local: np.ndarray
    origin: np.ndarray
    perimeter: float

    @property
    def n(self) -> int:
        return len(self.local)

    @property
    def points(self) -> np.ndarray:
        return self.local + self.origin


@dataclass(frozen=True)
class PatchLabelMap:
    labels: np.ndarray
    kinds: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.labels.shape

    def ids(self, kind: str) -> list[int]:
        return sorted(i for i, k in self.kinds.items() if k == kind)

    def kind_mask(self, kind: str) -> np.ndarray:
        return np.isin(self.labels, self.ids(kind))


@dataclass(frozen=True)
class PatchyDistanceMap:
    interior: np.ndarray
    complementary: np.ndarray

    @property
    def shape(self):
        return self.interior.shape

    @property
    def support(self) -> np.ndarray:
        """Pixels covered by some patch (every patch pixel has a positive value)."""
        return (self.interior > 0) | (self.complementary > 0)


def _as_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DimensionMismatch(f"mask must be 2-D, got shape {mask.shape}")
    return mask.astype(bool, copy=False)


def largest_component(mask) -> np.ndarray:
    """Largest 4-connected foreground component; ties go to the first in raster order."""
    mask = _as_mask(mask)
    labels, count = ndi.label(mask, structure=FOUR_CONNECTED)
    if count == 0:
        raise NoForeground("mask has no foreground pixels")
    sizes = np.bincount(labels.ravel())[1:]
    return labels == int(np.argmax(sizes)) + 1


def shape_support(mask) -> np.ndarray:
    """Filled outer contour of the largest component (background is 8-connected)."""
    return ndi.binary_fill_holes(largest_component(mask), structure=EIGHT_CONNECTED)


def _moore_trace(region: np.ndarray) -> list[tuple[int, int]]:
    padded = np.pad(region, 1)
    rows, cols = np.nonzero(padded)
    start = (int(cols[0]), int(rows[0]))
    # Entered from the west: that neighbour is background for the first pixel in raster order.
    points = [start]
    p, back = start, 0
    first_state = None
    for _ in range(8 * int(region.sum()) + 8):
        for k in range(1, 9):
            d = (back + k) % 8
            q = (p[0] + _MOORE[d][0], p[1] + _MOORE[d][1])
            if padded[q[1], q[0]]:
                prev = _MOORE[(d - 1) % 8]
                back = _MOORE_INDEX[(p[0] + prev[0] - q[0], p[1] + prev[1] - q[1])]
                p = q
                break
        else:
            break  # isolated pixel
        # Jacob's criterion, keyed on the first transition: the artificial
        # west entry of the start pixel need not recur (e.g. a horizontal line).
        if first_state is None:
            first_state = (p, back)
        elif (p, back) == first_state:
            points.pop()  # the start pixel, reached again
            break
        points.append(p)
    else:
        raise RuntimeError("contour tracing did not close")
    return [(x - 1, y - 1) for x, y in points]


def _canonical_start(points: np.ndarray, region: np.ndarray) -> int:
    # Start at the contour point farthest from the region centroid. Integer
    # arithmetic keeps the choice exact under 90-degree rotations; ties fall
    # back to the whole cyclic sequence of (distance, step parity, turn).
    ys, xs = np.nonzero(region)
    n, sx, sy = len(xs), int(xs.sum()), int(ys.sum())
    d2 = [(n * int(x) - sx) ** 2 + (n * int(y) - sy) ** 2 for x, y in points]
    best = max(d2)
    candidates = [i for i, v in enumerate(d2) if v == best]
    if len(candidates) == 1:
        return candidates[0]
    steps = np.roll(points, -1, axis=0) - points
    codes = [_MOORE_INDEX.get((int(dx), int(dy)), 0) for dx, dy in steps]
    turns = [(codes[i] - codes[i - 1]) % 8 for i in range(len(codes))]
    seq = list(zip(d2, [c % 2 for c in codes], turns))
    return max(candidates, key=lambda i: (seq[i:] + seq[:i], -i))


def extract_contour(mask) -> np.ndarray:
    """Clockwise outer boundary of the largest 4-connected component.

    Returns an ``(L, 2)`` integer array of ``(x, y)`` pixel coordinates.
    Consecutive points are 8-neighbours and the loop closes implicitly. The
    first point is chosen from the geometry (farthest from the centroid), so
    rotating the mask by a multiple of 90 degrees rotates the returned
    sequence point for point.
    """
    region = shape_support(mask)
    points = np.asarray(_moore_trace(region), dtype=np.int64)
    start = _canonical_start(points, region)
    return np.roll(points, -start, axis=0)


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def resample_contour(contour, n: int, smoothing: float = 0.0) -> SampledContour:
    """Place ``n`` points at equal arc length along the closed polyline.

    Sample ``k`` sits at arc length ``k * perimeter / n`` measured clockwise from
    the first contour point, found by linear interpolation on its segment.

    With ``smoothing > 0`` the vertices are first smoothed by a circular
    Gaussian whose width is ``smoothing`` sample spacings (``L / n`` contour
    points). The 8-connected staircase overstates length by up to ~8 %
    depending on local orientation, which makes raw arc length shift under
    rotation; smoothing removes that bias. Arc length is then measured along
    the smoothed polyline.
    """
    if not (is_power_of_two(n) and n >= 4):
        raise NotPowerOfTwo(f"sample count must be a power of two >= 4, got {n}")
    pts = np.asarray(contour)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ContourTooShort(f"need at least 3 contour points, got {len(pts)}")
    origin = np.floor(pts.min(axis=0)).astype(np.int64)
    local = pts.astype(np.float64) - origin
    if smoothing > 0:
        local = ndi.gaussian_filter1d(local, smoothing * len(local) / n, axis=0, mode="wrap")

    closed = np.vstack([local, local[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    keep = seg > 0
    if keep.sum() < 2:
        raise ContourTooShort("contour has fewer than two distinct segments")
    starts, ends, seg = closed[:-1][keep], closed[1:][keep], seg[keep]
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    perimeter = float(cum[-1])

    targets = np.arange(n) * (perimeter / n)
    j = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(seg) - 1)
    frac = (targets - cum[j]) / seg[j]
    samples = starts[j] + frac[:, None] * (ends[j] - starts[j])
    return SampledContour(local=samples, origin=origin, perimeter=perimeter)


def _relabel_row_major(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Renumber positive labels 1..k by first appearance in raster order.

    Returns the new map and ``old_of_new`` (index ``new - 1`` gives the old id).
    """
    flat = labels.ravel()
    pos = np.flatnonzero(flat)
    old_ids, first = np.unique(flat[pos], return_index=True)
    order = np.argsort(first, kind="stable")
    old_of_new = old_ids[order]
    lut = np.zeros(int(flat.max()) + 1 if flat.size else 1, dtype=np.int64)
    lut[old_of_new] = np.arange(1, len(old_of_new) + 1)
    return lut[labels], old_of_new


def segment_patches(mask, patch_source, policy: PatchPolicy = ThresholdPolicy()) -> PatchLabelMap:
    """Partition the shape support into 4-connected interior and complementary patches.

    Patch ids run 1..k in row-major order of each patch's first pixel; 0 marks
    pixels outside the shape.
    """
    mask = _as_mask(mask)
    source = np.asarray(patch_source)
    if source.shape != mask.shape:
        raise DimensionMismatch(f"patch_source {source.shape} does not match mask {mask.shape}")
    support = shape_support(mask)
    bright = support & (source >= policy.tau)

    if isinstance(policy, ThresholdPolicy):
        interior = bright
    elif isinstance(policy, EnclosurePolicy):
        regions, count = ndi.label(support & ~bright, structure=FOUR_CONNECTED)
        outside_dist = ndi.distance_transform_edt(np.pad(support, 1))[1:-1, 1:-1]
        touching = np.zeros(count + 1, dtype=bool)
        touching[np.unique(regions[(outside_dist <= policy.margin) & (regions > 0)])] = True
        enclosed = ~touching
        enclosed[0] = False
        interior = enclosed[regions]
    else:
        raise TypeError(f"unknown patch policy {policy!r}")

    lab_i, n_i = ndi.label(interior, structure=FOUR_CONNECTED)
    lab_c, _ = ndi.label(support & ~interior, structure=FOUR_CONNECTED)
    combined = np.where(lab_c > 0, lab_c + n_i, lab_i)
    labels, old_of_new = _relabel_row_major(combined)
    kinds = {new: (INTERIOR if old <= n_i else COMPLEMENTARY) for new, old in enumerate(old_of_new.tolist(), 1)}
    return PatchLabelMap(labels=labels, kinds=kinds)


def compute_pdm(labels: PatchLabelMap) -> PatchyDistanceMap:
    """Per-patch Euclidean distance to the nearest pixel outside the patch, max-normalised.

    Each patch is transformed inside its bounding box grown by one pixel;
    that ring lies outside the patch and is never farther than anything beyond it.
    """
    lab = labels.labels
    fields = {INTERIOR: np.zeros(lab.shape), COMPLEMENTARY: np.zeros(lab.shape)}
    for pid, box in enumerate(ndi.find_objects(lab), 1):
        if box is None:
            continue
        inside = lab[box] == pid
        dist = ndi.distance_transform_edt(np.pad(inside, 1))[1:-1, 1:-1]
        out = fields[labels.kinds[pid]][box]
        out[inside] = dist[inside] / dist[inside].max()
    return PatchyDistanceMap(interior=fields[INTERIOR], complementary=fields[COMPLEMENTARY])


def export_label_map(labels: PatchLabelMap, path) -> tuple[Path, Path]:
    """Write patch ids as a 16-bit PGM plus ``<path>.kinds.txt`` (``id<TAB>kind`` lines)."""
    from .dataset import write_pgm

    path = Path(path)
    if labels.labels.max(initial=0) > 65535:
        raise ValueError("too many patches for a 16-bit PGM")
    write_pgm(path, labels.labels.astype(np.uint16))
    sidecar = path.with_name(path.name + ".kinds.txt")
    sidecar.write_text("".join(f"{pid}\t{kind}\n" for pid, kind in sorted(labels.kinds.items())))
    return path, sidecar
