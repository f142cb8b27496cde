"""Discrete multi-orientation region transform and its Fourier-magnitude descriptor."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    IndexOutOfRange,
    NotPowerOfTwo,
    OrderOutOfRange,
    ParseError,
    ScaleOutOfRange,
)
from .raster import (
    PatchyDistanceMap,
    SampledContour,
    ThresholdPolicy,
    compute_pdm,
    extract_contour,
    is_power_of_two,
    resample_contour,
    segment_patches,
)

# Inclusive tolerance on slab bounds; settles pixels lying exactly on a bounding line.
SLAB_EPS = 1e-9

DEFAULT_POINTS = 128
DEFAULT_ORDERS = 10
# Contour smoothing used by the pipeline, in sample spacings (see resample_contour).
DEFAULT_SMOOTHING = 0.5

# Pixels per block in compute_mort; bounds the (pixels x slabs) work arrays.
_CHUNK = 2048


@dataclass(frozen=True)
class SlabSpec:
    theta: float
    lambda_lo: float
    lambda_hi: float


@dataclass(frozen=True)
class MortMatrices:
    interior: np.ndarray
    complementary: np.ndarray
    area: int

    @property
    def n(self) -> int:
        return self.interior.shape[1]

    @property
    def q(self) -> int:
        return self.interior.shape[0] - 1


@dataclass(frozen=True)
class MortDescriptor:
    interior: np.ndarray
    complementary: np.ndarray
    n: int
    normalized: bool

    @property
    def m(self) -> int:
        return self.interior.shape[1]

    @property
    def q(self) -> int:
        return self.interior.shape[0] - 1


def _check_index(n: int, u: int, t: int, allow_zero: bool) -> None:
    q = n.bit_length() - 1
    if not 0 <= u < n:
        raise IndexOutOfRange(f"contour index {u} outside [0, {n})")
    if not (0 if allow_zero else 1) <= t <= q:
        raise ScaleOutOfRange(f"scale {t} outside [{0 if allow_zero else 1}, {q}]")


def slab_for(contour: SampledContour, u: int, t: int) -> SlabSpec:
    """Slab between p(u) and the point N/2**t samples further clockwise.

    ``theta`` is the chord direction; the bounds are the projections of both
    chord ends onto it. Works in the contour's local frame.
    """
    n = contour.n
    _check_index(n, u, t, allow_zero=False)
    e = (u + (n >> t)) % n
    xu, yu = contour.local[u]
    xe, ye = contour.local[e]
    theta = math.atan2(ye - yu, xe - xu) % (2 * math.pi)
    c, s = math.cos(theta), math.sin(theta)
    a, b = xu * c + yu * s, xe * c + ye * s
    return SlabSpec(theta, min(a, b), max(a, b))


def _support_pixels(pdm: PatchyDistanceMap, contour: SampledContour):
    rows, cols = np.nonzero(pdm.support)
    xs = (cols - contour.origin[0]).astype(np.float64)
    ys = (rows - contour.origin[1]).astype(np.float64)
    values = np.stack([pdm.interior[rows, cols], pdm.complementary[rows, cols]])
    return xs, ys, values


def region_integral(pdm: PatchyDistanceMap, contour: SampledContour, u: int, t: int) -> tuple[float, float]:
    """Sums of the interior and complementary maps over one slab (the whole shape for t = 0)."""
    _check_index(contour.n, u, t, allow_zero=True)
    xs, ys, values = _support_pixels(pdm, contour)
    if t == 0:
        r_i, r_c = values.sum(axis=1)
        return float(r_i), float(r_c)
    slab = slab_for(contour, u, t)
    proj = xs * math.cos(slab.theta) + ys * math.sin(slab.theta)
    inside = (proj >= slab.lambda_lo - SLAB_EPS) & (proj <= slab.lambda_hi + SLAB_EPS)
    r_i, r_c = values[:, inside].sum(axis=1)
    return float(r_i), float(r_c)


def compute_mort(pdm: PatchyDistanceMap, contour: SampledContour) -> MortMatrices:
    """(Q+1) x N region-integral matrices for the interior and complementary maps.

    Column ``i`` is the transform at sample ``i``; row ``t`` the scale. All
    slabs of all scales are evaluated together over blocks of shape pixels,
    so the cost is O(N_f * N * log2 N).
    """
    n = contour.n
    if not is_power_of_two(n):
        raise NotPowerOfTwo(f"sample count must be a power of two, got {n}")
    q = n.bit_length() - 1
    pts = contour.local
    idx = np.arange(n)

    cos_, sin_, lo, hi = [], [], [], []
    for t in range(1, q + 1):
        d = pts[(idx + (n >> t)) % n] - pts
        theta = np.arctan2(d[:, 1], d[:, 0]) % (2 * np.pi)
        c, s = np.cos(theta), np.sin(theta)
        a = pts[:, 0] * c + pts[:, 1] * s
        b = pts[(idx + (n >> t)) % n, 0] * c + pts[(idx + (n >> t)) % n, 1] * s
        cos_.append(c)
        sin_.append(s)
        lo.append(np.minimum(a, b) - SLAB_EPS)
        hi.append(np.maximum(a, b) + SLAB_EPS)
    cos_, sin_, lo, hi = (np.concatenate(v) for v in (cos_, sin_, lo, hi))

    xs, ys, values = _support_pixels(pdm, contour)
    sums = np.zeros((2, q * n))
    for start in range(0, len(xs), _CHUNK):
        sl = slice(start, start + _CHUNK)
        proj = xs[sl, None] * cos_ + ys[sl, None] * sin_
        inside = (proj >= lo) & (proj <= hi)
        sums += values[:, sl] @ inside

    mt = np.empty((2, q + 1, n))
    # Summed over the support vector, not the grid, so the result cannot depend on placement.
    mt[:, 0] = values.sum(axis=1)[:, None]
    mt[:, 1:] = sums.reshape(2, q, n)
    return MortMatrices(interior=mt[0], complementary=mt[1], area=int(len(xs)))


def _fourier_magnitudes(rows: np.ndarray, m: int) -> np.ndarray:
    n = rows.shape[1]
    i = np.arange(1, n + 1)[:, None]
    k = np.arange(1, m + 1)[None, :]
    basis = np.exp(-2j * np.pi * ((i * k) % n) / n)
    return np.abs(rows @ basis) / n


def dft_descriptor(mt: MortMatrices, m: int = DEFAULT_ORDERS, normalize_area: bool = True) -> MortDescriptor:
    """Magnitudes of DFT orders 1..m of every MT row, scaled by 1/N.

    The DC term is excluded, so the constant t = 0 row maps to (numerically) zero.
    """
    if not 1 <= m < mt.n:
        raise OrderOutOfRange(f"order count must satisfy 1 <= m < {mt.n}, got {m}")
    scale = 1.0 / mt.area if normalize_area else 1.0
    return MortDescriptor(
        interior=_fourier_magnitudes(mt.interior * scale, m),
        complementary=_fourier_magnitudes(mt.complementary * scale, m),
        n=mt.n,
        normalized=bool(normalize_area),
    )


def mort_matrices(
    mask, patch_source, policy=ThresholdPolicy(), n: int = DEFAULT_POINTS, smoothing: float = DEFAULT_SMOOTHING
) -> MortMatrices:
    """Mask and patch source to MT matrices (segmentation, PDM, contour, transform)."""
    pdm = compute_pdm(segment_patches(mask, patch_source, policy))
    return compute_mort(pdm, resample_contour(extract_contour(mask), n, smoothing))


def extract_descriptor(
    mask,
    patch_source,
    policy=ThresholdPolicy(),
    n: int = DEFAULT_POINTS,
    m: int = DEFAULT_ORDERS,
    normalize_area: bool = True,
    smoothing: float = DEFAULT_SMOOTHING,
) -> MortDescriptor:
    """End-to-end descriptor of one mask. ``smoothing=0`` samples the raw Moore polyline."""
    return dft_descriptor(mort_matrices(mask, patch_source, policy, n, smoothing), m, normalize_area)


# -- text serialisation -------------------------------------------------------

def format_descriptors(pairs) -> str:
    """Serialise K descriptor pairs sharing N, M, Q and normalisation."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one descriptor pair")
    first = pairs[0]
    for d in pairs:
        if (d.n, d.m, d.q, d.normalized) != (first.n, first.m, first.q, first.normalized):
            raise ValueError("descriptor pairs disagree on N, M, Q or normalisation")
    lines = [f"MORTDESC v1 N={first.n} M={first.m} Q={first.q} norm={int(first.normalized)} K={len(pairs)}"]
    for d in pairs:
        for tag, mat in (("I", d.interior), ("C", d.complementary)):
            lines.append(tag)
            lines.extend(",".join(f"{v:.17g}" for v in row) for row in mat)
    return "\n".join(lines) + "\n"


def parse_descriptors(text: str) -> list[MortDescriptor]:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty descriptor file", 1)
    fields = lines[0].split()
    if fields[:2] != ["MORTDESC", "v1"] or len(fields) != 7:
        raise ParseError("bad descriptor header", 1)
    try:
        head = dict(f.split("=", 1) for f in fields[2:])
        n, m, q, norm, k = (int(head[key]) for key in ("N", "M", "Q", "norm", "K"))
    except (KeyError, ValueError):
        raise ParseError("bad descriptor header", 1) from None
    if len(lines) != 1 + k * 2 * (q + 2):
        raise ParseError(f"expected {1 + k * 2 * (q + 2)} lines, found {len(lines)}")

    def block(start: int, tag: str) -> np.ndarray:
        if lines[start].strip() != tag:
            raise ParseError(f"expected '{tag}' block", start + 1)
        rows = []
        for j in range(start + 1, start + q + 2):
            try:
                row = [float(v) for v in lines[j].split(",")]
            except ValueError:
                raise ParseError("non-numeric value", j + 1) from None
            if len(row) != m:
                raise ParseError(f"expected {m} values, found {len(row)}", j + 1)
            rows.append(row)
        return np.array(rows)

    pairs, pos = [], 1
    for _ in range(k):
        interior = block(pos, "I")
        complementary = block(pos + q + 2, "C")
        pairs.append(MortDescriptor(interior, complementary, n=n, normalized=bool(norm)))
        pos += 2 * (q + 2)
    return pairs
