"""Translation, rotation and scale audits of the descriptor pipeline."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import transform_mask
from .raster import ThresholdPolicy
from .transform import DEFAULT_ORDERS, DEFAULT_POINTS, MortDescriptor, MortMatrices, dft_descriptor, mort_matrices

EXACT_ROTATIONS = (90, 180, 270)
FREE_ROTATIONS = (17, 37, 143)
TRANSLATIONS = ((7, 13), (-5, 3), (0, -9), (11, 0), (-3, -4))

EXACT_TOLERANCE = 1e-6
RESAMPLED_TOLERANCE = 0.05
SCALE_TOLERANCE = 0.05


def _stack(d: MortDescriptor) -> np.ndarray:
    return np.concatenate([d.interior.ravel(), d.complementary.ravel()])


def relative_l1(a: MortDescriptor, b: MortDescriptor) -> float:
    """||a - b||_1 / ||a||_1 over both matrices; 0 when both are zero."""
    x, y = _stack(a), _stack(b)
    denom = np.abs(x).sum()
    diff = np.abs(x - y).sum()
    if denom == 0:
        return 0.0 if diff == 0 else float("inf")
    return float(diff / denom)


def mt_identical(a: MortMatrices, b: MortMatrices) -> bool:
    return (
        a.area == b.area
        and np.array_equal(a.interior, b.interior)
        and np.array_equal(a.complementary, b.complementary)
    )


def scale_ratio_errors(base: MortMatrices, scaled: MortMatrices, gamma: float, floor: float = 1.0) -> np.ndarray:
    """|scaled / (gamma^2 base) - 1| for every raw entry of ``base`` above ``floor``."""
    a = np.concatenate([base.interior.ravel(), base.complementary.ravel()])
    b = np.concatenate([scaled.interior.ravel(), scaled.complementary.ravel()])
    keep = a > floor
    return np.abs(b[keep] / (gamma**2 * a[keep]) - 1.0)


@dataclass
class AuditCase:
    suite: str
    parameter: str
    deviation: float
    tolerance: float
    passed: bool


def audit_shape(
    mask,
    patch_source,
    policy=ThresholdPolicy(),
    n: int = DEFAULT_POINTS,
    m: int = DEFAULT_ORDERS,
    normalize_area: bool = True,
    scales=(2,),
) -> list[AuditCase]:
    """Run the translation, rotation and scale suites on one shape.

    Translation compares MT matrices bitwise (deviation 0 or 1). The
    rotation suites compare descriptors by relative L1. The scale suite
    compares area-normalised descriptors and reports the worst raw-entry
    ratio error separately.
    """
    base_mt = mort_matrices(mask, patch_source, policy, n)
    base = dft_descriptor(base_mt, m, normalize_area)
    cases = []

    for dx, dy in TRANSLATIONS:
        mt = mort_matrices(*transform_mask(mask, patch_source, ("translate", dx, dy)), policy, n)
        dev = 0.0 if mt_identical(base_mt, mt) else 1.0
        cases.append(AuditCase("translation", f"({dx},{dy})", dev, 0.0, dev == 0.0))

    for angle in EXACT_ROTATIONS + FREE_ROTATIONS:
        tol = EXACT_TOLERANCE if angle in EXACT_ROTATIONS else RESAMPLED_TOLERANCE
        mt = mort_matrices(*transform_mask(mask, patch_source, ("rotate", angle)), policy, n)
        dev = relative_l1(base, dft_descriptor(mt, m, normalize_area))
        cases.append(AuditCase("rotation", f"{angle}deg", dev, tol, dev < tol))

    for gamma in scales:
        mt = mort_matrices(*transform_mask(mask, patch_source, ("scale", gamma)), policy, n)
        dev = relative_l1(dft_descriptor(base_mt, m, True), dft_descriptor(mt, m, True))
        cases.append(AuditCase("scale-descriptor", f"x{gamma}", dev, SCALE_TOLERANCE, dev < SCALE_TOLERANCE))
        errs = scale_ratio_errors(base_mt, mt, gamma)
        worst = float(errs.max()) if errs.size else 0.0
        cases.append(AuditCase("scale-raw-entries", f"x{gamma}", worst, SCALE_TOLERANCE, worst < SCALE_TOLERANCE))
    return cases


def audit_report(cases: list[AuditCase]) -> dict:
    return {"passed": all(c.passed for c in cases), "cases": [asdict(c) for c in cases]}
