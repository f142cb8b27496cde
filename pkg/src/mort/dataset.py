"""Manifests, image IO, synthetic patchy shapes and geometric perturbations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage as ndi

from .errors import ImageFormatError, MissingFile, ParseError, SpecInfeasible
from .raster import EIGHT_CONNECTED, FOUR_CONNECTED

MANIFEST_MAGIC = "#mort-manifest"
FAMILIES = ("blob", "leafoid", "wingoid")


# -- images -------------------------------------------------------------------

def load_image(path) -> np.ndarray:
    """Read an 8-bit grayscale PGM (P5) or PNG as a uint8 array."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such image: {path}")
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "PPM"):
                raise ImageFormatError(f"{path}: unsupported format {im.format}")
            if im.mode == "1":
                im = im.convert("L")
            if im.mode != "L":
                raise ImageFormatError(f"{path}: expected 8-bit grayscale, got mode {im.mode}")
            return np.array(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageFormatError(f"{path}: {exc}") from exc


def write_pgm(path, image: np.ndarray) -> None:
    """Binary PGM writer; uint16 arrays are written with maxval 65535 (big-endian)."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    if image.dtype == np.uint16:
        maxval, payload = 65535, image.astype(">u2").tobytes()
    else:
        maxval, payload = 255, image.astype(np.uint8).tobytes()
    h, w = image.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + payload)


def mask_from_image(image: np.ndarray, threshold: float = 128) -> np.ndarray:
    return np.asarray(image) >= threshold


# -- manifest -----------------------------------------------------------------

@dataclass(frozen=True)
class ManifestRow:
    image_path: Path
    label: str
    type_index: int
    params: dict
    sample_id: str
    line: int


@dataclass(frozen=True)
class Sample:
    sample_id: str
    label: str
    rows: tuple  # ManifestRow per type index, in order


@dataclass
class Manifest:
    root: Path
    k: int
    rows: list = field(default_factory=list)

    def samples(self) -> list[Sample]:
        groups: dict[str, list[ManifestRow]] = {}
        for row in self.rows:
            groups.setdefault(row.sample_id, []).append(row)
        return [
            Sample(sid, rows[0].label, tuple(sorted(rows, key=lambda r: r.type_index)))
            for sid, rows in groups.items()
        ]


def _parse_params(text: str, line: int) -> dict:
    if text in ("", "-"):
        return {}
    params = {}
    for item in text.split(";"):
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ParseError(f"bad policy parameter {item!r}", line)
        params[key.strip()] = value.strip()
    return params


def load_manifest(path, check_files: bool = True) -> Manifest:
    """Parse a tab-separated manifest.

    The first line is ``#mort-manifest v1 K=<k>``; later lines starting with
    ``#`` are comments. Each row is ``image_path  label  type_index
    policy_params  [sample_id]``. ``policy_params`` is ``-`` or
    ``key=value;key=value``. ``sample_id`` defaults to the image file stem and
    is required when K > 1. Paths are relative to the manifest's directory.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such manifest: {path}")
    root = path.parent
    lines = path.read_text().splitlines()
    if not any(ln.strip() for ln in lines):
        raise ParseError("no rows")
    header = lines[0].split()
    if len(header) != 3 or header[0] != MANIFEST_MAGIC or header[1] != "v1" or not header[2].startswith("K="):
        raise ParseError("missing or malformed '#mort-manifest v1 K=<k>' header", 1)
    try:
        k = int(header[2][2:])
    except ValueError:
        raise ParseError("K must be an integer", 1) from None
    if k < 1:
        raise ParseError("K must be >= 1", 1)

    manifest = Manifest(root=root, k=k)
    for num, text in enumerate(lines[1:], 2):
        if text.startswith("#"):
            continue
        if not text.strip():
            raise ParseError("blank line", num)
        cols = text.split("\t")
        if len(cols) not in (4, 5):
            raise ParseError(f"expected 4 or 5 tab-separated columns, found {len(cols)}", num)
        image, label, type_text, params = cols[:4]
        if not label.strip():
            raise ParseError("empty label", num)
        try:
            type_index = int(type_text)
        except ValueError:
            raise ParseError(f"type_index {type_text!r} is not an integer", num) from None
        if not 0 <= type_index < k:
            raise ParseError("type_index out of range", num)
        if len(cols) == 5 and cols[4].strip():
            sample_id = cols[4].strip()
        elif k == 1:
            sample_id = Path(image).stem
        else:
            raise ParseError("sample_id column required when K > 1", num)
        image_path = root / image
        if check_files and not image_path.is_file():
            raise MissingFile(f"line {num}: no such file: {image_path}")
        manifest.rows.append(ManifestRow(image_path, label.strip(), type_index, _parse_params(params, num), sample_id, num))

    if not manifest.rows:
        raise ParseError("no rows")
    for sample in manifest.samples():
        types = [r.type_index for r in sample.rows]
        if types != list(range(k)):
            raise ParseError(f"sample {sample.sample_id!r} has type indices {types}, expected 0..{k - 1}", sample.rows[0].line)
        if len({r.label for r in sample.rows}) != 1:
            raise ParseError(f"sample {sample.sample_id!r} has conflicting labels", sample.rows[0].line)
    return manifest


def write_manifest(path, entries, k: int = 1) -> None:
    """``entries`` holds (image_path, label, type_index, params, sample_id) tuples."""
    out = [f"{MANIFEST_MAGIC} v1 K={k}"]
    for image, label, type_index, params, sample_id in entries:
        out.append("\t".join([str(image), label, str(type_index), params or "-", sample_id]))
    Path(path).write_text("\n".join(out) + "\n")


# -- synthetic shapes ---------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    contour_family: str = "blob"
    n_interior_patches: int = 3
    rng_seed: int = 0
    canvas: int = 128
    deformation_amplitude: float = 0.15


def _radius_fn(spec: SynthSpec, rng: np.random.Generator):
    amp = spec.deformation_amplitude
    ks = np.arange(2, 7)
    weights = rng.uniform(0.2, 1.0, len(ks)) / ks
    weights /= weights.sum()
    phases = rng.uniform(0, 2 * np.pi, len(ks))
    tilt = rng.uniform(0, 2 * np.pi)

    def wobble(phi):
        return 1 + amp * sum(w * np.cos(k * phi + p) for k, w, p in zip(ks, weights, phases))

    if spec.contour_family == "blob":
        base = lambda phi: np.ones_like(phi)
    elif spec.contour_family == "leafoid":
        # Elongated ellipse (aspect 0.55) with a pointed tip along the major axis.
        def base(phi):
            a = phi - tilt
            ell = 1 / np.sqrt(np.cos(a) ** 2 + (np.sin(a) / 0.55) ** 2)
            return ell * (1 + 0.12 * np.cos(a) ** 8)
    elif spec.contour_family == "wingoid":
        # Egg-shaped: broad at one end, narrow at the other.
        def base(phi):
            a = phi - tilt
            return (0.75 + 0.25 * np.cos(a)) / np.sqrt(np.cos(a) ** 2 + (np.sin(a) / 0.5) ** 2)
    else:
        raise SpecInfeasible(f"unknown contour family {spec.contour_family!r}")
    return lambda phi: base(phi) * wobble(phi)


def synth_shape(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    """Star-convex mask plus a patch source with bright elliptical patches.

    The patch source is 0 outside the shape, 64 on the shape body and 255
    inside patches. Patches keep a 2-pixel gap from the shape boundary and
    from one another.
    """
    if spec.canvas < 64:
        raise SpecInfeasible("canvas must be at least 64 pixels")
    if not 0 <= spec.deformation_amplitude < 0.5:
        raise SpecInfeasible("deformation_amplitude must be in [0, 0.5)")
    if spec.n_interior_patches < 0:
        raise SpecInfeasible("n_interior_patches must be >= 0")
    rng = np.random.default_rng(spec.rng_seed)
    c = spec.canvas
    radius = _radius_fn(spec, rng)

    phi = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    extent = radius(phi).max()
    r0 = 0.42 * c / extent
    yy, xx = np.mgrid[0:c, 0:c].astype(np.float64)
    dx, dy = xx - (c - 1) / 2, yy - (c - 1) / 2
    mask = np.hypot(dx, dy) <= r0 * radius(np.arctan2(dy, dx))

    labels, count = ndi.label(mask, structure=FOUR_CONNECTED)
    if count != 1:
        raise SpecInfeasible("shape rasterised into several components")

    source = np.where(mask, 64, 0).astype(np.uint8)
    allowed = ndi.binary_erosion(mask, structure=EIGHT_CONNECTED, iterations=3)
    size = math.sqrt(mask.sum())
    placed = np.zeros_like(mask)
    tries = count = 0
    while count < spec.n_interior_patches:
        tries += 1
        if tries > 400 * max(spec.n_interior_patches, 1):
            raise SpecInfeasible("cannot place interior patches disjointly")
        a, b = rng.uniform(0.05, 0.11, 2) * size
        ang = rng.uniform(0, np.pi)
        cx, cy = rng.uniform(0, c, 2)
        # Work in a window around the ellipse; the 3-px margin covers the dilation gap.
        reach = max(a, b) + 3
        win = (slice(max(0, int(cy - reach)), min(c, int(cy + reach) + 2)),
               slice(max(0, int(cx - reach)), min(c, int(cx + reach) + 2)))
        u = (xx[win] - cx) * math.cos(ang) + (yy[win] - cy) * math.sin(ang)
        v = -(xx[win] - cx) * math.sin(ang) + (yy[win] - cy) * math.cos(ang)
        ellipse = (u / a) ** 2 + (v / b) ** 2 <= 1
        if not ellipse.any() or (ellipse & ~allowed[win]).any() or ndi.label(ellipse, structure=FOUR_CONNECTED)[1] != 1:
            continue
        if (ndi.binary_dilation(ellipse, structure=EIGHT_CONNECTED, iterations=2) & placed[win]).any():
            continue
        placed[win] |= ellipse
        count += 1
    source[placed] = 255
    return mask, source


# -- geometric perturbation ---------------------------------------------------

def _rotate(img: np.ndarray, angle_deg: float) -> np.ndarray:
    """Counter-clockwise (as displayed) rotation; canvas grows to hold the whole input."""
    quarter = angle_deg / 90.0
    if quarter == round(quarter):
        return np.rot90(img, int(round(quarter)) % 4).copy()
    a = math.radians(angle_deg)
    ca, sa = math.cos(a), math.sin(a)
    h, w = img.shape
    out_w = int(math.ceil(abs(w * ca) + abs(h * sa)))
    out_h = int(math.ceil(abs(w * sa) + abs(h * ca)))
    yy, xx = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    ox, oy = xx - (out_w - 1) / 2, yy - (out_h - 1) / 2
    # Inverse of the forward map x' = x cos a + y sin a, y' = -x sin a + y cos a.
    sx = ox * ca - oy * sa + (w - 1) / 2
    sy = ox * sa + oy * ca + (h - 1) / 2
    ix, iy = np.floor(sx + 0.5).astype(np.int64), np.floor(sy + 0.5).astype(np.int64)
    valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = np.zeros((out_h, out_w), dtype=img.dtype)
    out[valid] = img[iy[valid], ix[valid]]
    return out


def _translate(img: np.ndarray, dx: int, dy: int, content: np.ndarray) -> np.ndarray:
    """Shift by whole pixels; the canvas grows only when content would fall off it."""
    h, w = img.shape
    rows, cols = np.nonzero(content)
    if len(rows):
        grow_l = max(0, -(cols.min() + dx))
        grow_r = max(0, cols.max() + dx - (w - 1))
        grow_t = max(0, -(rows.min() + dy))
        grow_b = max(0, rows.max() + dy - (h - 1))
    else:
        grow_l = grow_r = grow_t = grow_b = 0
    out = np.zeros((h + grow_t + grow_b, w + grow_l + grow_r), dtype=img.dtype)
    src_rows = slice(max(0, -dy - grow_t), min(h, out.shape[0] - dy - grow_t))
    src_cols = slice(max(0, -dx - grow_l), min(w, out.shape[1] - dx - grow_l))
    dst_rows = slice(src_rows.start + dy + grow_t, src_rows.stop + dy + grow_t)
    dst_cols = slice(src_cols.start + dx + grow_l, src_cols.stop + dx + grow_l)
    out[dst_rows, dst_cols] = img[src_rows, src_cols]
    return out


def _scale(img: np.ndarray, gamma: float) -> np.ndarray:
    if gamma == int(gamma) and gamma >= 1:
        g = int(gamma)
        return np.repeat(np.repeat(img, g, axis=0), g, axis=1)
    h, w = img.shape
    out_h, out_w = max(1, int(round(h * gamma))), max(1, int(round(w * gamma)))
    iy = np.minimum((np.arange(out_h) + 0.5) / gamma, h - 1).astype(np.int64)
    ix = np.minimum((np.arange(out_w) + 0.5) / gamma, w - 1).astype(np.int64)
    return img[np.ix_(iy, ix)]


def transform_mask(mask, patch_source, op) -> tuple[np.ndarray, np.ndarray]:
    """Apply ``("rotate", deg)``, ``("translate", dx, dy)`` or ``("scale", gamma)`` to both rasters.

    Multiples of 90 degrees, integer shifts and integer upscaling permute
    pixels exactly; anything else uses nearest-neighbour resampling.
    """
    mask = np.asarray(mask, dtype=bool)
    source = np.asarray(patch_source)
    kind, *args = op
    if kind == "rotate":
        return _rotate(mask, args[0]), _rotate(source, args[0])
    if kind == "translate":
        dx, dy = int(args[0]), int(args[1])
        content = mask | (source > 0)
        return _translate(mask, dx, dy, content), _translate(source, dx, dy, content)
    if kind == "scale":
        return _scale(mask, args[0]), _scale(source, args[0])
    raise ValueError(f"unknown transform {kind!r}")
