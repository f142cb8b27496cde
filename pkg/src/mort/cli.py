"""Batch command line: extract, classify, bench, invariance, synth."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import audit
from .dataset import FAMILIES, SynthSpec, load_image, load_manifest, mask_from_image, synth_shape, transform_mask, write_manifest, write_pgm
from .errors import MissingFile, MortError, ImageFormatError, ParseError
from .matcher import DescriptorSet, Gallery, classify_1nn, evaluate
from .raster import EnclosurePolicy, ThresholdPolicy, is_power_of_two
from .transform import DEFAULT_ORDERS, DEFAULT_POINTS, extract_descriptor, format_descriptors, parse_descriptors

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2
DESCRIPTOR_SUFFIX = ".mortdesc"


@dataclass(frozen=True)
class RunConfig:
    n: int = DEFAULT_POINTS
    m: int = DEFAULT_ORDERS
    policy: str = "threshold"
    tau: float = 128
    margin: float = 4.0
    normalize_area: bool = True
    seed: int = 42
    reps: int = 1000
    model_per_class: int = 3
    mask_threshold: float = 128

    def __post_init__(self):
        if self.n < 4 or not is_power_of_two(self.n):
            raise ValueError(f"--points must be a power of two >= 4, got {self.n}")
        if not 1 <= self.m < self.n:
            raise ValueError(f"--orders must satisfy 1 <= m < {self.n}, got {self.m}")
        if not 0 <= self.tau <= 255:
            raise ValueError(f"--threshold must lie in [0, 255], got {self.tau}")
        if not 0 <= self.mask_threshold <= 255:
            raise ValueError(f"--mask-threshold must lie in [0, 255], got {self.mask_threshold}")
        if self.policy not in ("threshold", "enclosure"):
            raise ValueError(f"unknown policy {self.policy!r}")

    def echo(self) -> dict:
        return asdict(self)


def _policy(name: str, tau: float, margin: float):
    if name == "threshold":
        return ThresholdPolicy(tau)
    if name == "enclosure":
        return EnclosurePolicy(tau, margin)
    raise ValueError(f"unknown policy {name!r}")


def thread_count() -> int:
    raw = os.environ.get("MORT_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"MORT_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError("MORT_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (MissingFile, ImageFormatError, OSError)):
        return EXIT_IO
    return EXIT_INVALID


# -- per-sample extraction ----------------------------------------------------

def _row_pairs(row, config: RunConfig) -> list:
    """Descriptor pairs contributed by one manifest row."""
    if row.image_path.suffix == DESCRIPTOR_SUFFIX:
        try:
            text = row.image_path.read_text()
        except OSError as exc:
            raise MissingFile(f"cannot read {row.image_path}: {exc}") from exc
        try:
            return parse_descriptors(text)
        except ParseError as exc:
            raise ParseError(f"{row.image_path}: {exc.message}", exc.line) from None
    params = dict(row.params)
    source = load_image(row.image_path)
    mask_path = params.pop("mask", None)
    if mask_path is not None:
        mask = mask_from_image(load_image(row.image_path.parent / mask_path), config.mask_threshold)
    else:
        mask = source > 0
    try:
        tau = float(params.pop("tau", config.tau))
        margin = float(params.pop("margin", config.margin))
    except ValueError:
        raise ParseError(f"non-numeric policy parameter for {row.image_path}", row.line) from None
    policy = _policy(params.pop("policy", config.policy), tau, margin)
    if params:
        raise ParseError(f"unknown policy parameters {sorted(params)}", row.line)
    return [extract_descriptor(mask, source, policy, config.n, config.m, config.normalize_area)]


def sample_descriptors(sample, config: RunConfig) -> DescriptorSet:
    pairs = [pair for row in sample.rows for pair in _row_pairs(row, config)]
    return DescriptorSet(tuple(pairs), sample.label, sample.sample_id)


def _map_samples(samples, config: RunConfig, threads: int):
    """Extract every sample; returns (results, errors) in manifest order."""

    def work(sample):
        try:
            return sample_descriptors(sample, config), None
        except (MortError, OSError, ValueError) as exc:
            return None, exc

    if threads > 1 and len(samples) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, samples))
    else:
        outcomes = [work(s) for s in samples]
    results = [r for r, _ in outcomes]
    errors = [(s, e) for s, (_, e) in zip(samples, outcomes) if e is not None]
    return results, errors


def _report_errors(errors) -> int:
    for sample, exc in errors:
        print(f"error: sample {sample.sample_id}: {exc}", file=sys.stderr)
    return max(_exit_code(e) for _, e in errors)


def _load_sets(manifest_path, config: RunConfig, threads: int):
    samples = load_manifest(manifest_path).samples()
    sets, errors = _map_samples(samples, config, threads)
    if errors:
        return None, _report_errors(errors)
    return sets, EXIT_OK


def _write_json(path, payload) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# -- commands -----------------------------------------------------------------

def cmd_extract(args, config: RunConfig) -> int:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    samples = load_manifest(args.manifest).samples()
    sets, errors = _map_samples(samples, config, thread_count())
    for s in sets:
        if s is not None:
            (out / f"{s.sample_id}{DESCRIPTOR_SUFFIX}").write_text(format_descriptors(s.pairs))
    return _report_errors(errors) if errors else EXIT_OK


def cmd_classify(args, config: RunConfig) -> int:
    threads = thread_count()
    gallery_sets, code = _load_sets(args.gallery, config, threads)
    if code:
        return code
    query_sets, code = _load_sets(args.manifest, config, threads)
    if code:
        return code
    gallery = Gallery(gallery_sets)
    results = []
    for q in query_sets:
        label, distance = classify_1nn(q, gallery)
        results.append({"sample_id": q.sample_id, "label": q.label, "predicted": label, "distance": distance})
    report = {"config": config.echo(), "gallery_classes": gallery.class_list, "queries": results}
    labelled = [r for r in results if r["label"]]
    if labelled:
        report["accuracy"] = sum(r["label"] == r["predicted"] for r in labelled) / len(labelled)
    _write_json(args.out, report)
    return EXIT_OK


def cmd_bench(args, config: RunConfig) -> int:
    threads = thread_count()
    sets, code = _load_sets(args.manifest, config, threads)
    if code:
        return code
    report = evaluate(sets, config.model_per_class, config.reps, config.seed, threads, config.echo())
    if args.out is None:
        sys.stdout.write(report.to_json(include_timing=True))
        return EXIT_OK
    out = Path(args.out)
    # Timing is wall-clock and lives in a sidecar so the report itself is reproducible.
    out.write_text(report.to_json(include_timing=False))
    out.with_suffix(".csv").write_text(report.to_csv())
    out.with_suffix(".timing.json").write_text(json.dumps(report.timing(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_invariance(args, config: RunConfig) -> int:
    source = load_image(args.image)
    mask = mask_from_image(load_image(args.mask), config.mask_threshold) if args.mask else source > 0
    policy = _policy(config.policy, config.tau, config.margin)
    cases = audit.audit_shape(mask, source, policy, config.n, config.m, config.normalize_area)
    report = audit.audit_report(cases)
    report["config"] = config.echo()
    _write_json(args.out, report)
    return EXIT_OK if report["passed"] else EXIT_INVALID


def cmd_synth(args, config: RunConfig) -> int:
    """Labelled synthetic set: one base shape per class, randomly rotated per sample."""
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    entries = []
    for c in range(args.classes):
        spec = SynthSpec(
            contour_family=FAMILIES[c % len(FAMILIES)],
            n_interior_patches=args.patches,
            rng_seed=int(rng.integers(2**31)),
            canvas=args.canvas,
        )
        mask, source = synth_shape(spec)
        label = f"class{c:02d}"
        for j in range(args.per_class):
            angle = float(rng.uniform(0, 360)) if args.rotate else 0.0
            m_j, s_j = transform_mask(mask, source, ("rotate", angle)) if angle else (mask, source)
            stem = f"{label}_{j:02d}"
            write_pgm(out / f"{stem}_src.pgm", np.where(m_j, np.maximum(s_j, 1), 0).astype(np.uint8))
            write_pgm(out / f"{stem}_mask.pgm", (m_j * 255).astype(np.uint8))
            entries.append((f"{stem}_src.pgm", label, 0, f"mask={stem}_mask.pgm", stem))
    write_manifest(out / "manifest.tsv", entries, k=1)
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--points", type=int, default=DEFAULT_POINTS, help="contour samples N (power of two)")
    common.add_argument("--orders", type=int, default=DEFAULT_ORDERS, help="DFT orders M kept per row")
    common.add_argument("--threshold", type=float, default=128, help="patch threshold tau in [0, 255]")
    common.add_argument("--policy", choices=("threshold", "enclosure"), default="threshold")
    common.add_argument("--mask-threshold", type=float, default=128, help="mask images: foreground is >= this value")
    common.add_argument("--margin", type=float, default=4.0, help="enclosure policy boundary margin (px)")
    common.add_argument("--normalize-area", action=argparse.BooleanOptionalAction, default=True)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--reps", type=int, default=1000)
    common.add_argument("--model-per-class", type=int, default=3)
    common.add_argument("--out", help="output file or directory (stdout for reports when omitted)")

    parser = argparse.ArgumentParser(prog="mort", description="Patchy-shape descriptors and 1NN matching.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[common], help="write one descriptor file per sample")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("classify", parents=[common], help="1NN-classify query samples against a gallery")
    p.add_argument("--gallery", required=True, help="gallery manifest")
    p.add_argument("--manifest", required=True, help="query manifest")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("bench", parents=[common], help="repeated random-split 1NN evaluation")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("invariance", parents=[common], help="translation/rotation/scale audit of one image")
    p.add_argument("image")
    p.add_argument("--mask", help="separate mask image (default: nonzero pixels of IMAGE)")
    p.set_defaults(func=cmd_invariance)

    p = sub.add_parser("synth", parents=[common], help="generate a labelled synthetic dataset")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=6)
    p.add_argument("--patches", type=int, default=4)
    p.add_argument("--canvas", type=int, default=128)
    p.add_argument("--rotate", action=argparse.BooleanOptionalAction, default=True, help="random rotation per sample")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig(
            n=args.points,
            m=args.orders,
            policy=args.policy,
            tau=args.threshold,
            margin=args.margin,
            normalize_area=args.normalize_area,
            seed=args.seed,
            reps=args.reps,
            model_per_class=args.model_per_class,
            mask_threshold=args.mask_threshold,
        )
        return args.func(args, config)
    except (MortError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
