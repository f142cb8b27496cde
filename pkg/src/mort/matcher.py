"""L1 matching of descriptor sets, 1NN classification and repeated-split evaluation."""

from __future__ import annotations

import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyGallery, InsufficientSamples, PairCountMismatch
from .transform import MortDescriptor


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    """K interior/complementary descriptor pairs of one sample.

    The pairs are stacked once into a ``(2K, Q+1, M)`` array so a distance is
    a single vectorised reduction; pair ``k`` only ever meets pair ``k``.
    """

    pairs: tuple
    label: str
    sample_id: str
    stacked: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pairs = tuple(self.pairs)
        if not pairs:
            raise ValueError("a descriptor set needs at least one pair")
        shape = pairs[0].interior.shape
        for d in pairs:
            if d.interior.shape != shape or d.complementary.shape != shape:
                raise DimensionMismatch("descriptor pairs of one sample differ in shape")
        stacked = np.stack([mat for d in pairs for mat in (d.interior, d.complementary)]).astype(np.float64)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "stacked", stacked)

    @property
    def k(self) -> int:
        return len(self.pairs)

    @classmethod
    def from_arrays(cls, interior, complementary, label: str = "", sample_id: str = "", n: int = 0, normalized: bool = True):
        """Build a K-pair set from sequences of interior and complementary matrices."""
        pairs = [
            MortDescriptor(np.asarray(i, float), np.asarray(c, float), n=n, normalized=normalized)
            for i, c in zip(interior, complementary)
        ]
        return cls(tuple(pairs), label, sample_id)


def descriptor_distance(a: DescriptorSet, b: DescriptorSet) -> float:
    """Sum over pairs of the entrywise L1 distances of both matrices."""
    if a.stacked.shape != b.stacked.shape:
        if a.k != b.k:
            raise PairCountMismatch(f"pair counts differ: {a.k} vs {b.k}")
        raise DimensionMismatch(f"descriptor shapes differ: {a.stacked.shape[1:]} vs {b.stacked.shape[1:]}")
    return float(np.abs(a.stacked - b.stacked).sum())


@dataclass
class Gallery:
    entries: list

    def __post_init__(self):
        self.entries = list(self.entries)
        if self.entries:
            shape = self.entries[0].stacked.shape
            for e in self.entries:
                if e.stacked.shape != shape:
                    raise DimensionMismatch("gallery entries are not dimension-compatible")

    @property
    def class_list(self) -> list[str]:
        return sorted({e.label for e in self.entries})


def _tie_key(distance: float, entry: DescriptorSet):
    return (distance, entry.label, entry.sample_id)


def classify_1nn(query: DescriptorSet, gallery: Gallery) -> tuple[str, float]:
    """Label and distance of the nearest gallery entry.

    Ties on distance go to the smallest label, then the smallest sample id,
    so the answer does not depend on gallery order.
    """
    if not gallery.entries:
        raise EmptyGallery("gallery is empty")
    best = min(((descriptor_distance(query, e), e) for e in gallery.entries), key=lambda de: _tie_key(*de))
    return best[1].label, best[0]


# -- repeated random splits ---------------------------------------------------

def split_stream(seed: int, repetition: int) -> np.random.Philox:
    """Philox4x64-10 keyed by ``(seed, repetition)`` with a zero counter.

    Each repetition owns an independent counter-based stream, so results do
    not depend on how repetitions are scheduled across workers.
    """
    key = np.array([seed % 2**64, repetition % 2**64], dtype=np.uint64)
    return np.random.Philox(key=key, counter=0)


def bounded(stream: np.random.Philox, n: int) -> int:
    """Uniform integer in [0, n) from raw 64-bit draws, by rejection."""
    limit = 2**64 - (2**64 % n)
    while True:
        raw = int(stream.random_raw())
        if raw < limit:
            return raw % n


def draw_models(stream: np.random.Philox, members: list[int], count: int) -> list[int]:
    """``count`` members without replacement: partial Fisher-Yates on a copy."""
    pool = list(members)
    for j in range(count):
        r = j + bounded(stream, len(pool) - j)
        pool[j], pool[r] = pool[r], pool[j]
    return pool[:count]


@dataclass
class EvalReport:
    accuracy_mean: float
    accuracy_per_rep: list
    match_time_median: float
    match_time_mean: float
    repetitions: int
    seed: int
    config_echo: dict = field(default_factory=dict)
    match_count: int = 0

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "accuracy_mean": self.accuracy_mean,
            "accuracy_per_rep": self.accuracy_per_rep,
            "config": self.config_echo,
            "repetitions": self.repetitions,
            "seed": self.seed,
        }
        if include_timing:
            out.update(self.timing())
        return out

    def timing(self) -> dict:
        return {
            "match_count": self.match_count,
            "match_time_mean_ms": self.match_time_mean,
            "match_time_median_ms": self.match_time_median,
        }

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        return "repetition,accuracy\n" + "".join(f"{i},{a!r}\n" for i, a in enumerate(self.accuracy_per_rep))


def pairwise_distances(samples: list) -> tuple[np.ndarray, list[float]]:
    """Symmetric distance matrix plus the wall time (ms) of every distance call."""
    n = len(samples)
    dist = np.zeros((n, n))
    times = []
    clock = time.perf_counter_ns
    for i in range(n):
        a = samples[i]
        for j in range(i + 1, n):
            t0 = clock()
            d = descriptor_distance(a, samples[j])
            times.append((clock() - t0) / 1e6)
            dist[i, j] = dist[j, i] = d
    return dist, times


def evaluate(
    samples: list,
    model_per_class: int,
    repetitions: int,
    seed: int,
    threads: int = 1,
    config: dict | None = None,
) -> EvalReport:
    """Repeated random model/test splits scored by 1NN accuracy.

    Every repetition draws ``model_per_class`` models per class (classes in
    sorted order, members in input order) from its own Philox stream; the
    remaining samples are classified against the models. Distances are
    computed once for all pairs and timed per call.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if model_per_class < 1:
        raise ValueError("model_per_class must be >= 1")
    if not samples:
        raise InsufficientSamples("no samples")
    shape = samples[0].stacked.shape
    if any(s.stacked.shape != shape for s in samples):
        raise DimensionMismatch("samples are not dimension-compatible")

    classes: dict[str, list[int]] = {}
    for i, s in enumerate(samples):
        classes.setdefault(s.label, []).append(i)
    for label in sorted(classes):
        if len(classes[label]) <= model_per_class:
            raise InsufficientSamples(
                f"class {label!r} has {len(classes[label])} samples; need more than {model_per_class}"
            )

    dist, times = pairwise_distances(samples)
    labels = np.array([s.label for s in samples], dtype=object)
    # Tie rank: lower wins among equal distances.
    rank = np.empty(len(samples), dtype=np.int64)
    rank[sorted(range(len(samples)), key=lambda i: (samples[i].label, samples[i].sample_id))] = np.arange(len(samples))

    def one_rep(rep: int) -> float:
        stream = split_stream(seed, rep)
        models = []
        for label in sorted(classes):
            models.extend(draw_models(stream, classes[label], model_per_class))
        models = np.array(sorted(models, key=lambda i: rank[i]))
        queries = np.setdiff1d(np.arange(len(samples)), models)
        # argmin returns the first minimum, i.e. the best-ranked tie.
        nearest = models[np.argmin(dist[np.ix_(queries, models)], axis=1)]
        return float(np.mean(labels[nearest] == labels[queries]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_rep = list(pool.map(one_rep, range(repetitions)))
    else:
        per_rep = [one_rep(r) for r in range(repetitions)]

    return EvalReport(
        accuracy_mean=float(sum(per_rep) / len(per_rep)),
        accuracy_per_rep=per_rep,
        match_time_median=statistics.median(times) if times else 0.0,
        match_time_mean=statistics.fmean(times) if times else 0.0,
        repetitions=repetitions,
        seed=seed,
        config_echo=dict(config or {}),
        match_count=len(times),
    )
