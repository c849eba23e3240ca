"""
Event-driven simulator of the interval-merging process.

The shortest interval is repeatedly merged with j partners, j drawn with
probability p_j. In the mean-field variant partners are uniformly random
intervals; in the ring variant they are the nearest neighbours on a circle.
Minimum extraction uses a bucket queue keyed on length, uniform sampling a flat
id array with swap-remove.
"""

import heapq
import logging
import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import ConfigError
from .grid import GridDensity
from .kernel import Kernel

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.random.Philox"
BUCKETS_PER_CUTOFF = 1024
MEAN_FIELD = "mean_field"
RING = "ring"


@dataclass(frozen=True)
class SamplerSpec:
    """
    Distribution of initial lengths: constant(value), uniform[low, high] or
    1 + Exp(scale). Every variant must be supported on [1, inf).
    """
    kind: str = "uniform"
    value: float = 1.5
    low: float = 1.0
    high: float = 2.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "uniform", "exponential"):
            raise ConfigError(f"Unknown sampler kind: {self.kind}")
        if self.kind == "constant" and self.value < 1.0:
            raise ConfigError(f"Constant sampler emits {self.value} < 1")
        if self.kind == "uniform" and (self.low < 1.0 or self.high < self.low):
            raise ConfigError(f"Uniform sampler [{self.low}, {self.high}] must lie in [1, inf)")
        if self.kind == "exponential" and self.scale <= 0.0:
            raise ConfigError(f"Exponential sampler needs a positive scale, got {self.scale}")

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(count, self.value)
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=count)
        return 1.0 + rng.exponential(self.scale, size=count)

    @classmethod
    def parse(cls, text: str) -> "SamplerSpec":
        """Parse constant:1.5, uniform:1,2 or exponential:0.5"""
        kind, _, args = text.strip().partition(":")
        try:
            params = [float(a) for a in args.split(",") if a.strip()]
        except ValueError as e:
            raise ConfigError(f"Cannot parse sampler '{text}': {e}") from e
        if kind == "constant" and len(params) == 1:
            return cls(kind=kind, value=params[0])
        if kind == "uniform" and len(params) == 2:
            return cls(kind=kind, low=params[0], high=params[1])
        if kind == "exponential" and len(params) <= 1:
            return cls(kind=kind, scale=params[0] if params else 1.0)
        raise ConfigError(f"Cannot parse sampler '{text}'")


class BucketQueue:
    """
    Min-queue over lengths: buckets of width `width`, each a small heap, plus a
    pointer to the lowest possibly nonempty bucket. Entries are invalidated
    lazily through the `is_current` callback.
    """

    def __init__(self, width: float):
        self.width = width
        self.buckets: Dict[int, list] = {}
        self.current = 0

    def _index(self, length: float) -> int:
        return int(length / self.width)

    def push(self, length: float, key: int) -> None:
        b = self._index(length)
        heapq.heappush(self.buckets.setdefault(b, []), (length, key))
        if b < self.current:
            self.current = b

    def pop(self, is_current) -> Tuple[float, int]:
        while self.buckets:
            bucket = self.buckets.get(self.current)
            while bucket:
                length, key = heapq.heappop(bucket)
                if is_current(length, key):
                    return length, key
            self.buckets.pop(self.current, None)
            if not self.buckets:
                break
            self.current += 1
        raise IndexError("pop from an empty bucket queue")

    def rebuild(self, width: float, entries) -> None:
        self.width = width
        self.buckets = {}
        self.current = 1 << 62
        for length, key in entries:
            self.push(length, key)


@dataclass
class McEnsemble:
    """Current interval configuration of one simulation"""
    length_of: List[float]
    alive: List[int]
    position: List[int]
    cutoff: float
    rng_seed: int
    variant: str = MEAN_FIELD
    event_count: int = 0
    rng_algorithm: str = RNG_ALGORITHM
    next_id: List[int] = field(default_factory=list)
    prev_id: List[int] = field(default_factory=list)
    events: List[Tuple[float, int, float]] = field(default_factory=list)
    initial_total: float = 0.0
    initial_count: int = 0
    stopped_early: bool = False
    stop_reason: Optional[str] = None
    rng: np.random.Generator = field(default=None, repr=False)
    queue: BucketQueue = field(default=None, repr=False)
    _rebuild_cutoff: float = 1.0
    _drift: float = 0.0
    _drift_comp: float = 0.0

    @classmethod
    def from_lengths(cls, lengths, seed: int = 0, variant: str = MEAN_FIELD,
                     cutoff: float = 1.0) -> "McEnsemble":
        if variant not in (MEAN_FIELD, RING):
            raise ConfigError(f"Unknown variant: {variant}")
        values = [float(x) for x in lengths]
        if not values:
            raise ConfigError("An ensemble needs at least one interval")
        if min(values) < cutoff:
            raise ConfigError(f"All lengths must be at least the cutoff {cutoff}")
        n = len(values)
        ens = cls(length_of=values, alive=list(range(n)), position=list(range(n)), cutoff=cutoff,
                  rng_seed=seed, variant=variant, initial_total=math.fsum(values), initial_count=n,
                  rng=np.random.Generator(np.random.Philox(seed)))
        if variant == RING:
            ens.next_id = [(i + 1) % n for i in range(n)]
            ens.prev_id = [(i - 1) % n for i in range(n)]
        ens.queue = BucketQueue(cutoff / BUCKETS_PER_CUTOFF)
        ens.queue.rebuild(cutoff / BUCKETS_PER_CUTOFF, ((v, i) for i, v in enumerate(values)))
        ens._rebuild_cutoff = cutoff
        return ens

    @property
    def count(self) -> int:
        return len(self.alive)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([self.length_of[i] for i in self.alive])

    def total_length(self) -> float:
        return math.fsum(self.length_of[i] for i in self.alive)

    def rounding_drift(self) -> float:
        """Compensated sum of per-event rounding in the merged lengths"""
        return self._drift

    def _is_current(self, length: float, key: int) -> bool:
        return self.position[key] >= 0 and self.length_of[key] == length

    def _remove(self, key: int) -> None:
        pos = self.position[key]
        last = self.alive.pop()
        if last != key:
            self.alive[pos] = last
            self.position[last] = pos
        self.position[key] = -1

    def _insert(self, key: int) -> None:
        self.position[key] = len(self.alive)
        self.alive.append(key)
        self.queue.push(self.length_of[key], key)

    def _add_drift(self, delta: float) -> None:
        y = delta - self._drift_comp
        t = self._drift + y
        self._drift_comp = (t - self._drift) - y
        self._drift = t

    def peek_min(self) -> float:
        length, key = self.queue.pop(self._is_current)
        self.queue.push(length, key)
        return length


def init_ensemble(count: int, sampler: SamplerSpec, seed: int, variant: str = MEAN_FIELD) -> McEnsemble:
    """Draw count i.i.d. lengths; cutoff starts at 1"""
    if count < 1:
        raise ConfigError(f"count must be positive, got {count}")
    if count < 10:
        logger.warning("Ensemble of %d intervals is below the recommended minimum of 10", count)
    rng = np.random.Generator(np.random.Philox(seed))
    lengths = sampler.draw(rng, count)
    ens = McEnsemble.from_lengths(lengths, seed=seed, variant=variant, cutoff=1.0)
    ens.rng = rng
    return ens


def _draw_partner_count(ens: McEnsemble, cumulative: np.ndarray) -> int:
    if len(cumulative) == 1:
        return 1
    return int(np.searchsorted(cumulative, ens.rng.random(), side="right")) + 1


def _ring_partners(ens: McEnsemble, key: int, j: int) -> List[int]:
    right_first = True if j % 2 == 0 else bool(ens.rng.random() < 0.5)
    right, left = ens.next_id[key], ens.prev_id[key]
    taken = []
    go_right = right_first
    for _ in range(j):
        if go_right:
            taken.append(right)
            right = ens.next_id[right]
        else:
            taken.append(left)
            left = ens.prev_id[left]
        go_right = not go_right
    return taken


def _unlink(ens: McEnsemble, key: int) -> None:
    p, n = ens.prev_id[key], ens.next_id[key]
    ens.next_id[p] = n
    ens.prev_id[n] = p


def step(ens: McEnsemble, k: Kernel, record_events: bool = True) -> bool:
    """
    Merge the current minimum with its partners. Returns False (and marks the
    ensemble) when too few intervals remain for the drawn partner count.
    """
    cumulative = np.cumsum(k.weights)
    j = _draw_partner_count(ens, cumulative)
    if ens.count < j + 1:
        ens.stopped_early = True
        ens.stop_reason = f"population {ens.count} too small for {j} partners"
        return False
    m, key = ens.queue.pop(ens._is_current)
    ens._remove(key)
    if ens.variant == RING:
        partners = _ring_partners(ens, key, j)
        for pid in partners:
            _unlink(ens, pid)
    else:
        partners = []
        for _ in range(j):
            pid = ens.alive[int(ens.rng.integers(ens.count))]
            ens._remove(pid)
            partners.append(pid)
    parts = [m] + [ens.length_of[pid] for pid in partners]
    for pid in partners:
        if ens.position[pid] >= 0:
            ens._remove(pid)
    merged = math.fsum(parts)
    naive = sum(parts)
    ens._add_drift(merged - naive)
    ens.length_of[key] = merged
    ens._insert(key)
    ens.event_count += 1
    if record_events:
        ens.events.append((m, j, merged))
    ens.cutoff = ens.peek_min()
    if ens.cutoff >= 2.0 * ens._rebuild_cutoff:
        width = ens.cutoff / BUCKETS_PER_CUTOFF
        ens.queue.rebuild(width, ((ens.length_of[i], i) for i in ens.alive))
        ens._rebuild_cutoff = ens.cutoff
    return True


def run_until(ens: McEnsemble, k: Kernel, target_cutoff: float, min_population: int = 100,
              record_events: bool = True, max_events: Optional[int] = None) -> McEnsemble:
    """
    Merge until the shortest interval reaches target_cutoff, or stop early when
    the population falls below min_population.
    """
    if target_cutoff <= ens.cutoff:
        raise ConfigError(f"Target cutoff {target_cutoff} must exceed the current cutoff {ens.cutoff}")
    start_events = ens.event_count
    while ens.cutoff < target_cutoff:
        if ens.count < min_population:
            ens.stopped_early = True
            ens.stop_reason = f"population {ens.count} below floor {min_population}"
            logger.warning("Stopping early at cutoff %.4f: %s", ens.cutoff, ens.stop_reason)
            break
        if max_events is not None and ens.event_count - start_events >= max_events:
            break
        if not step(ens, k, record_events):
            logger.warning("Stopping early at cutoff %.4f: %s", ens.cutoff, ens.stop_reason)
            break
    logger.info("Ensemble reached cutoff %.6g after %d events (%d intervals)",
                ens.cutoff, ens.event_count, ens.count)
    return ens


@dataclass
class EmpiricalCdf:
    """Sorted rescaled lengths y_i = x_i / L with F(y_i) = (i + 1) / n"""
    y: np.ndarray
    F: np.ndarray
    cutoff: float


def empirical_rescaled(ens: McEnsemble) -> EmpiricalCdf:
    if ens.count == 0:
        raise ConfigError("Empty ensemble")
    y = np.sort(ens.lengths / ens.cutoff)
    n = len(y)
    return EmpiricalCdf(y=y, F=np.arange(1, n + 1) / n, cutoff=ens.cutoff)


def reference_cdf(reference: GridDensity, y: np.ndarray) -> np.ndarray:
    cum = reference.cdf()
    return np.interp(y, reference.y, cum, left=0.0, right=cum[-1])


def ks_distance(emp: EmpiricalCdf, reference: GridDensity, mass_tol: float = 1e-3) -> float:
    """sup over sample points of |F_emp - F_ref|, both sides of each step"""
    if abs(reference.mass - 1.0) > mass_tol:
        raise ConfigError(f"Reference density has mass {reference.mass:.6g}, expected 1")
    f_ref = reference_cdf(reference, emp.y)
    before = np.concatenate([[0.0], emp.F[:-1]])
    return float(max(np.max(np.abs(emp.F - f_ref)), np.max(np.abs(before - f_ref))))


def ks_two_sample(a: EmpiricalCdf, b: EmpiricalCdf) -> float:
    return float(stats.ks_2samp(a.y, b.y).statistic)


@dataclass
class ReplicaSummary:
    """Outcome of one independently seeded ensemble"""
    seed: int
    cutoff: float
    count: int
    events: int
    ks: float
    relative_length_error: float
    stopped_early: bool


def _run_replica(args) -> ReplicaSummary:
    k, count, sampler, seed, grow, reference, variant = args
    ens = init_ensemble(count, sampler, seed, variant)
    run_until(ens, k, grow * ens.cutoff, record_events=False)
    ks = ks_distance(empirical_rescaled(ens), reference)
    error = abs(ens.total_length() - ens.initial_total) / ens.initial_total
    return ReplicaSummary(seed=seed, cutoff=ens.cutoff, count=ens.count, events=ens.event_count,
                          ks=ks, relative_length_error=error, stopped_early=ens.stopped_early)


def run_replicas(k: Kernel, count: int, sampler: SamplerSpec, seeds: Sequence[int], grow: float,
                 reference: GridDensity, variant: str = MEAN_FIELD,
                 processes: Optional[int] = None) -> List[ReplicaSummary]:
    """One ensemble per seed; processes=1 runs them in this process"""
    jobs = [(k, count, sampler, int(s), grow, reference, variant) for s in seeds]
    if processes == 1 or len(jobs) <= 1:
        return [_run_replica(job) for job in jobs]
    with Pool(processes) as pool:
        return pool.map(_run_replica, jobs)


def aggregate_replicas(results: Sequence[ReplicaSummary]) -> Dict[str, float]:
    ks = np.array([r.ks for r in results])
    return {
        "replicas": len(results),
        "ks_mean": float(ks.mean()),
        "ks_stderr": float(ks.std(ddof=1) / np.sqrt(len(ks))) if len(ks) > 1 else 0.0,
        "ks_max": float(ks.max()),
        "max_relative_length_error": max(r.relative_length_error for r in results),
        "any_stopped_early": any(r.stopped_early for r in results),
    }
