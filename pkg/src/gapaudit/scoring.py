"""Genuine/impostor pair enumeration and cosine score distributions.

The quadratic sweep is organized as a fixed decomposition into score-block
tasks: BLAS computes each block, a kernel backend folds it into a histogram
plus streaming moments (Welford/Chan updates), and partial results merge in
task order.  The decomposition depends only on the cohort size, never on the
worker count, so a parallel run reproduces the serial result bitwise.
"""

from __future__ import annotations

import enum
import math
import os
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.random import Generator, Philox
from threadpoolctl import threadpool_limits

from . import kernels
from .corpus import Corpus
from .errors import DimensionMismatch, GapAuditWarning, ZeroNormEmbedding

HIST_LO = -1.0
HIST_HI = 1.0
DEFAULT_BINS = 400

# scores per block task; fixed so task boundaries never depend on workers
_TASK_SCORES = 1 << 22


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: the explicit argument, else GAPAUDIT_THREADS, else cpus."""
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("GAPAUDIT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


_blas_lock = threading.Lock()
_blas_depth = 0
_blas_limiter = None


@contextmanager
def _blas_single():
    """Pin BLAS to one thread inside scoring regions, reentrantly.

    Block gemms must be bitwise reproducible regardless of worker count, so
    BLAS internal threading is disabled while any scoring task runs;
    parallelism comes from the block workers instead.  Refcounting makes
    concurrent entry from multiple threads safe.
    """
    global _blas_depth, _blas_limiter
    with _blas_lock:
        if _blas_depth == 0:
            _blas_limiter = threadpool_limits(limits=1)
        _blas_depth += 1
    try:
        yield
    finally:
        with _blas_lock:
            _blas_depth -= 1
            if _blas_depth == 0:
                limiter, _blas_limiter = _blas_limiter, None
                limiter.restore_original_limits()


class PairKind(str, enum.Enum):
    GENUINE = "genuine"
    IMPOSTOR = "impostor"


@dataclass(frozen=True)
class PairSpec:
    """Which pairs to score: a cohort, a kind, optional subset and split.

    ``split`` is a pair of predicates over image ids; a pair is admitted when
    one side satisfies the first predicate and the other side the second.
    """

    race: str
    gender: str
    kind: PairKind
    subset: frozenset[str] | None = None
    split: tuple[Callable[[str], bool], Callable[[str], bool]] | None = None

    @property
    def cohort(self) -> tuple[str, str]:
        return (self.race, self.gender)


class ScoreDistribution:
    """Streaming-mergeable moments plus a fixed-bin histogram over [-1, 1]."""

    def __init__(self, n: int, mean: float, m2: float, minimum: float | None,
                 maximum: float | None, hist: np.ndarray,
                 lo: float = HIST_LO, hi: float = HIST_HI):
        self.n = int(n)
        self.mean = float(mean)
        self.m2 = float(m2)
        self.minimum = minimum
        self.maximum = maximum
        self.hist = np.asarray(hist, dtype=np.int64)
        self.lo = lo
        self.hi = hi

    @classmethod
    def empty(cls, bins: int = DEFAULT_BINS) -> "ScoreDistribution":
        return cls(0, 0.0, 0.0, None, None, np.zeros(bins, dtype=np.int64))

    @classmethod
    def from_scores(cls, scores, bins: int = DEFAULT_BINS) -> "ScoreDistribution":
        """Build directly from raw scores (the serial oracle path)."""
        scores = np.asarray(scores, dtype=np.float64)
        if scores.size == 0:
            return cls.empty(bins)
        idx = ((scores - HIST_LO) * (bins / (HIST_HI - HIST_LO))).astype(np.int64)
        np.clip(idx, 0, bins - 1, out=idx)
        hist = np.bincount(idx, minlength=bins).astype(np.int64)
        mean = float(scores.mean())
        m2 = float(((scores - mean) ** 2).sum())
        return cls(scores.size, mean, m2, float(scores.min()),
                   float(scores.max()), hist)

    @property
    def bins(self) -> int:
        return int(self.hist.shape[0])

    @property
    def variance(self) -> float:
        """Sample variance (n-1 denominator)."""
        if self.n < 2:
            return float("nan")
        return self.m2 / (self.n - 1)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def merge(self, other: "ScoreDistribution") -> "ScoreDistribution":
        """Associative combine of two partial distributions."""
        if self.bins != other.bins or self.lo != other.lo or self.hi != other.hi:
            raise DimensionMismatch("cannot merge distributions with different binning")
        if self.n == 0:
            return ScoreDistribution(other.n, other.mean, other.m2, other.minimum,
                                     other.maximum, self.hist + other.hist,
                                     self.lo, self.hi)
        if other.n == 0:
            return ScoreDistribution(self.n, self.mean, self.m2, self.minimum,
                                     self.maximum, self.hist + other.hist,
                                     self.lo, self.hi)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.n * other.n / n)
        return ScoreDistribution(n, mean, m2,
                                 min(self.minimum, other.minimum),
                                 max(self.maximum, other.maximum),
                                 self.hist + other.hist, self.lo, self.hi)

    def bin_edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.bins + 1)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "m2": self.m2,
            "min": self.minimum,
            "max": self.maximum,
            "lo": self.lo,
            "hi": self.hi,
            "bins": self.bins,
            "hist": self.hist.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScoreDistribution":
        return cls(doc["n"], doc["mean"], doc["m2"], doc["min"], doc["max"],
                   np.asarray(doc["hist"], dtype=np.int64), doc["lo"], doc["hi"])

    def write_hist_csv(self, path, header_lines: Sequence[str] = ()) -> None:
        edges = self.bin_edges()
        with open(path, "w") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write("bin_low,bin_high,count\n")
            for k in range(self.bins):
                fh.write(f"{edges[k]:.10g},{edges[k + 1]:.10g},{self.hist[k]}\n")


def cosine(a, b) -> float:
    """Cosine similarity of two embedding rows, computed in float64."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = math.sqrt(float(a @ a))
    nb = math.sqrt(float(b @ b))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormEmbedding("cosine undefined for zero-norm vector")
    return float(a @ b) / (na * nb)


def _fresh_partial(bins: int) -> tuple[np.ndarray, np.ndarray]:
    hist = np.zeros(bins, dtype=np.int64)
    mom = np.array([0.0, 0.0, 0.0, np.inf, -np.inf], dtype=np.float64)
    return hist, mom


def _partial_to_dist(hist: np.ndarray, mom: np.ndarray) -> ScoreDistribution:
    n = int(mom[0])
    if n == 0:
        return ScoreDistribution(0, 0.0, 0.0, None, None, hist)
    return ScoreDistribution(n, mom[1], mom[2], float(mom[3]), float(mom[4]), hist)


def _group_by_code(subj: np.ndarray) -> list[np.ndarray]:
    order = np.argsort(subj, kind="stable")
    groups: dict[int, list[int]] = {}
    for p in order:
        groups.setdefault(int(subj[p]), []).append(int(p))
    return [np.array(v, dtype=np.int64) for v in groups.values()]


def _genuine_tasks(groups: list[np.ndarray]) -> list[list[np.ndarray]]:
    chunks: list[list[np.ndarray]] = []
    cur: list[np.ndarray] = []
    load = 0
    for grp in groups:
        if grp.size < 2:
            continue
        cur.append(grp)
        load += grp.size * grp.size
        if load >= _TASK_SCORES:
            chunks.append(cur)
            cur, load = [], 0
    if cur:
        chunks.append(cur)
    return chunks


def _genuine_pair_arrays(groups: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    ii, jj = [], []
    for grp in groups:
        k = grp.size
        if k < 2:
            continue
        a, b = np.triu_indices(k, k=1)
        ii.append(grp[a])
        jj.append(grp[b])
    if not ii:
        return (np.zeros(0, dtype=np.int64),) * 2
    return np.concatenate(ii), np.concatenate(jj)


def _sample_pairs(kind: PairKind, subj: np.ndarray, groups: list[np.ndarray],
                  max_pairs: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform without-replacement subsample of the admissible pairs."""
    rng = Generator(Philox(key=seed))
    if kind is PairKind.GENUINE:
        ii, jj = _genuine_pair_arrays(groups)
        pick = rng.choice(ii.size, size=max_pairs, replace=False)
        pick.sort()
        return ii[pick], jj[pick]
    n = int(subj.shape[0])
    total = n * (n - 1) // 2
    # row i owns (n-1-i) linear pair indices
    counts = np.arange(n - 1, 0, -1, dtype=np.int64)
    cum = np.concatenate([[0], np.cumsum(counts)])
    chosen = np.zeros(0, dtype=np.int64)
    while chosen.size < max_pairs:
        need = max_pairs - chosen.size
        draw = rng.integers(0, total, size=max(64, 2 * need), dtype=np.int64)
        cand = np.unique(np.concatenate([chosen, draw]))
        i = np.searchsorted(cum, cand, side="right") - 1
        j = i + 1 + (cand - cum[i])
        chosen = cand[subj[i] != subj[j]]
    if chosen.size > max_pairs:
        chosen = rng.permutation(chosen)[:max_pairs]
        chosen.sort()
    i = np.searchsorted(cum, chosen, side="right") - 1
    j = i + 1 + (chosen - cum[i])
    return i.astype(np.int64), j.astype(np.int64)


def _run_tasks(fn, tasks, workers: int):
    with _blas_single():
        if workers <= 1 or len(tasks) <= 1:
            return [fn(t) for t in tasks]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))


def distribution_from_arrays(en: np.ndarray, subj: np.ndarray, kind: PairKind,
                             flags: tuple[np.ndarray, np.ndarray] | None = None,
                             bins: int = DEFAULT_BINS,
                             workers: int | None = None,
                             max_pairs: int | None = None, seed: int = 0,
                             backend=None) -> ScoreDistribution:
    """Distribution over the pairs of pre-normalized rows ``en``.

    ``subj`` holds dense subject codes aligned with the rows.  This is the
    engine under :func:`score_distribution`; the benchmark drives it
    directly.
    """
    kern = kernels.get_backend(backend) if isinstance(backend, (str, type(None))) else backend
    workers = resolve_workers(workers)
    nloc = int(en.shape[0])
    if flags is None:
        fa = fb = np.zeros(0, dtype=np.uint8)
        use_flags = False
    else:
        fa = np.ascontiguousarray(flags[0], dtype=np.uint8)
        fb = np.ascontiguousarray(flags[1], dtype=np.uint8)
        use_flags = True
    if nloc < 2:
        warnings.warn(f"empty {kind.value} distribution", GapAuditWarning,
                      stacklevel=2)
        return ScoreDistribution.empty(bins)

    groups = _group_by_code(subj)
    genuine_total = sum(g.size * (g.size - 1) // 2 for g in groups)
    total = genuine_total if kind is PairKind.GENUINE \
        else nloc * (nloc - 1) // 2 - genuine_total
    if total == 0:
        warnings.warn(f"empty {kind.value} distribution", GapAuditWarning,
                      stacklevel=2)
        return ScoreDistribution.empty(bins)

    inv_width = bins / (HIST_HI - HIST_LO)
    if max_pairs is not None and total > max_pairs:
        ii, jj = _sample_pairs(kind, subj, groups, max_pairs, seed)
        tasks = [(ii[s:s + _TASK_SCORES], jj[s:s + _TASK_SCORES])
                 for s in range(0, ii.size, _TASK_SCORES)]

        def run_pairs(task):
            hist, mom = _fresh_partial(bins)
            kern.accumulate_pairs(en, task[0], task[1], HIST_LO, inv_width,
                                  hist, mom)
            return hist, mom

        parts = _run_tasks(run_pairs, tasks, workers)
    elif kind is PairKind.GENUINE:
        chunks = _genuine_tasks(groups)

        def run_group(chunk):
            hist, mom = _fresh_partial(bins)
            for grp in chunk:
                es = np.ascontiguousarray(en[grp])
                scores = es @ es.T
                kern.accumulate_block(scores, 0, 0,
                                      np.zeros(grp.size, dtype=np.int32),
                                      fa[grp] if use_flags else fa,
                                      fb[grp] if use_flags else fb,
                                      use_flags, True, HIST_LO, inv_width,
                                      hist, mom)
            return hist, mom

        parts = _run_tasks(run_group, chunks, workers)
    else:
        rows_per_task = max(1, _TASK_SCORES // nloc)
        tasks = [(r0, min(r0 + rows_per_task, nloc))
                 for r0 in range(0, nloc - 1, rows_per_task)]

        def run_rows(task):
            r0, r1 = task
            hist, mom = _fresh_partial(bins)
            scores = en[r0:r1] @ en[r0:].T
            kern.accumulate_block(scores, r0, r0, subj, fa, fb, use_flags,
                                  False, HIST_LO, inv_width, hist, mom)
            return hist, mom

        parts = _run_tasks(run_rows, tasks, workers)

    dist = ScoreDistribution.empty(bins)
    for hist, mom in parts:
        dist = dist.merge(_partial_to_dist(hist, mom))
    return dist


class CohortView:
    """Cohort slice of a corpus prepared for scoring.

    Rows are normalized once; subject ids are mapped to dense codes in first
    appearance order.  Reused across bootstrap samples to avoid repeated
    normalization.
    """

    def __init__(self, corpus: Corpus, race: str, gender: str):
        self.race = race
        self.gender = gender
        self.records = [r for r in corpus.records
                        if r.race == race and r.gender == gender]
        self.ids = [r.image_id for r in self.records]
        self._pos = {image_id: k for k, image_id in enumerate(self.ids)}
        idx = np.array([r.embedding_index for r in self.records], dtype=np.int64)
        if idx.size:
            emb = corpus.embeddings.data[idx].astype(np.float64)
            emb /= corpus.norms[idx][:, None]
            self.en = np.ascontiguousarray(emb.astype(np.float32))
        else:
            self.en = np.zeros((0, corpus.embeddings.dim), dtype=np.float32)
        codes: dict[str, int] = {}
        subj = np.empty(len(self.records), dtype=np.int32)
        for k, rec in enumerate(self.records):
            subj[k] = codes.setdefault(rec.subject_id, len(codes))
        self.subj = subj
        self.n_subjects = len(codes)

    def __len__(self) -> int:
        return len(self.records)

    def positions_for(self, image_ids) -> np.ndarray:
        pos = [self._pos[i] for i in image_ids if i in self._pos]
        return np.array(sorted(pos), dtype=np.int64)

    def split_flags(self, split) -> tuple[np.ndarray, np.ndarray] | None:
        if split is None:
            return None
        pred_a, pred_b = split
        fa = np.fromiter((bool(pred_a(i)) for i in self.ids), dtype=np.uint8,
                         count=len(self.ids))
        fb = np.fromiter((bool(pred_b(i)) for i in self.ids), dtype=np.uint8,
                         count=len(self.ids))
        return fa, fb

    def distribution(self, kind: PairKind, positions: np.ndarray | None = None,
                     flags: tuple[np.ndarray, np.ndarray] | None = None,
                     bins: int = DEFAULT_BINS, workers: int | None = None,
                     max_pairs: int | None = None, seed: int = 0,
                     backend=None) -> ScoreDistribution:
        if positions is None:
            en, subj = self.en, self.subj
        else:
            pos = np.asarray(positions, dtype=np.int64)
            en = np.ascontiguousarray(self.en[pos])
            subj = self.subj[pos]
            if flags is not None:
                flags = (flags[0][pos], flags[1][pos])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", GapAuditWarning)
            dist = distribution_from_arrays(en, subj, kind, flags=flags,
                                            bins=bins, workers=workers,
                                            max_pairs=max_pairs, seed=seed,
                                            backend=backend)
        for w in caught:
            warnings.warn(f"cohort ({self.race}, {self.gender}): {w.message}",
                          GapAuditWarning, stacklevel=2)
        return dist


def enumerate_pairs(corpus: Corpus, spec: PairSpec) -> Iterator[tuple[str, str]]:
    """Stream admissible unordered pairs in corpus order.

    This is the reference enumeration (one pair at a time); the distribution
    computation uses the block kernels over the same pair set.
    """
    view = CohortView(corpus, spec.race, spec.gender)
    keep = np.ones(len(view), dtype=bool)
    if spec.subset is not None:
        keep = np.array([i in spec.subset for i in view.ids], dtype=bool)
    pos = np.flatnonzero(keep)
    flags = view.split_flags(spec.split)
    genuine = spec.kind is PairKind.GENUINE
    for a in range(pos.size):
        i = pos[a]
        for b in range(a + 1, pos.size):
            j = pos[b]
            if (view.subj[i] == view.subj[j]) != genuine:
                continue
            if flags is not None:
                fa, fb = flags
                if not ((fa[i] and fb[j]) or (fb[i] and fa[j])):
                    continue
            yield view.ids[i], view.ids[j]


def score_distribution(corpus: Corpus, spec: PairSpec, bins: int = DEFAULT_BINS,
                       workers: int | None = None, max_pairs: int | None = None,
                       seed: int = 0, backend=None) -> ScoreDistribution:
    """Score distribution over all pairs admitted by ``spec``."""
    view = CohortView(corpus, spec.race, spec.gender)
    positions = None
    if spec.subset is not None:
        positions = view.positions_for(spec.subset)
    flags = view.split_flags(spec.split)
    return view.distribution(spec.kind, positions=positions, flags=flags,
                             bins=bins, workers=workers, max_pairs=max_pairs,
                             seed=seed, backend=backend)
