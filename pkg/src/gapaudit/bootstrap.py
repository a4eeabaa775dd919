"""Bootstrap confidence analysis for the balanced-subset d-primes.

Each of the ``samples`` rounds draws, per gender, the target number of
subjects uniformly without replacement, then the target number of images
from those subjects' pooled images (redrawing the subjects when the pool is
too small, up to 100 retries), and computes the female-vs-male impostor and
genuine d-primes.  Randomness comes from the counter-based Philox4x64-10
generator keyed as ``(seed << 64) | sample_index``, so results are
reproducible from the seed and independent of worker scheduling.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .corpus import Corpus
from .errors import GapAuditWarning, InfeasibleCounts, RetriesExhausted
from .gapstats import dprime
from .scoring import DEFAULT_BINS, CohortView, PairKind, resolve_workers

RNG_NAME = "philox4x64-10"
MAX_RETRIES = 100


@dataclass
class BootstrapMetric:
    balanced_dprime: float | None
    mean_random: float
    std_random: float

    @property
    def within_one_sigma(self) -> bool | None:
        if self.balanced_dprime is None:
            return None
        return abs(self.balanced_dprime - self.mean_random) <= self.std_random

    def to_dict(self) -> dict:
        return {
            "balanced_dprime": self.balanced_dprime,
            "mean_random": self.mean_random,
            "std_random": self.std_random,
            "within_one_sigma": self.within_one_sigma,
        }


@dataclass
class BootstrapReport:
    samples: int
    seed: int
    race: str
    counts: dict[str, tuple[int, int]]  # gender -> (subjects, images)
    impostor: BootstrapMetric
    genuine: BootstrapMetric
    rng: str = RNG_NAME

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "seed": self.seed,
            "rng": self.rng,
            "race": self.race,
            "counts": {g: {"subjects": s, "images": i}
                       for g, (s, i) in self.counts.items()},
            "impostor": self.impostor.to_dict(),
            "genuine": self.genuine.to_dict(),
        }


def render_bootstrap_text(report: BootstrapReport) -> str:
    headers = ["Metric", "d' balanced", "Mean d' random", "Std.dev d' random",
               "Within 1 sigma"]
    rows = []
    for name, metric in (("Impostor", report.impostor), ("Genuine", report.genuine)):
        bal = "n/a" if metric.balanced_dprime is None else f"{metric.balanced_dprime:.3f}"
        within = {None: "n/a", True: "yes", False: "no"}[metric.within_one_sigma]
        rows.append([name, bal, f"{metric.mean_random:.3f}",
                     f"{metric.std_random:.3f}", within])
    widths = [max(len(h), *(len(r[k]) for r in rows)) for k, h in enumerate(headers)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
    lines.append("-" * len(lines[0]))
    for r in rows:
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)


def _draw_positions(rng: Generator, view: CohortView,
                    subjects_by_code: list[np.ndarray],
                    n_subjects: int, n_images: int) -> np.ndarray:
    """Subjects first, then images from their pool; exact without-replacement."""
    for _ in range(MAX_RETRIES):
        chosen = rng.choice(view.n_subjects, size=n_subjects, replace=False)
        pool = np.concatenate([subjects_by_code[c] for c in chosen])
        if pool.size >= n_images:
            take = rng.choice(pool.size, size=n_images, replace=False)
            pos = pool[take]
            pos.sort()
            return pos
    raise RetriesExhausted(
        f"{MAX_RETRIES} subject redraws never pooled {n_images} images "
        f"({view.race}, {view.gender})")


def subject_pools(view: CohortView) -> list[np.ndarray]:
    """Cohort positions grouped by subject code (the resampling pool)."""
    return [np.flatnonzero(view.subj == c).astype(np.int64)
            for c in range(view.n_subjects)]


def sample_positions(views: dict[str, CohortView],
                     pools: dict[str, list[np.ndarray]],
                     target_counts: dict[str, tuple[int, int]],
                     seed: int, index: int) -> dict[str, np.ndarray]:
    """The per-gender draw of bootstrap sample ``index`` (pure in seed/index)."""
    rng = Generator(Philox(key=(int(seed) << 64) | index))
    out = {}
    for gender in ("Female", "Male"):
        ts, ti = target_counts[gender]
        out[gender] = _draw_positions(rng, views[gender], pools[gender], ts, ti)
    return out


def bootstrap_gap(corpus: Corpus, race: str,
                  target_counts: dict[str, tuple[int, int]],
                  samples: int = 1000, seed: int = 0,
                  balanced: dict[PairKind, float] | None = None,
                  bins: int = DEFAULT_BINS, workers: int | None = None,
                  backend=None) -> BootstrapReport:
    """Random-subset d-prime distribution matched to the balanced counts.

    ``target_counts`` maps gender to (subjects, images).  ``balanced``
    optionally supplies the balanced-subset d-primes per pair kind for the
    one-sigma comparison.
    """
    if samples < 1:
        raise InfeasibleCounts(f"samples must be >= 1, got {samples}")
    views = {g: CohortView(corpus, race, g) for g in ("Female", "Male")}
    pools = {}
    for gender, view in views.items():
        ts, ti = target_counts[gender]
        if ts < 1 or ti < 1:
            raise InfeasibleCounts(
                f"target counts for {gender} must be positive, got ({ts}, {ti})")
        if ts > view.n_subjects:
            raise InfeasibleCounts(
                f"{gender}: want {ts} subjects, cohort has {view.n_subjects}")
        if ti > len(view):
            raise InfeasibleCounts(
                f"{gender}: want {ti} images, cohort has {len(view)}")
        pools[gender] = subject_pools(view)

    def one_sample(k: int) -> tuple[float, float]:
        positions = sample_positions(views, pools, target_counts, seed, k)
        dists = {}
        for gender in ("Female", "Male"):
            for kind in (PairKind.IMPOSTOR, PairKind.GENUINE):
                dists[(gender, kind)] = views[gender].distribution(
                    kind, positions=positions[gender], bins=bins, workers=1,
                    backend=backend)
        return (dprime(dists[("Female", PairKind.IMPOSTOR)],
                       dists[("Male", PairKind.IMPOSTOR)]),
                dprime(dists[("Female", PairKind.GENUINE)],
                       dists[("Male", PairKind.GENUINE)]))

    workers = resolve_workers(workers)
    if workers <= 1 or samples == 1:
        results = [one_sample(k) for k in range(samples)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_sample, range(samples)))
    imp = np.array([r[0] for r in results])
    gen = np.array([r[1] for r in results])
    if samples == 1:
        warnings.warn("std of a single bootstrap sample is undefined; "
                      "reporting 0", GapAuditWarning, stacklevel=2)
        std_imp = std_gen = 0.0
    else:
        std_imp = float(imp.std(ddof=1))
        std_gen = float(gen.std(ddof=1))
    balanced = balanced or {}
    return BootstrapReport(
        samples=samples, seed=int(seed), race=race,
        counts={g: tuple(target_counts[g]) for g in ("Female", "Male")},
        impostor=BootstrapMetric(balanced.get(PairKind.IMPOSTOR),
                                 float(imp.mean()), std_imp),
        genuine=BootstrapMetric(balanced.get(PairKind.GENUINE),
                                float(gen.mean()), std_gen),
    )
