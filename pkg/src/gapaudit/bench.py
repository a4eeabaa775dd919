"""Throughput harness for the hot kernels, comparing available backends.

Two workloads: the fused cosine scoring sweep (gemm blocks plus histogram
and moment accumulation, the same task loop the scoring module runs) and the
packed-bitmap IoU scan used by the balancer.  Pair counts are realized as an
all-impostor cohort of ``n`` unit vectors with n*(n-1)/2 >= the requested
pairs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from . import kernels
from .scoring import DEFAULT_BINS, PairKind, distribution_from_arrays, resolve_workers


@dataclass
class BenchResult:
    workload: str
    backend: str
    quantity: int
    elapsed_s: float
    checksum: str

    @property
    def per_second(self) -> float:
        return self.quantity / self.elapsed_s if self.elapsed_s > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "workload": self.workload,
            "backend": self.backend,
            "quantity": self.quantity,
            "elapsed_s": self.elapsed_s,
            "per_second": self.per_second,
            "checksum": self.checksum,
        }


def _cohort_for_pairs(pairs: int, dim: int, seed: int = 7) -> tuple[np.ndarray, np.ndarray]:
    n = max(2, math.ceil((1.0 + math.sqrt(1.0 + 8.0 * pairs)) / 2.0))
    rng = Generator(Philox(key=seed))
    emb = rng.standard_normal((n, dim)).astype(np.float32)
    emb /= np.linalg.norm(emb, axis=1, keepdims=True).astype(np.float32)
    subj = np.arange(n, dtype=np.int32)  # all distinct: every pair is impostor
    return np.ascontiguousarray(emb), subj


def bench_scoring(pairs: int = 10**8, dim: int = 512, bins: int = DEFAULT_BINS,
                  backend: str = "py", workers: int | None = None,
                  seed: int = 7) -> BenchResult:
    """Time the full scoring sweep (gemm + fused accumulation)."""
    en, subj = _cohort_for_pairs(pairs, dim, seed)
    n = en.shape[0]
    actual = n * (n - 1) // 2
    workers = resolve_workers(workers)
    t0 = time.perf_counter()
    dist = distribution_from_arrays(en, subj, PairKind.IMPOSTOR, bins=bins,
                                    workers=workers, backend=backend)
    elapsed = time.perf_counter() - t0
    checksum = f"n={dist.n},mean={dist.mean:.9f},histsum={int(dist.hist.sum())}"
    return BenchResult("cosine-scoring", backend, actual, elapsed, checksum)


def bench_iou(masks: int = 4096, words: int = 196, sweeps: int = 64,
              backend: str = "py", seed: int = 11) -> BenchResult:
    """Time repeated best-match IoU scans over packed masks."""
    kern = kernels.get_backend(backend)
    rng = Generator(Philox(key=seed))
    wordmat = rng.integers(0, 2**63, size=(masks, words), dtype=np.uint64)
    wordmat = np.ascontiguousarray(wordmat)
    pops = kern.popcount_rows(wordmat)
    alive = np.ones(masks, dtype=np.uint8)
    queries = rng.integers(0, 2**63, size=(sweeps, words), dtype=np.uint64)
    qpops = kern.popcount_rows(np.ascontiguousarray(queries))
    best_acc = 0
    t0 = time.perf_counter()
    for s in range(sweeps):
        q = np.ascontiguousarray(queries[s])
        idx, inter, union = kern.iou_scan(wordmat, pops, q, int(qpops[s]),
                                          alive, 0, masks)
        best_acc += idx + inter + union
    elapsed = time.perf_counter() - t0
    return BenchResult("mask-iou-scan", backend, masks * sweeps, elapsed,
                       f"acc={best_acc}")


def run_bench(pairs: int = 10**8, dim: int = 512, bins: int = DEFAULT_BINS,
              masks: int = 4096, sweeps: int = 64,
              backends: list[str] | None = None,
              workers: int | None = None) -> list[BenchResult]:
    if backends is None:
        backends = kernels.available_backends()
    results = []
    for backend in backends:
        results.append(bench_scoring(pairs, dim, bins, backend, workers))
        results.append(bench_iou(masks=masks, sweeps=sweeps, backend=backend))
    return results


def render_bench_text(results: list[BenchResult]) -> str:
    headers = ["Workload", "Backend", "Quantity", "Elapsed (s)", "Rate (/s)",
               "Checksum"]
    rows = [[r.workload, r.backend, f"{r.quantity:,}", f"{r.elapsed_s:.3f}",
             f"{r.per_second:,.0f}", r.checksum] for r in results]
    widths = [max(len(h), *(len(row[k]) for row in rows)) if rows else len(h)
              for k, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("-" * len(lines[0]))
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    checks = {}
    for r in results:
        checks.setdefault(r.workload, set()).add(r.checksum)
    for workload, sums in checks.items():
        if len(sums) > 1:
            lines.append(f"WARNING: {workload} checksums differ across backends")
    return "\n".join(lines)
