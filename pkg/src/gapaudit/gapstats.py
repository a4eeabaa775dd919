"""d-prime discriminability between cohort score distributions.

d'(a, b) = |mean_a - mean_b| / sqrt((var_a + var_b) / 2) with sample
variances.  The before/after report mirrors the female-vs-male layout of the
balancing experiment: one d-prime per (impostor, genuine) metric, plus the
signed percent change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateVariance, InsufficientSamples
from .scoring import PairKind, ScoreDistribution


def dprime(a: ScoreDistribution, b: ScoreDistribution) -> float:
    """Discriminability index between two score distributions."""
    if a.n < 2 or b.n < 2:
        raise InsufficientSamples(
            f"d-prime needs at least 2 samples per side (got {a.n} and {b.n})")
    pooled = (a.variance + b.variance) / 2.0
    if pooled == 0.0:
        raise DegenerateVariance("both distributions have zero variance")
    return abs(a.mean - b.mean) / math.sqrt(pooled)


def delta_pct(before: float, after: float) -> float | None:
    """Signed percent change; None when the baseline is zero."""
    if before == 0.0:
        return None
    return 100.0 * (after - before) / before


@dataclass
class GapReport:
    """Female/male d-prime gaps before and after balancing."""

    dataset: str
    matcher: str
    race: str
    impostor_dprime_before: float
    impostor_dprime_after: float
    genuine_dprime_before: float
    genuine_dprime_after: float
    pair_counts: dict[str, int]

    @property
    def impostor_delta_pct(self) -> float | None:
        return delta_pct(self.impostor_dprime_before, self.impostor_dprime_after)

    @property
    def genuine_delta_pct(self) -> float | None:
        return delta_pct(self.genuine_dprime_before, self.genuine_dprime_after)

    def to_dict(self) -> dict:
        return {
            "context": {"dataset": self.dataset, "matcher": self.matcher,
                        "race": self.race},
            "impostor": {
                "dprime_before": self.impostor_dprime_before,
                "dprime_after": self.impostor_dprime_after,
                "delta_pct": self.impostor_delta_pct,
            },
            "genuine": {
                "dprime_before": self.genuine_dprime_before,
                "dprime_after": self.genuine_dprime_after,
                "delta_pct": self.genuine_delta_pct,
            },
            "pair_counts": dict(self.pair_counts),
        }


def gap_report(before: dict[tuple[str, PairKind], ScoreDistribution],
               after: dict[tuple[str, PairKind], ScoreDistribution],
               dataset: str = "", matcher: str = "", race: str = "") -> GapReport:
    """Build a GapReport from eight distributions.

    ``before`` and ``after`` each map (gender, kind) to a distribution for
    gender in {"Female", "Male"} and both pair kinds.
    """
    def gender_gap(dists, kind):
        return dprime(dists[("Female", kind)], dists[("Male", kind)])

    counts = {}
    for stage, dists in (("before", before), ("after", after)):
        for (gender, kind), d in dists.items():
            counts[f"{stage}_{gender}_{kind.value}"] = d.n
    return GapReport(
        dataset=dataset, matcher=matcher, race=race,
        impostor_dprime_before=gender_gap(before, PairKind.IMPOSTOR),
        impostor_dprime_after=gender_gap(after, PairKind.IMPOSTOR),
        genuine_dprime_before=gender_gap(before, PairKind.GENUINE),
        genuine_dprime_after=gender_gap(after, PairKind.GENUINE),
        pair_counts=counts,
    )


def render_gap_text(reports: list[GapReport]) -> str:
    """Aligned-text table: d-prime before/after and whole-percent delta."""
    headers = ["Dataset", "Race", "Imp d' before", "Imp d' after", "Imp delta",
               "Gen d' before", "Gen d' after", "Gen delta"]

    def pct(v):
        return "n/a" if v is None else f"{round(v):+d}%"

    rows = [[r.dataset or "-", r.race or "-",
             f"{r.impostor_dprime_before:.3f}", f"{r.impostor_dprime_after:.3f}",
             pct(r.impostor_delta_pct),
             f"{r.genuine_dprime_before:.3f}", f"{r.genuine_dprime_after:.3f}",
             pct(r.genuine_delta_pct)] for r in reports]
    widths = [max(len(h), *(len(row[k]) for row in rows)) if rows else len(h)
              for k, h in enumerate(headers)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
    lines.append("-" * len(lines[0]))
    for row in rows:
        lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)
