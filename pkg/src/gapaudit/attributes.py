"""Attribute fusion classifiers, hair-ratio statistics, census and audits.

The bald rule is a conjunction: hair ratio strictly below 2% of the crop AND
a baldness confidence of at least 0.97.  The facial-hair rule is a
three-clause disjunction over the two vendors' scores; see
:func:`classify_facial_hair`.  The fused per-vendor confidence is the max of
the beard/mustache/sideburn levels, with absent scores treated as 0.
"""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass
from pathlib import Path

from .corpus import AttributeScores, Corpus, HairMask
from .errors import GapAuditWarning, InvalidThresholds, MissingFile, SchemaViolation, UnknownImageId


class Provenance(str, enum.Enum):
    FUSION_RULE = "FusionRule"
    MISSING_INPUT = "MissingInput"


class Tail(str, enum.Enum):
    LOWER = "LowerTail"
    MIDDLE = "Middle"
    UPPER = "UpperTail"


@dataclass(frozen=True)
class FusionThresholds:
    """Rule constants; defaults are the published operating points."""

    bald_hair_ratio: float = 0.02       # strict <
    bald_confidence: float = 0.97       # inclusive >=
    ms_strong: float = 0.6              # inclusive >=
    ms_borderline: float = 0.4          # exact level
    rek_true_conf: float = 85.0         # strict >
    rek_borderline_true_conf: float = 55.0   # strict >
    rek_borderline_false_conf: float = 65.0  # strict <

    def to_dict(self) -> dict:
        return {
            "bald_hair_ratio": self.bald_hair_ratio,
            "bald_confidence": self.bald_confidence,
            "ms_strong": self.ms_strong,
            "ms_borderline": self.ms_borderline,
            "rek_true_conf": self.rek_true_conf,
            "rek_borderline_true_conf": self.rek_borderline_true_conf,
            "rek_borderline_false_conf": self.rek_borderline_false_conf,
        }


DEFAULT_THRESHOLDS = FusionThresholds()


@dataclass(frozen=True)
class AttributeLabels:
    is_bald: bool
    has_facial_hair: bool
    hair_ratio: float | None
    bald_by: Provenance
    facial_hair_by: Provenance
    hair_ratio_by: Provenance


def hair_ratio(mask: HairMask) -> float:
    """Fraction of mask pixels labeled hair, exact count over total."""
    return mask.hair_pixels / mask.total_pixels


def ms_confidence(attrs: AttributeScores) -> float:
    """Fused per-image Microsoft confidence: max level, absent -> 0."""
    return max(attrs.ms_beard or 0.0, attrs.ms_mustache or 0.0,
               attrs.ms_sideburns or 0.0)


def classify_bald(ratio: float | None, ms_bald: float | None,
                  thresholds: FusionThresholds = DEFAULT_THRESHOLDS) -> bool:
    if ratio is None or ms_bald is None:
        return False
    return ratio < thresholds.bald_hair_ratio and ms_bald >= thresholds.bald_confidence


def classify_facial_hair(attrs: AttributeScores,
                         thresholds: FusionThresholds = DEFAULT_THRESHOLDS) -> bool:
    """Three-clause fusion of Microsoft levels and the Rekognition verdict.

    (a) fused MS confidence >= 0.6;
    (b) otherwise, a Rekognition True with confidence > 85;
    (c) for the 0.4 MS level, a Rekognition True with confidence > 55 or a
        Rekognition False with confidence < 65.
    Absent Rekognition fields disable (b) and (c).
    """
    m = ms_confidence(attrs)
    if m >= thresholds.ms_strong:
        return True
    rek = attrs.rek_facial_hair
    conf = attrs.rek_confidence
    if rek is None:
        return False
    if rek and conf > thresholds.rek_true_conf:
        return True
    if m == thresholds.ms_borderline:
        if rek and conf > thresholds.rek_borderline_true_conf:
            return True
        if not rek and conf < thresholds.rek_borderline_false_conf:
            return True
    return False


def compute_labels(corpus: Corpus,
                   thresholds: FusionThresholds = DEFAULT_THRESHOLDS,
                   ) -> dict[str, AttributeLabels]:
    """Fuse per-image labels for the whole corpus."""
    labels: dict[str, AttributeLabels] = {}
    for rec in corpus.records:
        mask = corpus.mask(rec.image_id)
        if mask is None:
            ratio, ratio_by = None, Provenance.MISSING_INPUT
        else:
            ratio, ratio_by = hair_ratio(mask), Provenance.FUSION_RULE
        if ratio is None or rec.attrs.ms_bald is None:
            bald, bald_by = False, Provenance.MISSING_INPUT
        else:
            bald = classify_bald(ratio, rec.attrs.ms_bald, thresholds)
            bald_by = Provenance.FUSION_RULE
        m = ms_confidence(rec.attrs)
        fh = classify_facial_hair(rec.attrs, thresholds)
        if m < thresholds.ms_strong and rec.attrs.rek_facial_hair is None:
            fh_by = Provenance.MISSING_INPUT
        else:
            fh_by = Provenance.FUSION_RULE
        labels[rec.image_id] = AttributeLabels(
            is_bald=bald, has_facial_hair=fh, hair_ratio=ratio,
            bald_by=bald_by, facial_hair_by=fh_by, hair_ratio_by=ratio_by)
    return labels


@dataclass
class CohortCensus:
    race: str
    gender: str
    n: int
    bald: int
    facial_hair: int

    @property
    def not_bald(self) -> int:
        return self.n - self.bald

    @property
    def no_facial_hair(self) -> int:
        return self.n - self.facial_hair

    def pct(self, count: int) -> float | None:
        if self.n == 0:
            return None
        return round(100.0 * count / self.n, 1)

    def to_dict(self) -> dict:
        return {
            "race": self.race,
            "gender": self.gender,
            "images": self.n,
            "bald": {"count": self.bald, "pct": self.pct(self.bald)},
            "not_bald": {"count": self.not_bald, "pct": self.pct(self.not_bald)},
            "facial_hair": {"count": self.facial_hair,
                            "pct": self.pct(self.facial_hair)},
            "no_facial_hair": {"count": self.no_facial_hair,
                               "pct": self.pct(self.no_facial_hair)},
        }


def census(corpus: Corpus, labels: dict[str, AttributeLabels],
           cohorts: list[tuple[str, str]] | None = None) -> list[CohortCensus]:
    """Per-cohort bald / facial-hair counts with display percentages."""
    groups = corpus.cohorts()
    if cohorts is None:
        cohorts = list(groups)
    rows = []
    for race, gender in cohorts:
        recs = groups.get((race, gender), [])
        if not recs:
            warnings.warn(f"cohort ({race}, {gender}) is empty", GapAuditWarning,
                          stacklevel=2)
        row = CohortCensus(
            race=race, gender=gender, n=len(recs),
            bald=sum(labels[r.image_id].is_bald for r in recs),
            facial_hair=sum(labels[r.image_id].has_facial_hair for r in recs))
        rows.append(row)
    return rows


def render_census_text(rows: list[CohortCensus]) -> str:
    def fmt(count, pct):
        return f"{count:,}" if pct is None else f"{count:,}({pct}%)"

    headers = [f"{r.race} {r.gender}s" for r in rows]
    blocks = [
        ("Facial Hair / No Facial Hair Classification",
         [("Facial Hair", [fmt(r.facial_hair, r.pct(r.facial_hair)) for r in rows]),
          ("No Facial Hair", [fmt(r.no_facial_hair, r.pct(r.no_facial_hair)) for r in rows])]),
        ("Bald / Not-bald Classification",
         [("Bald", [fmt(r.bald, r.pct(r.bald)) for r in rows]),
          ("Not Bald", [fmt(r.not_bald, r.pct(r.not_bald)) for r in rows])]),
    ]
    label_w = max(len("Prediction"),
                  max((len(name) for _, rws in blocks for name, _ in rws), default=0))
    col_w = [max([len(h)] + [len(rws[k][1][j]) for _, rws in blocks for k in range(len(rws))])
             for j, h in enumerate(headers)]
    lines = []
    for title, rws in blocks:
        lines.append(title)
        head = "Prediction".ljust(label_w) + "  " + "  ".join(
            h.rjust(w) for h, w in zip(headers, col_w))
        lines.append(head)
        lines.append("-" * max(len(head), len(title)))
        for name, cells in rws:
            lines.append(name.ljust(label_w) + "  " + "  ".join(
                c.rjust(w) for c, w in zip(cells, col_w)))
        lines.append("")
    return "\n".join(lines)


def tail_partition(labels: dict[str, AttributeLabels], lower: float = 0.25,
                   upper: float = 0.50) -> dict[str, Tail]:
    """Partition images by hair ratio into lower tail, middle, upper tail.

    Strict inequalities on both bounds; images without a hair ratio are
    omitted.
    """
    if not (0.0 <= lower <= upper <= 1.0):
        raise InvalidThresholds(f"need 0 <= lower <= upper <= 1, got "
                                f"lower={lower}, upper={upper}")
    out: dict[str, Tail] = {}
    for image_id, lab in labels.items():
        if lab.hair_ratio is None:
            continue
        if lab.hair_ratio < lower:
            out[image_id] = Tail.LOWER
        elif lab.hair_ratio > upper:
            out[image_id] = Tail.UPPER
        else:
            out[image_id] = Tail.MIDDLE
    return out


@dataclass
class ConfusionCell:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def confusion_report(predicted: dict[str, AttributeLabels],
                     truth: dict[str, bool],
                     corpus: Corpus) -> dict[str, ConfusionCell]:
    """Facial-hair confusion counts per cohort plus an 'overall' cell.

    Positive class is "has facial hair".  ``truth`` may cover any subset of
    the corpus; ids outside it raise :class:`UnknownImageId`.
    """
    cells: dict[str, ConfusionCell] = {"overall": ConfusionCell()}
    for image_id, actual in truth.items():
        if image_id not in predicted or image_id not in corpus.by_id:
            raise UnknownImageId(f"truth references unknown image_id {image_id!r}")
        rec = corpus.by_id[image_id]
        key = f"{rec.race}:{rec.gender}"
        cell = cells.setdefault(key, ConfusionCell())
        pred = predicted[image_id].has_facial_hair
        for c in (cell, cells["overall"]):
            if actual and pred:
                c.tp += 1
            elif actual and not pred:
                c.fn += 1
            elif not actual and pred:
                c.fp += 1
            else:
                c.tn += 1
    return cells


def read_truth_csv(path) -> dict[str, bool]:
    """Ground-truth file: CSV with columns image_id, has_facial_hair in {0,1}."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"truth file not found: {path}")
    out: dict[str, bool] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        if reader.fieldnames is None or \
                {"image_id", "has_facial_hair"} - set(reader.fieldnames):
            raise SchemaViolation(
                "truth CSV needs columns image_id, has_facial_hair")
        for i, row in enumerate(reader):
            v = row["has_facial_hair"].strip()
            if v not in ("0", "1"):
                raise SchemaViolation("has_facial_hair must be 0 or 1",
                                      field="has_facial_hair", record_index=i)
            out[row["image_id"]] = v == "1"
    return out
