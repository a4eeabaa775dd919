"""Hairstyle-balanced subset construction.

Pipeline: drop bald images, drop facial-hair images, then greedily pair each
female image (in corpus order) with the unmatched same-race male image whose
hair mask has the highest IoU, committing the pair when that IoU reaches the
threshold.  IoU runs on packed 64-bit words via popcounts; ties on IoU break
toward the lexicographically smallest male image id.
"""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .attributes import AttributeLabels
from .corpus import Corpus, HairMask
from .errors import DimensionMismatch, GapAuditWarning, MissingFile, SchemaViolation


class ExclusionReason(str, enum.Enum):
    BALD = "Bald"
    FACIAL_HAIR = "FacialHair"
    NO_MATCH = "NoMatchAboveThreshold"
    MISSING_MASK = "MissingMask"


@dataclass
class BalancedSubset:
    pairs: list[tuple[str, str, float]]  # (female id, male id, iou)
    excluded: dict[str, ExclusionReason]
    threshold: float
    unmatched_males: list[str] = field(default_factory=list)

    @property
    def image_ids(self) -> set[str]:
        out = set()
        for f, m, _ in self.pairs:
            out.add(f)
            out.add(m)
        return out


def pack_mask(mask: HairMask) -> np.ndarray:
    """Pack mask bits into little-endian uint64 words (zero padded)."""
    flat = mask.bits.ravel()
    pad = (-flat.size) % 64
    if pad:
        flat = np.concatenate([flat, np.zeros(pad, dtype=bool)])
    return np.packbits(flat, bitorder="little").view(np.uint64)


def mask_iou(a: HairMask, b: HairMask) -> float:
    """Intersection-over-union of hair pixels; 1.0 when both masks are empty."""
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(
            f"mask rasters differ: {a.width}x{a.height} vs {b.width}x{b.height}")
    inter = int((a.bits & b.bits).sum())
    union = int((a.bits | b.bits).sum())
    if union == 0:
        return 1.0
    return inter / union


def balance(corpus: Corpus, labels: dict[str, AttributeLabels],
            threshold: float = 0.8, races: list[str] | None = None,
            backend=None) -> BalancedSubset:
    """Build the hairstyle-balanced subset, race by race."""
    kern = kernels.get_backend(backend) if isinstance(backend, (str, type(None))) else backend
    if races is None:
        races = corpus.races()
    pairs: list[tuple[str, str, float]] = []
    excluded: dict[str, ExclusionReason] = {}
    unmatched: list[str] = []
    for race in races:
        _balance_race(corpus, labels, race, threshold, kern, pairs, excluded,
                      unmatched)
    if not pairs:
        warnings.warn("balanced subset is empty", GapAuditWarning, stacklevel=2)
    return BalancedSubset(pairs=pairs, excluded=excluded, threshold=threshold,
                          unmatched_males=unmatched)


def _admit(corpus, labels, records, excluded):
    out = []
    for rec in records:
        lab = labels[rec.image_id]
        if lab.is_bald:
            excluded[rec.image_id] = ExclusionReason.BALD
        elif lab.has_facial_hair:
            excluded[rec.image_id] = ExclusionReason.FACIAL_HAIR
        elif rec.mask_ref is None:
            excluded[rec.image_id] = ExclusionReason.MISSING_MASK
        else:
            out.append(rec)
    return out


def _balance_race(corpus, labels, race, threshold, kern, pairs, excluded,
                  unmatched):
    groups = corpus.cohorts()
    females = _admit(corpus, labels, groups.get((race, "Female"), []), excluded)
    males = _admit(corpus, labels, groups.get((race, "Male"), []), excluded)
    males = sorted(males, key=lambda r: r.image_id)  # tie-break order
    if not males:
        for rec in females:
            excluded[rec.image_id] = ExclusionReason.NO_MATCH
        return

    words = np.stack([pack_mask(corpus.mask(r.image_id)) for r in males])
    words = np.ascontiguousarray(words, dtype=np.uint64)
    pops = kern.popcount_rows(words)
    alive = np.ones(len(males), dtype=np.uint8)

    for rec in females:
        fmask = corpus.mask(rec.image_id)
        fwords = pack_mask(fmask)
        fpop = int(fmask.hair_pixels)
        idx, inter, union = kern.iou_scan(words, pops, fwords, fpop, alive,
                                          0, len(males))
        if idx < 0:
            excluded[rec.image_id] = ExclusionReason.NO_MATCH
            continue
        iou = 1.0 if union == 0 else inter / union
        if iou >= threshold:
            pairs.append((rec.image_id, males[idx].image_id, iou))
            alive[idx] = 0
        else:
            excluded[rec.image_id] = ExclusionReason.NO_MATCH
    unmatched.extend(males[k].image_id for k in np.flatnonzero(alive))


def emit_subset(subset: BalancedSubset, path, audit_path=None,
                header_lines=()) -> None:
    """Write the matched pairs (and optionally the exclusion audit) as CSV."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"# threshold: {subset.threshold!r}\n")
        writer = csv.writer(fh)
        writer.writerow(["female_image_id", "male_image_id", "iou"])
        for f, m, iou in subset.pairs:
            writer.writerow([f, m, repr(iou)])
    if audit_path is not None:
        with open(audit_path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["image_id", "reason"])
            for image_id, reason in subset.excluded.items():
                writer.writerow([image_id, reason.value])
            for image_id in subset.unmatched_males:
                writer.writerow([image_id, "UnmatchedMale"])


def load_subset(path, audit_path=None) -> BalancedSubset:
    """Read back an emitted subset (pairs mandatory, audit optional)."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"subset file not found: {path}")
    threshold = 0.8
    rows = []
    with open(path, newline="") as fh:
        data_lines = []
        for line in fh:
            if line.startswith("#"):
                if line[1:].strip().startswith("threshold:"):
                    threshold = float(line.split(":", 1)[1])
                continue
            data_lines.append(line)
        reader = csv.reader(data_lines)
        header = next(reader, None)
        if header != ["female_image_id", "male_image_id", "iou"]:
            raise SchemaViolation(f"{path}: unexpected subset header {header}")
        for rec in reader:
            if len(rec) != 3:
                raise SchemaViolation(f"{path}: malformed subset row {rec}")
            rows.append((rec[0], rec[1], float(rec[2])))
    excluded: dict[str, ExclusionReason] = {}
    unmatched: list[str] = []
    if audit_path is not None:
        with open(audit_path, newline="") as fh:
            reader = csv.DictReader(r for r in fh if not r.startswith("#"))
            for rec in reader:
                if rec["reason"] == "UnmatchedMale":
                    unmatched.append(rec["image_id"])
                else:
                    excluded[rec["image_id"]] = ExclusionReason(rec["reason"])
    return BalancedSubset(pairs=rows, excluded=excluded, threshold=threshold,
                          unmatched_males=unmatched)


def read_subset_ids(path) -> set[str]:
    """Image ids named by a subset file (pairs CSV or one-column id list)."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"subset file not found: {path}")
    with open(path, newline="") as fh:
        lines = [l for l in fh if not l.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        return set()
    ids: set[str] = set()
    if header[:2] == ["female_image_id", "male_image_id"]:
        for rec in reader:
            ids.add(rec[0])
            ids.add(rec[1])
    elif header == ["image_id"]:
        for rec in reader:
            ids.add(rec[0])
    else:
        raise SchemaViolation(f"{path}: unrecognized subset header {header}")
    return ids
