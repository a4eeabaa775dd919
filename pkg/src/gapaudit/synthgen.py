"""Synthetic corpus generator: the end-to-end oracle for the audit pipeline.

Subjects are unit-norm cluster centers.  An image is the center scaled down
as hair covers more of the crop (identity damping), plus within-class noise,
plus a hair-ratio-scaled perturbation along one shared "occlusion" direction
(hair looks like hair, so similarly occluded strangers look alike), plus a
per-subject facial-hair direction for images flagged with facial hair (a
beard is consistent for one subject but differs between subjects, so facial
hair adds cross-subject diversity).  Masks are top-anchored filled regions
hitting the target hair ratio exactly (to the pixel), and vendor scores are
emitted so the fusion classifiers recover the planted bald/facial-hair flags
with certainty.  Everything derives from one Philox stream, so regeneration
is bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.random import Generator, Philox

from .corpus import DEFAULT_MASK_HEIGHT, DEFAULT_MASK_WIDTH, write_embedding_blob, write_pgm
from .errors import InvalidConfig

BALD_RATIO_CAP = 0.015  # planted bald images stay safely under the 2% rule


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    mean: float
    std: float


@dataclass(frozen=True)
class CohortConfig:
    race: str
    gender: str
    subjects: int
    images_min: int
    images_max: int
    facial_hair_prevalence: float
    bald_prevalence: float
    hair_ratio_mixture: tuple[MixtureComponent, ...]


@dataclass(frozen=True)
class GeneratorConfig:
    dim: int
    seed: int
    cohorts: tuple[CohortConfig, ...]
    identity_spread: float = 1.0
    noise_spread: float = 0.05
    # piecewise-linear map hair_ratio -> perturbation scale
    occlusion_profile: tuple[tuple[float, float], ...] = ((0.0, 0.0), (1.0, 0.5))
    identity_damping: float = 0.6
    facial_hair_scale: float = 0.5
    subject_ratio_jitter: float = 0.015
    mask_width: int = DEFAULT_MASK_WIDTH
    mask_height: int = DEFAULT_MASK_HEIGHT

    def validate(self) -> None:
        if self.dim < 2:
            raise InvalidConfig("dim must be at least 2")
        if not self.cohorts:
            raise InvalidConfig("at least one cohort is required")
        if self.identity_spread <= 0 or self.noise_spread <= 0:
            raise InvalidConfig("spread parameters must be positive")
        if not (0.0 <= self.identity_damping <= 1.0):
            raise InvalidConfig("identity_damping must be in [0, 1]")
        if self.subject_ratio_jitter < 0:
            raise InvalidConfig("subject_ratio_jitter must be nonnegative")
        if self.mask_width <= 0 or self.mask_height <= 0:
            raise InvalidConfig("mask dimensions must be positive")
        if len(self.occlusion_profile) < 2:
            raise InvalidConfig("occlusion_profile needs at least two points")
        xs = [x for x, _ in self.occlusion_profile]
        if xs != sorted(xs):
            raise InvalidConfig("occlusion_profile breakpoints must be sorted")
        for c in self.cohorts:
            if c.subjects < 1:
                raise InvalidConfig(f"cohort ({c.race}, {c.gender}): subjects < 1")
            if not (1 <= c.images_min <= c.images_max):
                raise InvalidConfig(
                    f"cohort ({c.race}, {c.gender}): bad images range "
                    f"[{c.images_min}, {c.images_max}]")
            for name, p in (("facial_hair_prevalence", c.facial_hair_prevalence),
                            ("bald_prevalence", c.bald_prevalence)):
                if not (0.0 <= p <= 1.0):
                    raise InvalidConfig(f"{name} must be in [0, 1], got {p}")
            if not c.hair_ratio_mixture:
                raise InvalidConfig("hair_ratio_mixture must be nonempty")
            for comp in c.hair_ratio_mixture:
                if comp.weight <= 0 or comp.std <= 0:
                    raise InvalidConfig("mixture weights and stds must be positive")

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "seed": self.seed,
            "identity_spread": self.identity_spread,
            "noise_spread": self.noise_spread,
            "occlusion_profile": [list(p) for p in self.occlusion_profile],
            "identity_damping": self.identity_damping,
            "facial_hair_scale": self.facial_hair_scale,
            "subject_ratio_jitter": self.subject_ratio_jitter,
            "mask_width": self.mask_width,
            "mask_height": self.mask_height,
            "cohorts": [
                {
                    "race": c.race,
                    "gender": c.gender,
                    "subjects": c.subjects,
                    "images_per_subject": [c.images_min, c.images_max],
                    "facial_hair_prevalence": c.facial_hair_prevalence,
                    "bald_prevalence": c.bald_prevalence,
                    "hair_ratio_mixture": [
                        {"weight": m.weight, "mean": m.mean, "std": m.std}
                        for m in c.hair_ratio_mixture
                    ],
                }
                for c in self.cohorts
            ],
        }


def config_from_dict(doc: dict) -> GeneratorConfig:
    try:
        cohorts = tuple(
            CohortConfig(
                race=c["race"],
                gender=c["gender"],
                subjects=int(c["subjects"]),
                images_min=int(c["images_per_subject"][0]),
                images_max=int(c["images_per_subject"][1]),
                facial_hair_prevalence=float(c["facial_hair_prevalence"]),
                bald_prevalence=float(c["bald_prevalence"]),
                hair_ratio_mixture=tuple(
                    MixtureComponent(float(m["weight"]), float(m["mean"]),
                                     float(m["std"]))
                    for m in c["hair_ratio_mixture"]),
            )
            for c in doc["cohorts"])
        cfg = GeneratorConfig(
            dim=int(doc["dim"]),
            seed=int(doc["seed"]),
            cohorts=cohorts,
            identity_spread=float(doc.get("identity_spread", 1.0)),
            noise_spread=float(doc.get("noise_spread", 0.05)),
            occlusion_profile=tuple(
                (float(x), float(y))
                for x, y in doc.get("occlusion_profile", [[0.0, 0.0], [1.0, 0.5]])),
            identity_damping=float(doc.get("identity_damping", 0.6)),
            facial_hair_scale=float(doc.get("facial_hair_scale", 0.5)),
            subject_ratio_jitter=float(doc.get("subject_ratio_jitter", 0.015)),
            mask_width=int(doc.get("mask_width", DEFAULT_MASK_WIDTH)),
            mask_height=int(doc.get("mask_height", DEFAULT_MASK_HEIGHT)),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InvalidConfig(f"bad generator config: {exc}") from exc
    cfg.validate()
    return cfg


def load_config(path) -> GeneratorConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InvalidConfig(f"cannot read config: {exc}") from exc
    except ValueError as exc:
        raise InvalidConfig(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def default_paper_config(seed: int = 20260810) -> GeneratorConfig:
    """Frozen corpus shaped like the published cohort statistics.

    Male hair ratios spike low with a secondary component overlapping the
    female range (so IoU matching finds partners); females peak in the
    0.40-0.50 band; facial hair and baldness are essentially male-only.
    """
    female_mix = (MixtureComponent(0.75, 0.45, 0.07),
                  MixtureComponent(0.25, 0.18, 0.05))
    male_mix = (MixtureComponent(0.60, 0.10, 0.04),
                MixtureComponent(0.40, 0.42, 0.08))
    return GeneratorConfig(
        dim=64,
        seed=seed,
        identity_spread=1.0,
        noise_spread=0.05,
        occlusion_profile=((0.0, 0.0), (1.0, 0.9)),
        identity_damping=0.6,
        facial_hair_scale=0.5,
        cohorts=(
            CohortConfig("Caucasian", "Female", subjects=170, images_min=3,
                         images_max=6, facial_hair_prevalence=0.0,
                         bald_prevalence=0.002, hair_ratio_mixture=female_mix),
            CohortConfig("Caucasian", "Male", subjects=170, images_min=3,
                         images_max=6, facial_hair_prevalence=0.5,
                         bald_prevalence=0.08, hair_ratio_mixture=male_mix),
        ),
    )


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _sample_mixture(rng: Generator, comps: tuple[MixtureComponent, ...]) -> float:
    weights = np.array([c.weight for c in comps])
    weights = weights / weights.sum()
    k = int(rng.choice(len(comps), p=weights))
    comp = comps[k]
    for _ in range(1000):
        v = rng.normal(comp.mean, comp.std)
        if 0.0 <= v <= 1.0:
            return float(v)
    return float(min(max(comp.mean, 0.0), 1.0))


def _top_anchored_mask(ratio: float, width: int, height: int) -> np.ndarray:
    total = width * height
    k = int(round(ratio * total))
    flat = np.zeros(total, dtype=bool)
    flat[:k] = True
    return flat.reshape(height, width)


def _facial_hair_attrs(rng: Generator, has_fh: bool) -> dict:
    levels_low = (0.0, 0.1)
    if has_fh:
        route = rng.random()
        if route < 0.7:          # strong MS level decides
            beard = 0.9 if rng.random() < 0.5 else 0.6
            return {"ms_beard": beard,
                    "ms_mustache": float(rng.choice(levels_low)),
                    "ms_sideburns": float(rng.choice(levels_low)),
                    "rek_facial_hair": True,
                    "rek_confidence": float(rng.uniform(55.0, 100.0))}
        if route < 0.9:          # Rekognition-True clause
            return {"ms_beard": float(rng.choice(levels_low)),
                    "ms_mustache": float(rng.choice(levels_low)),
                    "ms_sideburns": float(rng.choice(levels_low)),
                    "rek_facial_hair": True,
                    "rek_confidence": float(rng.uniform(85.5, 100.0))}
        return {"ms_beard": 0.4,  # borderline clause via Rekognition-False
                "ms_mustache": float(rng.choice(levels_low)),
                "ms_sideburns": float(rng.choice(levels_low)),
                "rek_facial_hair": False,
                "rek_confidence": float(rng.uniform(50.0, 64.5))}
    return {"ms_beard": float(rng.choice(levels_low)),
            "ms_mustache": float(rng.choice(levels_low)),
            "ms_sideburns": float(rng.choice(levels_low)),
            "rek_facial_hair": False,
            "rek_confidence": float(rng.uniform(65.5, 100.0))}


def generate(config: GeneratorConfig, out_dir) -> Path:
    """Write a synthetic corpus under ``out_dir``; returns the manifest path."""
    config.validate()
    out_dir = Path(out_dir)
    mask_dir = out_dir / "masks"
    mask_dir.mkdir(parents=True, exist_ok=True)
    rng = Generator(Philox(key=config.seed))

    occ_x = np.array([x for x, _ in config.occlusion_profile])
    occ_y = np.array([y for _, y in config.occlusion_profile])
    u_occ = _unit(rng.normal(size=config.dim))

    embeddings = []
    images = []
    total_pixels = config.mask_width * config.mask_height
    for cohort in config.cohorts:
        tag = f"{cohort.race[:3]}{cohort.gender[0]}".lower()
        anchor = _unit(rng.normal(size=config.dim))
        for s in range(cohort.subjects):
            subject_id = f"{tag}_s{s:04d}"
            center = _unit(anchor + config.identity_spread * rng.normal(size=config.dim))
            fh_dir = _unit(rng.normal(size=config.dim))  # this subject's beard
            subject_fh = rng.random() < cohort.facial_hair_prevalence
            base_ratio = _sample_mixture(rng, cohort.hair_ratio_mixture)
            n_img = int(rng.integers(cohort.images_min, cohort.images_max + 1))
            for k in range(n_img):
                image_id = f"{subject_id}_i{k:02d}"
                bald = rng.random() < cohort.bald_prevalence
                has_fh = subject_fh
                if bald:
                    ratio = float(rng.uniform(0.0, BALD_RATIO_CAP))
                else:
                    ratio = float(np.clip(
                        base_ratio + config.subject_ratio_jitter * rng.normal(),
                        0.0, 1.0))
                bits = _top_anchored_mask(ratio, config.mask_width,
                                          config.mask_height)
                achieved = bits.sum() / total_pixels
                emb = ((1.0 - config.identity_damping * achieved) * center
                       + config.noise_spread * rng.normal(size=config.dim)
                       + float(np.interp(achieved, occ_x, occ_y)) * u_occ)
                if has_fh:
                    emb = emb + config.facial_hair_scale * fh_dir
                embeddings.append(emb)
                attrs = _facial_hair_attrs(rng, has_fh)
                attrs["ms_bald"] = (float(rng.uniform(0.97, 1.0)) if bald
                                    else float(rng.uniform(0.0, 0.9)))
                mask_ref = f"{image_id}.pgm"
                write_pgm(mask_dir / mask_ref, bits)
                images.append({
                    "image_id": image_id,
                    "subject_id": subject_id,
                    "race": cohort.race,
                    "gender": cohort.gender,
                    "embedding_index": len(embeddings) - 1,
                    "mask_ref": mask_ref,
                    "attrs": attrs,
                    # ground truth for recovery checks; ignored by the loader
                    "planted": {"bald": bool(bald), "facial_hair": bool(has_fh)},
                })

    blob = np.asarray(embeddings, dtype=np.float32)
    write_embedding_blob(out_dir / "emb.bin", blob)
    manifest = {
        "dim": config.dim,
        "embedding_blob": "emb.bin",
        "mask_dir": "masks",
        "mask_width": config.mask_width,
        "mask_height": config.mask_height,
        "generator_config": config.to_dict(),
        "images": images,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1))
    return manifest_path
