import json
from pathlib import Path

import numpy as np
import pytest

from gapaudit.corpus import (
    Corpus,
    EmbeddingMatrix,
    ImageRecord,
    write_embedding_blob,
    write_pgm,
)


def memory_corpus(records, emb):
    """In-memory Corpus (no disk); records are ImageRecord instances."""
    emb = np.ascontiguousarray(emb, dtype=np.float32)
    matrix = EmbeddingMatrix(count=emb.shape[0], dim=emb.shape[1], data=emb)
    return Corpus(records, matrix, root=Path("."), mask_dir=Path("."),
                  mask_width=112, mask_height=112)


def make_records(subj_of, race="Caucasian", gender="Female", prefix="img"):
    return [ImageRecord(image_id=f"{prefix}{k:04d}", subject_id=f"s{s:03d}",
                        race=race, gender=gender, embedding_index=k)
            for k, s in enumerate(subj_of)]


def build_corpus_dir(root, images, embeddings, masks=None, dim=None,
                     mask_size=None, extra=None):
    """Write a corpus directory and return the manifest path.

    ``images`` is a list of record dicts (taken verbatim), ``embeddings`` an
    array-like, ``masks`` a mapping mask_ref -> bool/uint8 array.
    """
    root.mkdir(parents=True, exist_ok=True)
    emb = np.asarray(embeddings, dtype=np.float32)
    write_embedding_blob(root / "emb.bin", emb)
    mask_dir = root / "masks"
    if masks:
        mask_dir.mkdir(exist_ok=True)
        for ref, arr in masks.items():
            write_pgm(mask_dir / ref, np.asarray(arr))
    doc = {
        "dim": dim if dim is not None else emb.shape[1],
        "embedding_blob": "emb.bin",
        "mask_dir": "masks",
        "images": images,
    }
    if mask_size is not None:
        doc["mask_width"], doc["mask_height"] = mask_size
    if extra:
        doc.update(extra)
    path = root / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


def record(image_id, subject_id, index, race="Caucasian", gender="Female",
           mask_ref=None, attrs=None):
    rec = {"image_id": image_id, "subject_id": subject_id, "race": race,
           "gender": gender, "embedding_index": index}
    if mask_ref is not None:
        rec["mask_ref"] = mask_ref
    if attrs is not None:
        rec["attrs"] = attrs
    return rec


def random_corpus_dicts(rng, n_images=50, n_subjects=9, dim=8,
                        race="Caucasian", gender="Female"):
    """Random records + embeddings (no masks) for pair-counting tests."""
    subj_of = rng.integers(0, n_subjects, size=n_images)
    images = [record(f"img{k:03d}", f"s{subj_of[k]:02d}", k, race=race,
                     gender=gender) for k in range(n_images)]
    emb = rng.standard_normal((n_images, dim)).astype(np.float32)
    return images, emb


@pytest.fixture
def tiny_corpus(tmp_path):
    """Three records, dim 4, two subjects, 4x4 masks."""
    masks = {
        "a.pgm": np.array([[1, 1, 0, 0]] * 4, dtype=np.uint8) * 255,
        "b.pgm": np.zeros((4, 4), dtype=np.uint8),
        "c.pgm": np.full((4, 4), 255, dtype=np.uint8),
    }
    images = [
        record("a", "s1", 0, mask_ref="a.pgm",
               attrs={"ms_beard": 0.9, "ms_mustache": 0.0, "ms_sideburns": 0.1,
                      "ms_bald": 0.5}),
        record("b", "s1", 1, mask_ref="b.pgm",
               attrs={"rek_facial_hair": True, "rek_confidence": 92.0}),
        record("c", "s2", 2, gender="Male", mask_ref="c.pgm"),
    ]
    emb = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [1, 1, 1, 1]], dtype=np.float32)
    return build_corpus_dir(tmp_path / "tiny", images, emb, masks=masks,
                            mask_size=(4, 4))
