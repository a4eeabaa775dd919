"""Corpus data model and on-disk formats.

A corpus is a JSON manifest plus an embedding blob and a directory of hair
masks.  Everything is validated at load; embeddings round-trip bit-exact.

Formats:

* Manifest: JSON ``{"dim", "embedding_blob", "mask_dir", "mask_width",
  "mask_height", "images": [...]}``.
* Embedding blob: magic ``GAPE``, u32 LE version (=1), u32 LE count, u32 LE
  dim, then count*dim float32 LE values, row-major.
* Masks: 8-bit binary PGM (P5).  Nonzero means hair, unless the corpus was
  loaded with ``hair_label=N`` in which case pixels equal to N mean hair.
"""

from __future__ import annotations

import json
import math
import struct
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    EmbeddingShapeMismatch,
    MissingField,
    MissingFile,
    NonFiniteEmbedding,
    SchemaViolation,
    UnparsablePayload,
    ZeroNormEmbedding,
)

GENDERS = ("Female", "Male")
RACE_CAUCASIAN = "Caucasian"
RACE_AFRICAN_AMERICAN = "AfricanAmerican"

MS_LEVELS = (0.0, 0.1, 0.4, 0.6, 0.9)

BLOB_MAGIC = b"GAPE"
BLOB_VERSION = 1

DEFAULT_MASK_WIDTH = 112
DEFAULT_MASK_HEIGHT = 112


@dataclass(frozen=True)
class AttributeScores:
    """Raw vendor scores; any field may be absent (None)."""

    ms_beard: float | None = None
    ms_mustache: float | None = None
    ms_sideburns: float | None = None
    ms_bald: float | None = None
    rek_facial_hair: bool | None = None
    rek_confidence: float | None = None

    def validate(self, record_index: int | None = None) -> None:
        for name in ("ms_beard", "ms_mustache", "ms_sideburns"):
            v = getattr(self, name)
            if v is not None and v not in MS_LEVELS:
                raise SchemaViolation(
                    f"{name}={v!r} is not an admissible level {MS_LEVELS}",
                    field=name, record_index=record_index)
        if self.ms_bald is not None and not (0.0 <= self.ms_bald <= 1.0):
            raise SchemaViolation(f"ms_bald={self.ms_bald!r} outside [0, 1]",
                                  field="ms_bald", record_index=record_index)
        if (self.rek_confidence is None) != (self.rek_facial_hair is None):
            raise SchemaViolation(
                "rek_confidence must be present iff rek_facial_hair is",
                field="rek_confidence", record_index=record_index)
        if self.rek_confidence is not None and not (50.0 <= self.rek_confidence <= 100.0):
            raise SchemaViolation(
                f"rek_confidence={self.rek_confidence!r} outside [50, 100]",
                field="rek_confidence", record_index=record_index)

    def missing(self) -> tuple[str, ...]:
        return tuple(name for name in
                     ("ms_beard", "ms_mustache", "ms_sideburns", "ms_bald",
                      "rek_facial_hair")
                     if getattr(self, name) is None)

    def merged(self, other: "AttributeScores") -> "AttributeScores":
        """Overlay non-None fields of ``other`` onto self."""
        updates = {k: v for k, v in other.to_dict().items() if v is not None}
        return replace(self, **updates)

    def to_dict(self) -> dict:
        return {
            "ms_beard": self.ms_beard,
            "ms_mustache": self.ms_mustache,
            "ms_sideburns": self.ms_sideburns,
            "ms_bald": self.ms_bald,
            "rek_facial_hair": self.rek_facial_hair,
            "rek_confidence": self.rek_confidence,
        }


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    subject_id: str
    race: str
    gender: str
    embedding_index: int
    mask_ref: str | None = None
    attrs: AttributeScores = field(default_factory=AttributeScores)

    @property
    def cohort(self) -> tuple[str, str]:
        return (self.race, self.gender)


@dataclass
class EmbeddingMatrix:
    count: int
    dim: int
    data: np.ndarray  # float32, shape (count, dim), C order


@dataclass
class HairMask:
    width: int
    height: int
    bits: np.ndarray  # bool, shape (height, width)

    @property
    def hair_pixels(self) -> int:
        return int(self.bits.sum())

    @property
    def total_pixels(self) -> int:
        return self.width * self.height


def write_pgm(path, values: np.ndarray) -> None:
    """Write an 8-bit binary PGM.  Boolean input maps True to 255."""
    arr = np.asarray(values)
    if arr.dtype == bool:
        arr = np.where(arr, np.uint8(255), np.uint8(0))
    arr = arr.astype(np.uint8, copy=False)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary PGM into a uint8 array of shape (h, w)."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"mask file not found: {path}")
    data = path.read_bytes()
    if data[:2] != b"P5":
        raise SchemaViolation(f"{path}: not a binary PGM (bad magic)")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise SchemaViolation(f"{path}: truncated PGM header")
        c = data[pos:pos + 1]
        if c == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif c.isspace():
            pos += 1
        elif c.isdigit():
            end = pos
            while end < len(data) and data[end:end + 1].isdigit():
                end += 1
            fields.append(int(data[pos:end]))
            pos = end
        else:
            raise SchemaViolation(f"{path}: unexpected byte {c!r} in PGM header")
    pos += 1  # single whitespace byte separates maxval from raster
    w, h, maxval = fields
    if w <= 0 or h <= 0:
        raise SchemaViolation(f"{path}: non-positive PGM dimensions {w}x{h}")
    if not 0 < maxval <= 255:
        raise SchemaViolation(f"{path}: unsupported PGM maxval {maxval}")
    raster = data[pos:]
    if len(raster) != w * h:
        raise SchemaViolation(
            f"{path}: PGM raster has {len(raster)} bytes, expected {w * h}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w)


def write_embedding_blob(path, data: np.ndarray) -> None:
    arr = np.ascontiguousarray(data, dtype="<f4")
    count, dim = arr.shape
    with open(path, "wb") as fh:
        fh.write(BLOB_MAGIC)
        fh.write(struct.pack("<III", BLOB_VERSION, count, dim))
        fh.write(arr.tobytes())


def read_embedding_blob(path) -> EmbeddingMatrix:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"embedding blob not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 16:
        raise EmbeddingShapeMismatch(f"{path}: blob shorter than header")
    if raw[:4] != BLOB_MAGIC:
        raise SchemaViolation(f"{path}: bad blob magic {raw[:4]!r}")
    version, count, dim = struct.unpack("<III", raw[4:16])
    if version != BLOB_VERSION:
        raise SchemaViolation(f"{path}: unsupported blob version {version}")
    if dim == 0:
        raise EmbeddingShapeMismatch(f"{path}: blob dim is zero")
    expected = 16 + count * dim * 4
    if len(raw) != expected:
        raise EmbeddingShapeMismatch(
            f"{path}: blob holds {len(raw)} bytes, expected {expected} "
            f"for count={count} dim={dim}")
    data = np.frombuffer(raw[16:], dtype="<f4").reshape(count, dim)
    return EmbeddingMatrix(count=count, dim=dim, data=np.ascontiguousarray(data))


def _require(obj: dict, key: str, record_index=None):
    if key not in obj:
        raise SchemaViolation(f"missing key {key!r}", field=key,
                              record_index=record_index)
    return obj[key]


def _parse_attrs(obj, record_index=None) -> AttributeScores:
    if obj is None:
        return AttributeScores()
    if not isinstance(obj, dict):
        raise SchemaViolation("attrs must be an object", field="attrs",
                              record_index=record_index)

    def num(key):
        v = obj.get(key)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise SchemaViolation(f"{key} must be a finite number", field=key,
                                  record_index=record_index)
        return float(v)

    rek = obj.get("rek_facial_hair")
    if rek is not None and not isinstance(rek, bool):
        raise SchemaViolation("rek_facial_hair must be a boolean",
                              field="rek_facial_hair", record_index=record_index)
    scores = AttributeScores(
        ms_beard=num("ms_beard"),
        ms_mustache=num("ms_mustache"),
        ms_sideburns=num("ms_sideburns"),
        ms_bald=num("ms_bald"),
        rek_facial_hair=rek,
        rek_confidence=num("rek_confidence"),
    )
    scores.validate(record_index)
    return scores


def _parse_record(obj, index: int) -> ImageRecord:
    if not isinstance(obj, dict):
        raise SchemaViolation("image record must be an object", record_index=index)
    image_id = _require(obj, "image_id", index)
    subject_id = _require(obj, "subject_id", index)
    race = _require(obj, "race", index)
    gender = _require(obj, "gender", index)
    emb_idx = _require(obj, "embedding_index", index)
    for name, v in (("image_id", image_id), ("subject_id", subject_id),
                    ("race", race)):
        if not isinstance(v, str) or not v:
            raise SchemaViolation(f"{name} must be a nonempty string",
                                  field=name, record_index=index)
    if gender not in GENDERS:
        raise SchemaViolation(f"gender={gender!r} not in {GENDERS}",
                              field="gender", record_index=index)
    if isinstance(emb_idx, bool) or not isinstance(emb_idx, int) or emb_idx < 0:
        raise SchemaViolation("embedding_index must be a nonnegative integer",
                              field="embedding_index", record_index=index)
    mask_ref = obj.get("mask_ref")
    if mask_ref is not None and (not isinstance(mask_ref, str) or not mask_ref):
        raise SchemaViolation("mask_ref must be a nonempty string or null",
                              field="mask_ref", record_index=index)
    return ImageRecord(
        image_id=image_id,
        subject_id=subject_id,
        race=race,
        gender=gender,
        embedding_index=emb_idx,
        mask_ref=mask_ref,
        attrs=_parse_attrs(obj.get("attrs"), index),
    )


class Corpus:
    """Validated, immutable view of a corpus.

    Masks load lazily through a bounded LRU cache so corpora with 1e5 masks
    do not pin memory; concurrent readers are safe.
    """

    def __init__(self, records, embeddings: EmbeddingMatrix, root: Path,
                 mask_dir: Path, mask_width: int, mask_height: int,
                 hair_label: int | None = None, mask_cache_size: int = 4096):
        self.records: list[ImageRecord] = list(records)
        self.embeddings = embeddings
        self.root = Path(root)
        self.mask_dir = Path(mask_dir)
        self.mask_width = mask_width
        self.mask_height = mask_height
        self.hair_label = hair_label
        self.by_id = {r.image_id: r for r in self.records}
        norms = np.linalg.norm(embeddings.data.astype(np.float64), axis=1)
        self.norms = norms
        self._mask_cache: OrderedDict[str, HairMask] = OrderedDict()
        self._mask_cache_size = max(1, mask_cache_size)
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.records)

    def cohorts(self) -> dict[tuple[str, str], list[ImageRecord]]:
        out: dict[tuple[str, str], list[ImageRecord]] = {}
        for rec in self.records:
            out.setdefault(rec.cohort, []).append(rec)
        return out

    def races(self) -> list[str]:
        seen: dict[str, None] = {}
        for rec in self.records:
            seen.setdefault(rec.race)
        return list(seen)

    def embedding(self, record: ImageRecord) -> np.ndarray:
        return self.embeddings.data[record.embedding_index]

    def mask_path(self, record: ImageRecord) -> Path | None:
        if record.mask_ref is None:
            return None
        return self.mask_dir / record.mask_ref

    def mask(self, image_id: str) -> HairMask | None:
        rec = self.by_id[image_id]
        if rec.mask_ref is None:
            return None
        with self._lock:
            cached = self._mask_cache.get(image_id)
            if cached is not None:
                self._mask_cache.move_to_end(image_id)
                return cached
        mask = self._load_mask(rec)
        with self._lock:
            self._mask_cache[image_id] = mask
            if len(self._mask_cache) > self._mask_cache_size:
                self._mask_cache.popitem(last=False)
        return mask

    def _load_mask(self, rec: ImageRecord) -> HairMask:
        pixels = read_pgm(self.mask_dir / rec.mask_ref)
        h, w = pixels.shape
        if (w, h) != (self.mask_width, self.mask_height):
            raise SchemaViolation(
                f"mask {rec.mask_ref} is {w}x{h}, manifest declares "
                f"{self.mask_width}x{self.mask_height}", field="mask_ref")
        if self.hair_label is None:
            bits = pixels != 0
        else:
            bits = pixels == self.hair_label
        return HairMask(width=w, height=h, bits=bits)


def load_corpus(manifest_path, hair_label: int | None = None,
                mask_cache_size: int = 4096) -> Corpus:
    """Load and validate a corpus from its manifest.

    Mask headers are checked eagerly (existence, dimensions); pixel data
    loads lazily on first use.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise MissingFile(f"manifest not found: {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text())
    except (ValueError, UnicodeDecodeError) as exc:
        raise SchemaViolation(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaViolation("manifest root must be an object")

    root = manifest_path.parent
    dim = _require(doc, "dim")
    if isinstance(dim, bool) or not isinstance(dim, int) or dim <= 0:
        raise SchemaViolation("dim must be a positive integer", field="dim")
    blob_rel = _require(doc, "embedding_blob")
    images = _require(doc, "images")
    if not isinstance(images, list):
        raise SchemaViolation("images must be a list", field="images")
    mask_dir = root / doc.get("mask_dir", "masks")
    mask_width = doc.get("mask_width", DEFAULT_MASK_WIDTH)
    mask_height = doc.get("mask_height", DEFAULT_MASK_HEIGHT)
    for name, v in (("mask_width", mask_width), ("mask_height", mask_height)):
        if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
            raise SchemaViolation(f"{name} must be a positive integer", field=name)

    embeddings = read_embedding_blob(root / blob_rel)
    if embeddings.dim != dim:
        raise EmbeddingShapeMismatch(
            f"manifest dim={dim} but blob dim={embeddings.dim}")
    if not np.isfinite(embeddings.data).all():
        bad = int(np.argwhere(~np.isfinite(embeddings.data).all(axis=1))[0][0])
        raise NonFiniteEmbedding(f"embedding row {bad} has non-finite entries")
    norms = np.linalg.norm(embeddings.data.astype(np.float64), axis=1)
    if (norms == 0.0).any():
        bad = int(np.argmax(norms == 0.0))
        raise ZeroNormEmbedding(f"embedding row {bad} has zero norm")

    records = []
    seen: set[str] = set()
    for i, obj in enumerate(images):
        rec = _parse_record(obj, i)
        if rec.image_id in seen:
            raise SchemaViolation(f"duplicate image_id {rec.image_id!r}",
                                  field="image_id", record_index=i)
        seen.add(rec.image_id)
        if rec.embedding_index >= embeddings.count:
            raise SchemaViolation(
                f"embedding_index {rec.embedding_index} out of range "
                f"(blob count={embeddings.count})",
                field="embedding_index", record_index=i)
        records.append(rec)

    corpus = Corpus(records, embeddings, root, mask_dir, mask_width,
                    mask_height, hair_label, mask_cache_size)
    for i, rec in enumerate(records):
        if rec.mask_ref is None:
            continue
        path = mask_dir / rec.mask_ref
        if not path.is_file():
            raise MissingFile(f"mask file not found: {path} (record {i})")
        _validate_mask_header(path, mask_width, mask_height, i)
    return corpus


def _validate_mask_header(path: Path, width: int, height: int, index: int) -> None:
    # header-only check; pixel data stays on disk until first use
    with open(path, "rb") as fh:
        head = fh.read(64)
    if head[:2] != b"P5":
        raise SchemaViolation(f"{path}: not a binary PGM", field="mask_ref",
                              record_index=index)
    pixels_declared = _pgm_dims(head, path)
    if pixels_declared != (width, height):
        raise SchemaViolation(
            f"mask {path.name} is {pixels_declared[0]}x{pixels_declared[1]}, "
            f"manifest declares {width}x{height}",
            field="mask_ref", record_index=index)


def _pgm_dims(head: bytes, path) -> tuple[int, int]:
    pos, fields = 2, []
    while len(fields) < 2 and pos < len(head):
        c = head[pos:pos + 1]
        if c == b"#":
            nl = head.find(b"\n", pos)
            pos = len(head) if nl < 0 else nl + 1
        elif c.isspace():
            pos += 1
        elif c.isdigit():
            end = pos
            while end < len(head) and head[end:end + 1].isdigit():
                end += 1
            fields.append(int(head[pos:end]))
            pos = end
        else:
            raise SchemaViolation(f"{path}: malformed PGM header")
    if len(fields) < 2:
        raise SchemaViolation(f"{path}: truncated PGM header")
    return fields[0], fields[1]


def record_to_dict(rec: ImageRecord) -> dict:
    attrs = {k: v for k, v in rec.attrs.to_dict().items() if v is not None}
    out = {
        "image_id": rec.image_id,
        "subject_id": rec.subject_id,
        "race": rec.race,
        "gender": rec.gender,
        "embedding_index": rec.embedding_index,
    }
    if rec.mask_ref is not None:
        out["mask_ref"] = rec.mask_ref
    if attrs:
        out["attrs"] = attrs
    return out


def save_corpus(corpus: Corpus, manifest_path, blob_name="emb.bin",
                mask_dir_name="masks") -> None:
    """Write a corpus back to disk (the emit side of the round-trip)."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    root.mkdir(parents=True, exist_ok=True)
    write_embedding_blob(root / blob_name, corpus.embeddings.data)
    mask_dir = root / mask_dir_name
    have_masks = any(r.mask_ref is not None for r in corpus.records)
    if have_masks:
        mask_dir.mkdir(parents=True, exist_ok=True)
    for rec in corpus.records:
        if rec.mask_ref is None:
            continue
        mask = corpus.mask(rec.image_id)
        out = mask_dir / rec.mask_ref
        out.parent.mkdir(parents=True, exist_ok=True)
        write_pgm(out, mask.bits)
    doc = {
        "dim": corpus.embeddings.dim,
        "embedding_blob": blob_name,
        "mask_dir": mask_dir_name,
        "mask_width": corpus.mask_width,
        "mask_height": corpus.mask_height,
        "images": [record_to_dict(r) for r in corpus.records],
    }
    manifest_path.write_text(json.dumps(doc, indent=1))


def parse_vendor_payload(kind: str, payload: str) -> AttributeScores:
    """Extract the consumed fields from a vendor response body.

    ``kind`` is "msface" or "rekognition" (case-insensitive).  Unknown fields
    are ignored; a payload that lacks the block this artifact needs raises
    :class:`MissingField`.
    """
    kind_l = kind.strip().lower()
    if kind_l not in ("msface", "rekognition"):
        raise UnparsablePayload(f"unknown vendor kind {kind!r}")
    try:
        doc = json.loads(payload)
    except ValueError as exc:
        raise UnparsablePayload(f"payload is not valid JSON: {exc}") from exc
    if isinstance(doc, list):
        if not doc:
            raise UnparsablePayload("payload is an empty list")
        doc = doc[0]
    if not isinstance(doc, dict):
        raise UnparsablePayload("payload root must be an object")

    if kind_l == "msface":
        attrs = doc.get("faceAttributes", doc)
        if not isinstance(attrs, dict):
            raise UnparsablePayload("faceAttributes must be an object")
        facial = attrs.get("facialHair")
        if facial is None:
            raise MissingField("payload has no facialHair block")
        if not isinstance(facial, dict):
            raise UnparsablePayload("facialHair must be an object")

        def fnum(block, key, required=False):
            v = block.get(key)
            if v is None:
                if required:
                    raise MissingField(f"facialHair block has no {key!r}")
                return None
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise UnparsablePayload(f"{key} must be a number")
            return float(v)

        mustache = facial.get("moustache", facial.get("mustache"))
        if mustache is None:
            raise MissingField("facialHair block has no moustache")
        if isinstance(mustache, bool) or not isinstance(mustache, (int, float)):
            raise UnparsablePayload("moustache must be a number")
        hair = attrs.get("hair")
        bald = None
        if isinstance(hair, dict):
            bald = fnum(hair, "bald")
        scores = AttributeScores(
            ms_beard=fnum(facial, "beard", required=True),
            ms_mustache=float(mustache),
            ms_sideburns=fnum(facial, "sideburns", required=True),
            ms_bald=bald,
        )
    else:
        details = doc.get("FaceDetails")
        if isinstance(details, list):
            if not details:
                raise MissingField("FaceDetails is empty")
            doc = details[0]
            if not isinstance(doc, dict):
                raise UnparsablePayload("FaceDetails entry must be an object")
        beard = doc.get("Beard")
        if beard is None:
            raise MissingField("payload has no Beard block")
        if not isinstance(beard, dict):
            raise UnparsablePayload("Beard must be an object")
        if "Value" not in beard:
            raise MissingField("Beard block has no Value")
        if "Confidence" not in beard:
            raise MissingField("Beard block has no Confidence")
        value = beard["Value"]
        conf = beard["Confidence"]
        if not isinstance(value, bool):
            raise UnparsablePayload("Beard.Value must be a boolean")
        if isinstance(conf, bool) or not isinstance(conf, (int, float)):
            raise UnparsablePayload("Beard.Confidence must be a number")
        scores = AttributeScores(rek_facial_hair=value,
                                 rek_confidence=float(conf))
    try:
        scores.validate()
    except SchemaViolation as exc:
        raise UnparsablePayload(str(exc)) from exc
    return scores
