"""Malformed-corpus corpus: every case must fail with a structured error.

Each entry is (name, builder); the builder writes a corrupted corpus under
the given directory and returns the manifest path to load.
"""

import json
import struct

import numpy as np

from conftest import build_corpus_dir, record
from gapaudit.corpus import write_embedding_blob, write_pgm


def _good_parts(root, **overrides):
    images = [record("a", "s1", 0, mask_ref="a.pgm"),
              record("b", "s2", 1, gender="Male", mask_ref="b.pgm")]
    masks = {"a.pgm": np.zeros((4, 4), dtype=np.uint8),
             "b.pgm": np.full((4, 4), 255, dtype=np.uint8)}
    emb = np.array([[1, 0, 0], [0, 1, 0]], dtype=np.float32)
    parts = {"images": images, "masks": masks, "emb": emb,
             "mask_size": (4, 4), "extra": None, "dim": None}
    parts.update(overrides)
    return parts


def _build(root, **overrides):
    parts = _good_parts(root, **overrides)
    return build_corpus_dir(root, parts["images"], parts["emb"],
                            masks=parts["masks"], dim=parts["dim"],
                            mask_size=parts["mask_size"], extra=parts["extra"])


def _mutate_manifest(root, fn, **overrides):
    path = _build(root, **overrides)
    doc = json.loads(path.read_text())
    fn(doc)
    path.write_text(json.dumps(doc))
    return path


def _mutate_record(root, fn):
    return _mutate_manifest(root, lambda d: fn(d["images"][0]))


def _set_field(key, value):
    def fn(rec):
        rec[key] = value
    return fn


def _del_field(key):
    def fn(rec):
        del rec[key]
    return fn


def _raw_manifest(root, text):
    root.mkdir(parents=True, exist_ok=True)
    path = root / "manifest.json"
    path.write_text(text)
    return path


def _blob_bytes(root, data):
    path = _build(root)
    (root / "emb.bin").write_bytes(data)
    return path


def _good_blob_bytes():
    emb = np.array([[1, 0, 0], [0, 1, 0]], dtype="<f4")
    return (b"GAPE" + struct.pack("<III", 1, 2, 3) + emb.tobytes())


MANIFEST_CASES = [
    ("manifest_missing", lambda r: r / "nope.json"),
    ("manifest_bad_json", lambda r: _raw_manifest(r, "{not json")),
    ("manifest_root_list", lambda r: _raw_manifest(r, "[1, 2]")),
    ("manifest_binary_garbage", lambda r: _raw_manifest(r, "\x00\x01\x02")),
    ("missing_dim", lambda r: _mutate_manifest(r, lambda d: d.pop("dim"))),
    ("dim_zero", lambda r: _mutate_manifest(r, lambda d: d.update(dim=0))),
    ("dim_negative", lambda r: _mutate_manifest(r, lambda d: d.update(dim=-3))),
    ("dim_bool", lambda r: _mutate_manifest(r, lambda d: d.update(dim=True))),
    ("dim_string", lambda r: _mutate_manifest(r, lambda d: d.update(dim="3"))),
    ("dim_mismatch", lambda r: _mutate_manifest(r, lambda d: d.update(dim=5))),
    ("missing_blob_key", lambda r: _mutate_manifest(r, lambda d: d.pop("embedding_blob"))),
    ("missing_images_key", lambda r: _mutate_manifest(r, lambda d: d.pop("images"))),
    ("images_not_list", lambda r: _mutate_manifest(r, lambda d: d.update(images={}))),
    ("mask_width_zero", lambda r: _mutate_manifest(r, lambda d: d.update(mask_width=0))),
    ("mask_height_negative", lambda r: _mutate_manifest(r, lambda d: d.update(mask_height=-4))),
    ("mask_width_string", lambda r: _mutate_manifest(r, lambda d: d.update(mask_width="4"))),
]

RECORD_CASES = [
    ("record_not_dict", lambda r: _mutate_manifest(r, lambda d: d["images"].__setitem__(0, 42))),
    ("missing_image_id", lambda r: _mutate_record(r, _del_field("image_id"))),
    ("empty_image_id", lambda r: _mutate_record(r, _set_field("image_id", ""))),
    ("image_id_not_string", lambda r: _mutate_record(r, _set_field("image_id", 7))),
    ("missing_subject_id", lambda r: _mutate_record(r, _del_field("subject_id"))),
    ("subject_id_not_string", lambda r: _mutate_record(r, _set_field("subject_id", []))),
    ("missing_race", lambda r: _mutate_record(r, _del_field("race"))),
    ("empty_race", lambda r: _mutate_record(r, _set_field("race", ""))),
    ("missing_gender", lambda r: _mutate_record(r, _del_field("gender"))),
    ("bad_gender", lambda r: _mutate_record(r, _set_field("gender", "female"))),
    ("missing_embedding_index", lambda r: _mutate_record(r, _del_field("embedding_index"))),
    ("negative_embedding_index", lambda r: _mutate_record(r, _set_field("embedding_index", -1))),
    ("bool_embedding_index", lambda r: _mutate_record(r, _set_field("embedding_index", True))),
    ("float_embedding_index", lambda r: _mutate_record(r, _set_field("embedding_index", 0.5))),
    ("embedding_index_out_of_range", lambda r: _mutate_record(r, _set_field("embedding_index", 5))),
    ("duplicate_image_id", lambda r: _mutate_manifest(
        r, lambda d: d["images"].__setitem__(1, dict(d["images"][0])))),
    ("mask_ref_empty", lambda r: _mutate_record(r, _set_field("mask_ref", ""))),
    ("mask_ref_not_string", lambda r: _mutate_record(r, _set_field("mask_ref", 9))),
    ("attrs_not_dict", lambda r: _mutate_record(r, _set_field("attrs", "beard"))),
    ("ms_beard_bad_level", lambda r: _mutate_record(r, _set_field("attrs", {"ms_beard": 0.5}))),
    ("ms_mustache_bad_level", lambda r: _mutate_record(r, _set_field("attrs", {"ms_mustache": 0.3}))),
    ("ms_sideburns_bad_level", lambda r: _mutate_record(r, _set_field("attrs", {"ms_sideburns": 1.0}))),
    ("ms_beard_string", lambda r: _mutate_record(r, _set_field("attrs", {"ms_beard": "0.9"}))),
    ("ms_beard_nan", lambda r: _mutate_record(r, _set_field("attrs", {"ms_beard": float("nan")}))),
    ("ms_bald_above_one", lambda r: _mutate_record(r, _set_field("attrs", {"ms_bald": 1.5}))),
    ("ms_bald_negative", lambda r: _mutate_record(r, _set_field("attrs", {"ms_bald": -0.1}))),
    ("rek_conf_without_flag", lambda r: _mutate_record(r, _set_field("attrs", {"rek_confidence": 80.0}))),
    ("rek_flag_without_conf", lambda r: _mutate_record(r, _set_field("attrs", {"rek_facial_hair": True}))),
    ("rek_conf_too_low", lambda r: _mutate_record(
        r, _set_field("attrs", {"rek_facial_hair": True, "rek_confidence": 49.0}))),
    ("rek_conf_too_high", lambda r: _mutate_record(
        r, _set_field("attrs", {"rek_facial_hair": False, "rek_confidence": 101.0}))),
    ("rek_flag_not_bool", lambda r: _mutate_record(
        r, _set_field("attrs", {"rek_facial_hair": 1, "rek_confidence": 80.0}))),
]

BLOB_CASES = [
    ("blob_missing_file", lambda r: (_build(r), (r / "emb.bin").unlink())[0]),
    ("blob_empty", lambda r: _blob_bytes(r, b"")),
    ("blob_bad_magic", lambda r: _blob_bytes(r, b"NOPE" + _good_blob_bytes()[4:])),
    ("blob_bad_version", lambda r: _blob_bytes(
        r, b"GAPE" + struct.pack("<III", 2, 2, 3) + _good_blob_bytes()[16:])),
    ("blob_truncated_header", lambda r: _blob_bytes(r, b"GAPE\x01\x00")),
    ("blob_truncated_data", lambda r: _blob_bytes(r, _good_blob_bytes()[:-4])),
    ("blob_trailing_bytes", lambda r: _blob_bytes(r, _good_blob_bytes() + b"xx")),
    ("blob_zero_dim", lambda r: _blob_bytes(
        r, b"GAPE" + struct.pack("<III", 1, 2, 0))),
    ("blob_count_too_small", lambda r: _blob_bytes(
        r, b"GAPE" + struct.pack("<III", 1, 1, 3) +
        np.array([[1, 0, 0]], dtype="<f4").tobytes())),
    ("blob_nan_row", lambda r: _build(
        r, emb=np.array([[np.nan, 0, 0], [0, 1, 0]], dtype=np.float32))),
    ("blob_inf_row", lambda r: _build(
        r, emb=np.array([[np.inf, 0, 0], [0, 1, 0]], dtype=np.float32))),
    ("blob_zero_norm_row", lambda r: _build(
        r, emb=np.array([[0, 0, 0], [0, 1, 0]], dtype=np.float32))),
]


def _mask_bytes(root, ref, data):
    path = _build(root)
    (root / "masks" / ref).write_bytes(data)
    return path


MASK_CASES = [
    ("mask_file_missing", lambda r: (_build(r), (r / "masks" / "a.pgm").unlink())[0]),
    ("mask_not_pgm", lambda r: _mask_bytes(r, "a.pgm", b"P6\n4 4\n255\n" + b"\x00" * 48)),
    ("mask_wrong_dims", lambda r: _mask_bytes(
        r, "a.pgm", b"P5\n5 4\n255\n" + b"\x00" * 20)),
    ("mask_header_garbage", lambda r: _mask_bytes(r, "a.pgm", b"P5\nxx yy\n255\n")),
    ("mask_truncated_header", lambda r: _mask_bytes(r, "a.pgm", b"P5\n4")),
    ("mask_truncated_raster", lambda r: _mask_bytes(
        r, "a.pgm", b"P5\n4 4\n255\n" + b"\x00" * 7)),
    ("mask_maxval_too_big", lambda r: _mask_bytes(
        r, "a.pgm", b"P5\n4 4\n65535\n" + b"\x00" * 32)),
    ("mask_zero_dims", lambda r: _mask_bytes(r, "a.pgm", b"P5\n0 0\n255\n")),
    ("mask_oversized_raster", lambda r: _mask_bytes(
        r, "a.pgm", b"P5\n4 4\n255\n" + b"\x00" * 30)),
]

ALL_CASES = MANIFEST_CASES + RECORD_CASES + BLOB_CASES + MASK_CASES
