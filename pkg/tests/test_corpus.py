import json

import numpy as np
import pytest

from conftest import build_corpus_dir, record
from fuzz_cases import ALL_CASES
from gapaudit.corpus import (
    AttributeScores,
    load_corpus,
    parse_vendor_payload,
    read_embedding_blob,
    read_pgm,
    save_corpus,
    write_embedding_blob,
    write_pgm,
)
from gapaudit.errors import (
    EmbeddingShapeMismatch,
    GapAuditError,
    MissingField,
    MissingFile,
    NonFiniteEmbedding,
    SchemaViolation,
    UnparsablePayload,
    ZeroNormEmbedding,
)


class TestLoad:
    def test_minimal_corpus(self, tiny_corpus):
        corpus = load_corpus(tiny_corpus)
        assert len(corpus) == 3
        assert corpus.by_id["a"].subject_id == "s1"
        assert corpus.embeddings.dim == 4
        assert corpus.by_id["a"].attrs.ms_beard == 0.9
        assert corpus.by_id["b"].attrs.rek_confidence == 92.0

    def test_out_of_range_index(self, tmp_path):
        images = [record("a", "s1", 5)]
        emb = np.eye(3, 4, dtype=np.float32)
        path = build_corpus_dir(tmp_path, images, emb)
        with pytest.raises(SchemaViolation, match="embedding_index"):
            load_corpus(path)

    def test_inadmissible_ms_level(self, tmp_path):
        images = [record("a", "s1", 0, attrs={"ms_beard": 0.5})]
        path = build_corpus_dir(tmp_path, images, np.eye(1, 4, dtype=np.float32))
        with pytest.raises(SchemaViolation, match="ms_beard"):
            load_corpus(path)

    def test_duplicate_image_id(self, tmp_path):
        images = [record("a", "s1", 0), record("a", "s2", 1)]
        path = build_corpus_dir(tmp_path, images, np.eye(2, 4, dtype=np.float32))
        with pytest.raises(SchemaViolation, match="duplicate"):
            load_corpus(path)

    def test_nonfinite_embedding(self, tmp_path):
        emb = np.array([[np.nan, 1.0]], dtype=np.float32)
        path = build_corpus_dir(tmp_path, [record("a", "s1", 0)], emb)
        with pytest.raises(NonFiniteEmbedding):
            load_corpus(path)

    def test_zero_norm_embedding(self, tmp_path):
        emb = np.array([[0.0, 0.0]], dtype=np.float32)
        path = build_corpus_dir(tmp_path, [record("a", "s1", 0)], emb)
        with pytest.raises(ZeroNormEmbedding):
            load_corpus(path)

    def test_norms_cached(self, tiny_corpus):
        corpus = load_corpus(tiny_corpus)
        assert corpus.norms[2] == pytest.approx(2.0)

    def test_cohorts(self, tiny_corpus):
        corpus = load_corpus(tiny_corpus)
        groups = corpus.cohorts()
        assert {k: len(v) for k, v in groups.items()} == {
            ("Caucasian", "Female"): 2, ("Caucasian", "Male"): 1}

    def test_missing_attrs_flagged(self, tiny_corpus):
        corpus = load_corpus(tiny_corpus)
        assert "ms_bald" in corpus.by_id["c"].attrs.missing()
        assert corpus.by_id["a"].attrs.missing() == ("rek_facial_hair",)


class TestBlob:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        data = rng.standard_normal((7, 16)).astype(np.float32)
        write_embedding_blob(tmp_path / "e.bin", data)
        back = read_embedding_blob(tmp_path / "e.bin")
        assert back.count == 7 and back.dim == 16
        assert back.data.tobytes() == data.tobytes()

    def test_trailing_bytes_rejected(self, tmp_path):
        write_embedding_blob(tmp_path / "e.bin", np.eye(2, 3, dtype=np.float32))
        raw = (tmp_path / "e.bin").read_bytes()
        (tmp_path / "e.bin").write_bytes(raw + b"\x00")
        with pytest.raises(EmbeddingShapeMismatch):
            read_embedding_blob(tmp_path / "e.bin")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "e.bin").write_bytes(b"EPAG" + b"\x00" * 12)
        with pytest.raises(SchemaViolation):
            read_embedding_blob(tmp_path / "e.bin")

    def test_missing(self, tmp_path):
        with pytest.raises(MissingFile):
            read_embedding_blob(tmp_path / "absent.bin")


class TestPgm:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        bits = rng.random((112, 112)) < 0.3
        write_pgm(tmp_path / "m.pgm", bits)
        back = read_pgm(tmp_path / "m.pgm")
        assert np.array_equal(back != 0, bits)

    def test_comments_allowed(self, tmp_path):
        (tmp_path / "m.pgm").write_bytes(b"P5\n# made by hand\n2 2\n255\n\x00\xff\x00\xff")
        back = read_pgm(tmp_path / "m.pgm")
        assert back.tolist() == [[0, 255], [0, 255]]

    def test_maxval_limit(self, tmp_path):
        (tmp_path / "m.pgm").write_bytes(b"P5\n2 2\n65535\n" + b"\x00" * 8)
        with pytest.raises(SchemaViolation):
            read_pgm(tmp_path / "m.pgm")

    def test_hair_label_mode(self, tmp_path):
        labelled = np.array([[17, 0], [3, 17]], dtype=np.uint8)
        images = [record("a", "s1", 0, mask_ref="a.pgm")]
        path = build_corpus_dir(tmp_path, images,
                                np.eye(1, 4, dtype=np.float32),
                                masks={"a.pgm": labelled}, mask_size=(2, 2))
        corpus = load_corpus(path, hair_label=17)
        assert corpus.mask("a").bits.tolist() == [[True, False], [False, True]]
        corpus = load_corpus(path)
        assert corpus.mask("a").hair_pixels == 3

    def test_mask_dim_mismatch(self, tmp_path):
        images = [record("a", "s1", 0, mask_ref="a.pgm")]
        path = build_corpus_dir(tmp_path, images,
                                np.eye(1, 4, dtype=np.float32),
                                masks={"a.pgm": np.zeros((3, 3), dtype=np.uint8)},
                                mask_size=(4, 4))
        with pytest.raises(SchemaViolation, match="mask"):
            load_corpus(path)

    def test_mask_cache_bounded(self, tmp_path):
        images = [record(f"i{k}", f"s{k}", k, mask_ref=f"m{k}.pgm")
                  for k in range(6)]
        masks = {f"m{k}.pgm": np.full((2, 2), 255 * (k % 2), dtype=np.uint8)
                 for k in range(6)}
        path = build_corpus_dir(tmp_path, images,
                                np.full((6, 4), 0.5, dtype=np.float32),
                                masks=masks, mask_size=(2, 2))
        corpus = load_corpus(path, mask_cache_size=2)
        for k in range(6):
            assert corpus.mask(f"i{k}").hair_pixels == 4 * (k % 2)
        # re-reads after eviction still agree
        assert corpus.mask("i0").hair_pixels == 0
        assert len(corpus._mask_cache) <= 2


class TestRoundTrip:
    def test_save_then_load_identical(self, tiny_corpus, tmp_path):
        corpus = load_corpus(tiny_corpus)
        out = tmp_path / "copy" / "manifest.json"
        save_corpus(corpus, out)
        back = load_corpus(out)
        assert back.records == corpus.records
        assert back.embeddings.data.tobytes() == corpus.embeddings.data.tobytes()
        for rec in corpus.records:
            if rec.mask_ref:
                assert np.array_equal(back.mask(rec.image_id).bits,
                                      corpus.mask(rec.image_id).bits)


class TestVendorPayloads:
    def test_msface_mapping(self):
        payload = json.dumps({
            "facialHair": {"beard": 0.9, "moustache": 0.1, "sideburns": 0.4},
            "hair": {"bald": 0.98},
        })
        scores = parse_vendor_payload("MsFace", payload)
        assert scores == AttributeScores(ms_beard=0.9, ms_mustache=0.1,
                                         ms_sideburns=0.4, ms_bald=0.98)

    def test_msface_nested_face_attributes(self):
        payload = json.dumps([{
            "faceId": "xyz",
            "faceAttributes": {
                "facialHair": {"beard": 0.6, "moustache": 0.0, "sideburns": 0.0},
                "hair": {"bald": 0.01, "hairColor": []},
            },
        }])
        scores = parse_vendor_payload("msface", payload)
        assert scores.ms_beard == 0.6
        assert scores.ms_bald == 0.01

    def test_msface_missing_facial_hair(self):
        with pytest.raises(MissingField):
            parse_vendor_payload("msface", json.dumps({"hair": {"bald": 0.5}}))

    def test_msface_without_hair_block(self):
        payload = json.dumps({"facialHair": {"beard": 0.0, "moustache": 0.0,
                                             "sideburns": 0.1}})
        scores = parse_vendor_payload("msface", payload)
        assert scores.ms_bald is None

    def test_msface_inadmissible_level(self):
        payload = json.dumps({"facialHair": {"beard": 0.55, "moustache": 0.0,
                                             "sideburns": 0.0}})
        with pytest.raises(UnparsablePayload):
            parse_vendor_payload("msface", payload)

    def test_rekognition_mapping(self):
        payload = json.dumps({"Beard": {"Value": True, "Confidence": 92.0}})
        scores = parse_vendor_payload("Rekognition", payload)
        assert scores.rek_facial_hair is True
        assert scores.rek_confidence == 92.0

    def test_rekognition_face_details(self):
        payload = json.dumps({"FaceDetails": [
            {"Beard": {"Value": False, "Confidence": 61.5},
             "Mustache": {"Value": False, "Confidence": 99.0}}]})
        scores = parse_vendor_payload("rekognition", payload)
        assert scores.rek_facial_hair is False
        assert scores.rek_confidence == 61.5

    def test_rekognition_missing_beard(self):
        with pytest.raises(MissingField):
            parse_vendor_payload("rekognition", json.dumps({"FaceDetails": [{}]}))

    def test_bad_json(self):
        with pytest.raises(UnparsablePayload):
            parse_vendor_payload("msface", "{nope")

    def test_unknown_kind(self):
        with pytest.raises(UnparsablePayload):
            parse_vendor_payload("clarifai", "{}")

    def test_merged_overlay(self):
        ms = parse_vendor_payload("msface", json.dumps(
            {"facialHair": {"beard": 0.4, "moustache": 0.0, "sideburns": 0.0}}))
        rek = parse_vendor_payload("rekognition", json.dumps(
            {"Beard": {"Value": True, "Confidence": 70.0}}))
        both = ms.merged(rek)
        assert both.ms_beard == 0.4
        assert both.rek_confidence == 70.0


@pytest.mark.parametrize("name,builder", ALL_CASES, ids=[c[0] for c in ALL_CASES])
def test_fuzz_structured_errors(tmp_path, name, builder):
    manifest = builder(tmp_path / name)
    with pytest.raises(GapAuditError):
        corpus = load_corpus(manifest)
        for rec in corpus.records:
            corpus.mask(rec.image_id)
