import json

import pytest

from spaa.engine.pairs import AttributePair, Verdict
from spaa.engine.triples import (
    TripleRecord,
    build_triples,
    read_triples,
    write_triples,
)
from spaa.errors import DanglingImageRefError


def make_pair(i, kind="color", descriptor="red", source=None, subject="lamp"):
    return AttributePair(
        pair_id=f"pair{i:04d}",
        subject=subject,
        attribute_kind=kind,
        target_descriptor=descriptor,
        source_descriptor=source,
        seed=i,
        source_prompt=f"a photo of a {subject}",
        target_prompt=f"a photo of a {descriptor} {subject}",
        source_image=f"pair{i:04d}_src.png",
        target_image=f"pair{i:04d}_tgt.png",
        verdicts={
            "judge": Verdict("pass"),
            "similarity": Verdict("pass"),
            "leakage": Verdict("pass"),
        },
    )


def touch_images(tmp_path, pairs):
    for p in pairs:
        (tmp_path / p.source_image).write_bytes(b"png")
        (tmp_path / p.target_image).write_bytes(b"png")


def test_zero_pairs_empty_file_valid(tmp_path):
    path = write_triples([], tmp_path / "triples.jsonl")
    assert path.read_text() == ""
    assert read_triples(path) == []


def test_color_pairs_categories_in_abc():
    pairs = [make_pair(i) for i in range(100)]
    triples = build_triples(pairs, rng_seed=0)
    cats = {t.category for t in triples}
    assert cats <= {"transform_a", "cross_attribute_b", "same_hue_c"}
    assert len(cats) > 1  # seeded choice actually varies


def test_material_pairs_never_same_hue():
    pairs = [make_pair(i, kind="material", descriptor="wood") for i in range(60)]
    triples = build_triples(pairs, rng_seed=1)
    assert all(t.category != "same_hue_c" for t in triples)


def test_build_is_deterministic_and_order_independent():
    pairs = [make_pair(i) for i in range(20)]
    a = build_triples(pairs, rng_seed=5)
    b = build_triples(list(reversed(pairs)), rng_seed=5)
    assert a == b


def test_round_trip_field_for_field(tmp_path):
    pairs = [make_pair(i, source="blue" if i % 2 else None) for i in range(1000)]
    triples = build_triples(pairs, rng_seed=2)
    touch_images(tmp_path, pairs)
    path = write_triples(triples, tmp_path / "triples.jsonl")
    back = read_triples(path)
    assert back == triples


def test_jsonl_schema_keys(tmp_path):
    pairs = [make_pair(0)]
    touch_images(tmp_path, pairs)
    path = write_triples(build_triples(pairs, 0), tmp_path / "t.jsonl")
    row = json.loads(path.read_text().splitlines()[0])
    assert list(row) == [
        "pair_id", "input_image", "instruction", "output_image", "category",
        "subject", "attribute_kind", "source_descriptor", "target_descriptor",
        "seed",
    ]


def test_dangling_ref_rejected_at_write(tmp_path):
    triples = build_triples([make_pair(0)], 0)
    with pytest.raises(DanglingImageRefError):
        write_triples(triples, tmp_path / "t.jsonl")


def test_empty_instruction_rejected():
    with pytest.raises(ValueError):
        TripleRecord(
            pair_id="p", input_image="a.png", instruction="",
            output_image="b.png", category="transform_a", subject="lamp",
            attribute_kind="color", source_descriptor=None,
            target_descriptor="red", seed=0,
        )


def test_accepted_requires_all_gates():
    pair = make_pair(0)
    assert pair.accepted
    pair.verdicts["leakage"] = Verdict("fail")
    assert not pair.accepted
    del pair.verdicts["leakage"]
    assert not pair.accepted


def test_unaccepted_pair_rejected():
    pair = make_pair(0)
    pair.verdicts["leakage"] = Verdict("fail")
    with pytest.raises(ValueError, match="accepted"):
        build_triples([pair], 0)
