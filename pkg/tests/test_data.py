import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays
from PIL import Image

from vnskit.data import (
    ColorImage,
    ImageFormatError,
    ManifestError,
    Mask,
    ShapeError,
    SoftMap,
    TokenSet,
    load_mask,
    make_rng,
    parse_manifest,
    save_mask,
)


def _png(path, arr, mode="L"):
    Image.fromarray(np.asarray(arr, np.uint8), mode=mode).save(path)
    return path


def test_load_mask_uniform(tmp_path):
    full = load_mask(_png(tmp_path / "a.png", np.full((5, 7), 255)))
    assert full.count == 35 and full.shape == (5, 7)
    assert load_mask(_png(tmp_path / "b.png", np.zeros((5, 7)))).count == 0


def test_load_mask_single_pixel(tmp_path):
    a = np.zeros((9, 9))
    a[4, 2] = 200
    m = load_mask(_png(tmp_path / "c.pgm", a))
    assert m.count == int(np.count_nonzero(np.asarray(Image.open(tmp_path / "c.pgm")) >= 128)) == 1
    assert m.bits[4, 2]


def test_load_mask_threshold_edge(tmp_path):
    p = _png(tmp_path / "t.png", [[127, 128, 129]])
    assert load_mask(p).bits.tolist() == [[False, True, True]]
    assert load_mask(p, 129).bits.tolist() == [[False, False, True]]


def test_load_mask_errors(tmp_path):
    with pytest.raises(OSError):
        load_mask(tmp_path / "missing.png")
    bad = tmp_path / "junk.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(OSError):
        load_mask(bad)
    rgb = _png(tmp_path / "rgb.png", np.zeros((3, 3, 3)), "RGB")
    with pytest.raises(ImageFormatError):
        load_mask(rgb)


@settings(max_examples=25, deadline=None)
@given(arrays(bool, (6, 9)))
def test_mask_round_trip(tmp_path_factory, bits):
    path = tmp_path_factory.mktemp("rt") / "m.png"
    save_mask(path, Mask(bits))
    assert np.array_equal(load_mask(path).bits, bits)


def test_types_validate_and_freeze():
    with pytest.raises(ShapeError):
        Mask(np.zeros((0, 3), bool))
    with pytest.raises(ValueError):
        SoftMap(np.array([[np.nan]]))
    m = Mask(np.eye(3, dtype=bool))
    with pytest.raises(ValueError):
        m.bits[0, 0] = False
    assert Mask.from_coords(3, 3, [(0, 0), (1, 1), (2, 2)]) == m
    assert SoftMap.from_prediction([[-1.0, 0.5, 2.0]]).values.tolist() == [[0.0, 0.5, 1.0]]
    assert ColorImage(np.full((2, 2, 3), 255, np.uint8)).to_gray().intensities.max() == 255


def test_token_set_roles():
    t = TokenSet(np.zeros((3, 4)), ("sam-output", "prompt", "vns-mask"))
    assert t.index("vns-mask") == 2
    with pytest.raises(ValueError):
        TokenSet(np.zeros((1, 4)), ("other",))


def test_rng_stream_of_ten_thousand():
    a = make_rng(2024).random(10_000)
    b = make_rng(2024).random(10_000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, make_rng(2025).random(10_000))
    assert not np.array_equal(make_rng(2024, 1).random(10), make_rng(2024, 2).random(10))


def _write(path, lines):
    path.write_text("".join(line + "\n" for line in lines))
    return path


def test_manifest_order_and_relative_paths(tmp_path):
    recs = [{"image": f"i{k}.png", "gt_mask": f"g{k}.png"} for k in range(3)]
    recs[1]["pred"] = "p1.png"
    recs[2]["instances"] = [{"mask": "m.png", "score": 0.5}]
    out = parse_manifest(_write(tmp_path / "m.jsonl", [json.dumps(r) for r in recs]))
    assert [r.image.name for r in out] == ["i0.png", "i1.png", "i2.png"]
    assert out[0].gt_mask == tmp_path / "g0.png"
    assert out[1].pred == tmp_path / "p1.png"
    assert out[2].instances[0].score == 0.5


def test_manifest_one_line(tmp_path):
    assert len(parse_manifest(_write(tmp_path / "m.jsonl", ['{"image": "a", "gt_mask": "b"}']))) == 1


def test_manifest_empty(tmp_path):
    with pytest.raises(ManifestError):
        parse_manifest(_write(tmp_path / "m.jsonl", []))


@pytest.mark.parametrize("second", [
    '{"image": "a2"}',
    "{not json",
    '{"image": "a", "gt_mask": "b", "extra": 1}',
    '{"image": "a", "gt_mask": "b", "instances": [{"mask": "x", "score": "high"}]}',
])
def test_manifest_error_cites_line(tmp_path, second):
    path = _write(tmp_path / "m.jsonl", ['{"image": "a", "gt_mask": "b"}', second])
    with pytest.raises(ManifestError) as info:
        parse_manifest(path)
    assert info.value.line == 2
    assert "line 2" in str(info.value)
