import json

import numpy as np
import pytest
from PIL import Image

from roadmend.mask import (BoundingBox, MaskError, load_boxes, load_mask,
                           mask_from_boxes, save_boxes)


def test_dilation_example():
    b = BoundingBox(10, 10, 30, 30)
    d = b.dilated(0.1)
    assert (d.x_min, d.y_min, d.x_max, d.y_max) == (9.0, 9.0, 31.0, 31.0)
    mask = mask_from_boxes([b], (64, 64), dilation=0.1)
    # centers at x+0.5 fall in [9, 31] for x in 9..30: a 22 x 22 block
    assert mask.sum() == 22 * 22
    ys, xs = np.nonzero(mask)
    assert (xs.min(), xs.max(), ys.min(), ys.max()) == (9, 30, 9, 30)


def test_zero_dilation_keeps_box():
    mask = mask_from_boxes([BoundingBox(10, 10, 30, 30)], (64, 64),
                           dilation=0.0)
    assert mask.sum() == 20 * 20


def test_mask_matches_brute_force():
    rng = np.random.default_rng(3)
    h, w = 40, 56
    boxes = []
    for _ in range(4):
        x0, y0 = rng.uniform(0, w - 8), rng.uniform(0, h - 8)
        boxes.append(BoundingBox(x0, y0, x0 + rng.uniform(2, 8),
                                 y0 + rng.uniform(2, 8),
                                 score=float(rng.uniform(0.5, 1.0))))
    for dil in (0.0, 0.1, 0.37):
        mask = mask_from_boxes(boxes, (h, w), dilation=dil)
        ref = np.zeros((h, w), dtype=bool)
        for y in range(h):
            for x in range(w):
                cx, cy = x + 0.5, y + 0.5
                for b in boxes:
                    d = b.dilated(dil)
                    if d.x_min <= cx <= d.x_max and d.y_min <= cy <= d.y_max:
                        ref[y, x] = True
        assert np.array_equal(mask, ref), dil


def test_empty_box_list_is_empty_mask():
    mask = mask_from_boxes([], (16, 16))
    assert not mask.any()


def test_dilation_is_monotone():
    b = BoundingBox(5, 7, 20, 19)
    prev = mask_from_boxes([b], (48, 48), dilation=0.0)
    for dil in (0.05, 0.2, 0.5, 1.0):
        cur = mask_from_boxes([b], (48, 48), dilation=dil)
        assert (prev <= cur).all()
        prev = cur


def test_full_cover_is_an_error():
    with pytest.raises(MaskError, match="no known pixels"):
        mask_from_boxes([BoundingBox(-5, -5, 40, 40)], (16, 16), dilation=0.0)


def test_invalid_dilation_is_an_error():
    b = BoundingBox(1, 1, 4, 4)
    for bad in (-0.1, 1.5):
        with pytest.raises(MaskError, match="dilation"):
            mask_from_boxes([b], (16, 16), dilation=bad)


def test_degenerate_box_is_an_error():
    with pytest.raises(MaskError, match="degenerate"):
        mask_from_boxes([BoundingBox(5, 5, 5, 9)], (16, 16))
    with pytest.raises(MaskError, match="degenerate"):
        mask_from_boxes([BoundingBox(5, 9, 9, 5)], (16, 16))


def test_box_outside_image_is_an_error():
    with pytest.raises(MaskError, match="outside"):
        mask_from_boxes([BoundingBox(20, 2, 25, 6)], (16, 16))


# ------------------------------------------------------------------ box file

def test_box_file_round_trip(tmp_path):
    boxes = [BoundingBox(1.5, 2.5, 10.0, 12.0, 0.9, "car"),
             BoundingBox(20, 20, 30, 28, 0.75, "truck")]
    save_boxes(tmp_path / "b.json", boxes, 64, 48)
    back, dims = load_boxes(tmp_path / "b.json")
    assert dims == (64, 48)
    assert len(back) == 2
    assert back[0].x_min == 1.5 and back[0].label == "car"
    assert back[1].score == 0.75


def test_box_file_schema_rejects_bad_documents(tmp_path):
    cases = [
        {},  # missing everything
        {"image": {"width": 64, "height": 48}},  # no boxes
        {"image": {"width": 0, "height": 48}, "boxes": []},  # width < 1
        {"image": {"width": 64, "height": 48},
         "boxes": [{"x_min": 0, "y_min": 0, "x_max": 4}]},  # missing y_max
        {"image": {"width": 64, "height": 48},
         "boxes": [{"x_min": 0, "y_min": 0, "x_max": 4, "y_max": 4,
                    "score": 1.5, "label": "car"}]},  # score > 1
        {"image": {"width": 64, "height": 48},
         "boxes": [{"x_min": -1, "y_min": 0, "x_max": 4, "y_max": 4,
                    "score": 0.5, "label": "car"}]},  # negative coord
    ]
    for i, doc in enumerate(cases):
        p = tmp_path / f"bad{i}.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(MaskError, match="invalid box file"):
            load_boxes(p)


def test_box_file_accepts_zero_boxes(tmp_path):
    p = tmp_path / "empty.json"
    p.write_text(json.dumps({"image": {"width": 8, "height": 8}, "boxes": []}))
    boxes, dims = load_boxes(p)
    assert boxes == [] and dims == (8, 8)


# ---------------------------------------------------------------- mask image

def test_load_mask_thresholds_at_127(tmp_path):
    arr = np.zeros((8, 8), dtype=np.uint8)
    arr[2:5, 3:6] = 200
    arr[0, 0] = 127          # not void: strict >
    arr[0, 1] = 128
    Image.fromarray(arr, "L").save(tmp_path / "m.png")
    mask = load_mask(tmp_path / "m.png", (8, 8))
    assert mask.sum() == 9 + 1
    assert not mask[0, 0] and mask[0, 1]


def test_load_mask_dim_mismatch_is_an_error(tmp_path):
    Image.fromarray(np.zeros((8, 8), np.uint8), "L").save(tmp_path / "m.png")
    with pytest.raises(MaskError, match="does not match"):
        load_mask(tmp_path / "m.png", (16, 16))


def test_load_mask_full_cover_is_an_error(tmp_path):
    Image.fromarray(np.full((8, 8), 255, np.uint8), "L").save(tmp_path / "m.png")
    with pytest.raises(MaskError, match="no known pixels"):
        load_mask(tmp_path / "m.png", (8, 8))


def test_load_mask_accepts_rgb_by_conversion(tmp_path):
    arr = np.zeros((8, 8, 3), dtype=np.uint8)
    arr[1:3, 1:3] = 255
    Image.fromarray(arr, "RGB").save(tmp_path / "m.png")
    mask = load_mask(tmp_path / "m.png", (8, 8))
    assert mask.sum() == 4
