import numpy as np
import pytest

from dawn import backbone as bb
from dawn import model, ops
from dawn.boxes import BoundingBox


def textured_frame(h=120, w=160, seed=0):
    return np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8)


@pytest.mark.parametrize("name", ["paper", "toy", "micro"])
def test_preset_geometry(name):
    cfg = bb.PRESETS[name]
    assert cfg.n > cfg.m >= 1
    assert cfg.a == cfg.n - cfg.m + 1
    assert cfg.output_size(cfg.roi_size) == cfg.n
    assert cfg.output_size(cfg.target_size) == cfg.m


def test_paper_preset_numbers():
    cfg = bb.PAPER
    assert (cfg.roi_size, cfg.target_size, cfg.n, cfg.m, cfg.channels, cfg.total_stride) == (255, 127, 22, 6, 256, 8)


def test_toy_extract_shapes(toy_weights):
    cfg = bb.TOY
    f = bb.extract(np.zeros((cfg.roi_size,) * 2 + (3,)), toy_weights.params, cfg)
    t = bb.extract(np.zeros((cfg.target_size,) * 2 + (3,)), toy_weights.params, cfg)
    assert f.shape == (cfg.n, cfg.n, cfg.channels) and t.shape == (cfg.m, cfg.m, cfg.channels)


def test_extract_rejects_unknown_size(toy_weights):
    with pytest.raises(ops.ShapeError):
        bb.extract(np.zeros((30, 30, 3)), toy_weights.params, bb.TOY)


def test_zero_weights_give_zero_output():
    params = {k: np.zeros_like(v) for k, v in bb.init_backbone(bb.TOY, np.random.default_rng(0)).items()}
    out = bb.extract(np.random.default_rng(1).random((48, 48, 3)), params, bb.TOY)
    assert np.all(out == 0)


def test_weights_shared_across_branches(toy_weights):
    params = dict(toy_weights.params)
    patch_roi = np.random.default_rng(2).random((48, 48, 3))
    patch_t = patch_roi[12:36, 12:36]
    before = bb.extract(patch_roi, params, bb.TOY), bb.extract(patch_t, params, bb.TOY)
    params["backbone.conv0.b"] = params["backbone.conv0.b"] + 0.3
    after = bb.extract(patch_roi, params, bb.TOY), bb.extract(patch_t, params, bb.TOY)
    assert not np.array_equal(before[0], after[0]) and not np.array_equal(before[1], after[1])


def test_crop_sizes_and_side():
    frame = textured_frame()
    box = BoundingBox(80, 60, 100, 100)
    assert bb.target_side(box) == pytest.approx(132.0)
    assert bb.roi_side(box) == pytest.approx(264.0)
    assert bb.crop_target(frame, box, bb.TOY).shape == (24, 24, 3)
    assert bb.crop_roi(frame, box, bb.TOY).shape == (48, 48, 3)
    assert bb.crop_roi(frame, box, bb.PAPER).shape == (255, 255, 3)
    assert bb.crop_target(frame, box, bb.PAPER).shape == (127, 127, 3)


def test_crop_inside_frame_uses_no_fill():
    frame = np.zeros((100, 100, 3), dtype=np.uint8)
    frame[20:80, 20:80] = 200
    patch = bb.crop_square(frame, (50, 50), 40, 20)
    np.testing.assert_allclose(patch, 200 / 255.0, atol=1e-6)


def test_crop_identity_resample():
    frame = textured_frame(40, 40)
    patch = bb.crop_square(frame, (20.0, 20.0), 16, 16)
    np.testing.assert_allclose(patch, frame[12:28, 12:28] / 255.0, atol=1e-6)


def test_crop_at_corner_fills_mean_color():
    frame = textured_frame(60, 80)
    patch = bb.crop_square(frame, (0.0, 0.0), 40, 40)
    np.testing.assert_allclose(patch[:15, :15], np.broadcast_to(bb.mean_color(frame), (15, 15, 3)), atol=1e-6)


def test_degenerate_box_rejected():
    with pytest.raises(ValueError):
        bb.crop_roi(textured_frame(), BoundingBox(10, 10, 0, 5), bb.TOY)


def test_mask_background():
    roi = np.random.default_rng(0).random((20, 20, 3))
    fill = np.array([0.1, 0.2, 0.3])
    whole = bb.mask_background(roi, BoundingBox(10, 10, 20, 20), fill)
    np.testing.assert_array_equal(whole, np.broadcast_to(fill, roi.shape))
    outside = bb.mask_background(roi, BoundingBox(-50, -50, 10, 10), fill)
    np.testing.assert_array_equal(outside, roi)
    part = bb.mask_background(roi, BoundingBox(10, 10, 6, 4), fill)
    np.testing.assert_array_equal(part[8:12, 7:13], np.broadcast_to(fill, (4, 6, 3)))
    untouched = np.ones((20, 20), bool)
    untouched[8:12, 7:13] = False
    np.testing.assert_array_equal(part[untouched], roi[untouched])


def test_translation_by_one_stride_moves_peak_one_cell(toy_weights):
    cfg = bb.TOY
    img = np.random.default_rng(3).random((80, 80, 3))
    target = bb.extract(img[30:54, 30:54], toy_weights.params, cfg)
    stride = cfg.total_stride
    peaks = []
    for dx in (0, stride):
        roi = img[18:66, 18 + dx : 66 + dx]
        h = ops.xcorr_valid(bb.extract(roi, toy_weights.params, cfg), target)
        peaks.append(np.unravel_index(np.argmax(h), h.shape))
    assert peaks[1] == (peaks[0][0], peaks[0][1] - 1)


def test_weight_round_trip(tmp_path, toy_weights):
    path = tmp_path / "w.npz"
    model.save_weights(toy_weights, path)
    back = model.load_weights(path)
    assert back.spec == toy_weights.spec
    assert set(back.params) == set(toy_weights.params)
    for k, v in toy_weights.params.items():
        np.testing.assert_array_equal(back.params[k], v)


def test_load_rejects_bad_files(tmp_path, toy_weights):
    bad = tmp_path / "bad.npz"
    np.savez(bad, x=np.zeros(2))
    with pytest.raises(ValueError, match="__meta__"):
        model.load_weights(bad)
    params = dict(toy_weights.params)
    params["backbone.conv0.w"] = np.zeros((1, 1, 1, 1))
    model.save_weights(model.Weights(toy_weights.spec, params), bad)
    with pytest.raises(ValueError, match="backbone.conv0.w"):
        model.load_weights(bad)
