import json
import math

import numpy as np
import pytest

from dawn import model, train
from dawn import tracker as trk


def tiny_config(**kw):
    base = dict(iterations=4, n_snippets=2, snippet_length=2)
    base.update(kw)
    return train.TrainConfig(**base)


def test_loss_at_zero_is_ln2():
    assert float(train.heatmap_loss(np.zeros((13, 13)), (6, 6))) == pytest.approx(math.log(2), abs=1e-12)
    assert float(train.heatmap_loss(np.zeros((13, 13)), (0, 12))) == pytest.approx(math.log(2), abs=1e-12)


def test_loss_vanishes_when_saturated():
    pos = train.label_mask(13, (4, 7))
    h = np.where(pos, 50.0, -50.0)
    assert float(train.heatmap_loss(h, (4, 7))) < 1e-20
    assert float(train.heatmap_loss(h, (8, 2))) > 10


def test_label_mask_radius_one():
    m = train.label_mask(5, (2, 2))
    assert m.sum() == 5 and m[2, 2] and m[1, 2] and not m[1, 1]
    assert train.label_mask(5, (0, 0)).sum() == 3


def test_truth_cell_outside_map_rejected():
    with pytest.raises(ValueError):
        train.heatmap_loss(np.zeros((5, 5)), (5, 0))


def test_truth_cell_mapping():
    g = trk.RoiGeometry(50.0, 40.0, 96.0, 48, 2)
    box = trk.BoundingBox(54.0, 36.0, 10, 10)
    assert train.truth_cell(g, box, 13) == (5, 7)


def test_zero_weights_zero_backbone_gradient():
    spec = model.ModelSpec.preset("toy")
    w = model.init_weights(spec, 0)
    w = model.Weights(spec, {k: np.zeros_like(v) for k, v in w.params.items()})
    snip = train.make_snippets(tiny_config())[0]
    _, grads = train.backward(snip, w)
    for k, g in grads.items():
        if train.group_of(k) == "backbone":
            assert np.all(g == 0), k


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_gradient_names_parameter():
    w = model.init_weights(model.ModelSpec.preset("toy"), 0)
    w.params["head.gain"] = np.array([np.nan])
    snip = train.make_snippets(tiny_config())[0]
    with pytest.raises(FloatingPointError, match="parameter"):
        train.backward(snip, w)


def test_zero_lr_keeps_weights_and_flat_trace():
    cfg = tiny_config(lr=0.0, n_snippets=1, dropout=False, jitter_cells=0)
    w0 = model.init_weights(model.ModelSpec.preset("toy"), cfg.init_seed)
    w, trace = train.fit(cfg)
    for k, v in w0.params.items():
        np.testing.assert_array_equal(w.params[k], v)
    assert len(set(trace)) == 1


def test_fit_is_deterministic():
    a, ta = train.fit(tiny_config())
    b, tb = train.fit(tiny_config())
    assert ta == tb
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])


def test_fit_does_not_mutate_given_weights():
    w0 = model.init_weights(model.ModelSpec.preset("toy"), 0)
    before = w0.copy()
    train.fit(tiny_config(), weights=w0)
    for k in w0.params:
        np.testing.assert_array_equal(w0.params[k], before.params[k])


def test_divergence_aborts_with_trace():
    with pytest.raises(train.TrainingDiverged) as info:
        train.fit(tiny_config(divergence_limit=1e-3))
    assert len(info.value.trace) == 1


def test_lr_decay_schedule(monkeypatch):
    seen = []
    orig = train.Adam.update

    def spy(self, params, grads, lr=None):
        seen.append(lr)
        return orig(self, params, grads, lr)

    monkeypatch.setattr(train.Adam, "update", spy)
    train.fit(tiny_config(iterations=5, decay_every=2, lr=1e-3))
    assert seen == pytest.approx([1e-3, 1e-3, 0.98e-3, 0.98e-3, 0.98**2 * 1e-3])


def test_config_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"iterations": 3, "lr": 0.01, "kinds": ["static"]}))
    cfg = train.TrainConfig.from_file(path)
    assert cfg.iterations == 3 and cfg.kinds == ("static",)
    path.write_text(json.dumps({"iters": 3}))
    with pytest.raises(ValueError, match="iters"):
        train.TrainConfig.from_file(path)
    with pytest.raises(ValueError):
        train.TrainConfig(snippet_length=1)


def test_every_parameter_has_a_group():
    w = model.init_weights(model.ModelSpec.preset("toy"), 0)
    groups = {train.group_of(k) for k in w.params}
    assert groups == set(train.PARAM_GROUPS)
