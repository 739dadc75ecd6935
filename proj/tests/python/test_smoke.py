import numpy as np
import pytest

import demlearn


def test_prox_grad_matches_finite_differences():
    spec = demlearn.ModelSpec.logistic(4, 3)
    rng = np.random.default_rng(0)
    w = rng.normal(size=spec.param_count)
    x = rng.uniform(size=(6, 4))
    y = [0, 1, 2, 0, 1, 2]
    anchor = rng.normal(size=spec.param_count)
    g = demlearn.prox_grad(spec, w, x, y, [(anchor, 0.5)], 0.3)

    def objective(v):
        return demlearn.loss(spec, v, x, y) + 0.15 * 0.5 * np.sum((v - anchor) ** 2)

    h = 1e-5
    fd = np.array([(objective(w + h * e) - objective(w - h * e)) / (2 * h) for e in np.eye(len(w))])
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-6


def test_upgma_line_fixture():
    pts = np.array([0.0, 1.0, 3.0, 7.0])
    d = np.abs(pts[:, None] - pts[None, :])
    merges = demlearn.agglomerate(d)
    assert [m[:2] for m in merges] == [(0, 1), (2, 4), (3, 5)]
    assert [m[2] for m in merges] == pytest.approx([1.0, 2.5, 17.0 / 3.0], abs=1e-12)
    groups = demlearn.truncate(d, 2)
    assert groups[-1] == [0, 0, 0, 0]


def test_predict_shapes():
    x, y = demlearn.synthetic_dataset(3, 5, 10, 3.0, 7)
    assert x.shape == (30, 5)
    assert len(y) == 30
    spec = demlearn.ModelSpec.mlp(5, 8, 3)
    w = demlearn.init_params(spec, 1)
    assert len(demlearn.predict(spec, w, x)) == 30


def test_simulate_is_deterministic():
    settings = {
        "run.rounds": 3,
        "data.clients": 8,
        "data.samples_per_client": 20,
        "data.synthetic.samples_per_class": 40,
        "data.synthetic.input_dim": 10,
        "run.lr": 0.1,
        "run.threads": 1,
    }
    a = demlearn.simulate(settings)
    b = demlearn.simulate(settings)
    assert len(a) == 3
    assert a == b
    assert 0.0 <= a[-1]["c_gen"] <= 1.0
    assert len(a[-1]["g_spe"]) == 3


def test_bad_settings_raise():
    with pytest.raises(demlearn.ConfigError):
        demlearn.simulate({"run.colour": "blue"})
    with pytest.raises(demlearn.ConfigError):
        demlearn.simulate({"run.algorithm": "demlearn", "run.mu": 0.1})
