import numpy as np
import pytest

import poisonbench as pb


def test_fit_recovers_a_noiseless_line():
    x = np.linspace(0, 1, 20).reshape(-1, 1)
    y = 0.5 * x[:, 0] + 0.25
    model = pb.fit(x, y)
    assert model.weights[0] == pytest.approx(0.5)
    assert model.bias == pytest.approx(0.25)
    assert pb.mse(x, y, model) < 1e-20
    assert np.allclose(model.predict(x), y)


def test_beta_and_complexity():
    assert pb.compute_beta(0.2, 6) == 38
    assert pb.compute_beta(0.2, 2) == 12
    est = pb.estimate_complexity(0.2, 6, 1e-5, 300, 1e9)
    assert est["beta"] == 38
    assert est["p_u"] >= 1 - 1e-5
    assert pb.retained_count(0.2, 125) == 100


def test_synthetic_and_split():
    x, y = pb.generate_synthetic(3, 90, 0.1, seed=4)
    assert x.shape == (90, 3)
    assert 0.0 <= x.min() and x.max() <= 1.0
    (xt, yt), (xv, yv), (xs, ys) = pb.split_three(x, y, seed=1)
    assert len(yt) + len(yv) + len(ys) == 90


def test_attack_then_defend():
    x, y = pb.generate_synthetic(2, 90, 0.1, seed=2)
    (xt, yt), _, _ = pb.split_three(x, y, seed=2)
    clean = pb.fit(xt, yt)
    ref = pb.loss(xt, yt, clean, regularized=False)

    nopt = pb.nopt_attack(xt, yt, alpha=0.2, max_iters=20, seed=3)
    px, py = nopt["poison_x"], nopt["poison_y"]
    assert px.shape[0] == py.shape[0] > 0
    assert 0.0 <= px.min() and px.max() <= 1.0
    trace = nopt["objective_trace"]
    assert trace[-1] >= trace[0]
    assert pb.dispersion_objective(xt, yt, px, py, nopt["model"], ref) == pytest.approx(trace[-1])

    mx = np.vstack([xt, px])
    my = np.concatenate([yt, py])
    poisoned = pb.fit(mx, my)
    for result in (pb.proda_defend(mx, my, seed=1), pb.trim_defend(mx, my, seed=1)):
        assert len(result["subset_indices"]) == pb.retained_count(0.2, len(my))
        assert pb.mse(xt, yt, result["model"]) <= pb.mse(xt, yt, poisoned)

    opt = pb.opt_attack(xt, yt, alpha=0.2, max_iters=5, seed=3)
    assert opt["poison_x"].shape == px.shape


def test_errors_map_to_python_exceptions():
    with pytest.raises(pb.DefenseError):
        pb.compute_beta(0.2, 0)
    with pytest.raises(ValueError):
        pb.fit(np.zeros((3, 1)), np.zeros(4))
