import json
import math

import numpy as np
import pytest

import lff


def small_geometry(mode=lff.Modulation.additive):
    g = lff.DisplayGeometry()
    g.views_u = 3
    g.views_v = 3
    g.mode = mode
    return g


def test_default_geometry():
    g = lff.DisplayGeometry()
    assert g.layer_depths == [-5.0, 0.0, 5.0]
    assert (g.views_u, g.views_v) == (5, 5)
    assert lff.crop_border(g) == 5
    assert g.tangent_u(2) == 0.0
    assert math.isclose(g.tangent_u(4), -g.tangent_u(0))


def test_reconstruct_single_layer_at_zero_depth_is_identity():
    g = small_geometry()
    g.layer_depths = [0.0]
    layer = np.random.default_rng(1).uniform(size=(1, 8, 9))
    lf = lff.reconstruct(layer, g)
    assert lf.shape == (3, 3, 8, 9)
    for b in range(3):
        for a in range(3):
            np.testing.assert_array_equal(lf[b, a], layer[0])


def test_reconstruct_is_linear_in_additive_mode():
    g = small_geometry()
    rng = np.random.default_rng(2)
    x = rng.uniform(size=(3, 10, 10))
    y = rng.uniform(size=(3, 10, 10))
    lhs = lff.reconstruct(2.0 * x + y, g)
    rhs = 2.0 * lff.reconstruct(x, g) + lff.reconstruct(y, g)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_solve_reaches_high_psnr_on_in_model_target():
    g = small_geometry()
    layers = np.random.default_rng(3).uniform(0.0, 1.0 / 3.0, size=(3, 32, 32))
    target = lff.reconstruct(layers, g)
    solved, trace = lff.solve(target, g)
    assert solved.shape == (3, 32, 32)
    assert trace[-1]["iter"] == 100
    assert trace[-1]["psnr_db"] >= 40.0
    losses = [t["loss"] for t in trace]
    assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))
    assert solved.min() >= 0.0 and solved.max() <= 1.0


def test_multiplicative_solve():
    g = small_geometry(lff.Modulation.multiplicative)
    layers = np.random.default_rng(4).uniform(0.3, 1.0, size=(3, 32, 32))
    target = lff.reconstruct(layers, g)
    config = lff.SolveConfig()
    config.iterations = 100
    _, trace = lff.solve(target, g, config)
    assert trace[-1]["psnr_db"] >= 35.0


def test_metrics():
    a = np.full((2, 2, 6, 6), 0.25)
    b = np.full((2, 2, 6, 6), 0.75)
    assert lff.evaluate_psnr(a, a) == 99.0
    assert math.isclose(lff.evaluate_psnr(a, b), 6.0206, abs_tol=1e-4)
    means, cv = lff.layer_uniformity(np.stack([np.full((2, 2), v) for v in (0.6, 0.2, 0.2)]))
    assert np.allclose(means, [0.6, 0.2, 0.2])
    assert math.isclose(cv, 0.5657, abs_tol=1e-4)


def test_validation_errors_raise_value_error():
    g = small_geometry()
    g.layer_depths = [1.0, 0.0]
    with pytest.raises(ValueError):
        g.validate()
    with pytest.raises(ValueError):
        lff.reconstruct(np.zeros((3, 4)), small_geometry())


def test_render_scene_is_deterministic_and_in_range():
    g = small_geometry()
    a = lff.render_scene(5, g, 24, 20)
    b = lff.render_scene(5, g, 24, 20)
    assert a.shape == (3, 3, 24, 20)
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_parameter_count():
    assert lff.network_parameter_count("stacked") == 680899
    assert lff.network_parameter_count("unet", base_channels=8) > 0


def test_cli_pipeline(tmp_path):
    data = tmp_path / "data"
    code, out, err = lff.run_cli(
        ["gen", "--seed", "3", "--scenes", "1", "--height", "32", "--width", "32", "--crop", "16",
         "--crops-per-scale", "1", "--out", str(data)]
    )
    assert code == 0, err
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["sample_count"] == 5

    target = lff.read_lightfield(str(data / "test_lf"))
    assert target.shape == (5, 5, 32, 32)

    code, out, err = lff.run_cli(["solve", "--iters", "10", "--lf", str(data / "test_lf"), "--out", str(tmp_path / "solve")])
    assert code == 0, err
    layers = lff.read_layers(str(tmp_path / "solve"))
    config = lff.SolveConfig()
    config.iterations = 10
    api_layers, _ = lff.solve(target, lff.DisplayGeometry(), config)
    np.testing.assert_array_equal(layers, api_layers.astype(np.float32).astype(np.float64))

    code, out, err = lff.run_cli(
        ["train", "--arch", "stacked", "--epochs", "1", "--base-channels", "4", "--modules", "2",
         "--data", str(data), "--out", str(tmp_path / "train")]
    )
    assert code == 0, err
    predicted = lff.infer(str(tmp_path / "train" / "best"), target)
    assert predicted.shape == (3, 32, 32)
    assert predicted.min() >= 0.0 and predicted.max() <= 1.0

    code, _, err = lff.run_cli(["solve", "--iters", "0", "--lf", str(data / "test_lf"), "--out", str(tmp_path / "bad")])
    assert code == 1
    assert "iterations" in err
