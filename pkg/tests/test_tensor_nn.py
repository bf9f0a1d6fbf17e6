import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conceptbp.tensor_nn import (ComputationGraph, Dense, MissingBindingError, Model,
                                 NumericOverflowError, ReLU, Sigmoid, ShapeError, TrainConfig,
                                 TrainingDivergedError, UnknownTapError, activations_at,
                                 build_model, evaluate, gradient, load_model, model_from_bytes,
                                 model_to_bytes, save_model, train_supervised)
from conceptbp.tensor_nn import autodiff as ad
from conceptbp.tensor_nn.layers import Conv2d, Flatten, Reshape

from randgraph import (central_differences, max_relative_error, naive_conv2d, random_graph,
                       scalar_dense_stack)


def unary_graph(f):
    return ComputationGraph(lambda v: {"y": f(v["x"])}, ("x",))


def test_sigmoid_at_zero():
    out = evaluate(unary_graph(ad.sigmoid), {"x": np.array(0.0)})
    assert out["y"] == 0.5


def test_affine_identity():
    out = evaluate(unary_graph(lambda x: 2.0 * x + 1.0), {"x": np.array(3.0)})
    assert out["y"] == 7.0


def test_power_rule_gradient():
    g = gradient(unary_graph(lambda x: ad.power(x, 2.0)), {"x": np.array(3.0)}, ("x",), "y")
    assert g["x"] == 6.0


def test_sigmoid_gradient_at_zero():
    g = gradient(unary_graph(ad.sigmoid), {"x": np.array(0.0)}, ("x",), "y")
    assert g["x"] == 0.25


def test_relu_subgradient_at_zero_is_zero():
    g = gradient(unary_graph(lambda x: ad.sum(ad.relu(x))), {"x": np.zeros(3)}, ("x",), "y")
    np.testing.assert_array_equal(g["x"], np.zeros(3))


def test_missing_binding():
    with pytest.raises(MissingBindingError):
        evaluate(unary_graph(ad.sigmoid), {})


def test_shape_mismatch():
    g = ComputationGraph(lambda v: {"y": v["a"] @ v["b"]}, ("a", "b"))
    with pytest.raises(ShapeError):
        evaluate(g, {"a": np.ones((2, 3)), "b": np.ones((2, 3))})


def test_non_finite_intermediate_raises():
    with pytest.raises(NumericOverflowError):
        evaluate(unary_graph(lambda x: ad.exp(x)), {"x": np.array(1e4)})
    with pytest.raises(NumericOverflowError):
        evaluate(unary_graph(ad.log), {"x": np.array(0.0)})


def test_gradient_requires_scalar_output():
    with pytest.raises(ShapeError):
        gradient(unary_graph(ad.relu), {"x": np.ones(3)}, ("x",), "y")


def test_gradient_unknown_leaf():
    with pytest.raises(KeyError):
        gradient(unary_graph(ad.sigmoid), {"x": np.array(0.0)}, ("nope",), "y")


def test_random_dense_stack_matches_scalar_interpreter():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(4, 5))
    model = build_model([Dense("d0", 5, 6), ReLU("r0"), Dense("d1", 6, 4), Sigmoid("s1"),
                         Dense("d2", 4, 3)], seed=11)
    out = evaluate(model.graph, {"x": x})["output"]
    layers = [(model.params[f"d{i}.W"], model.params[f"d{i}.b"]) for i in range(3)]
    ref = scalar_dense_stack(x, layers, ["relu", "sigmoid", None])
    assert np.max(np.abs(out - ref)) < 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_random_graph_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    graph, bindings, names = random_graph(rng)
    grads = gradient(graph, bindings, names, "out")
    for name in names:
        x = bindings[name]

        def f():
            return float(evaluate(graph, bindings)["out"])

        fd = central_differences(f, x)
        assert max_relative_error(grads[name], fd) < 1e-4, name


@pytest.mark.parametrize("op", [ad.sigmoid, ad.relu, ad.absolute, lambda t: ad.power(t, 2.0),
                                ad.exp, lambda t: ad.clip(t, -0.5, 0.5)])
def test_elementwise_primitive_gradients(op):
    rng = np.random.default_rng(3)
    x = rng.uniform(0.1, 1.0, size=6) * rng.choice([-1, 1], size=6)
    graph = unary_graph(lambda v: ad.sum(op(v)))
    g = gradient(graph, {"x": x}, ("x",), "y")["x"]
    fd = central_differences(lambda: float(evaluate(graph, {"x": x})["y"]), x)
    assert max_relative_error(g, fd) < 1e-4


@pytest.mark.parametrize("reduce", [ad.l1_norm, ad.l2_norm_sq, ad.l2_norm, ad.mean,
                                    lambda t: ad.sum(ad.sum(t, axis=0) * np.arange(3.0))])
def test_reduction_gradients(reduce):
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 3))
    graph = unary_graph(reduce)
    g = gradient(graph, {"x": x}, ("x",), "y")["x"]
    fd = central_differences(lambda: float(evaluate(graph, {"x": x})["y"]), x)
    assert max_relative_error(g, fd) < 1e-4


def test_l2_norm_subgradient_at_origin():
    g = gradient(unary_graph(ad.l2_norm), {"x": np.zeros(3)}, ("x",), "y")
    np.testing.assert_array_equal(g["x"], np.zeros(3))


def test_broadcast_add_gradient_sums_over_batch():
    graph = ComputationGraph(lambda v: {"y": ad.sum(ad.add(v["a"], v["b"]) * v["c"])}, ("a", "b", "c"))
    rng = np.random.default_rng(0)
    b = {"a": rng.normal(size=(4, 3)), "b": rng.normal(size=(3,)), "c": rng.normal(size=(4, 3))}
    g = gradient(graph, b, ("b",), "y")
    np.testing.assert_allclose(g["b"], b["c"].sum(axis=0), atol=1e-12)


@pytest.mark.parametrize("shape", [(2, 3, 6, 6), (1, 1, 28, 28)])
def test_conv_matches_naive_loops(shape):
    rng = np.random.default_rng(5)
    x = rng.normal(size=shape)
    w = rng.normal(size=(4, shape[1], 3, 3))
    b = rng.normal(size=4)
    out = ad.conv2d(ad.Tensor(x), ad.Tensor(w), ad.Tensor(b)).data
    assert np.max(np.abs(out - naive_conv2d(x, w, b))) < 1e-10


def test_conv_gradient_finite_differences():
    rng = np.random.default_rng(6)
    b = {"x": rng.normal(size=(2, 2, 5, 5)), "w": rng.normal(size=(3, 2, 3, 3)),
         "b": rng.normal(size=3), "m": rng.normal(size=(2, 3, 5, 5))}
    graph = ComputationGraph(lambda v: {"y": ad.sum(ad.conv2d(v["x"], v["w"], v["b"]) * v["m"])},
                             tuple(b))
    grads = gradient(graph, b, ("x", "w", "b"), "y")
    for name in ("x", "w", "b"):
        fd = central_differences(lambda: float(evaluate(graph, b)["y"]), b[name])
        assert max_relative_error(grads[name], fd) < 1e-4


def test_binarize_ste_is_straight_through():
    x = np.array([0.7, 0.2, 0.5, -3.0, 9.0])
    graph = unary_graph(lambda v: ad.sum(ad.binarize_ste(v)))
    np.testing.assert_array_equal(ad.binarize_ste(ad.Tensor(x)).data, [1, 0, 0, 0, 1])
    np.testing.assert_array_equal(gradient(graph, {"x": x}, ("x",), "y")["x"], np.ones(5))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=10))
def test_evaluate_is_pure(values):
    rng = np.random.default_rng(1)
    graph, bindings, _ = random_graph(rng)
    a = evaluate(graph, bindings)
    b = evaluate(graph, bindings)
    assert a["out"].tobytes() == b["out"].tobytes()
    x = np.array(values)
    g = unary_graph(lambda v: ad.sigmoid(v))
    assert evaluate(g, {"x": x})["y"].tobytes() == evaluate(g, {"x": x})["y"].tobytes()


# --- activations_at ------------------------------------------------------


def test_identity_model_input_tap():
    model = Model([], {})
    s = np.array([1.5, -2.0])
    np.testing.assert_array_equal(activations_at(model, "input", s), s)


def test_zero_dense_layer_gives_bias():
    model = build_model([Dense("d", 3, 2)], seed=0)
    model.params["d.W"][:] = 0.0
    model.params["d.b"][:] = [0.5, -1.0]
    np.testing.assert_array_equal(activations_at(model, "d", np.array([1.0, 2.0, 3.0])), [0.5, -1.0])


def test_tap_matches_full_evaluate():
    rng = np.random.default_rng(2)
    model = build_model([Conv2d("c", 1, 2), ReLU("r"), Flatten("f"), Dense("d", 32, 3)], seed=4)
    s = rng.normal(size=(1, 4, 4))
    full = evaluate(model.graph, {"x": s[None]})
    for tap in model.layer_taps:
        np.testing.assert_array_equal(activations_at(model, tap, s), full[tap][0])
    np.testing.assert_array_equal(model.activations(s[None], "r")[0], full["r"][0])


def test_unknown_tap():
    with pytest.raises(UnknownTapError):
        activations_at(Model([], {}), "nope", np.zeros(2))


# --- training ------------------------------------------------------------


def test_linear_regression_recovers_slope():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(100, 1))
    y = 2 * x + 1
    # closed-form least-squares oracle
    A = np.hstack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    model = build_model([Dense("d", 1, 1)], seed=0)
    trained, _ = train_supervised(model, x, y, "mse",
                                  TrainConfig(lr=0.05, batch_size=10, epochs=200, seed=0))
    assert abs(trained.params["d.W"][0, 0] - coef[0, 0]) < 1e-2
    assert abs(trained.params["d.W"][0, 0] - 2.0) < 1e-2


def test_zero_epochs_leaves_params_unchanged():
    model = build_model([Dense("d", 2, 1)], seed=3)
    trained, curve = train_supervised(model, np.ones((4, 2)), np.ones((4, 1)), "mse",
                                      TrainConfig(epochs=0))
    assert curve == []
    for k in model.params:
        np.testing.assert_array_equal(model.params[k], trained.params[k])


def test_training_is_deterministic():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(50, 3)), rng.normal(size=(50, 1))
    cfg = TrainConfig(lr=1e-2, batch_size=8, epochs=5, seed=9)
    runs = [train_supervised(build_model([Dense("a", 3, 4), ReLU("r"), Dense("b", 4, 1)], 2),
                             x, y, "mse", cfg) for _ in range(2)]
    for k in runs[0][0].params:
        assert runs[0][0].params[k].tobytes() == runs[1][0].params[k].tobytes()
    assert runs[0][1] == runs[1][1]


def test_convex_loss_curve_non_increasing():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(64, 3))
    y = x @ np.array([[1.0], [-2.0], [0.5]]) + 0.1
    _, curve = train_supervised(build_model([Dense("d", 3, 1)], 0), x, y, "mse",
                                TrainConfig(lr=0.05, batch_size=64, epochs=50, optimizer="sgd"))
    assert all(b <= a for a, b in zip(curve, curve[1:]))


def test_bce_training_separates_points():
    x = np.array([[1.0, 0.0], [0.0, 1.0]])
    y = np.array([[1.0], [0.0]])
    model = build_model([Dense("d", 2, 1), Sigmoid("s")], 0)
    trained, _ = train_supervised(model, x, y, "bce", TrainConfig(lr=0.1, batch_size=2, epochs=200))
    p = trained.predict(x)
    assert p[0, 0] > 0.9 and p[1, 0] < 0.1


def test_divergence_aborts():
    x = np.array([[1e3]])
    y = np.array([[1.0]])
    model = build_model([Dense("d", 1, 1)], 0)
    with pytest.raises(TrainingDivergedError):
        train_supervised(model, x, y, "mse", TrainConfig(lr=10.0, batch_size=1, epochs=200,
                                                         optimizer="sgd"))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="lbfgs")


# --- serialization -------------------------------------------------------


def test_model_round_trip_bit_exact(tmp_path):
    model = build_model([Reshape("rs", (1, 4, 4)), Conv2d("c", 1, 2), ReLU("r"), Flatten("f"),
                         Dense("d", 32, 3), Sigmoid("s")], seed=5, input_shape=(16,))
    path = tmp_path / "m.bin"
    save_model(model, path)
    loaded = load_model(path)
    assert model_to_bytes(loaded) == path.read_bytes()
    assert loaded.layer_taps == model.layer_taps
    for k in model.params:
        assert loaded.params[k].tobytes() == model.params[k].tobytes()
    x = np.random.default_rng(0).normal(size=(2, 16))
    assert loaded.predict(x).tobytes() == model.predict(x).tobytes()


def test_corrupt_model_blob_rejected():
    raw = model_to_bytes(build_model([Dense("d", 2, 2)], 0))
    with pytest.raises(ValueError):
        model_from_bytes(raw + b"\x00" * 8)
