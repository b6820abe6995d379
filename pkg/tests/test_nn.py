import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sceneplan.errors import TrainingError
from sceneplan.nn import (
    DenseLayer,
    adam_init,
    adam_step,
    cvae_decode,
    cvae_loss_and_grads,
    cvae_parameters,
    cvae_reconstruction_loss,
    dense,
    gradient_check,
    kl_standard_normal,
    load_model,
    make_cvae,
    mlp_backward,
    mlp_forward,
    reparameterize,
    save_model,
    train_cvae,
)


def tiny_stack(sizes, seed=0, out_activation="identity"):
    rng = np.random.default_rng(seed)
    layers = [dense(a, b, "relu", rng) for a, b in zip(sizes[:-2], sizes[1:-1])]
    layers.append(dense(sizes[-2], sizes[-1], out_activation, rng))
    return layers


# ---------------------------------------------------------------- forward


def test_forward_identity_single_layer():
    layers = [DenseLayer(weights=np.array([[2.0], [1.0]]),
                         bias=np.array([0.5]), activation="identity")]
    y, _ = mlp_forward(layers, np.array([[1.0, 3.0]]))
    assert np.allclose(y, [[2.0 + 3.0 + 0.5]])


def test_forward_relu_clamps_hidden():
    layers = [
        DenseLayer(weights=np.array([[1.0, -1.0]]), bias=np.zeros(2), activation="relu"),
        DenseLayer(weights=np.array([[1.0], [1.0]]), bias=np.zeros(1), activation="identity"),
    ]
    y, _ = mlp_forward(layers, np.array([[2.0]]))
    # hidden = relu([2, -2]) = [2, 0]
    assert np.allclose(y, [[2.0]])


def test_forward_sigmoid_output():
    layers = [DenseLayer(weights=np.array([[1.0]]), bias=np.zeros(1), activation="sigmoid")]
    y, _ = mlp_forward(layers, np.array([[0.0]]))
    assert np.allclose(y, [[0.5]])


def test_forward_squeezes_1d_input():
    layers = tiny_stack([3, 4, 2], seed=1)
    y, _ = mlp_forward(layers, np.zeros(3))
    assert y.shape == (2,)


def test_forward_batched_rows_independent():
    layers = tiny_stack([3, 8, 2], seed=1)
    x = np.random.default_rng(2).normal(size=(5, 3))
    y, _ = mlp_forward(layers, x)
    for i in range(5):
        yi, _ = mlp_forward(layers, x[i:i + 1])
        assert np.allclose(y[i], yi[0], atol=1e-12)


def test_forward_width_mismatch_rejected():
    layers = tiny_stack([3, 4, 2], seed=0)
    with pytest.raises(ValueError):
        mlp_forward(layers, np.zeros((2, 5)))


def test_unknown_activation_rejected():
    layers = [DenseLayer(weights=np.eye(2), bias=np.zeros(2), activation="softplus")]
    with pytest.raises(ValueError):
        mlp_forward(layers, np.zeros((1, 2)))


# ---------------------------------------------------------------- backward


def test_backward_linear_layer_exact():
    layers = [DenseLayer(weights=np.array([[3.0]]), bias=np.zeros(1), activation="identity")]
    x = np.array([[2.0]])
    y, cache = mlp_forward(layers, x)
    grads, dx = mlp_backward(layers, cache, np.ones_like(y))
    assert dx[0, 0] == 3.0        # dy/dx = w
    assert grads[0][0][0, 0] == 2.0  # dy/dw = x
    assert grads[0][1][0] == 1.0     # dy/db = 1


def test_backward_zero_upstream_gives_zero_grads():
    layers = tiny_stack([4, 6, 3], seed=3)
    x = np.random.default_rng(4).normal(size=(7, 4))
    y, cache = mlp_forward(layers, x)
    grads, dx = mlp_backward(layers, cache, np.zeros_like(y))
    assert not dx.any()
    assert all(not dw.any() and not db.any() for dw, db in grads)


def test_backward_shape_mismatch_rejected():
    layers = tiny_stack([2, 3, 2], seed=0)
    _, cache = mlp_forward(layers, np.zeros((4, 2)))
    with pytest.raises(ValueError):
        mlp_backward(layers, cache, np.zeros((4, 3)))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(2, 6)) for _ in range(3)]
    layers = tiny_stack(sizes, seed=seed)
    x = rng.normal(size=(4, sizes[0]))
    target = rng.normal(size=(4, sizes[-1]))
    params = []
    for layer in layers:
        params.extend([layer.weights, layer.bias])

    def loss_and_grads():
        y, cache = mlp_forward(layers, x)
        diff = y - target
        loss = float(np.sum(diff * diff))
        grads, _ = mlp_backward(layers, cache, 2.0 * diff)
        flat = []
        for dw, db in grads:
            flat.extend([dw, db])
        return loss, flat

    err = gradient_check(loss_and_grads, params, np.random.default_rng(seed + 1),
                         n_entries=20)
    assert err < 1e-4


# ---------------------------------------------------------------- KL / reparam


def test_kl_zero_at_standard_normal():
    assert kl_standard_normal(np.zeros((1, 8)), np.zeros((1, 8))) == 0.0


def test_kl_unit_mean_closed_form():
    # per dim: 0.5 * (mu^2 + sigma^2 - 1 - 2 log sigma) = 0.5 at mu=1, sigma=1
    mu = np.ones((1, 32))
    assert kl_standard_normal(mu, np.zeros_like(mu)) == pytest.approx(16.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kl_nonnegative(seed):
    rng = np.random.default_rng(seed)
    mu = rng.normal(size=(3, 5))
    log_sigma = rng.normal(scale=0.5, size=(3, 5))
    assert kl_standard_normal(mu, log_sigma) >= -1e-12


def test_kl_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    mu = rng.normal(size=(2, 4))
    log_sigma = rng.normal(scale=0.3, size=(2, 4))
    # analytic: dKL/dmu = mu, dKL/dlog_sigma = exp(2 ls) - 1
    h = 1e-6
    for arr, grad in ((mu, mu.copy()), (log_sigma, np.exp(2 * log_sigma) - 1.0)):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = arr[i]
            arr[i] = old + h
            up = kl_standard_normal(mu, log_sigma)
            arr[i] = old - h
            dn = kl_standard_normal(mu, log_sigma)
            arr[i] = old
            assert (up - dn) / (2 * h) == pytest.approx(grad[i], abs=1e-5)


def test_reparameterize_zero_noise_returns_mean():
    mu = np.array([[1.5, -2.0]])
    out = reparameterize(mu, np.zeros_like(mu), np.zeros_like(mu))
    assert np.array_equal(out, mu)


def test_reparameterize_scales_by_sigma():
    out = reparameterize(np.array([[1.0, 2.0]]),
                         np.array([[0.0, np.log(2.0)]]),
                         np.array([[1.0, 1.0]]))
    assert np.allclose(out, [[2.0, 4.0]])


# ---------------------------------------------------------------- Adam


def test_adam_zero_gradient_is_noop():
    params = [np.array([1.0, -2.0])]
    state = adam_init(params, learning_rate=1e-2)
    before = [p.copy() for p in params]
    adam_step(params, [np.zeros(2)], state)
    assert np.array_equal(params[0], before[0])


def test_adam_constant_gradient_step_magnitude_approaches_lr():
    params = [np.array([0.0])]
    lr = 1e-3
    state = adam_init(params, learning_rate=lr)
    prev = params[0].copy()
    for _ in range(200):
        prev = params[0].copy()
        adam_step(params, [np.array([4.0])], state)
    assert abs(params[0][0] - prev[0]) == pytest.approx(lr, rel=0.05)


def test_adam_descends_quadratic():
    params = [np.array([1.0])]
    state = adam_init(params, learning_rate=1e-2)
    for _ in range(2000):
        adam_step(params, [2.0 * params[0]], state)
    assert abs(params[0][0]) < 1e-3


def test_adam_shape_mismatch_rejected():
    params = [np.zeros(3)]
    state = adam_init(params)
    with pytest.raises(ValueError):
        adam_step(params, [np.zeros(4)], state)


def test_adam_length_mismatch_rejected():
    params = [np.zeros(3)]
    state = adam_init(params)
    with pytest.raises(ValueError):
        adam_step(params, [np.zeros(3), np.zeros(1)], state)


# ---------------------------------------------------------------- CVAE


def test_cvae_decode_broadcasts_single_condition():
    model = make_cvae(4, 2, d_z=3, hidden=16, seed=0)
    z = np.random.default_rng(0).normal(size=(5, 3))
    out = cvae_decode(model, z, np.array([1.0, -1.0]))
    assert out.shape == (5, 4)


def test_cvae_decode_squeezes_1d():
    model = make_cvae(4, 2, d_z=3, hidden=16, seed=0)
    out = cvae_decode(model, np.zeros(3), np.zeros(2))
    assert out.shape == (4,)


def test_cvae_loss_components_consistent():
    model = make_cvae(4, 2, d_z=3, hidden=16, seed=0)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, 4))
    cond = rng.normal(size=(6, 2))
    eps = rng.normal(size=(6, 3))
    total, recon, kl, grads = cvae_loss_and_grads(model, x, cond, eps, kl_weight=1e-3)
    assert np.isfinite(total)
    assert recon >= 0.0 and kl >= 0.0
    assert total == pytest.approx(recon + 1e-3 * kl, rel=1e-12)
    params = cvae_parameters(model)
    assert len(grads) == len(params)
    assert all(g.shape == p.shape for g, p in zip(grads, params))


def test_train_cvae_fits_constant_target():
    target = np.array([0.3, -0.7, 1.1, 0.0])
    x = np.tile(target, (32, 1))
    cond = np.zeros((32, 2))
    model = make_cvae(4, 2, d_z=3, hidden=16, seed=0)
    model, trace = train_cvae(model, x, cond, epochs=200, batch_size=8,
                              learning_rate=1e-3, seed=0)
    assert isinstance(trace, list) and all(np.isfinite(v) for v in trace)
    assert cvae_reconstruction_loss(model, x, cond) < 1e-2


def test_train_cvae_seeded_trace_reproducible():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(16, 3))
    cond = rng.normal(size=(16, 2))
    traces = []
    for _ in range(2):
        model = make_cvae(3, 2, d_z=2, hidden=8, seed=1)
        _, trace = train_cvae(model, x, cond, epochs=20, seed=7)
        traces.append(trace)
    assert traces[0] == traces[1]


def test_train_cvae_dimension_mismatch_rejected():
    model = make_cvae(4, 2, d_z=3, hidden=16, seed=0)
    with pytest.raises(TrainingError):
        train_cvae(model, np.zeros((8, 5)), np.zeros((8, 2)), epochs=1)


def test_train_cvae_nonfinite_data_rejected():
    model = make_cvae(2, 1, d_z=2, hidden=8, seed=0)
    x = np.zeros((8, 2))
    x[0, 0] = np.nan
    with pytest.raises(TrainingError):
        train_cvae(model, x, np.zeros((8, 1)), epochs=1)


def test_gradient_check_flags_corrupted_gradients():
    model = make_cvae(3, 2, d_z=2, hidden=8, seed=0)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 3))
    cond = rng.normal(size=(4, 2))
    eps = rng.normal(size=(4, 2))
    params = cvae_parameters(model)

    def good():
        total, _, _, grads = cvae_loss_and_grads(model, x, cond, eps, kl_weight=1e-3)
        return total, grads

    def bad():
        total, _, _, grads = cvae_loss_and_grads(model, x, cond, eps, kl_weight=1e-3)
        return total, [2.0 * g for g in grads]

    assert gradient_check(good, params, np.random.default_rng(0)) < 1e-4
    assert gradient_check(bad, params, np.random.default_rng(0)) > 1e-2


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip(tmp_path):
    model = make_cvae(4, 3, d_z=2, hidden=8, seed=5)
    path = tmp_path / "model.json"
    save_model(model, path, kind="pose", extra={"note": 1})
    loaded, kind, extra = load_model(path)
    assert kind == "pose"
    assert extra["note"] == 1
    for a, b in zip(cvae_parameters(model), cvae_parameters(loaded)):
        assert np.array_equal(a, b)
    z = np.random.default_rng(0).normal(size=(3, 2))
    cond = np.random.default_rng(1).normal(size=(3, 3))
    assert np.array_equal(cvae_decode(model, z, cond), cvae_decode(loaded, z, cond))


def test_checkpoint_version_mismatch_rejected(tmp_path):
    import json

    model = make_cvae(2, 1, d_z=2, hidden=4, seed=0)
    path = tmp_path / "model.json"
    save_model(model, path, kind="pose")
    doc = json.loads(path.read_text())
    doc["format_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_model(path)
