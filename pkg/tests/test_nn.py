"""Classifier core tests: finite-difference gradient oracle, determinism,
no-mutation contracts, and accuracy sanity checks."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedjudge.errors import ConfigError, InputError
from fedjudge.nn import (
    ArchConfig,
    GradTrace,
    LabeledDataset,
    TrainConfig,
    batch_loss,
    compute_gradients,
    evaluate_accuracy,
    init_model,
    observe_gradients,
    params_from_bytes,
    params_to_bytes,
    train,
)


def _random_dataset(rng, n, dim, name="t"):
    return LabeledDataset(rng.normal(size=(n, dim)),
                          rng.integers(0, 2, size=n), name)


# ---------------------------------------------------------------------------
# init_model
# ---------------------------------------------------------------------------

def test_init_model_deterministic():
    arch = ArchConfig(input_dim=4, hidden=(8,))
    np.testing.assert_array_equal(init_model(arch, 7), init_model(arch, 7))


def test_init_model_param_count():
    arch = ArchConfig(input_dim=4, hidden=(8,))
    assert arch.param_count == 4 * 8 + 8 + 8 * 2 + 2  # 58
    assert init_model(arch, 0).size == 58


def test_init_model_seed_sensitivity():
    arch = ArchConfig(input_dim=4, hidden=(8,))
    assert not np.array_equal(init_model(arch, 7), init_model(arch, 8))


def test_init_model_biases_start_at_zero():
    arch = ArchConfig(input_dim=3, hidden=(5,))
    params = init_model(arch, 1)
    # Layout: W1 (15), b1 (5), W2 (10), b2 (2).
    assert np.all(params[15:20] == 0.0)
    assert np.all(params[30:32] == 0.0)


def test_arch_validation():
    with pytest.raises(ConfigError):
        ArchConfig(input_dim=4, hidden=(0,))
    with pytest.raises(ConfigError):
        ArchConfig(input_dim=0)
    with pytest.raises(ConfigError):
        ArchConfig(input_dim=4, n_classes=3)


def test_train_config_validation():
    for bad in (dict(epochs=0), dict(batch_size=0), dict(learning_rate=0.0),
                dict(optimizer="sgd"), dict(loss="hinge")):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


def test_labeled_dataset_validation():
    with pytest.raises(InputError):
        LabeledDataset(np.zeros((0, 3)), np.zeros(0))
    with pytest.raises(InputError):
        LabeledDataset(np.zeros((2, 3)), np.array([0, 2]))
    with pytest.raises(InputError):
        LabeledDataset(np.zeros((2, 3)), np.array([0]))
    with pytest.raises(InputError):
        GradTrace([])


# ---------------------------------------------------------------------------
# compute_gradients
# ---------------------------------------------------------------------------

def test_gradient_zero_at_stationary_point():
    # Zero the output layer: logits are (0, 0) for every input, and a batch
    # holding each feature row under both labels makes that a stationary
    # point of the mean cross-entropy in all parameters.
    arch = ArchConfig(input_dim=3, hidden=(4,))
    params = init_model(arch, 5)
    params[arch.param_count - (4 * 2 + 2):] = 0.0
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 3))
    batch = LabeledDataset(np.vstack([x, x]),
                           np.concatenate([np.zeros(6, int), np.ones(6, int)]))
    g = compute_gradients(arch, params, batch)
    np.testing.assert_allclose(g, 0.0, atol=1e-14)


def test_gradient_matches_finite_differences():
    # Central differences with step 1e-5 on 20 random small models/batches.
    h = 1e-5
    for seed in range(20):
        rng = np.random.default_rng(seed)
        arch = ArchConfig(input_dim=3, hidden=(4,))
        params = init_model(arch, seed) + rng.normal(0, 0.3, arch.param_count)
        batch = _random_dataset(rng, 5, 3)
        g = compute_gradients(arch, params, batch)
        numeric = np.empty_like(g)
        for i in range(params.size):
            bump = np.zeros_like(params)
            bump[i] = h
            numeric[i] = (batch_loss(arch, params + bump, batch)
                          - batch_loss(arch, params - bump, batch)) / (2 * h)
        err = np.max(np.abs(numeric - g)) / np.max(np.abs(g))
        assert err <= 1e-4, f"seed {seed}: finite-difference error {err:.2e}"


def test_gradient_mean_invariance_under_duplication():
    arch = ArchConfig(input_dim=4, hidden=(6,))
    rng = np.random.default_rng(3)
    params = init_model(arch, 3)
    batch = _random_dataset(rng, 7, 4)
    doubled = LabeledDataset(np.vstack([batch.features, batch.features]),
                             np.concatenate([batch.labels, batch.labels]))
    np.testing.assert_allclose(compute_gradients(arch, params, batch),
                               compute_gradients(arch, params, doubled),
                               rtol=1e-12, atol=1e-15)


def test_gradient_dimension_mismatch():
    arch = ArchConfig(input_dim=4, hidden=(6,))
    params = init_model(arch, 0)
    rng = np.random.default_rng(0)
    with pytest.raises(InputError):
        compute_gradients(arch, params, _random_dataset(rng, 5, 3))
    with pytest.raises(InputError):
        compute_gradients(arch, params[:-1], _random_dataset(rng, 5, 4))


# ---------------------------------------------------------------------------
# train / observe_gradients
# ---------------------------------------------------------------------------

def test_train_single_batch_trace():
    arch = ArchConfig(input_dim=3, hidden=(4,))
    rng = np.random.default_rng(1)
    data = _random_dataset(rng, 9, 3)
    _, trace = train(arch, init_model(arch, 1), data,
                     TrainConfig(epochs=1, batch_size=9))
    assert len(trace) == 1


def test_train_trace_count_with_partial_batch():
    arch = ArchConfig(input_dim=3, hidden=(4,))
    rng = np.random.default_rng(2)
    data = _random_dataset(rng, 10, 3)
    _, trace = train(arch, init_model(arch, 2), data,
                     TrainConfig(epochs=2, batch_size=3))
    assert len(trace) == 8  # ceil(10/3) = 4 per epoch


def test_train_deterministic():
    arch = ArchConfig(input_dim=3, hidden=(4,))
    rng = np.random.default_rng(4)
    data = _random_dataset(rng, 12, 3)
    cfg = TrainConfig(epochs=3, batch_size=5, learning_rate=1e-3, seed=11)
    p0 = init_model(arch, 4)
    out1, tr1 = train(arch, p0, data, cfg)
    out2, tr2 = train(arch, p0, data, cfg)
    np.testing.assert_array_equal(out1, out2)
    for a, b in zip(tr1, tr2):
        np.testing.assert_array_equal(a, b)


def test_train_does_not_mutate_input_params():
    arch = ArchConfig(input_dim=3, hidden=(4,))
    rng = np.random.default_rng(5)
    data = _random_dataset(rng, 8, 3)
    p0 = init_model(arch, 5)
    before = p0.copy()
    out, _ = train(arch, p0, data, TrainConfig(epochs=2, batch_size=4))
    np.testing.assert_array_equal(p0, before)
    assert not np.array_equal(out, before)


def test_observe_never_mutates_model():
    arch = ArchConfig(input_dim=3, hidden=(4,))
    rng = np.random.default_rng(6)
    data = _random_dataset(rng, 10, 3)
    params = init_model(arch, 6)
    before = params.tobytes()
    observe_gradients(arch, params, data, batch_size=3, seed=0)
    assert params.tobytes() == before


def test_observe_full_batch_equals_compute_gradients():
    arch = ArchConfig(input_dim=4, hidden=(5,))
    rng = np.random.default_rng(7)
    data = _random_dataset(rng, 11, 4)
    params = init_model(arch, 7)
    trace = observe_gradients(arch, params, data, batch_size=11, seed=3)
    assert len(trace) == 1
    np.testing.assert_allclose(trace.per_batch[0],
                               compute_gradients(arch, params, data),
                               rtol=1e-12, atol=1e-15)


def test_observe_first_entry_matches_train():
    # Before any update has been applied the two schedules see the same batch.
    arch = ArchConfig(input_dim=3, hidden=(4,))
    rng = np.random.default_rng(8)
    data = _random_dataset(rng, 10, 3)
    params = init_model(arch, 8)
    cfg = TrainConfig(epochs=1, batch_size=4, seed=21)
    _, train_trace = train(arch, params, data, cfg)
    observe_trace = observe_gradients(arch, params, data, batch_size=4, seed=21)
    np.testing.assert_array_equal(observe_trace.per_batch[0],
                                  train_trace.per_batch[0])


def test_observe_rejects_bad_batch_size():
    arch = ArchConfig(input_dim=3, hidden=(4,))
    rng = np.random.default_rng(9)
    with pytest.raises(InputError):
        observe_gradients(arch, init_model(arch, 9),
                          _random_dataset(rng, 6, 3), batch_size=0, seed=0)


@given(st.integers(1, 40), st.integers(1, 12), st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_trace_length_is_epochs_times_batches(n, batch_size, epochs):
    arch = ArchConfig(input_dim=2, hidden=(3,))
    rng = np.random.default_rng(n * 100 + batch_size)
    data = _random_dataset(rng, n, 2)
    _, trace = train(arch, init_model(arch, 0), data,
                     TrainConfig(epochs=epochs, batch_size=batch_size))
    assert len(trace) == epochs * -(-n // batch_size)
    assert all(g.size == arch.param_count for g in trace)


# ---------------------------------------------------------------------------
# evaluate_accuracy
# ---------------------------------------------------------------------------

def test_accuracy_constant_prediction():
    # All-zero parameters tie the logits, and ties go to class 0.
    arch = ArchConfig(input_dim=3, hidden=(4,))
    params = np.zeros(arch.param_count)
    x = np.random.default_rng(0).normal(size=(20, 3))
    all_zero = LabeledDataset(x, np.zeros(20, int))
    all_one = LabeledDataset(x, np.ones(20, int))
    assert evaluate_accuracy(arch, params, all_zero) == 1.0
    assert evaluate_accuracy(arch, params, all_one) == 0.0


def test_accuracy_random_model_near_half():
    # Labels independent of features: any fixed classifier scores about 0.5.
    arch = ArchConfig(input_dim=6, hidden=(8,))
    for seed in range(10):
        rng = np.random.default_rng(seed)
        data = LabeledDataset(rng.normal(size=(1000, 6)),
                              np.repeat([0, 1], 500))
        acc = evaluate_accuracy(arch, init_model(arch, seed), data)
        assert 0.4 <= acc <= 0.6, f"seed {seed}: accuracy {acc}"


def test_training_improves_separable_task():
    # Two well-separated Gaussian blobs: training should beat chance easily.
    arch = ArchConfig(input_dim=2, hidden=(8,))
    rng = np.random.default_rng(13)
    n = 120
    x = np.vstack([rng.normal(-2.0, 1.0, size=(n, 2)),
                   rng.normal(2.0, 1.0, size=(n, 2))])
    data = LabeledDataset(x, np.repeat([0, 1], n))
    cfg = TrainConfig(epochs=20, batch_size=8, learning_rate=1e-2, seed=0)
    params, _ = train(arch, init_model(arch, 0), data, cfg)
    assert evaluate_accuracy(arch, params, data) >= 0.95


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_params_bytes_roundtrip():
    params = np.random.default_rng(12).normal(size=17)
    blob = params_to_bytes(params)
    assert int.from_bytes(blob[:8], "little") == 17
    np.testing.assert_array_equal(params_from_bytes(blob), params)


def test_params_bytes_layout_is_little_endian_f8():
    blob = params_to_bytes(np.array([1.0, -2.5]))
    assert blob[8:] == np.array([1.0, -2.5]).astype("<f8").tobytes()


def test_params_from_bytes_rejects_corrupt_blobs():
    with pytest.raises(InputError):
        params_from_bytes(b"\x01")
    good = params_to_bytes(np.zeros(3))
    with pytest.raises(InputError):
        params_from_bytes(good[:-4])
