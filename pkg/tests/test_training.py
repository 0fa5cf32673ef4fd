import numpy as np
import pytest

from dtd_landmarks.core import landmarks_to_normalized
from dtd_landmarks.errors import EmptyDataset, ShapeMismatch
from dtd_landmarks.harness.fixtures import toy_cascade_spec
from dtd_landmarks.harness.synthetic import synthetic_training_samples
from dtd_landmarks.landmark_net import LandmarkCascade, TrainingHyper, init_weights, sgd_train, train_cascade
from dtd_landmarks.landmark_net.network import ConvLayer, FCLayer, NetworkSpec, PoolLayer, ReluLayer
from dtd_landmarks.landmark_net.training import level1_dataset, refine_dataset


def conv_spec():
    return NetworkSpec(name="toy", input_size=(8, 8), output_dim=2, layers=[
        ConvLayer(out_channels=3, kernel_h=3, kernel_w=3), ReluLayer(), PoolLayer(), FCLayer(out_units=2)])


def linear_spec():
    return NetworkSpec(name="linear", input_size=(6, 6), output_dim=2, layers=[FCLayer(out_units=2)])


def test_zero_learning_rate_keeps_weights(rng):
    spec = conv_spec()
    weights = init_weights(spec, rng)
    x, t = rng.normal(size=(20, 1, 8, 8)), rng.normal(size=(20, 2))
    result = sgd_train(spec, weights, x, t, TrainingHyper(learning_rate=0.0, epochs=3, batch_size=4))
    assert result.weights == weights
    assert result.weights is not weights
    assert len(result.history) == 4
    assert len(set(result.history)) == 1


def test_training_is_seeded(rng):
    spec = conv_spec()
    weights = init_weights(spec, rng)
    x, t = rng.normal(size=(30, 1, 8, 8)), rng.normal(size=(30, 2))
    hyper = TrainingHyper(learning_rate=0.01, epochs=2, batch_size=7, seed=11)
    a = sgd_train(spec, weights, x, t, hyper)
    b = sgd_train(spec, weights, x, t, hyper)
    assert a.weights == b.weights
    assert a.history == b.history


def test_single_sample_converges(rng):
    spec = conv_spec()
    x, t = rng.normal(size=(1, 1, 8, 8)), np.array([[0.3, 0.7]])
    result = sgd_train(spec, init_weights(spec, rng), x, t,
                       TrainingHyper(learning_rate=0.01, epochs=300, batch_size=1))
    assert result.history[-1] < 1e-3 * result.history[0]


def test_linear_fit_drops_loss_tenfold(rng):
    spec = linear_spec()
    true_w = rng.normal(scale=0.2, size=(2, 36))
    x = rng.normal(size=(500, 1, 6, 6))
    t = x.reshape(500, -1) @ true_w.T + 0.5
    result = sgd_train(spec, init_weights(spec, rng), x, t,
                       TrainingHyper(learning_rate=0.02, epochs=15, batch_size=32))
    assert result.history[-1] < 0.1 * result.history[0]


def test_bad_inputs(rng):
    spec = conv_spec()
    weights = init_weights(spec, rng)
    with pytest.raises(EmptyDataset):
        sgd_train(spec, weights, np.zeros((0, 1, 8, 8)), np.zeros((0, 2)), TrainingHyper())
    with pytest.raises(ShapeMismatch):
        sgd_train(spec, weights, np.zeros((4, 1, 8, 8)), np.zeros((4, 3)), TrainingHyper())
    with pytest.raises(EmptyDataset):
        train_cascade([], toy_cascade_spec(), TrainingHyper())


def test_datasets_target_the_true_landmarks(rng):
    samples = synthetic_training_samples(4, seed=2)
    spec = toy_cascade_spec()
    inputs, targets = level1_dataset(samples, spec.level1["F1"], rng, box_jitter=0.0)
    assert inputs.shape == (4, 1, 39, 39)
    np.testing.assert_allclose(targets[0].reshape(5, 2),
                               landmarks_to_normalized(samples[0].landmarks, samples[0].box))
    inputs, targets = refine_dataset(samples, 2, 0.16, (15, 15), rng, shift_fraction=0.0)
    assert inputs.shape == (4, 1, 15, 15)
    np.testing.assert_allclose(targets, 0.5)


@pytest.mark.slow
def test_toy_cascade_learns_synthetic_faces():
    spec = toy_cascade_spec()
    train = synthetic_training_samples(500, seed=1)
    trained = train_cascade(train, spec, TrainingHyper(epochs=10, learning_rate=0.01, seed=3), augment=False)
    histories = trained.histories.values()
    assert all(h[-1] < h[0] for h in histories)
    # summed over the cascade, loss falls at least tenfold from initialisation
    assert sum(h[-1] for h in histories) <= 0.1 * sum(h[0] for h in histories)

    cascade = LandmarkCascade(spec, trained.weights)
    errors = []
    for s in synthetic_training_samples(100, seed=99):
        pred = cascade.predict(s.image, s.box).as_array()
        errors.append(np.linalg.norm(pred - s.landmarks.as_array(), axis=1).mean() / s.box.short_side)
    assert np.mean(errors) <= 0.05
