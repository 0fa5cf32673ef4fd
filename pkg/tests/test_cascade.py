import numpy as np
import pytest
from numpy.testing import assert_allclose

from dtd_landmarks.core import BoundingBox, GrayImage, normalized_to_landmarks
from dtd_landmarks.errors import ShapeMismatch
from dtd_landmarks.harness.fixtures import constant_weights, layout_prior_weights
from dtd_landmarks.harness.synthetic import BASE_LAYOUT
from dtd_landmarks.landmark_net import CascadeSpec, LandmarkCascade, build_cascade_spec, cascade_predict
from dtd_landmarks.landmark_net.cascade import Level1Net

BOX = BoundingBox(60, 40, 100, 100)


@pytest.fixture(scope="module")
def image():
    return GrayImage(np.random.default_rng(0).uniform(0, 1, size=(200, 240)))


def test_default_architecture(cascade_spec):
    assert list(cascade_spec.level1) == ["F1", "EN1", "NM1"]
    assert cascade_spec.level1["F1"].spec.input_size == (39, 39)
    assert cascade_spec.level1["EN1"].spec.input_size == (31, 39)
    assert cascade_spec.level1["EN1"].landmarks == [0, 1, 2]
    assert cascade_spec.level1["NM1"].landmarks == [2, 3, 4]
    assert [lv.half_size for lv in cascade_spec.refine] == [0.16, 0.09]
    assert len(cascade_spec.network_keys()) == 23
    assert cascade_spec.refine[0].keys_for(0) == ["LE1.0", "LE1.1"]
    assert cascade_spec.refine[1].keys_for(4) == ["RM2.0", "RM2.1"]
    f1 = cascade_spec.level1["F1"].spec
    assert f1.count("conv") == 4 and f1.count("maxpool") == 3 and f1.count("fc") == 2


def test_constant_half_predicts_crop_centres(cascade_spec, image):
    cascade = LandmarkCascade(cascade_spec, constant_weights(cascade_spec, 0.5))
    levels = cascade.predict_levels(image, BOX)
    assert len(levels.levels) == 3
    # F1 sees the whole box, EN1 the top 60 %, NM1 the bottom 60 %
    expected_v = [0.4, 0.4, 0.5, 0.6, 0.6]
    want = np.column_stack([np.full(5, 110.0), 40 + 100 * np.array(expected_v)])
    assert_allclose(levels.levels[0].as_array(), want, atol=1e-9)
    # centred refinement outputs leave every estimate where it is
    for lm in levels.levels[1:]:
        assert_allclose(lm.as_array(), want, atol=1e-9)


def test_layout_prior_reproduces_the_layout(cascade_spec, prior_cascade, image):
    got = prior_cascade.predict(image, BOX).as_array()
    assert_allclose(got, normalized_to_landmarks(BASE_LAYOUT, BOX).as_array(), atol=1e-9)


def test_predictions_are_clamped_to_the_frame(cascade_spec, image):
    cascade = LandmarkCascade(cascade_spec, constant_weights(cascade_spec, 0.5))
    lm = cascade.predict(image, BoundingBox(200, 150, 100, 100)).as_array()
    assert lm[:, 0].max() <= image.width - 1
    assert lm[:, 1].max() <= image.height - 1


def test_missing_weights(cascade_spec, image):
    weights = constant_weights(cascade_spec)
    del weights["NM1"]
    with pytest.raises(ShapeMismatch):
        cascade_predict(image, BOX, cascade_spec, weights)
    with pytest.raises(ShapeMismatch):
        LandmarkCascade(cascade_spec, weights)


def test_every_landmark_needs_two_level1_networks(cascade_spec):
    with pytest.raises(ValueError):
        CascadeSpec(level1={"F1": cascade_spec.level1["F1"]})


def test_crop_band():
    net = build_cascade_spec().level1["NM1"]
    assert isinstance(net, Level1Net)
    assert net.crop(BOX).as_tuple() == pytest.approx((60, 80, 100, 60))


def test_prediction_is_deterministic(prior_cascade, image):
    a = prior_cascade.predict(image, BOX)
    b = prior_cascade.predict(image, BOX)
    assert a == b


def test_layout_prior_weights_cover_every_network(cascade_spec):
    weights = layout_prior_weights(cascade_spec)
    assert sorted(weights) == sorted(cascade_spec.network_keys())
