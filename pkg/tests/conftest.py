import numpy as np
import pytest

from dtd_landmarks.config import FlowConfig, PipelineSettings
from dtd_landmarks.core import GrayImage
from dtd_landmarks.harness.fixtures import layout_prior_weights, synthetic_face_cascade
from dtd_landmarks.harness.synthetic import (SyntheticSceneSpec, generate_synthetic_video, scene_spec,
                                             static_trajectory)
from dtd_landmarks.landmark_net import LandmarkCascade, build_cascade_spec


def smooth_texture(rng: np.random.Generator, height: int, width: int, passes: int = 3) -> np.ndarray:
    """Random texture blurred a few times with a 3x3 box filter, scaled to [0.1, 0.9]."""
    img = rng.uniform(0.0, 1.0, size=(height + 2 * passes, width + 2 * passes))
    for _ in range(passes):
        img = sum(img[dy:dy + img.shape[0] - 2, dx:dx + img.shape[1] - 2]
                  for dy in range(3) for dx in range(3)) / 9.0
    img = (img - img.min()) / (img.max() - img.min())
    return 0.1 + 0.8 * img


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def flow_cfg():
    return FlowConfig()


@pytest.fixture
def settings():
    return PipelineSettings()


@pytest.fixture(scope="session")
def face_model():
    return synthetic_face_cascade()


@pytest.fixture(scope="session")
def cascade_spec():
    return build_cascade_spec()


@pytest.fixture(scope="session")
def prior_cascade(cascade_spec):
    return LandmarkCascade(cascade_spec, layout_prior_weights(cascade_spec))


@pytest.fixture(scope="session")
def static_scene():
    """Ten frames of a still face in a small frame."""
    spec = SyntheticSceneSpec(frame_width=480, frame_height=360, num_frames=10, face_size=80,
                              trajectory=static_trajectory(10, 240, 180), texture_seed=3)
    return generate_synthetic_video(spec)


@pytest.fixture(scope="session")
def moving_scene():
    """Twelve frames of a wandering face, at most 5 px of motion per frame."""
    return generate_synthetic_video(scene_spec(12, seed=7, frame_size=(480, 360), face_size=80))


@pytest.fixture
def textured(rng):
    return GrayImage(smooth_texture(rng, 96, 128))
