"""Ready-made models for the synthetic faces: a hand-built face cascade and rigged network weights."""
from typing import Dict, Optional

import numpy as np

from ..face_detector import CascadeModel, HaarRect, Stage, WeakClassifier
from ..landmark_net.cascade import CascadeSpec, build_cascade_spec
from ..landmark_net.network import NetworkWeights, zero_weights
from .synthetic import BASE_LAYOUT


def _weak(rects, split: float) -> WeakClassifier:
    return WeakClassifier(rects=[HaarRect(x=x, y=y, w=w, h=h, weight=wt) for x, y, w, h, wt in rects],
                          split=split, left=0.0, right=1.0)


def _stage(*weaks: WeakClassifier) -> Stage:
    # every weak classifier must vote
    return Stage(threshold=len(weaks) - 0.5, weak=list(weaks))


EYE_BAND = (5, 8, 14, 3)
MOUTH = (8, 17, 8, 3)


def synthetic_face_cascade(split: float = 0.03, min_window_std: float = 0.1) -> CascadeModel:
    """Three-stage, 24 px cascade tuned to the synthetic face layout."""
    return CascadeModel(base_window=24, min_window_std=min_window_std, stages=[
        _stage(
            # eyes darker than the cheeks below and the forehead above
            _weak([(*EYE_BAND, -1.0), (5, 11, 14, 3, 1.0)], split),
            _weak([(*EYE_BAND, -1.0), (5, 5, 14, 3, 1.0)], split),
        ),
        _stage(
            _weak([(5, 8, 4, 3, -1.0), (10, 8, 4, 3, 2.0), (15, 8, 4, 3, -1.0)], split),
            _weak([(*MOUTH, -1.0), (8, 14, 8, 3, 1.0)], split),
        ),
        _stage(
            _weak([(*MOUTH, -1.0), (8, 20, 8, 3, 1.0)], split),
            _weak([(4, 17, 4, 3, 1.0), (*MOUTH, -1.0), (16, 17, 4, 3, 1.0)], split),
        ),
    ])


def default_cascade_spec() -> CascadeSpec:
    return build_cascade_spec()


def toy_cascade_spec() -> CascadeSpec:
    """Same topology with narrow layers, small enough to train on a CPU in minutes."""
    return build_cascade_spec(level1_channels=(4, 8, 8, 8), level1_hidden=32, refine_channels=(4, 8, 8))


def _final_bias_key(weights: NetworkWeights) -> str:
    return list(weights.params)[-1]


def layout_prior_weights(cascade: Optional[CascadeSpec] = None,
                         layout: np.ndarray = BASE_LAYOUT) -> Dict[str, NetworkWeights]:
    """Weights whose output is the face layout in every crop, whatever the input.

    Every parameter is zero except the final bias: level-1 networks emit the
    layout expressed in their crop band, refinement networks the patch centre.
    """
    cascade = cascade or default_cascade_spec()
    out: Dict[str, NetworkWeights] = {}
    for key, net in cascade.level1.items():
        w = zero_weights(net.spec)
        pts = layout[net.landmarks].copy()
        pts[:, 1] = (pts[:, 1] - net.crop_top) / (net.crop_bottom - net.crop_top)
        w.params[_final_bias_key(w)][:] = pts.ravel()
        out[key] = w
    for level in cascade.refine:
        for key, spec in level.networks.items():
            w = zero_weights(spec)
            w.params[_final_bias_key(w)][:] = 0.5
            out[key] = w
    return out


def constant_weights(cascade: Optional[CascadeSpec] = None, value: float = 0.5) -> Dict[str, NetworkWeights]:
    """Every network outputs `value` for every coordinate."""
    cascade = cascade or default_cascade_spec()
    out: Dict[str, NetworkWeights] = {}
    for key in cascade.network_keys():
        w = zero_weights(cascade.spec_for(key))
        w.params[_final_bias_key(w)][:] = value
        out[key] = w
    return out
