"""Motion-guided detection of small flying objects in moving-camera video."""

from .align import Homography, estimate_homography, find_homography, warp_with_validity
from .appearance import (
    CentroidDetector, Detection, LinearCropClassifier, PassthroughClassifier, Stage,
    train_linear_classifier,
)
from .config import PipelineConfig, load_config
from .exceptions import (
    BackendError, EstimationError, InvalidInputError, ParseError, UnavailableError,
)
from .imgproc import BinaryMask, BoundingBox, Frame
from .io import (
    load_annotations, load_detections, load_sequence, save_annotations, save_detections,
)
from .metrics import EvalResult, evaluate, measure_fps
from .pipeline import FrameResult, MotionGuidedDetector, Pipeline
from .synth import GroundTruth, SynthConfig, synth_generate
from .track import Tracker

__version__ = "0.1.0"

__all__ = [
    "Homography", "estimate_homography", "find_homography", "warp_with_validity",
    "CentroidDetector", "Detection", "LinearCropClassifier", "PassthroughClassifier", "Stage",
    "train_linear_classifier", "PipelineConfig", "load_config", "BackendError",
    "EstimationError", "InvalidInputError", "ParseError", "UnavailableError", "BinaryMask",
    "BoundingBox", "Frame", "load_annotations", "load_detections", "load_sequence",
    "save_annotations", "save_detections", "EvalResult", "evaluate", "measure_fps",
    "FrameResult", "MotionGuidedDetector", "Pipeline", "GroundTruth", "SynthConfig",
    "synth_generate", "Tracker",
]
