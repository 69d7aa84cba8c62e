"""Temporally consistent alignment of robot frames from shared object maps."""

from .clipper import ClipperParams, ClipperProblem, ClipperSolution, PutativeAssociation
from .filter import FilterParams, KalmanModel, Mode, TcaffFilter
from .geometry import Gaussian3, Pose2, compose, gt_alignment, inverse, wrap_angle
from .object_map import MapParams, ObjectLandmark, ObjectMap
from .registration import AlignmentMeasurement, MnoParams, mno_clipper, weighted_arun_2d

__version__ = "0.1.0"

__all__ = [
    "AlignmentMeasurement",
    "ClipperParams",
    "ClipperProblem",
    "ClipperSolution",
    "FilterParams",
    "Gaussian3",
    "KalmanModel",
    "MapParams",
    "MnoParams",
    "Mode",
    "ObjectLandmark",
    "ObjectMap",
    "Pose2",
    "PutativeAssociation",
    "TcaffFilter",
    "compose",
    "gt_alignment",
    "inverse",
    "mno_clipper",
    "weighted_arun_2d",
    "wrap_angle",
]
