"""Acoustic beamforming: DAS, DAMAS, DAMAS-FISTA and an unrolled DAMAS-FISTA network."""

from .errors import DegenerateGeometryError, FormatError, NumericalError, ParameterError
from .scene import ArrayGeometry, MultichannelRecord, Scene, SourceSpec, make_spiral_array, synthesize
from .spectra import Csm, csm, csm_from_record, frame_and_transform
from .steering import ScanGrid, SteeringSet, build_steering, make_grid
from .solvers import PowerMap, damas_fista, damas_gauss_seidel, das
from .net import NetParams, forward, init_params, predict
from .train import SceneTemplate, TrainConfig, make_dataset, train_loop
from .metrics import EvalReport, location_bias, renyi_entropy

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry", "Csm", "DegenerateGeometryError", "EvalReport", "FormatError", "MultichannelRecord",
    "NetParams", "NumericalError", "ParameterError", "PowerMap", "ScanGrid", "Scene", "SceneTemplate",
    "SourceSpec", "SteeringSet", "TrainConfig", "build_steering", "csm", "csm_from_record", "damas_fista",
    "damas_gauss_seidel", "das", "forward", "frame_and_transform", "init_params", "location_bias",
    "make_dataset", "make_grid", "make_spiral_array", "predict", "renyi_entropy", "synthesize", "train_loop",
]
