"""tactiforce: vision-based tactile force estimation and teleoperation.

A synthetic gel tactile sensor renders RGB frames of indenter presses; a
small MLP recovers per-pixel surface normals; a DST-based fast Poisson
solver integrates them into a depth map; a cubic calibration curve maps peak
depth to contact force.  The estimated force closes a bilateral
position-force teleoperation loop, and a WebSocket pub/sub bus streams
telemetry to operator consoles.
"""

from .calibration import CalibSample, PolyCurve, eval_force, fit_poly3, run_calibration
from .dataset import make_calib_dataset
from .fields import DepthMap, GradientField, NormalMap, TactileFrame, read_tfr, write_tfr
from .gel import (
    CylinderCurved,
    CylinderFlat,
    GelConfig,
    HertzParams,
    Indenter,
    LightingModel,
    Sphere,
    default_lighting,
    indent_depth,
    normals_from_depth,
    render,
    truth_force,
)
from .mlp import (
    MlpParams,
    TrainConfig,
    TrainingSet,
    load_checkpoint,
    predict_normal_map,
    save_checkpoint,
    train,
)
from .pipeline import ForcePipeline, ForceRecord, force_stream
from .poisson import depth_from_normals, max_depth, solve_poisson
from .teleop import (
    Scenario,
    TelemetryLog,
    TeleopModels,
    TeleopState,
    region_metrics,
    run_scenario,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "CalibSample", "PolyCurve", "eval_force", "fit_poly3", "run_calibration",
    "make_calib_dataset",
    "DepthMap", "GradientField", "NormalMap", "TactileFrame", "read_tfr", "write_tfr",
    "CylinderCurved", "CylinderFlat", "GelConfig", "HertzParams", "Indenter",
    "LightingModel", "Sphere", "default_lighting", "indent_depth",
    "normals_from_depth", "render", "truth_force",
    "MlpParams", "TrainConfig", "TrainingSet", "load_checkpoint",
    "predict_normal_map", "save_checkpoint", "train",
    "ForcePipeline", "ForceRecord", "force_stream",
    "depth_from_normals", "max_depth", "solve_poisson",
    "Scenario", "TelemetryLog", "TeleopModels", "TeleopState",
    "region_metrics", "run_scenario", "step",
    "__version__",
]
