"""Model-agnostic weighted test-time-augmentation ensembling for 3D CT/PET
lesion segmentation."""

from .augment import AugmentationSet, TransformSpec, default_augmentation_set
from .coeffopt import (
    AlignedPredictions,
    ImprovementTable,
    ValidationCase,
    coordinate_ascent,
    grid_search,
    heuristic_weights,
    measure_improvements,
    project_to_simplex,
)
from .config import PipelineConfig, SplitSpec, split_cases
from .errors import (
    ContractViolation,
    FormatError,
    ParameterError,
    PredictorError,
    PredictorFailure,
    UnsupportedDtypeError,
)
from .fusion import CoefficientVector, PredictionSet, binarize, fuse, tta_predict, tta_predict_soft
from .metrics import EvalReport, connected_components, dice, evaluate, fn_volume, fp_volume
from .nifti import read_fixture, read_nifti, write_fixture, write_nifti
from .predictor import (
    OracleParams,
    PrecomputedPredictor,
    SubprocessPredictor,
    SyntheticOracle,
    predict,
    validate_prediction,
)
from .preprocess import BBox, ScaleWindow, crop, foreground_bbox, scale_intensity, uncrop_mask
from .volume import MaskVolume, Volume3D, geometry_match, mask_from_volume

__version__ = "0.1.0"
