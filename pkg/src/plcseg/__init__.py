"""Unsupervised power-line extraction, segmentation, and corridor hazard
analysis from raw xyz point clouds."""

from .cloud import (FORMAT_ASCII, FORMAT_BINARY, KdIndex, PointCloud,
                    build_index, read_cloud, write_cloud)
from .config import PipelineConfig
from .corridor import (CorridorParams, CorridorReport, extract_corridor,
                       select_radius)
from .catenary import (CatenaryModel, QuadraticModel, SagReport, assess_sag,
                       fit_catenary, fit_quadratic_msac)
from .elevation import ElevationFilterParams, ElevationReport, filter_high_elevation
from .errors import (CatenaryFitError, ConfigError, DegenerateSampleError,
                     NoCandidatesError, NoSegmentsError, OrientationError,
                     ParseError, PlcsegError)
from .features import (CandidateParams, EigenFeatures, RegularizationTransform,
                       apply_transform, covariance, eigen_features,
                       estimate_regularization, remove_statistical_outliers,
                       select_candidates)
from .pipeline import PipelineReport, build_report, execute, run_pipeline
from .segmentation import (ClusterLabels, DbscanParams, PowerLineSegment,
                           dbscan, segment_power_lines)
from .synthgen import SceneSpec, TreeSpec, generate, three_by_two_scene
from .tuner import ParamGrid, TuneResult, tune

__version__ = "0.1.0"
