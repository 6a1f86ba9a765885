"""Frequency-split image editing with flow-based multi-view consistency checks."""

from .errors import (ConfigError, DegenerateProblemError, FreqEditError,
                     ImageIOError, MetricError, ShapeError, SolverError)
from .fileio import (read_flow_pfm, read_float_map, read_image, read_pfm,
                     write_flow_pfm, write_float_map, write_image, write_pfm)
from .flow import (ConsistencyReport, ExpansionReport, FlowField, FlowProblem,
                   GridLaplacian, SmoothPairGenerator, SolverConfig,
                   TrialReport, build_problem, consistency_score,
                   grid_laplacian, residual_score, small_mu_expansion,
                   smoothing_consistency_trials, solve_flow)
from .image import (BoundaryMode, Image, LowpassConfig, bilinear_sample,
                    gaussian_kernel, gaussian_lowpass, gradient, resample)
from .metrics import PairScore, sharpness, warped_rmse
from .pipeline import (BlendParams, Decomposition, blend_detail, decompose,
                       enhance_masked, enhance_simple, intensity_mix,
                       mask_recompose)
from .render import (Blob, Camera, FeatureMap, FieldScene, RenderConfig,
                     RenderResult, gt_flow, load_scene_file, make_pair_dataset,
                     orbit_cameras, render, render_views, scene_from_json,
                     scene_to_json)
from .styles import (AffineColor, PaletteShift, StyleOp, ToneCurve,
                     apply_style, commute_error, style_from_json,
                     style_to_json)

__version__ = "0.1.0"
