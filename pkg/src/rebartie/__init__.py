"""Rebar-node detection and tying-pose sampling over point clouds.

The pipeline isolates a rebar mat from a cluttered scene cloud with
density clustering, finds bar crossings with an orthogonality filter,
orders them in a PCA-derived mat frame, and predicts one tying pose per
node; an annealed Langevin sampler on SE(3) with pluggable score fields
provides the pose-sampling machinery. A deterministic scene generator
and pose/success metrics round out the toolkit.
"""

from .errors import (AllZeroCounts, AmbiguousAxis, ConfigError, DegenerateAxis,
                     DegenerateCloud, EmptyCloud, EmptyCrop, EmptyReference,
                     NearPiRotation, NegativeGamma, NoCandidateNode, NoClusters,
                     NoNodesFound, NonFiniteScore, NonPositiveDt,
                     PipelineStageError, RebartieError, ShapeMismatch,
                     SpecInvalid)
from .geometry import (Pose, angular_distance, apply_pose, compose, exp_se3,
                       inverse, log_se3, pose_distance, pose_from_dict,
                       pose_to_dict, quat_canonical, quat_conjugate,
                       quat_from_axis_angle, quat_from_matrix, quat_identity,
                       quat_multiply, quat_rotate, quat_to_matrix,
                       sample_wiener, translational_distance)
from .scenes import (GroundTruth, PointCloud, RebarGridSpec, SceneSpec,
                     add_gaussian_noise, apply_rigid_transform, generate_bar,
                     generate_scene, make_tool_template)
from .clustering import (ClusterLabeling, DbscanParams, cluster_points, dbscan,
                         extract_reference_cloud, select_rebar_cluster)
from .extraction import (NodeSet, OrthoFilterParams, extract_nodes,
                         orthogonal_feature_mask)
from .ordering import (Frame, OrderedNodes, PcaResult, build_frame,
                       order_nodes, pca, quantized_lex_order, refine_frame)
from .sampling import (AnalyticGaussianScore, AnnealSchedule, SamplerConfig,
                       analytic_gaussian_score, anneal_sample, diffuse_forward,
                       langevin_step, predict_tying_pose)
from .metrics import (EvalConfig, EvalReport, MatchResult, evaluate_demos,
                      node_detection_rate, prediction_error, success_rate,
                      sweep_thresholds)
from .pipeline import (PipelineConfig, PipelineResult, demo_conditions,
                       evaluate_detection, evaluate_run, order_from_rebar,
                       pre_detect, result_to_dict, run_batch, run_pipeline,
                       run_scene)

__version__ = "0.1.0"
