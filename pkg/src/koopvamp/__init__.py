"""Variational estimation of finite-rank Koopman models from time series."""

from .basis import BasisSpec, eval_indicator, eval_rbf, featurize, indicator_grid, kmeans_centers, uniform_rbf
from .covariance import CovarianceTriple, estimate_covariances
from .crossval import CvReport, HyperParamPoint, cross_validate
from .nonlinear import GoldenSectionConfig, golden_section_max, nonlinear_tcca, optimize_w
from .scores import (ScoreSpec, exact_vamp_e, hs_error_vs_oracle, score, subspace_vamp_r, vamp_e, vamp_r,
                     vamp_r_matrix)
from .systems import (TruthModel, build_double_gyre_truth, build_onedim_truth, eta_map, simulate_double_gyre,
                      simulate_lorenz, simulate_onedim)
from .tcca import KoopmanModel, feature_tcca, fit_tcca, koopman_matrix, load_model, save_model
from .trajectory_store import (FoldAssignment, TrajectoryCollection, lagged_pair_count, load_trajectories,
                               save_trajectories, split_folds)
from .whitening import DecorrelationRecord, apply_decorrelation, decorrelate

__version__ = "0.1.0"
