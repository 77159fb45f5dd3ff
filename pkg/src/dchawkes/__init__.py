"""Dependent community Hawkes models: simulation, spectral clustering, GMM estimation and evaluation."""
from .dataio import DatasetSpec, ingest, read_params, write_params
from .estimate import (BlockPairMoments, FitResult, fit_params, gmm_fit, mle_beta, population_moments, refine,
                       sample_moments)
from .evaluation import EvalConfig, dynamic_link_auc, link_probability, test_loglik_per_event, trend_diagnostics
from .events import EventLog
from .experiments import ExperimentSpec, preset, run_experiment
from .likelihood import sr_loglik
from .model import (BHMParams, BlockPairTheta, CHIPParams, Membership, MULCHParams, SRParams, build_excitation,
                    diagnostics, expected_count_matrix, gamma_max, stability_check)
from .pipeline import FitOptions, fit_pipeline, select_K
from .simulate import SimConfig, simulate
from .spectral import ari, count_matrix, misclustering_rate, spectral_cluster, spectral_norm_error

__all__ = [
    "BHMParams", "BlockPairMoments", "BlockPairTheta", "CHIPParams", "DatasetSpec", "EvalConfig", "EventLog",
    "ExperimentSpec", "FitOptions", "FitResult", "MULCHParams", "Membership", "SRParams", "SimConfig", "ari",
    "build_excitation", "count_matrix", "diagnostics", "dynamic_link_auc", "expected_count_matrix", "fit_params",
    "fit_pipeline", "gamma_max", "gmm_fit", "ingest", "link_probability", "misclustering_rate", "mle_beta",
    "population_moments", "preset", "read_params", "refine", "run_experiment", "sample_moments", "select_K",
    "simulate", "spectral_cluster", "spectral_norm_error", "sr_loglik", "stability_check", "test_loglik_per_event",
    "trend_diagnostics", "write_params",
]
