"""Joint estimation of sparse graphical models and fairness-constrained
community structure, with the synthetic generators, metrics and tuning
needed to study them."""

from .admm import FitConfig, fit, vacuous_polytope
from .clustering import (CommunityLabels, extract_communities,
                         kmeans_partition, select_k, spectral_embedding)
from .data import (Dataset, FitResult, PartitionRelaxation, PrecisionEstimate,
                   read_dataset_csv, read_groups_csv, sample_covariance,
                   write_dataset_csv, write_groups_csv)
from .errors import NumericalError, StructuralError, ValidationError
from .evaluation import (EvalReport, balance, bic_score, clustering_error,
                         pcee, preference_ratio, rmse, tune_select)
from .fairness import (FairnessPolytope, NullspaceBasis,
                       adjoint_graph_operator, build_fairness_constraints,
                       build_group_matrix, graph_operator, nullspace_basis,
                       polytope_from_groups)
from .losses import (AdmmState, BBConfig, LossModel, fbn_omega_update,
                     fbn_theta_update, fconcord_objective, glasso_objective,
                     glasso_theta_update, ising_pseudo_likelihood,
                     offdiag_l1, soft_threshold)
from .qsolver import QSolverConfig, solve_q_subproblem
from .synthetic import (GibbsConfig, GroundTruth, generate_precision,
                        generate_sbm, ising_parameters, load_ground_truth,
                        sample_gaussian, sample_ising, save_ground_truth)

__version__ = "0.1.0"

__all__ = [
    "AdmmState", "BBConfig", "CommunityLabels", "Dataset", "EvalReport",
    "FairnessPolytope", "FitConfig", "FitResult", "GibbsConfig",
    "GroundTruth", "LossModel", "NullspaceBasis", "NumericalError",
    "PartitionRelaxation", "PrecisionEstimate", "QSolverConfig",
    "StructuralError", "ValidationError", "adjoint_graph_operator",
    "balance", "bic_score", "build_fairness_constraints",
    "build_group_matrix", "clustering_error", "extract_communities",
    "fbn_omega_update", "fbn_theta_update", "fconcord_objective", "fit",
    "generate_precision", "generate_sbm", "glasso_objective",
    "ising_parameters",
    "glasso_theta_update", "graph_operator", "ising_pseudo_likelihood",
    "kmeans_partition", "load_ground_truth", "nullspace_basis",
    "offdiag_l1", "pcee", "polytope_from_groups", "preference_ratio",
    "read_dataset_csv", "read_groups_csv", "rmse", "sample_covariance",
    "sample_gaussian", "sample_ising", "save_ground_truth", "select_k",
    "solve_q_subproblem", "spectral_embedding", "tune_select",
    "vacuous_polytope", "write_dataset_csv", "write_groups_csv",
]
