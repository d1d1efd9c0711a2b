"""Nonlinear causal structure discovery with a trainable-bandwidth kernel score."""

from .data import Dataset, Variable
from .graphs import Cpdag, Dag
from .metrics import (
    EvalReport,
    hsic_biased,
    normalized_shd,
    residual_hsic_diagnostic,
    skeleton_f1,
    structure_report,
)
from .scores import (
    GP,
    MARG,
    OURS,
    SCORE_KINDS,
    ScoreCache,
    ScoreParams,
    baseline_gp_score,
    baseline_marg_score,
    graph_score,
    joint_marginal_score,
    optimize_local_score,
)
from .search import EdgeOperator, GesResult, apply_operator, ges
from .synth import GenConfig, chain_cos_squared, generate, random_dag

__version__ = "0.1.0"

__all__ = [
    "Cpdag",
    "Dag",
    "Dataset",
    "EdgeOperator",
    "EvalReport",
    "GP",
    "GenConfig",
    "GesResult",
    "MARG",
    "OURS",
    "SCORE_KINDS",
    "ScoreCache",
    "ScoreParams",
    "Variable",
    "apply_operator",
    "baseline_gp_score",
    "baseline_marg_score",
    "chain_cos_squared",
    "generate",
    "ges",
    "graph_score",
    "hsic_biased",
    "joint_marginal_score",
    "normalized_shd",
    "optimize_local_score",
    "random_dag",
    "residual_hsic_diagnostic",
    "skeleton_f1",
    "structure_report",
]
