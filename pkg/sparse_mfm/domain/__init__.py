"""
Estimation domain for sparse multi-factor asset pricing models.

Classes and functions are organized into separate modules:
- panel: ReturnsPanel, RiskFreeSeries, metadata records and CSV loaders
- regress: OlsFit, FTestResult, ols_fit, f_test_nested
- cluster: DistanceMatrix, Dendrogram, minimax_cluster, pca_dim, cut
- lasso: LassoFit, LassoPath, lasso_solve, lambda_for_support
- pipeline: ReducedUniverse, SecurityModel, SignificanceMatrices, run_study
- inference: FdrTable, InterceptStudy, bh_adjust, bhy_adjust
- backtest: PortfolioWeek, BacktestLedger, run_backtest
- simulate: SimulationConfig, SyntheticWorld, simulate_world
- taxonomy: EtfTaxonomy, SicGroups and the FF5 identifiers
- errors: SparseMfmError and its subclasses

The most used names are re-exported here.
"""

from .errors import (
    AggregationError,
    AlignmentError,
    ConfigError,
    DateParseError,
    DegenerateProjectionError,
    DegenerateSeriesError,
    DomainError,
    EmptyStudyError,
    InsufficientDataError,
    InsufficientOverlapError,
    PanelSchemaError,
    SingularDesignError,
    SparseMfmError,
)
from .taxonomy import FF5_IDS, MARKET_ID, EtfTaxonomy, SicGroups
from .panel import FactorMeta, ReturnsPanel, RiskFreeSeries, SecurityMeta
from .regress import FTestResult, OlsFit, f_test_nested, ols_fit
from .cluster import Dendrogram, DistanceMatrix, Merge, cut, minimax_cluster, pca_dim
from .lasso import LassoFit, LassoPath, lambda_for_support, lasso_solve
from .pipeline import (
    EstimationSettings,
    ReducedUniverse,
    SecurityModel,
    SignificanceMatrices,
    StudyInputs,
    StudyResult,
    run_study,
)
from .inference import FdrTable, InterceptStudy, bh_adjust, bhy_adjust, gof_study, intercept_study
from .backtest import BacktestLedger, PortfolioWeek, run_backtest
from .simulate import SimulationConfig, SyntheticWorld, simulate_world

__all__ = [
    "SparseMfmError",
    "ConfigError",
    "PanelSchemaError",
    "DateParseError",
    "AlignmentError",
    "DomainError",
    "InsufficientDataError",
    "SingularDesignError",
    "DegenerateSeriesError",
    "InsufficientOverlapError",
    "DegenerateProjectionError",
    "AggregationError",
    "EmptyStudyError",
    "FF5_IDS",
    "MARKET_ID",
    "EtfTaxonomy",
    "SicGroups",
    "ReturnsPanel",
    "RiskFreeSeries",
    "SecurityMeta",
    "FactorMeta",
    "OlsFit",
    "FTestResult",
    "ols_fit",
    "f_test_nested",
    "DistanceMatrix",
    "Dendrogram",
    "Merge",
    "minimax_cluster",
    "pca_dim",
    "cut",
    "LassoFit",
    "LassoPath",
    "lasso_solve",
    "lambda_for_support",
    "EstimationSettings",
    "StudyInputs",
    "ReducedUniverse",
    "SecurityModel",
    "SignificanceMatrices",
    "StudyResult",
    "run_study",
    "FdrTable",
    "InterceptStudy",
    "bh_adjust",
    "bhy_adjust",
    "intercept_study",
    "gof_study",
    "PortfolioWeek",
    "BacktestLedger",
    "run_backtest",
    "SimulationConfig",
    "SyntheticWorld",
    "simulate_world",
]
