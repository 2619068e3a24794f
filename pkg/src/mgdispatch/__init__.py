"""Day-ahead scheduling toolkit for isolated microgrids.

The package covers the full planning chain: hourly load/wind/PV data
handling, per-hour one-step-ahead forecasting with a DDPG agent and
rank-based prioritized replay, automated hyperparameter search, a
t location-scale model of forecast errors, a discrete probability-sequence
algebra for combining error distributions, and a chance-constrained
unit-commitment model solved by a built-in simplex/branch-and-bound MILP
solver (or exported as a CPLEX-style .lp file).
"""

__version__ = "0.1.0"

from .data import HourlyRecord, SplitDataset, SubSeries, SynthConfig
from .errormodel import TlsErrorModel, TlsParams, fit_tls, metrics, revise, tls_pdf
from .forecast import DdpgForecaster, PerBuffer, train_subseries
from .milp import MilpModel, MilpResult, read_lp, solve_lp, solve_milp, write_lp
from .scheduling import (
    EssParams,
    MtUnit,
    ScheduleProblem,
    ScheduleSolution,
    build_bigm_model,
    build_quantile_model,
    extract_solution,
)
from .sequences import ProbSeq, atc, discretize, expectation, reserve_quantile, stc_full
from .tuning import Categorical, LogUniform, Uniform, ddpg_search_space, minimize, run_search

__all__ = [
    "HourlyRecord",
    "SubSeries",
    "SplitDataset",
    "SynthConfig",
    "DdpgForecaster",
    "PerBuffer",
    "train_subseries",
    "TlsParams",
    "TlsErrorModel",
    "fit_tls",
    "tls_pdf",
    "revise",
    "metrics",
    "ProbSeq",
    "discretize",
    "atc",
    "stc_full",
    "expectation",
    "reserve_quantile",
    "MilpModel",
    "MilpResult",
    "solve_lp",
    "solve_milp",
    "write_lp",
    "read_lp",
    "MtUnit",
    "EssParams",
    "ScheduleProblem",
    "ScheduleSolution",
    "build_bigm_model",
    "build_quantile_model",
    "extract_solution",
    "Categorical",
    "Uniform",
    "LogUniform",
    "ddpg_search_space",
    "minimize",
    "run_search",
]
