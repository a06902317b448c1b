"""Data marketplace engine: value owners, buy their data under a budget, train
differentially private models and price them without arbitrage."""

from .allocation import CompItem, SelectionResult, Solver, select
from .core import DataOwner, Dataset, ModelTier, Money, SurveyPoint
from .errors import InfeasibleError, InputError, MarketError
from .pipeline import MarketReport, PipelineConfig, allocate_final_compensation, run_pipeline
from .pricing import PriceSchedule, maximize_revenue
from .training import LossKind, LossSpec, train_dp_erm
from .valuation import exact_shapley, monte_carlo_shapley

__all__ = [
    "CompItem", "DataOwner", "Dataset", "InfeasibleError", "InputError", "LossKind", "LossSpec",
    "MarketError", "MarketReport", "ModelTier", "Money", "PipelineConfig", "PriceSchedule",
    "SelectionResult", "Solver", "SurveyPoint", "allocate_final_compensation", "exact_shapley",
    "maximize_revenue", "monte_carlo_shapley", "run_pipeline", "select", "train_dp_erm",
]
__version__ = "0.1.0"
