"""Multiple-membership GLMM ratings from win/loss records."""

__version__ = "0.1.0"

from .fitting import fit_model
from .model import FcsMode, FitResult, LatentState, Method, ModelConfig, ParameterVector
from .schedule import GameRecord, build_design, parse_games, preprocess_raw

__all__ = [
    "FcsMode",
    "FitResult",
    "GameRecord",
    "LatentState",
    "Method",
    "ModelConfig",
    "ParameterVector",
    "build_design",
    "fit_model",
    "parse_games",
    "preprocess_raw",
]
