"""Single entry point that dispatches a model-grid cell to its engine."""

from __future__ import annotations

from .laplace import fit_em
from .model import FitResult, Method, ModelConfig
from .pql import fit_mease, fit_pql


def fit_model(design, outcomes, config: ModelConfig, init: FitResult | None = None,
              team_names=None) -> FitResult:
    if config.method in (Method.LAPLACE, Method.FULLY_EXPONENTIAL):
        fit = fit_em(design, outcomes, config, init=init)
    elif config.method is Method.MEASE:
        fit = fit_mease(design, outcomes, config)
    else:
        fit = fit_pql(design, outcomes, config, init=init)
    if team_names is not None:
        fit.team_names = list(team_names)
    return fit
