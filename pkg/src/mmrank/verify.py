"""Random small-instance comparisons of the approximations against quadrature."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .laplace import estep
from .model import Method, ModelConfig, ParameterVector
from .oracle import oracle_integrate, single_game_win_probability
from .schedule import DesignMatrices

LAPLACE_TOL = 5e-2
LAPLACE_TOL_SMALL = 1e-3
SMALL_VARIANCE = 0.5
FE_WIN_RATE = 0.90


@dataclass
class Instance:
    design: DesignMatrices
    link: str
    sigma2: float


def random_instance(rng, dims: int = 3, max_games: int = 4, var_range=(0.25, 4.0)) -> Instance:
    """Random season on ``dims`` teams with 1..``max_games`` games.

    The variance is log-uniform on ``var_range``; link, pairings, home
    side and outcomes are uniform.
    """
    pairs = list(itertools.combinations(range(dims), 2))
    ng = int(rng.integers(1, max_games + 1))
    picks = rng.integers(0, len(pairs), ng)
    home, away = [], []
    for k in picks:
        a, b = pairs[k]
        if rng.random() < 0.5:
            a, b = b, a
        home.append(a)
        away.append(b)
    r = rng.integers(0, 2, ng).astype(float)
    s2 = float(np.exp(rng.uniform(math.log(var_range[0]), math.log(var_range[1]))))
    link = "probit" if rng.random() < 0.5 else "logit"
    return Instance(DesignMatrices.from_arrays(home, away, r, dims), link, s2)


@dataclass
class VerificationReport:
    dims: int
    trials: int
    seed: int
    laplace_errors: list[float] = field(default_factory=list)
    sigma2: list[float] = field(default_factory=list)
    fe_closer: list[bool] = field(default_factory=list)
    single_game_error: float = 0.0

    @property
    def max_laplace_error(self) -> float:
        return max(self.laplace_errors)

    @property
    def max_laplace_error_small(self) -> float:
        errs = [e for e, s in zip(self.laplace_errors, self.sigma2) if s <= SMALL_VARIANCE]
        return max(errs) if errs else 0.0

    @property
    def fe_win_rate(self) -> float:
        return float(np.mean(self.fe_closer))

    def checks(self):
        return [
            ("laplace_loglik_abs_error", self.max_laplace_error, LAPLACE_TOL,
             self.max_laplace_error <= LAPLACE_TOL),
            (f"laplace_loglik_abs_error_sigma2_le_{SMALL_VARIANCE:g}", self.max_laplace_error_small,
             LAPLACE_TOL_SMALL, self.max_laplace_error_small <= LAPLACE_TOL_SMALL),
            ("fe_mean_closer_fraction", self.fe_win_rate, FE_WIN_RATE, self.fe_win_rate >= FE_WIN_RATE),
            ("single_game_closed_form_abs_error", self.single_game_error, 1e-8, self.single_game_error <= 1e-8),
        ]

    @property
    def passed(self) -> bool:
        return all(ok for *_, ok in self.checks())

    def to_text(self) -> str:
        lines = [f"# verify dims={self.dims} trials={self.trials} seed={self.seed}",
                 "check,value,tolerance,status"]
        for name, val, tol, ok in self.checks():
            lines.append(f"{name},{val:.6e},{tol:.6e},{'PASS' if ok else 'FAIL'}")
        return "\n".join(lines) + "\n"


def single_game_grid_error(nodes: int = 40) -> float:
    """Worst gap between quadrature and the closed-form single-game win probability."""
    worst = 0.0
    for beta in (0.0, 1.0, 2.03):
        for s2 in (0.25, 1.0, 4.0):
            design = DesignMatrices.from_arrays([0], [1], [1.0], 2, X=[1.0])
            cfg = ModelConfig(link="probit", fcs_mode=1, method=Method.LAPLACE)
            params = ParameterVector(beta, (s2,))
            o = oracle_integrate(design, design.r, cfg, params, nodes)
            exact = single_game_win_probability(beta, 1.0, s2, s2)
            worst = max(worst, abs(math.exp(o.marginal_loglik) - exact))
    return worst


def run_verification(dims: int = 3, trials: int = 200, seed: int = 0, max_games: int = 4,
                     nodes: int = 40) -> VerificationReport:
    rng = np.random.default_rng(seed)
    rep = VerificationReport(dims, trials, seed)
    for _ in range(trials):
        inst = random_instance(rng, dims, max_games)
        cfg = ModelConfig(link=inst.link, fcs_mode=0, method=Method.LAPLACE)
        params = ParameterVector(None, (inst.sigma2,))
        d = inst.design
        truth = oracle_integrate(d, d.r, cfg, params, nodes)
        first = estep(d, d.r, cfg, params, "first-order")
        full = estep(d, d.r, cfg, params, "fully-exponential")
        rep.laplace_errors.append(abs(first.laplace_loglik - truth.marginal_loglik))
        rep.sigma2.append(inst.sigma2)
        e1 = np.linalg.norm(first.eta_tilde - truth.posterior_mean)
        e2 = np.linalg.norm(full.eta_tilde - truth.posterior_mean)
        rep.fe_closer.append(bool(e2 < e1))
    rep.single_game_error = single_game_grid_error(nodes)
    return rep
