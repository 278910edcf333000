"""Penalized quasi-likelihood and the penalty (Mease) model.

PQL linearizes the link around the current linear predictor and fits the
resulting weighted linear mixed model

    t = X beta + Z eta + e,   e ~ N(0, W^{-1}),   eta ~ N(0, D)

with the residual scale fixed at one.  Variance components maximize the
profiled ML or REML log-likelihood of that working model; ``beta`` and
``eta`` then come from Henderson's mixed-model equations.  The two steps
alternate until nothing moves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize
from scipy.special import ndtr

from .laplace import default_params, find_mode
from .model import (
    LOG_2PI,
    FitResult,
    Method,
    ModelConfig,
    ParameterVector,
    joint_logdensity_h,
    linear_predictor,
    scatter_hessian,
    scatter_vector,
)

logger = logging.getLogger(__name__)

_LOGVAR_BOUNDS = (np.log(1e-8), np.log(1e4))


class SingularSystemError(linalg.LinAlgError):
    pass


@dataclass
class WorkingModel:
    t: np.ndarray
    W: np.ndarray
    params: ParameterVector
    eta: np.ndarray
    floored: int = 0


def working_variates(design, outcomes, config: ModelConfig, params, eta) -> WorkingModel:
    """Pseudo-response ``t`` and weights ``W`` at the current linear predictor."""
    nu = linear_predictor(design, params, eta)
    r = np.asarray(outcomes, float)
    if config.link == "probit":
        pi = ndtr(nu)
        pq = pi * ndtr(-nu)
        dmu = np.exp(-0.5 * nu * nu) / np.sqrt(2.0 * np.pi)
    else:
        pi = 1.0 / (1.0 + np.exp(-nu))
        pq = pi * (1.0 - pi)
        dmu = pq
    with np.errstate(divide="ignore", invalid="ignore"):
        W = dmu * dmu / pq
        t = nu + (r - pi) / dmu
    bad = ~(W > config.weight_floor) | ~np.isfinite(t)
    floored = int(bad.sum())
    if floored:
        msg = f"{floored} working weight(s) floored at {config.weight_floor:g}"
        logger.warning(msg)
        W = np.where(bad, config.weight_floor, W)
        t = np.where(np.isfinite(t), t, nu + np.sign(r - 0.5) / np.sqrt(config.weight_floor))
    return WorkingModel(t=t, W=W, params=params, eta=np.asarray(eta, float), floored=floored)


class _WorkingLMM:
    """Dense Henderson system for one set of working variates."""

    def __init__(self, design, working: WorkingModel, with_x: bool):
        self.design = design
        self.t, self.W = working.t, working.W
        self.with_x = with_x
        self.m = design.n_teams
        self.ZtWZ = scatter_hessian(design, self.W).toarray()
        self.rz = scatter_vector(design, self.W * self.t)
        self.tWt = float(np.sum(self.W * self.t * self.t))
        self.logdetW = float(np.sum(np.log(self.W)))
        if with_x:
            x = design.X
            self.xwx = float(np.sum(self.W * x * x))
            self.xwz = scatter_vector(design, self.W * x)
            self.rx = float(np.sum(self.W * x * self.t))

    def solve(self, dvec, reml: bool, need_grad: bool = True):
        m = self.m
        Czz = self.ZtWZ.copy()
        Czz[np.diag_indices(m)] += 1.0 / dvec
        try:
            cz = linalg.cho_factor(Czz, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise SingularSystemError("random-effect block of the mixed-model equations is singular") from exc
        logdet_zz = 2.0 * float(np.sum(np.log(np.diag(cz[0]))))
        if self.with_x:
            C = np.empty((m + 1, m + 1))
            C[0, 0] = self.xwx
            C[0, 1:] = C[1:, 0] = self.xwz
            C[1:, 1:] = Czz
            rhs = np.concatenate([[self.rx], self.rz])
            try:
                cf = linalg.cho_factor(C, lower=True, check_finite=False)
            except linalg.LinAlgError as exc:
                raise SingularSystemError("fixed-effect block of the mixed-model equations is singular") from exc
            sol = linalg.cho_solve(cf, rhs, check_finite=False)
            logdet_c = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
            beta, eta = float(sol[0]), sol[1:]
        else:
            cf, rhs, logdet_c = cz, self.rz, logdet_zz
            sol = linalg.cho_solve(cz, rhs, check_finite=False)
            beta, eta = None, sol
        quad = self.tWt - float(sol @ rhs)
        n = self.design.n
        logdet_v = -self.logdetW + float(np.sum(np.log(dvec))) + logdet_zz
        ll = -0.5 * (logdet_v + quad + n * LOG_2PI)
        if reml and self.with_x:
            ll += -0.5 * (logdet_c - logdet_zz) + 0.5 * LOG_2PI
        out = {"loglik": ll, "beta": beta, "eta": eta}
        if need_grad:
            use = cf if (reml and self.with_x) else cz
            size = m + 1 if use is cf and self.with_x else m
            inv = linalg.cho_solve(use, np.eye(size), check_finite=False)
            inv_zz = inv[1:, 1:] if size == m + 1 else inv
            out["inv_zz"] = inv_zz
            # d loglik / d d_j
            out["grad_d"] = -0.5 * (1.0 / dvec - np.diag(inv_zz) / dvec ** 2 - eta ** 2 / dvec ** 2)
        return out


def _groups(design, n_var):
    if n_var == 1:
        return [np.ones(design.n_teams, bool)]
    return [~design.is_fcs, design.is_fcs.copy()]


def lmm_solve(working: WorkingModel, design, config: ModelConfig, variance_mode: str = "ML",
              fixed_variances=None):
    """Fit the working linear mixed model.

    Returns ``(params, eta, cond_cov, loglik)``.  Variance components are
    optimized on the log scale against the profiled ML or REML
    log-likelihood unless ``fixed_variances`` is given.
    """
    with_x = config.has_fixed_effect and design.X is not None and bool(np.any(design.X))
    lmm = _WorkingLMM(design, working, with_x)
    reml = variance_mode.upper() == "REML"
    groups = _groups(design, config.n_variances)

    def dvec_of(theta):
        d = np.empty(design.n_teams)
        for g, v in zip(groups, theta):
            d[g] = v
        return d

    if fixed_variances is None:
        start = np.log(np.clip(working.params.variances, 1e-6, 1e3))
        # drop components whose group is empty
        active = [k for k, g in enumerate(groups) if g.any()]

        def negll(logtheta):
            theta = np.exp(logtheta)
            res = lmm.solve(dvec_of(theta), reml)
            g = np.array([res["grad_d"][grp].sum() for grp in groups]) * theta
            return -res["loglik"], -g

        fixed_mask = np.array([k not in active for k in range(len(groups))])
        bounds = [(s, s) if fixed_mask[k] else _LOGVAR_BOUNDS for k, s in enumerate(start)]
        opt = optimize.minimize(negll, start, jac=True, method="L-BFGS-B", bounds=bounds,
                                options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 500})
        theta = tuple(float(v) for v in np.exp(opt.x))
    else:
        theta = tuple(float(v) for v in fixed_variances)
    res = lmm.solve(dvec_of(theta), reml)
    params = ParameterVector(res["beta"] if with_x else None, theta)
    return params, res["eta"], res["inv_zz"], res["loglik"]


def fit_pql(design, outcomes, config: ModelConfig, init: FitResult | None = None) -> FitResult:
    """Doubly-iterative PQL (also covers fixed-variance fits and the penalty model)."""
    if config.method is Method.MEASE:
        return fit_mease(design, outcomes, config)
    if config.method not in (Method.PQL_ML, Method.PQL_REML, Method.FIXED_VARIANCE):
        raise ValueError(f"fit_pql does not handle method {config.method.value}")
    tol = 1e-6 if config.tol is None else config.tol
    max_iter = 200 if config.max_iter is None else config.max_iter
    with_x = config.has_fixed_effect and design.X is not None and bool(np.any(design.X))
    mode = "REML" if config.method is Method.PQL_REML else "ML"
    fixed = None
    if config.method is Method.FIXED_VARIANCE:
        fixed = (config.fixed_variance,) * config.n_variances

    if init is not None and init.params is not None:
        params = ParameterVector(init.params.beta if with_x else None, init.params.variances)
        eta = np.array(init.eta_hat, float)
    else:
        p0 = default_params(config)
        params = ParameterVector(p0.beta if with_x else None, p0.variances)
        eta = np.zeros(design.n_teams)

    warn: list[str] = []
    converged = False
    cov = None
    ll = float("nan")
    history = []
    for it in range(1, max_iter + 1):
        wm = working_variates(design, outcomes, config, params, eta)
        if wm.floored and not any("floored" in w for w in warn):
            warn.append(f"working weights floored at {config.weight_floor:g}")
        new_params, new_eta, cov, ll = lmm_solve(wm, design, config, mode, fixed)
        change = max(
            float(np.max(np.abs(new_params.as_array() - params.as_array()))),
            float(np.max(np.abs(new_eta - eta))) if eta.size else 0.0,
        )
        history.append(change)
        params, eta = new_params, new_eta
        if change < tol:
            converged = True
            break
    if not converged:
        warn.append(
            f"PQL stopped at the iteration cap ({max_iter}); trajectory norm of last step {history[-1]:.3e}"
        )
    return FitResult(
        config=config,
        params=params,
        eta_hat=eta,
        cond_cov=0.5 * (cov + cov.T),
        loglik_approx=ll,
        iterations=it,
        converged=converged,
        warnings=warn,
        is_fcs=design.is_fcs,
    )


def fit_mease(design, outcomes, config: ModelConfig | None = None) -> FitResult:
    """Maximize the penalized likelihood (probit, penalty prior on every team).

    Damped Newton on ``sum log Phi(+/- nu_i) + sum_j [log Phi(theta_j) +
    log Phi(-theta_j)]``; the covariance reported is the inverse negative
    Hessian at the optimum.
    """
    if config is None:
        config = ModelConfig(link="probit", fcs_mode=0, method=Method.MEASE)
    if config.method is not Method.MEASE:
        config = config.with_(method=Method.MEASE, fixed_variance=None)
    if design.X is not None and np.any(design.X):
        raise ValueError("the penalty model expects a consolidated design without an FCS column")
    # the penalty guarantees a finite maximizer, so a failure here is a bug
    theta, neg_hess, _ = find_mode(design, outcomes, config, None, None)
    value, _, _ = joint_logdensity_h(design, outcomes, config, None, theta)
    cov = linalg.inv(neg_hess.toarray()) if design.n_teams else np.zeros((0, 0))
    return FitResult(
        config=config,
        params=None,
        eta_hat=theta,
        cond_cov=0.5 * (cov + cov.T),
        loglik_approx=value,
        iterations=1,
        converged=True,
        warnings=[],
        is_fcs=design.is_fcs,
    )
