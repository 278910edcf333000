"""EM fitting with first-order or fully exponential Laplace E-steps.

The E-step needs the conditional mean and covariance of the team effects
given the outcomes.  The first-order approximation takes the mode ``m`` of
``h`` and ``Sigma = (-H)^{-1}``.  The fully exponential version treats the
posterior mean of ``eta_j`` as the derivative at zero of the Laplace
approximation to ``log E[exp(t eta_j)]``, which gives

    mean_j = m_j + 1/2 (Sigma d)_j,        d_k = tr(Sigma T_k)

with ``T_k`` the slice of third derivatives of ``h``.  Differentiating the
corrected mean once more (fourth derivatives enter here) gives the
corrected variance.  Because each game touches exactly two teams, all of
these reduce to sums over games of the per-game derivatives
``l'''(nu_i)``, ``l''''(nu_i)`` times quadratic forms of ``Sigma``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .model import (
    LOG_2PI,
    FcsMode,
    FitResult,
    Method,
    ModelConfig,
    ParameterVector,
    game_derivatives,
    joint_logdensity_h,
    linear_predictor,
)

logger = logging.getLogger(__name__)

GH_ORDER = 30
_GH_X, _GH_W = np.polynomial.hermite.hermgauss(GH_ORDER)
_GH_X = _GH_X * math.sqrt(2.0)
_GH_W = _GH_W / math.sqrt(math.pi)


class ModeFindingError(RuntimeError):
    """Newton iterations on ``h`` failed to reach the gradient tolerance."""

    def __init__(self, msg, grad_norm):
        super().__init__(msg)
        self.grad_norm = grad_norm


class BetaStepError(RuntimeError):
    """The FCS-effect score equation has no root (likely separation)."""


@dataclass
class EStepResult:
    eta_tilde: np.ndarray
    v_tilde: np.ndarray
    mode: np.ndarray
    neg_hessian_at_mode: object
    laplace_loglik: float
    warnings: list[str] = field(default_factory=list)
    order: str = "first-order"


def default_params(config: ModelConfig) -> ParameterVector:
    beta = 1.0 if config.has_fixed_effect else None
    if config.method is Method.FIXED_VARIANCE:
        return ParameterVector(beta, (config.fixed_variance,) * config.n_variances)
    return ParameterVector(beta, (0.5,) * config.n_variances)


def find_mode(design, outcomes, config: ModelConfig, params, start=None, max_iter: int = 100):
    """Damped Newton-Raphson for the mode of ``h``.

    Returns ``(mode, neg_hessian, laplace_loglik)`` where the Laplace
    log-likelihood is ``h(m) + (k/2) log 2 pi - 1/2 log det(-H)`` for
    ``k`` team effects.  ``neg_hessian`` is sparse.
    """
    m = design.n_teams
    eta = np.zeros(m) if start is None else np.array(start, dtype=float)
    val, grad, hess = joint_logdensity_h(design, outcomes, config, params, eta)
    for _ in range(max_iter):
        gnorm = float(np.max(np.abs(grad))) if m else 0.0
        if gnorm < config.mode_tol:
            break
        neg_h = -hess.toarray()
        try:
            cf = linalg.cho_factor(neg_h, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise ModeFindingError("negative Hessian of h is not positive definite", gnorm) from exc
        step = linalg.cho_solve(cf, grad, check_finite=False)
        t = 1.0
        while True:
            cand = eta + t * step
            cval, cgrad, chess = joint_logdensity_h(design, outcomes, config, params, cand)
            # accept on ascent; near the optimum rounding can make val flat
            if cval >= val - 1e-12 * max(1.0, abs(val)) or t < 1e-8:
                break
            t *= 0.5
        eta, val, grad, hess = cand, cval, cgrad, chess
    else:
        gnorm = float(np.max(np.abs(grad)))
        if gnorm >= config.mode_tol:
            raise ModeFindingError(
                f"mode search stopped after {max_iter} iterations, |grad| = {gnorm:.3e}", gnorm
            )
    neg_hess = (-hess).tocsr()
    logdet = _logdet_pd(neg_hess.toarray()) if m else 0.0
    lap = val + 0.5 * m * LOG_2PI - 0.5 * logdet
    return eta, neg_hess, lap


def _logdet_pd(a: np.ndarray) -> float:
    c = linalg.cholesky(a, lower=True, check_finite=False)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def _inverse_pd(a: np.ndarray) -> np.ndarray:
    cf = linalg.cho_factor(a, lower=True, check_finite=False)
    inv = linalg.cho_solve(cf, np.eye(a.shape[0]), check_finite=False)
    return 0.5 * (inv + inv.T)


def fully_exponential_corrections(design, outcomes, config, params, mode, sigma):
    """Mean and variance-diagonal corrections at the mode.

    ``sigma`` is the inverse negative Hessian at ``mode``.  Returns
    ``(mean_shift, var_shift)``; both vanish when every game derivative of
    order three and four is zero, i.e. when the integrand is Gaussian.
    """
    if design.n == 0:
        z = np.zeros(design.n_teams)
        return z, z.copy()
    nu = linear_predictor(design, params, mode)
    d = game_derivatives(config.link, nu, outcomes, 4)
    d3, d4 = d[3], d[4]
    h, a = design.home, design.away
    # B = Z Sigma  (n x m); row i is a_i' Sigma
    B = sigma[h] - sigma[a]
    # G = Z Sigma Z'  (n x n)
    G = B[:, h] - B[:, a]
    s = np.diag(G).copy()
    dvec = np.bincount(h, d3 * s, minlength=design.n_teams) - np.bincount(a, d3 * s, minlength=design.n_teams)
    sig_d = sigma @ dvec
    mean_shift = 0.5 * sig_d

    a_sig_d = sig_d[h] - sig_d[a]
    W = d3[:, None] * B
    Q = (G * G) @ W
    term1 = np.einsum("i,ij->j", d3 * a_sig_d, B * B)
    term2 = np.einsum("ij,ij->j", B, d3[:, None] * Q) + np.einsum("i,ij->j", d4 * s, B * B)
    var_shift = 0.5 * (term1 + term2)
    return mean_shift, var_shift


def estep(design, outcomes, config: ModelConfig, params, order: str = "first-order",
          start=None, projection_margin: float = 0.1) -> EStepResult:
    """Conditional mean and covariance of the team effects.

    ``order`` is ``"first-order"`` or ``"fully-exponential"``.  The fully
    exponential variant corrects the means and the covariance diagonal and
    keeps first-order off-diagonals.
    """
    mode, neg_hess, lap = find_mode(design, outcomes, config, params, start)
    sigma = _inverse_pd(neg_hess.toarray()) if design.n_teams else np.zeros((0, 0))
    res = EStepResult(mode.copy(), sigma, mode, neg_hess, lap, order=order)
    if order == "first-order":
        return res
    if order != "fully-exponential":
        raise ValueError(f"unknown E-step order {order!r}")
    mshift, vshift = fully_exponential_corrections(design, outcomes, config, params, mode, sigma)
    v = sigma.copy()
    v[np.diag_indices_from(v)] += vshift
    v = 0.5 * (v + v.T)
    diag_ok = np.all(np.diag(v) > 0)
    accepted = False
    if diag_ok:
        try:
            linalg.cholesky(v, lower=True, check_finite=False)
            accepted = True
        except linalg.LinAlgError:
            w, vecs = linalg.eigh(v)
            floor = 1e-8 * max(float(w[-1]), 1e-300)
            proj = (vecs * np.maximum(w, floor)) @ vecs.T
            proj = 0.5 * (proj + proj.T)
            rel = np.max(np.abs(np.diag(proj) - np.diag(v)) / np.diag(v))
            if rel <= projection_margin:
                res.warnings.append(f"corrected covariance projected to positive definite (max rel. change {rel:.2e})")
                v = proj
                accepted = True
    if not accepted:
        msg = "fully exponential covariance correction not positive definite; using first-order values"
        logger.warning(msg)
        res.warnings.append(msg)
        return res
    res.eta_tilde = mode + mshift
    res.v_tilde = v
    return res


# ---------------------------------------------------------------------------
# M-step
# ---------------------------------------------------------------------------


def _game_moments(design, estep_res):
    """Mean offset (without beta) and variance of each ``nu_i`` under N(eta~, v~)."""
    h, a = design.home, design.away
    eta, v = estep_res.eta_tilde, estep_res.v_tilde
    mu = eta[h] - eta[a]
    var = v[h, h] + v[a, a] - 2.0 * v[h, a]
    return mu, np.maximum(var, 0.0)


def expected_score(design, outcomes, config, estep_res, beta: float) -> float:
    """Score in beta with the conditional expectation under N(eta~, v~)."""
    rows = np.flatnonzero(design.X)
    if rows.size == 0:
        return 0.0
    mu, var = _game_moments(design, estep_res)
    nu = beta * design.X[rows, None] + mu[rows, None] + np.sqrt(var[rows])[:, None] * _GH_X[None, :]
    r = np.broadcast_to(np.asarray(outcomes, float)[rows, None], nu.shape)
    d1 = game_derivatives(config.link, nu.ravel(), r.ravel(), 1)[1].reshape(nu.shape)
    return float(np.sum(design.X[rows] * (d1 @ _GH_W)))


def expected_loglik_beta(design, outcomes, config, estep_res, beta: float) -> float:
    """Expected complete-data log-likelihood (beta part) under N(eta~, v~)."""
    mu, var = _game_moments(design, estep_res)
    x = design.X if design.X is not None else np.zeros(design.n)
    nu = beta * x[:, None] + mu[:, None] + np.sqrt(var)[:, None] * _GH_X[None, :]
    r = np.broadcast_to(np.asarray(outcomes, float)[:, None], nu.shape)
    l0 = game_derivatives(config.link, nu.ravel(), r.ravel(), 0)[0].reshape(nu.shape)
    return float(np.sum(l0 @ _GH_W))


def mstep_beta(design, outcomes, config, estep_res, beta_current: float,
               tol: float = 1e-10, max_iter: int = 50, delta: float = 1e-5) -> float:
    """Solve the expected score equation for the FCS effect.

    Newton-Raphson with a central-difference derivative of the score; a
    bracketing root search takes over if Newton misbehaves.
    """
    if design.X is None or not np.any(design.X):
        raise BetaStepError("model has no FCS-effect column")

    def score(b):
        return expected_score(design, outcomes, config, estep_res, b)

    b = float(beta_current)
    for _ in range(max_iter):
        s = score(b)
        ds = (score(b + delta) - score(b - delta)) / (2.0 * delta)
        if not (np.isfinite(s) and np.isfinite(ds)) or ds >= 0:
            break
        step = -s / ds
        if abs(step) > 5.0:
            break
        b += step
        if abs(step) < tol:
            return b
    # score is decreasing in beta; bracket and polish
    lo, hi = beta_current - 1.0, beta_current + 1.0
    for _ in range(60):
        if score(lo) > 0:
            break
        lo -= 2.0 * (hi - lo)
    for _ in range(60):
        if score(hi) < 0:
            break
        hi += 2.0 * (hi - lo)
    slo, shi = score(lo), score(hi)
    if not (slo > 0 > shi):
        raise BetaStepError(
            "expected score has no sign change; the FCS effect is not estimable "
            "(check for separation)"
        )
    return float(optimize.brentq(score, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps))


def mstep_variance(estep_res: EStepResult, is_fcs, fcs_mode) -> tuple[float, ...]:
    """Closed-form variance update ``(tr v~ + |eta~|^2) / k`` (blockwise when separate)."""
    second = np.diag(estep_res.v_tilde) + estep_res.eta_tilde ** 2
    if FcsMode(int(fcs_mode)) is FcsMode.SEPARATE:
        is_fcs = np.asarray(is_fcs, bool)
        return (float(second[~is_fcs].mean()), float(second[is_fcs].mean()))
    return (float(second.mean()),)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def fit_em(design, outcomes, config: ModelConfig, init: FitResult | None = None) -> FitResult:
    """EM for (beta, variance components) with a Laplace-type E-step.

    Stops when the largest parameter change is below ``config.tol``
    (default 1e-6) or the relative change in the Laplace log-likelihood is
    below ``config.loglik_rtol``; at most ``config.max_iter`` (default 500)
    iterations.
    """
    if config.method not in (Method.LAPLACE, Method.FULLY_EXPONENTIAL):
        raise ValueError(f"fit_em handles LA and FE methods, not {config.method.value}")
    order = "fully-exponential" if config.method is Method.FULLY_EXPONENTIAL else "first-order"
    tol = 1e-6 if config.tol is None else config.tol
    max_iter = 500 if config.max_iter is None else config.max_iter
    if config.has_fixed_effect and design.X is not None and design.X.any():
        has_beta = True
    else:
        has_beta = False

    if init is not None and init.params is not None:
        params = ParameterVector(init.params.beta if has_beta else None, init.params.variances)
        eta = np.array(init.eta_hat, dtype=float)
    else:
        params = default_params(config)
        if not has_beta:
            params = ParameterVector(None, params.variances)
        eta = np.zeros(design.n_teams)

    warn: list[str] = []
    converged = False
    prev_lap = None
    it = 0
    for it in range(1, max_iter + 1):
        e = estep(design, outcomes, config, params, order, start=eta)
        for w in e.warnings:
            if w not in warn:
                warn.append(w)
        beta = mstep_beta(design, outcomes, config, e, params.beta) if has_beta else None
        new = ParameterVector(beta, mstep_variance(e, design.is_fcs, config.fcs_mode))
        change = float(np.max(np.abs(new.as_array() - params.as_array())))
        rel = None if prev_lap is None else abs(e.laplace_loglik - prev_lap) / max(abs(prev_lap), 1e-300)
        params, eta, prev_lap = new, e.mode, e.laplace_loglik
        if change < tol or (rel is not None and rel < config.loglik_rtol):
            converged = True
            break
    if not converged:
        warn.append(f"EM stopped at the iteration cap ({max_iter}); last parameter change {change:.3e}")

    final = estep(design, outcomes, config, params, order, start=eta)
    for w in final.warnings:
        if w not in warn:
            warn.append(w)
    return FitResult(
        config=config,
        params=params,
        eta_hat=final.eta_tilde,
        cond_cov=final.v_tilde,
        loglik_approx=final.laplace_loglik,
        iterations=it,
        converged=converged,
        warnings=warn,
        is_fcs=design.is_fcs,
    )
