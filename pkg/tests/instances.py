"""Random small seasons shared by the test modules."""

import numpy as np
from scipy.special import ndtr

from mmrank.model import FcsMode, Method, ModelConfig, ParameterVector, joint_logdensity_h
from mmrank.schedule import DesignMatrices

FD_STEP = 1e-5


def random_season(rng, link=None, fcs_mode=None, n_teams=None, n_games=None, n_fcs=None):
    """Design, outcomes, config, params and an evaluation point."""
    link = link or ("probit", "logit")[rng.integers(2)]
    fcs_mode = FcsMode(int(rng.integers(3) if fcs_mode is None else fcs_mode))
    m = int(n_teams or rng.integers(3, 9))
    n = int(n_games or rng.integers(m, 3 * m + 1))
    q = int(n_fcs or rng.integers(1, m - 1)) if fcs_mode is not FcsMode.CONSOLIDATED else 0
    is_fcs = np.r_[np.zeros(m - q, bool), np.ones(q, bool)]
    home = rng.integers(0, m, n)
    away = (home + rng.integers(1, m, n)) % m
    r = rng.integers(0, 2, n).astype(float)
    X = None
    beta = None
    if fcs_mode is not FcsMode.CONSOLIDATED:
        X = (~is_fcs[home] & is_fcs[away]).astype(float)
        beta = float(rng.normal(1.0, 0.5))
    variances = tuple(np.exp(rng.uniform(np.log(0.2), np.log(3.0), 2 if fcs_mode == 2 else 1)))
    design = DesignMatrices.from_arrays(home, away, r, m, X=X, is_fcs=is_fcs)
    config = ModelConfig(link=link, fcs_mode=fcs_mode, method=Method.LAPLACE)
    params = ParameterVector(beta, variances)
    eta = rng.normal(0.0, 1.0, m)
    return design, r, config, params, eta


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def fd_gradient_errors(design, r, config, params, eta, step=FD_STEP):
    """Relative errors of the analytic gradient and Hessian of h."""
    _, grad, hess = joint_logdensity_h(design, r, config, params, eta)
    m = eta.size
    g_fd = np.empty(m)
    h_fd = np.empty((m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = step
        vp, gp, _ = joint_logdensity_h(design, r, config, params, eta + e)
        vm, gm, _ = joint_logdensity_h(design, r, config, params, eta - e)
        g_fd[j] = (vp - vm) / (2 * step)
        h_fd[:, j] = (gp - gm) / (2 * step)
    return rel_err(grad, g_fd), rel_err(hess.toarray(), h_fd)


def signal_outcomes(rng, design, sigma2=1.5, beta=1.0):
    """Outcomes drawn from the probit model with team effects of variance ``sigma2``."""
    eta = rng.normal(0.0, np.sqrt(sigma2), design.n_teams)
    nu = eta[design.home] - eta[design.away]
    if design.X is not None:
        nu = nu + beta * design.X
    return (rng.random(design.n) < ndtr(nu)).astype(float)
