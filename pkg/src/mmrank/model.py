"""Model grid, link functions, and the joint log-density of a season.

A game ``i`` between home team ``l`` and visiting team ``k`` has linear
predictor ``nu_i = X_i * beta + eta_l - eta_k``.  The home team wins with
probability ``F(nu_i)`` where ``F`` is the standard normal CDF (probit) or
the logistic CDF (logit).  The team effects ``eta`` carry either a normal
prior (one pooled variance, or one variance per division) or the fixed
penalty density ``prod_j Phi(eta_j) Phi(-eta_j)``.

Everything the fitting engines need is expressed through per-game
derivatives of ``log P(r_i | nu_i)`` with respect to ``nu_i`` (up to order
four) and per-team derivatives of the log prior.  Because every row of the
random-effect design has exactly two nonzeros, gradients, Hessians and the
higher-order directional derivatives all reduce to sparse scatter sums.

The logistic latent error has variance pi^2/3, so logit ratings sit on a
wider scale than probit ratings.  No rescaling is applied; compare ratings
across links by rank only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.special import expit, log_ndtr, ndtr

LOG_2PI = math.log(2.0 * math.pi)
_LOG_SQRT_2PI = 0.5 * LOG_2PI
# below this argument an asymptotic series replaces exp(log phi - log Phi)
_TAIL = -10.0
_TAIL_TERMS = 18


class FcsMode(enum.IntEnum):
    """How FCS opponents enter the model."""

    CONSOLIDATED = 0
    POOLED = 1
    SEPARATE = 2


class Method(str, enum.Enum):
    PQL_ML = "pql-ml"
    PQL_REML = "pql-reml"
    LAPLACE = "la"
    FULLY_EXPONENTIAL = "fe"
    MEASE = "mease"
    FIXED_VARIANCE = "fixed"


_METHOD_TAG = {
    Method.PQL_ML: "PQL",
    Method.PQL_REML: "PQL",
    Method.LAPLACE: "LA",
    Method.FULLY_EXPONENTIAL: "FE",
    Method.MEASE: "MEASE",
    Method.FIXED_VARIANCE: "FIXED",
}


class ConfigError(ValueError):
    """Invalid combination of link, FCS mode and method."""


@dataclass(frozen=True)
class ModelConfig:
    """One cell of the model grid.

    Parameters
    ----------
    link : {"probit", "logit"}
    fcs_mode : FcsMode or int
        0 consolidates every FCS team into one pseudo-team, 1 keeps FCS
        teams as a separate population sharing the FBS variance, 2 gives
        each division its own variance.
    method : Method or str
    fixed_variance : float, optional
        Required (and strictly positive) for ``Method.FIXED_VARIANCE``.
    tol, max_iter : outer convergence tolerance and iteration cap.  When
        left as ``None`` the engine's own default applies (PQL: 1e-6/200,
        EM: 1e-6/500).
    """

    link: str = "probit"
    fcs_mode: FcsMode = FcsMode.CONSOLIDATED
    method: Method = Method.FULLY_EXPONENTIAL
    fixed_variance: float | None = None
    tol: float | None = None
    max_iter: int | None = None
    loglik_rtol: float = 1e-8
    mode_tol: float = 1e-10
    weight_floor: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "fcs_mode", FcsMode(int(self.fcs_mode)))
        object.__setattr__(self, "method", Method(self.method))
        if self.link not in ("probit", "logit"):
            raise ConfigError(f"unknown link {self.link!r}")
        if self.method is Method.MEASE:
            if self.link != "probit" or self.fcs_mode is not FcsMode.CONSOLIDATED:
                raise ConfigError(
                    "the penalty model is defined only for the probit link "
                    "with consolidated FCS teams (mode 0)"
                )
        if self.method is Method.FIXED_VARIANCE:
            if self.fixed_variance is None or not self.fixed_variance > 0:
                raise ConfigError("fixed-variance fits need a strictly positive variance")
        elif self.fixed_variance is not None:
            raise ConfigError("fixed_variance is only meaningful with method 'fixed'")

    @property
    def label(self) -> str:
        """Grid notation such as ``FE.P.2``."""
        link = "P" if self.link == "probit" else "L"
        return f"{_METHOD_TAG[self.method]}.{link}.{int(self.fcs_mode)}"

    @property
    def has_fixed_effect(self) -> bool:
        return self.fcs_mode is not FcsMode.CONSOLIDATED

    @property
    def n_variances(self) -> int:
        return 2 if self.fcs_mode is FcsMode.SEPARATE else 1

    def prior_kind(self) -> str:
        if self.method is Method.MEASE:
            return "mease-penalty"
        if self.method is Method.FIXED_VARIANCE:
            return "normal-fixed"
        return "normal-separate" if self.fcs_mode is FcsMode.SEPARATE else "normal-pooled"

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


@dataclass
class ParameterVector:
    """Fixed FCS effect and the team-effect variance component(s).

    ``variances`` holds ``(sigma2_t,)`` for pooled/consolidated models and
    ``(sigma2_fbs, sigma2_fcs)`` for the separate-variance model.
    """

    beta: float | None
    variances: tuple[float, ...]

    def __post_init__(self):
        self.variances = tuple(float(v) for v in self.variances)
        if not self.variances or any(not v > 0 for v in self.variances):
            raise ValueError(f"variance components must be positive, got {self.variances}")
        if self.beta is not None:
            self.beta = float(self.beta)

    def team_variances(self, is_fcs: np.ndarray) -> np.ndarray:
        """Per-team prior variance vector (length ``p + q``)."""
        if len(self.variances) == 1:
            return np.full(is_fcs.shape[0], self.variances[0])
        return np.where(is_fcs, self.variances[1], self.variances[0])

    def as_array(self) -> np.ndarray:
        head = [] if self.beta is None else [self.beta]
        return np.array(head + list(self.variances))


@dataclass
class LatentState:
    """Team effects and (optionally) their conditional covariance."""

    eta: np.ndarray
    cov: np.ndarray | None = None

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=float)


@dataclass
class FitResult:
    """Outcome of any fitting engine.

    ``eta_hat`` are the team ratings (conditional means / EBLUPs),
    ``cond_cov`` their conditional covariance (full matrix).
    """

    config: ModelConfig
    params: ParameterVector | None
    eta_hat: np.ndarray
    cond_cov: np.ndarray
    loglik_approx: float
    iterations: int
    converged: bool
    warnings: list[str] = field(default_factory=list)
    team_names: list[str] | None = None
    is_fcs: np.ndarray | None = None

    @property
    def cond_var(self) -> np.ndarray:
        return np.diag(self.cond_cov).copy()

    @property
    def std_error(self) -> np.ndarray:
        return np.sqrt(self.cond_var)


# ---------------------------------------------------------------------------
# links
# ---------------------------------------------------------------------------


def win_probability(link: str, nu):
    """Probability of a home win at linear predictor ``nu``."""
    nu = np.asarray(nu, dtype=float)
    if link == "probit":
        out = ndtr(nu)
    elif link == "logit":
        out = expit(nu)
    else:
        raise ConfigError(f"unknown link {link!r}")
    return out if out.ndim else float(out)


def _tail_coefficients(terms: int) -> np.ndarray:
    """Coefficients ``a_k`` of ``log(sum_n (-1)^n (2n-1)!! e^n) = sum_k a_k e^k``."""
    s = [1.0]
    dfact = 1.0
    for n in range(1, terms + 1):
        dfact *= 2 * n - 1
        s.append((-1) ** n * dfact)
    a = [0.0] * (terms + 1)
    for n in range(1, terms + 1):
        a[n] = (n * s[n] - sum(k * a[k] * s[n - k] for k in range(1, n))) / n
    return np.array(a[1:])


_TAIL_A = _tail_coefficients(_TAIL_TERMS)
_TAIL_K = 2.0 * np.arange(1, _TAIL_TERMS + 1)


def _tail_derivatives(x, order):
    """Derivatives 1..order of ``log Phi(x)`` for ``x < _TAIL`` by the asymptotic series.

    ``log Phi(x) = -x^2/2 - log(-x) - log sqrt(2 pi) + sum_k a_k x^(-2k)``,
    differentiated term by term, so no cancellation occurs.
    """
    xi = 1.0 / x[:, None]
    k = _TAIL_K
    powers = xi ** k  # x^(-2k)
    lead = [-x - 1.0 / x, -1.0 + x ** -2, -2.0 * x ** -3, 6.0 * x ** -4]
    out = []
    fall = np.ones_like(k)
    for j in range(1, order + 1):
        fall = fall * (-(k + j - 1))
        out.append(lead[j - 1] + (powers * xi ** j) @ (_TAIL_A * fall))
    return out


def log_probit_derivatives(x, order: int = 2) -> np.ndarray:
    """Derivatives of ``log Phi(x)`` of orders ``0..order`` (rows)."""
    if order > 4:
        raise ValueError("derivatives are available up to order 4")
    x = np.asarray(x, dtype=float)
    shape = x.shape
    x = x.ravel()
    out = np.empty((order + 1, x.size))
    out[0] = log_ndtr(x)
    if order == 0:
        return out.reshape((order + 1,) + shape)
    tail = x < _TAIL
    body = ~tail
    xb = x[body]
    lam = np.exp(-0.5 * xb * xb - _LOG_SQRT_2PI - log_ndtr(xb))
    xpl = xb + lam
    out[1][body] = lam
    if order >= 2:
        d2 = -lam * xpl
        out[2][body] = d2
    if order >= 3:
        xp2l = xpl + lam
        d3 = -d2 * xp2l - lam
        out[3][body] = d3
    if order >= 4:
        out[4][body] = -d3 * xp2l - d2 * (2.0 + 2.0 * d2)
    if tail.any():
        for j, dj in enumerate(_tail_derivatives(x[tail], order), start=1):
            out[j][tail] = dj
    return out.reshape((order + 1,) + shape)


def game_derivatives(link: str, nu, r, order: int = 2) -> np.ndarray:
    """Derivatives of ``log P(r_i | nu_i)`` in ``nu_i``, orders ``0..order``.

    Returns an array of shape ``(order + 1, n)``.
    """
    nu = np.asarray(nu, dtype=float)
    r = np.asarray(r, dtype=float)
    if link == "probit":
        s = 2.0 * r - 1.0
        d = log_probit_derivatives(s * nu, order)
        for k in range(1, order + 1, 2):
            d[k] *= s
        return d
    if link != "logit":
        raise ConfigError(f"unknown link {link!r}")
    out = np.empty((order + 1,) + nu.shape)
    out[0] = r * nu - np.logaddexp(0.0, nu)
    if order == 0:
        return out
    pi = expit(nu)
    v = pi * expit(-nu)
    out[1] = r - pi
    if order >= 2:
        out[2] = -v
    if order >= 3:
        out[3] = -v * (1.0 - 2.0 * pi)
    if order >= 4:
        out[4] = -v * (1.0 - 6.0 * v)
    return out


# ---------------------------------------------------------------------------
# design-level evaluations
# ---------------------------------------------------------------------------


def _check_state(design, eta):
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (design.n_teams,):
        raise ValueError(f"eta has shape {eta.shape}, expected ({design.n_teams},)")
    if not np.all(np.isfinite(eta)):
        raise ValueError("non-finite team effects")
    return eta


def linear_predictor(design, params: ParameterVector | None, eta) -> np.ndarray:
    """``nu = X beta + Z eta`` for every game (beta dropped when absent)."""
    eta = _check_state(design, eta)
    nu = eta[design.home] - eta[design.away]
    if design.X is not None and params is not None and params.beta is not None:
        nu = nu + design.X * params.beta
    return nu


def game_linear_predictor(home_effect, away_effect, x=0.0, beta=None) -> float:
    """Linear predictor of one game from its two team effects."""
    nu = float(home_effect) - float(away_effect)
    if beta is not None:
        nu += float(x) * float(beta)
    return nu


def conditional_loglik(design, outcomes, config: ModelConfig, params, eta) -> float:
    """``sum_i log P(r_i | eta)``."""
    nu = linear_predictor(design, params, eta)
    return float(game_derivatives(config.link, nu, outcomes, 0)[0].sum())


def mease_penalty_derivatives(eta, order: int = 2) -> np.ndarray:
    """Derivatives of ``log Phi(eta) + log Phi(-eta)`` per team."""
    eta = np.asarray(eta, dtype=float)
    plus = log_probit_derivatives(eta, order)
    minus = log_probit_derivatives(-eta, order)
    sign = np.array([(-1.0) ** k for k in range(order + 1)])
    sign = sign.reshape((-1,) + (1,) * eta.ndim)
    return plus + sign * minus


def random_effect_logdensity(kind: str, params: ParameterVector | None, eta, is_fcs=None) -> float:
    """Log prior density of the team effects.

    Normal kinds are fully normalized; ``"mease-penalty"`` returns
    ``sum_j [log Phi(eta_j) + log Phi(-eta_j)]`` without its constant.
    """
    eta = np.asarray(eta, dtype=float)
    if kind == "mease-penalty":
        return float(mease_penalty_derivatives(eta, 0)[0].sum())
    if is_fcs is None:
        is_fcs = np.zeros(eta.shape[0], dtype=bool)
    d = params.team_variances(np.asarray(is_fcs, dtype=bool))
    return float(-0.5 * np.sum(LOG_2PI + np.log(d) + eta * eta / d))


def _prior_derivatives(config, params, design, eta):
    """Value, gradient and Hessian diagonal of the log prior."""
    if config.prior_kind() == "mease-penalty":
        d = mease_penalty_derivatives(eta, 2)
        return float(d[0].sum()), d[1], d[2]
    var = params.team_variances(design.is_fcs)
    val = float(-0.5 * np.sum(LOG_2PI + np.log(var) + eta * eta / var))
    return val, -eta / var, -1.0 / var


def scatter_hessian(design, w) -> sparse.csr_matrix:
    """``Z' diag(w) Z`` as a sparse matrix with fill only on pairs that met."""
    m = design.n_teams
    h, a = design.home, design.away
    rows = np.concatenate([h, a, h, a])
    cols = np.concatenate([h, a, a, h])
    vals = np.concatenate([w, w, -w, -w])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(m, m))


def scatter_vector(design, w) -> np.ndarray:
    """``Z' w``."""
    m = design.n_teams
    return np.bincount(design.home, w, minlength=m) - np.bincount(design.away, w, minlength=m)


def joint_logdensity_h(design, outcomes, config: ModelConfig, params, eta):
    """Value, gradient and (sparse) Hessian of ``h(eta) = log f(r|eta) + log f(eta)``.

    The Hessian is ``Z' diag(l''(nu)) Z + diag(prior'')``; its negative is
    positive definite whenever the prior is normal.
    """
    eta = _check_state(design, eta)
    nu = linear_predictor(design, params, eta)
    d = game_derivatives(config.link, nu, outcomes, 2)
    pv, pg, ph = _prior_derivatives(config, params, design, eta)
    value = float(d[0].sum()) + pv
    grad = scatter_vector(design, d[1]) + pg
    hess = scatter_hessian(design, d[2]) + sparse.diags(ph)
    return value, grad, hess.tocsr()


def mease_penalty_density(x, normalize: bool = True):
    """Penalty curve ``Phi(x) Phi(-x)``, optionally scaled to integrate to one."""
    x = np.asarray(x, dtype=float)
    y = ndtr(x) * ndtr(-x)
    if normalize:
        y = y / mease_penalty_constant()
    return y


def mease_penalty_constant() -> float:
    """``int Phi(x) Phi(-x) dx``, which equals ``1/sqrt(pi)``."""
    return 1.0 / math.sqrt(math.pi)


def marginal_win_probability(link: str, mean: float, var: float) -> float:
    """``E[F(nu)]`` for ``nu ~ N(mean, var)`` by adaptive quadrature."""
    from scipy import integrate

    if var <= 0:
        return float(win_probability(link, mean))
    sd = math.sqrt(var)

    def integrand(z):
        return float(win_probability(link, mean + sd * z)) * math.exp(-0.5 * z * z - _LOG_SQRT_2PI)

    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(val)


def predict_win_probability(fit: "FitResult", home: int, away: int, fcs_visit: int = 0) -> float:
    """Probability that ``home`` beats ``away`` under a fit's conditional distribution.

    The team effects are integrated over ``N(eta_hat, cond_cov)``.
    """
    mean = float(fit.eta_hat[home] - fit.eta_hat[away])
    if fcs_visit and fit.params is not None and fit.params.beta is not None:
        mean += fit.params.beta
    c = fit.cond_cov
    var = float(c[home, home] + c[away, away] - 2.0 * c[home, away])
    return marginal_win_probability(fit.config.link, mean, var)
