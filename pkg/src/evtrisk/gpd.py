"""Generalised Pareto tail model.

Distribution functions, seeded sampling, the log-likelihood with its
analytic score, maximum-likelihood fitting over threshold exceedances and
the semi-parametric tail probability of the full loss distribution.

The GPD with shape ``xi`` and scale ``beta`` has CDF
``1 - (1 + xi*x/beta)**(-1/xi)`` for ``xi != 0`` and ``1 - exp(-x/beta)``
at ``xi == 0``; support is ``[0, inf)`` for ``xi >= 0`` and
``[0, -beta/xi]`` for ``xi < 0``. All ``xi != 0`` branches are written with
``log1p``/``expm1`` so they are continuous through ``xi = 0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from evtrisk.errors import ConvergenceError, DataError, SupportError, TooFewExceedancesError

MIN_EXCEEDANCES = 10
HESSIAN_REL_STEP = 1e-5
PARAM_TOL = 1e-8
# below this |xi| the series expansion of the score is used
_XI_SERIES = 1e-7


@dataclass(frozen=True)
class GpdParams:
    xi: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not math.isfinite(self.xi):
            raise ValueError("xi must be finite")

    @property
    def tail_index(self) -> float:
        """``1/xi``; infinite for exponential (``xi = 0``) tails."""
        return math.inf if self.xi == 0 else 1.0 / self.xi

    @property
    def upper_endpoint(self) -> float:
        return -self.beta / self.xi if self.xi < 0 else math.inf

    def has_finite_moment(self, k: int) -> bool:
        """Whether ``E[X**k]`` is finite (true iff ``xi < 1/k``)."""
        return self.xi < 1.0 / k


@dataclass(frozen=True)
class GpdFit:
    """Fitted tail model over threshold ``u``.

    ``n_u`` is normally an integer count but may be fractional when the fit
    represents averaged parameters. ``prob`` is the non-exceedance frequency
    ``1 - n_u/n`` as observed (or as reported for a reference fit).
    """

    params: GpdParams
    u: float
    n: int
    n_u: float
    prob: float | None = None
    se_xi: float | None = None
    se_beta: float | None = None
    loglik: float | None = None
    label: str = ""
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not 0 < self.n_u <= self.n:
            raise ValueError(f"need 0 < n_u <= n, got n_u={self.n_u}, n={self.n}")
        if self.prob is None:
            object.__setattr__(self, "prob", 1.0 - self.n_u / self.n)

    @property
    def xi(self) -> float:
        return self.params.xi

    @property
    def beta(self) -> float:
        return self.params.beta

    @property
    def exceedance_rate(self) -> float:
        return self.n_u / self.n

    def to_dict(self) -> dict:
        d = {
            "xi": self.xi,
            "beta": self.beta,
            "u": self.u,
            "n": self.n,
            "n_u": self.n_u,
            "prob": self.prob,
            "se_xi": self.se_xi,
            "se_beta": self.se_beta,
            "loglik": self.loglik,
        }
        if self.label:
            d["label"] = self.label
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GpdFit":
        n_u = d["n_u"]
        if float(n_u).is_integer():
            n_u = int(n_u)
        return cls(
            params=GpdParams(float(d["xi"]), float(d["beta"])),
            u=float(d["u"]),
            n=int(d["n"]),
            n_u=n_u,
            prob=d.get("prob"),
            se_xi=d.get("se_xi"),
            se_beta=d.get("se_beta"),
            loglik=d.get("loglik"),
            label=d.get("label", ""),
        )

    def shifted(self, c: float) -> "GpdFit":
        """Same tail shape with the threshold moved by ``c``."""
        return replace(self, u=self.u + c)


# -- distribution functions --------------------------------------------------


def _log1p_ratio(z):
    """``log1p(z)/z`` with its limit 1 at ``z = 0``."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.log1p(z) / z
    return np.where(np.abs(z) < 1e-300, 1.0, np.where(np.abs(z) < 1e-8, 1.0 - z / 2.0, r))


def _expm1_ratio(z):
    """``expm1(z)/z`` with its limit 1 at ``z = 0``."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        r = np.expm1(z) / z
    return np.where(np.abs(z) < 1e-8, 1.0 + z / 2.0, r)


def _check_support(x: np.ndarray, p: GpdParams) -> None:
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise SupportError("GPD support starts at 0")
    if p.xi < 0 and np.any(x > p.upper_endpoint * (1 + 1e-12)):
        raise SupportError(f"x exceeds the upper endpoint {p.upper_endpoint:g}")


def _cum_hazard(x: np.ndarray, p: GpdParams) -> np.ndarray:
    """``log1p(xi*x/beta)/xi`` (``x/beta`` at ``xi = 0``); ``inf`` at a finite endpoint."""
    y = x / p.beta
    z = np.maximum(p.xi * y, -1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(z <= -1.0, np.inf, y * _log1p_ratio(z))
    return np.where(y == 0, 0.0, out)


def gpd_sf(x, p: GpdParams):
    """Survival function ``1 - gpd_cdf``."""
    x = np.asarray(x, dtype=float)
    _check_support(x, p)
    out = np.exp(-_cum_hazard(x, p))
    return out[()] if out.ndim == 0 else out


def gpd_cdf(x, p: GpdParams):
    x = np.asarray(x, dtype=float)
    _check_support(x, p)
    out = -np.expm1(-_cum_hazard(x, p))
    return out[()] if out.ndim == 0 else out


def gpd_quantile(q, p: GpdParams):
    """Inverse CDF on ``[0, 1)`` (``q = 1`` allowed only for bounded tails)."""
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)) or np.any(np.isnan(q)):
        raise ValueError("quantile level must lie in [0, 1)")
    if p.xi >= 0 and np.any(q == 1):
        raise ValueError("the GPD quantile at q = 1 is infinite for xi >= 0")
    with np.errstate(divide="ignore"):
        lg = -np.log1p(-q)  # -ln(1-q) >= 0
    with np.errstate(invalid="ignore"):
        out = np.where(lg == 0, 0.0, p.beta * lg * _expm1_ratio(p.xi * lg))
    if p.xi < 0:
        out = np.where(q == 1, p.upper_endpoint, out)
    return out[()] if out.ndim == 0 else out


def gpd_sample(p: GpdParams, count: int, seed: int) -> np.ndarray:
    """Inverse-CDF sample: ``gpd_quantile(default_rng(seed).random(count))``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    u = np.random.default_rng(seed).random(count)
    return gpd_quantile(u, p)


# -- likelihood --------------------------------------------------------------


def gpd_loglik(p: GpdParams | tuple, exceedances, strict: bool = False) -> float:
    """Log-likelihood of excesses over the threshold.

    Outside the feasible region (any ``1 + xi*x/beta <= 0`` or negative
    data) the result is ``-inf``, or :class:`SupportError` when ``strict``.
    """
    xi, beta = (p.xi, p.beta) if isinstance(p, GpdParams) else p
    x = np.asarray(exceedances, dtype=float)
    n = len(x)
    if not beta > 0 or np.any(x < 0):
        if strict:
            raise SupportError("negative exceedance or non-positive scale")
        return -math.inf
    if xi == 0:
        return float(-n * math.log(beta) - np.sum(x) / beta)
    z = xi * x / beta
    if np.any(z <= -1):
        if strict:
            raise SupportError("1 + xi*x/beta must be positive for every exceedance")
        return -math.inf
    # (1 + 1/xi) * sum(log1p(z)), written so tiny |xi| does not overflow
    return float(-n * math.log(beta) - np.sum(np.log1p(z)) - np.sum((x / beta) * _log1p_ratio(z)))


def gpd_score(p: GpdParams | tuple, exceedances) -> np.ndarray:
    """Analytic gradient of :func:`gpd_loglik` with respect to ``(xi, beta)``."""
    xi, beta = (p.xi, p.beta) if isinstance(p, GpdParams) else p
    x = np.asarray(exceedances, dtype=float)
    n = len(x)
    y = x / beta
    if abs(xi) < _XI_SERIES:
        # first-order expansion in xi around the exponential case
        d_xi = 0.5 * np.sum(y**2) - np.sum(y) + xi * (np.sum(y**2) - (2.0 / 3.0) * np.sum(y**3))
        d_beta = -n / beta + (1.0 + xi) * np.sum(y / (1.0 + xi * y)) / beta
        return np.array([d_xi, d_beta])
    t = 1.0 + xi * y
    d_xi = np.sum(np.log1p(xi * y)) / xi**2 - (1.0 + 1.0 / xi) * np.sum(y / t)
    d_beta = -n / beta + (1.0 + xi) * np.sum(y / t) / beta
    return np.array([d_xi, d_beta])


def _numerical_hessian(f, theta: np.ndarray, rel_step: float = HESSIAN_REL_STEP) -> np.ndarray:
    h = rel_step * np.maximum(np.abs(theta), 1.0)
    k = len(theta)
    H = np.empty((k, k))
    f0 = f(theta)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        H[i, i] = (f(theta + ei) - 2 * f0 + f(theta - ei)) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                f(theta + ei + ej) - f(theta + ei - ej) - f(theta - ei + ej) + f(theta - ei - ej)
            ) / (4 * h[i] * h[j])
    return H


# -- fitting -----------------------------------------------------------------


def pwm_start(y: np.ndarray) -> tuple[float, float]:
    """Probability-weighted-moment estimates of ``(xi, beta)``."""
    y = np.sort(y)
    n = len(y)
    a0 = float(np.mean(y))
    pp = (np.arange(1, n + 1) - 0.35) / n
    a1 = float(np.mean((1 - pp) * y))
    denom = a0 - 2 * a1
    if denom <= 0 or a0 <= 0:
        return 0.0, max(a0, 1e-8)
    xi = 2.0 - a0 / denom
    beta = 2.0 * a0 * a1 / denom
    if beta <= 0 or (xi < 0 and y[-1] >= -beta / xi):
        return 0.0, a0
    return xi, beta


def threshold_from_count(losses, n_u: int) -> float:
    """The ``(n_u + 1)``-th largest loss.

    Exactly ``n_u`` losses lie strictly above it when there are no ties at
    the threshold; with ties fewer do, and the fit reports the realised count.
    """
    x = np.asarray(getattr(losses, "losses", losses), dtype=float)
    n = len(x)
    if not 1 <= n_u < n:
        raise DataError(f"exceedance count must satisfy 1 <= n_u < n (n={n}), got {n_u}")
    return float(np.sort(x)[n - n_u - 1])


def fit_exceedances(y, start: tuple[float, float] | None = None) -> dict:
    """Maximum-likelihood ``(xi, beta)`` for excesses ``y`` (all ``> 0``).

    Works in ``(xi, log beta)``: Nelder-Mead from the PWM start, then a
    BFGS polish with the analytic score. Returns a dict with params, standard
    errors (``None`` if the observed information is not positive definite),
    log-likelihood and optimiser diagnostics.
    """
    y = np.asarray(y, dtype=float)
    if start is None:
        start = pwm_start(y)
    scale = len(y)

    def nll(theta):
        v = gpd_loglik((theta[0], math.exp(theta[1])), y)
        return -v / scale if math.isfinite(v) else math.inf

    def nll_grad(theta):
        xi, beta = theta[0], math.exp(theta[1])
        g = gpd_score((xi, beta), y)
        return -np.array([g[0], g[1] * beta]) / scale

    x0 = np.array([start[0], math.log(start[1])])
    nm = optimize.minimize(
        nll, x0, method="Nelder-Mead",
        options={"xatol": PARAM_TOL, "fatol": 1e-12, "maxiter": 4000, "maxfev": 8000},
    )
    best = nm
    polish = None
    if math.isfinite(nm.fun):
        polish = optimize.minimize(nll, nm.x, jac=nll_grad, method="BFGS", options={"gtol": 1e-10})
        if math.isfinite(polish.fun) and polish.fun <= nm.fun:
            best = polish
    theta = best.x
    xi, beta = float(theta[0]), float(math.exp(theta[1]))
    grad = gpd_score((xi, beta), y)
    diag = {
        "nelder_mead_success": bool(nm.success),
        "nelder_mead_iterations": int(nm.nit),
        "polish_success": bool(polish.success) if polish is not None else False,
        "score": [float(g) for g in grad],
    }
    grad_ok = np.all(np.abs(grad) * np.array([1.0, beta]) <= 1e-4 * max(len(y), 1))
    if not math.isfinite(best.fun) or not (nm.success or grad_ok):
        raise ConvergenceError("GPD likelihood optimisation did not converge", diag)
    if not grad_ok:
        raise ConvergenceError("GPD optimum has a non-vanishing score", diag)

    loglik = gpd_loglik((xi, beta), y)
    H = _numerical_hessian(lambda th: gpd_loglik((th[0], th[1]), y), np.array([xi, beta]))
    se_xi = se_beta = None
    with np.errstate(all="ignore"):
        eig = np.linalg.eigvalsh(-H) if np.all(np.isfinite(H)) else np.array([-1.0])
    if np.all(eig > 0):
        cov = np.linalg.inv(-H)
        se_xi, se_beta = float(math.sqrt(cov[0, 0])), float(math.sqrt(cov[1, 1]))
    else:
        warnings.warn("observed information not positive definite; standard errors omitted", RuntimeWarning)
    diag["hessian"] = H.tolist()
    return {"params": GpdParams(xi, beta), "se_xi": se_xi, "se_beta": se_beta, "loglik": loglik, "diagnostics": diag}


def fit_gpd(losses, threshold_value: float | None = None, threshold_count: int | None = None, label: str = "") -> GpdFit:
    """Fit the GPD to the losses strictly above a threshold.

    Give exactly one of ``threshold_value`` (u) or ``threshold_count``
    (N_u, converted with :func:`threshold_from_count`).
    """
    x = np.asarray(getattr(losses, "losses", losses), dtype=float)
    if not label:
        label = getattr(losses, "label", "") or ""
        pos = getattr(losses, "position", None)
        if label and pos:
            label = f"{label}-{pos}"
    if (threshold_value is None) == (threshold_count is None):
        raise ValueError("give exactly one of threshold_value or threshold_count")
    if not np.all(np.isfinite(x)):
        raise DataError("losses must be finite")
    u = float(threshold_value) if threshold_value is not None else threshold_from_count(x, threshold_count)
    y = x[x > u] - u
    n_u = len(y)
    if n_u < MIN_EXCEEDANCES:
        raise TooFewExceedancesError(
            f"too few exceedances: {n_u} above u={u:g} (need at least {MIN_EXCEEDANCES})"
        )
    res = fit_exceedances(y)
    return GpdFit(
        params=res["params"],
        u=u,
        n=len(x),
        n_u=n_u,
        prob=1.0 - n_u / len(x),
        se_xi=res["se_xi"],
        se_beta=res["se_beta"],
        loglik=res["loglik"],
        label=label,
        diagnostics=res["diagnostics"],
    )


def exceedances(losses, u: float) -> np.ndarray:
    """Sorted excesses ``x - u`` of the losses strictly above ``u``."""
    x = np.asarray(getattr(losses, "losses", losses), dtype=float)
    return np.sort(x[x > u] - u)


def tail_prob(x, fit: GpdFit):
    """``P(X > x)`` for ``x >= u`` under the semi-parametric tail model."""
    x = np.asarray(x, dtype=float)
    if np.any(x < fit.u):
        raise ValueError(f"tail probability is only modelled at or above u={fit.u:g}")
    out = fit.exceedance_rate * gpd_sf(x - fit.u, fit.params)
    return out[()] if np.ndim(out) == 0 else out
