"""ARCH-X volatility model with nonnegative covariate effects.

The conditional variance is linear in the parameter,

    sigma_t^2 = theta' F_{t-1},   F_{t-1} = (1, y_{t-1}^2, ..., y_{t-q}^2, x_{t-1}')',

so the parameter vector is ordered as (intercept, ARCH lags, covariates).
Estimation is by Gaussian QMLE over a box. The intercept lies in
``[delta_lower, delta_upper]`` and every other coefficient in ``[0, upper]``.

Each coordinate has a role (see :mod:`uniform_lr.regression`). The intercept
is always ``delta``. ARCH lags default to ``delta``: they stay nonnegative
during estimation but are treated as interior by the critical value.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from ._pipeline import finish_test
from .critical_value import DEFAULT_B_CAP
from .errors import (
    ConfigurationError,
    DimensionMismatch,
    InfeasibleTheta,
    NonConvergence,
    NonPositiveKappaWarning,
    SingularHessian,
)
from .limit_law import DEFAULT_DRAWS, GaussianLimit
from .regression import ROLES
from .report import TestReport

__all__ = [
    "ArchData",
    "ArchParamSpace",
    "ArchFit",
    "arch_variance",
    "arch_loglik",
    "arch_score",
    "arch_hessian",
    "arch_qmle",
    "one_step_estimator",
    "arch_information",
    "arch_omega",
    "arch_covariances",
    "fit_arch",
    "arch_test",
    "KAPPA_FLOOR",
    "KKT_TOL",
]

KAPPA_FLOOR = 1e-6
KKT_TOL = 1e-6
_N_STARTS = 5


@dataclass(frozen=True)
class ArchData:
    """Returns ``y`` and covariates ``x`` aligned so that row ``t`` holds ``x_{t-1}``.

    Parameters
    ----------
    y : array_like, shape (n,)
    x : array_like, shape (n, p), optional
        Nonnegative covariates; ``p`` may be zero.
    q : int
        Number of squared-return lags.
    presample : array_like, shape (q,), optional
        Squared returns preceding ``y[0]`` in time order (oldest first).
        Defaults to ``mean(y^2)`` for every lag.
    names : sequence of str, optional
        Covariate names.
    """

    y: np.ndarray
    x: np.ndarray | None = None
    q: int = 1
    presample: np.ndarray | None = None
    names: tuple | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        n = y.size
        x = np.zeros((n, 0)) if self.x is None else np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != n:
            raise DimensionMismatch(f"x has {x.shape[0]} rows but y has {n}")
        q = int(self.q)
        if q < 0:
            raise ConfigurationError("q must be nonnegative")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValueError("data must be finite")
        if np.any(x < 0):
            raise ValueError("covariates must be nonnegative")
        if n <= q + x.shape[1] + 1:
            raise ConfigurationError(f"need more than {q + x.shape[1] + 1} observations, got {n}")
        if self.presample is None:
            pre = np.full(q, np.mean(y**2))
        else:
            pre = np.asarray(self.presample, dtype=float).reshape(-1)
            if pre.size != q or np.any(pre < 0):
                raise DimensionMismatch(f"presample needs {q} nonnegative squared returns")
        names = tuple(f"x{i + 1}" for i in range(x.shape[1])) if self.names is None else tuple(self.names)
        if len(names) != x.shape[1]:
            raise ConfigurationError("names must have one entry per covariate")
        for attr, val in (("y", y), ("x", x), ("q", q), ("presample", pre), ("names", names)):
            object.__setattr__(self, attr, val)
        y2 = np.concatenate([pre, y**2])
        lags = [y2[q - k : q - k + n] for k in range(1, q + 1)]
        F = np.column_stack([np.ones(n), *lags, x]) if (q or x.shape[1]) else np.ones((n, 1))
        F.setflags(write=False)
        object.__setattr__(self, "_F", F)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def dim(self) -> int:
        return 1 + self.q + self.p

    @property
    def F(self) -> np.ndarray:
        """Regressor matrix of the variance equation, shape ``(n, 1 + q + p)``."""
        return self._F

    @property
    def parameter_names(self) -> list:
        return ["const"] + [f"lag{k}" for k in range(1, self.q + 1)] + list(self.names)


@dataclass(frozen=True)
class ArchParamSpace:
    """Box bounds and roles, one entry per parameter (intercept, lags, covariates)."""

    lower: np.ndarray
    upper: np.ndarray
    roles: tuple
    gamma_interior: tuple

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        roles = tuple(self.roles)
        if not (lower.shape == upper.shape == (len(roles),)):
            raise DimensionMismatch("bounds and roles must have equal length")
        if not lower[0] > 0:
            raise ConfigurationError("intercept lower bound must be positive")
        if np.any(lower[1:] != 0.0) or np.any(upper <= lower):
            raise ConfigurationError("non-intercept coefficients must have boxes [0, upper] with upper > 0")
        if roles[0] != "delta" or any(r not in ROLES for r in roles):
            raise ConfigurationError(f"invalid roles {roles}")
        n_gamma = roles.count("gamma")
        if n_gamma == 0:
            raise ConfigurationError("at least one covariate must be tested (role 'gamma')")
        interior = tuple(bool(g) for g in self.gamma_interior)
        if len(interior) != n_gamma:
            raise ConfigurationError("gamma_interior needs one flag per gamma coordinate")
        for attr, val in (("lower", lower), ("upper", upper), ("roles", roles), ("gamma_interior", interior)):
            object.__setattr__(self, attr, val)

    @classmethod
    def for_data(
        cls,
        data: ArchData,
        covariate_roles: Sequence[str],
        lag_roles: Sequence[str] | None = None,
        gamma_interior: Sequence[bool] | None = None,
        delta_lower: float | None = None,
        delta_upper: float | None = None,
        gamma_upper: float = 1e3,
        beta_upper: float = 1e3,
        lag_upper: float = 1e3,
    ) -> "ArchParamSpace":
        """Default box for ``data``.

        The intercept box is ``[1e-8, 1e3] * mean(y^2)`` unless given.
        """
        covariate_roles = tuple(covariate_roles)
        lag_roles = ("delta",) * data.q if lag_roles is None else tuple(lag_roles)
        if len(covariate_roles) != data.p or len(lag_roles) != data.q:
            raise ConfigurationError(
                f"need {data.p} covariate roles and {data.q} lag roles, "
                f"got {len(covariate_roles)} and {len(lag_roles)}"
            )
        m2 = float(np.mean(data.y**2))
        if not m2 > 0:
            raise ConfigurationError("returns are identically zero")
        roles = ("delta",) + lag_roles + covariate_roles
        upper_for = {"gamma": gamma_upper, "beta": beta_upper, "delta": lag_upper}
        lower = np.zeros(len(roles))
        upper = np.array([upper_for.get(r, np.nan) for r in roles])
        lower[0] = 1e-8 * m2 if delta_lower is None else delta_lower
        upper[0] = 1e3 * m2 if delta_upper is None else delta_upper
        n_gamma = roles.count("gamma")
        interior = (False,) * n_gamma if gamma_interior is None else tuple(gamma_interior)
        return cls(lower, upper, roles, interior)

    def indices(self, role: str) -> np.ndarray:
        return np.array([i for i, r in enumerate(self.roles) if r == role], dtype=np.int64)

    def restricted_upper(self) -> np.ndarray:
        up = self.upper.copy()
        up[self.indices("gamma")] = 0.0
        return up

    def contains(self, theta, restricted: bool = False, rtol: float = 1e-12) -> bool:
        upper = self.restricted_upper() if restricted else self.upper
        slack = rtol * np.maximum(1.0, np.abs(self.upper))
        return bool(np.all(theta >= self.lower - slack) and np.all(theta <= upper + slack))


def arch_variance(theta, data: ArchData) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (data.dim,):
        raise DimensionMismatch(f"theta has shape {theta.shape}, expected ({data.dim},)")
    return data.F @ theta


def _variance_checked(theta, data: ArchData, space: ArchParamSpace | None) -> np.ndarray:
    s2 = arch_variance(theta, data)
    if space is not None:
        if not space.contains(theta):
            raise InfeasibleTheta("theta lies outside the parameter box")
        floor = space.lower[0] * (1.0 - 1e-9)
    else:
        floor = 0.0
    if not np.all(s2 > floor):
        raise InfeasibleTheta("conditional variance falls below its lower bound")
    return s2


def arch_loglik(theta, data: ArchData, space: ArchParamSpace | None = None) -> float:
    """Gaussian quasi-log-likelihood ``sum_t -(log s_t^2 + y_t^2 / s_t^2) / 2``.

    Raises
    ------
    InfeasibleTheta
        When ``theta`` leaves ``space`` or a conditional variance is not positive.
    """
    s2 = _variance_checked(theta, data, space)
    return float(-0.5 * np.sum(np.log(s2) + data.y**2 / s2))


def arch_score(theta, data: ArchData, space: ArchParamSpace | None = None) -> np.ndarray:
    """Gradient ``sum_t (y_t^2 / s_t^4 - 1 / s_t^2) F_{t-1} / 2``."""
    s2 = _variance_checked(theta, data, space)
    w = 0.5 * (data.y**2 / s2**2 - 1.0 / s2)
    return data.F.T @ w


def arch_hessian(theta, data: ArchData, space: ArchParamSpace | None = None) -> np.ndarray:
    """Hessian ``-sum_t (2 y_t^2 / s_t^6 - 1 / s_t^4) F F' / 2``."""
    s2 = _variance_checked(theta, data, space)
    w = -0.5 * (2.0 * data.y**2 / s2**3 - 1.0 / s2**2)
    H = (data.F * w[:, None]).T @ data.F
    return 0.5 * (H + H.T)


def _kkt_residual(grad, theta, lower, upper, scale) -> float:
    """Projected-gradient residual of the minimization problem in scaled units."""
    g = grad * scale
    at_lower = theta <= lower + 1e-12 * np.maximum(1.0, np.abs(lower))
    at_upper = theta >= upper - 1e-12 * np.maximum(1.0, np.abs(upper))
    r = np.where(at_lower, np.minimum(g, 0.0), np.where(at_upper, np.maximum(g, 0.0), g))
    r = np.where(at_lower & at_upper, 0.0, r)
    return float(np.max(np.abs(r), initial=0.0))


class _Objective:
    """Average negative loglik in scaled coordinates ``u = theta / scale``."""

    def __init__(self, data: ArchData, scale):
        self.data = data
        self.scale = scale
        self.y2 = data.y**2
        self.Fs = data.F * scale[None, :]

    def value_grad(self, u):
        s2 = self.Fs @ u
        if not np.all(s2 > 0):
            return np.inf, np.zeros_like(u)
        n = s2.size
        val = 0.5 * np.sum(np.log(s2) + self.y2 / s2) / n
        w = 0.5 * (1.0 / s2 - self.y2 / s2**2) / n
        return val, self.Fs.T @ w

    def hessian(self, u):
        s2 = self.Fs @ u
        w = 0.5 * (2.0 * self.y2 / s2**3 - 1.0 / s2**2) / s2.size
        return (self.Fs * w[:, None]).T @ self.Fs


def _polish(obj: _Objective, u, lo, hi, iters: int = 20):
    """Projected Newton steps on the free coordinates."""
    f, g = obj.value_grad(u)
    for _ in range(iters):
        at_lo = (u <= lo) & (g > 0)
        at_hi = (u >= hi) & (g < 0)
        free = ~(at_lo | at_hi)
        if not free.any():
            break
        H = obj.hessian(u)[np.ix_(free, free)]
        try:
            step_f = -np.linalg.solve(H, g[free])
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step_f)) or g[free] @ step_f >= 0:
            break
        step = np.zeros_like(u)
        step[free] = step_f
        t = 1.0
        while t > 1e-8:
            cand = np.clip(u + t * step, lo, hi)
            fc, gc = obj.value_grad(cand)
            if fc <= f:
                break
            t *= 0.5
        else:
            break
        if np.array_equal(cand, u):
            break
        u, f, g = cand, fc, gc
    return u, f, g


def _starts(m2_scaled_dim: int, lo, hi):
    base = np.full(m2_scaled_dim, 0.05)
    base[0] = 0.5
    mult_other = [1.0, 0.2, 3.0, 0.01, 0.5]
    mult_const = [1.0, 0.8, 0.3, 0.95, 0.6]
    for a, b in zip(mult_const, mult_other):
        u = base * b
        u[0] = base[0] * a
        yield np.clip(u, lo, hi)


def arch_qmle(
    data: ArchData,
    space: ArchParamSpace,
    restricted: bool = False,
    initial: Sequence[np.ndarray] = (),
) -> np.ndarray:
    """Box-constrained Gaussian QMLE.

    L-BFGS-B with the analytic gradient on a rescaled parameter, followed by
    projected Newton polishing. Deterministic starts are tried in turn until
    one meets the KKT tolerance; extra starting values in ``initial`` (in the
    original units) are tried first and the best converged point wins.

    Parameters
    ----------
    data : ArchData
    space : ArchParamSpace
    restricted : bool
        Hold every gamma coordinate at zero.
    initial : sequence of arrays
        Additional feasible starting values.

    Raises
    ------
    NonConvergence
        No start reached a KKT residual below ``KKT_TOL``.
    """
    if space.lower.size != data.dim:
        raise DimensionMismatch(f"space has {space.lower.size} coordinates, data needs {data.dim}")
    m2 = float(np.mean(data.y**2))
    colmean = np.mean(data.F, axis=0)
    scale = m2 / np.where(colmean > 0, colmean, 1.0)
    scale[0] = m2
    obj = _Objective(data, scale)
    upper = space.restricted_upper() if restricted else space.upper
    lo, hi = space.lower / scale, upper / scale
    bounds = list(zip(lo, hi))

    candidates = [np.clip(np.asarray(t, dtype=float) / scale, lo, hi) for t in initial]
    best_u, best_f, worst = None, np.inf, np.inf
    n_extra = len(candidates)
    for k, u0 in enumerate([*candidates, *_starts(data.dim, lo, hi)]):
        if k >= n_extra and best_u is not None:
            break
        if k >= n_extra + _N_STARTS:
            break
        res = minimize(
            obj.value_grad, u0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-10},
        )
        u, f, g = _polish(obj, np.clip(res.x, lo, hi), lo, hi)
        kkt = _kkt_residual(g, u, lo, hi, np.ones_like(u))
        worst = min(worst, kkt)
        if kkt <= KKT_TOL and f < best_f:
            best_u, best_f = u, f
    if best_u is None:
        raise NonConvergence(f"QMLE did not meet the KKT tolerance (best residual {worst:.2e})")
    theta = best_u * scale
    return np.clip(theta, space.lower, upper)


def one_step_estimator(theta_hat, data: ArchData) -> np.ndarray:
    """One Newton-Raphson step ``theta - H^-1 s`` from ``theta_hat``.

    The result may lie outside the parameter box.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    H = arch_hessian(theta_hat, data)
    s = arch_score(theta_hat, data)
    try:
        step = np.linalg.solve(H, s)
    except np.linalg.LinAlgError as exc:
        raise SingularHessian("Hessian at the estimate is singular") from exc
    if not np.all(np.isfinite(step)):
        raise SingularHessian("Hessian at the estimate is singular")
    return theta_hat - step


def arch_information(theta, data: ArchData) -> np.ndarray:
    """Expected negative Hessian per observation, ``mean(F F' / (2 s^4))``."""
    s2 = _variance_checked(theta, data, None)
    w = 0.5 / (s2**2 * data.n)
    m = (data.F * w[:, None]).T @ data.F
    return 0.5 * (m + m.T)


def _is_pd(m) -> bool:
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return False
    return True


def arch_omega(theta_hat, data: ArchData, fallback: bool = True):
    """``-H / n`` at ``theta_hat`` and the name of the estimator used.

    When the observed Hessian is not negative definite and ``fallback`` is
    set, the information form :func:`arch_information` is returned instead.
    """
    omega = -arch_hessian(theta_hat, data) / data.n
    if fallback and not _is_pd(omega):
        return arch_information(theta_hat, data), "information"
    return omega, "observed"


def arch_covariances(theta_hat, data: ArchData, beta_idx=(), fallback: bool = True):
    """Hessian-based covariance estimates at ``theta_hat``.

    Returns
    -------
    omega_hat : ndarray
        ``-H / n`` (see :func:`arch_omega` for the fallback).
    sigma_hat : ndarray
        ``kappa / 2 * omega_hat``.
    kappa_hat : float
        ``mean(e^4 - 1)`` with ``e = y / sigma``, floored at ``KAPPA_FLOOR``
        (with a warning) when not positive.
    sigma_beta_check : ndarray
        ``kappa / 2`` times the beta block of ``omega_hat^-1``.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    omega, _ = arch_omega(theta_hat, data, fallback)
    e = data.y / np.sqrt(arch_variance(theta_hat, data))
    kappa = float(np.mean(e**4 - 1.0))
    if not kappa > 0:
        warnings.warn(
            f"estimated kappa {kappa:.3g} is not positive; using {KAPPA_FLOOR}",
            NonPositiveKappaWarning,
            stacklevel=2,
        )
        kappa = KAPPA_FLOOR
    try:
        omega_inv = np.linalg.inv(omega)
    except np.linalg.LinAlgError as exc:
        raise SingularHessian("Hessian at the estimate is singular") from exc
    bi = np.asarray(beta_idx, dtype=np.int64)
    sigma_beta = 0.5 * kappa * omega_inv[np.ix_(bi, bi)]
    return omega, 0.5 * kappa * omega, kappa, 0.5 * (sigma_beta + sigma_beta.T)


@dataclass(frozen=True)
class ArchFit:
    theta_hat: np.ndarray
    theta_tilde: np.ndarray
    theta_check: np.ndarray
    kappa_hat: float
    omega_hat: np.ndarray
    sigma_hat: np.ndarray
    sigma_beta_check: np.ndarray
    loglik_hat: float
    loglik_tilde: float
    omega_source: str = "observed"


def fit_arch(data: ArchData, space: ArchParamSpace) -> ArchFit:
    theta_tilde = arch_qmle(data, space, restricted=True)
    theta_hat = arch_qmle(data, space, initial=[theta_tilde])
    l_hat = arch_loglik(theta_hat, data, space)
    l_tilde = arch_loglik(theta_tilde, data, space)
    if l_hat < l_tilde:
        # The restricted optimum is feasible for the unrestricted problem.
        theta_hat, l_hat = theta_tilde.copy(), l_tilde
    omega, sigma, kappa, sigma_beta = arch_covariances(theta_hat, data, space.indices("beta"))
    return ArchFit(
        theta_hat=theta_hat,
        theta_tilde=theta_tilde,
        theta_check=one_step_estimator(theta_hat, data),
        kappa_hat=kappa,
        omega_hat=omega,
        sigma_hat=sigma,
        sigma_beta_check=sigma_beta,
        loglik_hat=l_hat,
        loglik_tilde=l_tilde,
        omega_source=arch_omega(theta_hat, data)[1],
    )


def arch_test(
    data: ArchData,
    space: ArchParamSpace,
    alpha: float = 0.05,
    eta: float | None = None,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
    b_cap: float = DEFAULT_B_CAP,
) -> TestReport:
    """Uniform LR test of ``gamma = 0`` in an ARCH-X model.

    Parameters
    ----------
    data : ArchData
    space : ArchParamSpace
        Bounds and roles; see :meth:`ArchParamSpace.for_data`.
    alpha, eta, draws, seed, b_cap
        As in :func:`uniform_lr.regression.regression_test`.

    Returns
    -------
    TestReport
    """
    t0 = time.perf_counter()
    fit = fit_arch(data, space)
    lr = max(0.0, 2.0 * (fit.loglik_hat - fit.loglik_tilde))
    gi, bi = space.indices("gamma"), space.indices("beta")
    limit = GaussianLimit(fit.omega_hat, fit.sigma_hat, np.concatenate([gi, bi]))
    t1 = time.perf_counter()
    return finish_test(
        model="arch",
        n=data.n,
        lr_stat=lr,
        limit=limit,
        beta_check=fit.theta_check[bi],
        sigma_beta_check=fit.sigma_beta_check,
        gamma_interior=space.gamma_interior,
        alpha=alpha,
        eta=eta,
        draws=draws,
        seed=seed,
        b_cap=b_cap,
        names=data.parameter_names,
        roles=list(space.roles),
        estimates={
            "theta_hat": fit.theta_hat,
            "theta_tilde": fit.theta_tilde,
            "theta_check": fit.theta_check,
            "loglik_hat": fit.loglik_hat,
            "loglik_tilde": fit.loglik_tilde,
        },
        covariances={
            "omega_hat": fit.omega_hat,
            "sigma_hat": fit.sigma_hat,
            "kappa_hat": fit.kappa_hat,
        },
        diagnostics={"q": data.q, "omega_source": fit.omega_source, "d_gamma": int(gi.size), "d_beta": int(bi.size)},
        timings={"estimation_s": t1 - t0},
    )
