"""Linear regression with sign-constrained coefficients.

Every regressor has a role:

``gamma``
    tested, ``H0: gamma = 0``; bounded below by zero under the alternative
    unless flagged interior.
``beta``
    nuisance coefficient restricted to be nonnegative.
``delta``
    unrestricted coefficient (for example an intercept).

Because the least-squares criterion is an exact quadratic in the coefficient
vector, the constrained estimator is the ``S_xx``-weighted projection of the
OLS estimator onto the cone, and the LR statistic needs no numerical
optimization beyond the cone solver.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._pipeline import finish_test
from .cone import ConeSolver, ConeSpec, FixedZero, Free, LowerBound
from .critical_value import DEFAULT_B_CAP
from .errors import ConfigurationError, DimensionMismatch, SingularDesign
from .limit_law import DEFAULT_DRAWS, GaussianLimit
from .report import TestReport

__all__ = [
    "ROLES",
    "RegressionData",
    "RegressionFit",
    "ols",
    "constrained_ls",
    "regression_cones",
    "fit_regression",
    "lr_stat_regression",
    "eicker_white",
    "regression_test",
]

ROLES = ("gamma", "beta", "delta")


@dataclass(frozen=True)
class RegressionData:
    """Response ``y``, design ``x`` and one role per column.

    Parameters
    ----------
    y : array_like, shape (n,)
    x : array_like, shape (n, d)
    roles : sequence of str
        ``"gamma"``, ``"beta"`` or ``"delta"`` per column.
    gamma_interior : sequence of bool, optional
        One flag per gamma column; True leaves that coefficient unrestricted
        under the alternative. Defaults to all False.
    names : sequence of str, optional
    """

    y: np.ndarray
    x: np.ndarray
    roles: tuple
    gamma_interior: tuple | None = None
    names: tuple | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] != y.size:
            raise DimensionMismatch(f"x has shape {x.shape} but y has {y.size} rows")
        roles = tuple(str(r) for r in self.roles)
        if len(roles) != x.shape[1]:
            raise ConfigurationError(f"{len(roles)} roles given for {x.shape[1]} columns")
        bad = [r for r in roles if r not in ROLES]
        if bad:
            raise ConfigurationError(f"unknown roles {bad}; expected one of {ROLES}")
        n_gamma = roles.count("gamma")
        if n_gamma == 0:
            raise ConfigurationError("at least one column must be tested (role 'gamma')")
        interior = (False,) * n_gamma if self.gamma_interior is None else tuple(bool(g) for g in self.gamma_interior)
        if len(interior) != n_gamma:
            raise ConfigurationError("gamma_interior needs one flag per gamma column")
        names = tuple(f"x{i + 1}" for i in range(x.shape[1])) if self.names is None else tuple(self.names)
        if len(names) != x.shape[1]:
            raise ConfigurationError("names must have one entry per column")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("data must be finite")
        for attr, val in (("y", y), ("x", x), ("roles", roles), ("gamma_interior", interior), ("names", names)):
            object.__setattr__(self, attr, val)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def indices(self, role: str) -> np.ndarray:
        return np.array([i for i, r in enumerate(self.roles) if r == role], dtype=np.int64)


@dataclass(frozen=True)
class RegressionFit:
    theta_ls: np.ndarray
    theta_hat: np.ndarray
    theta_tilde: np.ndarray
    s_xx: np.ndarray
    residuals: np.ndarray


def ols(data: RegressionData):
    """Least-squares estimate and ``S_xx = X'X / n``.

    Raises
    ------
    SingularDesign
        When ``n <= d`` or ``S_xx`` cannot be factorized.
    """
    n, d = data.x.shape
    if n <= d:
        raise SingularDesign(f"need more observations ({n}) than regressors ({d})")
    s_xx = data.x.T @ data.x / n
    s_xy = data.x.T @ data.y / n
    try:
        chol = np.linalg.cholesky(s_xx)
    except np.linalg.LinAlgError as exc:
        raise SingularDesign("S_xx is not positive definite") from exc
    theta = np.linalg.solve(chol.T, np.linalg.solve(chol, s_xy))
    return theta, s_xx


def regression_cones(data: RegressionData):
    """Cones for the unrestricted and the null-restricted coefficient vector."""
    alt, null = [], []
    g = iter(data.gamma_interior)
    for role in data.roles:
        if role == "gamma":
            alt.append(Free() if next(g) else LowerBound(0.0))
            null.append(FixedZero())
        elif role == "beta":
            alt.append(LowerBound(0.0))
            null.append(LowerBound(0.0))
        else:
            alt.append(Free())
            null.append(Free())
    return ConeSpec(alt), ConeSpec(null)


def constrained_ls(data: RegressionData, cone: ConeSpec, fit=None) -> np.ndarray:
    """Least squares over ``cone`` via projection of the OLS estimate."""
    theta_ls, s_xx = ols(data) if fit is None else fit
    if len(cone) != data.dim:
        raise DimensionMismatch(f"cone has {len(cone)} coordinates for {data.dim} regressors")
    return ConeSolver(s_xx, cone).solve(theta_ls).minimizer


def fit_regression(data: RegressionData) -> RegressionFit:
    theta_ls, s_xx = ols(data)
    alt, null = regression_cones(data)
    return RegressionFit(
        theta_ls=theta_ls,
        theta_hat=constrained_ls(data, alt, (theta_ls, s_xx)),
        theta_tilde=constrained_ls(data, null, (theta_ls, s_xx)),
        s_xx=s_xx,
        residuals=data.y - data.x @ theta_ls,
    )


def _weighted(r, w) -> float:
    return float(r @ w @ r)


def lr_stat_regression(data: RegressionData, fit: RegressionFit | None = None) -> float:
    """``n [ |theta_tilde - theta_ls|^2 - |theta_hat - theta_ls|^2 ]`` in the ``S_xx`` norm."""
    fit = fit_regression(data) if fit is None else fit
    lr = data.n * (
        _weighted(fit.theta_tilde - fit.theta_ls, fit.s_xx) - _weighted(fit.theta_hat - fit.theta_ls, fit.s_xx)
    )
    return max(0.0, lr)


def eicker_white(data: RegressionData, theta) -> np.ndarray:
    """Heteroskedasticity-robust middle matrix ``n^-1 sum e_t^2 x_t x_t'``."""
    e = data.y - data.x @ np.asarray(theta, dtype=float)
    xe = data.x * e[:, None]
    sigma = xe.T @ xe / data.n
    return 0.5 * (sigma + sigma.T)


def regression_test(
    data: RegressionData,
    alpha: float = 0.05,
    eta: float | None = None,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
    constrained_residuals: bool = False,
    b_cap: float = DEFAULT_B_CAP,
) -> TestReport:
    """Uniform LR test of ``gamma = 0`` in a sign-constrained regression.

    Parameters
    ----------
    data : RegressionData
    alpha : float
        Nominal level.
    eta : float, optional
        Bonferroni split; defaults to ``alpha / 10``.
    draws : int
        Monte Carlo draws for each simulated quantile.
    seed : int
    constrained_residuals : bool
        Build the Eicker-White matrix from the residuals of the constrained
        estimator instead of the OLS residuals.
    b_cap : float
        Localization bounds above this value are treated as infinite.

    Returns
    -------
    TestReport
    """
    t0 = time.perf_counter()
    fit = fit_regression(data)
    lr = lr_stat_regression(data, fit)
    sigma = eicker_white(data, fit.theta_hat if constrained_residuals else fit.theta_ls)
    gi, bi = data.indices("gamma"), data.indices("beta")
    limit = GaussianLimit(fit.s_xx, sigma, np.concatenate([gi, bi]))
    d_g = gi.size
    sigma_beta = limit.z_cov[np.ix_(bi, bi)]
    t1 = time.perf_counter()
    return finish_test(
        model="regression",
        n=data.n,
        lr_stat=lr,
        limit=limit,
        beta_check=fit.theta_ls[bi],
        sigma_beta_check=sigma_beta,
        gamma_interior=data.gamma_interior,
        alpha=alpha,
        eta=eta,
        draws=draws,
        seed=seed,
        b_cap=b_cap,
        names=list(data.names),
        roles=list(data.roles),
        estimates={
            "theta_ls": fit.theta_ls,
            "theta_hat": fit.theta_hat,
            "theta_tilde": fit.theta_tilde,
        },
        covariances={
            "omega_hat": fit.s_xx,
            "sigma_hat": sigma,
            "weight": limit.weight,
        },
        diagnostics={"d_gamma": int(d_g), "d_beta": int(bi.size), "constrained_residuals": bool(constrained_residuals)},
        timings={"estimation_s": t1 - t0},
    )
