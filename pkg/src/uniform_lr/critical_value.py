"""Uniform critical values for LR tests with sign-constrained nuisance parameters.

The critical value is built in five steps from an asymptotically Gaussian
nuisance estimate ``beta_check`` with covariance ``sigma_beta_check``:

1. a Bonferroni split ``eta`` of the level ``alpha``;
2. the correlation matrix of ``sigma_beta_check``;
3. the ``1 - eta`` quantile ``q`` of ``max_i |Z_i|`` under that correlation;
4. a rectangular bracket ``sqrt(n) beta_check -/+ q * sd``, floored at zero;
5. the ``1 - alpha + eta`` quantile of the limit law with the null cone built
   from the lower end of the bracket and the alternative cone from the upper
   end.

Because the null minimum shrinks and the alternative minimum grows as the
bracket widens, the bracketed law dominates the law at the true localization
pathwise, and the Bonferroni bound delivers uniform size control.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng
from .errors import DimensionMismatch, InvalidEtaAlpha, NonPositiveDiagonal
from .limit_law import (
    DEFAULT_DRAWS,
    GaussianLimit,
    HypothesisCones,
    max_abs_gaussian_quantile,
    simulate_limit_quantile,
)

__all__ = [
    "DEFAULT_B_CAP",
    "Decision",
    "CvInputs",
    "CvResult",
    "correlation_from_covariance",
    "confidence_bounds",
    "uniform_cv",
    "decide",
    "naive_cv",
    "default_eta",
]

DEFAULT_B_CAP = 1e6


class Decision(str, enum.Enum):
    REJECT = "Reject"
    FAIL_TO_REJECT = "FailToReject"


def default_eta(alpha: float) -> float:
    return alpha / 10.0


@dataclass(frozen=True)
class CvInputs:
    """Everything the critical-value construction consumes.

    ``gamma_interior`` has one flag per tested coordinate: True when the
    coordinate is unrestricted under the alternative, False when it is
    bounded below by its null value.
    """

    n: int
    alpha: float
    beta_check: np.ndarray
    sigma_beta_check: np.ndarray
    limit: GaussianLimit
    gamma_interior: tuple = (False,)
    eta: float | None = None
    draws: int = DEFAULT_DRAWS
    seed: int = 0
    b_cap: float = DEFAULT_B_CAP

    def __post_init__(self):
        eta = default_eta(self.alpha) if self.eta is None else float(self.eta)
        if not (0.0 < eta < self.alpha < 1.0):
            raise InvalidEtaAlpha(f"need 0 < eta < alpha < 1, got eta={eta}, alpha={self.alpha}")
        object.__setattr__(self, "eta", eta)
        beta = np.atleast_1d(np.asarray(self.beta_check, dtype=float))
        sig = np.asarray(self.sigma_beta_check, dtype=float).reshape(beta.size, beta.size)
        object.__setattr__(self, "beta_check", beta)
        object.__setattr__(self, "sigma_beta_check", sig)
        object.__setattr__(self, "gamma_interior", tuple(bool(g) for g in self.gamma_interior))
        if len(self.gamma_interior) + beta.size != self.limit.dim:
            raise DimensionMismatch(
                f"{len(self.gamma_interior)} tested + {beta.size} nuisance coordinates "
                f"but the limit selects {self.limit.dim}"
            )
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def d_gamma(self) -> int:
        return len(self.gamma_interior)

    @property
    def d_beta(self) -> int:
        return self.beta_check.size


@dataclass(frozen=True)
class CvResult:
    critical_value: float
    b_lower: np.ndarray
    b_upper: np.ndarray
    q_max_abs: float | None
    correlation_used: np.ndarray | None
    level_used: float
    diagnostics: dict = field(default_factory=dict)


def correlation_from_covariance(cov) -> np.ndarray:
    cov = np.array(cov, dtype=float, ndmin=2)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionMismatch(f"covariance must be square, got {cov.shape}")
    diag = np.diag(cov)
    if not np.all(diag > 0.0):
        raise NonPositiveDiagonal("covariance diagonal must be strictly positive")
    s = 1.0 / np.sqrt(diag)
    corr = cov * s[:, None] * s[None, :]
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return corr


def confidence_bounds(beta_check, sigma_beta_check, n: int, q: float):
    """Bracket ``max(0, sqrt(n) beta -/+ q sd)`` for the localization parameter."""
    if q < 0:
        raise ValueError("q must be nonnegative")
    beta = np.atleast_1d(np.asarray(beta_check, dtype=float))
    sig = np.asarray(sigma_beta_check, dtype=float).reshape(beta.size, beta.size)
    sd = np.sqrt(np.diag(sig))
    center = math.sqrt(n) * beta
    return np.maximum(0.0, center - q * sd), np.maximum(0.0, center + q * sd)


def uniform_cv(inputs: CvInputs) -> CvResult:
    """Run the five-step construction and return the critical value."""
    level = 1.0 - inputs.alpha + inputs.eta
    seed_step3 = rng.child_seed(inputs.seed, rng.STAGE_MAX_ABS)
    seed_step5 = rng.child_seed(inputs.seed, rng.STAGE_LIMIT)
    if inputs.d_beta:
        corr = correlation_from_covariance(inputs.sigma_beta_check)
        q = max_abs_gaussian_quantile(corr, 1.0 - inputs.eta, inputs.draws, seed_step3).value
        b_lower, b_upper = confidence_bounds(inputs.beta_check, inputs.sigma_beta_check, inputs.n, q)
    else:
        corr, q = None, None
        b_lower = b_upper = np.zeros(0)
    cones = HypothesisCones.build(inputs.gamma_interior, b_lower, b_upper, cap=inputs.b_cap)
    est = simulate_limit_quantile(inputs.limit, cones, level, inputs.draws, seed_step5)
    return CvResult(
        critical_value=max(0.0, est.value),
        b_lower=b_lower,
        b_upper=b_upper,
        q_max_abs=q,
        correlation_used=corr,
        level_used=level,
        diagnostics={
            "draws": inputs.draws,
            "seed": inputs.seed,
            "seed_max_abs": seed_step3,
            "seed_limit": seed_step5,
        },
    )


def decide(lr_stat: float, cv: CvResult | float) -> Decision:
    """Reject when the statistic is at least the critical value."""
    if lr_stat < 0:
        raise ValueError("LR statistic must be nonnegative")
    value = cv.critical_value if isinstance(cv, CvResult) else float(cv)
    return Decision.REJECT if lr_stat >= value else Decision.FAIL_TO_REJECT


def naive_cv(
    alpha: float,
    limit: GaussianLimit | None = None,
    gamma_interior: Sequence[bool] = (False,),
    d_beta: int = 0,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
) -> float:
    """Critical value that treats every nuisance parameter as interior.

    For one one-sided tested coordinate this is the ``1 - alpha`` quantile of
    ``max(0, N(0,1))^2``, i.e. the ``1 - 2 alpha`` quantile of chi-square(1)
    (2.7055 at ``alpha = 0.05``). Otherwise it is simulated from the limit
    law with all nuisance coordinates free.
    """
    from scipy.stats import chi2

    gamma_interior = tuple(bool(g) for g in gamma_interior)
    if gamma_interior == (False,):
        return float(chi2.ppf(1.0 - 2.0 * alpha, 1))
    if gamma_interior == (True,):
        return float(chi2.ppf(1.0 - alpha, 1))
    if limit is None:
        raise ValueError("a GaussianLimit is required for multi-dimensional tests")
    cones = HypothesisCones.build(gamma_interior, [math.inf] * d_beta, [math.inf] * d_beta)
    return simulate_limit_quantile(limit, cones, 1.0 - alpha, draws, rng.child_seed(seed, rng.STAGE_NAIVE)).value
