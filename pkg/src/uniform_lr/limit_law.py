"""Monte Carlo simulation of the limiting LR distribution.

The limit variable is the difference of two cone-constrained minima of the
quadratic form ``Q(lam) = ||lam - HZ||^2`` weighted by ``(H Omega^-1 H')^-1``,
where ``Z ~ N(0, Omega^-1 Sigma Omega^-1)`` and ``H`` selects the tested block
followed by the sign-constrained nuisance block. The null minimum holds the
tested block at zero and bounds nuisance coordinate ``i`` below by ``-x_i``;
the alternative minimum lets the tested block range over its local cone and
bounds the nuisance coordinates below by ``-y_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import rng
from .cone import ConeSolver, ConeSpec, FixedZero, Free, LowerBound, cone_subset
from .errors import (
    DimensionMismatch,
    InternalConsistencyError,
    InvalidLevel,
    NotACorrelationMatrix,
    NotPositiveDefinite,
)

__all__ = [
    "DEFAULT_DRAWS",
    "GaussianLimit",
    "HypothesisCones",
    "QuantileEstimate",
    "upper_quantile",
    "draw_limit_stat",
    "limit_stat_batch",
    "simulate_limit_quantile",
    "max_abs_gaussian_quantile",
    "quantile_surface",
    "default_surface_grid",
    "write_surface_csv",
]

DEFAULT_DRAWS = 10_000
NEGATIVE_SLACK = 1e-10


def _cholesky(m, name):
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{name} is not positive definite") from exc


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class GaussianLimit:
    """Hessian limit ``omega``, score covariance ``sigma`` and the selection ``H``.

    ``selection`` lists, in order, the parameter indices of the tested block
    and then of the sign-constrained nuisance block. The weight of the
    quadratic form and the covariance of ``HZ`` are derived once here.
    """

    def __init__(self, omega, sigma, selection: Sequence[int]):
        omega = np.array(omega, dtype=float, ndmin=2)
        sigma = np.array(sigma, dtype=float, ndmin=2)
        d = omega.shape[0]
        if omega.shape != (d, d) or sigma.shape != (d, d):
            raise DimensionMismatch(f"omega {omega.shape} and sigma {sigma.shape} must be equal square shapes")
        sel = np.array(selection, dtype=np.int64).reshape(-1)
        if sel.size and (sel.min() < 0 or sel.max() >= d or np.unique(sel).size != sel.size):
            raise DimensionMismatch(f"selection {sel.tolist()} is not a set of distinct indices below {d}")
        omega = 0.5 * (omega + omega.T)
        sigma = 0.5 * (sigma + sigma.T)
        l_omega = _cholesky(omega, "omega")
        _cholesky(sigma, "sigma")
        eye = np.eye(d)
        omega_inv = np.linalg.solve(l_omega.T, np.linalg.solve(l_omega, eye))
        omega_inv = 0.5 * (omega_inv + omega_inv.T)
        z_cov = omega_inv @ sigma @ omega_inv
        z_cov = 0.5 * (z_cov + z_cov.T)
        block = np.ix_(sel, sel)
        h_inv = omega_inv[block]
        self.omega = _frozen(omega)
        self.sigma = _frozen(sigma)
        self.selection = tuple(int(i) for i in sel)
        self.weight = _frozen(np.linalg.inv(h_inv) if sel.size else np.zeros((0, 0)))
        self.z_cov = _frozen(z_cov)
        self.hz_cov = _frozen(z_cov[block])
        self.hz_chol = _frozen(_cholesky(self.hz_cov, "cov(HZ)") if sel.size else np.zeros((0, 0)))

    @property
    def dim(self) -> int:
        return len(self.selection)

    def draw(self, gen: np.random.Generator, draws: int) -> np.ndarray:
        """Draw ``HZ`` realizations, shape ``(draws, dim)``."""
        e = gen.standard_normal((draws, self.dim))
        return e @ self.hz_chol.T


@dataclass(frozen=True)
class HypothesisCones:
    null_cone: ConeSpec
    alt_cone: ConeSpec

    @classmethod
    def build(cls, gamma_interior: Sequence[bool], x, y, cap: float = math.inf) -> "HypothesisCones":
        """Cones for ``L(x, y)``.

        Bounds above ``cap`` (and ``inf``) make the nuisance coordinate free.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if x.shape != y.shape:
            raise DimensionMismatch("x and y must have equal length")
        if np.any(np.isnan(x)) or np.any(np.isnan(y)) or np.any(x < 0) or np.any(y < 0):
            raise ValueError("localization bounds must be nonnegative")

        def nuisance(v):
            return Free() if v > cap or math.isinf(v) else LowerBound(-float(v))

        null = [FixedZero() for _ in gamma_interior] + [nuisance(v) for v in x]
        alt = [Free() if g else LowerBound(0.0) for g in gamma_interior] + [nuisance(v) for v in y]
        return cls(ConeSpec(null), ConeSpec(alt))

    @property
    def nested(self) -> bool:
        return cone_subset(self.null_cone, self.alt_cone)


@dataclass(frozen=True)
class QuantileEstimate:
    value: float
    level: float
    draws: int
    seed: int


def _check_level(level: float) -> float:
    level = float(level)
    if not 0.0 < level < 1.0:
        raise InvalidLevel(f"level must lie in (0, 1), got {level}")
    return level


def upper_quantile(sample, level: float) -> float:
    """Order statistic number ``ceil(level * n)`` of ``sample`` (1-based)."""
    level = _check_level(level)
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    # Guard against level * n landing a hair above an integer.
    k = max(1, min(n, math.ceil(level * n - 1e-9)))
    return float(x[k - 1])


def _clamp(diff, inf_alt, nested: bool):
    slack = NEGATIVE_SLACK * np.maximum(1.0, np.abs(inf_alt))
    if nested and np.any(diff < -slack):
        worst = float(np.min(diff))
        raise InternalConsistencyError(f"limit statistic {worst:.3e} is negative beyond solver slack")
    return np.where(diff < 0.0, np.where(diff >= -slack, 0.0, diff), diff)


def limit_stat_batch(limit: GaussianLimit, cones: HypothesisCones, Z) -> np.ndarray:
    """Limit statistic for every row of ``Z`` (realizations of ``HZ``)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != limit.dim or len(cones.null_cone) != limit.dim or len(cones.alt_cone) != limit.dim:
        raise DimensionMismatch("draws, cones and limit dimensions disagree")
    inf_null = ConeSolver(limit.weight, cones.null_cone).infimum_batch(Z)
    inf_alt = ConeSolver(limit.weight, cones.alt_cone).infimum_batch(Z)
    return _clamp(inf_null - inf_alt, inf_alt, cones.nested)


def draw_limit_stat(limit: GaussianLimit, cones: HypothesisCones, z_draw) -> float:
    z = np.asarray(z_draw, dtype=float).reshape(-1)
    if z.shape != (limit.dim,):
        raise DimensionMismatch(f"z_draw has length {z.size}, expected {limit.dim}")
    inf_null = ConeSolver(limit.weight, cones.null_cone).solve(z).objective
    inf_alt = ConeSolver(limit.weight, cones.alt_cone).solve(z).objective
    return float(_clamp(np.array([inf_null - inf_alt]), np.array([inf_alt]), cones.nested)[0])


def simulate_limit_quantile(
    limit: GaussianLimit,
    cones: HypothesisCones,
    level: float,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
) -> QuantileEstimate:
    """Upper empirical ``level`` quantile of ``draws`` limit realizations."""
    level = _check_level(level)
    if draws < 100:
        raise ValueError("at least 100 draws are required")
    Z = limit.draw(rng.generator(seed), int(draws))
    stats = limit_stat_batch(limit, cones, Z)
    return QuantileEstimate(upper_quantile(stats, level), level, int(draws), int(seed))


def max_abs_gaussian_quantile(correlation, level: float, draws: int = DEFAULT_DRAWS, seed: int = 0) -> QuantileEstimate:
    """Upper empirical quantile of ``max_i |Z_i|`` for ``Z ~ N(0, correlation)``."""
    level = _check_level(level)
    r = np.array(correlation, dtype=float, ndmin=2)
    d = r.shape[0]
    if r.shape != (d, d) or d == 0:
        raise NotACorrelationMatrix(f"correlation must be a non-empty square matrix, got {r.shape}")
    if np.max(np.abs(np.diag(r) - 1.0)) > 1e-10 or np.max(np.abs(r - r.T)) > 1e-10:
        raise NotACorrelationMatrix("matrix must be symmetric with unit diagonal")
    try:
        chol = np.linalg.cholesky(0.5 * (r + r.T))
    except np.linalg.LinAlgError as exc:
        raise NotACorrelationMatrix("correlation matrix is not positive definite") from exc
    gen = rng.generator(seed)
    z = gen.standard_normal((int(draws), d)) @ chol.T
    return QuantileEstimate(upper_quantile(np.max(np.abs(z), axis=1), level), level, int(draws), int(seed))


def default_surface_grid():
    rhos = np.round(np.arange(-0.95, 0.95 + 1e-9, 0.05), 10)
    bs = np.round(np.arange(0.0, 5.0 + 1e-9, 0.1), 10)
    return rhos, bs


def quantile_surface(
    rhos: Iterable[float],
    bs: Iterable[float],
    level: float = 0.95,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
) -> list[tuple[float, float, float]]:
    """Quantiles of ``L(b, b)`` in the bivariate Gaussian model over a grid.

    The model has one one-sided tested coordinate and one nuisance
    coordinate, with ``Y ~ N(lambda, R)`` for the correlation matrix ``R`` of
    parameter ``rho``. All grid points share the same standard normal draws.
    """
    rhos = [float(r) for r in rhos]
    bs = [float(b) for b in bs]
    level = _check_level(level)
    if any(not -1.0 < r < 1.0 for r in rhos):
        raise ValueError("rho must lie in (-1, 1)")
    if any(not b >= 0.0 for b in bs):
        raise ValueError("b must be nonnegative")
    rows: list[tuple[float, float, float]] = []
    if not rhos or not bs:
        return rows
    e = rng.generator(seed).standard_normal((int(draws), 2))
    for rho in rhos:
        corr = np.array([[1.0, rho], [rho, 1.0]])
        # Omega = Sigma = R^{-1} gives weight R^{-1} and HZ ~ N(0, R).
        r_inv = np.linalg.inv(corr)
        limit = GaussianLimit(r_inv, r_inv, [0, 1])
        Z = e @ limit.hz_chol.T
        for b in bs:
            cones = HypothesisCones.build([False], [b], [b])
            rows.append((rho, b, upper_quantile(limit_stat_batch(limit, cones, Z), level)))
    return rows


def write_surface_csv(rows, fh) -> None:
    fh.write("rho,b,quantile\n")
    for rho, b, q in rows:
        fh.write(f"{rho:.6g},{b:.6g},{q:.6g}\n")
