"""Minimization of positive-definite quadratic forms over rectangular cones.

A rectangular cone is described per coordinate: held at zero, bounded below,
or free. ``project_onto_cone`` returns the exact minimizer of
``(lam - z)' W (lam - z)`` over such a set via a primal active-set method.
Coordinates held at zero are eliminated first, which turns the remaining
problem into a bound-constrained one around a shifted center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import _kernel
from .errors import DimensionMismatch, MaxIterationsExceeded, NotPositiveDefinite

__all__ = [
    "FixedZero",
    "LowerBound",
    "Free",
    "ConeSpec",
    "QuadraticProblem",
    "ProjectionResult",
    "ConeSolver",
    "project_onto_cone",
    "infimum_over_cone",
    "cone_subset",
]

_FIXED, _LOWER, _FREE = 0, 1, 2


@dataclass(frozen=True)
class FixedZero:
    pass


@dataclass(frozen=True)
class LowerBound:
    value: float


@dataclass(frozen=True)
class Free:
    pass


Constraint = Union[FixedZero, LowerBound, Free]


class ConeSpec:
    """Ordered per-coordinate constraints.

    ``LowerBound(-inf)`` is stored as ``Free``.
    """

    __slots__ = ("constraints", "kinds", "lower")

    def __init__(self, constraints: Sequence[Constraint]):
        normalized = []
        for c in constraints:
            if isinstance(c, LowerBound):
                v = float(c.value)
                if math.isnan(v) or v == math.inf:
                    raise ValueError(f"invalid lower bound {c.value!r}")
                normalized.append(Free() if v == -math.inf else LowerBound(v))
            elif isinstance(c, (FixedZero, Free)):
                normalized.append(c)
            else:
                raise TypeError(f"unknown constraint {c!r}")
        self.constraints = tuple(normalized)
        self.kinds = np.array(
            [_FIXED if isinstance(c, FixedZero) else _LOWER if isinstance(c, LowerBound) else _FREE
             for c in self.constraints],
            dtype=np.int64,
        )
        self.lower = np.array(
            [c.value if isinstance(c, LowerBound) else 0.0 for c in self.constraints], dtype=float
        )

    @classmethod
    def from_lower_bounds(cls, bounds, fixed=()) -> "ConeSpec":
        """Build from an array of lower bounds (``-inf`` = free) and fixed indices."""
        fixed = set(int(i) for i in fixed)
        return cls([FixedZero() if i in fixed else LowerBound(b) for i, b in enumerate(bounds)])

    def __len__(self) -> int:
        return len(self.constraints)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConeSpec) and self.constraints == other.constraints

    def __hash__(self) -> int:
        return hash(self.constraints)

    def __repr__(self) -> str:
        return f"ConeSpec({list(self.constraints)!r})"

    def contains(self, lam, atol: float = 0.0) -> bool:
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (len(self),):
            return False
        fixed = self.kinds == _FIXED
        lower = self.kinds == _LOWER
        return bool(np.all(lam[fixed] == 0.0) and np.all(lam[lower] >= self.lower[lower] - atol))


@dataclass(frozen=True)
class QuadraticProblem:
    weight: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        w = np.array(self.weight, dtype=float, ndmin=2)
        z = np.array(self.center, dtype=float, ndmin=1)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionMismatch(f"weight must be square, got shape {w.shape}")
        if z.shape != (w.shape[0],):
            raise DimensionMismatch(f"center has shape {z.shape}, weight is {w.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(z))):
            raise ValueError("weight and center must be finite")
        scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
        if np.max(np.abs(w - w.T), initial=0.0) > 1e-10 * scale:
            raise NotPositiveDefinite("weight matrix is not symmetric")
        w = 0.5 * (w + w.T)
        w.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "center", z)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def objective(self, lam) -> float:
        r = np.asarray(lam, dtype=float) - self.center
        return float(r @ self.weight @ r)


@dataclass(frozen=True)
class ProjectionResult:
    minimizer: np.ndarray
    objective: float
    active_set: tuple = field(default=())
    iterations: int = 0


class ConeSolver:
    """Precomputed elimination for one weight matrix and one cone.

    Reusing a solver across many centers amortizes the reduction; this is the
    path used by the Monte Carlo simulations.
    """

    def __init__(self, weight, cone: ConeSpec, max_iter: int | None = None):
        w = np.asarray(weight, dtype=float)
        d = len(cone)
        if w.shape != (d, d):
            raise DimensionMismatch(f"weight {w.shape} does not match cone of length {d}")
        try:
            np.linalg.cholesky(w)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite("weight matrix is not positive definite") from exc
        self.weight = w
        self.cone = cone
        self.dim = d
        self.max_iter = int(max_iter) if max_iter is not None else 50 * max(d, 1)
        self.keep = np.flatnonzero(cone.kinds != _FIXED)
        self.fixed = np.flatnonzero(cone.kinds == _FIXED)
        kk = np.ix_(self.keep, self.keep)
        self.reduced = np.ascontiguousarray(w[kk])
        if self.keep.size and self.fixed.size:
            w_kf = w[np.ix_(self.keep, self.fixed)]
            self.shift = np.linalg.solve(self.reduced, w_kf)
            self.schur = w[np.ix_(self.fixed, self.fixed)] - w_kf.T @ self.shift
        else:
            self.shift = np.zeros((self.keep.size, self.fixed.size))
            self.schur = w[np.ix_(self.fixed, self.fixed)]
        self.bounded = np.ascontiguousarray(cone.kinds[self.keep] == _LOWER)
        self.offset = np.where(self.bounded, cone.lower[self.keep], 0.0)

    def _reduce(self, Z):
        zk = Z[:, self.keep]
        zf = Z[:, self.fixed]
        centers = zk + zf @ self.shift.T - self.offset
        const = np.einsum("ij,jk,ik->i", zf, self.schur, zf) if self.fixed.size else np.zeros(Z.shape[0])
        return np.ascontiguousarray(centers), const

    def solve(self, z) -> ProjectionResult:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise DimensionMismatch(f"center has shape {z.shape}, expected ({self.dim},)")
        lam = np.zeros(self.dim)
        active = []
        pivots = 0
        if self.keep.size:
            centers, _ = self._reduce(z[None, :])
            u, passive, status, pivots = _kernel.solve_one(self.reduced, centers[0], self.bounded, self.max_iter)
            self._check(status)
            lam[self.keep] = u + self.offset
            # Bound coordinates are set exactly, not through the shift.
            at_bound = self.bounded & ~passive
            lam[self.keep[at_bound]] = self.offset[at_bound]
            active = [int(i) for i in self.keep[at_bound]]
        r = lam - z
        obj = max(0.0, float(r @ self.weight @ r))
        return ProjectionResult(minimizer=lam, objective=obj, active_set=tuple(active), iterations=pivots)

    def infimum_batch(self, Z) -> np.ndarray:
        """Attained infimum for every row of ``Z`` (shape ``(n, dim)``)."""
        Z = np.asarray(Z, dtype=float)
        if Z.ndim != 2 or Z.shape[1] != self.dim:
            raise DimensionMismatch(f"centers have shape {Z.shape}, expected (n, {self.dim})")
        centers, const = self._reduce(Z)
        if not self.keep.size:
            return np.maximum(const, 0.0)
        out = np.empty(Z.shape[0])
        status = np.empty(Z.shape[0], dtype=np.int64)
        _kernel.batch_minimum(self.reduced, centers, self.bounded, self.max_iter, out, status)
        self._check(int(status.max(initial=0)))
        return np.maximum(out + const, 0.0)

    def _check(self, status: int) -> None:
        if status == _kernel.STATUS_MAXITER:
            raise MaxIterationsExceeded(f"active-set method exceeded {self.max_iter} pivots")
        if status == _kernel.STATUS_NOT_PD:
            raise NotPositiveDefinite("reduced weight matrix lost positive definiteness")


def project_onto_cone(problem: QuadraticProblem, cone: ConeSpec, max_iter: int | None = None) -> ProjectionResult:
    """Minimize ``(lam - z)' W (lam - z)`` over ``cone``.

    Parameters
    ----------
    problem : QuadraticProblem
        Symmetric positive-definite weight ``W`` and center ``z``.
    cone : ConeSpec
        One constraint per coordinate.
    max_iter : int, optional
        Pivot cap for the active-set loop (default ``50 * d``).

    Returns
    -------
    ProjectionResult
        Minimizer, attained objective, indices of lower bounds that bind, and
        the number of pivots.

    Raises
    ------
    DimensionMismatch, NotPositiveDefinite, MaxIterationsExceeded
    """
    if len(cone) != problem.dim:
        raise DimensionMismatch(f"cone has {len(cone)} coordinates, problem has {problem.dim}")
    return ConeSolver(problem.weight, cone, max_iter).solve(problem.center)


def infimum_over_cone(problem: QuadraticProblem, cone: ConeSpec, max_iter: int | None = None) -> float:
    return project_onto_cone(problem, cone, max_iter).objective


def _constraint_subset(a: Constraint, b: Constraint) -> bool:
    if isinstance(b, Free):
        return True
    if isinstance(a, Free):
        return False
    if isinstance(b, FixedZero):
        return isinstance(a, FixedZero)
    if isinstance(a, FixedZero):
        return b.value <= 0.0
    return a.value >= b.value


def cone_subset(inner: ConeSpec, outer: ConeSpec) -> bool:
    """True when every point of ``inner`` lies in ``outer``."""
    if len(inner) != len(outer):
        raise DimensionMismatch("cones have different dimensions")
    return all(_constraint_subset(a, b) for a, b in zip(inner.constraints, outer.constraints))
