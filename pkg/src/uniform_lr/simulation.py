"""Data-generating processes and rejection-frequency studies.

Three designs are available:

``regression``
    ``y = gamma x1 + beta x2 + e`` with ``(x1, x2)`` bivariate normal with
    unit variances and correlation ``rho``, and ``e ~ N(0, 1)``.
``archx``
    ARCH(1) with two log-normal autoregressive covariates, ``x = exp(v)``,
    ``v_t = 0.9 v_{t-1} + e_t`` with ``Var(e) = 0.5 (1 - 0.81) R(rho)``.
``archx_copula``
    ARCH(1) with four i.i.d.-over-time covariates: Gamma(3), Gamma(5),
    Gamma(10) (scale 10) and chi-square(5) margins joined by a Gaussian
    copula, each divided by its mean.

Replication ``r`` of a cell draws its data from the stream keyed by
``(master_seed, cell_id, r)`` and its critical values from a seed derived
from the same triple, so results do not depend on how replications are
distributed over workers.
"""

from __future__ import annotations

import concurrent.futures as cf
import json
import math
import multiprocessing as mp
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from numba import njit
from scipy import stats

from . import rng
from .arch import ArchData, ArchParamSpace, arch_test
from .errors import ConfigurationError, ReplicationFailure
from .limit_law import DEFAULT_DRAWS
from .regression import RegressionData, regression_test

__all__ = [
    "FAMILIES",
    "RHO_GRID",
    "ARCH_DELTA",
    "COPULA_SIGMA",
    "DgpConfig",
    "StudyResult",
    "gen_regression",
    "gen_archx",
    "gen_archx_copula",
    "generate",
    "run_replication",
    "rejection_study",
    "TABLES",
    "table_cells",
    "write_results_csv",
]

FAMILIES = ("regression", "archx", "archx_copula")
RHO_GRID = (-0.95, -0.75, -0.5, 0.0, 0.5, 0.75, 0.95)
N_GRID = (100, 250, 500, 1000)
ARCH_GRID = (0.0, 0.01, 0.05, 0.1, 0.25)
# Intercept and ARCH coefficient of the simulated ARCH designs.
ARCH_DELTA = (0.1, 0.5)
AR_COEF = 0.9
AR_VARIANCE = 0.5
COPULA_SIGMA = (
    (1.0, -0.75, -2.0 / 3.0, -0.1),
    (-0.75, 1.0, 0.4, 0.15),
    (-2.0 / 3.0, 0.4, 1.0, 0.35),
    (-0.1, 0.15, 0.35, 1.0),
)
GAMMA_SHAPES = (3.0, 5.0, 10.0)
GAMMA_SCALE = 10.0
CHI2_DF = 5.0

_N_BETA = {"regression": 1, "archx": 1, "archx_copula": 3}


@dataclass(frozen=True)
class DgpConfig:
    """One simulation cell together with the test settings.

    ``beta`` has one entry for ``regression`` and ``archx`` and three for
    ``archx_copula``. ``delta`` holds the ARCH intercept and ARCH coefficient.
    ``label`` separates otherwise identical cells so they get distinct seeds.
    """

    family: str
    gamma: float
    beta: tuple
    n: int
    rho: float | None = None
    delta: tuple = ARCH_DELTA
    burn_in: int = 1000
    sigma: tuple = COPULA_SIGMA
    master_seed: int = 0
    replications: int = 10_000
    alpha: float = 0.05
    eta: float | None = None
    draws: int = DEFAULT_DRAWS
    label: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        beta = tuple(float(b) for b in np.atleast_1d(self.beta))
        if len(beta) != _N_BETA[self.family]:
            raise ConfigurationError(f"{self.family} needs {_N_BETA[self.family]} beta values, got {len(beta)}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "delta", tuple(float(d) for d in self.delta))
        object.__setattr__(self, "sigma", tuple(tuple(float(v) for v in row) for row in self.sigma))
        if self.family in ("regression", "archx"):
            if self.rho is None or not -1.0 < float(self.rho) < 1.0:
                raise ConfigurationError(f"rho must lie in (-1, 1), got {self.rho}")
            object.__setattr__(self, "rho", float(self.rho))
        else:
            s = np.array(self.sigma)
            if s.shape != (4, 4) or not np.allclose(s, s.T) or not np.allclose(np.diag(s), 1.0):
                raise ConfigurationError("sigma must be a symmetric 4x4 correlation matrix")
            if np.linalg.eigvalsh(s).min() <= 0:
                raise ConfigurationError("sigma must be positive definite")
        if self.family != "regression":
            if len(self.delta) != 2 or not self.delta[0] > 0 or self.delta[1] < 0:
                raise ConfigurationError("delta must be (intercept > 0, arch coefficient >= 0)")
            if self.burn_in < 1:
                raise ConfigurationError("burn_in must be positive")
        if self.gamma < 0 or min(beta) < 0:
            raise ConfigurationError("gamma and beta must be nonnegative")
        if int(self.n) < 10:
            raise ConfigurationError("n must be at least 10")
        if int(self.replications) < 1:
            raise ConfigurationError("replications must be at least 1")

    def cell_params(self) -> dict:
        """Parameters that identify the cell (no seed, no replication count)."""
        d = asdict(self)
        for k in ("master_seed", "replications"):
            d.pop(k)
        if self.family == "regression":
            for k in ("delta", "burn_in", "sigma"):
                d.pop(k)
        elif self.family == "archx":
            d.pop("sigma")
        else:
            d.pop("rho")
        return d

    @property
    def cell_id(self) -> int:
        return rng.stable_id(json.dumps(self.cell_params(), sort_keys=True))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DgpConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown config keys {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc


@dataclass
class StudyResult:
    config: DgpConfig
    reps: int
    naive_rejections: int
    uniform_rejections: int
    seconds: float = field(default=0.0, compare=False)

    @staticmethod
    def _se(p: float, r: int) -> float:
        return math.sqrt(p * (1.0 - p) / r)

    @property
    def naive(self) -> float:
        return self.naive_rejections / self.reps

    @property
    def uniform(self) -> float:
        return self.uniform_rejections / self.reps

    @property
    def naive_se(self) -> float:
        return self._se(self.naive, self.reps)

    @property
    def uniform_se(self) -> float:
        return self._se(self.uniform, self.reps)


def _data_gen(config: DgpConfig, rep: int) -> np.random.Generator:
    return rng.generator(config.master_seed, config.cell_id, rep, rng.STAGE_DATA)


def gen_regression(config: DgpConfig, rep_index: int) -> RegressionData:
    if config.family != "regression":
        raise ConfigurationError("gen_regression needs a regression config")
    e = _data_gen(config, rep_index).standard_normal((config.n, 3))
    r = config.rho
    x = np.empty((config.n, 2))
    x[:, 0] = e[:, 0]
    x[:, 1] = r * e[:, 0] + math.sqrt(1.0 - r * r) * e[:, 1]
    y = config.gamma * x[:, 0] + config.beta[0] * x[:, 1] + e[:, 2]
    return RegressionData(y, x, ("gamma", "beta"))


@njit(cache=True)
def _arch_path(base, arch, z):
    # base[t] holds the covariate part of sigma_t^2; y_0 is the pre-burn start.
    T = z.shape[0]
    y = np.zeros(T)
    for t in range(1, T):
        y[t] = math.sqrt(base[t] + arch * y[t - 1] * y[t - 1]) * z[t]
    return y


def _arch_data(config: DgpConfig, X, z, names) -> ArchData:
    # X[t] is the covariate vector dated t; it enters sigma_{t+1}^2.
    coefs = np.array([config.gamma, *config.beta])
    base = np.empty(X.shape[0])
    base[0] = config.delta[0]
    base[1:] = config.delta[0] + X[:-1] @ coefs
    y = _arch_path(base, config.delta[1], z)
    b = config.burn_in
    return ArchData(y[b:], X[b - 1 : -1], q=1, presample=[y[b - 1] ** 2], names=names)


def gen_archx(config: DgpConfig, rep_index: int) -> ArchData:
    """ARCH(1) path with two log-normal AR(1) covariates, burn-in discarded."""
    if config.family != "archx":
        raise ConfigurationError("gen_archx needs an archx config")
    gen = _data_gen(config, rep_index)
    T = config.n + config.burn_in
    r = config.rho
    e = gen.standard_normal((T, 2))
    z = gen.standard_normal(T)
    sd = math.sqrt(AR_VARIANCE * (1.0 - AR_COEF**2))
    eps = np.empty((T, 2))
    eps[:, 0] = sd * e[:, 0]
    eps[:, 1] = sd * (r * e[:, 0] + math.sqrt(1.0 - r * r) * e[:, 1])
    V = np.empty((T, 2))
    V[0] = eps[0]
    for t in range(1, T):
        V[t] = AR_COEF * V[t - 1] + eps[t]
    return _arch_data(config, np.exp(V), z, ("x1", "x2"))


def gen_archx_copula(config: DgpConfig, rep_index: int) -> ArchData:
    """ARCH(1) path with four unit-mean copula covariates, burn-in discarded."""
    if config.family != "archx_copula":
        raise ConfigurationError("gen_archx_copula needs an archx_copula config")
    gen = _data_gen(config, rep_index)
    T = config.n + config.burn_in
    chol = np.linalg.cholesky(np.array(config.sigma))
    Z = gen.standard_normal((T, 4)) @ chol.T
    z = gen.standard_normal(T)
    U = stats.norm.cdf(Z)
    X = np.empty((T, 4))
    for i, a in enumerate(GAMMA_SHAPES):
        X[:, i] = stats.gamma.ppf(U[:, i], a, scale=GAMMA_SCALE) / (a * GAMMA_SCALE)
    X[:, 3] = stats.chi2.ppf(U[:, 3], CHI2_DF) / CHI2_DF
    return _arch_data(config, X, z, ("x1", "x2", "x3", "x4"))


def generate(config: DgpConfig, rep_index: int):
    return {
        "regression": gen_regression,
        "archx": gen_archx,
        "archx_copula": gen_archx_copula,
    }[config.family](config, rep_index)


def run_replication(config: DgpConfig, rep_index: int):
    """Return ``(naive_reject, uniform_reject)`` for one replication."""
    data = generate(config, rep_index)
    seed = rng.child_seed(config.master_seed, config.cell_id, rep_index)
    kw = dict(alpha=config.alpha, eta=config.eta, draws=config.draws, seed=seed)
    if config.family == "regression":
        report = regression_test(data, **kw)
    else:
        roles = ["gamma"] + ["beta"] * len(config.beta)
        report = arch_test(data, ArchParamSpace.for_data(data, roles), **kw)
    return report.naive_decision == "Reject", report.decision == "Reject"


def _replication_task(args):
    config, start, stop = args
    out = []
    for rep in range(start, stop):
        try:
            out.append(run_replication(config, rep))
        except Exception as exc:  # reported with its seed by the parent
            return out, (rep, f"{type(exc).__name__}: {exc}")
    return out, None


def _worker_init():
    import numba
    import warnings

    numba.set_num_threads(1)
    warnings.simplefilter("ignore")


def _chunks(config: DgpConfig, chunk: int):
    return [(config, s, min(s + chunk, config.replications)) for s in range(0, config.replications, chunk)]


def rejection_study(
    configs: DgpConfig | Sequence[DgpConfig],
    threads: int = 1,
    chunk: int = 50,
    progress=None,
) -> list[StudyResult]:
    """Rejection frequencies of the naive and the uniform test for each cell.

    Parameters
    ----------
    configs : DgpConfig or sequence of DgpConfig
    threads : int
        Worker processes. Results are identical for every value.
    chunk : int
        Replications per task.
    progress : callable, optional
        Called with each finished ``StudyResult``.

    Raises
    ------
    ReplicationFailure
        If any replication raises; the message carries the seeds.
    """
    if isinstance(configs, DgpConfig):
        configs = [configs]
    threads = max(1, int(threads))
    results = []
    pool = None
    if threads > 1:
        pool = cf.ProcessPoolExecutor(threads, mp_context=mp.get_context("spawn"), initializer=_worker_init)
    try:
        for config in configs:
            t0 = time.perf_counter()
            tasks = _chunks(config, chunk)
            outputs = pool.map(_replication_task, tasks) if pool else map(_replication_task, tasks)
            naive = uniform = 0
            for (task_cfg, _, _), (out, err) in zip(tasks, outputs):
                if err is not None:
                    raise ReplicationFailure(err[1], config.master_seed, config.cell_id, err[0])
                naive += sum(a for a, _ in out)
                uniform += sum(b for _, b in out)
            res = StudyResult(config, config.replications, naive, uniform, time.perf_counter() - t0)
            results.append(res)
            if progress is not None:
                progress(res)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    return results


def _regression_cells(gamma, beta):
    return [
        DgpConfig("regression", gamma, (beta,), n, rho=rho)
        for rho in RHO_GRID
        for n in N_GRID
    ]


def _table_t5():
    return [DgpConfig("archx", 0.0, (b,), 1000, rho=rho) for rho in RHO_GRID for b in ARCH_GRID]


def _table_t6():
    return [DgpConfig("archx", g, (0.0,), 1000, rho=rho) for rho in RHO_GRID for g in ARCH_GRID]


def _table_t8():
    null = [DgpConfig("archx_copula", 0.0, (0.0, 0.0, b), 5000, label="null") for b in ARCH_GRID]
    alt = [DgpConfig("archx_copula", g, (0.0, 0.0, 0.0), 5000, label="alt") for g in ARCH_GRID]
    return null + alt


TABLES = {
    "t1": lambda: _regression_cells(0.0, 0.0),
    "t2": lambda: _regression_cells(0.0, 0.1),
    "t3": lambda: _regression_cells(0.1, 0.0),
    "t4": lambda: _regression_cells(0.1, 0.1),
    "t5": _table_t5,
    "t6": _table_t6,
    "t8": _table_t8,
}


def _close(a: float, b: float) -> bool:
    return abs(a - b) < 1e-12


def table_cells(
    table: str,
    replications: int = 10_000,
    master_seed: int = 0,
    draws: int = DEFAULT_DRAWS,
    rho: Iterable[float] | None = None,
    n: Iterable[int] | None = None,
    gamma: Iterable[float] | None = None,
    beta: Iterable[float] | None = None,
) -> list[DgpConfig]:
    """Cells of a paper table, optionally filtered.

    ``beta`` filters on the last beta coordinate.
    """
    if table not in TABLES:
        raise ConfigurationError(f"unknown table {table!r}; expected one of {sorted(TABLES)}")
    cells = TABLES[table]()
    if rho is not None:
        rho = list(rho)
        cells = [c for c in cells if c.rho is not None and any(_close(c.rho, r) for r in rho)]
    if n is not None:
        n = [int(v) for v in n]
        cells = [c for c in cells if c.n in n]
    if gamma is not None:
        gamma = list(gamma)
        cells = [c for c in cells if any(_close(c.gamma, g) for g in gamma)]
    if beta is not None:
        beta = list(beta)
        cells = [c for c in cells if any(_close(c.beta[-1], b) for b in beta)]
    return [replace(c, replications=replications, master_seed=master_seed, draws=draws) for c in cells]


CSV_HEADER = "family,label,gamma,beta,rho,n,method,rejection_frequency,se,reps"


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def write_results_csv(results: Sequence[StudyResult], fh) -> None:
    """Two rows per cell (methods ``LR`` and ``LR-uniform``); no timing."""
    fh.write(CSV_HEADER + "\n")
    for res in results:
        c = res.config
        beta = ";".join(_fmt(b) for b in c.beta)
        rho = "" if c.rho is None else _fmt(c.rho)
        prefix = f"{c.family},{c.label},{_fmt(c.gamma)},{beta},{rho},{c.n}"
        for method, p, se in (("LR", res.naive, res.naive_se), ("LR-uniform", res.uniform, res.uniform_se)):
            fh.write(f"{prefix},{method},{p:.6f},{se:.6f},{res.reps}\n")
