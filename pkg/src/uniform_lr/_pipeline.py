"""Shared tail of the model test pipelines: critical values and the report."""

from __future__ import annotations

import time

import numpy as np

from .critical_value import CvInputs, DEFAULT_B_CAP, decide, naive_cv, uniform_cv
from .limit_law import DEFAULT_DRAWS, GaussianLimit
from .report import TestReport


def finish_test(
    *,
    model: str,
    n: int,
    lr_stat: float,
    limit: GaussianLimit,
    beta_check: np.ndarray,
    sigma_beta_check: np.ndarray,
    gamma_interior: tuple,
    alpha: float,
    eta: float | None,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
    b_cap: float = DEFAULT_B_CAP,
    names: list,
    roles: list,
    estimates: dict,
    covariances: dict,
    diagnostics: dict | None = None,
    timings: dict | None = None,
) -> TestReport:
    t0 = time.perf_counter()
    inputs = CvInputs(
        n=n,
        alpha=alpha,
        eta=eta,
        beta_check=beta_check,
        sigma_beta_check=sigma_beta_check,
        limit=limit,
        gamma_interior=gamma_interior,
        draws=draws,
        seed=seed,
        b_cap=b_cap,
    )
    cv = uniform_cv(inputs)
    t1 = time.perf_counter()
    naive = naive_cv(alpha, limit, gamma_interior, inputs.d_beta, draws, seed)
    timings = dict(timings or {})
    timings["critical_value_s"] = t1 - t0
    timings["naive_cv_s"] = time.perf_counter() - t1
    estimates = dict(estimates)
    estimates["beta_check"] = inputs.beta_check
    covariances = dict(covariances)
    covariances["sigma_beta_check"] = inputs.sigma_beta_check
    covariances["correlation_used"] = cv.correlation_used
    return TestReport(
        model=model,
        lr_stat=float(lr_stat),
        critical_value=cv.critical_value,
        decision=decide(lr_stat, cv).value,
        naive_cv=naive,
        naive_decision=decide(lr_stat, naive).value,
        alpha=alpha,
        eta=float(inputs.eta),
        n=int(n),
        b_lower=cv.b_lower.tolist(),
        b_upper=cv.b_upper.tolist(),
        q_max_abs=cv.q_max_abs,
        level_used=cv.level_used,
        parameter_names=list(names),
        roles=list(roles),
        estimates=estimates,
        covariances=covariances,
        seeds={"seed": int(seed), **{k: v for k, v in cv.diagnostics.items() if k.startswith("seed_")}},
        diagnostics={"draws": int(draws), **(diagnostics or {})},
        timings=timings,
    )
