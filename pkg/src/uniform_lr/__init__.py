"""Uniformly valid critical values for likelihood-ratio tests when nuisance
parameters may lie on or near the boundary of the parameter space."""

from .arch import ArchData, ArchParamSpace, arch_test
from .cone import ConeSpec, FixedZero, Free, LowerBound, QuadraticProblem, project_onto_cone
from .critical_value import CvInputs, Decision, naive_cv, uniform_cv
from .errors import ConfigurationError, NumericalError, UniformLRError
from .limit_law import GaussianLimit, HypothesisCones, simulate_limit_quantile
from .regression import RegressionData, regression_test
from .report import RunManifest, TestReport
from .simulation import DgpConfig, rejection_study, table_cells

__version__ = "0.1.0"

__all__ = [
    "ArchData",
    "ArchParamSpace",
    "ConeSpec",
    "ConfigurationError",
    "CvInputs",
    "Decision",
    "DgpConfig",
    "FixedZero",
    "Free",
    "GaussianLimit",
    "HypothesisCones",
    "LowerBound",
    "NumericalError",
    "QuadraticProblem",
    "RegressionData",
    "RunManifest",
    "TestReport",
    "UniformLRError",
    "arch_test",
    "naive_cv",
    "project_onto_cone",
    "regression_test",
    "rejection_study",
    "simulate_limit_quantile",
    "table_cells",
    "uniform_cv",
]
