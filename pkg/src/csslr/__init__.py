"""Comprehensive stepwise selection for logistic regression."""

from .data import (
    PROFILES,
    ConfigError,
    DataError,
    Dataset,
    DecisionMode,
    SelectionConfig,
    Sign,
    SignExpectation,
    load_dataset,
    load_signs,
    parse_config,
    write_dataset,
)
from .engine import ModelSet, SelectionResult, Selector, representative_model, run_csslr
from .glm import FittedModel, SingularMatrixError, TestResult, fit_logistic

__version__ = "0.1.0"

__all__ = [
    "PROFILES", "ConfigError", "DataError", "Dataset", "DecisionMode", "FittedModel",
    "ModelSet", "SelectionConfig", "SelectionResult", "Selector", "Sign", "SignExpectation",
    "SingularMatrixError", "TestResult", "fit_logistic", "load_dataset", "load_signs",
    "parse_config", "representative_model", "run_csslr", "write_dataset",
]
