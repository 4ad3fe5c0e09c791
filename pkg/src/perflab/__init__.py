"""Plug-in performative optimization with misspecified distribution atlases."""

from ._backend import BACKEND
from .core import Dataset, LossFn, ParamBall, RngStream, SampleLedger, deploy_and_collect
from .core import logistic_ridge_loss, squared_loss, zero_one_loss

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Dataset",
    "LossFn",
    "ParamBall",
    "RngStream",
    "SampleLedger",
    "deploy_and_collect",
    "logistic_ridge_loss",
    "squared_loss",
    "zero_one_loss",
]
