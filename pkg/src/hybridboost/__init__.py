"""Gradient boosting with interleaved shallow-tree and greedy linear updates."""

from .booster import (
    AlternatingParams,
    BoostModel,
    BoostStep,
    CompetitionParams,
    DecomposedPrediction,
    Ensemble,
    calibrate,
    fit,
    fit_alternating,
    fit_competition,
    fit_ensemble,
    load_model,
    predict,
    predict_decomposed,
    save_model,
)
from .data import Dataset, Standardizer, standardize_fit

__version__ = "0.1.0"
