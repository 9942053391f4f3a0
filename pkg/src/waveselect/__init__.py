"""Wavelet-guided choice of parametric regression forms.

A nonparametric wavelet fit of the response on the (rescaled) linear
predictor serves as a reference curve; among candidate nonlinear models or
GLM links, the one whose fitted values lie closest to it is selected.
"""

__version__ = "0.1.0"

from .glm import GLMRegressor, fit_glm, get_family, get_link, predict_glm
from .nls import NonlinearRegressor, fit_nls, get_model, load_models, model_from_expression, register_model
from .regression import ThresholdPolicy, WaveletRegressor, fit_wavelet, map_to_grid
from .selection import (
    CandidateModel,
    DegenerateDataError,
    SelectionReport,
    WaveletConfig,
    WaveletProcedureSelector,
    glm_candidate,
    nonlinear_candidate,
    parse_candidates,
    wp_select,
)
from .simulation import MonteCarloResult, ScenarioConfig, run_scenario
from .wavelets import FilterPair, dwt, get_filter, idwt, make_daubechies

__all__ = [
    "__version__",
    "CandidateModel",
    "DegenerateDataError",
    "FilterPair",
    "GLMRegressor",
    "MonteCarloResult",
    "NonlinearRegressor",
    "ScenarioConfig",
    "SelectionReport",
    "ThresholdPolicy",
    "WaveletConfig",
    "WaveletProcedureSelector",
    "WaveletRegressor",
    "dwt",
    "fit_glm",
    "fit_nls",
    "fit_wavelet",
    "get_family",
    "get_filter",
    "get_link",
    "get_model",
    "glm_candidate",
    "idwt",
    "load_models",
    "make_daubechies",
    "map_to_grid",
    "model_from_expression",
    "nonlinear_candidate",
    "parse_candidates",
    "predict_glm",
    "register_model",
    "run_scenario",
    "wp_select",
]
