"""Synthetic measurement oracle and least-squares retrieval."""

from .synth import (
    OnsiteMode,
    PortGeometry,
    ResponseDataset,
    add_noise,
    cosine_modes,
    frequency_grid,
    green_function,
    synthesize_field_dataset,
    synthesize_onsite,
    synthesize_spectrum,
)
from .fitting import (
    EigenfunctionFit,
    FitResult,
    OnsiteFit,
    calibrate_constants,
    fit_eigenfunctions,
    fit_onsite_modes,
    fit_parameters,
)
from .pipeline import PipelineReport, pipeline_reproduce

__all__ = [
    "OnsiteMode",
    "PortGeometry",
    "ResponseDataset",
    "add_noise",
    "cosine_modes",
    "frequency_grid",
    "green_function",
    "synthesize_field_dataset",
    "synthesize_onsite",
    "synthesize_spectrum",
    "EigenfunctionFit",
    "FitResult",
    "OnsiteFit",
    "calibrate_constants",
    "fit_eigenfunctions",
    "fit_onsite_modes",
    "fit_parameters",
    "PipelineReport",
    "pipeline_reproduce",
]
