"""Area-covering postprocessing of ensemble precipitation forecasts.

Censored logistic regression fitted by minimum CRPS, with training data
weighted by terrain similarity and an optional seasonal pretest that keeps
the raw ensemble where postprocessing is not expected to help.
"""

from .clogistic import CensoredLogistic
from .data import (
    Dataset,
    EnsembleForecast,
    ForecastObservationPair,
    StationMeta,
    ingest,
    select_training_window,
    sqrt_transform,
    write_dataset,
)
from .emos import CoefficientVector, FitConfig, cost, fit, link
from .pipeline import ModelVariant, PipelineConfig, run_variant, select_L, verify_run
from .synthetic import SyntheticConfig, generate_synthetic

__version__ = "0.1.0"
