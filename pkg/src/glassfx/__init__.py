"""Glassy-dynamics observables and a caged-jump van Hove model for price series."""

__version__ = "0.1.0"

from .errors import (FitError, GlassfxError, GridError, MarketDataError, ModelError,
                     NoOriginError, ObservableError, QuoteFormatError, SimulationError)
from .market import (ET_OFFSETS, FluctuationSample, PriceSeries, WindowSpec, concat_series,
                     daily_windows, fluctuations, parse_quote_file, to_generic_csv)
from .observables import (Curve, Distribution, Wavevector, alpha2, ccdf_estimate, lag_ladder,
                          mspd, pdf_estimate, sqt, wavevector_from_localization)
from .trapmodel import (MSPD_FIT_0930, MSPD_FIT_1800, PDF_FIT_PARAMS, ModelParams, PriceGrid,
                        g_hat, g_of_p, model_ccdf, model_mspd)
from .ctrw import SimConfig, Trajectory, displacement_histogram, simulate, synthesize_series
from .fitting import FitResult, SqtFitForm, fit_model_to_ccdfs, fit_model_to_mspd, fit_sqt
