"""FX stochastic-volatility toolkit.

Surface construction from OTC strategy quotes, characteristic-function
pricing for four exponential-affine models, implied central moments,
closed-form parameter estimators, and Nelder-Mead calibration with
calibration-risk diagnostics.
"""

__version__ = "0.1.0"

from .charfn import (  # noqa: F401
    Factor,
    HestonParams,
    JumpParams,
    SchobelZhuParams,
    TwoFactorParams,
)
from .market_data import VolSurface, build_surface, ingest_csv  # noqa: F401
from .pricer import IntegrationGrid, OptionSpec  # noqa: F401
