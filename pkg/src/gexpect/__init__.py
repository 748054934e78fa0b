"""Numerical G-expectation: G-heat PDE and scenario-tree engines, Girsanov checks."""
from .errors import (ConfigurationError, GExpectError, InvalidArgumentError, PhiSyntaxError,
                     UnsupportedDimensionError)
from .uncertainty import Generator, VolatilityBand, g_eval, is_nondegenerate, perturb

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "GExpectError", "InvalidArgumentError", "PhiSyntaxError",
           "UnsupportedDimensionError", "Generator", "VolatilityBand", "g_eval",
           "is_nondegenerate", "perturb", "__version__"]
