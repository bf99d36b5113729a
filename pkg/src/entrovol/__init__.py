"""Maximum-entropy stochastic-volatility modelling of price returns.

Subpackages:

- :mod:`entrovol.maxent`   volatility densities, scales, moments, entropy
- :mod:`entrovol.retdist`  mixture return distributions and sampling
- :mod:`entrovol.microsim` tick-level random-walk simulator
- :mod:`entrovol.pipeline` data ingestion, empirical CCDFs, diffusion estimates
- :mod:`entrovol.estim`    moment/ML fitting and option-implied volatility
- :mod:`entrovol.cli`      the ``entrovol`` command-line interface
"""

__version__ = "0.1.0"

from .maxent import ModelParams, ST_PRESETS, VolScale  # noqa: F401
