"""Distributional forecasting of financial returns with small neural networks.

The package covers the full chain from price ingestion to risk backtests:

- :mod:`deepdist.distributions` -- Normal, Student's t and Fernandez-Steel skewed t
- :mod:`deepdist.losses` -- negative log-likelihood objectives over raw network outputs
- :mod:`deepdist.autodiff` -- a small reverse-mode autodiff engine with CNN/LSTM layers
- :mod:`deepdist.forecaster` -- model construction, training and prediction
- :mod:`deepdist.scoring` -- LPS, CRPS, PIT and a uniformity test
- :mod:`deepdist.risk` -- VaR/ES extraction and Kupiec/Christoffersen/McNeil-Frey tests
- :mod:`deepdist.garch` -- GARCH(1,1) maximum-likelihood baseline
- :mod:`deepdist.data` -- ingestion, features, windows, walk-forward plans, simulation
"""

from deepdist.distributions import DistributionSpec, Kind

__all__ = ["DistributionSpec", "Kind"]
__version__ = "0.1.0"
