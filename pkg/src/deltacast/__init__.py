"""Synthetic-data pretraining toolkit for a linear-RNN quantile forecaster.

Submodules: ``timeseries`` (series, frequencies, scalers), ``gp`` (kernels and sampling), ``generators`` and
``sde`` (synthetic series), ``augment`` (offline augmentation and NaN injection), ``model`` (DeltaProduct
forecaster), ``training``, ``evaluation`` and ``cli``. Importing the package itself does not load torch.
"""

__version__ = "0.1.0"

__all__ = ["augment", "cli", "config", "dataset_io", "evaluation", "experiments", "generators", "gp", "model",
           "sde", "seeding", "timeseries", "training"]
