"""Reference pyramid benchmark values, shipped as package data.

Entries are rounded to three decimals, so the Gram matrices are only
approximately rank 3.
"""

from importlib.resources import files

import numpy as np

from .reconstruction import read_gram

#: True mixing weights, ordered by increasing weight.
TRUE_WEIGHTS = np.array([0.180, 0.210, 0.260, 0.350])
#: Reference estimates of the same weights.
ESTIMATED_WEIGHTS = np.array([0.170, 0.210, 0.263, 0.357])
#: Kernel variance estimated for the real-data example; informational only.
REAL_DATA_SIGMA2 = 0.0571


def data_path(name):
    return files(__package__) / "data" / name


def pyramid_gram():
    """``(G, means)`` for the centered pyramid ensemble."""
    return read_gram(data_path("pyramid_gram.txt"))


def pyramid_gram_estimate():
    """Reference estimate ``(G_hat, means_hat)``."""
    return read_gram(data_path("pyramid_gram_estimate.txt"))
