"""
Simlab - Jackknife value estimation for individualized treatment rules
"""

__version__ = "0.1.0"

from simlab.core import Dataset, ValueEstimate, load_dataset, write_dataset
from simlab.estimators import value_cv, value_empirical, value_jackknife, value_plugin
from simlab.stats import shapiro_wilk, z_compare
