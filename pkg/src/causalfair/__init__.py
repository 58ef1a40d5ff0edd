"""Causal fairness analysis of tabular datasets under the standard fairness model."""

from .dataset import BinningSpec, ColumnSpec, Dataset, SfmRoles, discretize, load_csv, validate_roles
from .decomposition import ie_by_mediator, ordering_sensitivity, se_by_confounder, z_specific_effects
from .effects import Contrast, EffectLedger, effect_ledger
from .errors import FairnessError
from .estimator import SfmEstimator

__version__ = "0.1.0"

__all__ = [
    "BinningSpec",
    "ColumnSpec",
    "Contrast",
    "Dataset",
    "EffectLedger",
    "FairnessError",
    "SfmEstimator",
    "SfmRoles",
    "discretize",
    "effect_ledger",
    "ie_by_mediator",
    "load_csv",
    "ordering_sensitivity",
    "se_by_confounder",
    "validate_roles",
    "z_specific_effects",
]
