"""Meta-learned sequential strategies checked against exact Bayesian oracles."""

from .core import (
    Alphabet,
    ConfigError,
    DivergedTrainingError,
    ImpossibleObservationError,
    InconsistentMachineError,
    Interaction,
    MetaseqError,
    RandomSource,
    ResourceBoundError,
    UnsupportedOperationError,
)
from .generators import BernoulliBanditSet, DirichletCategorical, FiniteCoinSet
from .metatrain import RunConfig, train

__version__ = "0.1.0"
