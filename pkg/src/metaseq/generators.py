"""Task classes: priors over generators, their conditionals, experts and rewards.

Finite classes identify a generator by its integer index; the Dirichlet
class identifies it by the sampled probability vector itself.  Besides the
single-draw interface every class exposes ``observation_probs`` so that the
training loops can step a whole batch of rollouts at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    Interaction,
    RandomSource,
    Trajectory,
    UnsupportedOperationError,
    prob_vector,
    sample_categorical,
    sample_categorical_rows,
)


def _uniform(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


class HypothesisClass:
    """Common surface of all task classes."""

    kind = "prediction"
    n_symbols: int
    n_actions: int = 0

    @property
    def is_finite(self) -> bool:
        return True

    @property
    def has_experts(self) -> bool:
        return self.kind == "bandit"

    def sample_parameter(self, rng: RandomSource):
        raise NotImplementedError

    def likelihood(self, theta, history: Trajectory, symbol: int, action: int | None = None) -> float:
        raise NotImplementedError

    def sample_observation(self, theta, history: Trajectory, rng: RandomSource, action: int | None = None) -> int:
        p = [self.likelihood(theta, history, s, action) for s in range(self.n_symbols)]
        return sample_categorical(p, rng)

    def expert_action_distribution(self, theta, history=()) -> np.ndarray:
        raise UnsupportedOperationError(f"{type(self).__name__} has no expert policy")

    def reward(self, interaction: Interaction) -> float:
        raise UnsupportedOperationError(f"{type(self).__name__} defines no reward")


@dataclass(frozen=True, eq=False)
class FiniteCoinSet(HypothesisClass):
    """Finitely many N-sided dice generating i.i.d. rolls."""

    thetas: np.ndarray
    prior: np.ndarray = None

    def __post_init__(self):
        thetas = np.array([prob_vector(t) for t in self.thetas])
        if thetas.ndim != 2 or thetas.shape[1] < 2:
            raise ValueError("thetas must be a list of distributions over >= 2 symbols")
        prior = _uniform(len(thetas)) if self.prior is None else prob_vector(self.prior)
        if prior.shape[0] != thetas.shape[0]:
            raise ValueError("prior length must equal the number of thetas")
        thetas.flags.writeable = False
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "prior", prior)

    @classmethod
    def coins(cls, heads_probs: Sequence[float], prior=None) -> "FiniteCoinSet":
        """Binary coins given by their probability of symbol 1."""
        return cls(np.array([[1.0 - p, p] for p in heads_probs]), prior)

    @property
    def n_symbols(self) -> int:
        return self.thetas.shape[1]

    @property
    def n_params(self) -> int:
        return self.thetas.shape[0]

    def sample_parameter(self, rng: RandomSource) -> int:
        return sample_categorical(self.prior, rng)

    def sample_parameters(self, n: int, rng: RandomSource) -> np.ndarray:
        return sample_categorical_rows(np.tile(self.prior, (n, 1)), rng)

    def likelihood(self, theta, history, symbol, action=None) -> float:
        return float(self.thetas[theta, symbol])

    def likelihood_table(self, action: int | None = None) -> np.ndarray:
        """(n_params, n_symbols) matrix of next-symbol probabilities."""
        return self.thetas

    def observation_probs(self, thetas: np.ndarray, actions: np.ndarray | None = None) -> np.ndarray:
        return self.thetas[thetas]


@dataclass(frozen=True, eq=False)
class DirichletCategorical(HypothesisClass):
    """Categorical rolls whose parameter is drawn from a Dirichlet density."""

    concentration: np.ndarray = field(default_factory=lambda: np.ones(2))

    def __post_init__(self):
        a = np.array(self.concentration, dtype=np.float64)
        if a.ndim != 1 or a.size < 2:
            raise ValueError("concentration must list one pseudo-count per symbol (>= 2)")
        if np.any(a <= 0) or not np.all(np.isfinite(a)):
            raise ValueError("pseudo-counts must be positive and finite")
        a.flags.writeable = False
        object.__setattr__(self, "concentration", a)

    @classmethod
    def uniform(cls, n_symbols: int = 2) -> "DirichletCategorical":
        return cls(np.ones(n_symbols))

    @property
    def is_finite(self) -> bool:
        return False

    @property
    def n_symbols(self) -> int:
        return self.concentration.size

    def sample_parameter(self, rng: RandomSource) -> np.ndarray:
        return rng.generator.dirichlet(self.concentration)

    def sample_parameters(self, n: int, rng: RandomSource) -> np.ndarray:
        return rng.generator.dirichlet(self.concentration, size=n)

    def likelihood(self, theta, history, symbol, action=None) -> float:
        return float(np.asarray(theta)[symbol])

    def observation_probs(self, thetas: np.ndarray, actions: np.ndarray | None = None) -> np.ndarray:
        return np.asarray(thetas, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class BernoulliBanditSet(HypothesisClass):
    """Finitely many Bernoulli bandits with point-mass experts on the best arm.

    ``thetas[k, a]`` is the success probability of arm ``a`` under bandit
    ``k``.  Observations are the Bernoulli outcome (0 or 1) and the reward of
    an interaction equals its observation.
    """

    thetas: np.ndarray
    prior: np.ndarray = None
    kind = "bandit"

    def __post_init__(self):
        thetas = np.array(self.thetas, dtype=np.float64)
        if thetas.ndim != 2 or thetas.shape[1] < 2:
            raise ValueError("thetas must be a (n_params, n_actions) array with >= 2 arms")
        if np.any(thetas < 0) or np.any(thetas > 1):
            raise ValueError("arm success probabilities must lie in [0, 1]")
        prior = _uniform(len(thetas)) if self.prior is None else prob_vector(self.prior)
        if prior.shape[0] != thetas.shape[0]:
            raise ValueError("prior length must equal the number of thetas")
        thetas.flags.writeable = False
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "prior", prior)

    n_symbols = 2

    @property
    def n_actions(self) -> int:
        return self.thetas.shape[1]

    @property
    def n_params(self) -> int:
        return self.thetas.shape[0]

    @property
    def best_arms(self) -> np.ndarray:
        # argmax returns the lowest index among ties
        return np.argmax(self.thetas, axis=1)

    def sample_parameter(self, rng: RandomSource) -> int:
        return sample_categorical(self.prior, rng)

    def sample_parameters(self, n: int, rng: RandomSource) -> np.ndarray:
        return sample_categorical_rows(np.tile(self.prior, (n, 1)), rng)

    def likelihood(self, theta, history, symbol, action=None) -> float:
        if action is None:
            raise ValueError("bandit observations are conditioned on an action")
        p = self.thetas[theta, action]
        return float(p if symbol == 1 else 1.0 - p)

    def likelihood_table(self, action: int | None = None) -> np.ndarray:
        p = self.thetas[:, action]
        return np.stack([1.0 - p, p], axis=1)

    def observation_probs(self, thetas: np.ndarray, actions: np.ndarray | None = None) -> np.ndarray:
        p = self.thetas[thetas, actions]
        return np.stack([1.0 - p, p], axis=1)

    def expert_action_distribution(self, theta, history=()) -> np.ndarray:
        out = np.zeros(self.n_actions)
        out[self.best_arms[theta]] = 1.0
        return out

    def expert_table(self) -> np.ndarray:
        """(n_params, n_actions) matrix of expert policies."""
        return np.eye(self.n_actions)[self.best_arms]

    def reward(self, interaction: Interaction) -> float:
        return 1.0 if interaction.observation == 1 else 0.0


def default_coin() -> DirichletCategorical:
    return DirichletCategorical.uniform(2)


def default_coin_set() -> FiniteCoinSet:
    return FiniteCoinSet.coins([0.3, 0.7])


def default_bandit() -> BernoulliBanditSet:
    return BernoulliBanditSet(np.array([[0.9, 0.1], [0.1, 0.9]]))
