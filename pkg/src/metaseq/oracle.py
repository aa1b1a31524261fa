"""Exact Bayesian reference computations.

Everything here is closed-form or exhaustive: posterior filtering with
actions treated as interventions, mixture and Thompson predictives,
belief-tree expectimax for Bayes-optimal action values, enumeration of the
mixture marginal and the log-loss dominance bound.  The ``batch_*`` helpers
are vectorized equivalents of the single-belief functions, used by the
training loops and evaluation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .core import (
    ImpossibleObservationError,
    Interaction,
    ResourceBoundError,
    Trajectory,
    UnsupportedOperationError,
    prob_vector,
)
from .generators import DirichletCategorical, HypothesisClass

BELIEF_TOL = 1e-12
MAX_ENUMERATION = 1 << 20


@dataclass(frozen=True, eq=False)
class FiniteBelief:
    """Posterior weights over a finite parameter set."""

    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", prob_vector(self.weights, tol=1e-9))


@dataclass(frozen=True, eq=False)
class DirichletBelief:
    """Dirichlet pseudo-counts, one per symbol."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.float64)
        if np.any(c <= 0):
            raise ValueError("Dirichlet pseudo-counts must be positive")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)


Belief = FiniteBelief | DirichletBelief


def prior_belief(cls: HypothesisClass) -> Belief:
    if isinstance(cls, DirichletCategorical):
        return DirichletBelief(cls.concentration)
    return FiniteBelief(cls.prior)


def _likelihoods(cls, history, symbol, action) -> np.ndarray:
    return np.array([cls.likelihood(k, history, symbol, action) for k in range(cls.n_params)])


def posterior_update(b: Belief, cls: HypothesisClass, history: Trajectory, symbol: int,
                     action: int | None = None) -> Belief:
    """Condition ``b`` on observing ``symbol`` (after ``action``, for bandits)."""
    if isinstance(b, DirichletBelief):
        counts = np.array(b.counts)
        counts[symbol] += 1.0
        return DirichletBelief(counts)
    joint = b.weights * _likelihoods(cls, history, symbol, action)
    z = joint.sum()
    if z <= 0.0:
        raise ImpossibleObservationError(
            f"symbol {symbol} has zero probability under every hypothesis in the belief")
    return FiniteBelief(joint / z)


def intervene_action(b: Belief, action: int) -> Belief:
    """Condition on the agent's own action as an intervention.

    Actions carry no information about the parameter, so the causal
    posterior is unchanged.
    """
    return b


def mixture_predictive(b: Belief, cls: HypothesisClass, history: Trajectory,
                       action: int | None = None) -> np.ndarray:
    """Posterior predictive distribution of the next symbol."""
    if isinstance(b, DirichletBelief):
        return b.counts / b.counts.sum()
    table = np.array([[cls.likelihood(k, history, s, action) for s in range(cls.n_symbols)]
                      for k in range(cls.n_params)])
    return b.weights @ table


def thompson_action_predictive(b: Belief, cls: HypothesisClass, history=()) -> np.ndarray:
    """Posterior mixture of the experts' action distributions."""
    if not cls.has_experts:
        raise UnsupportedOperationError(f"{type(cls).__name__} has no expert policies")
    experts = np.array([cls.expert_action_distribution(k, history) for k in range(cls.n_params)])
    return b.weights @ experts


def bayes_optimal_q(b: Belief, cls: HypothesisClass, horizon: int) -> np.ndarray:
    """Bayes-optimal undiscounted action values with ``horizon`` steps remaining.

    Backward induction over the belief tree, memoized on (rounded belief,
    depth).  Rewards beyond the horizon are zero.
    """
    if not cls.has_experts or not isinstance(b, FiniteBelief):
        raise UnsupportedOperationError("expectimax needs a finite bandit class")
    n_actions, n_obs = cls.n_actions, cls.n_symbols
    if horizon <= 0:
        return np.zeros(n_actions)
    rewards = np.array([[cls.reward(Interaction(a, o)) for o in range(n_obs)] for a in range(n_actions)])
    tables = [cls.likelihood_table(a) for a in range(n_actions)]
    memo: dict = {}

    def q_values(w: np.ndarray, depth: int) -> np.ndarray:
        key = (tuple(np.round(w, 10)), depth)
        if key in memo:
            return memo[key]
        q = np.zeros(n_actions)
        for a in range(n_actions):
            pred = w @ tables[a]
            for o in range(n_obs):
                if pred[o] <= 0.0:
                    continue
                value = rewards[a, o]
                if depth > 1:
                    w_next = w * tables[a][:, o]
                    value += q_values(w_next / w_next.sum(), depth - 1).max()
                q[a] += pred[o] * value
        memo[key] = q
        return q

    return q_values(np.array(b.weights), horizon)


def optimal_return(cls: HypothesisClass, horizon: int) -> float:
    """Expected return of the Bayes-optimal policy from the prior."""
    return float(bayes_optimal_q(prior_belief(cls), cls, horizon).max())


def brute_force_marginal(cls: HypothesisClass, length: int) -> dict[Trajectory, float]:
    """Mixture probability of every observation string of the given length.

    Computed directly from the prior and the per-parameter likelihoods (or,
    for the Dirichlet class, the conjugate normalizer ratio), without any
    sequential conditioning.
    """
    n = cls.n_symbols
    if n ** length > MAX_ENUMERATION:
        raise ResourceBoundError(f"{n}^{length} trajectories exceed the enumeration bound")
    if cls.has_experts:
        raise UnsupportedOperationError("marginal enumeration is defined for prediction classes")
    out = {}
    for traj in itertools.product(range(n), repeat=length):
        out[traj] = float(np.exp(log_marginal(cls, traj)))
    return out


def log_marginal(cls: HypothesisClass, traj: Trajectory) -> float:
    """log P(traj) under the mixture, by direct summation over parameters."""
    if isinstance(cls, DirichletCategorical):
        a = cls.concentration
        counts = np.bincount(np.asarray(traj, dtype=int), minlength=a.size)
        return float(gammaln(a.sum()) - gammaln(a.sum() + counts.sum())
                     + np.sum(gammaln(a + counts) - gammaln(a)))
    with np.errstate(divide="ignore"):
        terms = np.log(cls.prior) + np.array([log_likelihood(cls, k, traj) for k in range(cls.n_params)])
    return float(logsumexp(terms))


def log_likelihood(cls: HypothesisClass, theta, traj: Trajectory) -> float:
    total = 0.0
    for t, x in enumerate(traj):
        p = cls.likelihood(theta, traj[:t], x)
        if p <= 0.0:
            return -np.inf
        total += np.log(p)
    return float(total)


def chained_predictive(cls: HypothesisClass, traj: Trajectory) -> float:
    """Probability of ``traj`` as a product of sequential posterior predictives."""
    b = prior_belief(cls)
    prob = 1.0
    for t, x in enumerate(traj):
        prob *= mixture_predictive(b, cls, traj[:t])[x]
        if prob == 0.0:
            return 0.0
        b = posterior_update(b, cls, traj[:t], x)
    return prob


@dataclass(frozen=True)
class DominanceResult:
    holds: bool
    bound: float
    excess_loss: np.ndarray
    slack: np.ndarray

    @property
    def per_step_slack(self) -> np.ndarray:
        return self.slack / np.arange(1, self.slack.size + 1)


def regret_dominance_check(cls: HypothesisClass, theta: int, trajectory: Trajectory,
                           tol: float = 1e-9) -> DominanceResult:
    """Check -log mix(x<=t) + log P(x<=t|theta) <= -log P(theta) for every prefix.

    ``excess_loss[t-1]`` is the cumulative regret after t symbols and
    ``slack = bound - excess_loss``.
    """
    if not cls.is_finite or cls.has_experts:
        raise UnsupportedOperationError("dominance check needs a finite prediction class")
    prior = cls.prior[theta]
    if prior <= 0:
        raise ValueError("theta must carry nonzero prior mass")
    log_prior = np.log(cls.prior)
    bound = -float(np.log(prior))
    k = cls.n_params
    loglik = np.zeros(k)
    excess = np.empty(len(trajectory))
    for t, x in enumerate(trajectory):
        with np.errstate(divide="ignore"):
            loglik = loglik + np.log([cls.likelihood(j, trajectory[:t], x) for j in range(k)])
        log_mix = logsumexp(log_prior + loglik)
        excess[t] = -log_mix + loglik[theta]
    slack = bound - excess
    return DominanceResult(bool(np.all(slack >= -tol)), bound, excess, slack)


# Vectorized filtering used by training and evaluation.  The state is an
# array of weights (finite classes) or pseudo-counts (Dirichlet), one row
# per rollout.

def batch_prior(cls: HypothesisClass, n: int) -> np.ndarray:
    if isinstance(cls, DirichletCategorical):
        return np.tile(cls.concentration, (n, 1))
    return np.tile(cls.prior, (n, 1))


def batch_predictive(cls: HypothesisClass, state: np.ndarray, actions: np.ndarray | None = None) -> np.ndarray:
    if isinstance(cls, DirichletCategorical):
        return state / state.sum(axis=1, keepdims=True)
    if cls.has_experts:
        p1 = np.einsum("bk,kb->b", state, cls.thetas[:, actions])
        return np.stack([1.0 - p1, p1], axis=1)
    return state @ cls.thetas


def batch_update(cls: HypothesisClass, state: np.ndarray, symbols: np.ndarray,
                 actions: np.ndarray | None = None) -> np.ndarray:
    rows = np.arange(state.shape[0])
    if isinstance(cls, DirichletCategorical):
        out = state.copy()
        out[rows, symbols] += 1.0
        return out
    if cls.has_experts:
        p1 = cls.thetas[:, actions].T
        lik = np.where(symbols[:, None] == 1, p1, 1.0 - p1)
    else:
        lik = cls.thetas[:, symbols].T
    joint = state * lik
    z = joint.sum(axis=1, keepdims=True)
    if np.any(z <= 0):
        raise ImpossibleObservationError("observation impossible under every hypothesis")
    return joint / z


def batch_action_predictive(cls: HypothesisClass, weights: np.ndarray) -> np.ndarray:
    return weights @ cls.expert_table()
