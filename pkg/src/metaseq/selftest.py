"""Oracle property suite behind ``metaseq oracle-selftest``.

The posterior update is injectable so that a deliberately broken filter
(for example one that skips renormalization) can be shown to trip the
suite.  Updates here work on raw weight arrays, so a faulty update is
observed rather than rejected by belief validation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import oracle
from .generators import DirichletCategorical, FiniteCoinSet, default_bandit, default_coin_set

UpdateFn = Callable[[np.ndarray, object, tuple, int], np.ndarray]

TOL = 1e-12
MAX_LENGTH = 8
MAX_PERMUTED = 6


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    witness: object = None
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" witness={self.witness!r}" if not self.passed else ""
        return f"{status} {self.name}{extra} {self.detail}".rstrip()


def exact_update(weights: np.ndarray, cls, history: tuple, symbol: int) -> np.ndarray:
    return np.array(oracle.posterior_update(oracle.FiniteBelief(weights), cls, history, symbol).weights)


def unnormalized_update(weights: np.ndarray, cls, history: tuple, symbol: int) -> np.ndarray:
    """Fault canary: Bayes numerator without the normalizing division."""
    return np.asarray(weights) * cls.thetas[:, symbol]


def _predictive(w, cls):
    return w @ cls.thetas


def _classes():
    return [default_coin_set(),
            FiniteCoinSet.coins([0.1, 0.5, 0.8], prior=[0.2, 0.3, 0.5]),
            FiniteCoinSet(np.array([[0.2, 0.3, 0.5], [0.6, 0.3, 0.1]]))]


def _histories(cls, max_len):
    for length in range(max_len + 1):
        yield from itertools.product(range(cls.n_symbols), repeat=length)


def _filter(cls, hist, update):
    w = np.array(cls.prior)
    for t, x in enumerate(hist):
        w = update(w, cls, hist[:t], x)
    return w


def check_normalization(update: UpdateFn = exact_update) -> PropertyResult:
    for cls in _classes():
        for hist in _histories(cls, 5):
            w = _filter(cls, hist, update)
            if abs(w.sum() - 1.0) > TOL or np.any(w < 0):
                return PropertyResult("normalization", False, hist, f"sum={float(w.sum())!r}")
    return PropertyResult("normalization", True)


def check_martingale(update: UpdateFn = exact_update) -> PropertyResult:
    worst = 0.0
    for cls in _classes():
        for hist in _histories(cls, 4):
            w = _filter(cls, hist, update)
            w = _normalized(w)
            pred = _predictive(w, cls)
            expect = sum(pred[o] * update(w, cls, hist, o) for o in range(cls.n_symbols))
            err = float(np.max(np.abs(expect - w)))
            worst = max(worst, err)
            if err > TOL:
                return PropertyResult("martingale", False, hist, f"max|E[b']-b|={err:.3e}")
    return PropertyResult("martingale", True, detail=f"max err {worst:.1e}")


def check_exchangeability(update: UpdateFn = exact_update) -> PropertyResult:
    for cls in _classes():
        for hist in _histories(cls, MAX_PERMUTED):
            ref = _predictive(_normalized(_filter(cls, hist, update)), cls)
            for perm in set(itertools.permutations(hist)):
                p = _predictive(_normalized(_filter(cls, perm, update)), cls)
                if np.max(np.abs(p - ref)) > TOL:
                    return PropertyResult("exchangeability", False, (hist, perm))
    return PropertyResult("exchangeability", True)


def _normalized(w):
    s = w.sum()
    return w / s if s > 0 else w


def check_intervention(update: UpdateFn = exact_update) -> PropertyResult:
    cls = default_bandit()
    rng = np.random.default_rng(0)
    for _ in range(50):
        w = rng.dirichlet(np.ones(cls.n_params))
        b = oracle.FiniteBelief(w)
        for a in range(cls.n_actions):
            once = oracle.intervene_action(b, a)
            twice = oracle.intervene_action(once, 1 - a)
            if not (np.array_equal(once.weights, b.weights) and np.array_equal(twice.weights, b.weights)):
                return PropertyResult("intervention-invariance", False, (tuple(w), a))
            for o in range(2):
                direct = oracle.posterior_update(b, cls, (), o, a)
                via = oracle.posterior_update(oracle.intervene_action(b, a), cls, (), o, a)
                if not np.array_equal(direct.weights, via.weights):
                    return PropertyResult("intervention-invariance", False, (tuple(w), a, o))
    return PropertyResult("intervention-invariance", True)


def check_brute_force(update: UpdateFn = exact_update) -> PropertyResult:
    worst = 0.0
    for cls in (default_coin_set(), DirichletCategorical.uniform(2)):
        for length in range(1, MAX_LENGTH + 1):
            marg = oracle.brute_force_marginal(cls, length)
            total = sum(marg.values())
            if abs(total - 1.0) > TOL:
                return PropertyResult("brute-force-equivalence", False, (type(cls).__name__, length),
                                      f"sum={float(total)!r}")
            for traj, p in marg.items():
                if isinstance(cls, DirichletCategorical):
                    chained = oracle.chained_predictive(cls, traj)
                else:
                    chained = _chained(cls, traj, update)
                err = abs(chained - p)
                worst = max(worst, err)
                if err > TOL:
                    return PropertyResult("brute-force-equivalence", False, traj, f"diff={err:.3e}")
    return PropertyResult("brute-force-equivalence", True, detail=f"max diff {worst:.1e}")


def _chained(cls, traj, update):
    w = np.array(cls.prior)
    prob = 1.0
    for t, x in enumerate(traj):
        prob *= _predictive(w, cls)[x]
        w = update(w, cls, traj[:t], x)
    return prob


def check_dominance(update: UpdateFn = exact_update) -> PropertyResult:
    cls = default_coin_set()
    for traj in itertools.product(range(2), repeat=MAX_LENGTH):
        for theta in range(cls.n_params):
            res = oracle.regret_dominance_check(cls, theta, traj)
            if not res.holds:
                return PropertyResult("dominance", False, (theta, traj), f"min slack {res.slack.min():.3e}")
    return PropertyResult("dominance", True)


def check_expectimax() -> PropertyResult:
    cls = default_bandit()
    uni = oracle.prior_belief(cls)
    cases = [
        ("uniform H=1", oracle.bayes_optimal_q(uni, cls, 1), np.array([0.5, 0.5])),
        ("uniform H=2", oracle.bayes_optimal_q(uni, cls, 2), np.array([1.32, 1.32])),
        ("point mass H=4", oracle.bayes_optimal_q(oracle.FiniteBelief([1.0, 0.0]), cls, 4)[:1], np.array([3.6])),
        ("H=0", oracle.bayes_optimal_q(uni, cls, 0), np.zeros(2)),
    ]
    for name, got, want in cases:
        if np.max(np.abs(got - want)) > 1e-12:
            return PropertyResult("expectimax-hand-values", False, name, f"got {got}, want {want}")
    for w0 in (0.5, 0.7, 0.95):
        b = oracle.FiniteBelief([w0, 1 - w0])
        prev = oracle.bayes_optimal_q(b, cls, 1)
        for h in range(2, 6):
            q = oracle.bayes_optimal_q(b, cls, h)
            if np.any(q < prev - 1e-12):
                return PropertyResult("expectimax-hand-values", False, ("monotone", w0, h))
            prev = q
    return PropertyResult("expectimax-hand-values", True)


def run_selftest(update: UpdateFn = exact_update) -> list[PropertyResult]:
    """Run every property; the suite never stops at the first failure."""
    return [
        check_normalization(update),
        check_martingale(update),
        check_exchangeability(update),
        check_intervention(update),
        check_brute_force(update),
        check_dominance(update),
        check_expectimax(),
    ]
