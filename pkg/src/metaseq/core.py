"""Shared value types, errors and the seeded randomness contract."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

PROB_FLOOR = 1e-12
NORM_TOL = 1e-9

Trajectory = tuple[int, ...]


class MetaseqError(Exception):
    """Base class for all errors raised by this package."""


class UnsupportedOperationError(MetaseqError):
    pass


class ImpossibleObservationError(MetaseqError):
    pass


class DivergedTrainingError(MetaseqError):
    pass


class ResourceBoundError(MetaseqError):
    pass


class InconsistentMachineError(MetaseqError):
    def __init__(self, message: str, witness: tuple = ()):
        super().__init__(message)
        self.witness = witness


class ConfigError(MetaseqError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Alphabet:
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"alphabet size must be positive, got {self.size}")

    def __contains__(self, symbol: int) -> bool:
        return 0 <= int(symbol) < self.size

    def one_hot(self, symbol: int) -> np.ndarray:
        v = np.zeros(self.size)
        v[symbol] = 1.0
        return v


class Interaction(NamedTuple):
    action: int
    observation: int
    reward: float = 0.0


def make_trajectory(symbols: Sequence[int], alphabet: Alphabet, horizon: int | None = None) -> Trajectory:
    traj = tuple(int(s) for s in symbols)
    for s in traj:
        if s not in alphabet:
            raise ValueError(f"symbol {s} outside alphabet of size {alphabet.size}")
    if horizon is not None and len(traj) > horizon:
        raise ValueError(f"trajectory of length {len(traj)} exceeds horizon {horizon}")
    return traj


def prob_vector(weights, tol: float = NORM_TOL) -> np.ndarray:
    """Validate ``weights`` as a distribution and return a read-only float64 copy.

    Negative entries and sums further than ``tol`` from one are rejected;
    drift within ``tol`` is renormalized away.
    """
    p = np.array(weights, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probability vector must be a non-empty 1-D array")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError(f"probability vector has negative or non-finite entries: {p}")
    total = p.sum()
    if abs(total - 1.0) > tol:
        raise ValueError(f"probability vector sums to {total!r}, not 1")
    p /= total
    p.flags.writeable = False
    return p


class RandomSource:
    """Counter-based random stream keyed by a 64-bit seed and a spawn path.

    Streams are derived with :meth:`split`, which depends only on the keys
    passed, never on how many draws the parent has made. Philox is used so
    that a given (seed, path) yields the same draws on every platform.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.path = tuple(int(k) for k in path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.Philox(ss))

    def split(self, *keys: int) -> "RandomSource":
        return RandomSource(self.seed, self.path + tuple(keys))

    def random(self, size=None):
        return self.generator.random(size)

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, path={self.path})"


def _cumulative(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p, axis=-1)
    c[..., -1] = 1.0
    return c


def sample_categorical(p, rng: RandomSource) -> int:
    """Draw one index from the distribution ``p``."""
    p = prob_vector(p)
    u = rng.random()
    return int(np.searchsorted(_cumulative(p), u, side="right"))


def sample_categorical_rows(probs: np.ndarray, rng: RandomSource) -> np.ndarray:
    """Draw one index per row of a (B, K) matrix of distributions."""
    probs = np.asarray(probs, dtype=np.float64)
    sums = probs.sum(axis=1)
    if np.any(probs < 0) or np.any(np.abs(sums - 1.0) > NORM_TOL):
        raise ValueError("rows must be normalized probability vectors")
    u = rng.random(probs.shape[0])
    c = _cumulative(probs)
    idx = (c <= u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def log_loss(p, observed: int) -> float:
    """Instantaneous log-loss ``-log p[observed]`` with a 1e-12 floor."""
    return float(-np.log(max(float(p[observed]), PROB_FLOOR)))
