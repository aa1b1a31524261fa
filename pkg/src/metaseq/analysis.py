"""Interpretation of trained predictors.

Memory clouds are collected by replaying an agent on every history up to a
horizon (or on sampled rollouts when enumeration is too large).  From a
cloud we compute eigenprojections of the memory, extract the finite state
machine the agent implements by merging histories with equal behavior, and
compare it with the minimal count lattice.  ``segment_stream`` quantizes a
single long memory trace and cuts the stream at visits of the most
frequent state.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import InconsistentMachineError, RandomSource, Trajectory, sample_categorical_rows
from .generators import HypothesisClass
from .metatrain import NeuralAgent, OracleAgent
from .neural import CellParams

MAX_ENUMERATED_HORIZON = 10
DEFAULT_DELTA = 0.02


# ---------------------------------------------------------------------------
# memory clouds

@dataclass(frozen=True, eq=False)
class MemoryCloud:
    """One record per (history, step): the history, the memory and the prediction."""

    histories: tuple
    memory: np.ndarray
    predictions: np.ndarray
    horizon: int
    n_symbols: int
    enumerated: bool

    def __len__(self) -> int:
        return len(self.histories)

    def index(self) -> dict:
        """history -> record position (first occurrence)."""
        out = {}
        for i, h in enumerate(self.histories):
            out.setdefault(h, i)
        return out

    def to_tsv(self) -> str:
        h = self.memory.shape[1]
        cols = ["history"] + [f"m{i}" for i in range(h)] + [f"p{i}" for i in range(self.n_symbols)]
        lines = ["\t".join(cols)]
        for hist, m, p in zip(self.histories, self.memory, self.predictions):
            lines.append("\t".join(["".join(map(str, hist))] + [repr(float(v)) for v in (*m, *p)]))
        return "\n".join(lines) + "\n"


def _as_agent(agent):
    return NeuralAgent(agent) if isinstance(agent, CellParams) else agent


def _replay(agent, cls, trajs: np.ndarray, depth: int):
    """Teacher-force ``depth`` symbols; return memory and prediction after each prefix."""
    n = trajs.shape[0]
    agent.start(cls, n, trajs.shape[1])
    mems, preds = [], []
    for t in range(depth + 1):
        preds.append(np.array(agent.predict()))
        mems.append(np.array(agent.memory()))
        if t < depth:
            agent.observe(trajs[:, t])
    return mems, preds


def collect_memory_cloud(agent, cls: HypothesisClass, horizon: int, n_rollouts: int = 1000,
                         rng: RandomSource | None = None) -> MemoryCloud:
    """Replay a predictor and record (history, memory, prediction).

    ``agent`` is a trained :class:`CellParams`, a :class:`NeuralAgent` or an
    :class:`OracleAgent`.  When ``n_symbols ** horizon`` is small enough
    (binary alphabets up to horizon 10) every history of length 0..horizon is
    enumerated once, giving ``sum_t n_symbols**t`` records.  Otherwise
    ``n_rollouts`` trajectories are sampled and each contributes one record
    per step.
    """
    agent = _as_agent(agent)
    n = cls.n_symbols
    if n ** horizon <= 2 ** MAX_ENUMERATED_HORIZON:
        hists, mems, preds = [], [], []
        for d in range(horizon + 1):
            level = list(itertools.product(range(n), repeat=d))
            trajs = np.array(level, dtype=int).reshape(len(level), d)
            m, p = _replay(agent, cls, trajs, d)
            hists += level
            mems.append(m[-1])
            preds.append(p[-1])
        return MemoryCloud(tuple(hists), np.concatenate(mems), np.concatenate(preds), horizon, n, True)
    rng = rng or RandomSource(0)
    thetas = cls.sample_parameters(n_rollouts, rng.split(0))
    obs_rng = rng.split(1)
    trajs = np.empty((n_rollouts, horizon), dtype=int)
    for t in range(horizon):
        trajs[:, t] = sample_categorical_rows(cls.observation_probs(thetas), obs_rng)
    m, p = _replay(agent, cls, trajs, horizon)
    hists = [tuple(int(x) for x in trajs[i, :t]) for i in range(n_rollouts) for t in range(horizon + 1)]
    mem = np.stack(m, axis=1).reshape(n_rollouts * (horizon + 1), -1)
    pred = np.stack(p, axis=1).reshape(n_rollouts * (horizon + 1), -1)
    return MemoryCloud(tuple(hists), mem, pred, horizon, n, False)


# ---------------------------------------------------------------------------
# eigenprojection

@dataclass(frozen=True, eq=False)
class Projection:
    coords: np.ndarray
    explained: np.ndarray
    components: np.ndarray
    low_rank: bool

    def to_tsv(self, histories=None) -> str:
        k = self.coords.shape[1]
        head = (["history"] if histories is not None else []) + [f"pc{i + 1}" for i in range(k)]
        lines = ["\t".join(head)]
        for i, row in enumerate(self.coords):
            cells = [repr(float(v)) for v in row]
            if histories is not None:
                cells.insert(0, "".join(map(str, histories[i])))
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"


def project_memory(cloud, rank_tol: float = 1e-10) -> Projection:
    """Project centered memory vectors onto the top two covariance eigenvectors.

    Accepts a :class:`MemoryCloud` or a raw (n, H) array.  Each component's
    sign is fixed so that the coordinate of largest magnitude is positive,
    which makes the output invariant to rotations of the memory space up to
    that convention.  With fewer than two nonzero variance directions a
    one-column projection is returned with ``low_rank`` set.
    """
    x = np.asarray(cloud.memory if isinstance(cloud, MemoryCloud) else cloud, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ValueError("need at least 3 memory vectors")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / x.shape[0]
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = np.clip(vals[order], 0.0, None), vecs[:, order]
    total = vals.sum()
    rank = int(np.sum(vals > rank_tol * max(total, 1.0)))
    k = 2 if rank >= 2 else 1
    comps = vecs[:, :k]
    coords = xc @ comps
    if rank == 0:
        coords = np.zeros_like(coords)
    for j in range(k):
        i = np.argmax(np.abs(coords[:, j]))
        if coords[i, j] < 0:
            coords[:, j] *= -1
            comps[:, j] *= -1
    explained = vals[:k] / total if total > 0 else np.zeros(k)
    return Projection(coords, explained, comps, rank < 2)


# ---------------------------------------------------------------------------
# state machines

@dataclass(eq=False)
class StateMachine:
    """Deterministic transducer with a representative prediction per state."""

    predictions: np.ndarray
    transitions: dict
    initial: int = 0
    depth: np.ndarray | None = None
    members: list = field(default_factory=list)

    @property
    def n_states(self) -> int:
        return self.predictions.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.predictions.shape[1]

    def step(self, state: int, symbol: int) -> int:
        return self.transitions[(state, symbol)]

    def run(self, history) -> int:
        s = self.initial
        for x in history:
            s = self.step(s, int(x))
        return s

    def reachable(self) -> set:
        seen, todo = {self.initial}, [self.initial]
        while todo:
            s = todo.pop()
            for x in range(self.n_symbols):
                nxt = self.transitions.get((s, x))
                if nxt is not None and nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        return seen


def build_machine(assignment: dict, predictions: dict, n_symbols: int) -> StateMachine:
    """Assemble a machine from a history -> state-id assignment.

    Transitions are induced by one-symbol history extension.  Two histories
    in the same state whose extensions by the same symbol land in different
    states make the machine nondeterministic; that raises
    :class:`InconsistentMachineError` with the offending pair as witness.
    """
    ids = sorted(set(assignment.values()))
    remap = {s: i for i, s in enumerate(ids)}
    trans, owner = {}, {}
    members = [[] for _ in ids]
    for h in sorted(assignment, key=lambda h: (len(h), h)):
        s = remap[assignment[h]]
        members[s].append(h)
        if h and h[:-1] in assignment:
            key = (remap[assignment[h[:-1]]], h[-1])
            if key in trans and trans[key] != s:
                raise InconsistentMachineError(
                    f"state {key[0]} has two successors on symbol {key[1]}", (owner[key], h))
            trans[key] = s
            owner.setdefault(key, h)
    preds = np.array([np.mean([predictions[h] for h in m], axis=0) for m in members])
    depth = np.array([len(m[0]) for m in members])
    initial = remap[assignment[()]]
    return StateMachine(preds, trans, initial, depth, members)


def _behavior(cloud: MemoryCloud, idx: dict, h: Trajectory) -> np.ndarray:
    """Predictions at ``h`` and all its enumerated continuations, in a fixed order."""
    rest = cloud.horizon - len(h)
    rows = [cloud.predictions[idx[h + c]]
            for k in range(rest + 1) for c in itertools.product(range(cloud.n_symbols), repeat=k)]
    return np.concatenate(rows)


def extract_state_machine(cloud: MemoryCloud, delta: float = DEFAULT_DELTA) -> StateMachine:
    """Merge same-depth histories whose behavior agrees within ``delta``.

    Two histories are compatible when the sup-norm distance between their
    predictions is at most ``delta`` at the history itself and at every
    continuation up to the cloud's horizon.  The machine is built top-down:
    the children of one state on one symbol form a group (they are pairwise
    compatible because their parents were), and groups at the same depth are
    merged greedily in history order whenever the union stays pairwise
    compatible (complete linkage, tracked with min/max envelopes).
    """
    if not cloud.enumerated:
        raise ValueError("state-machine extraction needs an enumerated cloud")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    idx = cloud.index()
    preds = {h: cloud.predictions[i] for h, i in idx.items()}
    assignment = {(): 0}
    frontier = {0: [()]}
    next_id = 1
    for d in range(cloud.horizon):
        groups = []
        for state in sorted(frontier):
            for x in range(cloud.n_symbols):
                groups.append([h + (x,) for h in frontier[state]])
        clusters = []  # [members, low, high]
        for g in groups:
            beh = np.array([_behavior(cloud, idx, h) for h in g])
            lo, hi = beh.min(axis=0), beh.max(axis=0)
            for c in clusters:
                if np.max(np.maximum(hi, c[2]) - np.minimum(lo, c[1])) <= delta:
                    c[0].extend(g)
                    c[1], c[2] = np.minimum(lo, c[1]), np.maximum(hi, c[2])
                    break
            else:
                clusters.append([list(g), lo, hi])
        frontier = {}
        for members, _, _ in clusters:
            for h in members:
                assignment[h] = next_id
            frontier[next_id] = members
            next_id += 1
    return build_machine(assignment, preds, cloud.n_symbols)


def trie_size(n_symbols: int, horizon: int) -> int:
    return sum(n_symbols ** t for t in range(horizon + 1))


# ---------------------------------------------------------------------------
# count lattice

@dataclass(frozen=True)
class LatticeReference:
    """Minimal machine of the Laplace predictor: one state per count pair."""

    horizon: int

    @property
    def states(self) -> list:
        return [(h, t) for n in range(self.horizon + 1) for h in range(n, -1, -1) for t in [n - h]]

    @property
    def n_states(self) -> int:
        return (self.horizon + 1) * (self.horizon + 2) // 2

    @staticmethod
    def prediction(state) -> np.ndarray:
        n_h, n_t = state
        p1 = (n_h + 1) / (n_h + n_t + 2)
        return np.array([1.0 - p1, p1])

    @staticmethod
    def successor(state, symbol: int):
        n_h, n_t = state
        return (n_h + 1, n_t) if symbol == 1 else (n_h, n_t + 1)

    def to_machine(self) -> StateMachine:
        order = {s: i for i, s in enumerate(self.states)}
        trans = {}
        for s, i in order.items():
            if sum(s) < self.horizon:
                for x in (0, 1):
                    trans[(i, x)] = order[self.successor(s, x)]
        preds = np.array([self.prediction(s) for s in self.states])
        depth = np.array([sum(s) for s in self.states])
        return StateMachine(preds, trans, order[(0, 0)], depth, [[s] for s in self.states])


@dataclass(frozen=True, eq=False)
class LatticeComparison:
    n_states: int
    n_reference: int
    state_ratio: float
    max_discrepancy: float
    bisimilar: bool
    isomorphic: bool
    unmatched_states: list
    unmatched_reference: list


def compare_to_lattice(machine: StateMachine, reference: LatticeReference,
                       depth: int | None = None) -> LatticeComparison:
    """Depth-bounded bisimulation between ``machine`` and the count lattice.

    Both are walked in lockstep from their initial states.  The machine is
    bisimilar when every visited machine state pairs with exactly one
    lattice state, and isomorphic when that pairing is also one-to-one and
    covers every state on both sides.  Only binary alphabets are supported
    (symbol 1 increments n_H).
    """
    if machine.n_symbols != 2:
        raise ValueError("the count lattice is defined for binary alphabets")
    depth = reference.horizon if depth is None else min(depth, reference.horizon)
    pairs = {(machine.initial, (0, 0))}
    frontier = list(pairs)
    for _ in range(depth):
        nxt = []
        for s, r in frontier:
            for x in (0, 1):
                key = (s, x)
                if key not in machine.transitions:
                    continue
                p = (machine.transitions[key], reference.successor(r, x))
                if p not in pairs:
                    pairs.add(p)
                    nxt.append(p)
        frontier = nxt
    to_ref, to_mach = {}, {}
    for s, r in pairs:
        to_ref.setdefault(s, set()).add(r)
        to_mach.setdefault(r, set()).add(s)
    disc = max(float(np.max(np.abs(machine.predictions[s] - reference.prediction(r)))) for s, r in pairs)
    in_depth = [s for s in range(machine.n_states)
                if machine.depth is None or machine.depth[s] <= depth]
    ref_states = [r for r in reference.states if sum(r) <= depth]
    unmatched = sorted(s for s in in_depth if s not in to_ref)
    unmatched_ref = sorted(r for r in ref_states if r not in to_mach)
    bisim = all(len(v) == 1 for v in to_ref.values())
    iso = bisim and all(len(v) == 1 for v in to_mach.values()) and not unmatched and not unmatched_ref
    return LatticeComparison(len(in_depth), len(ref_states), len(in_depth) / len(ref_states),
                             disc, bisim, iso, unmatched, unmatched_ref)


def export_machine(machine: StateMachine, name: str = "machine") -> str:
    """DOT digraph with states labeled by their prediction and edges by symbol."""
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for s in range(machine.n_states):
        label = ", ".join(f"{p:.3f}" for p in machine.predictions[s])
        shape = "doublecircle" if s == machine.initial else "circle"
        lines.append(f'  s{s} [shape={shape}, label="s{s}\\n[{label}]"];')
    for (s, x), t in sorted(machine.transitions.items()):
        lines.append(f'  s{s} -> s{t} [label="{x}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# stream segmentation

def quantize_trace(trace: np.ndarray, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Leader clustering under the sup-norm.

    Each vector joins the earliest leader within ``delta``; otherwise it
    becomes a new leader.  Returns one state label per row.
    """
    trace = np.asarray(trace, dtype=np.float64)
    leaders: list[np.ndarray] = []
    labels = np.empty(trace.shape[0], dtype=int)
    for i, v in enumerate(trace):
        for j, lead in enumerate(leaders):
            if np.max(np.abs(v - lead)) <= delta:
                labels[i] = j
                break
        else:
            labels[i] = len(leaders)
            leaders.append(v)
    return labels


@dataclass(frozen=True)
class Segmentation:
    anchor: int | None
    anchor_positions: tuple
    segments: tuple

    @property
    def segmented(self) -> bool:
        return self.anchor is not None

    @property
    def lengths(self) -> list:
        return [len(s) for s in self.segments]


def segment_stream(trace, observations, delta: float = DEFAULT_DELTA) -> Segmentation:
    """Cut a stream at consecutive visits of its most frequent memory state.

    ``trace[i]`` is the memory after consuming ``observations[i]`` (position
    i+1 in one-based terms).  The anchor is the most visited quantized state,
    ties going to the state visited first.  With anchor positions p_1 < p_2
    < ... the segments are x[p_k+1 .. p_{k+1}].  If the anchor occurs fewer
    than twice there is no segmentation.
    """
    obs = tuple(int(x) for x in observations)
    labels = quantize_trace(trace, delta)
    if len(labels) != len(obs):
        raise ValueError("trace and observations must have equal length")
    counts = Counter(labels.tolist())
    best = max(counts.values()) if counts else 0
    if best < 2:
        return Segmentation(None, (), ())
    anchor = next(s for s in labels.tolist() if counts[s] == best)
    pos = tuple(int(i) + 1 for i in np.flatnonzero(labels == anchor))
    segs = tuple(obs[a:b] for a, b in zip(pos, pos[1:]))
    return Segmentation(int(anchor), pos, segs)


def segmentation_sensitivity(trace, observations, deltas) -> list[dict]:
    """Number of quantized states and segment lengths for each ``delta``."""
    out = []
    for d in deltas:
        seg = segment_stream(trace, observations, d)
        out.append({"delta": float(d), "n_states": int(quantize_trace(trace, d).max() + 1),
                    "anchor_visits": len(seg.anchor_positions), "lengths": seg.lengths})
    return out


def trace_stream(agent, cls: HypothesisClass, observations) -> np.ndarray:
    """Memory after each symbol of a single stream, shape (len, H)."""
    agent = _as_agent(agent)
    obs = np.asarray(observations, dtype=int)
    agent.start(cls, 1, len(obs))
    out = []
    for x in obs:
        agent.memory()
        agent.observe(np.array([x]))
        out.append(np.array(agent.memory()[0]))
    return np.array(out)
