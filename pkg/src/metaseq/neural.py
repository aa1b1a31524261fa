"""Gated recurrent agent with hand-written backpropagation through time.

The agent is a single-layer GRU-style cell with three linear read-outs:
prediction logits over observations, policy logits over actions and
action values.  All arrays are float64 and batched along the first axis.
Gradients are exact reverse-mode derivatives of whatever per-step head
gradients the caller supplies, so losses live outside this module as small
``*_and_grad`` helpers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .core import PROB_FLOOR, DivergedTrainingError, RandomSource

HEADS = ("pred", "policy", "q")
GATE_NAMES = ("Wz", "Uz", "bz", "Wr", "Ur", "br", "Wn", "Un", "bn")
CHECKPOINT_FORMAT = "metaseq-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class CellParams:
    n_in: int
    hidden: int
    n_obs: int
    n_act: int
    weights: dict[str, np.ndarray]

    @classmethod
    def zeros(cls, n_in: int, hidden: int, n_obs: int, n_act: int = 0) -> "CellParams":
        H = hidden
        shapes = {
            "Wz": (n_in, H), "Uz": (H, H), "bz": (H,),
            "Wr": (n_in, H), "Ur": (H, H), "br": (H,),
            "Wn": (n_in, H), "Un": (H, H), "bn": (H,),
            "W_pred": (H, n_obs), "b_pred": (n_obs,),
            "W_policy": (H, n_act), "b_policy": (n_act,),
            "W_q": (H, n_act), "b_q": (n_act,),
        }
        return cls(n_in, hidden, n_obs, n_act, {k: np.zeros(s) for k, s in shapes.items()})

    @classmethod
    def initialize(cls, n_in: int, hidden: int, n_obs: int, n_act: int, rng: RandomSource) -> "CellParams":
        """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases, update-gate bias +1."""
        p = cls.zeros(n_in, hidden, n_obs, n_act)
        s = 1.0 / np.sqrt(hidden)
        for name, w in p.weights.items():
            if not name.startswith("b"):
                w[...] = rng.generator.uniform(-s, s, size=w.shape)
        p.weights["bz"][...] = 1.0
        return p

    def copy(self) -> "CellParams":
        return CellParams(self.n_in, self.hidden, self.n_obs, self.n_act,
                          {k: v.copy() for k, v in self.weights.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.weights.items()}

    @property
    def size(self) -> int:
        return sum(v.size for v in self.weights.values())

    def initial_memory(self, batch: int) -> np.ndarray:
        return np.zeros((batch, self.hidden))


@dataclass
class StepCache:
    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    n: np.ndarray
    h: np.ndarray


@dataclass
class Tape:
    """Forward activations of one unrolled batch of rollouts."""

    steps: list[StepCache] = field(default_factory=list)

    def record(self, cache: StepCache) -> None:
        self.steps.append(cache)

    def __len__(self) -> int:
        return len(self.steps)


def _sigmoid(a: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def forward_step(params: CellParams, x: np.ndarray, h_prev: np.ndarray):
    """One recurrent step.  Returns ``(heads, h_next, cache)``.

    ``heads`` maps ``"pred"``, ``"policy"`` and ``"q"`` to their raw outputs.
    """
    w = params.weights
    z = _sigmoid(x @ w["Wz"] + h_prev @ w["Uz"] + w["bz"])
    r = _sigmoid(x @ w["Wr"] + h_prev @ w["Ur"] + w["br"])
    n = np.tanh(x @ w["Wn"] + (r * h_prev) @ w["Un"] + w["bn"])
    h = (1.0 - z) * n + z * h_prev
    if not np.all(np.isfinite(h)):
        raise DivergedTrainingError("non-finite memory activation")
    heads = {name: h @ w[f"W_{name}"] + w[f"b_{name}"] for name in HEADS}
    return heads, h, StepCache(x, h_prev, z, r, n, h)


def unroll(params: CellParams, inputs: np.ndarray):
    """Teacher-forced forward pass over inputs of shape (T, B, n_in).

    Returns the per-step head outputs, the tape and the memory trace of
    shape (T, B, H) (memory after each step).
    """
    h = params.initial_memory(inputs.shape[1])
    tape = Tape()
    outputs, memory = [], []
    for x in inputs:
        heads, h, cache = forward_step(params, x, h)
        tape.record(cache)
        outputs.append(heads)
        memory.append(h)
    return outputs, tape, np.array(memory)


def backward(params: CellParams, tape: Tape, seeds: list[dict]) -> dict[str, np.ndarray]:
    """Gradients of the accumulated loss with respect to every weight.

    ``seeds[t]`` maps head names to dL/d(head output) at step t; missing
    heads contribute nothing.
    """
    if len(seeds) != len(tape):
        raise ValueError("one seed dictionary is needed per recorded step")
    w = params.weights
    g = params.zeros_like()
    dh_next = np.zeros_like(tape.steps[0].h) if len(tape) else None
    for c, seed in zip(reversed(tape.steps), reversed(seeds)):
        dh = dh_next.copy()
        for name, d in seed.items():
            g[f"W_{name}"] += c.h.T @ d
            g[f"b_{name}"] += d.sum(axis=0)
            dh += d @ w[f"W_{name}"].T
        dz = dh * (c.h_prev - c.n)
        dh_prev = dh * c.z
        dan = dh * (1.0 - c.z) * (1.0 - c.n ** 2)
        rh = c.r * c.h_prev
        g["Wn"] += c.x.T @ dan
        g["Un"] += rh.T @ dan
        g["bn"] += dan.sum(axis=0)
        drh = dan @ w["Un"].T
        dh_prev += drh * c.r
        dar = drh * c.h_prev * c.r * (1.0 - c.r)
        g["Wr"] += c.x.T @ dar
        g["Ur"] += c.h_prev.T @ dar
        g["br"] += dar.sum(axis=0)
        dh_prev += dar @ w["Ur"].T
        daz = dz * c.z * (1.0 - c.z)
        g["Wz"] += c.x.T @ daz
        g["Uz"] += c.h_prev.T @ daz
        g["bz"] += daz.sum(axis=0)
        dh_prev += daz @ w["Uz"].T
        dh_next = dh_prev
    for name, v in g.items():
        if not np.all(np.isfinite(v)):
            raise DivergedTrainingError(f"non-finite gradient in {name}")
    return g


# ---------------------------------------------------------------------------
# output maps and losses

def softmax_temperature(logits: np.ndarray, beta: float = 1.0) -> np.ndarray:
    """pi(a) proportional to exp(beta * logits[a]), along the last axis."""
    if beta < 0:
        raise ValueError("inverse temperature must be nonnegative")
    a = beta * np.asarray(logits, dtype=np.float64)
    a = a - a.max(axis=-1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=-1, keepdims=True)


def stop_gradient(value):
    """Identity on the forward pass; the result is a frozen constant.

    Reverse-mode here is explicit, so a stopped value is simply never given
    a gradient path: the copy is read-only to make accidental in-place
    reuse as a differentiable quantity fail loudly.
    """
    out = np.array(value, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


def cross_entropy_and_grad(logits: np.ndarray, target_probs: np.ndarray):
    """Per-row ``-sum_a target[a] log max(softmax(logits)[a], floor)`` and its logit gradient."""
    p = softmax_temperature(logits)
    live = p > PROB_FLOOR
    losses = -(target_probs * np.log(np.maximum(p, PROB_FLOOR))).sum(axis=1)
    wts = target_probs * live
    grad = wts.sum(axis=1, keepdims=True) * p - wts
    return losses, grad


def log_loss_and_grad(logits: np.ndarray, observed: np.ndarray):
    onehot = np.eye(logits.shape[1])[observed]
    return cross_entropy_and_grad(logits, onehot)


def td_loss_and_grad(q: np.ndarray, actions: np.ndarray, target: np.ndarray):
    """Squared TD error ``(target - q[a])**2``; ``target`` receives no gradient."""
    rows = np.arange(q.shape[0])
    diff = q[rows, actions] - target
    grad = np.zeros_like(q)
    grad[rows, actions] = 2.0 * diff
    return diff ** 2, grad


# ---------------------------------------------------------------------------
# input encodings

def encode_prediction_input(prev: np.ndarray | None, batch: int, n_obs: int) -> np.ndarray:
    """One-hot previous observation; ``None`` gives the all-zero sentinel."""
    x = np.zeros((batch, n_obs))
    if prev is not None:
        x[np.arange(batch), prev] = 1.0
    return x


def encode_decision_input(prev_actions, prev_obs, prev_rewards, batch: int, n_act: int, n_obs: int) -> np.ndarray:
    """One-hot action, one-hot observation and scalar reward, concatenated."""
    x = np.zeros((batch, n_act + n_obs + 1))
    if prev_actions is not None:
        rows = np.arange(batch)
        x[rows, prev_actions] = 1.0
        x[rows, n_act + prev_obs] = 1.0
        x[:, -1] = prev_rewards
    return x


# ---------------------------------------------------------------------------
# optimization

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: CellParams) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)


def adam_step(params: CellParams, grads: dict, state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam update.  Returns ``(new_params, new_state)``."""
    t = state.step + 1
    new = params.copy()
    m, v = {}, {}
    for k, g in grads.items():
        m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        m_hat = m[k] / (1.0 - beta1 ** t)
        v_hat = v[k] / (1.0 - beta2 ** t)
        new.weights[k] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m, v, t)


def clip_global_norm(grads: dict, max_norm: float = 10.0) -> tuple[dict, float]:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


# ---------------------------------------------------------------------------
# verification

@dataclass(frozen=True)
class GradientCheck:
    max_rel_error: float
    n_checked: int
    worst: tuple[str, tuple]

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol


def finite_difference_check(params: CellParams, loss_fn: Callable[[CellParams], float], grads: dict,
                            n_params: int | None = 200, step: float = 1e-5,
                            rng: RandomSource | None = None, abs_floor: float = 1e-4) -> GradientCheck:
    """Compare ``grads`` with central differences of ``loss_fn``.

    ``n_params`` coordinates are chosen at random (all of them when None or
    when the model is smaller).  The relative error of a coordinate is
    ``|analytic - numeric| / max(|analytic|, |numeric|, abs_floor)``.
    """
    coords = [(name, idx) for name, w in params.weights.items() for idx in np.ndindex(w.shape)]
    if n_params is not None and n_params < len(coords):
        rng = rng or RandomSource(0)
        pick = rng.generator.choice(len(coords), size=n_params, replace=False)
        coords = [coords[i] for i in sorted(pick)]
    worst, worst_at = 0.0, ("", ())
    for name, idx in coords:
        probe = params.copy()
        w = probe.weights[name]
        orig = w[idx]
        w[idx] = orig + step
        up = loss_fn(probe)
        w[idx] = orig - step
        down = loss_fn(probe)
        numeric = (up - down) / (2.0 * step)
        analytic = float(grads[name][idx])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), abs_floor)
        if err > worst:
            worst, worst_at = err, (name, idx)
    return GradientCheck(worst, len(coords), worst_at)


# ---------------------------------------------------------------------------
# checkpoints

def _dump(arrs: dict) -> dict:
    return {k: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]} for k, v in arrs.items()}


def _load(obj: dict) -> dict:
    return {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in obj.items()}


def save_checkpoint(path, params: CellParams, state: AdamState | None = None, meta: dict | None = None) -> None:
    """Write a textual checkpoint; floats use shortest round-trip repr, so
    reloading is exact on any platform."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "sizes": {"n_in": params.n_in, "hidden": params.hidden, "n_obs": params.n_obs, "n_act": params.n_act},
        "meta": meta or {},
        "params": _dump(params.weights),
        "adam": None if state is None else {"step": state.step, "m": _dump(state.m), "v": _dump(state.v)},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path):
    """Returns ``(params, adam_state_or_None, meta)``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    s = doc["sizes"]
    params = CellParams(s["n_in"], s["hidden"], s["n_obs"], s["n_act"], _load(doc["params"]))
    ref = CellParams.zeros(s["n_in"], s["hidden"], s["n_obs"], s["n_act"])
    for k, v in ref.weights.items():
        if k not in params.weights or params.weights[k].shape != v.shape:
            raise ValueError(f"checkpoint weight {k} has the wrong shape")
    state = None
    if doc.get("adam"):
        a = doc["adam"]
        state = AdamState(_load(a["m"]), _load(a["v"]), int(a["step"]))
    return params, state, doc.get("meta", {})
