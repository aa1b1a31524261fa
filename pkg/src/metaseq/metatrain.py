"""Meta-training loops for predictors, Thompson samplers and Bayes-optimal agents.

Each loop resets the agent to the fixed zero memory and sentinel input,
samples a task parameter per rollout, unrolls the agent for ``horizon``
steps while sampling from the task, accumulates the instantaneous losses
into one scalar per batch and takes one clipped Adam step on its gradient.
Rollouts within a batch are vectorized; every batch draws from its own
split of the run's random source.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from . import oracle
from .core import ConfigError, DivergedTrainingError, RandomSource, sample_categorical_rows
from .generators import BernoulliBanditSet, DirichletCategorical, FiniteCoinSet, HypothesisClass
from .neural import (
    AdamState,
    CellParams,
    adam_step,
    backward,
    clip_global_norm,
    cross_entropy_and_grad,
    encode_decision_input,
    encode_prediction_input,
    forward_step,
    log_loss_and_grad,
    softmax_temperature,
    stop_gradient,
    td_loss_and_grad,
    Tape,
)

log = logging.getLogger(__name__)

ALGORITHMS = ("predict", "thompson", "bayesopt")
TASKS = ("dirichlet", "coins", "bandit")
SCHEDULES = ("exponential", "linear", "constant")

# random-stream keys
_INIT, _TRAIN, _EVAL = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "predict"
    task: str = "dirichlet"
    thetas: tuple = ()
    concentration: tuple = (1.0, 1.0)
    prior: tuple = ()
    batch_size: int = 100
    horizon: int = 10
    batches: int = 1000
    hidden: int = 20
    learning_rate: float = 1e-3
    clip_norm: float = 10.0
    beta_start: float = 0.0
    beta_max: float = 20.0
    cooling: str = "exponential"
    cooling_scale: float = 0.0
    seed: int = 0
    eval_every: int = 25
    eval_rollouts: int = 256
    early_stop_patience: int = 100
    early_stop_min_delta: float = 1e-4
    checkpoint_every: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(ok, name, msg):
            if not ok:
                raise ConfigError(name, msg)

        need(self.algorithm in ALGORITHMS, "algorithm", f"must be one of {ALGORITHMS}, got {self.algorithm!r}")
        need(self.task in TASKS, "task", f"must be one of {TASKS}, got {self.task!r}")
        need(self.cooling in SCHEDULES, "cooling", f"must be one of {SCHEDULES}, got {self.cooling!r}")
        for name in ("batch_size", "horizon", "batches", "hidden", "eval_rollouts"):
            need(int(getattr(self, name)) >= 1, name, "must be >= 1")
        for name in ("eval_every", "early_stop_patience", "checkpoint_every"):
            need(int(getattr(self, name)) >= 0, name, "must be >= 0")
        need(self.learning_rate > 0, "learning_rate", "must be positive")
        need(self.clip_norm > 0, "clip_norm", "must be positive")
        need(0 <= self.beta_start <= self.beta_max, "beta_start", "need 0 <= beta_start <= beta_max")
        need(self.cooling_scale >= 0, "cooling_scale", "must be >= 0 (0 selects batches / 5)")
        need(0 <= int(self.seed) < 2**64, "seed", "must be an unsigned 64-bit integer")
        if self.algorithm == "predict":
            need(self.task != "bandit", "task", "the predict algorithm needs a prediction task")
        else:
            need(self.task == "bandit", "task", f"the {self.algorithm} algorithm needs a bandit task")
        try:
            self.task_class()
        except ValueError as exc:
            field_name = "concentration" if self.task == "dirichlet" else "thetas"
            raise ConfigError(field_name, str(exc)) from None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError(k, "unknown key")
        kw = {}
        for k, v in d.items():
            default = known[k].default
            if isinstance(default, tuple):
                if not isinstance(v, (list, tuple)):
                    raise ConfigError(k, "expected a list")
                kw[k] = tuple(tuple(x) if isinstance(x, list) else x for x in v)
            elif isinstance(default, bool) or isinstance(default, str):
                if not isinstance(v, type(default)):
                    raise ConfigError(k, f"expected {type(default).__name__}")
                kw[k] = v
            elif isinstance(default, int):
                if isinstance(v, bool) or not isinstance(v, int):
                    raise ConfigError(k, "expected an integer")
                kw[k] = v
            elif isinstance(default, float):
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ConfigError(k, "expected a number")
                kw[k] = float(v)
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)

    def task_class(self) -> HypothesisClass:
        prior = np.array(self.prior, dtype=float) if self.prior else None
        if self.task == "dirichlet":
            return DirichletCategorical(np.array(self.concentration, dtype=float))
        if not self.thetas:
            raise ValueError("thetas must be given for finite task classes")
        thetas = np.array(self.thetas, dtype=float)
        if self.task == "coins":
            if thetas.ndim == 1:
                return FiniteCoinSet.coins(thetas, prior)
            return FiniteCoinSet(thetas, prior)
        return BernoulliBanditSet(thetas, prior)

    @property
    def kappa(self) -> float:
        return self.cooling_scale if self.cooling_scale > 0 else self.batches / 5.0


def cooling_schedule(k: int, config: RunConfig) -> float:
    """Inverse temperature for batch ``k``; non-decreasing from ``beta_start`` to ``beta_max``."""
    if k < 0:
        raise ValueError("batch index must be nonnegative")
    b0, b1 = config.beta_start, config.beta_max
    if config.cooling == "constant":
        return b1
    if config.cooling == "linear":
        return b0 + (b1 - b0) * min(1.0, k / config.kappa)
    return b0 + (b1 - b0) * (1.0 - math.exp(-k / config.kappa))


def input_size(cls: HypothesisClass) -> int:
    if cls.has_experts:
        return cls.n_actions + cls.n_symbols + 1
    return cls.n_symbols


def init_params(config: RunConfig) -> CellParams:
    cls = config.task_class()
    return CellParams.initialize(input_size(cls), config.hidden, cls.n_symbols, cls.n_actions,
                                 RandomSource(config.seed).split(_INIT))


# ---------------------------------------------------------------------------
# metrics

METRIC_COLUMNS = {
    "predict": ("kl", "agent_loss", "oracle_loss"),
    "thompson": ("tv",),
    "bayesopt": ("agreement", "all_history_agreement", "greedy_return", "optimal_return", "return_gap"),
}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class RunMetrics:
    algorithm: str
    rows: list[dict] = field(default_factory=list)

    @property
    def columns(self) -> tuple:
        return ("batch", "step", "loss", "beta", "grad_norm") + METRIC_COLUMNS[self.algorithm]

    def header(self) -> str:
        return "\t".join(self.columns)

    def format_row(self, row: dict) -> str:
        return "\t".join(_fmt(row.get(c)) for c in self.columns)

    def to_tsv(self) -> str:
        return "\n".join([self.header()] + [self.format_row(r) for r in self.rows]) + "\n"

    def evaluated(self) -> list[dict]:
        return [r for r in self.rows if r.get(METRIC_COLUMNS[self.algorithm][0]) is not None]


@dataclass
class TrainResult:
    params: CellParams
    adam: AdamState
    metrics: RunMetrics
    stopped_early: bool = False


# ---------------------------------------------------------------------------
# rollouts with recorded tapes

def _predict_batch(params, cls, n, horizon, rng):
    thetas = cls.sample_parameters(n, rng.split(0))
    obs_rng = rng.split(1)
    probs = cls.observation_probs(thetas)
    h = params.initial_memory(n)
    x = encode_prediction_input(None, n, cls.n_symbols)
    tape, seeds, total = Tape(), [], 0.0
    for _ in range(horizon):
        heads, h, cache = forward_step(params, x, h)
        tape.record(cache)
        xt = sample_categorical_rows(probs, obs_rng)
        # the loss sees only the prediction and the observed symbol
        losses, g = log_loss_and_grad(heads["pred"], xt)
        seeds.append({"pred": g})
        total += losses.sum()
        x = encode_prediction_input(xt, n, cls.n_symbols)
    return tape, seeds, total


def _thompson_batch(params, cls, n, horizon, rng):
    thetas = cls.sample_parameters(n, rng.split(0))
    act_rng, obs_rng = rng.split(1), rng.split(2)
    experts = cls.expert_table()[thetas]
    h = params.initial_memory(n)
    x = encode_decision_input(None, None, None, n, cls.n_actions, cls.n_symbols)
    tape, seeds, total = Tape(), [], 0.0
    for _ in range(horizon):
        heads, h, cache = forward_step(params, x, h)
        tape.record(cache)
        a = sample_categorical_rows(softmax_temperature(heads["policy"]), act_rng)
        o = sample_categorical_rows(cls.observation_probs(thetas, a), obs_rng)
        losses, g = cross_entropy_and_grad(heads["policy"], experts)
        seeds.append({"policy": g})
        total += losses.sum()
        x = encode_decision_input(a, o, o.astype(float), n, cls.n_actions, cls.n_symbols)
    return tape, seeds, total


def _bayesopt_batch(params, cls, n, horizon, rng, beta):
    thetas = cls.sample_parameters(n, rng.split(0))
    act_rng, obs_rng = rng.split(1), rng.split(2)
    rows = np.arange(n)
    h = params.initial_memory(n)
    x = encode_decision_input(None, None, None, n, cls.n_actions, cls.n_symbols)
    tape, seeds, total = Tape(), [], 0.0
    q_prev = a_prev = r_prev = None
    for t in range(horizon):
        heads, h, cache = forward_step(params, x, h)
        tape.record(cache)
        q = heads["q"]
        a = sample_categorical_rows(softmax_temperature(q, beta), act_rng)
        o = sample_categorical_rows(cls.observation_probs(thetas, a), obs_rng)
        r = o.astype(float)
        seeds.append({})
        if t >= 1:
            target = stop_gradient(r_prev + q[rows, a])
            losses, g = td_loss_and_grad(q_prev, a_prev, target)
            seeds[t - 1]["q"] = g
            total += losses.sum()
        q_prev, a_prev, r_prev = q, a, r
        x = encode_decision_input(a, o, r, n, cls.n_actions, cls.n_symbols)
    losses, g = td_loss_and_grad(q_prev, a_prev, stop_gradient(r_prev))
    seeds[-1]["q"] = g
    total += losses.sum()
    return tape, seeds, total


# ---------------------------------------------------------------------------
# training

def train(config: RunConfig, on_row: Callable[[dict], None] | None = None,
          on_checkpoint: Callable[[int, CellParams, AdamState], None] | None = None,
          params: CellParams | None = None) -> TrainResult:
    """Run the meta-training loop selected by ``config.algorithm``."""
    cls = config.task_class()
    params = init_params(config) if params is None else params
    adam = AdamState.for_params(params)
    metrics = RunMetrics(config.algorithm)
    root = RandomSource(config.seed)
    n, T = config.batch_size, config.horizon
    best, best_at, stopped = math.inf, 0, False
    optimal = oracle.optimal_return(cls, T) if config.algorithm == "bayesopt" else None

    for k in range(config.batches):
        beta = cooling_schedule(k, config)
        brng = root.split(_TRAIN, k)
        if config.algorithm == "predict":
            tape, seeds, total = _predict_batch(params, cls, n, T, brng)
        elif config.algorithm == "thompson":
            tape, seeds, total = _thompson_batch(params, cls, n, T, brng)
        else:
            tape, seeds, total = _bayesopt_batch(params, cls, n, T, brng, beta)
        if not math.isfinite(total):
            raise DivergedTrainingError(f"non-finite loss at batch {k}")
        grads, norm = clip_global_norm(backward(params, tape, seeds), config.clip_norm)
        params, adam = adam_step(params, grads, adam, lr=config.learning_rate)

        row = {"batch": k, "step": adam.step, "loss": total / (n * T), "beta": beta, "grad_norm": norm}
        last = k == config.batches - 1
        if config.eval_every and ((k + 1) % config.eval_every == 0 or last):
            ev = evaluate_against_oracle(NeuralAgent(params), config, config.eval_rollouts,
                                         rng=root.split(_EVAL), optimal=optimal)
            row.update(ev)
            score = _score(config.algorithm, ev)
            if score < best - config.early_stop_min_delta:
                best, best_at = score, k
            elif (config.early_stop_patience and k - best_at >= config.early_stop_patience
                  and _may_stop(k, config)):
                stopped = True
        metrics.rows.append(row)
        if on_row:
            on_row(row)
        if on_checkpoint and (last or stopped or (config.checkpoint_every and (k + 1) % config.checkpoint_every == 0)):
            on_checkpoint(k, params, adam)
        if stopped:
            log.info("early stop at batch %d (best %.6g at batch %d)", k, best, best_at)
            break
    return TrainResult(params, adam, metrics, stopped)


def _score(algorithm: str, ev: dict) -> float:
    return {"predict": ev.get("kl"), "thompson": ev.get("tv"), "bayesopt": ev.get("return_gap")}[algorithm]


def _may_stop(k: int, config: RunConfig) -> bool:
    # annealing runs are not stopped before the temperature has mostly cooled
    if config.algorithm != "bayesopt" or config.beta_max == config.beta_start:
        return True
    span = config.beta_max - config.beta_start
    return cooling_schedule(k, config) - config.beta_start >= 0.95 * span


def _require(config: RunConfig, algorithm: str) -> None:
    if config.algorithm != algorithm:
        raise ConfigError("algorithm", f"expected {algorithm!r}, got {config.algorithm!r}")


def train_predictor(config: RunConfig, **kw) -> TrainResult:
    _require(config, "predict")
    return train(config, **kw)


def train_thompson(config: RunConfig, **kw) -> TrainResult:
    _require(config, "thompson")
    return train(config, **kw)


def train_bayes_optimal(config: RunConfig, **kw) -> TrainResult:
    _require(config, "bayesopt")
    return train(config, **kw)


# ---------------------------------------------------------------------------
# agents used for evaluation

class NeuralAgent:
    """Stateful wrapper that steps a trained cell one interaction at a time."""

    def __init__(self, params: CellParams):
        self.params = params

    def start(self, cls: HypothesisClass, n: int, horizon: int) -> None:
        self.cls, self.n = cls, n
        self.h = self.params.initial_memory(n)
        if cls.has_experts:
            self.x = encode_decision_input(None, None, None, n, cls.n_actions, cls.n_symbols)
        else:
            self.x = encode_prediction_input(None, n, cls.n_symbols)
        self._heads = None

    def _outputs(self) -> dict:
        if self._heads is None:
            self._heads, self.h, _ = forward_step(self.params, self.x, self.h)
        return self._heads

    def predict(self) -> np.ndarray:
        return softmax_temperature(self._outputs()["pred"])

    def policy(self) -> np.ndarray:
        return softmax_temperature(self._outputs()["policy"])

    def q_values(self) -> np.ndarray:
        return self._outputs()["q"]

    def memory(self) -> np.ndarray:
        """Memory emitted together with the current outputs."""
        self._outputs()
        return self.h

    def observe(self, symbols, actions=None) -> None:
        self._outputs()
        if actions is None:
            self.x = encode_prediction_input(symbols, self.n, self.cls.n_symbols)
        else:
            self.x = encode_decision_input(actions, symbols, symbols.astype(float), self.n,
                                           self.cls.n_actions, self.cls.n_symbols)
        self._heads = None


class OracleAgent:
    """The exact Bayesian answer behind the same stepping interface."""

    def start(self, cls: HypothesisClass, n: int, horizon: int) -> None:
        self.cls, self.horizon, self.t = cls, horizon, 0
        self.state = oracle.batch_prior(cls, n)

    def predict(self) -> np.ndarray:
        return oracle.batch_predictive(self.cls, self.state)

    def policy(self) -> np.ndarray:
        return oracle.batch_action_predictive(self.cls, self.state)

    def q_values(self) -> np.ndarray:
        cache: dict = {}
        out = []
        for w in self.state:
            key = tuple(np.round(w, 10))
            if key not in cache:
                cache[key] = oracle.bayes_optimal_q(oracle.FiniteBelief(w), self.cls, self.horizon - self.t)
            out.append(cache[key])
        return np.array(out)

    def memory(self) -> np.ndarray:
        # the posterior state is the oracle's sufficient statistic
        return np.array(self.state)

    def observe(self, symbols, actions=None) -> None:
        self.state = oracle.batch_update(self.cls, self.state, symbols, actions)
        self.t += 1


# ---------------------------------------------------------------------------
# evaluation

def _kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(np.maximum(q, 1e-300))), 0.0)
    return terms.sum(axis=-1)


def greedy(q: np.ndarray) -> np.ndarray:
    """Argmax per row; ties go to the lowest index."""
    return np.argmax(q, axis=-1)


def evaluate_against_oracle(agent, config: RunConfig, n_rollouts: int, rng: RandomSource | None = None,
                            optimal: float | None = None, detail: bool = False) -> dict:
    """Fresh rollouts with learning disabled, scored against the exact oracle.

    Returns the metric columns for ``config.algorithm``; with ``detail`` the
    per-rollout, per-step arrays are included too.
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    cls = config.task_class()
    rng = rng or RandomSource(config.seed).split(_EVAL)
    if config.algorithm == "predict":
        return _eval_predict(agent, cls, config.horizon, n_rollouts, rng, detail)
    if config.algorithm == "thompson":
        return _eval_thompson(agent, cls, config.horizon, n_rollouts, rng, detail)
    return _eval_bayesopt(agent, cls, config.horizon, optimal, detail)


def _eval_predict(agent, cls, T, n, rng, detail):
    thetas = cls.sample_parameters(n, rng.split(0))
    obs_rng = rng.split(1)
    probs = cls.observation_probs(thetas)
    agent.start(cls, n, T)
    ref = OracleAgent()
    ref.start(cls, n, T)
    rows = np.arange(n)
    kl, a_loss, o_loss = np.zeros((n, T)), np.zeros((n, T)), np.zeros((n, T))
    for t in range(T):
        p_agent, p_oracle = agent.predict(), ref.predict()
        x = sample_categorical_rows(probs, obs_rng)
        kl[:, t] = _kl(p_oracle, p_agent)
        a_loss[:, t] = -np.log(np.maximum(p_agent[rows, x], 1e-12))
        o_loss[:, t] = -np.log(np.maximum(p_oracle[rows, x], 1e-12))
        agent.observe(x)
        ref.observe(x)
    out = {"kl": kl.mean(), "agent_loss": a_loss.mean(), "oracle_loss": o_loss.mean()}
    if detail:
        out.update(kl_steps=kl, agent_loss_steps=a_loss, oracle_loss_steps=o_loss)
    return out


def _eval_thompson(agent, cls, T, n, rng, detail):
    thetas = cls.sample_parameters(n, rng.split(0))
    act_rng, obs_rng = rng.split(1), rng.split(2)
    agent.start(cls, n, T)
    ref = OracleAgent()
    ref.start(cls, n, T)
    tv = np.zeros((n, T))
    first = None
    for t in range(T):
        pi, target = agent.policy(), ref.policy()
        if t == 0:
            first = pi.mean(axis=0)
        tv[:, t] = 0.5 * np.abs(pi - target).sum(axis=1)
        a = sample_categorical_rows(pi, act_rng)
        o = sample_categorical_rows(cls.observation_probs(thetas, a), obs_rng)
        agent.observe(o, a)
        ref.observe(o, a)
    out = {"tv": tv.mean()}
    if detail:
        out.update(tv_steps=tv, first_policy=first)
    return out


def _eval_bayesopt(agent, cls, T, optimal, detail):
    if optimal is None:
        optimal = oracle.optimal_return(cls, T)
    tree = greedy_policy_tree(agent, cls, T)
    full = greedy_agreement(agent, cls, T)
    out = {"agreement": tree["agreement"], "all_history_agreement": full["fraction"],
           "greedy_return": tree["return"], "optimal_return": optimal,
           "return_gap": optimal - tree["return"]}
    if detail:
        out.update(tree=tree, agreement_detail=full)
    return out


def reachable_histories(cls: HypothesisClass, depth: int):
    """All (action, observation) strings of length ``depth`` with positive prior probability."""
    pairs = list(itertools.product(range(cls.n_actions), range(cls.n_symbols)))
    for hist in itertools.product(pairs, repeat=depth):
        w = cls.prior.copy()
        for a, o in hist:
            w = w * cls.likelihood_table(a)[:, o]
        if w.sum() > 0:
            yield hist


def _agent_on_histories(agent, cls, hists, horizon):
    """Teacher-force ``agent`` along equal-length histories; return the final q-values."""
    n = len(hists)
    agent.start(cls, n, horizon)
    for t in range(len(hists[0]) if hists else 0):
        a = np.array([h[t][0] for h in hists])
        o = np.array([h[t][1] for h in hists])
        agent.observe(o, a)
    return agent.q_values()


def greedy_agreement(agent, cls: HypothesisClass, horizon: int, tol: float = 1e-9) -> dict:
    """Fraction of all prior-reachable histories where the greedy action is Bayes-optimal.

    This includes histories the agent's own policy never produces.

    Where several actions tie for the optimal value (within ``tol``) any of
    them counts as agreement.
    """
    total, agreed, ties = 0, 0, 0
    disagreements = []
    for d in range(horizon):
        hists = list(reachable_histories(cls, d))
        q_agent = _agent_on_histories(agent, cls, hists, horizon)
        ref = OracleAgent()
        q_opt = _agent_on_histories(ref, cls, hists, horizon)
        chosen = greedy(q_agent)
        for h, c, qo in zip(hists, chosen, q_opt):
            ok = qo[c] >= qo.max() - tol
            ties += int(np.sum(qo >= qo.max() - tol) > 1)
            total += 1
            agreed += int(ok)
            if not ok:
                disagreements.append(h)
    return {"fraction": agreed / total, "total": total, "ties": ties, "disagreements": disagreements}


def greedy_policy_tree(agent, cls: HypothesisClass, horizon: int, tol: float = 1e-9) -> dict:
    """Enumerate every history the greedy agent reaches with positive probability.

    At each node the agent's greedy action is compared with the Bayes-optimal
    action set on the identical history (ties within ``tol`` count as
    agreement), and the expected return is accumulated exactly.  Returns the
    unweighted agreement over nodes, the probability-weighted agreement per
    step, the return and the list of disagreeing histories.
    """
    hists = [()]
    path_lik = np.ones((1, cls.n_params))  # P(history | theta) for each node
    expected, nodes, agreed, weighted = 0.0, 0, 0, 0.0
    disagreements = []
    for _ in range(horizon):
        q = _agent_on_histories(agent, cls, hists, horizon)
        q_opt = _agent_on_histories(OracleAgent(), cls, hists, horizon)
        chosen = greedy(q)
        reach = path_lik @ cls.prior
        ok = q_opt[np.arange(len(hists)), chosen] >= q_opt.max(axis=1) - tol
        nodes += len(hists)
        agreed += int(ok.sum())
        weighted += float(reach @ ok)
        disagreements += [h for h, good in zip(hists, ok) if not good]
        p1 = cls.thetas[:, chosen].T
        expected += float(np.sum(path_lik * p1 * cls.prior))
        nxt, lik = [], []
        for i, h in enumerate(hists):
            for o in (0, 1):
                step = p1[i] if o == 1 else 1.0 - p1[i]
                if (path_lik[i] * step) @ cls.prior > 0:
                    nxt.append(h + ((int(chosen[i]), o),))
                    lik.append(path_lik[i] * step)
        hists, path_lik = nxt, np.array(lik)
    return {"return": expected, "agreement": agreed / nodes, "weighted_agreement": weighted / horizon,
            "nodes": nodes, "disagreements": disagreements}


def exact_greedy_return(agent, cls: HypothesisClass, horizon: int) -> float:
    """Expected return of the agent's greedy policy, by enumerating outcomes."""
    return greedy_policy_tree(agent, cls, horizon)["return"]


def monte_carlo_greedy_return(agent, cls: HypothesisClass, horizon: int, n_rollouts: int,
                              rng: RandomSource) -> tuple[float, float]:
    """Mean and standard error of the greedy agent's return over sampled rollouts."""
    thetas = cls.sample_parameters(n_rollouts, rng.split(0))
    obs_rng = rng.split(1)
    agent.start(cls, n_rollouts, horizon)
    total = np.zeros(n_rollouts)
    for _ in range(horizon):
        a = greedy(agent.q_values())
        o = sample_categorical_rows(cls.observation_probs(thetas, a), obs_rng)
        total += o
        agent.observe(o, a)
    return float(total.mean()), float(total.std(ddof=1) / np.sqrt(n_rollouts))
