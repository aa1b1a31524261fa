import numpy as np
import pytest

from metaseq import oracle
from metaseq.core import ConfigError, DivergedTrainingError, RandomSource
from metaseq.metatrain import (
    NeuralAgent,
    OracleAgent,
    RunConfig,
    cooling_schedule,
    evaluate_against_oracle,
    exact_greedy_return,
    greedy,
    greedy_agreement,
    greedy_policy_tree,
    init_params,
    monte_carlo_greedy_return,
    reachable_histories,
    train,
    train_predictor,
    train_thompson,
)
from metaseq.neural import CellParams

BANDIT = dict(task="bandit", thetas=((0.9, 0.1), (0.1, 0.9)))


def kl_bernoulli(p, q):
    return p * np.log(p / q) + (1 - p) * np.log((1 - p) / (1 - q))


class TestRunConfig:
    def test_defaults(self):
        c = RunConfig()
        assert (c.hidden, c.batch_size, c.batches, c.horizon) == (20, 100, 1000, 10)
        assert c.kappa == 200.0

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as err:
            RunConfig.from_dict({"algorithm": "predict", "learning_rat": 0.1})
        assert err.value.field == "learning_rat"

    def test_unknown_algorithm(self):
        with pytest.raises(ConfigError) as err:
            RunConfig(algorithm="magic")
        assert err.value.field == "algorithm"

    def test_task_mismatch(self):
        with pytest.raises(ConfigError):
            RunConfig(algorithm="thompson", task="dirichlet")
        with pytest.raises(ConfigError):
            RunConfig(algorithm="predict", **BANDIT)

    def test_types(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"batches": 2.5})
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"batches": True})
        assert RunConfig.from_dict({"learning_rate": 1}).learning_rate == 1.0

    def test_bad_thetas(self):
        with pytest.raises(ConfigError) as err:
            RunConfig(algorithm="thompson", task="bandit", thetas=((1.5, 0.1),))
        assert err.value.field == "thetas"

    def test_round_trip(self):
        c = RunConfig(algorithm="bayesopt", horizon=5, **BANDIT)
        assert RunConfig.from_dict(c.to_dict()) == c


class TestCooling:
    def test_exponential(self):
        c = RunConfig(batches=1000)
        assert cooling_schedule(0, c) == 0.0
        assert cooling_schedule(200, c) == pytest.approx(20 * (1 - np.exp(-1)))
        betas = [cooling_schedule(k, c) for k in range(0, 5000, 50)]
        assert np.all(np.diff(betas) >= 0)
        assert betas[-1] <= 20.0 and betas[-1] > 19.9

    def test_linear_and_constant(self):
        lin = RunConfig(cooling="linear", batches=11, beta_start=1.0, beta_max=11.0)
        assert cooling_schedule(0, lin) == 1.0
        assert cooling_schedule(10, lin) == pytest.approx(11.0)
        assert cooling_schedule(5, RunConfig(cooling="constant")) == 20.0

    def test_negative_batch(self):
        with pytest.raises(ValueError):
            cooling_schedule(-1, RunConfig())


class TestTraining:
    def test_reproducible(self):
        c = RunConfig(batches=10, eval_every=5, eval_rollouts=32)
        assert train(c).metrics.to_tsv() == train(c).metrics.to_tsv()

    def test_seed_matters(self):
        a = train(RunConfig(batches=3, eval_every=0, seed=1)).metrics.to_tsv()
        b = train(RunConfig(batches=3, eval_every=0, seed=2)).metrics.to_tsv()
        assert a != b

    def test_metrics_rows(self):
        res = train(RunConfig(batches=4, eval_every=2, eval_rollouts=16))
        rows = res.metrics.rows
        assert [r["batch"] for r in rows] == [0, 1, 2, 3]
        assert [r["step"] for r in rows] == [1, 2, 3, 4]
        assert [r["batch"] for r in res.metrics.evaluated()] == [1, 3]
        assert res.metrics.to_tsv().splitlines()[0].split("\t")[:5] == ["batch", "step", "loss", "beta", "grad_norm"]

    def test_loss_normalized_per_step(self):
        # zero parameters predict uniformly: every step costs log 2
        c = RunConfig(batches=1, eval_every=0)
        res = train(c, params=CellParams.zeros(2, 20, 2, 0))
        assert res.metrics.rows[0]["loss"] == pytest.approx(np.log(2), abs=1e-12)

    def test_early_stop(self):
        c = RunConfig(batches=50, eval_every=1, eval_rollouts=16, early_stop_patience=3, early_stop_min_delta=10.0)
        res = train(c)
        assert res.stopped_early
        assert len(res.metrics.rows) == 4

    def test_bayesopt_not_stopped_while_hot(self):
        c = RunConfig(algorithm="bayesopt", horizon=2, batches=30, eval_every=1, early_stop_patience=2,
                      early_stop_min_delta=10.0, **BANDIT)
        res = train(c)
        assert res.stopped_early
        # patience ran out long before, but stopping waits for beta >= 95% of its span
        assert res.metrics.rows[-1]["beta"] >= 0.95 * c.beta_max
        assert res.metrics.rows[-2]["beta"] < 0.95 * c.beta_max

    def test_checkpoints(self):
        seen = []
        c = RunConfig(batches=6, eval_every=0, checkpoint_every=2)
        train(c, on_checkpoint=lambda k, p, a: seen.append((k, a.step)))
        assert seen == [(1, 2), (3, 4), (5, 6)]

    def test_divergence(self):
        c = RunConfig(batches=2, eval_every=0)
        params = init_params(c)
        params.weights["Wn"][:] = np.nan
        with pytest.raises(DivergedTrainingError):
            train(c, params=params)

    def test_wrapper_checks_algorithm(self):
        with pytest.raises(ConfigError):
            train_thompson(RunConfig())
        assert len(train_predictor(RunConfig(batches=1, eval_every=0)).metrics.rows) == 1


class TestEvaluation:
    def test_oracle_against_itself(self):
        pred = evaluate_against_oracle(OracleAgent(), RunConfig(), 64)
        assert pred["kl"] == 0.0
        ts = evaluate_against_oracle(OracleAgent(), RunConfig(algorithm="thompson", **BANDIT), 64)
        assert ts["tv"] == 0.0

    def test_zero_params_kl_closed_form(self):
        # Under the uniform Dirichlet prior n_H after t symbols is uniform on
        # {0..t}, so E[KL(Laplace || uniform)] at step t has a closed form.
        c = RunConfig(horizon=6)
        ev = evaluate_against_oracle(NeuralAgent(CellParams.zeros(2, 20, 2, 0)), c, 20_000,
                                     rng=RandomSource(5), detail=True)
        for t in range(6):
            k = np.arange(t + 1)
            expect = np.mean(kl_bernoulli((k + 1) / (t + 2), 0.5))
            assert ev["kl_steps"][:, t].mean() == pytest.approx(expect, abs=0.004)
        assert np.all(ev["kl_steps"][:, 0] == 0.0)

    def test_eval_is_repeatable(self):
        agent = NeuralAgent(init_params(RunConfig()))
        a = evaluate_against_oracle(agent, RunConfig(), 32)
        b = evaluate_against_oracle(agent, RunConfig(), 32)
        assert a == b

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            evaluate_against_oracle(OracleAgent(), RunConfig(), 0)

    def test_greedy_ties(self):
        np.testing.assert_array_equal(greedy(np.array([[1.0, 1.0], [0.0, 2.0]])), [0, 1])

    def test_oracle_policy_tree(self, bandit):
        tree = greedy_policy_tree(OracleAgent(), bandit, 4)
        assert tree["agreement"] == 1.0
        assert tree["return"] == pytest.approx(oracle.optimal_return(bandit, 4), abs=1e-12)
        assert greedy_agreement(OracleAgent(), bandit, 3)["fraction"] == 1.0

    def test_reachable_count(self, bandit):
        # every (action, observation) pair has positive probability here
        assert len(list(reachable_histories(bandit, 2))) == 16

    def test_fixed_arm_return(self, bandit):
        class ArmZero:
            def start(self, cls, n, horizon):
                self.n = n

            def q_values(self):
                return np.tile([1.0, 0.0], (self.n, 1))

            def observe(self, symbols, actions=None):
                pass

        assert exact_greedy_return(ArmZero(), bandit, 5) == pytest.approx(2.5)
        mean, se = monte_carlo_greedy_return(ArmZero(), bandit, 5, 20_000, RandomSource(0))
        assert abs(mean - 2.5) < 4 * se


class TestTrainedPredictor:
    def test_loss_not_below_oracle(self, predictor_run):
        config, res = predictor_run
        ev = evaluate_against_oracle(NeuralAgent(res.params), config, 2000, rng=RandomSource(11))
        assert ev["agent_loss"] - ev["oracle_loss"] >= -0.005
