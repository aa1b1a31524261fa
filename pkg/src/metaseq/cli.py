"""``metaseq`` command line: train, eval, extract and oracle-selftest.

Exit codes: 0 success, 1 validation error, 2 training divergence,
3 oracle property failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .core import ConfigError, DivergedTrainingError, MetaseqError, RandomSource
from .metatrain import (
    METRIC_COLUMNS,
    NeuralAgent,
    OracleAgent,
    RunConfig,
    RunMetrics,
    evaluate_against_oracle,
    greedy_policy_tree,
    init_params,
    monte_carlo_greedy_return,
    train,
)
from .neural import load_checkpoint, save_checkpoint

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("metaseq")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_PROPERTY = 0, 1, 2, 3


class UsageError(MetaseqError):
    """Bad command-line input detected after argument parsing."""


def load_config(path) -> tuple[RunConfig, bytes]:
    raw = Path(path).read_bytes()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError("config", f"cannot parse {path}: {exc}") from None
    return RunConfig.from_dict(data), raw


def _toml_value(v) -> str:
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(config: RunConfig) -> str:
    """Flat TOML for a resolved config (every field written explicitly)."""
    return "".join(f"{k} = {_toml_value(v)}\n" for k, v in config.to_dict().items())


class MetricsWriter:
    """Appends one row per batch, flushed and synced so a crash loses at most one row."""

    def __init__(self, path: Path, metrics: RunMetrics):
        self.path, self.metrics = path, metrics
        with open(path, "w") as f:
            f.write(metrics.header() + "\n")

    def __call__(self, row: dict) -> None:
        with open(self.path, "a") as f:
            f.write(self.metrics.format_row(row) + "\n")
            f.flush()
            os.fsync(f.fileno())


def checkpoint_name(seed: int, batch: int) -> str:
    return f"checkpoint_seed{seed}_batch{batch:06d}.json"


def cmd_train(args) -> int:
    config, raw = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_bytes(raw)
    if args.seed is not None:
        config = RunConfig.from_dict({**config.to_dict(), "seed": args.seed})
        (out / "resolved_config.toml").write_text(dump_config(config))
    writer = MetricsWriter(out / f"metrics_seed{config.seed}.tsv", RunMetrics(config.algorithm))

    def checkpoint(k, params, adam):
        save_checkpoint(out / checkpoint_name(config.seed, k), params, adam,
                        meta={"batch": k, "seed": config.seed, "algorithm": config.algorithm})

    result = train(config, on_row=writer, on_checkpoint=checkpoint)
    last = result.metrics.rows[-1]
    print(f"trained {len(result.metrics.rows)} batches; final loss {last['loss']:.6g}")
    return EXIT_OK


def _load_agent(checkpoint, config: RunConfig):
    params, _, _ = load_checkpoint(checkpoint)
    want = init_params(config)
    if (params.n_in, params.hidden, params.n_obs, params.n_act) != (want.n_in, want.hidden, want.n_obs, want.n_act):
        raise ConfigError("checkpoint", f"shape mismatch: checkpoint has n_in={params.n_in}, hidden={params.hidden},"
                          f" n_obs={params.n_obs}, n_act={params.n_act}; config needs n_in={want.n_in},"
                          f" hidden={want.hidden}, n_obs={want.n_obs}, n_act={want.n_act}")
    return params


def _mean_se(x: np.ndarray) -> dict:
    x = np.asarray(x, dtype=np.float64).ravel()
    se = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return {"mean": float(x.mean()), "se": se}


def evaluation_report(agent, config: RunConfig, n_rollouts: int) -> dict:
    """Oracle-comparison statistics with standard errors over rollouts."""
    rng = RandomSource(config.seed).split(3)
    cls = config.task_class()
    ev = evaluate_against_oracle(agent, config, n_rollouts, rng=rng, detail=True)
    report = {"algorithm": config.algorithm, "rollouts": n_rollouts}
    if config.algorithm == "predict":
        report["kl"] = _mean_se(ev["kl_steps"].mean(axis=1))
        report["agent_loss"] = _mean_se(ev["agent_loss_steps"].mean(axis=1))
        report["oracle_loss"] = _mean_se(ev["oracle_loss_steps"].mean(axis=1))
        report["kl_per_step"] = [float(v) for v in ev["kl_steps"].mean(axis=0)]
    elif config.algorithm == "thompson":
        report["tv"] = _mean_se(ev["tv_steps"].mean(axis=1))
        report["tv_per_step"] = [float(v) for v in ev["tv_steps"].mean(axis=0)]
    else:
        mean, se = monte_carlo_greedy_return(agent, cls, config.horizon, n_rollouts, rng)
        tree = ev["tree"]
        report["greedy_return"] = {"mean": mean, "se": se}
        report["exact_greedy_return"] = tree["return"]
        report["optimal_return"] = ev["optimal_return"]
        report["return_gap"] = {"mean": ev["optimal_return"] - mean, "se": se}
        report["agreement"] = tree["agreement"]
        report["all_history_agreement"] = ev["all_history_agreement"]
    return report


def cmd_eval(args) -> int:
    if args.rollouts < 1:
        raise UsageError("--rollouts must be >= 1")
    config, _ = load_config(args.config)
    if args.checkpoint:
        agent = NeuralAgent(_load_agent(args.checkpoint, config))
    else:
        agent = OracleAgent()
    report = evaluation_report(agent, config, args.rollouts)
    report["agent"] = "oracle" if args.checkpoint is None else str(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    headline = METRIC_COLUMNS[config.algorithm][0]
    value = report[headline]
    print(f"{headline}: {value['mean'] if isinstance(value, dict) else value:.6g}")
    return EXIT_OK


def cmd_extract(args) -> int:
    from . import analysis

    config, _ = load_config(args.config)
    if config.algorithm != "predict":
        raise UsageError("machine extraction is defined for prediction checkpoints only")
    if args.delta < 0:
        raise UsageError("--delta must be >= 0")
    horizon = args.horizon or config.horizon
    cls = config.task_class()
    params = _load_agent(args.checkpoint, config)
    cloud = analysis.collect_memory_cloud(params, cls, horizon, rng=RandomSource(config.seed).split(4))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "memory_cloud.tsv").write_text(cloud.to_tsv())
    (out / "projection.tsv").write_text(analysis.project_memory(cloud).to_tsv(cloud.histories))
    machine = analysis.extract_state_machine(cloud, args.delta)
    (out / "machine.dot").write_text(analysis.export_machine(machine))
    report = {"delta": args.delta, "horizon": horizon, "records": len(cloud),
              "raw_states": analysis.trie_size(cls.n_symbols, horizon), "merged_states": machine.n_states}
    if cls.n_symbols == 2:
        cmp = analysis.compare_to_lattice(machine, analysis.LatticeReference(horizon))
        report.update(lattice_states=cmp.n_reference, state_ratio=cmp.state_ratio,
                      max_discrepancy=cmp.max_discrepancy, bisimilar=cmp.bisimilar, isomorphic=cmp.isomorphic,
                      unmatched_states=cmp.unmatched_states,
                      unmatched_lattice_states=[list(s) for s in cmp.unmatched_reference])
    (out / "lattice_report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    print(f"{machine.n_states} states (raw {report['raw_states']})")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from . import selftest

    update = selftest.unnormalized_update if args.inject_fault else selftest.exact_update
    results = selftest.run_selftest(update)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_PROPERTY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metaseq", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="meta-train an agent")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="compare an agent with the exact oracle")
    e.add_argument("--checkpoint", help="omit to evaluate the oracle against itself")
    e.add_argument("--config", required=True)
    e.add_argument("--rollouts", type=int, required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("extract", help="extract the state machine of a trained predictor")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--config", required=True)
    x.add_argument("--delta", type=float, default=0.02)
    x.add_argument("--horizon", type=int, help="enumeration horizon (default: config horizon)")
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_extract)

    s = sub.add_parser("oracle-selftest", help="run the oracle property suite")
    s.add_argument("--inject-fault", action="store_true", help="skip posterior renormalization (canary)")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except DivergedTrainingError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        print(f"error: invalid {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (MetaseqError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
