"""Training, evaluation and policy comparison runs with CSV/YAML outputs.

Every output file is a pure function of (scenario, config, seed): floats are
written with ``repr`` and the manifest carries no timestamps.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

from . import __version__
from .baselines import DEFAULT_BUDGET, OraclePolicy, greedy_policy, oracle_solve, random_policy, search_space
from .dqn import AgentConfig, DQNAgent
from .env import ADMITTED, PlacementEnv
from .scenario import Scenario, build_scenario, load_config
from .topology import ConfigError

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    scenario: str | None = None          # path or packaged name; None = packaged default
    policy: str = "dqn"
    agent: AgentConfig = field(default_factory=AgentConfig)
    training_slots: int = 20_000
    eval_slots: int = 10_000
    time_step: int = 10_000
    seed: int = 0
    departure_probs: tuple[float, ...] = ()
    oracle_budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if isinstance(self.agent, dict):
            self.agent = AgentConfig.from_dict(self.agent)
        self.departure_probs = tuple(float(d) for d in self.departure_probs)
        if self.time_step <= 0:
            raise ConfigError("time_step must be positive")
        if self.training_slots < 0 or self.eval_slots < 0:
            raise ConfigError("slot counts must be non-negative")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        data = yaml.safe_load(Path(path).read_text()) or {}
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["agent"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["agent"].items()}
        d["departure_probs"] = list(self.departure_probs)
        return d


@dataclass
class WindowStats:
    arrivals: np.ndarray
    admitted: np.ndarray
    reward_sum: float = 0.0
    decisions: int = 0
    cost_sum: float = 0.0
    losses: list = field(default_factory=list)
    epsilon: float = 0.0


class MetricSeries:
    """Per-time-step aggregates of one run."""

    def __init__(self, n_types: int):
        self.n_types = n_types
        self.rows: list[dict] = []

    def __len__(self):
        return len(self.rows)

    def add(self, step: int, w: WindowStats) -> None:
        row = {"time_step": step}
        for l in range(self.n_types):
            row[f"arrivals_{l}"] = int(w.arrivals[l])
            row[f"admitted_{l}"] = int(w.admitted[l])
            row[f"admission_{l}"] = float(w.admitted[l] / w.arrivals[l]) if w.arrivals[l] else float("nan")
        total_arr, total_adm = int(w.arrivals.sum()), int(w.admitted.sum())
        row["admission"] = total_adm / total_arr if total_arr else float("nan")
        row["mean_reward"] = w.reward_sum / w.decisions if w.decisions else float("nan")
        row["mean_cost"] = w.cost_sum / total_adm if total_adm else 0.0
        row["mean_loss"] = float(np.mean(w.losses)) if w.losses else float("nan")
        row["epsilon"] = w.epsilon
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def admission_ratio(self, type_id: int | None = None, last: int | None = None) -> float:
        rows = self.rows[-last:] if last else self.rows
        if type_id is None:
            arr = sum(r[f"arrivals_{l}"] for r in rows for l in range(self.n_types))
            adm = sum(r[f"admitted_{l}"] for r in rows for l in range(self.n_types))
        else:
            arr = sum(r[f"arrivals_{type_id}"] for r in rows)
            adm = sum(r[f"admitted_{type_id}"] for r in rows)
        if arr == 0:
            raise ZeroDivisionError("no arrivals")
        return adm / arr

    def write_csv(self, path) -> Path:
        path = Path(path)
        fields = ["time_step"]
        for l in range(self.n_types):
            fields += [f"arrivals_{l}", f"admitted_{l}", f"admission_{l}"]
        fields += ["admission", "mean_reward", "mean_cost", "mean_loss", "epsilon"]
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            for row in self.rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return path


# -- policies ---------------------------------------------------------------

Decide = Callable[[PlacementEnv], "tuple[int, ...] | None"]


def make_policy(name: str, scenario: Scenario, seed: int, agent: DQNAgent | None = None,
                budget: int = DEFAULT_BUDGET) -> Decide:
    """Return a callable choosing an action for ``env.pending`` (None = reject)."""
    graph = scenario.graph
    if name == "random":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        return lambda env: random_policy(graph, env.ledger, env.pending, rng)
    if name in ("greedy-cheapest", "greedy-most-reliable"):
        mode = name.split("-", 1)[1]
        return lambda env: greedy_policy(graph, env.ledger, env.pending, mode)
    if name == "oracle":
        oracle = OraclePolicy(budget)

        def decide(env):
            if oracle._slot != env.slot:
                oracle.plan_slot(graph, env.ledger, env.queue, env.slot)
            return oracle.next()
        return decide
    if name == "dqn":
        if agent is None:
            raise ConfigError("dqn policy needs an agent or checkpoint")
        return lambda env: agent.select_action(env.observe(), env.pending.chain_length, epsilon=0.0)
    raise ConfigError(f"unknown policy {name!r}")


def _check_oracle_budget(scenario: Scenario, budget: int) -> None:
    # worst-case batch: every type at its full per-slot count
    batch = [t for t in scenario.types for _ in range(t.arrivals_per_slot)]
    if scenario.max_requests is not None:
        batch = sorted(batch, key=lambda t: -t.chain_length)[:scenario.max_requests]
    if search_space(scenario.graph.num_servers, batch) > budget:
        raise ConfigError("scenario too large for the oracle's enumeration budget")


# -- runs -------------------------------------------------------------------

def simulate(env: PlacementEnv, slots: int, time_step: int, decide: Decide | None = None,
             agent: DQNAgent | None = None, learn: bool = False, series: MetricSeries | None = None,
             check: Callable[[PlacementEnv], None] | None = None) -> MetricSeries:
    """Run ``slots`` slots starting from the env's current (freshly arrived) batch.

    With ``learn`` the agent acts epsilon-greedily, stores every transition,
    trains, and decays epsilon once per slot. ``check`` is called after every
    slot, e.g. for invariant assertions.
    """
    n_types = len(env.types)
    series = series or MetricSeries(n_types)
    new_window = lambda: WindowStats(np.zeros(n_types, dtype=np.int64), np.zeros(n_types, dtype=np.int64))
    w = new_window()
    for slot in range(slots):
        while not env.slot_done:
            stype = env.pending
            w.arrivals[stype.type_id] += 1
            if learn:
                state = env.observe()
                action = agent.select_action(state, stype.chain_length)
            else:
                action = decide(env)
                if action is None:
                    env.skip()
                    continue
            result, next_state = env.step(action)
            w.decisions += 1
            w.reward_sum += result.reward
            if result.outcome == ADMITTED:
                w.admitted[stype.type_id] += 1
                w.cost_sum += result.server_cost + result.link_cost
            if learn:
                loss = agent.observe(state, action, result.reward, next_state, env.slot_done)
                if loss is not None:
                    w.losses.append(loss)
        if check is not None:
            check(env)
        if learn:
            agent.decay_epsilon()
        w.epsilon = agent.epsilon if (learn and agent is not None) else 0.0
        if (slot + 1) % time_step == 0:
            series.add(len(series), w)
            log.info("time step %d: admission %.3f", len(series), series.rows[-1]["admission"])
            w = new_window()
        env.advance_slot()
    if w.arrivals.sum() and slots % time_step:
        series.add(len(series), w)
    return series


def _scenario(config: ExperimentConfig) -> Scenario:
    return build_scenario(load_config(config.scenario))


def new_agent(scenario: Scenario, config: ExperimentConfig) -> DQNAgent:
    env_dim = scenario.graph.num_servers + max(t.chain_length for t in scenario.types) + 1
    return DQNAgent(env_dim, scenario.graph.num_servers, config.agent, seed=config.seed)


def run_training(config: ExperimentConfig, out_dir=None, scenario: Scenario | None = None):
    """Train a DQN agent; returns ``(agent, series)`` and writes outputs if ``out_dir``."""
    scenario = scenario or _scenario(config)
    env = scenario.make_env(seed=config.seed)
    agent = new_agent(scenario, config)
    if agent.state_dim != env.state_dim:
        raise ConfigError("agent input width does not match the scenario state")
    series = simulate(env, config.training_slots, config.time_step, agent=agent, learn=True)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        agent.save(out / "checkpoint.npz")
        series.write_csv(out / "training.csv")
        write_manifest(out / "manifest.yaml", config, "train")
    return agent, series


def load_agent(checkpoint, scenario: Scenario) -> DQNAgent:
    agent = checkpoint if isinstance(checkpoint, DQNAgent) else DQNAgent.load(checkpoint)
    n = scenario.graph.num_servers
    expected = n + max(t.chain_length for t in scenario.types) + 1
    if agent.n_servers != n or agent.state_dim != expected:
        raise ConfigError(f"checkpoint dimensions ({agent.state_dim}->{agent.n_servers}) do not fit the "
                          f"scenario ({expected}->{n})")
    return agent


def evaluate_policy(scenario: Scenario, policy: str, config: ExperimentConfig,
                    agent: DQNAgent | None = None, seed: int | None = None) -> MetricSeries:
    seed = config.seed if seed is None else seed
    if policy == "oracle":
        _check_oracle_budget(scenario, config.oracle_budget)
    env = scenario.make_env(seed=seed)
    decide = make_policy(policy, scenario, seed, agent, config.oracle_budget)
    return simulate(env, config.eval_slots, config.time_step, decide=decide)


def run_evaluation(checkpoint, config: ExperimentConfig, out_dir=None,
                   scenario: Scenario | None = None) -> dict[float | None, MetricSeries]:
    """Greedy (epsilon = 0) evaluation of a frozen agent, optionally swept over
    departure probabilities. Keys are the departure probability (None = as configured)."""
    scenario = scenario or _scenario(config)
    agent = load_agent(checkpoint, scenario)
    points = config.departure_probs or (None,)
    results = {}
    for d in points:
        sc = scenario if d is None else scenario.with_departure_prob(d)
        results[d] = evaluate_policy(sc, "dqn", config, agent)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for d, series in results.items():
            series.write_csv(out / ("eval.csv" if d is None else f"eval_d{d:g}.csv"))
        write_manifest(out / "manifest.yaml", config, "eval")
    return results


def compare_policies(config: ExperimentConfig, policies: Sequence[str], checkpoint=None, out_dir=None,
                     scenario: Scenario | None = None) -> list[dict]:
    """Evaluate several policies on the same arrival trace."""
    if not policies:
        raise ConfigError("no policies to compare")
    scenario = scenario or _scenario(config)
    if "oracle" in policies:
        _check_oracle_budget(scenario, config.oracle_budget)
    if "dqn" in policies and checkpoint is None:
        raise ConfigError("the dqn policy needs a checkpoint")
    agent = load_agent(checkpoint, scenario) if "dqn" in policies else None
    table = []
    for name in policies:
        series = evaluate_policy(scenario, name, config, agent)
        row = {"policy": name, "admission": series.admission_ratio()}
        for l in range(len(scenario.types)):
            row[f"admission_{l}"] = series.admission_ratio(l)
        admitted = sum(r[f"admitted_{l}"] for r in series.rows for l in range(len(scenario.types)))
        row["mean_cost"] = sum(r["mean_cost"] * sum(r[f"admitted_{l}"] for l in range(len(scenario.types)))
                               for r in series.rows) / admitted if admitted else 0.0
        table.append(row)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "compare.csv", "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(table[0]), lineterminator="\n")
            w.writeheader()
            for row in table:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        write_manifest(out / "manifest.yaml", config, "compare")
    return table


def solve_slot(config: ExperimentConfig, scenario: Scenario | None = None) -> dict:
    """Run the oracle on the first arrival batch of the configured scenario."""
    scenario = scenario or _scenario(config)
    env = scenario.make_env(seed=config.seed)
    res = oracle_solve(scenario.graph, env.ledger, env.queue, config.oracle_budget)
    return {
        "requests": [t.type_id for t in env.queue],
        "placements": [None if p is None else [list(scenario.graph.ref(s)) for s in p] for p in res.placements],
        "admitted": res.admitted,
        "cost": res.cost,
        "nodes": res.nodes,
    }


def write_manifest(path, config: ExperimentConfig, verb: str) -> None:
    manifest = {
        "verb": verb,
        "version": __version__,
        "seed": config.seed,
        "config": config.to_dict(),
        "scenario": load_config(config.scenario),
    }
    Path(path).write_text(yaml.safe_dump(manifest, sort_keys=True))
