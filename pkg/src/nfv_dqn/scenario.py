"""Scenario files: network, service catalogue, simulation and reward settings."""
from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .env import PlacementEnv, RewardConfig
from .services import ServiceType, parse_service_types
from .topology import ConfigError, NetworkGraph, build_network

DEFAULT_SCENARIO = "default.yaml"


@dataclass
class Scenario:
    graph: NetworkGraph
    types: list[ServiceType]
    reward: RewardConfig
    max_requests: int | None = None
    poisson_arrivals: bool = False

    def make_env(self, seed: int, record_trace: bool = False) -> PlacementEnv:
        return PlacementEnv(self.graph, self.types, seed=seed, reward=self.reward,
                            max_requests=self.max_requests, poisson_arrivals=self.poisson_arrivals,
                            record_trace=record_trace)

    def with_departure_prob(self, d: float) -> "Scenario":
        types = [ServiceType(t.type_id, t.vnf_demands, t.bandwidth, t.max_failure_prob, d, t.arrivals_per_slot)
                 for t in self.types]
        return Scenario(self.graph, types, self.reward, self.max_requests, self.poisson_arrivals)


def generate_service_types(spec: dict) -> list[dict]:
    """Expand a ``generate`` block into explicit service entries.

    Chain lengths and demands are drawn once per type from the given ranges
    with ``seed``. With ``sort_by_strictness`` the drawn chain lengths are
    handed out in non-decreasing order of requested reliability, so a stricter
    type never gets a shorter chain than a laxer one.
    """
    rng = np.random.default_rng(spec.get("seed", 0))
    reliabilities = list(spec["reliabilities"])
    lo_u, hi_u = spec.get("chain_length", [3, 5])
    lo_r, hi_r = spec.get("demand", [10, 20])
    lengths = [int(x) for x in rng.integers(lo_u, hi_u + 1, size=len(reliabilities))]
    if spec.get("sort_by_strictness", False):
        order = np.argsort(reliabilities, kind="stable")
        sorted_lengths = sorted(lengths)
        for rank, l in enumerate(order):
            lengths[l] = sorted_lengths[rank]
    entries = []
    for rel, u in zip(reliabilities, lengths):
        entries.append({
            "reliability": rel,
            "demands": [int(x) for x in rng.integers(lo_r, hi_r + 1, size=u)],
            "bandwidth": spec.get("bandwidth", 10.0),
            "departure_prob": spec.get("departure_prob", 0.7),
            "arrivals_per_slot": spec.get("arrivals_per_slot", 1),
        })
    return entries


def load_config(source=None) -> dict:
    """Read a scenario mapping from a path, a dict, or the packaged default."""
    if source is None:
        text = resources.files("nfv_dqn.scenarios").joinpath(DEFAULT_SCENARIO).read_text()
        return yaml.safe_load(text)
    if isinstance(source, dict):
        return copy.deepcopy(source)
    path = Path(source)
    if not path.exists():
        packaged = resources.files("nfv_dqn.scenarios").joinpath(str(source))
        if packaged.is_file():
            return yaml.safe_load(packaged.read_text())
        raise ConfigError(f"scenario file {source} not found")
    return yaml.safe_load(path.read_text())


def build_scenario(config: dict) -> Scenario:
    if "network" not in config:
        raise ConfigError("scenario has no network section")
    graph = build_network(config["network"])
    services = config.get("services")
    if isinstance(services, dict) and "generate" in services:
        entries = generate_service_types(services["generate"])
    else:
        entries = services
    types = parse_service_types(entries or [])
    too_long = [t.type_id for t in types if t.chain_length > graph.num_servers]
    if too_long:
        raise ConfigError(f"service types {too_long} have more VNFs than there are servers")
    sim = config.get("simulation") or {}
    reward = RewardConfig(**(config.get("reward") or {}))
    return Scenario(graph, types, reward, sim.get("max_requests"), bool(sim.get("poisson_arrivals", False)))


def load_scenario(source=None) -> Scenario:
    return build_scenario(load_config(source))
