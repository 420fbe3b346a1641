"""Slotted-time placement environment.

Each slot starts with departures (resources are freed immediately), then a batch
of requests arrives and is placed one service at a time. After every decision
the state is re-encoded so the next service sees the updated resources.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import placement as pc
from .services import ActiveService, ArrivalBatch, ServiceType, sample_arrivals, sample_departures
from .topology import NetworkGraph

RESOURCE_VIOLATION = "resource-violation"
RELIABILITY_REJECTION = "reliability-rejection"
ADMITTED = "admitted"
OUTCOMES = (RESOURCE_VIOLATION, RELIABILITY_REJECTION, ADMITTED)


@dataclass(frozen=True)
class RewardConfig:
    resource_penalty: float = 1.0      # V_R
    reliability_penalty: float = 1.0   # V_F
    success_scale: float = 10.0        # R_S
    # divide raw placement cost by this; None means the largest single-service cost of the scenario
    cost_normalizer: float | None = None


@dataclass(frozen=True)
class RewardBreakdown:
    reward: float
    outcome: str
    placement_cost: float = 0.0   # V_p after normalisation
    success_reward: float = 0.0
    achieved_failure_prob: float = 0.0
    server_cost: float = 0.0
    link_cost: float = 0.0


@dataclass
class Transition:
    state: np.ndarray
    action: tuple[int, ...]
    reward: float
    next_state: np.ndarray
    terminal: bool


def placement_failure_prob(graph: NetworkGraph, action: Sequence) -> float:
    if len(action) < 1:
        raise ValueError("empty action")
    return pc.failure_prob_from([graph.server_failure[graph.index(s)] for s in action])


def success_reward(scale: float, max_failure_prob: float, achieved_failure_prob: float) -> float:
    """Reward for an admitted service; largest when the achieved failure
    probability sits right at the requested bound."""
    if not pc.meets_reliability(achieved_failure_prob, max_failure_prob):
        raise ValueError("success reward requested for a placement that misses its reliability target")
    return scale * math.exp(-(max_failure_prob - achieved_failure_prob))


def max_placement_cost(graph: NetworkGraph, types: Sequence[ServiceType]) -> float:
    c_server = float(graph.inp_unit_cost.max())
    c_link = float(graph.link_cost.max()) if graph.num_servers > 1 else 0.0
    return max(sum(t.vnf_demands) * c_server + (t.chain_length - 1) * t.bandwidth * c_link for t in types)


class PlacementEnv:
    """Environment for one simulation run.

    Randomness comes from ``seed`` through two independent streams, one for
    arrivals and one for departures, so that different policies see the same
    arrival trace.
    """

    def __init__(self, graph: NetworkGraph, types: Sequence[ServiceType], seed: int = 0,
                 reward: RewardConfig = RewardConfig(), max_requests: int | None = None,
                 poisson_arrivals: bool = False, record_trace: bool = False):
        if not types:
            raise ValueError("no service types")
        self.graph = graph
        self.types = list(types)
        self.reward_cfg = reward
        self.max_requests = max_requests
        self.poisson_arrivals = poisson_arrivals
        self.u_max = max(t.chain_length for t in self.types)
        self.max_demand = max(max(t.vnf_demands) for t in self.types)
        self.state_dim = graph.num_servers + self.u_max + 1
        norm = reward.cost_normalizer
        if norm is None:
            norm = max_placement_cost(graph, self.types) or 1.0
        self.cost_normalizer = float(norm)
        self.record_trace = record_trace
        self.reset(seed)

    def reset(self, seed: int) -> ArrivalBatch:
        arr_ss, dep_ss = np.random.SeedSequence(seed).spawn(2)
        self.arrival_rng = np.random.default_rng(arr_ss)
        self.departure_rng = np.random.default_rng(dep_ss)
        self.ledger = pc.ResourceLedger(self.graph)
        self.active: dict[int, ActiveService] = {}
        self.slot = -1
        self.next_id = 0
        self.queue: list[ServiceType] = []
        self.arrivals = np.zeros(len(self.types), dtype=np.int64)
        self.admitted = np.zeros(len(self.types), dtype=np.int64)
        self.outcome_counts = dict.fromkeys(OUTCOMES, 0)
        self.trace: list[dict] = []
        return self.advance_slot()

    # -- state -------------------------------------------------------------

    def encode_state(self, pending: ServiceType | None = None, ledger: pc.ResourceLedger | None = None) -> np.ndarray:
        ledger = ledger or self.ledger
        state = np.zeros(self.state_dim)
        n = self.graph.num_servers
        state[:n] = ledger.remaining_server / self.graph.server_capacity
        if pending is not None:
            state[n:n + pending.chain_length] = np.asarray(pending.vnf_demands) / self.max_demand
            state[-1] = pending.max_failure_prob
        return state

    @property
    def pending(self) -> ServiceType | None:
        return self.queue[0] if self.queue else None

    def observe(self) -> np.ndarray:
        return self.encode_state(self.pending)

    # -- dynamics ----------------------------------------------------------

    def evaluate_action(self, stype: ServiceType, action: Sequence[int]) -> RewardBreakdown:
        """Reward of placing ``stype`` with ``action`` against the current ledger,
        without changing anything."""
        action = tuple(self.graph.index(s) for s in action)
        if len(action) != stype.chain_length:
            raise ValueError(f"action has {len(action)} servers, service needs {stype.chain_length}")
        cfg = self.reward_cfg
        F_p = placement_failure_prob(self.graph, action)
        verdict = pc.check_feasible(self.graph, self.ledger, stype, action)
        if verdict.reason in ("capacity", "bandwidth"):
            return RewardBreakdown(-cfg.resource_penalty, RESOURCE_VIOLATION, achieved_failure_prob=F_p)
        if not pc.meets_reliability(F_p, stype.max_failure_prob):
            return RewardBreakdown(-cfg.reliability_penalty, RELIABILITY_REJECTION, achieved_failure_prob=F_p)
        sc = pc.server_cost(self.graph, stype, action)
        lc = pc.link_cost(self.graph, stype, action)
        v_p = (sc + lc) / self.cost_normalizer
        v_s = success_reward(cfg.success_scale, stype.max_failure_prob, F_p)
        return RewardBreakdown(v_s - v_p, ADMITTED, v_p, v_s, F_p, sc, lc)

    def step(self, action: Sequence[int]) -> tuple[RewardBreakdown, np.ndarray]:
        """Resolve the pending service with ``action``.

        Returns the reward breakdown and the next state, which carries the next
        pending service of this slot or zeroed demand fields when the slot is
        exhausted (see :attr:`slot_done`).
        """
        if not self.queue:
            raise RuntimeError("no pending service; call advance_slot()")
        stype = self.queue[0]
        action = tuple(self.graph.index(s) for s in action)
        result = self.evaluate_action(stype, action)
        self.queue.pop(0)
        self._count(stype, result, action)
        return result, self.observe()

    def skip(self) -> None:
        """Reject the pending service without trying to place it."""
        stype = self.queue.pop(0)
        self.outcome_counts.setdefault("skipped", 0)
        self.outcome_counts["skipped"] += 1
        if self.record_trace:
            self.trace.append(dict(slot=self.slot, service_type=stype.type_id, outcome="skipped", reward=0.0,
                                   failure_prob=float("nan"), server_cost=0.0, link_cost=0.0))

    def _count(self, stype: ServiceType, result: RewardBreakdown, action: tuple[int, ...]) -> None:
        self.outcome_counts[result.outcome] += 1
        if result.outcome == ADMITTED:
            self.ledger.commit(stype, action)
            sid = self.next_id
            self.next_id += 1
            self.active[sid] = ActiveService(sid, stype, action, self.slot)
            self.admitted[stype.type_id] += 1
        if self.record_trace:
            self.trace.append(dict(slot=self.slot, service_type=stype.type_id, outcome=result.outcome,
                                   reward=result.reward, failure_prob=result.achieved_failure_prob,
                                   server_cost=result.server_cost, link_cost=result.link_cost))

    @property
    def slot_done(self) -> bool:
        return not self.queue

    def advance_slot(self) -> ArrivalBatch:
        if self.queue:
            raise RuntimeError(f"{len(self.queue)} services of slot {self.slot} are still pending")
        leaving = sample_departures(list(self.active.values()), self.departure_rng)
        for sid in leaving:
            svc = self.active.pop(sid)
            self.ledger.release(svc.type, svc.placement)
        self.slot += 1
        batch = sample_arrivals(self.types, self.slot, self.arrival_rng,
                                max_requests=self.max_requests, poisson=self.poisson_arrivals)
        for t in batch.requests:
            self.arrivals[t.type_id] += 1
        self.queue = list(batch.requests)
        return batch

    # -- metrics -----------------------------------------------------------

    def admission_ratio(self, stype: ServiceType | int | None = None) -> float:
        if stype is None:
            arrived, admitted = self.arrivals.sum(), self.admitted.sum()
        else:
            l = stype if isinstance(stype, int) else stype.type_id
            arrived, admitted = self.arrivals[l], self.admitted[l]
        if arrived == 0:
            raise ZeroDivisionError("admission ratio undefined: no arrivals")
        return float(admitted) / float(arrived)

    def write_trace(self, path) -> None:
        fields = ["slot", "service_type", "outcome", "reward", "failure_prob", "server_cost", "link_cost"]
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=fields)
            w.writeheader()
            for rec in self.trace:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in rec.items()})


def admission_ratio(env: PlacementEnv, stype=None) -> float:
    return env.admission_ratio(stype)


def encode_state(env: PlacementEnv, ledger: pc.ResourceLedger, pending: ServiceType | None) -> np.ndarray:
    return env.encode_state(pending, ledger)
