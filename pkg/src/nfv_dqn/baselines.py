"""Reference placement policies and the exact single-slot oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import placement as pc
from .services import ArrivalBatch, ServiceType
from .topology import NetworkGraph

POLICIES = ("random", "greedy-cheapest", "greedy-most-reliable", "oracle", "dqn")
DEFAULT_BUDGET = 10**7


class InstanceTooLarge(RuntimeError):
    pass


def random_policy(graph: NetworkGraph, ledger, stype: ServiceType, rng: np.random.Generator) -> tuple[int, ...]:
    n = graph.num_servers
    if stype.chain_length > n:
        raise ValueError(f"chain of {stype.chain_length} VNFs exceeds {n} servers")
    return tuple(int(i) for i in rng.choice(n, size=stype.chain_length, replace=False))


def greedy_policy(graph: NetworkGraph, ledger: pc.ResourceLedger, stype: ServiceType,
                  mode: str = "cheapest") -> tuple[int, ...] | None:
    """Place VNFs in chain order, each on the best feasible server.

    ``cheapest`` minimises the incremental server + link cost, ``most-reliable``
    the server failure probability; ties go to the lowest index. Returns
    ``None`` when some VNF fits nowhere or the finished chain misses its
    reliability target.
    """
    if mode not in ("cheapest", "most-reliable"):
        raise ValueError(f"unknown greedy mode {mode!r}")
    remaining = ledger.remaining_server.copy()
    link_rem = ledger.remaining_link
    used_links: dict[tuple[int, int], float] = {}
    unit = graph.server_unit_costs
    chosen: list[int] = []
    for r in stype.vnf_demands:
        prev = chosen[-1] if chosen else None
        best, best_key = None, None
        for s in range(graph.num_servers):
            if r > remaining[s] + pc.EPS:
                continue
            hop = 0.0
            if prev is not None and prev != s:
                key = (min(prev, s), max(prev, s))
                if stype.bandwidth > 0 and used_links.get(key, 0.0) + stype.bandwidth > link_rem[prev, s] + pc.EPS:
                    continue
                hop = stype.bandwidth * graph.link_cost[prev, s]
            score = r * unit[s] + hop if mode == "cheapest" else graph.server_failure[s]
            if best_key is None or score < best_key:
                best, best_key = s, score
        if best is None:
            return None
        if prev is not None and prev != best:
            key = (min(prev, best), max(prev, best))
            used_links[key] = used_links.get(key, 0.0) + stype.bandwidth
        remaining[best] -= r
        chosen.append(best)
    if not pc.meets_reliability(pc.service_failure_prob(graph, chosen), stype.max_failure_prob):
        return None
    return tuple(chosen)


@dataclass
class OracleResult:
    placements: list  # per request: tuple of server indices, or None when rejected
    admitted: int
    cost: float
    nodes: int

    def better_than(self, admitted: int, cost: float) -> bool:
        return self.admitted > admitted or (self.admitted == admitted and self.cost < cost)


def search_space(n_servers: int, requests: Sequence[ServiceType]) -> int:
    size = 1
    for t in requests:
        size *= n_servers ** t.chain_length + 1
    return size


def oracle_solve(graph: NetworkGraph, ledger: pc.ResourceLedger, batch: ArrivalBatch | Sequence[ServiceType],
                 budget: int = DEFAULT_BUDGET) -> OracleResult:
    """Jointly place one slot's requests: most admissions first, then least cost.

    Depth-first over requests in batch order; for each request the admit
    branches (server tuples in lexicographic order) come before the reject
    branch, and only strict improvements replace the incumbent, so ties resolve
    to the first solution in that order. Pruning on capacity, bandwidth,
    partial failure probability and the (admissions, cost) bound never removes
    a solution that would have replaced the incumbent.
    """
    requests = list(batch.requests if isinstance(batch, ArrivalBatch) else batch)
    n = graph.num_servers
    if search_space(n, requests) > budget:
        raise InstanceTooLarge(f"search space exceeds the enumeration budget of {budget}")

    rem_server = ledger.remaining_server.copy()
    rem_link = ledger.remaining_link.copy()
    unit = graph.server_unit_costs
    fail = graph.server_failure
    lcost = graph.link_cost
    n_req = len(requests)

    best = {"adm": -1, "cost": math.inf, "plan": None}
    plan: list = [None] * n_req
    nodes = 0

    def bound_ok(adm_possible: int, cost: float) -> bool:
        return adm_possible > best["adm"] or (adm_possible == best["adm"] and cost < best["cost"])

    def next_request(i: int, adm: int, cost: float) -> None:
        nonlocal nodes
        nodes += 1
        if i == n_req:
            if adm > best["adm"] or (adm == best["adm"] and cost < best["cost"]):
                best.update(adm=adm, cost=cost, plan=list(plan))
            return
        if bound_ok(adm + n_req - i, cost):
            place_vnf(i, 0, [], 1.0, adm, cost)
        plan[i] = None
        if bound_ok(adm + n_req - i - 1, cost):
            next_request(i + 1, adm, cost)

    def place_vnf(i: int, u: int, chosen: list, survive: float, adm: int, cost: float) -> None:
        nonlocal nodes
        nodes += 1
        t = requests[i]
        if u == t.chain_length:
            plan[i] = tuple(chosen)
            next_request(i + 1, adm + 1, cost)
            return
        r, b = t.vnf_demands[u], t.bandwidth
        prev = chosen[-1] if chosen else None
        for s in range(n):
            if r > rem_server[s] + pc.EPS:
                continue
            s_survive = survive * (1.0 - fail[s])
            if not pc.meets_reliability(1.0 - s_survive, t.max_failure_prob):
                continue
            hop = 0.0
            uses_link = prev is not None and prev != s and b > 0
            if uses_link:
                if b > rem_link[prev, s] + pc.EPS:
                    continue
                hop = b * lcost[prev, s]
            new_cost = cost + r * unit[s] + hop
            if not bound_ok(adm + n_req - i, new_cost):
                continue
            rem_server[s] -= r
            if uses_link:
                rem_link[prev, s] -= b
                rem_link[s, prev] -= b
            chosen.append(s)
            place_vnf(i, u + 1, chosen, s_survive, adm, new_cost)
            chosen.pop()
            rem_server[s] += r
            if uses_link:
                rem_link[prev, s] += b
                rem_link[s, prev] += b

    next_request(0, 0, 0.0)
    return OracleResult(best["plan"], best["adm"], best["cost"], nodes)


class OraclePolicy:
    """Adapter that solves each slot once and replays the plan request by request."""

    def __init__(self, budget: int = DEFAULT_BUDGET):
        self.budget = budget
        self._slot = None
        self._plan: list = []

    def plan_slot(self, graph, ledger, requests, slot) -> None:
        self._plan = list(oracle_solve(graph, ledger, requests, self.budget).placements)
        self._slot = slot

    def next(self):
        return self._plan.pop(0)
