"""Cost, failure probability and feasibility of a single service placement.

A placement is a tuple of flat server indices, entry ``u`` hosting VNF ``u``.
Each VNF is instantiated exactly once; two VNFs of one service may share a
server, in which case their demands add up and the hop between them is free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .services import ServiceType
from .topology import NetworkGraph

Placement = tuple  # tuple[int, ...]

EPS = 1e-9
# slack for F_p <= F_l so a placement sitting exactly on the bound is not lost to rounding
RELIABILITY_TOL = 1e-12
_LOG_SPACE_THRESHOLD = 32


class LedgerError(RuntimeError):
    """Resource accounting went out of bounds (indicates a bookkeeping bug)."""


def as_placement(graph: NetworkGraph, servers: Sequence) -> Placement:
    return tuple(graph.index(s) for s in servers)


def server_cost(graph: NetworkGraph, stype: ServiceType, placement: Sequence) -> float:
    p = as_placement(graph, placement)
    costs = graph.server_unit_costs
    return float(sum(r * costs[s] for r, s in zip(stype.vnf_demands, p)))


def link_cost(graph: NetworkGraph, stype: ServiceType, placement: Sequence) -> float:
    p = as_placement(graph, placement)
    total = 0.0
    for a, b in zip(p[:-1], p[1:]):
        if a != b:
            total += stype.bandwidth * graph.link_cost[a, b]
    return float(total)


def vnf_failure_prob(graph: NetworkGraph, server) -> float:
    return float(graph.server_failure[graph.index(server)])


def failure_prob_from(vs: Sequence[float]) -> float:
    """Failure probability of a series system of independent parts."""
    if len(vs) > _LOG_SPACE_THRESHOLD:
        return float(-math.expm1(sum(math.log1p(-v) for v in vs)))
    survive = 1.0
    for v in vs:
        survive *= 1.0 - v
    return 1.0 - survive


def meets_reliability(failure_prob: float, max_failure_prob: float) -> bool:
    return failure_prob <= max_failure_prob + RELIABILITY_TOL


def service_failure_prob(graph: NetworkGraph, placement: Sequence) -> float:
    p = as_placement(graph, placement)
    if not p:
        raise ValueError("empty placement")
    return failure_prob_from([graph.server_failure[s] for s in p])


@dataclass(frozen=True)
class Verdict:
    feasible: bool
    reason: str | None = None  # "capacity", "bandwidth" or "reliability"

    def __bool__(self):
        return self.feasible


FEASIBLE = Verdict(True)


@dataclass(frozen=True)
class PlacementEvaluation:
    server_cost: float
    link_cost: float
    total_cost: float
    failure_prob: float
    verdict: Verdict

    @property
    def feasible(self) -> bool:
        return self.verdict.feasible


class ResourceLedger:
    """Remaining server resources and link bandwidth for one simulation."""

    def __init__(self, graph: NetworkGraph):
        self.graph = graph
        self.remaining_server = np.array(graph.server_capacity, dtype=float)
        self.remaining_link = np.array(graph.link_bandwidth, dtype=float)

    def copy(self) -> "ResourceLedger":
        new = ResourceLedger.__new__(ResourceLedger)
        new.graph = self.graph
        new.remaining_server = self.remaining_server.copy()
        new.remaining_link = self.remaining_link.copy()
        return new

    def __eq__(self, other):
        if not isinstance(other, ResourceLedger):
            return NotImplemented
        return (self.graph is other.graph
                and np.array_equal(self.remaining_server, other.remaining_server)
                and np.array_equal(self.remaining_link, other.remaining_link))

    def used_server(self) -> np.ndarray:
        return self.graph.server_capacity - self.remaining_server

    def used_link(self) -> np.ndarray:
        used = self.graph.link_bandwidth - self.remaining_link
        np.fill_diagonal(used, 0.0)
        return used

    def commit(self, stype: ServiceType, placement: Sequence) -> "ResourceLedger":
        p = as_placement(self.graph, placement)
        server_need, link_need = _demand(stype, p)
        for s, need in server_need.items():
            if need > self.remaining_server[s] + EPS:
                raise LedgerError(f"server {s}: commit of {need} exceeds remaining {self.remaining_server[s]}")
        for (a, b), need in link_need.items():
            if need > self.remaining_link[a, b] + EPS:
                raise LedgerError(f"link {a}-{b}: commit of {need} exceeds remaining {self.remaining_link[a, b]}")
        for s, need in server_need.items():
            self.remaining_server[s] -= need
        for (a, b), need in link_need.items():
            self.remaining_link[a, b] -= need
            self.remaining_link[b, a] -= need
        return self

    def release(self, stype: ServiceType, placement: Sequence) -> "ResourceLedger":
        p = as_placement(self.graph, placement)
        server_need, link_need = _demand(stype, p)
        cap, bw = self.graph.server_capacity, self.graph.link_bandwidth
        for s, need in server_need.items():
            if self.remaining_server[s] + need > cap[s] + EPS:
                raise LedgerError(f"server {s}: release of {need} exceeds capacity")
        for (a, b), need in link_need.items():
            if self.remaining_link[a, b] + need > bw[a, b] + EPS:
                raise LedgerError(f"link {a}-{b}: release of {need} exceeds bandwidth")
        for s, need in server_need.items():
            self.remaining_server[s] += need
        for (a, b), need in link_need.items():
            self.remaining_link[a, b] += need
            self.remaining_link[b, a] += need
        return self


def _demand(stype: ServiceType, p: Placement) -> tuple[dict, dict]:
    """Aggregate per-server and per-link consumption of one placement."""
    if len(p) != stype.chain_length:
        raise ValueError(f"placement has {len(p)} entries, chain has {stype.chain_length}")
    server_need: dict[int, float] = {}
    for r, s in zip(stype.vnf_demands, p):
        server_need[s] = server_need.get(s, 0.0) + r
    link_need: dict[tuple[int, int], float] = {}
    if stype.bandwidth > 0:
        for a, b in zip(p[:-1], p[1:]):
            if a != b:
                key = (a, b) if a < b else (b, a)
                link_need[key] = link_need.get(key, 0.0) + stype.bandwidth
    return server_need, link_need


def check_feasible(graph: NetworkGraph, ledger: ResourceLedger, stype: ServiceType,
                   placement: Sequence) -> Verdict:
    p = as_placement(graph, placement)
    if len(p) != stype.chain_length:
        raise ValueError(f"placement has {len(p)} entries, chain has {stype.chain_length}")
    server_need, link_need = _demand(stype, p)
    for s, need in server_need.items():
        if need > ledger.remaining_server[s] + EPS:
            return Verdict(False, "capacity")
    for (a, b), need in link_need.items():
        if need > ledger.remaining_link[a, b] + EPS:
            return Verdict(False, "bandwidth")
    if not meets_reliability(service_failure_prob(graph, p), stype.max_failure_prob):
        return Verdict(False, "reliability")
    return FEASIBLE


def evaluate(graph: NetworkGraph, ledger: ResourceLedger, stype: ServiceType,
             placement: Sequence) -> PlacementEvaluation:
    sc = server_cost(graph, stype, placement)
    lc = link_cost(graph, stype, placement)
    return PlacementEvaluation(sc, lc, sc + lc, service_failure_prob(graph, placement),
                               check_feasible(graph, ledger, stype, placement))


def commit(ledger: ResourceLedger, stype: ServiceType, placement: Sequence) -> ResourceLedger:
    return ledger.commit(stype, placement)


def release(ledger: ResourceLedger, stype: ServiceType, placement: Sequence) -> ResourceLedger:
    return ledger.release(stype, placement)
