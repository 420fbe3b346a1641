"""Multi-InP infrastructure: servers, links and the reliability-dependent cost model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


class ConfigError(ValueError):
    pass


class ServerRef(NamedTuple):
    inp: int
    server: int


@dataclass(frozen=True)
class InPSpec:
    inp_id: int
    failure_prob: float
    server_count: int
    server_capacity: float

    def __post_init__(self):
        if not 0.0 < self.failure_prob < 1.0:
            raise ConfigError(f"InP {self.inp_id}: failure probability {self.failure_prob} not in (0, 1)")
        if self.server_count < 1:
            raise ConfigError(f"InP {self.inp_id}: needs at least one server")
        if self.server_capacity <= 0:
            raise ConfigError(f"InP {self.inp_id}: non-positive server capacity")


@dataclass(frozen=True)
class LinkSpec:
    endpoint_a: ServerRef
    endpoint_b: ServerRef
    bandwidth: float
    unit_cost: float


@dataclass(frozen=True)
class CostParams:
    alpha: float = 1.0
    beta: float = 50.0
    v_base: float | None = None


def server_unit_cost(alpha: float, beta: float, v_base: float, v_i: float) -> float:
    """Per-unit price of a server whose failure probability is ``v_i``.

    Exponential in the reliability margin below ``v_base``; equals ``alpha``
    at ``v_i == v_base``.
    """
    if v_i <= 0.0 or v_i > v_base:
        raise ValueError(f"failure probability {v_i} outside (0, v_base={v_base}]")
    return alpha * math.exp(beta * (v_base - v_i))


def reliability_to_failure_prob(percent: float) -> float:
    # round away binary noise, e.g. 1 - 99.9/100 = 0.0010000000000000009
    return round(1.0 - percent / 100.0, 12)


@dataclass(frozen=True, eq=False)
class NetworkGraph:
    """Immutable infrastructure graph.

    Servers are addressed either by :class:`ServerRef` or by their flat index in
    (InP, server) order. Link tables are dense symmetric ``N x N`` arrays; the
    diagonal is the self-link (zero cost, unlimited bandwidth).
    """

    inps: tuple[InPSpec, ...]
    link_bandwidth: np.ndarray
    link_cost: np.ndarray
    cost_params: CostParams
    server_capacity: np.ndarray = field(repr=False)
    server_failure: np.ndarray = field(repr=False)
    server_inp: np.ndarray = field(repr=False)
    inp_unit_cost: np.ndarray = field(repr=False)
    _offsets: tuple[int, ...] = field(repr=False)

    @property
    def num_servers(self) -> int:
        return int(self.server_capacity.shape[0])

    @property
    def num_inps(self) -> int:
        return len(self.inps)

    @property
    def server_unit_costs(self) -> np.ndarray:
        return self.inp_unit_cost[self.server_inp]

    def index(self, ref) -> int:
        if isinstance(ref, (int, np.integer)):
            idx = int(ref)
            if not 0 <= idx < self.num_servers:
                raise IndexError(f"server index {idx} out of range")
            return idx
        inp, server = ref
        if not 0 <= inp < len(self.inps):
            raise IndexError(f"InP index {inp} out of range")
        if not 0 <= server < self.inps[inp].server_count:
            raise IndexError(f"server {server} out of range for InP {inp}")
        return self._offsets[inp] + server

    def ref(self, idx: int) -> ServerRef:
        idx = self.index(idx)
        inp = int(self.server_inp[idx])
        return ServerRef(inp, idx - self._offsets[inp])

    def servers(self) -> list[ServerRef]:
        return [self.ref(i) for i in range(self.num_servers)]

    def link_unit_cost(self, a, b) -> float:
        ia, ib = self.index(a), self.index(b)
        if ia == ib:
            return 0.0
        return float(self.link_cost[ia, ib])

    def link_capacity(self, a, b) -> float:
        ia, ib = self.index(a), self.index(b)
        if ia == ib:
            return math.inf
        return float(self.link_bandwidth[ia, ib])

    def to_config(self) -> dict:
        """Serialise to a scenario-style dict that :func:`build_network` accepts."""
        n = self.num_servers
        iu = np.triu_indices(n, k=1)
        # defaults are the most common off-diagonal values; everything else becomes an override
        bw_vals, bw_counts = np.unique(self.link_bandwidth[iu], return_counts=True)
        default_bw = float(bw_vals[np.argmax(bw_counts)]) if n > 1 else 0.0
        intra = self.server_inp[iu[0]] == self.server_inp[iu[1]]
        costs = self.link_cost[iu]

        def mode(values, fallback):
            if values.size == 0:
                return fallback
            vals, counts = np.unique(values, return_counts=True)
            return float(vals[np.argmax(counts)])

        inter_cost = mode(costs[~intra], 1.0)
        intra_cost = mode(costs[intra], 0.0)
        overrides = []
        for a, b in zip(*iu):
            expected_cost = intra_cost if self.server_inp[a] == self.server_inp[b] else inter_cost
            bw, c = float(self.link_bandwidth[a, b]), float(self.link_cost[a, b])
            if bw != default_bw or c != expected_cost:
                overrides.append({
                    "a": list(self.ref(a)),
                    "b": list(self.ref(b)),
                    "bandwidth": bw,
                    "unit_cost": c,
                })
        return {
            "inps": [
                {
                    "failure_prob": p.failure_prob,
                    "servers": p.server_count,
                    "capacity": p.server_capacity,
                }
                for p in self.inps
            ],
            "cost_params": {
                "alpha": self.cost_params.alpha,
                "beta": self.cost_params.beta,
                "v_base": self.cost_params.v_base,
            },
            "links": {
                "bandwidth": default_bw,
                "inter_inp_cost": inter_cost,
                "intra_inp_cost": intra_cost,
                "overrides": overrides,
            },
        }

    def same_as(self, other: "NetworkGraph") -> bool:
        return (
            self.inps == other.inps
            and self.cost_params == other.cost_params
            and np.array_equal(self.link_bandwidth, other.link_bandwidth)
            and np.array_equal(self.link_cost, other.link_cost)
        )


def _parse_inp(i: int, entry: dict) -> InPSpec:
    if "inp_id" in entry and entry["inp_id"] != i:
        raise ConfigError(f"InP ids must be 0..n-1 in order, got {entry['inp_id']} at position {i}")
    if "reliability" in entry and "failure_prob" in entry:
        raise ConfigError(f"InP {i}: give either reliability or failure_prob, not both")
    if "reliability" in entry:
        v = reliability_to_failure_prob(float(entry["reliability"]))
    elif "failure_prob" in entry:
        v = float(entry["failure_prob"])
    else:
        raise ConfigError(f"InP {i}: missing reliability")
    return InPSpec(i, v, int(entry.get("servers", 1)), float(entry.get("capacity", 100.0)))


def build_network(config: dict) -> NetworkGraph:
    """Build a :class:`NetworkGraph` from the ``network`` section of a scenario.

    Expected keys: ``inps`` (list of ``{reliability | failure_prob, servers,
    capacity}``), optional ``cost_params`` (``alpha``, ``beta``, ``v_base``) and
    optional ``links`` (``bandwidth``, ``inter_inp_cost``, ``intra_inp_cost``,
    ``overrides``). Reliabilities are percentages and are converted to failure
    probabilities here, once.
    """
    entries = config.get("inps") or []
    if not entries:
        raise ConfigError("scenario defines no InPs")
    ids = [e.get("inp_id", i) for i, e in enumerate(entries)]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate InP ids: {ids}")
    inps = tuple(_parse_inp(i, e) for i, e in enumerate(entries))

    cp = config.get("cost_params") or {}
    v_max = max(p.failure_prob for p in inps)
    v_base = cp.get("v_base")
    v_base = v_max if v_base is None else float(v_base)
    if v_base < v_max:
        raise ConfigError(f"v_base={v_base} below the largest InP failure probability {v_max}")
    cost_params = CostParams(float(cp.get("alpha", 1.0)), float(cp.get("beta", 50.0)), v_base)

    offsets, n = [], 0
    for p in inps:
        offsets.append(n)
        n += p.server_count
    server_inp = np.repeat(np.arange(len(inps)), [p.server_count for p in inps])
    capacity = np.array([inps[i].server_capacity for i in server_inp], dtype=float)
    failure = np.array([inps[i].failure_prob for i in server_inp], dtype=float)
    unit_cost = np.array(
        [server_unit_cost(cost_params.alpha, cost_params.beta, v_base, p.failure_prob) for p in inps]
    )

    links = config.get("links") or {}
    default_bw = float(links.get("bandwidth", 100.0))
    inter = float(links.get("inter_inp_cost", 1.0))
    intra = float(links.get("intra_inp_cost", 0.5))
    if default_bw < 0 or inter < 0 or intra < 0:
        raise ConfigError("link bandwidth and costs must be non-negative")
    same_inp = server_inp[:, None] == server_inp[None, :]
    bandwidth = np.full((n, n), default_bw)
    cost = np.where(same_inp, intra, inter).astype(float)

    graph = NetworkGraph(inps, bandwidth, cost, cost_params, capacity, failure, server_inp, unit_cost, tuple(offsets))
    for ov in links.get("overrides") or []:
        a, b = graph.index(tuple(ov["a"])), graph.index(tuple(ov["b"]))
        if a == b:
            raise ConfigError("self-link overrides are not allowed")
        bw = float(ov.get("bandwidth", bandwidth[a, b]))
        c = float(ov.get("unit_cost", cost[a, b]))
        if bw < 0 or c < 0:
            raise ConfigError("link bandwidth and costs must be non-negative")
        bandwidth[a, b] = bandwidth[b, a] = bw
        cost[a, b] = cost[b, a] = c
    np.fill_diagonal(cost, 0.0)
    np.fill_diagonal(bandwidth, np.inf)
    for arr in (bandwidth, cost, capacity, failure, server_inp, unit_cost):
        arr.setflags(write=False)
    return graph


def links(graph: NetworkGraph) -> list[LinkSpec]:
    refs = graph.servers()
    n = graph.num_servers
    return [
        LinkSpec(refs[a], refs[b], float(graph.link_bandwidth[a, b]), float(graph.link_cost[a, b]))
        for a in range(n)
        for b in range(a + 1, n)
    ]


def make_network(failure_probs: Sequence[float], servers_per_inp: int | Sequence[int] = 1,
                 capacity: float = 100.0, **kwargs) -> NetworkGraph:
    """Shorthand for tests and small experiments."""
    if isinstance(servers_per_inp, int):
        servers_per_inp = [servers_per_inp] * len(failure_probs)
    cfg = {
        "inps": [
            {"failure_prob": v, "servers": s, "capacity": capacity}
            for v, s in zip(failure_probs, servers_per_inp)
        ],
        "cost_params": kwargs.pop("cost_params", {}),
        "links": kwargs.pop("links", {}),
    }
    if kwargs:
        raise TypeError(f"unexpected arguments {sorted(kwargs)}")
    return build_network(cfg)
