"""Service catalogue and the per-slot arrival / departure processes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .topology import ConfigError, reliability_to_failure_prob


@dataclass(frozen=True)
class ServiceType:
    type_id: int
    vnf_demands: tuple[float, ...]
    bandwidth: float
    max_failure_prob: float
    departure_prob: float
    arrivals_per_slot: int = 1

    def __post_init__(self):
        object.__setattr__(self, "vnf_demands", tuple(float(r) for r in self.vnf_demands))
        if not 0.0 < self.max_failure_prob < 1.0:
            raise ConfigError(f"type {self.type_id}: max failure probability must be in (0, 1)")
        if not 0.0 < self.departure_prob <= 1.0:
            raise ConfigError(f"type {self.type_id}: departure probability must be in (0, 1]")
        if any(r <= 0 for r in self.vnf_demands):
            raise ConfigError(f"type {self.type_id}: VNF demands must be positive")
        if self.bandwidth < 0:
            raise ConfigError(f"type {self.type_id}: negative bandwidth")
        if self.arrivals_per_slot < 0:
            raise ConfigError(f"type {self.type_id}: negative arrival count")

    @property
    def chain_length(self) -> int:
        return len(self.vnf_demands)


@dataclass
class ActiveService:
    service_id: int
    type: ServiceType
    placement: tuple[int, ...]
    admitted_slot: int

    def __post_init__(self):
        if len(self.placement) != self.type.chain_length:
            raise ValueError("placement length does not match the chain length")


@dataclass(frozen=True)
class ArrivalBatch:
    slot: int
    requests: tuple[ServiceType, ...] = field(default_factory=tuple)

    def __len__(self):
        return len(self.requests)


def parse_service_types(entries: Sequence[dict]) -> list[ServiceType]:
    """Parse the ``services`` section of a scenario.

    Each entry gives ``demands`` (list), ``bandwidth``, ``reliability`` (percent)
    or ``max_failure_prob``, ``departure_prob`` and ``arrivals_per_slot``.
    """
    if not entries:
        raise ConfigError("scenario defines no service types")
    types = []
    for l, e in enumerate(entries):
        if "reliability" in e:
            F = reliability_to_failure_prob(float(e["reliability"]))
        elif "max_failure_prob" in e:
            F = float(e["max_failure_prob"])
        else:
            raise ConfigError(f"service type {l}: missing reliability")
        demands = e.get("demands")
        if not demands:
            raise ConfigError(f"service type {l}: empty VNF chain")
        types.append(ServiceType(
            type_id=l,
            vnf_demands=tuple(demands),
            bandwidth=float(e.get("bandwidth", 0.0)),
            max_failure_prob=F,
            departure_prob=float(e.get("departure_prob", 0.7)),
            arrivals_per_slot=int(e.get("arrivals_per_slot", 1)),
        ))
    return types


def sample_arrivals(types: Sequence[ServiceType], slot: int, rng: np.random.Generator,
                    max_requests: int | None = None, poisson: bool = False) -> ArrivalBatch:
    """Requests arriving at the start of ``slot``, in shuffled order.

    Each type contributes ``arrivals_per_slot`` requests (or a Poisson draw with
    that mean). If the total exceeds ``max_requests`` a uniformly random subset
    of that size is kept.
    """
    if not types:
        raise ValueError("no service types")
    if poisson:
        counts = rng.poisson([t.arrivals_per_slot for t in types])
    else:
        counts = [t.arrivals_per_slot for t in types]
    pool = [t for t, c in zip(types, counts) for _ in range(int(c))]
    if not pool:
        return ArrivalBatch(slot, ())
    order = rng.permutation(len(pool))
    if max_requests is not None and len(pool) > max_requests:
        order = order[:max_requests]
    return ArrivalBatch(slot, tuple(pool[i] for i in order))


def sample_departures(active: Sequence[ActiveService], rng: np.random.Generator) -> list[int]:
    if not active:
        return []
    u = rng.random(len(active))
    return [s.service_id for s, x in zip(active, u) if x < s.type.departure_prob]
