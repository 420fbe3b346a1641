import numpy as np
import pytest
from scipy import stats

from nfv_dqn.services import (ActiveService, ServiceType, parse_service_types, sample_arrivals,
                              sample_departures)
from nfv_dqn.topology import ConfigError


def stype(l=0, k=1, d=0.7, demands=(10.0,)):
    return ServiceType(l, demands, 1.0, 0.05, d, k)


def test_arrival_counts_summed():
    rng = np.random.default_rng(0)
    batch = sample_arrivals([stype(0, 1), stype(1, 2)], 0, rng, max_requests=10)
    assert len(batch) == 3
    assert sorted(t.type_id for t in batch.requests) == [0, 1, 1]


def test_zero_arrivals():
    rng = np.random.default_rng(0)
    assert len(sample_arrivals([stype(0, 0), stype(1, 0)], 0, rng)) == 0


def test_arrivals_truncated_to_cap():
    rng = np.random.default_rng(1)
    types = [stype(0, 5), stype(1, 5)]
    kept = np.zeros(2)
    for n in range(10_000):
        batch = sample_arrivals(types, n, rng, max_requests=6)
        assert len(batch) == 6
        for t in batch.requests:
            kept[t.type_id] += 1
    # uniform truncation keeps both types equally often
    assert abs(kept[0] / kept.sum() - 0.5) < 0.01


def test_arrival_order_shuffled():
    rng = np.random.default_rng(2)
    types = [stype(0, 1), stype(1, 1)]
    firsts = [sample_arrivals(types, n, rng).requests[0].type_id for n in range(2000)]
    assert 0.45 < np.mean(firsts) < 0.55


def active(n, d):
    t = stype(d=d)
    return [ActiveService(i, t, (0,), 0) for i in range(n)]


def test_certain_departure():
    rng = np.random.default_rng(0)
    assert sample_departures(active(50, 1.0), rng) == list(range(50))


def test_empty_departures():
    assert sample_departures([], np.random.default_rng(0)) == []


def test_departure_rate():
    rng = np.random.default_rng(3)
    svcs = active(1000, 0.7)
    leaving = sum(len(sample_departures(svcs, rng)) for _ in range(100))
    assert abs(leaving / 100_000 - 0.7) < 0.01


def test_holding_time_geometric():
    """Lifetimes under per-slot departures follow Geometric(d): chi-square at 1 %."""
    rng = np.random.default_rng(4)
    d = 0.3
    t = stype(d=d)
    lifetimes = []
    alive = {i: 0 for i in range(20_000)}
    while alive:
        svcs = [ActiveService(i, t, (0,), 0) for i in alive]
        for i in alive:
            alive[i] += 1
        for sid in sample_departures(svcs, rng):
            lifetimes.append(alive.pop(sid))
    lifetimes = np.array(lifetimes)
    assert abs(lifetimes.mean() - 1 / d) < 0.05
    kmax = 12
    observed = np.array([(lifetimes == k).sum() for k in range(1, kmax)] + [(lifetimes >= kmax).sum()])
    p = [(1 - d) ** (k - 1) * d for k in range(1, kmax)]
    p.append(1 - sum(p))
    expected = np.array(p) * len(lifetimes)
    _, pval = stats.chisquare(observed, expected)
    assert pval > 0.01


def test_seeded_traces_repeat():
    types = [stype(0, 2), stype(1, 3)]

    def trace(seed):
        rng = np.random.default_rng(seed)
        out = []
        for n in range(50):
            out.append(tuple(t.type_id for t in sample_arrivals(types, n, rng, max_requests=4).requests))
            out.append(tuple(sample_departures(active(10, 0.5), rng)))
        return out

    assert trace(9) == trace(9)
    assert trace(9) != trace(10)


def test_parse_catalogue():
    types = parse_service_types([
        {"reliability": 95, "demands": [10, 20], "bandwidth": 5, "departure_prob": 0.6, "arrivals_per_slot": 2}])
    t = types[0]
    assert t.max_failure_prob == 0.05
    assert t.chain_length == 2 and t.vnf_demands == (10.0, 20.0)


@pytest.mark.parametrize("bad", [
    {"reliability": 95, "demands": []},
    {"reliability": 95, "demands": [0]},
    {"reliability": 95, "demands": [1], "departure_prob": 0.0},
    {"reliability": 100, "demands": [1]},
    {"demands": [1]},
])
def test_bad_catalogue(bad):
    with pytest.raises(ConfigError):
        parse_service_types([bad])


def test_active_service_length_checked():
    with pytest.raises(ValueError):
        ActiveService(0, stype(demands=(1.0, 2.0)), (0,), 0)
