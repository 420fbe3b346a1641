"""Independent brute-force evaluators used as test oracles.

These work from the binary decision tensor x[u][i][m] (VNF u on server m of
InP i) and the raw InP/link parameters, deliberately not touching the
package's flat-index helpers.
"""
import itertools
import math


def decision_tensor(graph, placement):
    x = [[[0] * p.server_count for p in graph.inps] for _ in placement]
    for u, s in enumerate(placement):
        i, m = graph.ref(s)
        x[u][i][m] = 1
    return x


def unit_cost(graph, i):
    cp = graph.cost_params
    return cp.alpha * math.exp(cp.beta * (cp.v_base - graph.inps[i].failure_prob))


def pair_cost(graph, i, m, j, h):
    if i == j and m == h:
        return 0.0
    return float(graph.link_cost[graph.index((i, m)), graph.index((j, h))])


def brute_server_cost(graph, stype, placement):
    x = decision_tensor(graph, placement)
    total = 0.0
    for u in range(stype.chain_length):
        for i, p in enumerate(graph.inps):
            for m in range(p.server_count):
                total += x[u][i][m] * stype.vnf_demands[u] * unit_cost(graph, i)
    return total


def brute_link_cost(graph, stype, placement):
    x = decision_tensor(graph, placement)
    total = 0.0
    for u in range(stype.chain_length - 1):
        for i, p in enumerate(graph.inps):
            for m in range(p.server_count):
                for j, q in enumerate(graph.inps):
                    for h in range(q.server_count):
                        total += x[u][i][m] * x[u + 1][j][h] * stype.bandwidth * pair_cost(graph, i, m, j, h)
    return total


def brute_failure_prob(graph, placement):
    x = decision_tensor(graph, placement)
    running = 1.0
    for u in range(len(placement)):
        f_u = 1.0
        for i, p in enumerate(graph.inps):
            for m in range(p.server_count):
                f_u *= p.failure_prob if x[u][i][m] else 1.0
        running *= 1.0 - f_u
    return 1.0 - running


def brute_feasible(graph, remaining_server, remaining_link, services):
    """Check capacity, bandwidth and reliability for a set of (type, placement)
    pairs jointly against the given remaining resources."""
    n = graph.num_servers
    load = [0.0] * n
    bw = {}
    for t, p in services:
        if len(p) != t.chain_length:
            return False
        for u, s in enumerate(p):
            load[s] += t.vnf_demands[u]
        for u in range(t.chain_length - 1):
            a, b = p[u], p[u + 1]
            if a != b and t.bandwidth > 0:
                key = (min(a, b), max(a, b))
                bw[key] = bw.get(key, 0.0) + t.bandwidth
        if brute_failure_prob(graph, p) > t.max_failure_prob + 1e-12:
            return False
    if any(load[s] > remaining_server[s] + 1e-9 for s in range(n)):
        return False
    return all(v <= remaining_link[a][b] + 1e-9 for (a, b), v in bw.items())


def brute_oracle(graph, remaining_server, remaining_link, requests):
    """Enumerate every admit/reject + assignment combination without pruning.

    Returns (max admissions, min cost among those)."""
    n = graph.num_servers
    options = []
    for t in requests:
        opts = [None] + list(itertools.product(range(n), repeat=t.chain_length))
        options.append(opts)
    best = (-1, math.inf)
    for combo in itertools.product(*options):
        chosen = [(t, p) for t, p in zip(requests, combo) if p is not None]
        if not brute_feasible(graph, remaining_server, remaining_link, chosen):
            continue
        adm = len(chosen)
        cost = sum(brute_server_cost(graph, t, p) + brute_link_cost(graph, t, p) for t, p in chosen)
        if adm > best[0] or (adm == best[0] and cost < best[1] - 1e-12):
            best = (adm, cost)
    return best
