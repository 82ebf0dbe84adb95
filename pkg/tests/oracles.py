"""Independent reference computations shared by the unit and acceptance tests."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from hss_sim.devices import HssConfig, service_time
from hss_sim.trace_io import IORequest, Op


def brute_force_demand_schedule(trace: list[IORequest], hss: HssConfig) -> float:
    """Minimum total latency over every demand-driven two-tier schedule.

    Only 1-page requests spaced far enough apart that nothing queues. A page
    may be placed on a write or cold read, and promoted right after a read
    from the slow tier; either may push out any fast-resident page. Moves
    themselves cost nothing. Every choice is enumerated (memoised on the
    state, which does not prune any distinct outcome).
    """
    assert all(r.size_pages == 1 for r in trace)
    fast_spec, slow_spec = hss.devices[0], hss.devices[1]
    cap = fast_spec.capacity_pages
    cost = {(d, op): service_time(s, op, 1) for d, s in ((0, fast_spec), (1, slow_spec))
            for op in Op}

    @lru_cache(maxsize=None)
    def best(i: int, fast: frozenset, slow: frozenset) -> float:
        if i == len(trace):
            return 0.0
        r = trace[i]
        p, op = r.page_addr, r.op
        options = []
        placing = op == Op.WRITE or (p not in fast and p not in slow)
        if placing:
            f, s = fast - {p}, slow - {p}
            options.append(cost[1, op] + best(i + 1, f, s | {p}))
            if len(f) < cap:
                options.append(cost[0, op] + best(i + 1, f | {p}, s))
            else:
                for v in f:
                    options.append(cost[0, op] + best(i + 1, (f - {v}) | {p}, s | {v}))
        elif p in fast:
            options.append(cost[0, op] + best(i + 1, fast, slow))
        else:
            c = cost[1, op]
            options.append(c + best(i + 1, fast, slow))
            s = slow - {p}
            if len(fast) < cap:
                options.append(c + best(i + 1, fast | {p}, s))
            else:
                for v in fast:
                    options.append(c + best(i + 1, (fast - {v}) | {p}, s | {v}))
        return min(options)

    return best(0, frozenset(), frozenset())


# The RL oracles are written independently of the kernels: a direct forward
# pass with np.exp, and an atom-by-atom projection that searches for the
# bracketing atoms instead of using floor arithmetic.

def brute_project(reward, gamma, p, support):
    n = len(support)
    out = np.zeros(n)
    if n == 1:
        return np.ones(1)
    lo_v, hi_v = support[0], support[-1]
    for j in range(n):
        tz = min(max(reward + gamma * support[j], lo_v), hi_v)
        for i in range(n):
            if support[i] == tz:
                out[i] += p[j]
                break
            if i + 1 < n and support[i] < tz < support[i + 1]:
                w_hi = (tz - support[i]) / (support[i + 1] - support[i])
                out[i] += p[j] * (1 - w_hi)
                out[i + 1] += p[j] * w_hi
                break
    return out


def oracle_forward(params, x, A, N):
    w1, b1, w2, b2 = params
    pre = x @ w1.T + b1
    h = pre / (1 + np.exp(-pre))
    logits = (h @ w2.T + b2).reshape(len(x), A, N)
    return logits


def oracle_loss(params, x, actions, targets, A, N):
    logits = oracle_forward(params, x, A, N)[np.arange(len(x)), actions]
    if N == 1:
        return np.mean((logits[:, 0] - targets[:, 0]) ** 2)
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    return -np.mean((targets * logp).sum(axis=1))


def oracle_targets(inference, rewards, next_x, gamma):
    A, N = inference.num_actions, inference.num_atoms
    logits = oracle_forward(inference.params, next_x, A, N)
    if N == 1:
        q = logits[:, :, 0]
        return (rewards + gamma * q.max(axis=1))[:, None]
    probs = np.exp(logits) / np.exp(logits).sum(axis=2, keepdims=True)
    out = []
    for b in range(len(next_x)):
        best = int(np.argmax(probs[b] @ inference.support))
        out.append(brute_project(rewards[b], gamma, probs[b, best], inference.support))
    return np.array(out)


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def fd_grads(params, f, h=1e-6):
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = f()
            flat[i] = old - h
            down = f()
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads
