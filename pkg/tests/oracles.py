"""Independent reference implementations used to cross-check the library.

Everything here is deliberately written the slow, obvious way (pure Python
loops, explicit formulas) so it shares no code path with the package.
"""

from __future__ import annotations

import math

import numpy as np


def brute_forward_step(pi, mu):
    """Double-loop flow push with the same renormalization convention."""
    m = len(mu)
    out = [0.0] * m
    for s in range(m):
        acc = 0.0
        for sp in range(m):
            acc += float(mu[sp]) * float(pi[sp][s])
        out[s] = acc
    total = math.fsum(out)
    return np.array([o / total for o in out])


def brute_seq_distance(a, b):
    """Exhaustive max over all (day, state) pairs."""
    best = 0.0
    for n in range(len(a)):
        for s in range(len(a[n])):
            best = max(best, abs(float(a[n][s]) - float(b[n][s])))
    return best


def brute_policy_distance(a, b):
    best = 0.0
    for n in range(len(a)):
        for s in range(len(a[n])):
            for x in range(len(a[n][s])):
                best = max(best, abs(float(a[n][s][x]) - float(b[n][s][x])))
    return best


def point_queue_delays(mu, c_b, slice_hours):
    """Step-by-step cumulative queue recursion for the bottleneck delay.

    Each slice serves one capacity unit; a slice's delay carries over the
    previous slice's residual delay plus its own inflow, floored at zero.
    Returns hours.
    """
    m = len(mu)
    t = [0.0] * m
    for s in range(1, m):
        t[s] = max(t[s - 1] + float(mu[s]) / c_b - 1.0, 0.0)
    return np.array([x * slice_hours for x in t])


def mc_policy_value(pi_seq, mu_seq, cm, start_state, n_paths, rng):
    """Monte-Carlo rollout estimate of the cost-to-go from ``start_state``.

    Samples actions by inverse-CDF over each visited row, accumulating
    travel cost, inertia and the entropy term along each path.  Returns
    (mean, standard error).
    """
    n_days, m = np.asarray(mu_seq).shape
    pi_seq = np.asarray(pi_seq, dtype=float)
    d = np.array(
        [[cm.inertia(s, x) for x in range(m)] for s in range(m)], dtype=float
    )
    f_table = np.array(
        [[cm.travel_cost(s, mu_seq[n]) for s in range(m)] for n in range(n_days)]
    )
    states = np.full(n_paths, start_state, dtype=np.intp)
    total = np.zeros(n_paths)
    for k in range(n_days):
        rows = pi_seq[k][states]
        cdf = np.cumsum(rows, axis=1)
        u = rng.random(n_paths)
        actions = np.minimum((u[:, None] > cdf).sum(axis=1), m - 1)
        total += (
            f_table[k][states]
            + d[states, actions]
            + np.log(rows[np.arange(n_paths), actions]) / cm.theta
        )
        states = actions
    return float(total.mean()), float(total.std(ddof=1) / math.sqrt(n_paths))


def occupancy_total_cost(pi_seq, mu_seq, cm, mu0):
    """Horizon cost through the occupancy-measure decomposition.

    sum_n sum_s occupancy_n(s) * sum_x pi(x|s) (f + d + (1/theta) ln pi),
    with the occupancies propagated independently of the library.
    """
    n_days, m = np.asarray(mu_seq).shape
    occ = [float(x) for x in mu0]
    total = 0.0
    for n in range(n_days):
        stage_next = [0.0] * m
        for s in range(m):
            f = cm.travel_cost(s, np.asarray(mu_seq[n], dtype=float))
            stage = 0.0
            for x in range(m):
                p = float(pi_seq[n][s][x])
                if p > 0.0:
                    stage += p * (cm.inertia(s, x) + math.log(p) / cm.theta)
                    stage_next[x] += occ[s] * p
            total += occ[s] * (f + stage)
        occ = stage_next
    return total
