"""Stationary equilibria of the commute game and equilibrium diagnostics.

A stationary pair is a value vector and a distribution such that one Bellman
backup shifts the values by a single constant (so the induced policy is
time-invariant) and that policy leaves the distribution invariant.  The
solver alternates relative value iteration at a frozen distribution with a
damped move of the distribution toward the stationary law of the induced
policy.  Values are gauge-fixed to V(0) = 0 since the pair only pins values
up to an additive constant.

The diagnostics connect the stationary pair to classical within-day
equilibrium notions: the switching-invariance residual, the value/travel-cost
gap bracket under flat switching penalties, the population lower bound, and
the flatness of the entropy-augmented cost profile.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import (
    CostModel,
    InvalidInputError,
    SolverFailure,
    _bellman_core,
    bellman_apply,
    check_distribution,
    check_mean_field_seq,
    dist_distance,
    forward_step,
    uniform_distribution,
)
from .fictitious import FPConfig, fictitious_play

__all__ = [
    "StationaryPair",
    "solve_smfe",
    "smfe_residuals",
    "sdsue_check",
    "value_gap_check",
    "omega_bound_check",
    "augmented_cost_profile",
]

logger = logging.getLogger(__name__)


@dataclass
class StationaryPair:
    """Stationary value/distribution pair with its per-day cost constant."""

    V_bar: np.ndarray
    mu_bar: np.ndarray
    lambda_bar: float
    pi_bar: np.ndarray


def _relative_value_iteration(cm, mu, v_start, tol=1e-13, max_sweeps=100_000):
    """Average-cost values at frozen ``mu``: gauge-fixed V and the shift constant.

    Iterates the Bellman backup, re-pinning V(0) = 0 after every sweep, then
    takes 10 more sweeps whose increments are averaged into the per-day
    constant (pre-convergence increments would contaminate the mean).
    """
    f = cm.travel_cost_vector(mu)  # frozen mu: one cost evaluation for all sweeps
    d = cm.inertia_matrix
    v = v_start - v_start[0]
    for _ in range(max_sweeps):
        backed, _ = _bellman_core(f, d, v, cm.theta)
        nxt = backed - backed[0]
        delta = float(np.max(np.abs(nxt - v)))
        v = nxt
        if delta <= tol:
            break
    shifts: deque[float] = deque(maxlen=10)
    for _ in range(10):
        backed, _ = _bellman_core(f, d, v, cm.theta)
        shifts.append(float(backed[0]))
        v = backed - backed[0]
    lam = math.fsum(shifts) / len(shifts)
    _, pi = _bellman_core(f, d, v, cm.theta)
    return v, lam, pi


def _stationary_distribution(pi, start, tol=1e-14, max_iters=20_000):
    """Power iteration toward the invariant distribution of a policy."""
    nu = start
    for _ in range(max_iters):
        nxt = forward_step(pi, nu)
        if dist_distance(nxt, nu) <= tol:
            return nxt
        nu = nxt
    return nu


def solve_smfe(
    cm: CostModel,
    init=None,
    tol: float = 1e-8,
    damping: float = 0.5,
    max_outer: int = 100_000,
    fallback: bool = True,
) -> StationaryPair:
    """Solve for a stationary pair by alternating value and distribution updates.

    Each outer round runs relative value iteration at the current
    distribution, then damps the distribution toward the stationary law of
    the induced policy.  If the distribution residual stalls, one long-horizon
    fictitious play run re-seeds the distribution from the middle of the
    horizon, where the equilibrium is closest to stationary.  Raises
    SolverFailure with the last residuals if the cap is exhausted.
    """
    if init is None:
        mu = uniform_distribution(cm.M)
    else:
        mu = check_distribution(init, "initial distribution")
        if mu.shape[0] != cm.M:
            raise InvalidInputError("initial distribution dimension mismatch")
    v = np.zeros(cm.M)
    lam = 0.0
    r1 = r2 = math.inf
    best = math.inf
    stall = 0
    grow = 0
    step = damping
    ceiling = damping
    fallback_at = min(5_000, max(max_outer // 2, 1))
    fallback_used = not fallback
    for outer in range(max_outer):
        v, lam, pi = _relative_value_iteration(cm, mu, v)
        backed, _ = bellman_apply(v, mu, cm)
        r1 = float(np.max(np.abs(backed - v - lam)))
        pushed = forward_step(pi, mu)
        r2 = dist_distance(pushed, mu)
        if r1 <= tol and r2 <= tol:
            logger.info("stationary solve converged after %d rounds", outer + 1)
            return StationaryPair(V_bar=v, mu_bar=mu, lambda_bar=lam, pi_bar=pi)
        if outer + 1 >= fallback_at and not fallback_used and r2 > 1e-3:
            mu = _fallback_seed(cm)
            v = np.zeros(cm.M)
            best = math.inf
            stall = 0
            grow = 0
            step = damping
            ceiling = damping
            fallback_used = True
            logger.info("stationary solve re-seeded from long-horizon run")
            continue
        # A fixed damping can two-cycle when theta times the cost spread is
        # stiff; halve the step whenever the residual stops improving.
        if r2 < best:
            best = r2
            stall = 0
            grow += 1
            if grow >= 50:
                step = min(2.0 * step, ceiling)
                grow = 0
        else:
            stall += 1
            grow = 0
            if stall >= 50 and step > 2.0**-20:
                step *= 0.5
                ceiling = step
                stall = 0
        target = _stationary_distribution(pi, pushed)
        mu = (1.0 - step) * mu + step * target
        mu = mu / math.fsum(mu)
    raise SolverFailure(
        f"stationary solve stopped at residuals r1={r1:.3e}, r2={r2:.3e}",
        residual=max(r1, r2),
        payload={"V_bar": v, "mu_bar": mu, "lambda_bar": lam, "r1": r1, "r2": r2},
    )


def _fallback_seed(cm, horizon=200):
    report = fictitious_play(
        cm,
        FPConfig(
            mu0=uniform_distribution(cm.M),
            horizon=horizon,
            max_iters=500,
            exploitability_tol=1e-9,
            record_trace=False,
        ),
    )
    return report.avg_mf[horizon // 2]


def smfe_residuals(p: StationaryPair, cm: CostModel):
    """The two defining residuals of a stationary pair.

    r1 = max_s |G V(s) - V(s) - lambda|, r2 = d_f(K_pi mu, mu).
    """
    backed, _ = bellman_apply(p.V_bar, p.mu_bar, cm)
    r1 = float(np.max(np.abs(backed - p.V_bar - p.lambda_bar)))
    r2 = dist_distance(forward_step(p.pi_bar, p.mu_bar), p.mu_bar)
    return r1, r2


def sdsue_check(mu, pi) -> float:
    """Switching-invariance residual max_k |mu(k) - sum_j mu(j) pi(k|j)|.

    Zero exactly when ``mu`` is a fixed point of the switching-choice model
    with policy ``pi``; identical to the distribution residual of a
    stationary pair.
    """
    return dist_distance(forward_step(pi, mu), mu)


def _indicator_epsilon(cm: CostModel) -> float:
    d = cm.inertia_matrix
    if np.any(np.diag(d) != 0.0):
        raise InvalidInputError("inertia is not of indicator form (nonzero diagonal)")
    off = d[~np.eye(cm.M, dtype=bool)]
    if off.size == 0:
        return 0.0
    if np.any(off != off[0]):
        raise InvalidInputError("inertia is not of indicator form (varying penalty)")
    return float(off[0])


def value_gap_check(p: StationaryPair, cm: CostModel, slack: float = 1e-9) -> bool:
    """Bracket of value gaps by travel-cost gaps under flat switching penalty.

    For every ordered pair with V(x) > V(y):
    V(x)-V(y) > f(x,mu)-f(y,mu) > V(x)-V(y) - epsilon, within ``slack``.
    Only defined for indicator inertia d = epsilon * 1{s != s'}.
    """
    eps = _indicator_epsilon(cm)
    f = cm.travel_cost_vector(p.mu_bar)
    ok = True
    for x in range(cm.M):
        for y in range(cm.M):
            v_gap = float(p.V_bar[x] - p.V_bar[y])
            if v_gap <= 1e-10:
                continue
            f_gap = float(f[x] - f[y])
            ok = ok and (v_gap > f_gap - slack) and (f_gap > v_gap - eps - slack)
    return ok


def omega_bound_check(mfe_mu, cm: CostModel) -> bool:
    """Population lower bound mu_n(s) >= 1/(M e^{4 theta C}) for all n >= 1.

    Day 0 is exempt: the initial distribution may contain zeros.  The bound
    underflows to 0 for large theta * C, in which case strict positivity of
    the softmax policies carries the check.
    """
    mu = check_mean_field_seq(mfe_mu)
    omega = math.exp(-4.0 * cm.theta * cm.bound_C - math.log(cm.M))
    if mu.shape[0] < 2:
        return True
    return bool(np.all(mu[1:] >= omega))


def augmented_cost_profile(mu, v_or_f, theta: float) -> np.ndarray:
    """Entropy-augmented profile g(s) = cost(s) + (1/theta) ln mu(s).

    A flat profile (max - min below tolerance) certifies the logit
    equilibrium condition for the given cost vector.
    """
    mu = check_distribution(mu)
    v_or_f = np.asarray(v_or_f, dtype=float)
    if v_or_f.shape != mu.shape:
        raise InvalidInputError("cost vector and distribution shapes differ")
    if np.any(mu <= 0.0):
        raise InvalidInputError("profile needs a strictly positive distribution")
    return v_or_f + np.log(mu) / theta
