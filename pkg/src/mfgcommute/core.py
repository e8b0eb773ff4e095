"""Core types and operators of the finite-horizon mean field commute game.

A population of homogeneous commuters picks one of M travel options each day
over an N-day horizon.  The population split on one day is a probability
vector over options (the mean field); a policy is a row-stochastic M x M
matrix whose row ``s`` is the switching distribution of commuters currently
on option ``s``.  Whole-horizon objects are stacked arrays:

    mean field sequence   (N, M)      one distribution per day
    policy sequence       (N, M, M)   one policy per day
    value sequence        (N + 1, M)  expected costs-to-go, terminal row 0

The stage cost of moving from option ``s`` to ``x`` against mean field ``mu``
is ``f(s, mu) + d(s, x) + (1/theta) * ln pi(x|s)``: congestion-dependent
travel cost, switching inertia, and an entropy penalty equivalent to Gumbel
noise on perceived values.  All operators here are pure functions; arrays are
never mutated in place, so values can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import xlogy

__all__ = [
    "DIST_TOL",
    "RENORM_TOL",
    "InvalidInputError",
    "NumericError",
    "SolverFailure",
    "CostModel",
    "check_distribution",
    "check_mean_field_seq",
    "check_policy",
    "check_policy_seq",
    "uniform_distribution",
    "uniform_policy_seq",
    "dist_distance",
    "seq_distance",
    "policy_distance",
    "bellman_apply",
    "backward_induction",
    "forward_step",
    "forward_propagate",
    "policy_evaluate",
    "total_cost",
    "concavity_check",
]

# Tolerance for "is a probability vector": entries >= 0, sum within 1e-12 of 1.
DIST_TOL = 1e-12
# Mass drift absorbed silently by forward_step; anything larger is an error.
RENORM_TOL = 1e-10


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class NumericError(ArithmeticError):
    """A computation left the representable/expected numeric range."""


class SolverFailure(RuntimeError):
    """An iterative solver hit its cap before reaching tolerance."""

    def __init__(self, message, residual=None, payload=None):
        super().__init__(message)
        self.residual = residual
        self.payload = payload


# ---------------------------------------------------------------------------
# validation helpers


def _as_float_array(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def check_distribution(p, name: str = "distribution") -> np.ndarray:
    """Validate and return a probability vector (1-D, >= 0, sums to 1)."""
    arr = _as_float_array(p, name)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-D, got shape {arr.shape}")
    if np.any(arr < 0.0):
        raise InvalidInputError(f"{name} has negative entries")
    if abs(float(arr.sum()) - 1.0) > DIST_TOL:
        raise InvalidInputError(f"{name} does not sum to 1 (sum={arr.sum()!r})")
    return arr


def check_mean_field_seq(mu, name: str = "mean field sequence") -> np.ndarray:
    """Validate an (N, M) stack of distributions."""
    arr = _as_float_array(mu, name)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D (days, states)")
    if np.any(arr < 0.0):
        raise InvalidInputError(f"{name} has negative entries")
    if np.max(np.abs(arr.sum(axis=1) - 1.0)) > DIST_TOL:
        raise InvalidInputError(f"{name} has rows that do not sum to 1")
    return arr


def check_policy(pi, name: str = "policy") -> np.ndarray:
    """Validate an (M, M) row-stochastic matrix."""
    arr = _as_float_array(pi, name)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {arr.shape}")
    if np.any(arr < 0.0):
        raise InvalidInputError(f"{name} has negative entries")
    if np.max(np.abs(arr.sum(axis=1) - 1.0)) > DIST_TOL:
        raise InvalidInputError(f"{name} has rows that do not sum to 1")
    return arr


def check_policy_seq(pi, name: str = "policy sequence") -> np.ndarray:
    """Validate an (N, M, M) stack of row-stochastic matrices."""
    arr = _as_float_array(pi, name)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise InvalidInputError(f"{name} must have shape (days, M, M)")
    if np.any(arr < 0.0):
        raise InvalidInputError(f"{name} has negative entries")
    if np.max(np.abs(arr.sum(axis=2) - 1.0)) > DIST_TOL:
        raise InvalidInputError(f"{name} has rows that do not sum to 1")
    return arr


def uniform_distribution(m: int) -> np.ndarray:
    return np.full(m, 1.0 / m)


def uniform_policy_seq(n: int, m: int) -> np.ndarray:
    return np.full((n, m, m), 1.0 / m)


# ---------------------------------------------------------------------------
# cost model


@dataclass
class CostModel:
    """Scenario interface consumed by every solver.

    ``travel_cost(s, mu)`` is the daily cost of option ``s`` against mean
    field ``mu``; ``inertia(s, x)`` the switching cost between consecutive
    days; ``theta`` the inverse noise scale of the entropy penalty.
    ``bound_C`` must dominate both cost components over all admissible
    inputs.  Both callables must be deterministic.  ``travel_cost_batch``,
    when given, returns the full cost vector for one mean field and must
    agree bit-for-bit with the per-state callable.
    """

    M: int
    theta: float
    travel_cost: Callable[[int, np.ndarray], float]
    inertia: Callable[[int, int], float]
    bound_C: float
    travel_cost_batch: Callable[[np.ndarray], np.ndarray] | None = field(
        default=None, repr=False
    )
    travel_cost_table: Callable[[np.ndarray], np.ndarray] | None = field(
        default=None, repr=False
    )

    def __post_init__(self):
        if self.M < 1:
            raise InvalidInputError("cost model needs at least one state")
        if not (self.theta > 0.0 and math.isfinite(self.theta)):
            raise InvalidInputError("theta must be positive and finite")
        if self.bound_C < 0.0:
            raise InvalidInputError("bound_C must be non-negative")

    @cached_property
    def inertia_matrix(self) -> np.ndarray:
        """(M, M) table of inertia costs, built once from the callable."""
        d = np.array(
            [[self.inertia(s, x) for x in range(self.M)] for s in range(self.M)],
            dtype=float,
        )
        if np.any(d < 0.0) or np.any(d > self.bound_C):
            raise InvalidInputError("inertia values must lie in [0, bound_C]")
        return d

    def travel_cost_vector(self, mu: np.ndarray) -> np.ndarray:
        """Daily cost of every option against ``mu`` as an (M,) vector."""
        if self.travel_cost_batch is not None:
            return np.asarray(self.travel_cost_batch(mu), dtype=float)
        return np.array(
            [self.travel_cost(s, mu) for s in range(self.M)], dtype=float
        )

    def travel_cost_sequence(self, mu_seq: np.ndarray) -> np.ndarray:
        """Daily cost table for a whole (N, M) mean field sequence.

        Uses the whole-horizon hook when the scenario provides one (it must
        agree bit-for-bit with the per-day path); otherwise stacks per-day
        vectors.
        """
        if self.travel_cost_table is not None:
            return np.asarray(self.travel_cost_table(mu_seq), dtype=float)
        return np.stack([self.travel_cost_vector(day) for day in mu_seq])


# ---------------------------------------------------------------------------
# metrics


def dist_distance(a, b) -> float:
    """Sup distance max_s |a(s) - b(s)| between two distributions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b)))


def seq_distance(a, b) -> float:
    """Sup-over-days distance between two mean field sequences."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b)))


def policy_distance(a, b) -> float:
    """Sup-over-days-and-rows distance between two policy sequences."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 3:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b)))


# ---------------------------------------------------------------------------
# backward operators


def _bellman_core(f, d, v_next, theta):
    # One sweep of V(s) = f(s) - (1/theta) ln sum_x exp(-theta (d(s,x)+V(x)))
    # with the softmax policy as by-product.  Max-shifted so theta times the
    # score range may reach ~700 without overflow.
    scores = -theta * (d + v_next[None, :])
    shift = scores.max(axis=1, keepdims=True)
    weights = np.exp(scores - shift)
    norm = weights.sum(axis=1)
    value = f - (shift[:, 0] + np.log(norm)) / theta
    return value, weights / norm[:, None]


def bellman_apply(v_next, mu, cm: CostModel):
    """One optimal Bellman backup against mean field ``mu``.

    Returns ``(V, pi)`` where ``V(s) = f(s,mu) - (1/theta) ln sum_x
    exp(-theta (d(s,x) + v_next(x)))`` and row ``s`` of ``pi`` is proportional
    to ``exp(-theta (d(s,x) + v_next(x)))``.
    """
    v_next = np.asarray(v_next, dtype=float)
    if v_next.shape != (cm.M,):
        raise InvalidInputError(f"value vector must have shape ({cm.M},)")
    if not np.all(np.isfinite(v_next)):
        raise InvalidInputError("value vector contains non-finite entries")
    mu = check_distribution(mu, "mean field")
    if mu.shape != (cm.M,):
        raise InvalidInputError("mean field dimension does not match model")
    f = cm.travel_cost_vector(mu)
    return _bellman_core(f, cm.inertia_matrix, v_next, cm.theta)


def _backward_induction_core(f_table, d, theta):
    n_days, m = f_table.shape
    values = np.zeros((n_days + 1, m))
    policies = np.empty((n_days, m, m))
    for n in range(n_days - 1, -1, -1):
        values[n], policies[n] = _bellman_core(f_table[n], d, values[n + 1], theta)
    return values, policies


def backward_induction(mu, cm: CostModel):
    """Optimal values and the unique optimal policy against ``mu``.

    Sweeps the Bellman backup from the zero terminal value down to day 0.
    Returns ``(values, policies)`` with shapes (N+1, M) and (N, M, M).
    """
    mu = check_mean_field_seq(mu)
    if mu.shape[1] != cm.M:
        raise InvalidInputError("mean field dimension does not match model")
    f_table = cm.travel_cost_sequence(mu)
    return _backward_induction_core(f_table, cm.inertia_matrix, cm.theta)


# ---------------------------------------------------------------------------
# forward operators


def _forward_step_core(pi, mu):
    # Row-by-row accumulation: bit-identical to the naive double loop.
    out = (mu[:, None] * pi).sum(axis=0)
    total = math.fsum(out)
    if abs(total - 1.0) > RENORM_TOL:
        raise NumericError(
            f"mass drift {abs(total - 1.0):.3e} exceeds {RENORM_TOL:.0e}"
        )
    return out / total


def forward_step(pi, mu) -> np.ndarray:
    """Push ``mu`` one day forward through policy ``pi``.

    out(s) = sum_{s'} mu(s') pi(s|s'), renormalized to absorb rounding
    drift (raises if the correction would exceed RENORM_TOL).
    """
    pi = check_policy(pi)
    mu = check_distribution(mu)
    if pi.shape[0] != mu.shape[0]:
        raise InvalidInputError("policy and distribution dimensions differ")
    return _forward_step_core(pi, mu)


def _forward_propagate_core(pi, mu0):
    n_days, m = pi.shape[0], pi.shape[1]
    out = np.empty((n_days, m))
    out[0] = mu0
    for n in range(n_days - 1):
        out[n + 1] = _forward_step_core(pi[n], out[n])
    return out


def forward_propagate(pi, mu0) -> np.ndarray:
    """Mean field sequence induced by a policy sequence from ``mu0``.

    Day 0 is ``mu0`` itself; the day-(N-1) action selects a state outside
    the horizon, so it affects cost but not the returned sequence.
    """
    pi = check_policy_seq(pi)
    mu0 = check_distribution(mu0, "initial distribution")
    if mu0.shape[0] != pi.shape[1]:
        raise InvalidInputError("initial distribution dimension mismatch")
    return _forward_propagate_core(pi, mu0)


# ---------------------------------------------------------------------------
# policy evaluation


def _policy_evaluate_core(pi, f_table, d, theta):
    n_days, m = f_table.shape
    values = np.zeros((n_days + 1, m))
    for n in range(n_days - 1, -1, -1):
        p = pi[n]
        stage = (p * (d + values[n + 1][None, :])).sum(axis=1)
        entropy = xlogy(p, p).sum(axis=1) / theta
        values[n] = f_table[n] + stage + entropy
        if not np.all(np.isfinite(values[n])):
            raise NumericError(f"non-finite value at day {n}")
    return values


def policy_evaluate(pi, mu, cm: CostModel) -> np.ndarray:
    """Value of a fixed policy sequence against mean field sequence ``mu``.

    V_N = 0 and V_n(s) = sum_x pi_n(x|s) (f(s,mu_n) + d(s,x)
    + (1/theta) ln pi_n(x|s) + V_{n+1}(x)); zero-probability actions
    contribute nothing (p ln p -> 0).
    """
    pi = check_policy_seq(pi)
    mu = check_mean_field_seq(mu)
    n_days, m = mu.shape
    if pi.shape != (n_days, m, m) or m != cm.M:
        raise InvalidInputError("policy/mean-field/model shapes do not match")
    f_table = cm.travel_cost_sequence(mu)
    return _policy_evaluate_core(pi, f_table, cm.inertia_matrix, cm.theta)


def total_cost(pi, mu, cm: CostModel, mu0) -> float:
    """Expected horizon cost sum_s mu0(s) V_0(s) of policy ``pi`` against ``mu``."""
    mu0 = check_distribution(mu0, "initial distribution")
    values = policy_evaluate(pi, mu, cm)
    if mu0.shape[0] != values.shape[1]:
        raise InvalidInputError("initial distribution dimension mismatch")
    return float(np.sum(mu0 * values[0]))


# ---------------------------------------------------------------------------
# structural checks


def concavity_check(v, v_alt, mu, cm: CostModel, slack: float = 1e-9) -> bool:
    """Concavity of the Bellman backup in the value argument.

    With ``pi`` optimal for ``v``, checks (i) per state,
    G v_alt(s) <= G v(s) + sum_x pi(x|s) (v_alt(x) - v(x)), and (ii) the
    mu-weighted aggregate sum_s mu(s)(G v_alt - G v)(s)
    <= sum_s (v_alt - v)(s) (K_pi mu)(s), both within ``slack``.
    """
    g_v, pi = bellman_apply(v, mu, cm)
    g_alt, _ = bellman_apply(v_alt, mu, cm)
    v = np.asarray(v, dtype=float)
    v_alt = np.asarray(v_alt, dtype=float)
    diff = v_alt - v
    per_state = g_alt <= g_v + (pi * diff[None, :]).sum(axis=1) + slack
    pushed = _forward_step_core(pi, check_distribution(mu))
    aggregate = float(np.sum(mu * (g_alt - g_v))) <= float(np.sum(diff * pushed)) + slack
    return bool(np.all(per_state)) and aggregate
