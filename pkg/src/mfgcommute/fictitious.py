"""Fictitious play for the mean field equilibrium of the commute game.

Each iteration best-responds to the running average mean field, then folds
the induced flow into that average and the best response into an
occupancy-weighted average policy:

    avg_mf_n   <- ((j-1)/j) avg_mf_n + (1/j) mf_n
    avg_pol_n(a|s) = sum_i mf_n^i(s) pol_n^i(a|s) / sum_i mf_n^i(s)

Averaging flows and policies over the same set of iterates keeps the pair
consistent: the average policy induces exactly the average flow.  Progress
is measured by exploitability, the cost a single commuter could save by
best-responding to the averaged flow; it vanishes at an equilibrium.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import (
    CostModel,
    InvalidInputError,
    _backward_induction_core,
    _forward_propagate_core,
    _policy_evaluate_core,
    backward_induction,
    check_distribution,
    check_policy_seq,
    forward_propagate,
    seq_distance,
    total_cost,
    uniform_policy_seq,
)

__all__ = [
    "FPConfig",
    "SolverReport",
    "fp_average_mf",
    "fp_average_policy",
    "exploitability",
    "fictitious_play",
]

logger = logging.getLogger(__name__)


@dataclass
class FPConfig:
    """Inputs of the fictitious play loop.

    ``initial_policy`` defaults to all-uniform rows; ``record_trace`` turns
    the per-iteration exploitability trace in the report on or off (the
    stopping rule evaluates it either way).
    """

    mu0: np.ndarray
    horizon: int
    max_iters: int = 500
    exploitability_tol: float = 1e-6
    initial_policy: np.ndarray | None = None
    record_trace: bool = True

    def __post_init__(self):
        self.mu0 = check_distribution(self.mu0, "initial distribution")
        if self.horizon < 1:
            raise InvalidInputError("horizon must be at least 1")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be at least 1")
        if not self.exploitability_tol > 0.0:
            raise InvalidInputError("exploitability_tol must be positive")
        if self.initial_policy is not None:
            pol = check_policy_seq(self.initial_policy, "initial policy")
            m = self.mu0.shape[0]
            if pol.shape != (self.horizon, m, m):
                raise InvalidInputError(
                    f"initial policy must have shape ({self.horizon}, {m}, {m})"
                )
            self.initial_policy = pol


@dataclass
class SolverReport:
    """Result of one fictitious play run."""

    avg_policy: np.ndarray
    avg_mf: np.ndarray
    value_seq: np.ndarray
    exploitability_trace: list[float] = field(repr=False)
    iterations_run: int = 0
    converged: bool = False


def fp_average_mf(prev_avg, new_mf, j: int) -> np.ndarray:
    """Fold iterate ``j``'s induced flow into the running average.

    avg <- ((j-1)/j) prev + (1/j) new; at j = 1 the previous average drops
    out entirely.
    """
    prev_avg = np.asarray(prev_avg, dtype=float)
    new_mf = np.asarray(new_mf, dtype=float)
    if j < 1:
        raise InvalidInputError("iteration index must be >= 1")
    if prev_avg.shape != new_mf.shape:
        raise InvalidInputError("averaged sequences must have equal shapes")
    return ((j - 1) / j) * prev_avg + (1.0 / j) * new_mf


def _weighted_policy_average(num, den, m):
    # Rows never visited get the uniform row: they carry no mass, and a
    # deterministic filler keeps runs reproducible.  Visited rows are
    # renormalized to absorb rounding drift accumulated in the sums.
    out = np.full(den.shape + (m,), 1.0 / m)
    mask = den > 0.0
    rows = num[mask] / den[mask][:, None]
    out[mask] = rows / rows.sum(axis=1)[:, None]
    return out


def fp_average_policy(history, j: int) -> np.ndarray:
    """Occupancy-weighted average of the first ``j`` (flow, policy) iterates.

    Weighting each iterate's policy rows by that iterate's state occupancy
    makes the average policy induce the average flow from the shared
    initial distribution.
    """
    if j < 1 or len(history) < j:
        raise InvalidInputError("need at least j recorded iterations, j >= 1")
    mf0, pol0 = history[0]
    n_days, m = np.asarray(mf0).shape
    num = np.zeros((n_days, m, m))
    den = np.zeros((n_days, m))
    for i in range(j):
        mf = np.asarray(history[i][0], dtype=float)
        pol = np.asarray(history[i][1], dtype=float)
        if mf.shape != (n_days, m) or pol.shape != (n_days, m, m):
            raise InvalidInputError("history entries have inconsistent shapes")
        num += mf[:, :, None] * pol
        den += mf
    return _weighted_policy_average(num, den, m)


def exploitability(pi, mu, cm: CostModel, mu0) -> float:
    """Cost gap of ``pi`` to the exact best response against ``mu``.

    Requires the pair to be consistent (``mu`` induced by ``pi`` from
    ``mu0``); the best-response side is computed exactly by backward
    induction, so the gap is non-negative up to rounding.
    """
    induced = forward_propagate(pi, mu0)
    mu = np.asarray(mu, dtype=float)
    if seq_distance(induced, mu) > 1e-8:
        raise InvalidInputError("mean field is not the flow induced by the policy")
    opt_values, _ = backward_induction(mu, cm)
    mu0 = check_distribution(mu0, "initial distribution")
    return total_cost(pi, mu, cm, mu0) - float(np.sum(mu0 * opt_values[0]))


def fictitious_play(cm: CostModel, cfg: FPConfig) -> SolverReport:
    """Run fictitious play until exploitability drops below tolerance.

    Deterministic: identical inputs produce identical reports.  Returns
    ``converged=False`` (never raises) when the iteration budget runs out.
    """
    m = cm.M
    if cfg.mu0.shape[0] != m:
        raise InvalidInputError("initial distribution dimension does not match model")
    pol0 = (
        cfg.initial_policy
        if cfg.initial_policy is not None
        else uniform_policy_seq(cfg.horizon, m)
    )
    avg_mf = forward_propagate(pol0, cfg.mu0)
    d = cm.inertia_matrix

    num = np.zeros((cfg.horizon, m, m))
    den = np.zeros((cfg.horizon, m))
    avg_pol = None
    trace: list[float] = []
    converged = False
    iterations = 0
    value_seq = None

    for j in range(1, cfg.max_iters + 1):
        # Best response to the current average; its value also prices the
        # exploitability of the pair averaged through iteration j - 1,
        # which shares the same mean field (and hence the same cost table).
        f_table = cm.travel_cost_sequence(avg_mf)
        br_values, br_policy = _backward_induction_core(f_table, d, cm.theta)
        if avg_pol is not None:
            held = _policy_evaluate_core(avg_pol, f_table, d, cm.theta)
            gap = float(np.sum(cfg.mu0 * held[0])) - float(np.sum(cfg.mu0 * br_values[0]))
            if cfg.record_trace:
                trace.append(gap)
            logger.debug("iteration %d exploitability %.3e", iterations, gap)
            if gap <= cfg.exploitability_tol:
                converged = True
                value_seq = br_values
                break
        induced = _forward_propagate_core(br_policy, cfg.mu0)
        avg_mf = fp_average_mf(avg_mf, induced, j)
        num += induced[:, :, None] * br_policy
        den += induced
        avg_pol = _weighted_policy_average(num, den, m)
        iterations = j
    else:
        f_table = cm.travel_cost_sequence(avg_mf)
        br_values, _ = _backward_induction_core(f_table, d, cm.theta)
        held = _policy_evaluate_core(avg_pol, f_table, d, cm.theta)
        gap = float(np.sum(cfg.mu0 * held[0])) - float(np.sum(cfg.mu0 * br_values[0]))
        if cfg.record_trace:
            trace.append(gap)
        converged = gap <= cfg.exploitability_tol
        value_seq = br_values

    logger.info(
        "fictitious play finished after %d iterations (converged=%s)",
        iterations,
        converged,
    )
    return SolverReport(
        avg_policy=avg_pol,
        avg_mf=avg_mf,
        value_seq=value_seq,
        exploitability_trace=trace,
        iterations_run=iterations,
        converged=converged,
    )
