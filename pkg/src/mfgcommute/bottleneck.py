"""Departure-time scenario: discrete point-queue bottleneck with scheduling cost.

States are the M slices of the departure window [0, L] hours.  Congestion is
queuing delay at a single bottleneck of normalized per-slice capacity
``C_b = (capacity / demand) * (L / M)`` (fraction of total demand served per
slice).  The daily cost adds the usual early/late scheduling penalties around
the shared desired arrival time; free-flow travel time is ignored.  Inertia
between days is proportional to the shift in departure time, in hours, so a
re-discretization at fixed L leaves costs unchanged.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CostModel, InvalidInputError

__all__ = [
    "BottleneckSpec",
    "bottleneck_delay",
    "delay_profile",
    "departure_cost",
    "departure_costs",
    "shift_inertia",
    "bottleneck_cost_model",
    "load_spec",
]


@dataclass(frozen=True)
class BottleneckSpec:
    """Scenario parameters.

    M time slices over a window of L hours; capacity in veh/h against a total
    demand of ``demand`` commuters; alpha/beta/gamma cost per hour of delay,
    early arrival, late arrival; r the shared desired arrival time in hours;
    epsilon the inertia weight per hour of departure shift.  ``slice_mapping``
    picks whether a slice is identified with its left edge or its center when
    converted to hours.
    """

    M: int
    L: float
    capacity: float
    demand: float
    alpha: float
    beta: float
    gamma: float
    r: float
    epsilon: float
    slice_mapping: str = "left"

    def __post_init__(self):
        if self.M < 1 or self.L <= 0.0 or self.demand <= 0.0:
            raise InvalidInputError("M, L and demand must be positive")
        if self.normalized_capacity <= 0.0:
            raise InvalidInputError("normalized capacity must be positive")
        if not 0.0 <= self.r <= self.L:
            raise InvalidInputError("desired arrival must lie in the window")
        if self.epsilon < 0.0:
            raise InvalidInputError("epsilon must be non-negative")
        if self.slice_mapping not in ("left", "center"):
            raise InvalidInputError(f"unknown slice mapping {self.slice_mapping!r}")
        if not self.beta < self.alpha < self.gamma:
            warnings.warn(
                "expected beta < alpha < gamma for a well-posed bottleneck",
                stacklevel=2,
            )

    @property
    def slice_hours(self) -> float:
        return self.L / self.M

    @property
    def normalized_capacity(self) -> float:
        return (self.capacity / self.demand) * (self.L / self.M)

    def slice_positions(self) -> np.ndarray:
        """Departure time of each slice in hours."""
        offsets = np.arange(self.M, dtype=float)
        if self.slice_mapping == "center":
            offsets = offsets + 0.5
        return offsets * self.slice_hours


def delay_profile(mu, spec: BottleneckSpec) -> np.ndarray:
    """Queuing delay of every slice, in hours.

    In slice units T(s) = cum(s)/C_b - s - min_{y<=s}(cum(y)/C_b - y) with
    cum the cumulative departure shares; the running minimum makes the sweep
    O(1) per slice.  Converted to hours via L/M on return.  Accepts a single
    (M,) mean field or a stacked (..., M) batch.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape[-1] != spec.M:
        raise InvalidInputError(f"mean field must have {spec.M} entries")
    g = np.cumsum(mu, axis=-1) / spec.normalized_capacity - np.arange(spec.M)
    return (g - np.minimum.accumulate(g, axis=-1)) * spec.slice_hours


def bottleneck_delay(s: int, mu, spec: BottleneckSpec) -> float:
    """Queuing delay of slice ``s`` in hours (always >= 0)."""
    if not 0 <= s < spec.M:
        raise InvalidInputError(f"slice index {s} out of range")
    return float(delay_profile(mu, spec)[s])


def departure_costs(mu, spec: BottleneckSpec) -> np.ndarray:
    """Delay plus scheduling cost of every slice.

    alpha*T + beta*[r - s_h - T]_+ + gamma*[s_h + T - r]_+ with T the delay
    and s_h the slice position, both in hours.
    """
    t = delay_profile(mu, spec)
    s_h = spec.slice_positions()  # broadcasts over a stacked batch
    early = np.maximum(spec.r - s_h - t, 0.0)
    late = np.maximum(s_h + t - spec.r, 0.0)
    return spec.alpha * t + spec.beta * early + spec.gamma * late


def departure_cost(s: int, mu, spec: BottleneckSpec) -> float:
    if not 0 <= s < spec.M:
        raise InvalidInputError(f"slice index {s} out of range")
    return float(departure_costs(mu, spec)[s])


def shift_inertia(s: int, s_prime: int, spec: BottleneckSpec) -> float:
    """Inertia epsilon * |s - s'| * (L/M): hours of shift times the weight."""
    if not (0 <= s < spec.M and 0 <= s_prime < spec.M):
        raise InvalidInputError("slice index out of range")
    return spec.epsilon * abs(s - s_prime) * spec.slice_hours


def bottleneck_cost_model(spec: BottleneckSpec, theta: float) -> CostModel:
    """Cost model for the departure-time scenario.

    The uniform bound sweeps all single-slice-concentrated mean fields: the
    cost of any slice is piecewise linear in its delay, and both the maximal
    delay of a slice and the zero-delay corner are attained within that
    sweep, so the sweep maximum dominates the cost everywhere.
    """
    worst = 0.0
    for s0 in range(spec.M):
        onehot = np.zeros(spec.M)
        onehot[s0] = 1.0
        worst = max(worst, float(departure_costs(onehot, spec).max()))
    bound = worst + spec.epsilon * (spec.M - 1) * spec.slice_hours
    return CostModel(
        M=spec.M,
        theta=theta,
        travel_cost=lambda s, mu: departure_cost(s, mu, spec),
        inertia=lambda s, x: shift_inertia(s, x, spec),
        bound_C=bound,
        travel_cost_batch=lambda mu: departure_costs(mu, spec),
        travel_cost_table=lambda mu_seq: departure_costs(mu_seq, spec),
    )


def load_spec(path) -> BottleneckSpec:
    """Read a scenario file: {M, L, capacity, demand, alpha, beta, gamma, r, epsilon}."""
    raw = json.loads(Path(path).read_text())
    try:
        return BottleneckSpec(
            M=int(raw["M"]),
            L=float(raw["L"]),
            capacity=float(raw["capacity"]),
            demand=float(raw["demand"]),
            alpha=float(raw["alpha"]),
            beta=float(raw["beta"]),
            gamma=float(raw["gamma"]),
            r=float(raw["r"]),
            epsilon=float(raw["epsilon"]),
            slice_mapping=str(raw.get("slice_mapping", "left")),
        )
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed scenario file {path}: {exc}") from exc
