"""Offload splitting, edge-CPU allocation and latency bookkeeping.

Symbols follow the usual partial-offloading model: device ``k`` holds ``L``
bits needing ``c`` cycles each, computes locally at ``fl`` cycles/s, offloads
``ell`` bits at rate ``R`` and is granted ``fe`` cycles/s at the edge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .scenario import Scenario

MU_RTOL = 1e-8
MU_MAX_ITER = 200
ORACLE_RTOL = 1e-12


@dataclass
class Allocation:
    ell: np.ndarray  # offloaded bits
    fe: np.ndarray  # edge cycles/s
    binding: bool = True  # False when the edge capacity could not be exhausted


@dataclass
class LatencyReport:
    local: np.ndarray
    edge: np.ndarray
    total: np.ndarray
    tau: float
    rates: np.ndarray


def task_arrays(scenario: Scenario) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (
        scenario.per_device("task_bits"),
        scenario.per_device("cycles_per_bit"),
        scenario.per_device("local_cps"),
    )


def optimal_split(L, c, fl, fe, R):
    """Offloaded bits that equalize local and edge latency (real valued).

    ``L c R fe / (fe fl + c R (fe + fl))``; zero when ``fe`` or ``R`` is zero.
    """
    L, c, fl, fe, R = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (L, c, fl, fe, R)))
    den = fe * fl + c * R * (fe + fl)
    with np.errstate(divide="ignore", invalid="ignore"):
        ell = np.where((fe > 0) & (R > 0), L * c * R * fe / den, 0.0)
    return ell[()] if ell.ndim == 0 else ell


def split_latency(L, c, fl, fe, R):
    """Latency of a device when ``ell`` sits at :func:`optimal_split`.

    ``L c (fe + c R) / (fe (fl + c R) + c R fl)``; equals ``L c / fl`` when
    either the edge share or the rate is zero.
    """
    L, c, fl, fe, R = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (L, c, fl, fe, R)))
    x = c * R
    den = fe * (fl + x) + x * fl
    with np.errstate(divide="ignore", invalid="ignore"):
        D = np.where((fe > 0) & (R > 0), L * c * (fe + x) / den, L * c / fl)
    return D[()] if D.ndim == 0 else D


def latency_parts(L, c, fl, fe, R, ell):
    """Local and edge latency for a given split; infinite edge latency if unreachable."""
    L, c, fl, fe, R, ell = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (L, c, fl, fe, R, ell))
    )
    local = (L - ell) * c / fl
    with np.errstate(divide="ignore", invalid="ignore"):
        edge = np.where(
            ell > 0,
            np.where((R > 0) & (fe > 0), ell / R + ell * c / fe, np.inf),
            0.0,
        )
    return local, edge


def integerize_split(ell_hat: float, latency: Callable[[float], float]) -> int:
    """Round to whichever neighbouring integer gives the lower latency; ties go down."""
    lo, hi = math.floor(ell_hat), math.ceil(ell_hat)
    if lo == hi:
        return int(lo)
    return int(hi) if latency(hi) < latency(lo) else int(lo)


def kkt_fe(mu, L, c, fl, R):
    """Edge share for multiplier ``mu``, clamped at zero."""
    with np.errstate(divide="ignore"):
        fe = (np.sqrt(L * c**3 * R**2 / mu) - c * R * fl) / (fl + c * R)
    return np.maximum(fe, 0.0)


def kkt_edge_allocation(rates, scenario: Scenario) -> tuple[Allocation, float]:
    """Equal-marginal edge allocation with the multiplier found by bisection.

    Every device with a positive share satisfies ``dD_k/dfe_k = -mu``.  The
    multiplier is bisected (geometrically) until the shares use the full edge
    capacity to within ``MU_RTOL`` without exceeding it.
    """
    R = np.asarray(rates, dtype=float)
    L, c, fl = task_arrays(scenario)
    fmax = scenario.fmax_cps

    active = R > 0
    if not np.any(active):
        zeros = np.zeros_like(R)
        return Allocation(zeros, zeros.copy(), binding=False), 0.0

    # at hi every share is clamped to zero; at lo each active share alone exceeds fmax
    hi = float(np.max(L * c / fl**2))
    Ra, La, ca, fla = R[active], L[active], c[active], fl[active]
    lo = float(np.min(La * ca**3 * Ra**2 / (fmax * (fla + ca * Ra) + ca * Ra * fla) ** 2))

    # stop only on the feasible side so the shares never exceed the capacity
    mu = hi
    for _ in range(MU_MAX_ITER):
        mid = math.sqrt(lo * hi)
        total = kkt_fe(mid, L, c, fl, R).sum()
        if total > fmax:
            lo = mid
        else:
            hi = mu = mid
            if fmax - total <= MU_RTOL * fmax:
                break
    fe = kkt_fe(mu, L, c, fl, R)
    binding = abs(fe.sum() - fmax) <= MU_RTOL * fmax
    return Allocation(optimal_split(L, c, fl, fe, R), fe, binding), mu


def _required_fe(t, L, c, fl, R):
    """Smallest edge share giving split latency ``<= t`` (inf if unreachable)."""
    x = c * R
    cap = L * c / fl
    floor = L * c / (fl + x)
    with np.errstate(divide="ignore", invalid="ignore"):
        need = x * (t * fl - L * c) / (L * c - t * (fl + x))
    need = np.where(t >= cap, 0.0, need)
    return np.where(t <= floor, np.inf, need)


def minmax_oracle_allocation(rates, scenario: Scenario) -> tuple[Allocation, float]:
    """Exact min-max latency allocation by bisection on the latency target.

    For a target ``t`` each device's minimal edge share is available in closed
    form; ``t`` is feasible when those shares fit in the edge capacity.
    """
    R = np.asarray(rates, dtype=float)
    L, c, fl = task_arrays(scenario)
    fmax = scenario.fmax_cps

    lo = float(np.max(L * c / (fl + c * R)))
    hi = float(np.max(L * c / fl))
    if lo >= hi:
        fe = np.zeros_like(R)
        return Allocation(np.zeros_like(R), fe, binding=False), hi
    while (hi - lo) > ORACLE_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if _required_fe(mid, L, c, fl, R).sum() <= fmax:
            hi = mid
        else:
            lo = mid
    fe = _required_fe(hi, L, c, fl, R)
    ell = optimal_split(L, c, fl, fe, R)
    return Allocation(ell, fe, binding=True), float(np.max(split_latency(L, c, fl, fe, R)))


def evaluate_latency(scenario: Scenario, rates, allocation: Allocation) -> LatencyReport:
    R = np.asarray(rates, dtype=float)
    L, c, fl = task_arrays(scenario)
    local, edge = latency_parts(L, c, fl, allocation.fe, R, allocation.ell)
    total = np.maximum(local, edge)
    return LatencyReport(local, edge, total, float(np.max(total)), R)


def integerize_allocation(scenario: Scenario, rates, allocation: Allocation) -> Allocation:
    """Round every ``ell_k`` with :func:`integerize_split`."""
    R = np.asarray(rates, dtype=float)
    L, c, fl = task_arrays(scenario)
    ell = np.empty_like(allocation.ell)
    for k in range(len(ell)):
        def latency(x, k=k):
            local, edge = latency_parts(L[k], c[k], fl[k], allocation.fe[k], R[k], x)
            return max(float(local), float(edge))

        ell[k] = integerize_split(float(np.clip(allocation.ell[k], 0.0, L[k])), latency)
    return Allocation(ell, allocation.fe.copy(), allocation.binding)
