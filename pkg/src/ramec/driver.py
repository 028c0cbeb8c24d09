"""Alternating optimization, benchmark schemes and Monte-Carlo sweeps."""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .beamforming import bisection_beamforming, mmse_beamformers, rates_from_sinr, sinr_all
from .channel import (
    ChannelRealization,
    as_isotropic,
    boresight_deflections,
    random_deflections,
    realize_channel,
)
from .compute_alloc import (
    Allocation,
    evaluate_latency,
    integerize_allocation,
    kkt_edge_allocation,
    optimal_split,
    task_arrays,
)
from .deflection import optimize_deflections
from .scenario import Scenario, build_geometry, sample_device_angles

log = logging.getLogger(__name__)

SCHEMES = ("ra", "fixed", "isotropic", "random")
SWEEP_PARAMS = {"power": "power_dbm", "fmax": "fmax_cps", "devices": "K"}
AO_RTOL = 1e-3
AO_MAX_ITER = 50
RANDOMIZATION_SAMPLES = 32
BASE_COLUMNS = ["scheme", "param_name", "param_value", "trial", "seed", "tau_s", "iter_count", "wall_ms"]


@dataclass
class RunRecord:
    scheme: str
    trial: int
    seed: int
    param_name: str
    param_value: float
    tau: float
    D: np.ndarray
    R: np.ndarray
    ell: np.ndarray
    fe: np.ndarray
    iterations: int
    wall_ms: float
    converged: bool = True
    trace: list = field(default_factory=list)
    F: np.ndarray | None = None


@dataclass
class SweepSpec:
    parameter: str  # one of SWEEP_PARAMS
    values: Sequence[float]
    trials: int = 50
    schemes: Sequence[str] = SCHEMES

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}")
        if not len(self.values):
            raise ValueError("sweep needs at least one value")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")


def draw_trial(scenario: Scenario, seed: int) -> tuple[ChannelRealization, np.random.Generator]:
    """Device placement and fading for one seed; the generator continues from there."""
    rng = np.random.default_rng(seed)
    angles = sample_device_angles(rng, scenario.K)
    geometry = build_geometry(scenario, angles)
    return realize_channel(scenario, geometry, rng), rng


def _rates(scenario, real, F, W):
    gamma = sinr_all(W, real.channels(F), scenario.powers_w, scenario.noise_w)
    return rates_from_sinr(gamma, scenario.bandwidth_hz)


def _allocate(scenario, R, previous: Allocation | None) -> Allocation:
    """Closed-form allocation, falling back to the previous edge shares if those score better."""
    alloc, _ = kkt_edge_allocation(R, scenario)
    if previous is None:
        return alloc
    L, c, fl = task_arrays(scenario)
    keep = Allocation(optimal_split(L, c, fl, previous.fe, R), previous.fe.copy(), previous.binding)
    if evaluate_latency(scenario, R, keep).tau < evaluate_latency(scenario, R, alloc).tau:
        return keep
    return alloc


def alternate(
    scenario: Scenario,
    real: ChannelRealization,
    F0: np.ndarray,
    rng: np.random.Generator,
    optimize_F: bool = True,
    max_iter: int = AO_MAX_ITER,
    rtol: float = AO_RTOL,
):
    """Run the beamforming / deflection / allocation loop from ``F0``.

    Returns ``(F, W, allocation, rates, trace, iterations, converged)`` with a
    real-valued split; ``trace[i]`` is the worst-device latency after
    iteration ``i`` (``trace[0]`` is the initial point).
    """
    P, sigma2 = scenario.powers_w, scenario.noise_w
    F = np.array(F0, dtype=float)
    H = real.channels(F)
    W, _ = mmse_beamformers(H, P, sigma2)
    R = _rates(scenario, real, F, W)
    alloc = _allocate(scenario, R, None)
    trace = [evaluate_latency(scenario, R, alloc).tau]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        W_new, _ = bisection_beamforming(scenario, real.channels(F), alloc, rng, RANDOMIZATION_SAMPLES)
        F_new = F
        if optimize_F:
            F_new, _ = optimize_deflections(F, real, W_new, alloc, scenario)
        R_new = _rates(scenario, real, F_new, W_new)
        alloc_new = _allocate(scenario, R_new, alloc)
        tau = evaluate_latency(scenario, R_new, alloc_new).tau
        if tau > trace[-1]:
            # cannot happen for exact arithmetic; keep the previous iterate
            log.debug("iteration %d rejected: %.17g > %.17g", it, tau, trace[-1])
            trace.append(trace[-1])
            converged = True
            break
        F, W, R, alloc = F_new, W_new, R_new, alloc_new
        trace.append(tau)
        if abs(trace[-1] - trace[-2]) <= rtol * trace[-2]:
            converged = True
            break
    return F, W, alloc, R, trace, it, converged


def _finish(scheme, scenario, result, seed, trial, param_name, param_value, t0) -> RunRecord:
    F, W, alloc, R, trace, iterations, converged = result
    final = integerize_allocation(scenario, R, alloc)
    report = evaluate_latency(scenario, R, final)
    if not converged:
        log.warning("%s seed %d: no convergence in %d iterations", scheme, seed, iterations)
    return RunRecord(
        scheme=scheme,
        trial=trial,
        seed=seed,
        param_name=param_name,
        param_value=param_value,
        tau=report.tau,
        D=report.total,
        R=R,
        ell=final.ell,
        fe=final.fe,
        iterations=iterations,
        wall_ms=(time.perf_counter() - t0) * 1e3,
        converged=converged,
        trace=trace,
        F=F,
    )


def run_ao(
    scenario: Scenario,
    real: ChannelRealization,
    rng: np.random.Generator | None = None,
    *,
    seed: int = 0,
    trial: int = 0,
    param_name: str = "",
    param_value: float = math.nan,
) -> RunRecord:
    """Joint optimization of split, edge shares, beamformers and deflections."""
    t0 = time.perf_counter()
    rng = rng if rng is not None else np.random.default_rng(seed)
    result = alternate(scenario, real, boresight_deflections(real.N), rng, optimize_F=True)
    return _finish("ra", scenario, result, seed, trial, param_name, param_value, t0)


def run_benchmark(
    scenario: Scenario,
    real: ChannelRealization,
    scheme: str,
    rng: np.random.Generator | None = None,
    *,
    seed: int = 0,
    trial: int = 0,
    param_name: str = "",
    param_value: float = math.nan,
) -> RunRecord:
    """One of the comparison schemes; ``"ra"`` dispatches to :func:`run_ao`."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    meta = dict(seed=seed, trial=trial, param_name=param_name, param_value=param_value)
    if scheme == "ra":
        return run_ao(scenario, real, rng, **meta)
    t0 = time.perf_counter()
    F0 = boresight_deflections(real.N)
    if scheme == "isotropic":
        real = as_isotropic(real, scenario)
    elif scheme == "random":
        F0 = random_deflections(real.N, scenario.theta_max_rad, rng)
    result = alternate(scenario, real, F0, rng, optimize_F=False)
    return _finish(scheme, scenario, result, seed, trial, param_name, param_value, t0)


def run_trial(scenario: Scenario, scheme: str, trial: int, param_name: str = "", param_value: float = math.nan) -> RunRecord:
    """Fresh draws from ``base_seed + trial`` so schemes are paired by seed."""
    seed = scenario.base_seed + trial
    real, rng = draw_trial(scenario, seed)
    return run_benchmark(
        scenario, real, scheme, rng, seed=seed, trial=trial, param_name=param_name, param_value=param_value
    )


def _sweep_job(args):
    return run_trial(*args)


def sweep(spec: SweepSpec, base: Scenario, workers: int = 1) -> list[RunRecord]:
    field_name = SWEEP_PARAMS[spec.parameter]
    jobs = []
    for value in spec.values:
        v = int(value) if field_name == "K" else float(value)
        scenario = base.replace(**{field_name: v})
        for trial in range(spec.trials):
            for scheme in spec.schemes:
                jobs.append((scenario, scheme, trial, spec.parameter, float(value)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_job, jobs, chunksize=4))
    return [_sweep_job(j) for j in jobs]


def aggregate(records: Iterable[RunRecord]) -> list[dict]:
    """Mean and standard error of tau per (scheme, swept value)."""
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r.scheme, r.param_name, r.param_value), []).append(r.tau)
    out = []
    for (scheme, name, value), taus in groups.items():
        t = np.array(taus)
        sem = float(t.std(ddof=1) / math.sqrt(len(t))) if len(t) > 1 else 0.0
        out.append(dict(scheme=scheme, param_name=name, param_value=value, mean=float(t.mean()), sem=sem, n=len(t)))
    return out


def _fmt(x) -> str:
    return repr(float(x))


def write_csv(path, records: Sequence[RunRecord], with_aggregates: bool = True, timing: bool = True) -> None:
    """Tidy CSV: one row per run, then ``mean``/``sem`` rows per group.

    Per-device columns come in blocks ``D_k, R_k, ell_k, fe_k`` for k = 0..K-1,
    padded to the largest K present.
    """
    kmax = max((len(r.D) for r in records), default=0)
    header = list(BASE_COLUMNS)
    for k in range(kmax):
        header += [f"D_{k}", f"R_{k}", f"ell_{k}", f"fe_{k}"]
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in records:
                row = [
                    r.scheme,
                    r.param_name,
                    _fmt(r.param_value),
                    r.trial,
                    r.seed,
                    _fmt(r.tau),
                    r.iterations,
                    f"{r.wall_ms:.3f}" if timing else "",
                ]
                for k in range(kmax):
                    if k < len(r.D):
                        row += [_fmt(r.D[k]), _fmt(r.R[k]), _fmt(r.ell[k]), _fmt(r.fe[k])]
                    else:
                        row += ["", "", "", ""]
                w.writerow(row)
            if with_aggregates:
                for a in aggregate(records):
                    for stat in ("mean", "sem"):
                        row = [a["scheme"], a["param_name"], _fmt(a["param_value"]), stat, "", _fmt(a[stat]), "", ""]
                        w.writerow(row + [""] * (4 * kmax))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
