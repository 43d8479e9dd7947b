"""Finite-horizon trajectories with real battery dynamics.

Decisions are computed for the whole horizon at once (the online rules only
look at the current slot's gains). Only the battery recursion is
sequential, and each user's battery is independent of the others', so the
clipping pass walks the slots where a user wants to transmit and adds the
harvest accumulated in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ehmac.allocation import decide_batch
from ehmac.fading import FadingConfig, sample_block
from ehmac.model import Mode, Multipliers, RatePoint, SystemParams, Weights, slot_rates_batch

Z95 = 1.959963984540054


@dataclass
class TrajectoryResult:
    rate_point: RatePoint
    outage_fraction: np.ndarray
    mean_bs_power: float
    mean_harvest: np.ndarray  # battery inflow per slot
    mean_spend: np.ndarray  # battery outflow per slot (epsilon * radiated power)
    final_battery: np.ndarray
    planned_rates: np.ndarray  # same trajectory, rates from desired powers
    seed: int = 0
    weighted_rate_se: float = 0.0  # batch-means standard error of the weighted rate
    arrays: dict | None = field(default=None, repr=False)

    @property
    def weighted_rate(self) -> float:
        return self.rate_point.weighted()


def clip_by_battery(harvest: np.ndarray, desired: np.ndarray, epsilon: float,
                    b0: float = 0.0, b_max: float = math.inf):
    """Run one user's battery through a horizon.

    Returns radiated powers, the outage mask and the final battery level.
    """
    m = harvest.size
    p_out = np.zeros(m)
    outage = np.zeros(m, dtype=bool)
    cum = np.concatenate([[0.0], np.cumsum(harvest)])
    b = float(b0)
    last = 0
    h = harvest.tolist()
    d = desired.tolist()
    for t in np.flatnonzero(desired > 0).tolist():
        b = min(b_max, b + (cum[t] - cum[last]))
        p = min(b / epsilon, d[t])
        if p < d[t]:
            outage[t] = True
        p_out[t] = p
        b = min(b_max, max(0.0, b + h[t] - epsilon * p))
        last = t + 1
    b = min(b_max, b + (cum[m] - cum[last]))
    return p_out, outage, b


def battery_trace(harvest: np.ndarray, p_out: np.ndarray, epsilon: float,
                  b0: float = 0.0, b_max: float = math.inf) -> np.ndarray:
    """Battery level at the end of every slot, replayed slot by slot."""
    out = np.empty(harvest.size)
    b = float(b0)
    for t, (h, p) in enumerate(zip(harvest.tolist(), p_out.tolist())):
        b = min(b_max, max(0.0, b + h - epsilon * p))
        out[t] = b
    return out


def batch_means_se(series: np.ndarray, n_batches: int = 100) -> float:
    """Standard error of the mean of a per-slot series from contiguous batch means."""
    m = series.size
    k = min(n_batches, m)
    if k < 2:
        return 0.0
    means = np.array([b.mean() for b in np.array_split(series, k)])
    return float(means.std(ddof=1) / math.sqrt(k))


def run_trajectory(weights: Weights, mult: Multipliers, params: SystemParams, cfg: FadingConfig,
                   m_slots: int, b0: float = 0.0, keep_arrays: bool = False) -> TrajectoryResult:
    """Apply the online rules for ``m_slots`` slots starting from batteries at ``b0``."""
    if m_slots < 1:
        raise ValueError("m_slots must be at least 1")
    n = params.n_users
    stream = sample_block(cfg, params, 0, m_slots)
    d = decide_batch(stream.x, stream.y, weights, mult, params)
    g = stream.x if params.mode is Mode.TDT else stream.y
    harvest = params.eta * params.n0 * d.p0[:, None] * g
    p_out = np.zeros((m_slots, n))
    outage = np.zeros((m_slots, n), dtype=bool)
    final = np.zeros(n)
    for k in range(n):
        p_out[:, k], outage[:, k], final[k] = clip_by_battery(
            harvest[:, k], d.p_d[:, k], params.epsilon, b0, params.b_max)
    rates = slot_rates_batch(stream.x, p_out, weights.decode_order)
    planned = slot_rates_batch(stream.x, d.p_d, weights.decode_order)
    arrays = None
    if keep_arrays:
        battery = np.column_stack([battery_trace(harvest[:, k], p_out[:, k], params.epsilon,
                                                 b0, params.b_max) for k in range(n)])
        arrays = {"x": stream.x, "y": stream.y, "a": d.a, "p0": d.p0, "p_d": d.p_d,
                  "p_out": p_out, "harvest": harvest, "battery": battery, "rates": rates,
                  "outage": outage}
    return TrajectoryResult(
        rate_point=RatePoint(rates.mean(axis=0), weights, m_slots),
        outage_fraction=outage.mean(axis=0),
        mean_bs_power=float(d.p0.mean()),
        mean_harvest=harvest.mean(axis=0),
        mean_spend=params.epsilon * p_out.mean(axis=0),
        final_battery=final,
        planned_rates=planned.mean(axis=0),
        seed=cfg.seed,
        weighted_rate_se=batch_means_se(rates @ weights.mu),
        arrays=arrays,
    )


@dataclass
class EnsembleResult:
    runs: list[TrajectoryResult]
    rates: np.ndarray
    rates_se: np.ndarray
    weighted_rate: float
    weighted_rate_se: float
    outage_fraction: np.ndarray
    outage_se: np.ndarray
    mean_bs_power: float
    mean_bs_power_se: float

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    def half_width(self, z: float = Z95) -> float:
        """Confidence half-width of the weighted rate.

        A single run falls back to its batch-means standard error.
        """
        if self.n_runs == 1:
            return z * self.runs[0].weighted_rate_se
        return z * self.weighted_rate_se


def _mean_se(values: np.ndarray):
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=0)
    if values.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, values.std(axis=0, ddof=1) / math.sqrt(values.shape[0])


def ensemble_seeds(base_seed: int, n_runs: int) -> list[int]:
    return [base_seed + k for k in range(n_runs)]


def run_ensemble(weights: Weights, mult: Multipliers, params: SystemParams, cfg: FadingConfig,
                 m_slots: int, n_runs: int = 1, seeds: list[int] | None = None,
                 b0: float = 0.0) -> EnsembleResult:
    """Independent trajectories with distinct seeds; mean and standard error per metric."""
    if seeds is None:
        if n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        seeds = ensemble_seeds(cfg.seed, n_runs)
    if len(seeds) < 1:
        raise ValueError("need at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ValueError("ensemble seeds must be distinct")
    runs = [run_trajectory(weights, mult, params, cfg.with_seed(s), m_slots, b0) for s in seeds]
    rates, rates_se = _mean_se([r.rate_point.r_bar for r in runs])
    wr, wr_se = _mean_se([r.weighted_rate for r in runs])
    out, out_se = _mean_se([r.outage_fraction for r in runs])
    bs, bs_se = _mean_se([r.mean_bs_power for r in runs])
    return EnsembleResult(runs, rates, rates_se, float(wr), float(wr_se), out, out_se,
                          float(bs), float(bs_se))
