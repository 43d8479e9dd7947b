"""Rate-region sweeps over priority weights.

Each (weights, mode) point is calibrated once on the longest horizon's
slots and the resulting stationary policy is replayed for every horizon.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ehmac.dual import CalibrationReport, calibrate
from ehmac.fading import FadingConfig
from ehmac.model import Mode, Multipliers, SystemParams, Weights
from ehmac.oracle import BaselineRegion
from ehmac.simulator import EnsembleResult, TrajectoryResult, run_ensemble

log = logging.getLogger(__name__)


def mu_grid(n_points: int = 21) -> list[Weights]:
    """Evenly spaced two-user weights from ``mu_1 = 0`` to ``mu_1 = 1``."""
    if n_points < 1:
        raise ValueError("need at least one weight point")
    return [Weights.two_user(m) for m in np.linspace(0.0, 1.0, n_points)] if n_points > 1 \
        else [Weights.two_user(0.5)]


@dataclass
class SweepSpec:
    mu_points: list[Weights]
    m_slots_list: list[int]
    modes: list[Mode] = field(default_factory=lambda: [Mode.TDT, Mode.FDT])
    tolerance: float = 1e-3
    max_iter: int = 300
    n_runs: int = 1
    calib_slots: int | None = None  # default: the longest horizon

    def __post_init__(self):
        if not self.mu_points:
            raise ValueError("the sweep needs at least one weight vector")
        sizes = {w.n_users for w in self.mu_points}
        if len(sizes) != 1:
            raise ValueError("all weight vectors must have the same length")
        if not self.m_slots_list or any(m < 1 for m in self.m_slots_list):
            raise ValueError("horizons must be positive")
        if list(self.m_slots_list) != sorted(set(self.m_slots_list)):
            raise ValueError("horizons must be strictly increasing")
        if not self.modes:
            raise ValueError("the sweep needs at least one mode")
        self.modes = [Mode(m) for m in self.modes]
        if self.tolerance <= 0 or self.n_runs < 1 or self.max_iter < 0:
            raise ValueError("invalid tolerance, run count or iteration budget")

    @property
    def n_calib_slots(self) -> int:
        return int(self.calib_slots or max(self.m_slots_list))


@dataclass
class SweepPoint:
    mode: Mode
    weights: Weights
    m_slots: int
    result: EnsembleResult
    calibration: CalibrationReport

    @property
    def rates(self) -> np.ndarray:
        return self.result.rates

    @property
    def converged(self) -> bool:
        return self.calibration.converged


@dataclass
class RegionResult:
    points: list[SweepPoint]

    def select(self, mode: Mode | str, m_slots: int) -> list[SweepPoint]:
        mode = Mode(mode)
        return [p for p in self.points if p.mode is mode and p.m_slots == m_slots]

    def rates(self, mode: Mode | str, m_slots: int) -> np.ndarray:
        return np.array([p.rates for p in self.select(mode, m_slots)])

    def weighted_rates(self, mode: Mode | str, m_slots: int) -> np.ndarray:
        return np.array([p.result.weighted_rate for p in self.select(mode, m_slots)])

    def half_widths(self, mode: Mode | str, m_slots: int) -> np.ndarray:
        return np.array([p.result.half_width() for p in self.select(mode, m_slots)])

    @property
    def failed(self) -> list[SweepPoint]:
        return [p for p in self.points if not p.converged]


def _run_point(args) -> list[SweepPoint]:
    spec, params, cfg, mode, w = args
    p = params.with_mode(mode)
    rep = calibrate(w, p, cfg, spec.tolerance, spec.max_iter, spec.n_calib_slots)
    if not rep.converged:
        log.warning("mu=%s %s did not converge (max |r| = %.3g)", w.mu, mode.value,
                    rep.max_abs_residual)
    out = []
    for m in spec.m_slots_list:
        if spec.n_runs == 1:
            # the calibration stream itself, so policy and trajectory share one realization
            res = run_ensemble(w, rep.multipliers, p, cfg, m, seeds=[cfg.seed])
        else:
            res = run_ensemble(w, rep.multipliers, p, cfg, m, n_runs=spec.n_runs)
        out.append(SweepPoint(mode, w, m, res, rep))
    return out


def run_sweep(spec: SweepSpec, params: SystemParams, cfg: FadingConfig, jobs: int = 1) -> RegionResult:
    """Calibrate and simulate every (mode, weights) point of the sweep.

    Results are ordered by mode, then weights, then horizon, whatever ``jobs`` is.
    """
    if spec.mu_points[0].n_users != params.n_users:
        raise ValueError("weights and system params disagree on the number of users")
    tasks = [(spec, params, cfg, mode, w) for mode in spec.modes for w in spec.mu_points]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_point, tasks))
    else:
        chunks = [_run_point(t) for t in tasks]
    return RegionResult([p for chunk in chunks for p in chunk])


@dataclass
class GapReport:
    mu: np.ndarray
    region_rates: np.ndarray
    baseline_rates: np.ndarray
    gaps: np.ndarray  # per point and user, relative to the baseline

    @property
    def max_gap(self) -> float:
        return float(np.max(self.gaps)) if self.gaps.size else 0.0

    @property
    def mean_gap(self) -> float:
        return float(np.mean(self.gaps)) if self.gaps.size else 0.0


def relative_gaps(rates: np.ndarray, reference: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """``|rates - reference| / reference`` componentwise; a zero reference compares against ``floor``."""
    rates = np.asarray(rates, dtype=float)
    reference = np.asarray(reference, dtype=float)
    diff = np.abs(rates - reference)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(reference > 0, diff / np.where(reference > 0, reference, 1.0),
                       np.where(diff <= floor, 0.0, np.inf))
    return rel


def compare_to_baseline(region: RegionResult, baseline: BaselineRegion, mode: Mode | str = Mode.FDT,
                        m_slots: int | None = None, zero_floor: float = 0.0) -> GapReport:
    """Per-point, per-user relative gaps between a simulated frontier and a reference frontier."""
    mode = Mode(mode)
    horizons = sorted({p.m_slots for p in region.points if p.mode is mode})
    if not horizons:
        raise ValueError(f"no {mode.value} points in the region")
    m_slots = horizons[-1] if m_slots is None else m_slots
    pts = region.select(mode, m_slots)
    mu_r = np.array([p.weights.mu for p in pts])
    mu_b = baseline.mu()
    if mu_r.shape != mu_b.shape or not np.allclose(mu_r, mu_b, rtol=0, atol=1e-12):
        raise ValueError("region and baseline use different weight grids")
    r = np.array([p.rates for p in pts])
    b = baseline.rates()
    return GapReport(mu_r, r, b, relative_gaps(r, b, zero_floor))


def region_from_baseline(baseline: BaselineRegion, mode: Mode | str = Mode.FDT) -> RegionResult:
    """Wrap a reference frontier as a region, e.g. to compare it with itself."""
    pts = []
    for rp in baseline.points:
        n = rp.r_bar.size
        tr = TrajectoryResult(rp, np.zeros(n), 0.0, np.zeros(n), np.zeros(n), np.zeros(n), rp.r_bar)
        ens = EnsembleResult([tr], rp.r_bar, np.zeros(n), rp.weighted(), 0.0, np.zeros(n),
                             np.zeros(n), 0.0, 0.0)
        rep = CalibrationReport(Multipliers(0.0, np.zeros(n)), np.zeros(n + 1), 0, 0, True)
        pts.append(SweepPoint(Mode(mode), rp.mu, rp.m_slots, ens, rep))
    return RegionResult(pts)
