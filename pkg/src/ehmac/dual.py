"""Calibration of the energy and BS power prices.

Residual vectors use the same layout as :meth:`Multipliers.as_vector`:
index 0 is the BS average-power constraint, index ``n`` (1-based) is user
``n``'s energy balance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ehmac.allocation import decide_batch, decide_from_uplink, ehu_powers_batch
from ehmac.fading import FadingConfig, FadingStream, sample_block, stream_for
from ehmac.model import Mode, Multipliers, SystemParams, Weights, slot_rates_batch

log = logging.getLogger(__name__)

EVAL_CHUNK = 1 << 20


@dataclass(frozen=True)
class StreamAverages:
    spend: np.ndarray  # mean desired power per user, uplink slots only
    harvest: np.ndarray  # eta' * mean(p0 * gain) per user
    bs_power: float
    rates: np.ndarray  # mean planned rates (bits), computed with desired powers


def stream_averages(stream: FadingStream, weights: Weights, mult: Multipliers,
                    params: SystemParams) -> StreamAverages:
    d = decide_batch(stream.x, stream.y, weights, mult, params)
    g = stream.x if params.mode is Mode.TDT else stream.y
    rates = slot_rates_batch(stream.x, d.p_d, weights.decode_order)
    return StreamAverages(
        spend=stream.mean(d.p_d),
        harvest=params.eta_prime * stream.mean(d.p0[:, None] * g),
        bs_power=float(stream.mean(d.p0)),
        rates=stream.mean(rates),
    )


def residuals_from(avg: StreamAverages, params: SystemParams) -> np.ndarray:
    r = np.empty(avg.spend.size + 1)
    r[0] = (avg.bs_power - params.p_avg) / params.p_avg
    for n, (s, h) in enumerate(zip(avg.spend, avg.harvest), start=1):
        denom = h if h > 0 else (s if s > 0 else 1.0)
        r[n] = (s - h) / denom
    return r


def stream_residuals(stream: FadingStream, weights: Weights, mult: Multipliers,
                     params: SystemParams) -> np.ndarray:
    return residuals_from(stream_averages(stream, weights, mult, params), params)


def constraint_residuals(mult: Multipliers, weights: Weights, params: SystemParams,
                         cfg: FadingConfig, n_slots: int, start: int = 0) -> np.ndarray:
    """Normalized constraint residuals over slots ``start .. start + n_slots - 1``.

    Long streams are evaluated chunk by chunk, so memory stays bounded.
    """
    n = params.n_users
    spend = np.zeros(n)
    harvest = np.zeros(n)
    bs = 0.0
    pos = 0
    while pos < n_slots:
        take = min(EVAL_CHUNK, n_slots - pos)
        avg = stream_averages(sample_block(cfg, params, start + pos, take), weights, mult, params)
        spend += avg.spend * take
        harvest += avg.harvest * take
        bs += avg.bs_power * take
        pos += take
    total = StreamAverages(spend / n_slots, harvest / n_slots, bs / n_slots, np.zeros(n))
    return residuals_from(total, params)


def kkt_residuals(residuals: np.ndarray, mult: Multipliers) -> np.ndarray:
    """Residuals with complementary slackness: a zero price only needs ``r <= 0``."""
    r = np.asarray(residuals, dtype=float).copy()
    zero = mult.as_vector() == 0
    r[zero] = np.maximum(r[zero], 0.0)
    return r


@dataclass
class CalibrationReport:
    multipliers: Multipliers
    residuals: np.ndarray
    n_iterations: int
    n_sample_slots: int
    converged: bool
    tolerance: float = 1e-3
    weighted_rate: float = float("nan")
    log: list[dict] = field(default_factory=list, repr=False)

    @property
    def max_abs_residual(self) -> float:
        return float(np.max(np.abs(kkt_residuals(self.residuals, self.multipliers))))

    def to_dict(self, with_log: bool = True) -> dict:
        d = {
            "lambda0": self.multipliers.lambda0,
            "lam": self.multipliers.lam.tolist(),
            "residuals": self.residuals.tolist(),
            "n_iterations": self.n_iterations,
            "n_sample_slots": self.n_sample_slots,
            "converged": self.converged,
            "tolerance": self.tolerance,
            "weighted_rate": self.weighted_rate,
        }
        if with_log:
            d["log"] = self.log
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationReport":
        return cls(Multipliers(d["lambda0"], np.array(d["lam"], dtype=float)),
                   np.array(d["residuals"], dtype=float), int(d["n_iterations"]),
                   int(d["n_sample_slots"]), bool(d["converged"]), float(d["tolerance"]),
                   float(d["weighted_rate"]), list(d.get("log", [])))


def initial_multipliers(weights: Weights, params: SystemParams, cfg: FadingConfig) -> Multipliers:
    """Order-of-magnitude start placing both thresholds mid-range."""
    mean = cfg.mean_x if params.mode is Mode.TDT else cfg.mean_y
    lam = weights.mu / (params.eta_prime * params.p_avg * mean * params.n_users)
    return Multipliers(params.eta_prime * float(lam @ mean), lam)


def bs_price(q: np.ndarray, weights: np.ndarray | None, fraction: float) -> float:
    """Price putting the BS on in the top ``fraction`` (by probability) of slots.

    A slot is a downlink/BS-on slot when ``q > lambda0``. The price is placed
    midway between two distinct values of ``q`` so that the split is stable.
    Returns 0 when even a free BS would stay under ``fraction``. On a weighted
    (enumerated) law the cut is the largest one whose mass does not exceed
    ``fraction``.
    """
    if weights is None:
        n = q.size
        k = int(round(fraction * n))
        if k >= np.count_nonzero(q > 0):
            return 0.0
        if k == 0:
            top = float(q.max())
            return top + abs(top) + 1e-300
        part = -np.partition(-q, [k - 1, k])
        hi, lo = part[k - 1], part[k]
        if hi == lo:
            # tie across the split; fall back to the distinct-value walk below
            return bs_price(q, np.full(n, 1.0 / n), fraction)
        return float(0.5 * (hi + lo))
    order = np.argsort(-q, kind="stable")
    qs = q[order]
    mass = np.cumsum(weights[order])
    # candidate cuts sit between distinct values; cut j keeps qs[:j + 1] on
    last = np.append(np.flatnonzero(np.diff(qs) < 0), qs.size - 1)
    last = last[qs[last] > 0]
    top = float(qs[0])
    price = top + abs(top) + 1e-300  # BS never on
    # the BS limit is an inequality: take the largest cut that respects it
    for j in last:
        if mass[j] > fraction + 1e-12:
            break
        below = qs[j + 1] if j + 1 < qs.size else -math.inf
        price = 0.0 if below <= 0 else float(0.5 * (qs[j] + below))
    return price


class _Problem:
    """User residuals as a function of log energy prices.

    For every trial of the user prices the BS price is set directly so the BS
    constraint holds; only the N user components remain to be solved.
    """

    def __init__(self, stream: FadingStream, weights: Weights, params: SystemParams,
                 bs_fraction: float | None = None):
        self.stream = stream
        self.bs_fraction = params.p_avg / params.p_max if bs_fraction is None else bs_fraction
        self.weights = weights
        self.params = params
        self.free = weights.mu > 0
        self.evaluations = 0

    def lam(self, theta: np.ndarray) -> np.ndarray:
        lam = np.zeros(self.weights.n_users)
        lam[self.free] = np.exp(theta)
        return lam

    def evaluate(self, lam: np.ndarray, lambda0: float | None = None):
        self.evaluations += 1
        st, p = self.stream, self.params
        p_up, v_up = ehu_powers_batch(st.x, self.weights, lam)
        g = st.x if p.mode is Mode.TDT else st.y
        if lambda0 is None:
            q = p.eta_prime * (g @ lam)
            if p.mode is Mode.TDT:
                q = q - v_up / p.p_max
            lambda0 = bs_price(q, st.weights, self.bs_fraction)
        mult = Multipliers(lambda0, lam)
        d = decide_from_uplink(p_up, v_up, st.x, st.y, mult, p)
        rates = slot_rates_batch(st.x, d.p_d, self.weights.decode_order)
        avg = StreamAverages(st.mean(d.p_d), p.eta_prime * st.mean(d.p0[:, None] * g),
                             float(st.mean(d.p0)), st.mean(rates))
        r = residuals_from(avg, p)
        return mult, r, avg

    def __call__(self, theta: np.ndarray):
        mult, r, avg = self.evaluate(self.lam(theta))
        return r[1:][self.free], mult, r, avg


def _solve(prob: _Problem, theta: np.ndarray, tolerance: float, max_iter: int,
           step_const: float, history: list[dict]):
    f, mult, r, avg = prob(theta)
    it = 0

    def record(phase):
        history.append({"iteration": it, "phase": phase,
                        "multipliers": mult.as_vector().tolist(), "residuals": r.tolist()})

    def size(v):
        return float(np.max(np.abs(v))) if v.size else 0.0

    record("start")
    # damped multiplicative steps lam <- lam * exp(c / sqrt(t) * r) until no user is
    # saturated (never transmitting, or spending far beyond its harvest)
    # far from the root the residual saturates, so the step does not decay there
    # a component whose sign flips has jumped over its root, so its step is halved
    gain = np.full(theta.size, 2.0 * step_const)
    while it < max_iter and f.size and (np.any(f <= -0.9) or np.any(f >= 1.0)):
        theta = theta + gain * np.clip(f, -1.0, 1.0)
        prev = f
        f, mult, r, avg = prob(theta)
        gain = np.where(np.sign(f) * np.sign(prev) < 0, 0.5 * gain, gain)
        it += 1
        record("saturated")
    # Newton steps with a finite-difference Jacobian and backtracking
    h = 0.02
    c = step_const
    t = 1
    while it < max_iter and size(f) > tolerance:
        k = theta.size
        jac = np.empty((k, k))
        for j in range(k):
            e = theta.copy()
            e[j] += h
            jac[:, j] = (prob(e)[0] - f) / h
        step = np.clip(np.linalg.lstsq(jac, -f, rcond=None)[0], -1.0, 1.0)
        cur = size(f)
        alpha = 1.0
        accepted = False
        for _ in range(6):
            trial = prob(theta + alpha * step)
            if size(trial[0]) < cur:
                accepted = True
                break
            alpha *= 0.5
        it += 1
        if accepted:
            theta = theta + alpha * step
            f, mult, r, avg = trial
            record("newton")
        else:
            # the residual map is locally flat or stepped at this scale
            h = max(0.5 * h, 1e-4)
            theta = theta + c / math.sqrt(t) * np.clip(f, -1.0, 1.0)
            f, mult, r, avg = prob(theta)
            t += 1
            record("damped")
    return mult, r, avg, it


def calibrate_on_stream(stream: FadingStream, weights: Weights, params: SystemParams,
                        cfg: FadingConfig, tolerance: float = 1e-3, max_iter: int = 200,
                        start: Multipliers | None = None, step_const: float = 0.5) -> CalibrationReport:
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    init = initial_multipliers(weights, params, cfg) if start is None else start
    prob = _Problem(stream, weights, params)
    theta = np.log(np.maximum(init.lam[prob.free], 1e-300))
    history: list[dict] = []
    n_retry = 8
    retry_iter = max_iter // 20
    mult, r, avg, it = _solve(prob, theta, tolerance, max_iter - n_retry * retry_iter,
                              step_const, history)
    kkt = kkt_residuals(r, mult)
    converged = bool(np.max(np.abs(kkt)) <= tolerance)
    # a slot flipping between uplink and downlink moves a user's spend in a jump, which
    # on short samples can straddle the tolerance band; running the BS slightly under
    # its limit (still within tolerance) shifts the jumps
    for k in range(1, n_retry + 1):
        if converged or retry_iter == 0:
            break
        fraction = params.p_avg / params.p_max * (1.0 - 0.1 * k * tolerance)
        prob = _Problem(stream, weights, params, fraction)
        theta = np.log(np.maximum(mult.lam[prob.free], 1e-300))
        m2, r2, a2, i2 = _solve(prob, theta, tolerance, retry_iter, step_const, history)
        it += i2
        k2 = kkt_residuals(r2, m2)
        if np.max(np.abs(k2)) < np.max(np.abs(kkt)):
            mult, r, avg, kkt = m2, r2, a2, k2
            converged = bool(np.max(np.abs(kkt)) <= tolerance)
    log.debug("calibrated mu=%s mult=%s max|r|=%.3g converged=%s after %d iterations",
              weights.mu, mult.as_vector(), np.max(np.abs(kkt)), converged, it)
    return CalibrationReport(mult, r, it, len(stream), converged, tolerance,
                             float(weights.mu @ avg.rates), history)


def calibrate(weights: Weights, params: SystemParams, cfg: FadingConfig,
              tolerance: float = 1e-3, max_iter: int = 500, n_slots: int = 100_000,
              start: Multipliers | None = None) -> CalibrationReport:
    """Find prices zeroing all residuals on a frozen sample of the fading law.

    The sample is slots ``0 .. n_slots - 1`` of ``cfg``'s stream, or the exact
    enumerated law for the two-point test distribution.
    """
    stream = stream_for(cfg, params, n_slots)
    return calibrate_on_stream(stream, weights, params, cfg, tolerance, max_iter, start)


def calibrate_multistart(weights: Weights, params: SystemParams, cfg: FadingConfig,
                         scales=(1.0, 1e-3, 1e3), tolerance: float = 1e-3,
                         max_iter: int = 500, n_slots: int = 100_000):
    """Calibrate from several scaled starts.

    Returns the converged report with the largest weighted planned rate and
    the list of distinct fixed points found.
    """
    stream = stream_for(cfg, params, n_slots)
    base = initial_multipliers(weights, params, cfg)
    found: list[CalibrationReport] = []
    for s in scales:
        rep = calibrate_on_stream(stream, weights, params, cfg, tolerance, max_iter, base.scaled(s))
        if not rep.converged:
            continue
        v = rep.multipliers.as_vector()
        if all(np.max(np.abs(v - q.multipliers.as_vector()) / np.maximum(np.abs(v), 1e-300)) > 0.05
               for q in found):
            found.append(rep)
    if not found:
        return calibrate_on_stream(stream, weights, params, cfg, tolerance, max_iter), []
    best = max(found, key=lambda q: q.weighted_rate)
    return best, found
