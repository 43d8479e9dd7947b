"""Per-slot online allocation rules with fixed multipliers.

The users' powers come from the closed-form stationary points of the
per-slot Lagrangian, one candidate per activity subset; the BS radiates
either nothing or its peak power; in TDT each slot goes to whichever link
earns the larger Lagrangian value.

Lagrangian values here are in nats: the closed forms are exact stationary
points of ``sum_n (mu_n - mu_{n+1}) ln(1 + S_n) - sum_n lam_n P_n``, so the
multipliers are prices per nat. Reported rates are in bits.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ehmac.model import (
    ChannelSample,
    DegenerateMultiplierError,
    Mode,
    Multipliers,
    SlotDecision,
    SystemParams,
    Weights,
    slot_rates_batch,
)


@dataclass(frozen=True)
class ActivitySet:
    active: int  # bit k set <=> user k transmits
    powers: np.ndarray

    def users(self) -> list[int]:
        return [k for k in range(self.powers.size) if self.active >> k & 1]


@dataclass(frozen=True)
class DecisionBatch:
    """Decisions for a block of slots; arrays are indexed by slot."""

    a: np.ndarray
    p0: np.ndarray
    p_d: np.ndarray
    value: np.ndarray  # per-slot Lagrangian value (nats, without the lambda0 * p_avg constant)

    def __len__(self) -> int:
        return self.a.size

    def slot(self, i: int, rates: np.ndarray) -> SlotDecision:
        return SlotDecision(int(self.a[i]), float(self.p0[i]), self.p_d[i].copy(), rates)


@lru_cache(maxsize=64)
def _subsets(eligible: tuple[int, ...]) -> list[tuple[int, ...]]:
    out = []
    for r in range(1, len(eligible) + 1):
        out.extend(itertools.combinations(eligible, r))
    return out


def _check_prices(weights: Weights, lam: np.ndarray) -> None:
    bad = (weights.mu > 0) & (lam <= 0)
    if np.any(bad):
        users = np.flatnonzero(bad).tolist()
        raise DegenerateMultiplierError(f"users {users} have positive weight but zero energy price")


def uplink_value(x: np.ndarray, p: np.ndarray, weights: Weights, lam: np.ndarray) -> np.ndarray:
    """Uplink part of the per-slot Lagrangian for rows of gains ``x`` and powers ``p``."""
    o = weights.decode_order
    cum = np.cumsum(p[:, o] * x[:, o], axis=1)
    return np.log1p(cum) @ weights.increments() - p @ lam


def ehu_powers_batch(x: np.ndarray, weights: Weights, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Optimal desired powers and their uplink Lagrangian values, slot by slot.

    Every subset of users is tried with its closed-form powers; a subset is
    feasible when all its powers are strictly positive. The empty subset is
    always feasible with value 0 and wins ties.
    """
    lam = np.asarray(lam, dtype=float)
    _check_prices(weights, lam)
    # a user can only be active where x_n >= lam_n / mu_n
    live = np.any(x * weights.mu >= lam, axis=1)
    if not live.all():
        p_all = np.zeros(x.shape, order="F")
        v_all = np.zeros(x.shape[0])
        if live.any():
            p_all[live], v_all[live] = ehu_powers_batch(x[live], weights, lam)
        return p_all, v_all
    s, n = x.shape
    o = weights.decode_order
    mu_s = weights.sorted_mu()
    lam_s = lam[o]
    xs = x[:, o]
    best_p = np.zeros((s, n), order="F")
    best_v = np.zeros(s)
    eligible = tuple(j for j in range(n) if mu_s[j] > 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for sub in _subsets(eligible):
            last = sub[-1]
            # water levels T_m = 1 + SNR accumulated up to the m-th active user
            levels = [None] * len(sub)
            levels[-1] = mu_s[last] * xs[:, last] / lam_s[last]
            for m in range(len(sub) - 1):
                j, k = sub[m], sub[m + 1]
                levels[m] = (mu_s[j] - mu_s[k]) / (lam_s[j] / xs[:, j] - lam_s[k] / xs[:, k])
            p = np.zeros((s, n), order="F")
            prev = 1.0
            ok = np.ones(s, dtype=bool)
            for m, j in enumerate(sub):
                pj = (levels[m] - prev) / xs[:, j]
                ok &= np.isfinite(pj) & (pj > 0)
                p[:, j] = pj
                prev = levels[m]
            if not ok.any():
                continue
            p[~ok] = 0.0
            cum = np.cumsum(p * xs, axis=1)
            v = np.log1p(cum) @ weights.increments() - p @ lam_s
            take = ok & (v > best_v)
            best_v = np.where(take, v, best_v)
            best_p[take] = p[take]
    out = np.empty_like(best_p, order="F")
    out[:, o] = best_p
    return out, best_v


def ehu_powers(sample: ChannelSample, weights: Weights, mult: Multipliers) -> ActivitySet:
    p, _ = ehu_powers_batch(sample.x[None, :], weights, mult.lam)
    p = p[0]
    mask = sum(1 << k for k in range(p.size) if p[k] > 0)
    return ActivitySet(mask, p)


def bs_power_batch(g: np.ndarray, mult: Multipliers, params: SystemParams) -> np.ndarray:
    on = g @ mult.lam >= mult.lambda0 / params.eta_prime
    return np.where(on, params.p_max, 0.0)


def bs_power(sample: ChannelSample, mult: Multipliers, params: SystemParams,
             mode: Mode | None = None) -> float:
    """Peak power when the priced harvest beats the BS power price, else 0."""
    mode = params.mode if mode is None else Mode(mode)
    g = sample.x if mode is Mode.TDT else sample.y
    return float(bs_power_batch(g[None, :], mult, params)[0])


def decide_batch(x: np.ndarray, y: np.ndarray, weights: Weights, mult: Multipliers,
                 params: SystemParams) -> DecisionBatch:
    p_up, v_up = ehu_powers_batch(x, weights, mult.lam)
    return decide_from_uplink(p_up, v_up, x, y, mult, params)


def decide_from_uplink(p_up: np.ndarray, v_up: np.ndarray, x: np.ndarray, y: np.ndarray,
                       mult: Multipliers, params: SystemParams) -> DecisionBatch:
    """Complete the slot decisions once the uplink hypothesis is known.

    The uplink part does not depend on ``lambda0``, which lets the dual
    solver re-price the BS without recomputing user powers.
    """
    g = x if params.mode is Mode.TDT else y
    p0 = bs_power_batch(g, mult, params)
    v_down = p0 * (params.eta_prime * (g @ mult.lam) - mult.lambda0)
    if params.mode is Mode.TDT:
        # ties go to the uplink
        a = (v_up < v_down).astype(np.int8)
        up = a == 0
        return DecisionBatch(a, np.where(up, 0.0, p0), p_up * up[:, None],
                             np.where(up, v_up, v_down))
    return DecisionBatch(np.zeros(x.shape[0], dtype=np.int8), p0, p_up, v_up + v_down)


def _single(sample: ChannelSample, weights: Weights, mult: Multipliers,
            params: SystemParams) -> SlotDecision:
    d = decide_batch(sample.x[None, :], sample.y[None, :], weights, mult, params)
    rates = slot_rates_batch(sample.x[None, :], d.p_d, weights.decode_order)[0]
    return d.slot(0, rates)


def tdt_schedule(sample: ChannelSample, weights: Weights, mult: Multipliers,
                 params: SystemParams) -> SlotDecision:
    if params.mode is not Mode.TDT:
        raise ValueError("tdt_schedule needs TDT params")
    return _single(sample, weights, mult, params)


def fdt_decide(sample: ChannelSample, weights: Weights, mult: Multipliers,
               params: SystemParams) -> SlotDecision:
    if params.mode is not Mode.FDT:
        raise ValueError("fdt_decide needs FDT params")
    return _single(sample, weights, mult, params)


def lagrangian_density(sample: ChannelSample, decision: SlotDecision, weights: Weights,
                       mult: Multipliers, params: SystemParams) -> float:
    """Per-slot Lagrangian value of an arbitrary decision (nats)."""
    up = uplink_value(sample.x[None, :], decision.p_d[None, :], weights, mult.lam)[0]
    if params.mode is Mode.TDT:
        down = decision.p0 * (params.eta_prime * float(sample.x @ mult.lam) - mult.lambda0)
        return (1 - decision.a) * up + decision.a * down
    return up + decision.p0 * (params.eta_prime * float(sample.y @ mult.lam) - mult.lambda0)
