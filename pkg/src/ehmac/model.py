"""Domain types and per-slot physics of the energy-harvesting MAC.

Gains are normalized by the noise power, so ``power * gain`` is an SNR.
Batteries hold slot-normalized energy, i.e. the same units as power.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


class Mode(str, enum.Enum):
    TDT = "TDT"  # time-division: slot is either uplink or downlink, x == y
    FDT = "FDT"  # frequency-division: both links every slot, x and y independent


class DegenerateMultiplierError(ValueError):
    """A user with positive weight has a zero energy price (unbounded power)."""


@dataclass(frozen=True)
class SystemParams:
    n_users: int
    eta: float
    epsilon: float
    n0: float
    p_avg: float
    p_max: float
    path_loss_up: float = 1.0
    path_loss_down: float = 1.0
    mode: Mode = Mode.TDT
    b_max: float = math.inf
    eta_prime: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if int(self.n_users) != self.n_users or self.n_users < 1:
            raise ValueError(f"n_users must be a positive integer, got {self.n_users}")
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if not self.epsilon > 1.0:
            raise ValueError(f"epsilon must exceed 1, got {self.epsilon}")
        if not self.n0 > 0.0:
            raise ValueError(f"n0 must be positive, got {self.n0}")
        if not 0.0 < self.p_avg <= self.p_max:
            raise ValueError(f"need 0 < p_avg <= p_max, got {self.p_avg}, {self.p_max}")
        if not (self.path_loss_up > 0 and self.path_loss_down > 0):
            raise ValueError("path losses must be positive")
        if not self.b_max > 0:
            raise ValueError("b_max must be positive")
        object.__setattr__(self, "eta_prime", self.eta * self.n0 / self.epsilon)

    def with_mode(self, mode: Mode | str) -> "SystemParams":
        return replace(self, mode=Mode(mode))

    @classmethod
    def fig1(cls, mode: Mode | str = Mode.TDT) -> "SystemParams":
        """Two-user reference setup for the rate-region sweep."""
        return cls(n_users=2, eta=0.5, epsilon=5.0, n0=1e-5, p_avg=10.0, p_max=50.0,
                   path_loss_up=1e5, path_loss_down=1e5, mode=Mode(mode))


@dataclass(frozen=True)
class ChannelSample:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("x and y must be 1-D vectors of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("channel gains must be finite")
        if np.any(x < 0) or np.any(y < 0):
            raise ValueError("channel gains must be nonnegative")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def reciprocal(cls, x: Sequence[float]) -> "ChannelSample":
        x = np.asarray(x, dtype=float)
        return cls(x, x.copy())


@dataclass(frozen=True)
class Multipliers:
    lambda0: float
    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1:
            raise ValueError("lam must be a vector")
        if not (math.isfinite(self.lambda0) and np.all(np.isfinite(lam))):
            raise ValueError("multipliers must be finite")
        if self.lambda0 < 0 or np.any(lam < 0):
            raise ValueError("multipliers must be nonnegative")
        object.__setattr__(self, "lambda0", float(self.lambda0))
        object.__setattr__(self, "lam", lam)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.lambda0], self.lam])

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "Multipliers":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), v[1:].copy())

    def scaled(self, factor: float) -> "Multipliers":
        return Multipliers(self.lambda0 * factor, self.lam * factor)


@dataclass(frozen=True)
class Weights:
    """Rate priorities on the simplex and the induced decoding order.

    ``decode_order[0]`` is the user with the largest weight; it is decoded
    last and sees no interference. Ties go to the lower user index.
    """

    mu: np.ndarray
    decode_order: np.ndarray = field(init=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 1 or mu.size < 1:
            raise ValueError("mu must be a non-empty vector")
        if np.any(mu < 0) or np.any(mu > 1) or not np.all(np.isfinite(mu)):
            raise ValueError(f"mu entries must lie in [0, 1], got {mu}")
        if abs(mu.sum() - 1.0) > 1e-12:
            raise ValueError(f"mu must sum to 1, got {mu.sum()!r}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "decode_order", np.argsort(-mu, kind="stable"))

    @property
    def n_users(self) -> int:
        return self.mu.size

    def sorted_mu(self) -> np.ndarray:
        return self.mu[self.decode_order]

    def increments(self) -> np.ndarray:
        """``mu_n - mu_{n+1}`` in decode order, with ``mu_{N+1} = 0``."""
        s = self.sorted_mu()
        return s - np.append(s[1:], 0.0)

    @classmethod
    def two_user(cls, mu1: float) -> "Weights":
        mu1 = round(float(mu1), 12)
        return cls(np.array([mu1, 1.0 - mu1]))


@dataclass(frozen=True)
class SlotDecision:
    a: int
    p0: float
    p_d: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        if self.a not in (0, 1):
            raise ValueError("a must be 0 or 1")
        p_d = np.asarray(self.p_d, dtype=float)
        if np.any(p_d < 0) or self.p0 < 0:
            raise ValueError("powers must be nonnegative")
        object.__setattr__(self, "p_d", p_d)
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=float))


@dataclass(frozen=True)
class BatteryState:
    b: np.ndarray
    outage_count: np.ndarray
    slot_index: int = 0

    @classmethod
    def empty(cls, n_users: int, initial: float = 0.0) -> "BatteryState":
        return cls(np.full(n_users, float(initial)), np.zeros(n_users, dtype=np.int64), 0)


@dataclass(frozen=True)
class RatePoint:
    r_bar: np.ndarray
    mu: Weights
    m_slots: int

    def weighted(self) -> float:
        return weighted_sum_rate(self.r_bar, self.mu)


def harvested_power(params: SystemParams, sample: ChannelSample, decision: SlotDecision,
                    user: int) -> float:
    """Power stored into the battery of ``user`` during this slot."""
    if not 0 <= user < params.n_users:
        raise IndexError(f"user index {user} out of range for {params.n_users} users")
    if params.mode is Mode.TDT:
        return decision.a * params.eta * params.n0 * decision.p0 * float(sample.x[user])
    return params.eta * params.n0 * decision.p0 * float(sample.y[user])


def clip_transmit_power(params: SystemParams, battery_level: float, desired: float) -> float:
    return min(battery_level / params.epsilon, desired)


def transmit_powers(state: BatteryState, params: SystemParams, decision: SlotDecision) -> np.ndarray:
    """Powers actually radiated this slot after clipping by the battery."""
    uplink = params.mode is Mode.FDT or decision.a == 0
    if not uplink:
        return np.zeros(params.n_users)
    return np.array([clip_transmit_power(params, float(b), float(d))
                     for b, d in zip(state.b, decision.p_d)])


def battery_step(state: BatteryState, params: SystemParams, sample: ChannelSample,
                 decision: SlotDecision) -> BatteryState:
    p_out = transmit_powers(state, params, decision)
    uplink = params.mode is Mode.FDT or decision.a == 0
    b = state.b.copy()
    outage = state.outage_count.copy()
    for k in range(params.n_users):
        desired = float(decision.p_d[k]) if uplink else 0.0
        if desired > 0 and p_out[k] < desired:
            outage[k] += 1
        b[k] = state.b[k] + harvested_power(params, sample, decision, k) - params.epsilon * p_out[k]
        if b[k] > params.b_max:
            b[k] = params.b_max
        elif b[k] < 0:
            # only reachable through rounding in b - eps * (b / eps)
            b[k] = 0.0
    return BatteryState(b, outage, state.slot_index + 1)


def slot_rates(sample: ChannelSample, p_out: Sequence[float], weights: Weights) -> np.ndarray:
    """Per-user rates (bits/symbol) under successive interference cancellation."""
    p = np.asarray(p_out, dtype=float)
    return slot_rates_batch(sample.x[None, :], p[None, :], weights.decode_order)[0]


def slot_rates_batch(x: np.ndarray, p: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Vectorized :func:`slot_rates` over rows of ``x`` and ``p``.

    User ``order[j]`` sees interference from users ``order[:j]``.
    """
    busy = np.any(p > 0, axis=1)
    if not busy.all():
        rates = np.zeros(p.shape, order="F")
        if busy.any():
            rates[busy] = slot_rates_batch(x[busy], p[busy], order)
        return rates
    snr = p[:, order] * x[:, order]
    before = np.cumsum(snr, axis=1) - snr
    r_sorted = np.log1p(snr / (1.0 + before)) / math.log(2.0)
    rates = np.empty_like(r_sorted)
    rates[:, order] = r_sorted
    return rates


def weighted_sum_rate(rates: Sequence[float], weights: Weights) -> float:
    return float(np.dot(weights.mu, np.asarray(rates, dtype=float)))
