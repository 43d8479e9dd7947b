"""Seeded block-fading gain streams.

Every slot's gains are a pure function of ``(seed, slot)``: slots are grouped
into fixed-size chunks and chunk ``k`` is drawn from its own Philox stream
keyed by ``(seed, k)``. Any slot range therefore reproduces bit-for-bit,
independent of how it is requested.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, replace

import numpy as np

from ehmac.model import ChannelSample, Mode, SystemParams

CHUNK_SLOTS = 1 << 16


class Distribution(str, enum.Enum):
    EXPONENTIAL = "Exponential"
    TWO_POINT = "TwoPointTest"


@dataclass(frozen=True)
class FadingConfig:
    seed: int
    mean_x: np.ndarray
    mean_y: np.ndarray
    distribution: Distribution = Distribution.EXPONENTIAL
    # TwoPointTest only: gains are ``support`` values scaled by nothing; means are derived
    support: tuple[float, float] = (0.5, 2.0)
    probs: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        object.__setattr__(self, "distribution", Distribution(self.distribution))
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))
        if self.distribution is Distribution.TWO_POINT:
            if len(self.support) != 2 or len(self.probs) != 2:
                raise ValueError("two-point law needs two support points and two probabilities")
            if min(self.support) < 0 or min(self.probs) < 0 or abs(sum(self.probs) - 1.0) > 1e-12:
                raise ValueError("invalid two-point law")
            m = float(np.dot(self.support, self.probs))
            n = np.asarray(self.mean_x).size
            object.__setattr__(self, "mean_x", np.full(n, m))
            object.__setattr__(self, "mean_y", np.full(n, m))
        mx = np.asarray(self.mean_x, dtype=float)
        my = np.asarray(self.mean_y, dtype=float)
        if mx.shape != my.shape or mx.ndim != 1:
            raise ValueError("mean_x and mean_y must be vectors of equal length")
        if np.any(mx <= 0) or np.any(my <= 0):
            raise ValueError("mean gains must be positive")
        object.__setattr__(self, "mean_x", mx)
        object.__setattr__(self, "mean_y", my)

    @classmethod
    def from_params(cls, params: SystemParams, seed: int = 0) -> "FadingConfig":
        """Exponential power gains with means ``1/(N0 * PL)``."""
        n = params.n_users
        return cls(seed=seed,
                   mean_x=np.full(n, 1.0 / (params.n0 * params.path_loss_up)),
                   mean_y=np.full(n, 1.0 / (params.n0 * params.path_loss_down)))

    @classmethod
    def two_point(cls, n_users: int, support=(0.5, 2.0), probs=(0.5, 0.5),
                  seed: int = 0) -> "FadingConfig":
        return cls(seed=seed, mean_x=np.ones(n_users), mean_y=np.ones(n_users),
                   distribution=Distribution.TWO_POINT,
                   support=tuple(float(s) for s in support), probs=tuple(float(p) for p in probs))

    def with_seed(self, seed: int) -> "FadingConfig":
        return replace(self, seed=int(seed))

    @property
    def n_users(self) -> int:
        return self.mean_x.size


@dataclass(frozen=True)
class FadingStream:
    """A block of slots, optionally with probability weights per row.

    ``weights is None`` means a plain Monte Carlo stream (each row 1/S).
    Weighted streams represent an enumerated discrete law exactly.
    """

    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray | None = None

    def __len__(self) -> int:
        return self.x.shape[0]

    def mean(self, values: np.ndarray) -> np.ndarray:
        if self.weights is None:
            return values.mean(axis=0)
        return np.tensordot(self.weights, values, axes=(0, 0))

    def sample(self, i: int) -> ChannelSample:
        return ChannelSample(self.x[i], self.y[i])


def _chunk(cfg: FadingConfig, k: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, k])))
    n = cfg.n_users
    if cfg.distribution is Distribution.EXPONENTIAL:
        g = rng.standard_exponential((CHUNK_SLOTS, 2 * n))
        g[:, :n] *= cfg.mean_x
        g[:, n:] *= cfg.mean_y
        return g
    u = rng.random((CHUNK_SLOTS, 2 * n))
    lo, hi = cfg.support
    return np.where(u < cfg.probs[0], lo, hi)


def sample_block(cfg: FadingConfig, params: SystemParams, start: int, count: int) -> FadingStream:
    """Gains for slots ``start, ..., start + count - 1``."""
    if count < 0 or start < 0:
        raise ValueError("start and count must be nonnegative")
    if params.n_users != cfg.n_users:
        raise ValueError("fading config and system params disagree on the number of users")
    n = cfg.n_users
    out = np.empty((count, 2 * n))
    pos = 0
    while pos < count:
        slot = start + pos
        k, off = divmod(slot, CHUNK_SLOTS)
        take = min(CHUNK_SLOTS - off, count - pos)
        out[pos:pos + take] = _chunk(cfg, k)[off:off + take]
        pos += take
    x = out[:, :n]
    y = x.copy() if params.mode is Mode.TDT else out[:, n:].copy()
    return FadingStream(np.asfortranarray(x), np.asfortranarray(y))


def sample_slot(cfg: FadingConfig, params: SystemParams, slot: int) -> ChannelSample:
    s = sample_block(cfg, params, slot, 1)
    return ChannelSample(s.x[0], s.y[0])


def empirical_mean_gain(cfg: FadingConfig, params: SystemParams, n_slots: int) -> np.ndarray:
    if n_slots < 1:
        raise ValueError("n_slots must be at least 1")
    total = np.zeros(cfg.n_users)
    pos = 0
    while pos < n_slots:
        take = min(1 << 20, n_slots - pos)
        total += sample_block(cfg, params, pos, take).x.sum(axis=0)
        pos += take
    return total / n_slots


def exact_law(cfg: FadingConfig, params: SystemParams) -> FadingStream:
    """Enumerate the joint gain states of a two-point law with their probabilities."""
    if cfg.distribution is not Distribution.TWO_POINT:
        raise ValueError("only the two-point test law is enumerable")
    n = cfg.n_users
    states = list(itertools.product(range(2), repeat=n))
    sup = np.asarray(cfg.support)
    pr = np.asarray(cfg.probs)
    gx = np.array([sup[list(s)] for s in states])
    px = np.array([np.prod(pr[list(s)]) for s in states])
    if params.mode is Mode.TDT:
        return FadingStream(gx, gx.copy(), px)
    ix, iy = np.meshgrid(np.arange(len(states)), np.arange(len(states)), indexing="ij")
    ix, iy = ix.ravel(), iy.ravel()
    return FadingStream(gx[ix], gx[iy], px[ix] * px[iy])


def stream_for(cfg: FadingConfig, params: SystemParams, n_slots: int, start: int = 0) -> FadingStream:
    """Calibration stream: the exact law when enumerable, else Monte Carlo slots."""
    if cfg.distribution is Distribution.TWO_POINT:
        return exact_law(cfg, params)
    return sample_block(cfg, params, start, n_slots)
