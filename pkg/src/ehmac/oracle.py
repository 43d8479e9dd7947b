"""Brute-force references for the closed-form rules and the calibrated pipeline.

Nothing here calls the closed-form allocator except the non-EH baseline,
which is by definition the same allocator without the BS. The per-slot grid
search and the tiny-instance LP only use the rate formula and the
constraints, so they check the allocation rules independently.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from ehmac.allocation import ehu_powers_batch
from ehmac.dual import _solve
from ehmac.fading import Distribution, FadingConfig, FadingStream, exact_law, stream_for
from ehmac.model import (
    ChannelSample,
    Mode,
    Multipliers,
    RatePoint,
    SlotDecision,
    SystemParams,
    Weights,
    slot_rates_batch,
)

LN2 = math.log(2.0)


def _rates_bits(x: np.ndarray, p: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Successive-cancellation rates for rows of powers ``p`` with gains ``x``."""
    rates = np.zeros(p.shape)
    interference = np.zeros(p.shape[0])
    for n in order:
        snr = p[:, n] * x[n]
        rates[:, n] = np.log2(1.0 + snr / (1.0 + interference))
        interference = interference + snr
    return rates


# ---------------------------------------------------------------------------
# per-slot grid search


@dataclass(frozen=True)
class GridSpec:
    """Power grid for the per-slot search.

    ``p_bound`` caps every user's power; ``None`` uses ``mu_n / lam_n - 1 / x_n``,
    which no maximizer can exceed (the marginal rate of user ``n`` is at
    most ``mu_n x_n / (1 + P_n x_n)`` and must reach ``lam_n``).
    """

    n_points: int = 201
    refinements: int = 3
    p_bound: float | None = None

    def __post_init__(self):
        if self.n_points < 3:
            raise ValueError("grid needs at least 3 points per axis")
        if self.refinements < 0:
            raise ValueError("refinements must be nonnegative")


def _uplink_grid_values(x: np.ndarray, pts: np.ndarray, weights: Weights, lam: np.ndarray):
    r = _rates_bits(x, pts, weights.decode_order)
    return LN2 * (r @ weights.mu) - pts @ lam


def _grid_uplink(x: np.ndarray, weights: Weights, lam: np.ndarray, spec: GridSpec):
    n = x.size
    if spec.p_bound is not None:
        hi = np.full(n, float(spec.p_bound))
    else:
        if np.any((weights.mu > 0) & (lam <= 0)):
            raise ValueError("a zero price with positive weight leaves powers unbounded")
        with np.errstate(divide="ignore"):
            hi = weights.mu / np.where(lam > 0, lam, 1.0) - 1.0 / x
        hi = np.where(weights.mu > 0, np.maximum(hi, 0.0), 0.0)
    hi = np.where(x > 0, hi, 0.0)
    lo = np.zeros(n)
    best_p, best_v = np.zeros(n), 0.0
    for _ in range(spec.refinements + 1):
        axes = [np.linspace(lo[k], hi[k], spec.n_points) if hi[k] > lo[k] else np.array([lo[k]])
                for k in range(n)]
        pts = np.array(list(itertools.product(*axes)))
        v = _uplink_grid_values(x, pts, weights, lam)
        k = int(np.argmax(v))
        if v[k] > best_v:
            best_p, best_v = pts[k].copy(), float(v[k])
        cell = np.array([(a[1] - a[0]) if a.size > 1 else 0.0 for a in axes])
        lo = np.maximum(best_p - 2 * cell, 0.0)
        hi = np.minimum(best_p + 2 * cell, hi)
    return best_p, best_v


def grid_lagrangian_max(sample: ChannelSample, weights: Weights, mult: Multipliers,
                        params: SystemParams, grid_spec: GridSpec = GridSpec()):
    """Maximize the per-slot Lagrangian density by exhaustive search.

    The value is in nats and excludes the constant ``lambda0 * p_avg``.
    Returns ``(SlotDecision, value)``.
    """
    p_up, v_up = _grid_uplink(sample.x, weights, mult.lam, grid_spec)
    g = sample.x if params.mode is Mode.TDT else sample.y
    candidates = []
    for p0 in (0.0, params.p_max):
        v_down = p0 * (params.eta_prime * float(g @ mult.lam) - mult.lambda0)
        if params.mode is Mode.TDT:
            candidates.append((0, 0.0, p_up, v_up))
            candidates.append((1, p0, np.zeros_like(p_up), v_down))
        else:
            candidates.append((0, p0, p_up, v_up + v_down))
    a, p0, p_d, value = max(candidates, key=lambda c: c[3])
    rates = _rates_bits(sample.x, p_d[None, :], weights.decode_order)[0]
    return SlotDecision(a, p0, p_d, rates), float(value)


def max_grid_gap(stream: FadingStream, weights: Weights, mult: Multipliers, params: SystemParams,
                 grid_spec: GridSpec = GridSpec()) -> float:
    """Worst relative Lagrangian difference between the closed-form rules and the grid search."""
    from ehmac.allocation import decide_batch, lagrangian_density

    d = decide_batch(stream.x, stream.y, weights, mult, params)
    worst = 0.0
    for i in range(len(stream)):
        s = stream.sample(i)
        closed = SlotDecision(int(d.a[i]), float(d.p0[i]), d.p_d[i], np.zeros(params.n_users))
        v_closed = lagrangian_density(s, closed, weights, mult, params)
        _, v_grid = grid_lagrangian_max(s, weights, mult, params, grid_spec)
        scale = max(abs(v_grid), abs(v_closed))
        if scale > 0:
            worst = max(worst, abs(v_grid - v_closed) / scale)
    return worst


# ---------------------------------------------------------------------------
# non-EH MAC baseline


@dataclass
class BaselineRegion:
    points: list[RatePoint]
    power_budget: np.ndarray
    converged: list[bool] = field(default_factory=list)
    multipliers: list[np.ndarray] = field(default_factory=list, repr=False)

    def rates(self) -> np.ndarray:
        return np.array([p.r_bar for p in self.points])

    def mu(self) -> np.ndarray:
        return np.array([p.mu.mu for p in self.points])


class _BudgetProblem:
    """User residuals ``(mean P_n - budget_n) / budget_n`` as a function of log prices."""

    def __init__(self, stream: FadingStream, weights: Weights, budget: np.ndarray):
        self.stream = stream
        self.weights = weights
        self.budget = budget
        self.free = (weights.mu > 0) & (budget > 0)

    def lam(self, theta):
        lam = np.ones(self.weights.n_users)
        lam[self.free] = np.exp(theta)
        return lam

    def __call__(self, theta):
        lam = self.lam(theta)
        st = self.stream
        x = st.x * self.free  # users without budget or weight never transmit
        p, _ = ehu_powers_batch(np.asfortranarray(x), self.weights, lam)
        spend = st.mean(p)
        rates = st.mean(slot_rates_batch(x, p, self.weights.decode_order))
        r = np.zeros(self.weights.n_users + 1)
        r[1:][self.free] = (spend[self.free] - self.budget[self.free]) / self.budget[self.free]
        return r[1:][self.free], Multipliers(0.0, lam), r, rates


def baseline_mac_region(weights_sweep, per_user_avg_power, cfg: FadingConfig,
                        params: SystemParams, n_slots: int = 1_000_000,
                        tolerance: float = 1e-4, max_iter: int = 200) -> BaselineRegion:
    """Ergodic MAC frontier under per-user average power budgets, no energy harvesting.

    For each weight vector the user prices are tuned until every user's mean
    power equals its budget on the frozen stream; rates are then averaged
    over the same stream.
    """
    budget = np.broadcast_to(np.asarray(per_user_avg_power, dtype=float), (params.n_users,)).copy()
    if np.any(budget < 0):
        raise ValueError("budgets must be nonnegative")
    stream = stream_for(cfg, params.with_mode(Mode.TDT), n_slots)
    region = BaselineRegion([], budget)
    for w in weights_sweep:
        prob = _BudgetProblem(stream, w, budget)
        if not prob.free.any():
            region.points.append(RatePoint(np.zeros(params.n_users), w, len(stream)))
            region.converged.append(True)
            region.multipliers.append(np.zeros(params.n_users))
            continue
        # single-user water-filling at mean power = budget has cutoff near the budget's scale
        theta = np.log(np.full(int(prob.free.sum()), 1.0))
        mult, r, rates, _ = _solve(prob, theta, tolerance, max_iter, 0.5, [])
        region.points.append(RatePoint(np.asarray(rates), w, len(stream)))
        region.converged.append(bool(np.max(np.abs(r)) <= tolerance))
        region.multipliers.append(mult.lam * prob.free)
    return region


def waterfilling_exponential(mean_gain: float, budget: float) -> tuple[float, float]:
    """Single-user ergodic water-filling over exponential power gains.

    Returns ``(cutoff, rate_bits)``. With cutoff ``c`` the power is
    ``1/c - 1/x`` above the cutoff, the mean power is
    ``exp(-c/m)/c - E1(c/m)/m`` and the rate is ``E1(c/m) / ln 2``.
    """
    if budget <= 0:
        return math.inf, 0.0
    m = float(mean_gain)

    def excess(log_c):
        c = math.exp(log_c)
        return math.exp(-c / m) / c - special.exp1(c / m) / m - budget

    log_c = optimize.brentq(excess, math.log(m) - 60.0, math.log(m) + 8.0, xtol=1e-14)
    c = math.exp(log_c)
    return c, float(special.exp1(c / m) / LN2)


def waterfilling_quadrature(mean_gain: float, cutoff: float) -> tuple[float, float]:
    """Mean power and rate of the cutoff policy by direct numerical integration."""
    m = float(mean_gain)
    pdf = lambda x: math.exp(-x / m) / m  # noqa: E731
    power = integrate.quad(lambda x: (1 / cutoff - 1 / x) * pdf(x), cutoff, math.inf,
                           epsabs=0, epsrel=1e-12, limit=200)[0]
    rate = integrate.quad(lambda x: math.log2(x / cutoff) * pdf(x), cutoff, math.inf,
                          epsabs=0, epsrel=1e-12, limit=200)[0]
    return power, rate


# ---------------------------------------------------------------------------
# exact optimum on enumerable fading


def single_state_tdt(params: SystemParams, gain: float) -> tuple[float, float]:
    """One user, one fading state, TDT: best downlink fraction and rate.

    A fraction ``alpha`` of slots is downlink at peak power and the rest
    spends the harvest evenly, giving ``(1 - alpha) log2(1 + A alpha / (1 - alpha))``
    with ``A = eta' * P_max * g**2``. The stationary point solves
    ``1 + (A - 1)/w = ln w`` for ``w = 1 + A u``, ``u = alpha / (1 - alpha)``.
    Returns ``(alpha, rate_bits)``.
    """
    a_coef = params.eta_prime * params.p_max * gain * gain
    if a_coef <= 0:
        return 0.0, 0.0
    w = optimize.brentq(lambda w: math.log(w) - 1.0 - (a_coef - 1.0) / w, 1.0 + 1e-15,
                        max(10.0, 10.0 * a_coef + 10.0), xtol=1e-15)
    u = (w - 1.0) / a_coef
    alpha = min(u / (1.0 + u), params.p_avg / params.p_max)
    rate = (1 - alpha) * math.log2(1.0 + a_coef * alpha / (1 - alpha))
    return alpha, rate


@dataclass
class TinySolution:
    rates: np.ndarray
    objective: float
    bs_power: float
    harvest: np.ndarray


def _tiny_lp(law: FadingStream, weights: Weights, params: SystemParams, n_points: int,
             rounds: int) -> TinySolution:
    from scipy.optimize import linprog

    n = params.n_users
    tdt = params.mode is Mode.TDT
    states = len(law)
    prob = law.weights
    g_down = law.x if tdt else law.y
    # no stationary point can put more than the whole harvest into one state
    bound = params.eta_prime * params.p_avg * float(g_down.max()) * n / float(prob.min())
    # a zero-weight user is decoded first and interferes with nobody, so zero power is optimal
    axes = [np.linspace(0.0, bound, n_points) if weights.mu[k] > 0 else np.zeros(1) for k in range(n)]
    grids = [np.array(list(itertools.product(*axes))) for _ in range(states)]
    for rnd in range(rounds + 1):
        # columns: per state, one BS-on weight then one weight per power vector
        cols_obj, cols_state, cols_energy, cols_bs, kinds = [], [], [], [], []
        for s in range(states):
            cols_obj.append(0.0)
            cols_state.append(s)
            cols_energy.append(-params.eta_prime * params.p_max * g_down[s])
            cols_bs.append(params.p_max)
            kinds.append((s, None))
            r = _rates_bits(law.x[s], grids[s], weights.decode_order)
            for k in range(grids[s].shape[0]):
                cols_obj.append(float(r[k] @ weights.mu))
                cols_state.append(s)
                cols_energy.append(grids[s][k].copy())
                cols_bs.append(0.0)
                kinds.append((s, k))
        m = len(cols_obj)
        c = -np.asarray(cols_obj)
        a_ub = np.zeros((n + 1, m))
        for j, e in enumerate(cols_energy):
            a_ub[:n, j] = e
        a_ub[n] = cols_bs
        b_ub = np.concatenate([np.zeros(n), [params.p_avg]])
        a_eq = np.zeros((states, m))
        st_idx = np.asarray(cols_state)
        if tdt:
            # BS-on and uplink share the slot
            a_eq[st_idx, np.arange(m)] = 1.0
            b_eq = prob
            bounds = [(0, None)] * m
        else:
            # the BS-on weight is a separate fraction of the state, uplink powers mix freely
            for j, (s, k) in enumerate(kinds):
                if k is not None:
                    a_eq[s, j] = 1.0
            b_eq = prob
            bounds = [(0, float(prob[s])) if k is None else (0, None) for s, k in kinds]
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds,
                      method="highs")
        if res.status != 0:
            raise RuntimeError(f"tiny-instance LP failed: {res.message}")
        wts = res.x
        if rnd == rounds:
            break
        # zoom into the support of the solution in every state
        new = []
        for s in range(states):
            used = [k for j, (t, k) in enumerate(kinds) if t == s and k is not None and wts[j] > 1e-12]
            pts = grids[s][used] if used else np.zeros((1, n))
            cell = _cell(grids[s])
            lo = np.maximum(pts.min(axis=0) - 2 * cell, 0.0)
            hi = pts.max(axis=0) + 2 * cell
            axes_all = [np.linspace(lo[d], hi[d], n_points) if hi[d] > lo[d] else lo[d:d + 1]
                        for d in range(n)]
            fine = np.array(list(itertools.product(*axes_all)))
            new.append(np.unique(np.vstack([pts, fine]), axis=0))
        grids = new
    rates = np.zeros(n)
    harvest = np.zeros(n)
    bs = 0.0
    for j, (s, k) in enumerate(kinds):
        if k is None:
            bs += wts[j] * params.p_max
            harvest += wts[j] * params.eta_prime * params.p_max * g_down[s]
        else:
            rates += wts[j] * _rates_bits(law.x[s], grids[s][k][None, :], weights.decode_order)[0]
    return TinySolution(rates, float(-res.fun), bs, harvest)


def _cell(grid: np.ndarray) -> np.ndarray:
    out = np.zeros(grid.shape[1])
    for d in range(grid.shape[1]):
        u = np.unique(grid[:, d])
        out[d] = np.min(np.diff(u)) if u.size > 1 else 0.0
    return out


def exhaustive_region_tiny(params: SystemParams, two_point_cfg: FadingConfig, weights_sweep,
                           n_points: int = 41, rounds: int = 4) -> BaselineRegion:
    """Exact optimal frontier for a two-point fading law with few users.

    Every joint fading state gets a probability-weighted mixture of actions:
    BS on at peak power, or the users transmitting one of the grid power
    vectors. The mixture weights solve an LP with the exact expected energy
    and BS power constraints; the grid is then zoomed around the support and
    the LP re-solved.
    """
    if two_point_cfg.distribution is not Distribution.TWO_POINT:
        raise ValueError("the exhaustive solver needs the two-point test law")
    if params.n_users > 2:
        raise ValueError("the exhaustive solver supports at most 2 users")
    law = exact_law(two_point_cfg, params)
    region = BaselineRegion([], np.zeros(params.n_users))
    for w in weights_sweep:
        sol = _tiny_lp(law, w, params, n_points, rounds)
        region.points.append(RatePoint(sol.rates, w, 0))
        region.converged.append(True)
        region.multipliers.append(sol.harvest)
    return region
