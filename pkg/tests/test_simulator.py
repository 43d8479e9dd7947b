import numpy as np
import pytest

from ehmac.allocation import decide_batch
from ehmac.fading import FadingConfig, sample_block
from ehmac.model import (
    BatteryState,
    Mode,
    Multipliers,
    SlotDecision,
    SystemParams,
    Weights,
    battery_step,
)
from ehmac.simulator import (
    batch_means_se,
    battery_trace,
    clip_by_battery,
    ensemble_seeds,
    run_ensemble,
    run_trajectory,
)


def test_clip_by_battery_small_case():
    harvest = np.array([1.0, 0.0, 0.0, 2.0, 0.0])
    desired = np.array([0.0, 0.3, 0.3, 0.0, 1.0])
    p, out, b = clip_by_battery(harvest, desired, 2.0)
    assert p.tolist() == pytest.approx([0.0, 0.3, 0.2, 0.0, 1.0])
    assert out.tolist() == [False, False, True, False, False]
    assert b == pytest.approx(0.0)


def _slot_by_slot(params, stream, d):
    state = BatteryState.empty(params.n_users)
    p_out = []
    for i in range(len(stream)):
        dec = SlotDecision(int(d.a[i]), float(d.p0[i]), d.p_d[i], np.zeros(params.n_users))
        from ehmac.model import transmit_powers
        p_out.append(transmit_powers(state, params, dec))
        state = battery_step(state, params, stream.sample(i), dec)
    return np.array(p_out), state


@pytest.mark.parametrize("mode", [Mode.TDT, Mode.FDT])
def test_fast_clipping_matches_reference_recursion(mode):
    p = SystemParams.fig1(mode)
    cfg = FadingConfig.from_params(p, seed=4)
    w = Weights.two_user(0.4)
    mult = Multipliers(1e-8, np.array([0.03, 0.02]))
    m = 3000
    tr = run_trajectory(w, mult, p, cfg, m, keep_arrays=True)
    stream = sample_block(cfg, p, 0, m)
    d = decide_batch(stream.x, stream.y, w, mult, p)
    ref_p, state = _slot_by_slot(p, stream, d)
    assert np.allclose(tr.arrays["p_out"], ref_p, rtol=1e-12, atol=1e-15)
    assert np.allclose(tr.final_battery, state.b, rtol=1e-9, atol=1e-15)
    assert np.allclose(tr.arrays["battery"][-1], state.b, rtol=1e-9, atol=1e-15)
    assert np.array_equal(tr.outage_fraction * m, state.outage_count)


def test_energy_conservation():
    p = SystemParams.fig1(Mode.FDT)
    cfg = FadingConfig.from_params(p, seed=2)
    mult = Multipliers(1e-8, np.array([0.03, 0.03]))
    tr = run_trajectory(Weights.two_user(0.5), mult, p, cfg, 20_000)
    # start empty: everything harvested is spent or still stored
    assert np.allclose((tr.mean_harvest - tr.mean_spend) * 20_000, tr.final_battery, rtol=1e-9)


def test_batch_means_se():
    assert batch_means_se(np.ones(1000)) == 0.0
    x = np.repeat(np.arange(10.0), 10)
    means = np.arange(10.0)
    assert batch_means_se(x, 10) == pytest.approx(means.std(ddof=1) / np.sqrt(10))


def test_battery_trace():
    assert battery_trace(np.array([1.0, 0.0, 2.0]), np.array([0.0, 0.25, 0.0]), 2.0).tolist() \
        == [1.0, 0.5, 2.5]


def test_ensemble(fig1_fdt):
    cfg = FadingConfig.from_params(fig1_fdt, seed=10)
    mult = Multipliers(1e-8, np.array([0.03, 0.03]))
    ens = run_ensemble(Weights.two_user(0.5), mult, fig1_fdt, cfg, 2000, n_runs=3)
    assert [r.seed for r in ens.runs] == ensemble_seeds(10, 3) == [10, 11, 12]
    assert ens.rates == pytest.approx(np.mean([r.rate_point.r_bar for r in ens.runs], axis=0))
    assert ens.half_width() > 0
    with pytest.raises(ValueError):
        run_ensemble(Weights.two_user(0.5), mult, fig1_fdt, cfg, 10, seeds=[1, 1])


def test_trajectory_is_reproducible(fig1_tdt):
    cfg = FadingConfig.from_params(fig1_tdt, seed=99)
    mult = Multipliers(1e-8, np.array([0.03, 0.03]))
    a = run_trajectory(Weights.two_user(0.3), mult, fig1_tdt, cfg, 5000, keep_arrays=True)
    b = run_trajectory(Weights.two_user(0.3), mult, fig1_tdt, cfg, 5000, keep_arrays=True)
    for k in a.arrays:
        assert a.arrays[k].tobytes() == b.arrays[k].tobytes()


@pytest.mark.parametrize("mode", [Mode.TDT, Mode.FDT])
def test_cold_start_single_slot_has_no_rate(mode):
    p = SystemParams.fig1(mode)
    cfg = FadingConfig.from_params(p, seed=0)
    tr = run_trajectory(Weights.two_user(0.5), Multipliers(1e-8, np.array([1e-3, 1e-3])), p, cfg, 1)
    assert np.all(tr.rate_point.r_bar == 0)


def test_single_run_ensemble_equals_trajectory(fig1_fdt):
    cfg = FadingConfig.from_params(fig1_fdt, seed=6)
    mult = Multipliers(1e-8, np.array([0.03, 0.03]))
    w = Weights.two_user(0.5)
    ens = run_ensemble(w, mult, fig1_fdt, cfg, 4000, n_runs=1)
    tr = run_trajectory(w, mult, fig1_fdt, cfg, 4000)
    assert ens.rates.tobytes() == tr.rate_point.r_bar.tobytes()
    assert ens.half_width() == pytest.approx(1.959963984540054 * tr.weighted_rate_se)


def test_ensemble_error_shrinks_like_root_n(fig1_fdt):
    cfg = FadingConfig.from_params(fig1_fdt, seed=1000)
    mult = Multipliers(1e-8, np.array([0.03, 0.03]))
    w = Weights.two_user(0.5)
    small = run_ensemble(w, mult, fig1_fdt, cfg, 300, n_runs=30)
    big = run_ensemble(w, mult, fig1_fdt, cfg, 300, n_runs=120)
    ratio = small.weighted_rate_se / big.weighted_rate_se
    assert 1.4 < ratio < 2.8
