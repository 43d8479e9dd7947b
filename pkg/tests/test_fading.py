import numpy as np
import pytest

from ehmac.fading import (
    CHUNK_SLOTS,
    FadingConfig,
    empirical_mean_gain,
    exact_law,
    sample_block,
    sample_slot,
)
from ehmac.model import Mode, SystemParams


def test_block_is_independent_of_request_split(fig1_fdt):
    cfg = FadingConfig.from_params(fig1_fdt, seed=11)
    whole = sample_block(cfg, fig1_fdt, 100, 2 * CHUNK_SLOTS)
    a = sample_block(cfg, fig1_fdt, 100, CHUNK_SLOTS - 7)
    b = sample_block(cfg, fig1_fdt, 100 + CHUNK_SLOTS - 7, CHUNK_SLOTS + 7)
    assert np.array_equal(whole.x, np.vstack([a.x, b.x]))
    assert np.array_equal(whole.y, np.vstack([a.y, b.y]))
    s = sample_slot(cfg, fig1_fdt, 100 + CHUNK_SLOTS)
    assert np.array_equal(s.x, whole.x[CHUNK_SLOTS])


def test_tdt_is_reciprocal_fdt_is_not(fig1_tdt, fig1_fdt):
    cfg = FadingConfig.from_params(fig1_tdt, seed=3)
    t = sample_block(cfg, fig1_tdt, 0, 1000)
    f = sample_block(cfg, fig1_fdt, 0, 1000)
    assert np.array_equal(t.x, t.y)
    assert np.array_equal(t.x, f.x)
    assert not np.array_equal(f.x, f.y)


def test_seeds_differ(fig1_tdt):
    a = sample_block(FadingConfig.from_params(fig1_tdt, 1), fig1_tdt, 0, 10)
    b = sample_block(FadingConfig.from_params(fig1_tdt, 2), fig1_tdt, 0, 10)
    assert not np.array_equal(a.x, b.x)


def test_exponential_mean(fig1_tdt):
    cfg = FadingConfig.from_params(fig1_tdt, seed=5)
    m = empirical_mean_gain(cfg, fig1_tdt, 400_000)
    assert np.allclose(m, 1.0, rtol=0.01)


def test_two_point_law():
    p = SystemParams(2, 0.5, 2.0, 1.0, 2.0, 4.0, mode=Mode.FDT)
    cfg = FadingConfig.two_point(2, (0.5, 2.0), (0.5, 0.5), seed=3)
    assert np.allclose(cfg.mean_x, 1.25)
    law = exact_law(cfg, p)
    assert len(law) == 16
    assert law.weights.sum() == pytest.approx(1.0)
    mc = sample_block(cfg, p, 0, 200_000)
    assert set(np.unique(mc.x)) == {0.5, 2.0}
    assert np.allclose(mc.x.mean(axis=0), 1.25, atol=0.01)
    assert np.allclose(law.mean(law.y), 1.25)


def test_seed_range():
    with pytest.raises(ValueError):
        FadingConfig(seed=-1, mean_x=np.ones(1), mean_y=np.ones(1))
