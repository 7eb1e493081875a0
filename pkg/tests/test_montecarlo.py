import math

import numpy as np
import pytest

from srrobust.detect import Procedure
from srrobust.errors import InvalidInputError
from srrobust.model import GaussianModel
from srrobust.montecarlo import (McConfig, McEstimate, default_change_point, estimate_arl,
                                 estimate_delay_nu0, estimate_stadd, martingale_diagnostic)

TUNED = GaussianModel(0.5, 0.5)


def constant_sampler(value):
    def draw(rng, regime, size):
        return np.full(size, value)
    return draw


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(replications=0), dict(worker_count=0), dict(change_point_nu=-1),
                                    dict(change_point_nu=2.5), dict(seed=-1), dict(max_steps_cap=0)])
    def test_invalid(self, kw):
        with pytest.raises(InvalidInputError):
            McConfig(**kw)

    def test_default_change_point(self):
        assert default_change_point(100.0) == 1000

    def test_estimator_regime_checks(self):
        with pytest.raises(InvalidInputError):
            estimate_arl(TUNED, Procedure.SR, 10.0, McConfig(change_point_nu=0))
        with pytest.raises(InvalidInputError):
            estimate_delay_nu0(TUNED, Procedure.SR, 10.0, McConfig())
        with pytest.raises(InvalidInputError):
            estimate_stadd(TUNED, Procedure.SR, 10.0, McConfig())


class TestEstimate:
    def test_se_definition(self):
        est = McEstimate(1.0, 0.5, 100, 2)
        assert est.truncation_fraction == pytest.approx(2 / 102)
        assert not est.reliable
        assert McEstimate(1.0, 0.5, 1000, 10).reliable
        assert est.csv_record("arl") == "arl,1,0.5,100,2"

    def test_truncation_is_reported(self):
        # a decreasing stream never alarms
        cfg = McConfig(replications=50, max_steps_cap=200)
        est = estimate_arl(TUNED, Procedure.SR, 10.0, cfg, sampler=constant_sampler(-3.0))
        assert est.replications_used == 0 and est.truncation_count == 50
        assert math.isnan(est.mean)
        assert not est.reliable


class TestDeterminism:
    def test_reproducible(self):
        cfg = McConfig(replications=5000, seed=123)
        a = estimate_arl(TUNED, Procedure.SR, 40.0, cfg)
        b = estimate_arl(TUNED, Procedure.SR, 40.0, cfg)
        assert a == b

    def test_seed_matters(self):
        a = estimate_arl(TUNED, Procedure.SR, 40.0, McConfig(replications=2000, seed=1))
        b = estimate_arl(TUNED, Procedure.SR, 40.0, McConfig(replications=2000, seed=2))
        assert a.mean != b.mean

    def test_worker_count_invariance(self):
        base = dict(replications=9000, seed=77, block_size=1000)
        one = estimate_arl(TUNED, Procedure.CUSUM, 3.0, McConfig(worker_count=1, **base))
        eight = estimate_arl(TUNED, Procedure.CUSUM, 3.0, McConfig(worker_count=8, **base))
        assert one == eight
        cfg = dict(change_point_nu=200, **base)
        one = estimate_stadd(TUNED, Procedure.SR, 30.0, McConfig(worker_count=1, **cfg))
        eight = estimate_stadd(TUNED, Procedure.SR, 30.0, McConfig(worker_count=8, **cfg))
        assert one == eight


class TestArl:
    def test_degenerate_stream_stops_at_one(self):
        cfg = McConfig(replications=1000)
        # x = theta/2 gives LR 1, so R_1 = 1
        est = estimate_arl(TUNED, Procedure.SR, 1.0, cfg, sampler=constant_sampler(0.25))
        assert est.mean == 1.0 and est.std_error == 0.0

    def test_se_scaling(self):
        small = estimate_arl(TUNED, Procedure.SR, 30.0, McConfig(replications=20000, seed=9))
        large = estimate_arl(TUNED, Procedure.SR, 30.0, McConfig(replications=40000, seed=9))
        assert large.std_error / small.std_error == pytest.approx(1 / math.sqrt(2), rel=0.05)

    @pytest.mark.slow
    def test_tuned_reference(self):
        est = estimate_arl(TUNED, Procedure.SR, 74.76, McConfig(replications=10**5))
        assert abs(est.mean - 100.45) <= 3 * est.std_error

    def test_cusum_shorter_threshold_shorter_run(self):
        cfg = McConfig(replications=4000)
        lo = estimate_arl(TUNED, Procedure.CUSUM, 2.0, cfg)
        hi = estimate_arl(TUNED, Procedure.CUSUM, 3.0, cfg)
        assert lo.mean < hi.mean


class TestDelay:
    def test_directional(self):
        cfg = McConfig(replications=4000, change_point_nu=0)
        small = estimate_delay_nu0(GaussianModel(3.0, 3.0), Procedure.SR, 100.0, cfg)
        big = estimate_delay_nu0(GaussianModel(1.0, 3.0), Procedure.SR, 100.0, cfg)
        assert small.mean < 10
        assert small.mean < big.mean
        assert small.std_error > 0

    def test_nu_zero_equals_single_cycle(self):
        cfg = McConfig(replications=3000, change_point_nu=0, seed=4)
        a = estimate_stadd(TUNED, Procedure.SR, 50.0, cfg)
        b = estimate_delay_nu0(TUNED, Procedure.SR, 50.0, cfg)
        assert a.mean == pytest.approx(b.mean, rel=0.05)

    def test_false_alarms_returned(self):
        cfg = McConfig(replications=2000, change_point_nu=1000)
        est, alarms = estimate_stadd(TUNED, Procedure.SR, 74.76, cfg, return_alarms=True)
        assert alarms.shape == (2000,)
        # about nu / ARL false alarms per replication
        assert alarms.mean() == pytest.approx(1000 / 100.45, rel=0.15)

    @pytest.mark.slow
    def test_stationarity(self):
        a = estimate_stadd(TUNED, Procedure.SR, 74.76, McConfig(replications=40000, change_point_nu=1000))
        b = estimate_stadd(TUNED, Procedure.SR, 74.76, McConfig(replications=40000, change_point_nu=2000,
                                                                 seed=5))
        assert abs(a.mean - b.mean) <= 3 * math.hypot(a.std_error, b.std_error)

    @pytest.mark.slow
    def test_tuned_reference_cell(self):
        model = GaussianModel(1.0, 1.0)
        est = estimate_stadd(model, Procedure.SR, 56.03, McConfig(replications=10**5, change_point_nu=1000))
        assert abs(est.mean - 5.46) <= 3 * est.std_error


class TestMartingale:
    def test_zero_checkpoint(self):
        out = martingale_diagnostic(TUNED, [0], McConfig(replications=10))
        assert out[0] == McEstimate(0.0, 0.0, 10, 0)

    def test_checkpoints(self):
        out = martingale_diagnostic(TUNED, [100, 10, 0], McConfig(replications=10**5, seed=31))
        assert list(out) == [0, 10, 100]
        for n in (10, 100):
            assert abs(out[n].mean) <= 4 * out[n].std_error
        assert out[100].std_error > out[10].std_error

    def test_negative_checkpoint(self):
        with pytest.raises(InvalidInputError):
            martingale_diagnostic(TUNED, [-1], McConfig(replications=10))
