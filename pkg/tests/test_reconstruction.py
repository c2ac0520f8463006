import math

import numpy as np
import pytest
from scipy.integrate import quad
from sklearn.base import clone

from temcodec.codec import decoder_replay
from temcodec.encoders import ConstParams, default_params, encode
from temcodec.exceptions import DegenerateSystemError, InvalidArgumentError
from temcodec.reconstruction import (
    NMSE_FLOOR_DB,
    BandlimitedReconstructor,
    NmseEvaluator,
    ReconConfig,
    measurement_matrix,
    nmse,
    reconstruct,
)
from temcodec.signal import BandlimitedSignal, evaluate, integrate

from .conftest import OMEGA0, SUPPORT


def measurements(sig, scheme):
    p = default_params(scheme)
    r = encode(sig, p, *SUPPORT)
    return r.times, decoder_replay(r.t_first, r.intervals, p).y


class TestMatrix:
    @pytest.mark.parametrize("a", [0.002, 0.0137])
    def test_symmetric_entry(self, a):
        cfg = ReconConfig(OMEGA0, 0.0, 1)
        G = measurement_matrix([-a, a], cfg)
        ref, _ = quad(lambda t: np.sinc(t * OMEGA0 / np.pi), -a, a, epsabs=1e-16, epsrel=1e-13)
        assert G[0, 0] == pytest.approx(ref, rel=1e-10)

    def test_rows_integrate_signal(self, signal):
        times = np.sort(np.random.default_rng(1).uniform(-0.4, 0.4, 60))
        cfg = ReconConfig(OMEGA0, signal.grid_origin, signal.coeffs.size)
        G = measurement_matrix(times, cfg)
        oracle = [integrate(signal, a, b) for a, b in zip(times[:-1], times[1:])]
        np.testing.assert_allclose(G @ signal.coeffs, oracle, rtol=0, atol=1e-10)

    def test_rejects_bad_times(self):
        cfg = ReconConfig(OMEGA0, 0.0, 3)
        with pytest.raises(InvalidArgumentError):
            measurement_matrix([0.1], cfg)
        with pytest.raises(InvalidArgumentError):
            measurement_matrix([0.1, 0.1, 0.2], cfg)

    def test_covering_anchor(self):
        cfg = ReconConfig.covering([-0.45, 0.0, 0.45], OMEGA0, anchor=-0.495)
        k = (cfg.grid_origin + 0.495) / cfg.t_nyq
        assert k == pytest.approx(round(k), abs=1e-9)
        assert cfg.centers[0] <= -0.5 + 1e-12 and cfg.centers[-1] >= 0.5 - 1e-12

    def test_config_validation(self):
        with pytest.raises(InvalidArgumentError):
            ReconConfig(OMEGA0, 0.0, 0)
        with pytest.raises(InvalidArgumentError):
            ReconConfig(OMEGA0, 0.0, 5, solver="magic")


class TestReconstruct:
    @pytest.mark.parametrize("scheme", ["conv", "vb", "lb"])
    def test_unquantized_quality(self, scheme, ensemble):
        for sig in ensemble[:4]:
            times, y = measurements(sig, scheme)
            est = reconstruct(times, y, ReconConfig.covering(times, OMEGA0))
            assert nmse(sig, est, support=SUPPORT) <= -50

    @pytest.mark.parametrize("scheme", ["conv", "vb", "lb"])
    def test_anchored_grid_recovers_coefficients(self, scheme, signal):
        times, y = measurements(signal, scheme)
        cfg = ReconConfig.covering(times, OMEGA0, anchor=signal.grid_origin)
        est = reconstruct(times, y, cfg)
        off = int(round((signal.grid_origin - cfg.grid_origin) / cfg.t_nyq))
        inner = slice(10, 90)
        got = est.coeffs[off:off + signal.coeffs.size][inner]
        np.testing.assert_allclose(got, signal.coeffs[inner], rtol=0, atol=1e-6)

    def test_iterative_agrees_with_direct(self, signal):
        times, y = measurements(signal, "lb")
        direct = reconstruct(times, y, ReconConfig.covering(times, OMEGA0))
        res = reconstruct(times, y, ReconConfig.covering(times, OMEGA0, solver="iterative"),
                          return_result=True)
        t = np.linspace(-0.4, 0.4, 801)
        assert np.max(np.abs(evaluate(direct, t) - evaluate(res.signal, t))) < 1e-6
        hist = np.asarray(res.residual_history)
        assert np.all(np.diff(hist) <= 1e-12 * hist[0])
        assert res.iterations > 0

    def test_zero_measurements(self, zero_signal):
        times, y = measurements(zero_signal, "lb")
        t = np.linspace(-0.4, 0.4, 101)
        for solver in ("direct", "iterative"):
            cfg = ReconConfig.covering(times, OMEGA0, solver=solver)
            assert np.all(reconstruct(times, np.zeros_like(y), cfg).coeffs == 0)
            # replayed integrals carry ~1e-16 roundoff
            assert np.max(np.abs(evaluate(reconstruct(times, y, cfg), t))) < 1e-6

    def test_sub_nyquist_degrades(self, signal):
        # threshold so large that the mean interval far exceeds the Nyquist period
        p = ConstParams(0.02, 1.5, OMEGA0, 1.0)
        r = encode(signal, p, *SUPPORT)
        y = decoder_replay(r.t_first, r.intervals, p).y
        assert r.n_firings < 90
        est = reconstruct(r.times, y, ReconConfig.covering(r.times, OMEGA0))
        assert nmse(signal, est, support=SUPPORT) > -20

    def test_degenerate(self):
        cfg = ReconConfig(OMEGA0, 0.0, 2)
        # all basis centres far outside a tiny window give a numerically null column set
        times = np.array([1e6, 1e6 + 1e-9])
        with pytest.raises(DegenerateSystemError):
            reconstruct(times, [0.0], cfg)

    def test_length_mismatch(self, signal):
        times, y = measurements(signal, "lb")
        with pytest.raises(InvalidArgumentError):
            reconstruct(times, y[:-1], ReconConfig.covering(times, OMEGA0))


class TestNmse:
    def test_identical(self, signal):
        assert nmse(signal, signal) == NMSE_FLOOR_DB

    def test_zero_estimate(self, signal):
        assert nmse(signal, lambda t: np.zeros_like(t)) == pytest.approx(0.0, abs=1e-12)

    def test_scaled(self, signal):
        scaled = BandlimitedSignal(signal.omega0, signal.amp_bound, signal.grid_origin,
                                   signal.coeffs * (1 + 1e-3))
        assert nmse(signal, scaled) == pytest.approx(-60.0, abs=1e-6)

    def test_zero_reference(self, zero_signal, signal):
        with pytest.raises(InvalidArgumentError):
            nmse(zero_signal, signal)

    def test_empty_region(self, signal):
        with pytest.raises(InvalidArgumentError):
            nmse(signal, signal, guard=1.0)

    def test_evaluator_matches(self, ensemble):
        ev = NmseEvaluator(OMEGA0, SUPPORT)
        a, b = ensemble[0], ensemble[1]
        assert ev(a, b) == pytest.approx(nmse(a, b, support=SUPPORT), abs=1e-9)
        assert ev(a, a) == NMSE_FLOOR_DB

    def test_evaluator_zero_reference(self, zero_signal, signal):
        ev = NmseEvaluator(OMEGA0, SUPPORT)
        assert ev(zero_signal, zero_signal) == NMSE_FLOOR_DB
        assert math.isfinite(ev(zero_signal, signal))


class TestEstimator:
    def test_fit_predict(self, signal):
        times, y = measurements(signal, "vb")
        est = BandlimitedReconstructor(omega0=OMEGA0).fit(times, y)
        t = np.linspace(-0.4, 0.4, 301)
        assert est.score(t, evaluate(signal, t)) >= 50
        assert est.coef_.size == est.config_.n_basis

    def test_clone_and_params(self):
        est = BandlimitedReconstructor(solver="iterative", max_iter=50)
        twin = clone(est)
        assert twin.get_params() == est.get_params()
        assert not hasattr(twin, "signal_")

    def test_unfitted(self):
        from sklearn.exceptions import NotFittedError
        with pytest.raises(NotFittedError):
            BandlimitedReconstructor().predict([0.0])
