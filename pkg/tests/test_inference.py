import math

import numpy as np
import pytest

from anharmonic_probe import inference as inf
from anharmonic_probe import metrology as met
from anharmonic_probe.dynamics import CUBIC, QUARTIC, ProtocolParams
from anharmonic_probe.errors import BracketError, CapabilityError, NonConvergence
from anharmonic_probe.metrology import MeasurementConfig

DESK = ProtocolParams(lam=0.3, gamma=1e-3, alpha=3.0)


def test_rng_streams_reproducible_and_distinct():
    a = inf.make_rng(5, 0).random(4)
    np.testing.assert_array_equal(a, inf.make_rng(5, 0).random(4))
    assert not np.allclose(a, inf.make_rng(5, 1).random(4))
    assert not np.allclose(a, inf.make_rng(6, 0).random(4))
    with pytest.raises(ValueError):
        inf.make_rng(-1)


def test_homodyne_sampling_matches_pdf():
    cfg = MeasurementConfig(phi=0.7)
    s = inf.sample_homodyne(cfg, DESK, QUARTIC, 20000, seed=1)
    assert s.M == 20000 and s.ks_pvalue > 1e-3
    x = cfg.x_grid(DESK.alpha)
    p = met.homodyne_pdf(x, cfg, DESK, QUARTIC)
    mean = np.trapezoid(x * p, x)
    assert abs(s.values.mean() - mean) < 5 * s.values.std() / math.sqrt(s.M)
    again = inf.sample_homodyne(cfg, DESK, QUARTIC, 20000, seed=1)
    np.testing.assert_array_equal(s.values, again.values)


def test_heterodyne_sampling_mean_is_field_amplitude():
    from anharmonic_probe.dynamics import mean_field_exact
    s = inf.sample_heterodyne(DESK, QUARTIC, 20000, seed=2)
    # E[eta] over the Husimi density equals <a>
    target = mean_field_exact(DESK, QUARTIC)
    err = s.values.std() / math.sqrt(s.M)
    assert abs(s.values.mean() - target) < 5 * err


def test_mle_recovers_parameter():
    cfg = MeasurementConfig(phi=met.optimize_phase(DESK, QUARTIC)[0])
    s = inf.sample_homodyne(cfg, DESK, QUARTIC, 5000, seed=3)
    est = inf.mle_estimate(s, (1e-4, 1e-2))
    assert abs(est.estimate - 1e-3) < 5 * est.std_error
    fi = met.fisher_homodyne(cfg, DESK, QUARTIC)
    assert est.std_error == pytest.approx(1 / math.sqrt(5000 * fi), rel=0.3)


def test_mle_errors():
    cfg = MeasurementConfig(phi=1.0)
    s = inf.sample_homodyne(cfg, DESK, QUARTIC, 2000, seed=4)
    with pytest.raises(BracketError):
        inf.mle_estimate(s, (3e-3, 6e-3))
    with pytest.raises(ValueError):
        inf.mle_estimate(s, (1e-2, 1e-3))
    flat = inf.sample_homodyne(cfg, ProtocolParams(lam=0.0, gamma=1e-3, alpha=2.0),
                               QUARTIC, 200, seed=4)
    with pytest.raises(NonConvergence):
        inf.mle_estimate(flat, (1e-4, 1e-2))


def test_physical_scale_is_refused():
    with pytest.raises(CapabilityError):
        inf.sample_homodyne(MeasurementConfig(), inf.DESK_PRESETS["physical"], QUARTIC, 10, 0)


def test_default_bracket():
    assert inf.default_bracket(1e-3) == pytest.approx((1e-4, 1e-2))
    assert inf.default_bracket(-1e-3) == pytest.approx((-1e-2, -1e-4))
    with pytest.raises(ValueError):
        inf.default_bracket(0.0)


def test_saturation_is_thread_independent():
    kw = dict(M=300, n_repeats=12, seed=9, bracket=(1e-4, 1e-2), n_bootstrap=200)
    a = inf.crb_saturation_experiment(DESK, QUARTIC, threads=1, **kw)
    b = inf.crb_saturation_experiment(DESK, QUARTIC, threads=3, **kw)
    np.testing.assert_array_equal(a.estimates, b.estimates)
    assert a.statistic == b.statistic
    assert a.ci_low <= a.statistic <= a.ci_high


def test_closure_cubic_flat_quartic_improves():
    base = dict(lam=0.3, alpha=2.0, dim_c=25, dim_m=40)
    cubic = inf.adaptive_closure(ProtocolParams(delta=1e-2, **base), CUBIC, rounds=3, M=5000)
    assert len({r.tau for r in cubic}) == 1
    assert max(r.visibility for r in cubic) - min(r.visibility for r in cubic) < 1e-12
    quartic = inf.adaptive_closure(ProtocolParams(gamma=1e-2, **base), QUARTIC, rounds=3,
                                   M=5000)
    vis = [r.visibility for r in quartic]
    assert all(b >= a for a, b in zip(vis, vis[1:]))
    assert vis[-1] > vis[0]
