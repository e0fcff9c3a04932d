import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ampse.denoisers import Custom, Linear, Schedule, SoftThreshold, Tanh, amp_pair, identity_pair
from ampse.model import NoiseSpec, Prior
from ampse.observables import lp, se_prediction
from ampse.quadrature import QuadraturePrecisionWarning
from ampse.state_evolution import (SeSpec, general_se_initial, general_se_step,
                                   linear_se_fixed_point, linear_se_step, multiuser_se_step,
                                   se_step, se_trajectory, symmetric_se_step,
                                   symmetric_trajectory)

ZERO = Custom(np.zeros_like, np.zeros_like, lipschitz=0.0)
IDENT = Linear(1.0)


def spec(prior=None, sigma2=0.2, delta=0.5, schedule=None):
    return SeSpec(prior or Prior.three_point(0.1), sigma2, delta,
                  schedule or Schedule("soft_threshold", alpha=1.5))


def test_initial_tau():
    s = spec(Prior.three_point(0.2, 2.0), sigma2=0.3, delta=0.4)
    assert s.tau2_initial == pytest.approx(0.3 + 0.8 / 0.4)


def test_identity_denoiser_step():
    s = spec()
    assert se_step(0.7, s, denoiser=IDENT) == pytest.approx(0.2 + 0.7 / 0.5, rel=1e-13)


def test_zero_denoiser_step():
    s = spec()
    assert se_step(0.7, s, denoiser=ZERO) == pytest.approx(s.tau2_initial, rel=1e-14)


def test_soft_threshold_step_vs_oracle(mc_oracles):
    case = mc_oracles["soft"][0]
    p = case["params"]
    s = spec(Prior.three_point(p["eps"], p["amp"]), p["sigma2"], p["delta"])
    got = se_step(p["tau2"], s, denoiser=SoftThreshold(p["theta"]))
    assert abs(got - case["mean"]) <= 3 * case["stderr"]


def test_multiuser_step_vs_oracle(mc_oracles):
    case = mc_oracles["multiuser"][0]
    p = case["params"]
    got = multiuser_se_step(p["tau2"], p["sigma2"], p["delta"])
    assert abs(got - case["mean"]) <= 3 * case["stderr"]


def test_symmetric_step_vs_oracle(mc_oracles):
    case = mc_oracles["symmetric"][0]
    got = symmetric_se_step(case["params"]["tau2"], Tanh(1.0 / case["params"]["beta"]))
    assert abs(got - case["mean"]) <= 3 * case["stderr"]


def test_multiuser_matches_generic_recursion():
    s = SeSpec(Prior.antipodal(), 0.25, 0.5, Schedule("tanh"))
    for tau2 in (0.05, 0.4, 1.0, 5.0):
        assert multiuser_se_step(tau2, 0.25, 0.5) == pytest.approx(se_step(tau2, s), rel=1e-12)


def test_multiuser_limits():
    assert multiuser_se_step(1e-10, 0.25, 0.5) == pytest.approx(0.25, abs=1e-6)
    assert multiuser_se_step(1e10, 0.25, 0.5) == pytest.approx(0.25 + 2.0, abs=1e-6)
    assert multiuser_se_step(0.0, 0.25, 0.5) == 0.25


def test_multiuser_no_precision_warnings_across_scales():
    with warnings.catch_warnings():
        warnings.simplefilter("error", QuadraturePrecisionWarning)
        for tau2 in 10.0 ** np.arange(-10, 11):
            multiuser_se_step(tau2, 0.1, 0.7)


def test_symmetric_trivial_steps():
    assert symmetric_se_step(0.8, IDENT) == pytest.approx(0.8, rel=1e-13)
    assert symmetric_se_step(0.8, ZERO) == 0


def test_linear_fixed_point_examples():
    tau2, mse = linear_se_fixed_point(1.0, 0.0, 0.5)
    assert tau2 == pytest.approx(1.0, abs=1e-15) and mse == pytest.approx(0.5, abs=1e-15)
    tau2, mse = linear_se_fixed_point(1.0, 1.0, 1.0)
    assert tau2 == pytest.approx((1 + math.sqrt(5)) / 2, rel=1e-15)
    assert mse == pytest.approx((math.sqrt(5) - 1) / 2, rel=1e-15)


def test_linear_iteration_converges_to_closed_form():
    tau2 = 1.0 + 1.0 / 0.7
    for _ in range(200):
        tau2 = linear_se_step(tau2, 1.3, 0.2, 0.7)
    assert tau2 == pytest.approx(linear_se_fixed_point(1.3, 0.2, 0.7)[0], rel=1e-10)


def test_linear_trajectory_matches_closed_form():
    s = SeSpec(Prior.gaussian(2.0), 0.3, 0.8, Schedule("linear", prior=Prior.gaussian(2.0)))
    traj = se_trajectory(s, 500, tol=1e-12)
    assert traj.fixed_point
    assert traj.tau2[-1] == pytest.approx(linear_se_fixed_point(2.0, 0.3, 0.8)[0], rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(v2=st.floats(0.1, 10), s1=st.floats(0.0, 5), s2=st.floats(0.0, 5),
       delta=st.floats(0.1, 4))
def test_linear_tau_increasing_in_sigma(v2, s1, s2, delta):
    lo, hi = sorted((s1, s2))
    if hi - lo < 1e-6:
        return
    assert linear_se_fixed_point(v2, lo, delta)[0] < linear_se_fixed_point(v2, hi, delta)[0]


def test_zero_denoiser_trajectory_constant():
    s = spec(schedule=Schedule("custom", factory=lambda t, tau2: ZERO))
    traj = se_trajectory(s, 5)
    assert all(v == pytest.approx(s.tau2_initial, rel=1e-14) for v in traj.tau2)


def test_trajectory_length_one_step():
    traj = se_trajectory(spec(), 1)
    assert len(traj) == 2
    assert traj.tau2[0] == spec().tau2_initial


def test_tau_at_least_sigma2():
    s = spec(sigma2=0.05, delta=0.64)
    traj = se_trajectory(s, 30)
    assert min(traj.tau2) >= 0.05


def test_mse_prediction_consistent_with_recursion():
    s = spec(sigma2=0.01, delta=0.64)
    traj = se_trajectory(s, 5)
    from ampse.observables import mse
    for t in range(5):
        pred = se_prediction(mse(), math.sqrt(traj.tau2[t]), s.prior, traj.denoiser(t))
        assert pred == pytest.approx((traj.tau2[t + 1] - 0.01) * 0.64, rel=1e-12)


def test_general_mapping_reproduces_se_step():
    s = spec(sigma2=0.01, delta=0.64)
    traj = se_trajectory(s, 6)
    pair = amp_pair(traj.denoiser)
    noise = NoiseSpec.gaussian(0.01)
    sigma0 = s.prior.second_moment / s.delta
    tau2 = general_se_initial(sigma0, pair, noise)
    assert tau2 == pytest.approx(traj.tau2[0], rel=1e-12)
    for t in range(1, 7):
        tau2, sig2 = general_se_step(tau2, t, pair, s.prior, noise, s.delta)
        assert tau2 == pytest.approx(0.01 + sig2, rel=1e-12)
        assert tau2 == pytest.approx(traj.tau2[t], rel=1e-12)


def test_general_identity_pair():
    pair = identity_pair()
    noise = NoiseSpec.gaussian(0.0)
    tau2, sig2 = general_se_step(0.9, 1, pair, Prior.three_point(0.3), noise, 0.6)
    assert sig2 == pytest.approx(0.9 / 0.6, rel=1e-13)
    assert tau2 == pytest.approx(sig2, rel=1e-13)


def test_quadrature_doubling_stable_on_benchmark():
    s = spec(sigma2=0.01, delta=0.64)
    with warnings.catch_warnings():
        warnings.simplefilter("error", QuadraturePrecisionWarning)
        traj = se_trajectory(s, 10)
        for t in range(10):
            se_prediction(lp(1), math.sqrt(traj.tau2[t]), s.prior, traj.denoiser(t))


def test_l1_prediction_vs_oracle(mc_oracles):
    case = mc_oracles["l1_soft"][0]
    p = case["params"]
    got = se_prediction(lp(1), math.sqrt(p["tau2"]), Prior.three_point(p["eps"], p["amp"]),
                        SoftThreshold(p["theta"]))
    assert abs(got - case["mean"]) <= 3 * case["stderr"]


def test_symmetric_trajectory_indexing():
    traj = symmetric_trajectory(1.0, Tanh(1.0), 3)
    assert traj.tau2_at(1) == 1.0
    assert traj.tau2_at(2) == pytest.approx(symmetric_se_step(1.0, Tanh(1.0)))
    with pytest.raises(IndexError):
        traj.tau2_at(0)
