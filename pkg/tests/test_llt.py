"""Gaussian reference kernels and local-limit error machinery."""

import math

import numpy as np
import pytest
from scipy.special import ive
from scipy.stats import multivariate_normal

from rcmlab.environment import DistSpec, constant_field, lift_static, make_speed
from rcmlab.lattice import build_box
from rcmlab.llt import (GaussianKernel, LLTCurve, LLTError, ScaleGuardError,
                        check_diffusive_scale, constant_env_sigma2,
                        diagonal_profile, dynamic_diagonal_profile,
                        harnack_ratio, hoelder_exponent, isotropic_kernel,
                        kernel_from_sigma_estimate, llt_side, llt_sup_error,
                        near_diagonal_minimum, oscillation_ratio,
                        oscillation_survey, quenched_llt_curve, required_half)


# ---------------------------------------------------------------------------
# Gaussian reference kernel
# ---------------------------------------------------------------------------


def test_density_matches_scipy():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(3, 3))
    sigma2 = m @ m.T + 3.0 * np.eye(3)
    ker = GaussianKernel(sigma2)
    t = 1.7
    pts = rng.normal(size=(20, 3))
    ref = multivariate_normal(mean=np.zeros(3), cov=t * sigma2).pdf(pts)
    assert np.allclose(ker.density(t, pts), ref, rtol=1e-12)
    assert ker.on_diagonal(t) == pytest.approx(
        multivariate_normal(cov=t * sigma2).pdf(np.zeros(3)), rel=1e-12)


def test_density_normalizes():
    ker = isotropic_kernel(2, 2.0)
    assert ker.mass_quadrature(0.7) == pytest.approx(1.0, abs=1e-6)


def test_kernel_validation():
    with pytest.raises(LLTError):
        GaussianKernel(np.ones((2, 3)))
    with pytest.raises(LLTError):
        GaussianKernel(np.array([[1.0, 0.5], [0.2, 1.0]]))
    with pytest.raises(LLTError):
        GaussianKernel(np.array([[1.0, 2.0], [2.0, 1.0]]))  # indefinite
    ker = isotropic_kernel(2, 1.0)
    with pytest.raises(LLTError):
        ker.density(0.0, np.zeros(2))


def test_constant_env_covariances():
    assert np.array_equal(constant_env_sigma2(2, "vsrw"), 2.0 * np.eye(2))
    assert np.array_equal(constant_env_sigma2(2, "csrw"), 0.5 * np.eye(2))
    assert np.array_equal(constant_env_sigma2(3, "csrw"), np.eye(3) / 3.0)
    with pytest.raises(LLTError):
        constant_env_sigma2(2, "custom")


def test_kernel_from_estimate_isotropizes():
    est = np.array([[2.2, 0.1], [0.1, 1.8]])
    ker = kernel_from_sigma_estimate(est)
    assert np.allclose(ker.sigma2, 2.0 * np.eye(2))


# ---------------------------------------------------------------------------
# scale bookkeeping
# ---------------------------------------------------------------------------


def test_side_clears_window():
    for n, K, t2 in [(8, 1.0, 1.0), (16, 1.5, 2.0), (32, 1.0, 1.0)]:
        side = llt_side(n, K, t2)
        assert side % 2 == 1
        assert (side - 1) // 2 > required_half(n, K, t2) - 1
        box = build_box(2, side)
        check_diffusive_scale(box, n, K, t2)  # must not raise
    with pytest.raises(ScaleGuardError):
        check_diffusive_scale(build_box(2, 9), 8, 1.0, 1.0)


# ---------------------------------------------------------------------------
# sup error against a hand-rolled lattice evaluation
# ---------------------------------------------------------------------------


def manual_sup_error(n, K, t1, t2, n_times, side):
    """Same quantity as llt_sup_error for unit weights, built from scratch."""
    ker = isotropic_kernel(2, 2.0)
    radius = int(math.floor(n * K))
    axis = np.arange(-radius, radius + 1)
    worst = 0.0
    for t in np.linspace(t1, t2, n_times):
        lat = n * n * t
        line = ive(np.abs(axis), 2.0 * lat)  # e^{-x} I_k(x), exact scaling
        for i, zi in enumerate(axis):
            for j, zj in enumerate(axis):
                p = line[i] * line[j]
                g = ker.density(t, np.array([zi / n, zj / n]))[0]
                worst = max(worst, abs(n * n * p - g))
    return worst


def test_sup_error_matches_manual_evaluation():
    n, K, t1, t2 = 6, 1.0, 0.5, 1.0
    side = llt_side(n, K, t2)
    box = build_box(2, side)
    field = constant_field(box)
    speed = make_speed(field, "vsrw")
    got = llt_sup_error(field, speed, n, isotropic_kernel(2, 2.0), 1.0,
                        K, t1, t2, n_times=3)
    want = manual_sup_error(n, K, t1, t2, 3, side)
    assert got == pytest.approx(want, rel=1e-6, abs=1e-10)


def test_sup_error_guards_box_size():
    box = build_box(2, 21)
    field = constant_field(box)
    with pytest.raises(ScaleGuardError):
        llt_sup_error(field, make_speed(field, "vsrw"), 8,
                      isotropic_kernel(2, 2.0), 1.0, 1.0, 0.5, 1.0)
    with pytest.raises(LLTError):
        llt_sup_error(field, make_speed(field, "vsrw"), 1,
                      isotropic_kernel(2, 2.0), 1.0, 1.0, 2.0, 1.0)


def test_quenched_curve_on_unit_weights_decreases():
    curve = quenched_llt_curve(2, [4, 8], None, "vsrw",
                               isotropic_kernel(2, 2.0), 1.0, 1.0, 0.5, 1.0,
                               seed=0, n_times=3)
    assert curve.kind == "quenched"
    assert curve.strictly_decreasing
    assert curve.meta["sides"] == [llt_side(4, 1.0, 1.0), llt_side(8, 1.0, 1.0)]
    assert curve.final_error == curve.errors[-1]


def test_curve_monotonicity_property():
    down = LLTCurve(ns=[2, 4], errors=np.array([0.2, 0.1]), kind="x")
    flat = LLTCurve(ns=[2, 4], errors=np.array([0.2, 0.2]), kind="x")
    assert down.strictly_decreasing and not flat.strictly_decreasing


# ---------------------------------------------------------------------------
# diagonal decay, near-diagonal minimum
# ---------------------------------------------------------------------------


def test_diagonal_profile_tracks_lattice_series():
    from rcmlab.heatkernel import constant_walk_diagonal

    box = build_box(2, 71)
    field = constant_field(box)
    speed = make_speed(field, "vsrw")
    ts = np.array([4.0, 8.0, 16.0, 32.0])
    prof = diagonal_profile(field, speed, ts)
    for t, v in zip(ts, prof.values):
        assert v == pytest.approx(constant_walk_diagonal(t, 2), abs=1e-10)
    assert prof.slope == pytest.approx(-1.0, abs=0.05)


def test_dynamic_profile_on_lifted_field_matches_static():
    box = build_box(2, 41)
    field = constant_field(box)
    ts = np.array([2.0, 4.0, 8.0])
    stat = diagonal_profile(field, make_speed(field, "vsrw"), ts)
    dyn = dynamic_diagonal_profile(lift_static(field, 0.0, 9.0), ts)
    assert np.allclose(stat.values, dyn.values, atol=1e-12)
    assert dyn.slope == pytest.approx(stat.slope, abs=1e-9)


def test_near_diagonal_minimum_hits_the_window_corner():
    box = build_box(2, 51)
    field = constant_field(box)
    speed = make_speed(field, "vsrw")
    t = 9.0
    got = near_diagonal_minimum(field, speed, t)
    corner = float(ive(3, 2 * t) ** 2)  # |z|_inf <= 3, smallest at (3, 3)
    assert got == pytest.approx(t * corner, rel=1e-9)
    assert got > 0


# ---------------------------------------------------------------------------
# oscillation and Harnack diagnostics
# ---------------------------------------------------------------------------


def test_oscillation_contracts_for_smooth_kernels():
    box = build_box(2, 31)
    field = constant_field(box)
    speed = make_speed(field, "vsrw")
    rep = oscillation_ratio(field, speed, box.center_vid, t0=20.0, n=4)
    assert 0 < rep.gamma < 1
    assert rep.osc_inner < rep.osc_outer
    with pytest.raises(LLTError):
        oscillation_ratio(field, speed, box.center_vid, t0=16.0, n=4)


def test_hoelder_exponent_arithmetic():
    assert hoelder_exponent([0.25], shrink=4) == pytest.approx(1.0)
    assert hoelder_exponent([0.5, 0.5], shrink=4) == pytest.approx(0.5)
    assert hoelder_exponent([1.0]) == 0.0
    with pytest.raises(LLTError):
        hoelder_exponent([-1.0, 1.0])


def test_oscillation_survey_collects_draws():
    out = oscillation_survey(2, 31, DistSpec("log-uniform", (0.5, 2.0)),
                             "csrw", n=4, t0=20.0, n_envs=2,
                             anchors_per_env=2, seed=5)
    assert out["n_draws"] == 4
    assert len(out["draws"]) == 4 and out["draws"][0][0] == 0
    assert (out["gammas"] > 0).all()
    assert 0.0 <= out["share_below_one"] <= 1.0


def test_harnack_ratio_is_a_positive_contrast():
    box = build_box(2, 31)
    field = constant_field(box)
    speed = make_speed(field, "vsrw")
    rep = harnack_ratio(field, speed, box.center_vid, t0=20.0, n=4)
    assert rep.ratio > 1.0  # the kernel keeps decaying near its source
    assert rep.sup_early > rep.inf_late > 0
    with pytest.raises(LLTError):
        harnack_ratio(field, speed, box.center_vid, t0=9.0, n=4)
