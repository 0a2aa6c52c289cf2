"""Solver oracles: matrix exponentials, lattice series, walk equivalences."""

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.special import ive

from rcmlab.environment import (DistSpec, TableEnvironment, constant_field,
                                lift_static, make_speed, mu_nu,
                                resampling_environment, sample_iid)
from rcmlab.heatkernel import (KOverflowError, SolverError, SolverParams,
                               chapman_kolmogorov_check, constant_walk_diagonal,
                               line_return_probability, solve_dynamic,
                               solve_static)
from rcmlab.lattice import build_box


def generator_matrix(field, theta):
    """Dense generator of the walk, rows indexed by the starting vertex."""
    box = field.box
    n = box.n_vertices
    q = np.zeros((n, n))
    for x in range(n):
        for k in range(2 * box.d):
            rate = field.omega[box.inc[x, k]] / theta[x]
            y = box.nbr[x, k]
            if y >= 0:
                q[x, y] += rate
            q[x, x] -= rate
    return q


def occupation_oracle(field, theta, x0, t):
    """P_x0(X_t = .) via scipy's matrix exponential."""
    return expm(t * generator_matrix(field, theta))[x0]


# ---------------------------------------------------------------------------
# matrix-exponential cross-checks on small boxes
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("speed_kind", ["vsrw", "csrw"])
def test_static_solver_matches_expm(speed_kind):
    box = build_box(2, 5)
    field = sample_iid(box, DistSpec("log-uniform", (0.5, 2.0)), 5)
    speed = make_speed(field, speed_kind)
    hk = solve_static(field, speed, x0_vid=7, times=[0.3, 1.0, 2.5])
    for i, t in enumerate([0.3, 1.0, 2.5]):
        ref = occupation_oracle(field, speed.theta, 7, t)
        assert np.max(np.abs(hk.prob[i] - ref)) < 1e-10


def test_static_solver_matches_expm_custom_speed():
    box = build_box(2, 5)
    field = sample_iid(box, DistSpec("uniform", (0.5, 2.0)), 8)
    speed = make_speed(field, "custom", DistSpec("uniform", (0.5, 3.0)), seed=2)
    hk = solve_static(field, speed, 0, [1.7])
    ref = occupation_oracle(field, speed.theta, 0, 1.7)
    assert np.max(np.abs(hk.prob[0] - ref)) < 1e-10


def test_absorbing_box_loses_mass_like_expm():
    box = build_box(2, 5, "absorbing")
    field = sample_iid(box, DistSpec("log-uniform", (0.5, 2.0)), 3)
    speed = make_speed(field, "vsrw")
    hk = solve_static(field, speed, box.center_vid, [0.5, 2.0])
    for i, t in enumerate([0.5, 2.0]):
        ref = occupation_oracle(field, speed.theta, box.center_vid, t)
        assert np.max(np.abs(hk.prob[i] - ref)) < 1e-10
    m0, m1 = hk.prob[0].sum(), hk.prob[1].sum()
    assert m1 < m0 < 1.0  # killing at the closure only ever removes mass


def test_dynamic_two_frame_matches_expm_product():
    box = build_box(2, 5)
    rng = np.random.default_rng(12)
    e = box.n_edges
    w1 = rng.uniform(0.5, 2.0, e)
    w2 = rng.uniform(0.5, 2.0, e)
    t_change, t_end = 0.7, 1.9
    off = 2 * np.arange(e + 1, dtype=np.int64)
    times = np.empty(2 * e)
    vals = np.empty(2 * e)
    times[0::2], times[1::2] = 0.0, t_change
    vals[0::2], vals[1::2] = w1, w2
    env = TableEnvironment(box, 0.0, t_end, off, times, vals, kind="two-frame",
                           meta={"support_max": 2.0})
    hk = solve_dynamic(env, x0_vid=6, t_from=0.0, times=[t_end])
    ones = np.ones(box.n_vertices)
    f1 = constant_field(box)
    q1 = generator_matrix(
        type(f1)(box=box, omega=w1, dist=None, seed=None), ones)
    q2 = generator_matrix(
        type(f1)(box=box, omega=w2, dist=None, seed=None), ones)
    start = np.zeros(box.n_vertices)
    start[6] = 1.0
    ref = start @ expm(t_change * q1) @ expm((t_end - t_change) * q2)
    assert np.max(np.abs(hk.prob[0] - ref)) < 1e-10


def test_dynamic_on_lifted_field_matches_static():
    box = build_box(2, 7)
    field = sample_iid(box, DistSpec("log-uniform", (0.5, 2.0)), 9)
    env = lift_static(field, 0.0, 3.0)
    stat = solve_static(field, make_speed(field, "vsrw"), 10, [1.0, 3.0])
    dyn = solve_dynamic(env, 10, 0.0, [1.0, 3.0])
    assert np.max(np.abs(dyn.prob - stat.prob)) < 1e-12


# ---------------------------------------------------------------------------
# lattice series oracle for the homogeneous walk
# ---------------------------------------------------------------------------


def test_line_series_agrees_with_bessel():
    for t in (0.25, 1.0, 4.0, 20.0):
        assert line_return_probability(t) == pytest.approx(
            float(ive(0, 2.0 * t)), rel=1e-13)
    assert line_return_probability(0.0) == 1.0
    with pytest.raises(ValueError):
        line_return_probability(-1.0)


def test_torus_diagonal_matches_product_series():
    # wrap-around corrections at side 35 are far below the tolerance
    box = build_box(2, 35)
    field = constant_field(box)
    speed = make_speed(field, "vsrw")
    hk = solve_static(field, speed, box.center_vid, [0.5, 1.0, 2.0])
    for i, t in enumerate([0.5, 1.0, 2.0]):
        assert hk.prob[i, box.center_vid] == pytest.approx(
            constant_walk_diagonal(t, 2), abs=1e-9)


def test_torus_off_diagonal_factorizes():
    box = build_box(2, 35)
    field = constant_field(box)
    hk = solve_static(field, make_speed(field, "vsrw"), box.center_vid, [1.5])
    t = 1.5
    for dx, dy in [(1, 0), (2, 1), (0, 3)]:
        vid = box.vid_of(np.array([dx, dy]))
        ref = float(ive(dx, 2 * t) * ive(dy, 2 * t))
        assert hk.prob[0, vid] == pytest.approx(ref, abs=1e-9)


def test_conductance_scaling_is_time_change():
    box = build_box(2, 9)
    c = 3.0
    fast = constant_field(box, c)
    slow = constant_field(box, 1.0)
    speed = make_speed(fast, "vsrw")
    a = solve_static(fast, speed, 0, [0.8])
    b = solve_static(slow, make_speed(slow, "vsrw"), 0, [0.8 * c])
    assert np.max(np.abs(a.prob[0] - b.prob[0])) < 1e-11


def test_csrw_is_vsrw_run_slower_on_constant_field():
    # with unit conductances in d = 2 every vertex weight is 4
    box = build_box(2, 9)
    field = constant_field(box)
    t = 2.0
    csrw = solve_static(field, make_speed(field, "csrw"), 0, [t])
    vsrw = solve_static(field, make_speed(field, "vsrw"), 0, [t / 4.0])
    assert np.max(np.abs(csrw.prob[0] - vsrw.prob[0])) < 1e-11


# ---------------------------------------------------------------------------
# structural kernel properties
# ---------------------------------------------------------------------------


def test_kernel_symmetry_in_speed_weights():
    box = build_box(2, 7)
    field = sample_iid(box, DistSpec("log-uniform", (0.5, 2.0)), 4)
    speed = make_speed(field, "csrw")
    x, y, t = 3, 31, 1.2
    from_x = solve_static(field, speed, x, [t])
    from_y = solve_static(field, speed, y, [t])
    assert from_x.kernel(0)[y] == pytest.approx(from_y.kernel(0)[x], abs=1e-12)


def test_mass_conservation_and_positivity():
    box = build_box(2, 7)
    field = sample_iid(box, DistSpec("log-uniform", (0.5, 2.0)), 6)
    params = SolverParams(eps_trunc=1e-12)
    hk = solve_static(field, make_speed(field, "vsrw"), 0, [0.5, 2.0, 5.0],
                      params)
    assert (hk.prob >= 0.0).all()
    for i in range(3):
        assert abs(hk.prob[i].sum() - 1.0) <= (i + 1) * params.eps_trunc
    assert hk.meta["final_mass_defect"] <= 3 * params.eps_trunc


def test_stationary_start_is_preserved():
    box = build_box(2, 7)
    field = sample_iid(box, DistSpec("uniform", (0.5, 2.0)), 2)
    speed = make_speed(field, "csrw")
    pi = speed.theta / speed.theta.sum()
    hk = solve_static(field, speed, 0, [2.0], start_vec=pi)
    assert np.max(np.abs(hk.prob[0] - pi)) < 1e-12


def test_chapman_kolmogorov_defect_is_tiny():
    box = build_box(2, 9)
    field = sample_iid(box, DistSpec("log-uniform", (0.5, 2.0)), 1)
    defect = chapman_kolmogorov_check(field, make_speed(field, "csrw"),
                                      0, 0.7, 1.3)
    assert defect < 1e-10


def test_dynamic_midpoint_freezing_converges():
    # a smoothly varying environment: halving the step should cut the error
    from rcmlab.environment import SmoothEnvironment

    box = build_box(2, 5)
    e = box.n_edges
    phase = np.linspace(0.0, np.pi, e)

    def omega_fn(t):
        return 1.0 + 0.5 * np.sin(2.0 * t + phase)

    env = SmoothEnvironment(box, 0.0, 1.0, omega_fn, dominating_rate=6.0)
    sols = {}
    for dt in (0.1, 0.05, 0.0125):
        params = SolverParams(dt_dynamic=dt)
        sols[dt] = solve_dynamic(env, 0, 0.0, [1.0], params).prob[0]
    ref = solve_dynamic(env, 0, 0.0, [1.0], SolverParams(dt_dynamic=0.002)).prob[0]
    e1 = np.max(np.abs(sols[0.1] - ref))
    e2 = np.max(np.abs(sols[0.05] - ref))
    e3 = np.max(np.abs(sols[0.0125] - ref))
    assert e3 < e2 < e1
    assert e2 < 0.35 * e1  # midpoint freezing is second order


def test_event_aligned_dynamic_needs_no_refinement():
    box = build_box(2, 5)
    env = resampling_environment(box, DistSpec("uniform", (0.5, 2.0)),
                                 rate=1.0, t_start=0.0, t_end=2.0, seed=3)
    n_changes = env.change_times().size
    hk = solve_dynamic(env, 0, 0.0, [2.0])
    assert hk.meta["steps"] <= n_changes + 1


def test_solver_guards():
    box = build_box(2, 5)
    field = constant_field(box)
    speed = make_speed(field, "vsrw")
    with pytest.raises(KOverflowError):
        solve_static(field, speed, 0, [10.0], SolverParams(lam_t_max=10.0))
    assert issubclass(KOverflowError, SolverError)
    with pytest.raises(SolverError):
        solve_static(field, speed, 0, [])
    with pytest.raises(SolverError):
        solve_static(field, speed, 0, [2.0, 1.0])
    with pytest.raises(SolverError):
        SolverParams(eps_trunc=0.5)
    env = lift_static(field, 0.0, 1.0)
    with pytest.raises(SolverError):
        solve_dynamic(env, 0, 0.5, [0.2])


def test_streamed_solve_matches_stored():
    box = build_box(2, 7)
    field = sample_iid(box, DistSpec("log-uniform", (0.5, 2.0)), 13)
    speed = make_speed(field, "vsrw")
    seen = []
    hk = solve_static(field, speed, 0, [0.5, 1.5],
                      collect=lambda i, t, v: seen.append((i, t, v.copy())),
                      store=False)
    assert hk.prob is None
    with pytest.raises(SolverError):
        hk.kernel(0)
    stored = solve_static(field, speed, 0, [0.5, 1.5])
    assert [s[0] for s in seen] == [0, 1]
    assert np.array_equal(seen[0][2], stored.prob[0])
    assert np.array_equal(seen[1][2], stored.prob[1])


def test_kernel_accessor_divides_by_speed():
    box = build_box(2, 5)
    field = sample_iid(box, DistSpec("uniform", (0.5, 2.0)), 0)
    speed = make_speed(field, "csrw")
    hk = solve_static(field, speed, 0, [1.0])
    assert np.allclose(hk.kernel(0), hk.prob[0] / speed.theta)
    env = lift_static(field, 0.0, 1.0)
    dyn = solve_dynamic(env, 0, 0.0, [1.0])
    assert np.array_equal(dyn.kernel(0), dyn.prob[0])
