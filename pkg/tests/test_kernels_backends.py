"""The compiled kernels and their numpy fallbacks must agree bit for bit.

Every kernel consumes host-generated randomness through explicit buffers, so both
backends see identical inputs; the assertions here are exact equality, not
tolerance comparisons.
"""

import os
import subprocess
import sys

import numpy as np
import pytest

from rcmlab import _kernels
from rcmlab._kernels import (
    HAS_NUMBA,
    PY_IMPLS,
    NB_IMPLS,
    backend_name,
    gather_step,
)
from rcmlab.environment import make_speed, sample_iid, DistSpec, resampling_environment
from rcmlab.lattice import build_box

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba not importable")


def test_backend_name_resolves():
    assert backend_name() in ("numba", "numpy")
    if HAS_NUMBA and os.environ.get("RCMLAB_BACKEND", "auto") == "auto":
        assert backend_name() == "numba"


def _gather_inputs(seed=0, n=60, deg=4):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    diag = rng.uniform(-2.0, 0.0, n)
    nbr = rng.integers(0, n, (n, deg))
    w = rng.uniform(0.0, 1.0, (n, deg))
    return v, diag, nbr, w


@needs_numba
def test_gather_step_backends_identical():
    v, diag, nbr, w = _gather_inputs()
    out_py = PY_IMPLS["gather_step"](np.empty_like(v), v, diag, nbr, w)
    out_nb = NB_IMPLS["gather_step"](np.empty_like(v), v, diag, nbr, w)
    assert np.array_equal(out_py, out_nb)


def test_gather_step_formula():
    v, diag, nbr, w = _gather_inputs(seed=3)
    out = gather_step(np.empty_like(v), v, diag, nbr, w)
    want = v * diag
    for k in range(nbr.shape[1]):
        want = want + v[nbr[:, k]] * w[:, k]
    np.testing.assert_allclose(out, want, rtol=1e-13)


def _static_walk_inputs(seed=1, npaths=64, buf=128, t_end=3.0):
    box = build_box(2, 9, "periodic")
    field = sample_iid(box, DistSpec("log-uniform", (0.5, 2.0)), seed=seed)
    speed = make_speed(field, "vsrw")
    rng = np.random.default_rng(seed + 10)
    # per-vertex jump tables in the layout the kernels expect
    w = field.omega[box.inc]
    rate = w.sum(axis=1) / speed.theta
    cumw = np.cumsum(w / w.sum(axis=1, keepdims=True), axis=1)
    cumw[:, -1] = 1.0
    u_exp = rng.uniform(1e-12, 1.0, (npaths, buf))
    u_dir = rng.uniform(0.0, 1.0, (npaths, buf))
    args = (box.nbr, cumw, rate, box.dirs, box.center_vid, t_end, u_exp, u_dir)
    return box, args


def _static_outputs(npaths, d):
    return (np.empty(npaths, np.int64), np.empty((npaths, d), np.int64),
            np.empty(npaths, np.int64), np.empty(npaths, np.int64))


@needs_numba
def test_walk_static_backends_identical():
    box, args = _static_walk_inputs()
    outs_py = _static_outputs(64, box.d)
    outs_nb = _static_outputs(64, box.d)
    PY_IMPLS["walk_static"](*args, *outs_py)
    NB_IMPLS["walk_static"](*args, *outs_nb)
    for a, b in zip(outs_py, outs_nb):
        assert np.array_equal(a, b)
    assert outs_py[3].all()  # buffer large enough: every path completed


def test_walk_static_replay_single_path():
    box, args = _static_walk_inputs(seed=7, npaths=4)
    nbr, cumw, rate, dirs, start, t_end, u_exp, u_dir = args
    outs = _static_outputs(4, box.d)
    PY_IMPLS["walk_static"](*args, *outs)
    for p in range(4):
        v, t, jumps = start, 0.0, 0
        disp = np.zeros(box.d, np.int64)
        while True:
            t += -np.log(u_exp[p, jumps]) / rate[v]
            if t > t_end:
                break
            u = u_dir[p, jumps]
            k = 0
            while k < nbr.shape[1] - 1 and u > cumw[v, k]:
                k += 1
            disp += dirs[k]
            v = nbr[v, k]
            jumps += 1
        assert outs[0][p] == v
        assert np.array_equal(outs[1][p], disp)
        assert outs[2][p] == jumps


def test_walk_static_flags_exhausted_buffers():
    box, args = _static_walk_inputs(npaths=16, buf=2, t_end=50.0)
    outs = _static_outputs(16, box.d)
    PY_IMPLS["walk_static"](*args, *outs)
    assert not outs[3].any()


def _dynamic_walk_inputs(seed=2, npaths=32, buf=256, lam=None):
    box = build_box(2, 9, "periodic")
    env = resampling_environment(box, DistSpec("log-uniform", (0.5, 2.0)),
                                 rate=1.0, t_start=0.0, t_end=2.0,
                                 seed=seed + 1)
    if lam is None:
        lam = env.suggest_dominating_rate()
    rng = np.random.default_rng(seed + 20)
    u_exp = rng.uniform(1e-12, 1.0, (npaths, buf))
    u_acc = rng.uniform(0.0, 1.0, (npaths, buf))
    u_dir = rng.uniform(0.0, 1.0, (npaths, buf))
    args = (box.nbr, box.inc, box.dirs, env.off, env.times, env.vals,
            float(lam), box.center_vid, 0.0, 2.0, u_exp, u_acc, u_dir)
    return box, args


def _dynamic_outputs(npaths, d):
    return (np.empty(npaths, np.int64), np.empty((npaths, d), np.int64),
            np.empty(npaths, np.int64), np.empty(npaths, np.int64),
            np.empty(npaths, np.int64))


@needs_numba
def test_walk_dynamic_backends_identical():
    box, args = _dynamic_walk_inputs()
    outs_py = _dynamic_outputs(32, box.d)
    outs_nb = _dynamic_outputs(32, box.d)
    PY_IMPLS["walk_dynamic_tables"](*args, *outs_py)
    NB_IMPLS["walk_dynamic_tables"](*args, *outs_nb)
    for a, b in zip(outs_py, outs_nb):
        assert np.array_equal(a, b)
    assert outs_py[3].all()
    assert not outs_py[4].any()


def test_walk_dynamic_flags_rate_violation():
    # local totals are at least 4*0.5 = 2, so every evaluated candidate
    # must trip the flag; paths without a candidate inside the horizon
    # terminate clean but jumpless
    box, args = _dynamic_walk_inputs(lam=1.9)
    outs = _dynamic_outputs(32, box.d)
    PY_IMPLS["walk_dynamic_tables"](*args, *outs)
    assert outs[4].any()
    assert (outs[2] == 0).all()
    assert (outs[0][outs[4] == 0] == box.center_vid).all()


@needs_numba
@pytest.mark.parametrize("kind", [0, 1])
def test_langevin_chunk_backends_identical(kind):
    box = build_box(2, 5, "absorbing")
    rng = np.random.default_rng(11)
    phi0 = rng.standard_normal(box.n_vertices) * 0.3
    noise = rng.standard_normal((37, box.n_vertices)) * 0.05
    phi_py = phi0.copy()
    phi_nb = phi0.copy()
    g_py = PY_IMPLS["langevin_chunk"](phi_py, np.empty_like(phi0), box.nbr,
                                      kind, 0.1, 0.0, 0.004, noise)
    g_nb = NB_IMPLS["langevin_chunk"](phi_nb, np.empty_like(phi0), box.nbr,
                                      kind, 0.1, 0.0, 0.004, noise)
    assert np.array_equal(phi_py, phi_nb)
    assert g_py == g_nb
    assert not np.array_equal(phi_py, phi0)


def test_dispatch_respects_runtime_flag(monkeypatch):
    def boom(*args, **kwargs):
        raise AssertionError("compiled path used while disabled")

    monkeypatch.setattr(_kernels, "USE_NUMBA", False)
    monkeypatch.setattr(_kernels, "_gather_step_nb", boom)
    assert _kernels.backend_name() == "numpy"
    v, diag, nbr, w = _gather_inputs(seed=5)
    _kernels.gather_step(np.empty_like(v), v, diag, nbr, w)  # must not boom

    called = {}

    def recorder(out, *args):
        called["yes"] = True
        return out

    monkeypatch.setattr(_kernels, "USE_NUMBA", True)
    monkeypatch.setattr(_kernels, "_gather_step_nb", recorder)
    assert _kernels.backend_name() == "numba"
    _kernels.gather_step(np.empty_like(v), v, diag, nbr, w)
    assert called.get("yes")


def _spawn(env_value):
    env = dict(os.environ)
    env["RCMLAB_BACKEND"] = env_value
    code = "import rcmlab._kernels as k; print(k.backend_name())"
    return subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)


def test_env_variable_selects_backend():
    res = _spawn("numpy")
    assert res.returncode == 0 and res.stdout.strip() == "numpy"
    if HAS_NUMBA:
        res = _spawn("numba")
        assert res.returncode == 0 and res.stdout.strip() == "numba"
    res = _spawn("sparkle")
    assert res.returncode != 0
    assert "RCMLAB_BACKEND" in res.stderr
