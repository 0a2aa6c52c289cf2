"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Backend selection is driven by the environment variable ``RCMLAB_BACKEND``:

* ``auto``  (default) -- use numba when importable, else numpy
* ``numba`` -- require numba, fail loudly if missing
* ``numpy`` -- force the fallback even when numba is installed

Both backends consume randomness exclusively through host-generated buffers
(numpy ``Generator`` output passed in as arrays), and the fallback mirrors the
loop arithmetic order of the compiled kernels element by element.  A given
(seed, input) pair therefore produces bit-identical results on either backend;
``benchmarks/bench_kernels.py`` compares their throughput.
"""

from __future__ import annotations

import math
import os

import numpy as np

_BACKEND_REQUEST = os.environ.get("RCMLAB_BACKEND", "auto").strip().lower()
if _BACKEND_REQUEST not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"RCMLAB_BACKEND must be one of auto|numba|numpy, got {_BACKEND_REQUEST!r}"
    )

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAS_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(fn):
            return fn

        return wrap


if _BACKEND_REQUEST == "numba" and not HAS_NUMBA:
    raise RuntimeError("RCMLAB_BACKEND=numba but numba is not importable")

USE_NUMBA = HAS_NUMBA and _BACKEND_REQUEST != "numpy"


def backend_name() -> str:
    """Resolved backend for this process: 'numba' or 'numpy'."""
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# loop sources (plain python; numba-compilable as written)
# ---------------------------------------------------------------------------


def _gather_step_loops(out, v, diag, nbr, w_in):
    n, deg = nbr.shape
    for i in range(n):
        acc = v[i] * diag[i]
        for k in range(deg):
            acc += v[nbr[i, k]] * w_in[i, k]
        out[i] = acc
    return out


def _walk_static_loops(nbr, cumw, rate, dirs, start_vid, t_end, u_exp, u_dir,
                       out_vid, out_disp, out_jumps, out_ok):
    npaths, buf = u_exp.shape
    deg = nbr.shape[1]
    d = dirs.shape[1]
    for p in range(npaths):
        v = start_vid
        t = 0.0
        j = 0
        ok = 1
        for q in range(d):
            out_disp[p, q] = 0
        while True:
            if j >= buf:
                ok = 0
                break
            t += -math.log(u_exp[p, j]) / rate[v]
            if t > t_end:
                break
            u = u_dir[p, j]
            k = 0
            while k < deg - 1 and u > cumw[v, k]:
                k += 1
            v = nbr[v, k]
            for q in range(d):
                out_disp[p, q] += dirs[k, q]
            j += 1
        out_vid[p] = v
        out_jumps[p] = j
        out_ok[p] = ok


def _walk_dynamic_tables_loops(nbr, inc, dirs, off, times, vals, lam,
                               start_vid, t_start, t_end, u_exp, u_acc, u_dir,
                               out_vid, out_disp, out_jumps, out_ok, out_bad):
    npaths, buf = u_exp.shape
    deg = nbr.shape[1]
    d = dirs.shape[1]
    w = np.empty(deg)
    for p in range(npaths):
        v = start_vid
        t = t_start
        j = 0
        ok = 1
        bad = 0
        for q in range(d):
            out_disp[p, q] = 0
        while True:
            if j >= buf:
                ok = 0
                break
            t += -math.log(u_exp[p, j]) / lam
            if t > t_end:
                break
            # conductances of the incident edges at the candidate time
            mu = 0.0
            for k in range(deg):
                e = inc[v, k]
                lo = off[e]
                hi = off[e + 1]
                # rightmost change time <= t (slices start at the horizon start)
                while hi - lo > 1:
                    mid = (lo + hi) // 2
                    if times[mid] <= t:
                        lo = mid
                    else:
                        hi = mid
                w[k] = vals[lo]
                mu += w[k]
            if mu > lam:
                bad = 1
                break
            if u_acc[p, j] * lam <= mu:
                target = u_dir[p, j] * mu
                acc = 0.0
                k = 0
                while k < deg - 1:
                    acc += w[k]
                    if target <= acc:
                        break
                    k += 1
                v = nbr[v, k]
                for q in range(d):
                    out_disp[p, q] += dirs[k, q]
            j += 1
        out_vid[p] = v
        out_jumps[p] = j
        out_ok[p] = ok
        out_bad[p] = bad


def _langevin_chunk_loops(phi, scratch, nbr, kind, lam, m2, dt, noise):
    nsteps, n = noise.shape
    deg = nbr.shape[1]
    gmax = 0.0
    for s in range(nsteps):
        for i in range(n):
            drift = 0.0
            for k in range(deg):
                u = nbr[i, k]
                if u >= 0:
                    g = phi[i] - phi[u]
                else:
                    g = phi[i]
                ag = abs(g)
                if ag > gmax:
                    gmax = ag
                if kind == 0:
                    drift += g
                else:
                    drift += 2.0 * g + 4.0 * lam * g * g * g
            drift += m2 * phi[i]
            scratch[i] = phi[i] - dt * drift + noise[s, i]
        for i in range(n):
            phi[i] = scratch[i]
    return gmax


if USE_NUMBA:
    _gather_step_nb = njit(cache=True)(_gather_step_loops)
    _walk_static_nb = njit(cache=True)(_walk_static_loops)
    _walk_dynamic_tables_nb = njit(cache=True)(_walk_dynamic_tables_loops)
    _langevin_chunk_nb = njit(cache=True)(_langevin_chunk_loops)
else:
    _gather_step_nb = None
    _walk_static_nb = None
    _walk_dynamic_tables_nb = None
    _langevin_chunk_nb = None


# ---------------------------------------------------------------------------
# vectorized numpy fallbacks
# ---------------------------------------------------------------------------


def _gather_step_np(out, v, diag, nbr, w_in):
    # accumulation order matches the loop source: diag term, then k = 0..deg-1
    np.multiply(v, diag, out=out)
    for k in range(nbr.shape[1]):
        out += v[nbr[:, k]] * w_in[:, k]
    return out


def _langevin_chunk_np(phi, scratch, nbr, kind, lam, m2, dt, noise):
    nsteps = noise.shape[0]
    deg = nbr.shape[1]
    gmax = 0.0
    pinned = nbr < 0
    any_pinned = bool(pinned.any())
    for s in range(nsteps):
        drift = np.zeros_like(phi)
        for k in range(deg):
            if any_pinned:
                pu = np.where(pinned[:, k], 0.0, phi[nbr[:, k]])
            else:
                pu = phi[nbr[:, k]]
            g = phi - pu
            gm = float(np.max(np.abs(g)))
            if gm > gmax:
                gmax = gm
            if kind == 0:
                drift += g
            else:
                drift += 2.0 * g + 4.0 * lam * g * g * g
        drift += m2 * phi
        scratch[:] = phi - dt * drift + noise[s]
        phi[:] = scratch
    return gmax


# ---------------------------------------------------------------------------
# public dispatch
# ---------------------------------------------------------------------------


def gather_step(out, v, diag, nbr, w_in):
    """One propagation sub-step: out[i] = v[i]*diag[i] + sum_k v[nbr[i,k]]*w_in[i,k]."""
    if USE_NUMBA:
        return _gather_step_nb(out, v, diag, nbr, w_in)
    return _gather_step_np(out, v, diag, nbr, w_in)


def walk_static_batch(nbr, cumw, rate, dirs, start_vid, t_end, u_exp, u_dir,
                      out_vid, out_disp, out_jumps, out_ok):
    """Batch of constant-environment walk paths driven by uniform buffers.

    Each path consumes one entry of ``u_exp`` (holding time) and one of
    ``u_dir`` (jump target) per attempted event, in lockstep; paths that
    exhaust their buffer are flagged in ``out_ok`` for the caller to retry.
    """
    fn = _walk_static_nb if USE_NUMBA else _walk_static_loops
    fn(nbr, cumw, rate, dirs, start_vid, t_end, u_exp, u_dir,
       out_vid, out_disp, out_jumps, out_ok)


def walk_dynamic_tables_batch(nbr, inc, dirs, off, times, vals, lam,
                              start_vid, t_start, t_end, u_exp, u_acc, u_dir,
                              out_vid, out_disp, out_jumps, out_ok, out_bad):
    """Batch of time-dependent walk paths by exact thinning over edge tables.

    Candidate events arrive at the dominating rate ``lam``; each consumes one
    entry of each buffer.  ``out_bad`` flags paths that observed a local total
    rate above ``lam`` (the caller must abort, never clip).
    """
    fn = _walk_dynamic_tables_nb if USE_NUMBA else _walk_dynamic_tables_loops
    fn(nbr, inc, dirs, off, times, vals, lam, start_vid, t_start, t_end,
       u_exp, u_acc, u_dir, out_vid, out_disp, out_jumps, out_ok, out_bad)


def langevin_chunk(phi, scratch, nbr, kind, lam, m2, dt, noise):
    """Advance explicit-Euler interface dynamics by ``noise.shape[0]`` steps.

    ``noise`` must already be scaled by sqrt(2*dt).  Neighbor index -1 denotes
    a pinned zero-height neighbor.  Returns the largest |gradient| observed,
    from which the caller re-validates the step-size guard.
    """
    if USE_NUMBA:
        return _langevin_chunk_nb(phi, scratch, nbr, kind, lam, m2, dt, noise)
    return _langevin_chunk_np(phi, scratch, nbr, kind, lam, m2, dt, noise)


# explicit per-backend handles for the benchmark and equality tests
PY_IMPLS = {
    "gather_step": _gather_step_np,
    "walk_static": _walk_static_loops,
    "walk_dynamic_tables": _walk_dynamic_tables_loops,
    "langevin_chunk": _langevin_chunk_np,
}
NB_IMPLS = {
    "gather_step": _gather_step_nb,
    "walk_static": _walk_static_nb,
    "walk_dynamic_tables": _walk_dynamic_tables_nb,
    "langevin_chunk": _langevin_chunk_nb,
}
