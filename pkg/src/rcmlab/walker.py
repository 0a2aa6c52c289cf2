"""Monte Carlo paths of the continuous-time walks.

The walk at a vertex x waits an exponential time of mean theta(x)/mu(x) and
then jumps to a neighbor chosen with probability proportional to the edge
weight.  Paths run on tori only: the closure sentinel of an absorbing box has
no jump target.

All randomness is drawn host-side into flat per-path buffers that the hot
kernels consume, so endpoint samples are bit-identical across the numba and
numpy backends for a fixed seed.  Paths whose jump budget runs out are rerun
with a doubled buffer drawn from a fresh attempt-keyed stream; the merge is
by path index, so the retry protocol is deterministic too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from ._rng import stream
from .environment import (ConductanceField, DistSpec, DynamicEnvironment,
                          SpeedMeasure, make_speed, sample_iid)
from .lattice import LatticeBox


class WalkerError(RuntimeError):
    pass


class DiffusiveScaleTooLarge(WalkerError):
    """The horizon is long enough for paths to feel the torus wrap."""


class DominationViolated(WalkerError):
    """A dynamic environment exceeded its declared dominating rate."""


def _jump_tables(field: ConductanceField, speed: SpeedMeasure):
    w = field.omega[field.box.inc]
    rate = w.sum(axis=1) / speed.theta
    cumw = np.cumsum(w, axis=1)
    cumw /= cumw[:, -1:]
    cumw[:, -1] = 1.0
    return rate, cumw


def _check_scale(box: LatticeBox, rate_bound: float, horizon: float,
                 allow_wrap: bool):
    if box.boundary != "periodic":
        raise WalkerError("paths are defined on periodic boxes only")
    if allow_wrap:
        return
    reach = 6.0 * math.sqrt(rate_bound * horizon + 1.0)
    if reach >= box.half:
        raise DiffusiveScaleTooLarge(
            f"6*sqrt(rate*t) = {reach:.1f} reaches half-side {box.half}; "
            "enlarge the box, shorten the horizon, or pass allow_wrap=True")


def _buffer_cap(mean_events: float) -> int:
    return int(mean_events + 8.0 * math.sqrt(mean_events + 4.0) + 16.0)


@dataclass
class EndpointSample:
    vid: np.ndarray = dc_field(repr=False)       # (n,) final vertex ids
    disp: np.ndarray = dc_field(repr=False)      # (n, d) unwrapped displacements
    jumps: np.ndarray = dc_field(repr=False)     # (n,) jump counts
    t: float = 0.0
    meta: dict = dc_field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.vid.shape[0]


def sample_static_endpoints(field: ConductanceField, speed: SpeedMeasure,
                            x0_vid: int, t_end: float, n_paths: int, seed: int,
                            *, chunk: int = 1024, allow_wrap: bool = False,
                            max_attempts: int = 10,
                            stream_tag: tuple = ()) -> EndpointSample:
    box = field.box
    rate, cumw = _jump_tables(field, speed)
    _check_scale(box, float(rate.max()), float(t_end), allow_wrap)
    dirs = box.dirs.astype(np.int64)
    nbr = box.nbr

    vid = np.empty(n_paths, dtype=np.int64)
    disp = np.empty((n_paths, box.d), dtype=np.int64)
    jumps = np.empty(n_paths, dtype=np.int64)
    cap0 = _buffer_cap(float(rate.mean()) * float(t_end))
    retries = 0
    for c0 in range(0, n_paths, chunk):
        c1 = min(c0 + chunk, n_paths)
        pend = np.arange(c0, c1)
        cap = cap0
        attempt = 0
        while pend.size:
            if attempt >= max_attempts:
                raise WalkerError("paths kept exhausting their jump buffers")
            rng = stream(seed, "static-walk", *stream_tag, c0, attempt)
            u_exp = 1.0 - rng.random((pend.size, cap))
            u_dir = rng.random((pend.size, cap))
            o_vid = np.empty(pend.size, dtype=np.int64)
            o_disp = np.empty((pend.size, box.d), dtype=np.int64)
            o_jump = np.empty(pend.size, dtype=np.int64)
            o_ok = np.empty(pend.size, dtype=np.int64)
            _kernels.walk_static_batch(nbr, cumw, rate, dirs, int(x0_vid),
                                       float(t_end), u_exp, u_dir,
                                       o_vid, o_disp, o_jump, o_ok)
            done = o_ok == 1
            vid[pend[done]] = o_vid[done]
            disp[pend[done]] = o_disp[done]
            jumps[pend[done]] = o_jump[done]
            pend = pend[~done]
            retries += int(np.count_nonzero(~done))
            attempt += 1
            cap *= 2
    meta = {"seed": int(seed), "retried_paths": retries,
            "backend": _kernels.backend_name()}
    return EndpointSample(vid=vid, disp=disp, jumps=jumps, t=float(t_end),
                          meta=meta)


def sample_dynamic_endpoints(env: DynamicEnvironment, x0_vid: int,
                             t_from: float, t_end: float, n_paths: int,
                             seed: int, *, chunk: int = 1024,
                             allow_wrap: bool = False, max_attempts: int = 10,
                             stream_tag: tuple = ()) -> EndpointSample:
    """Endpoints of the vertex-speed walk in a piecewise-constant environment,
    sampled by thinning against the environment's dominating rate."""
    box = env.box
    off, times, vals = env.tables()
    lam = float(env.suggest_dominating_rate())
    horizon = float(t_end) - float(t_from)
    if horizon <= 0:
        raise WalkerError("need t_end > t_from")
    env._check_t(t_from)
    env._check_t(t_end)
    _check_scale(box, lam, horizon, allow_wrap)
    dirs = box.dirs.astype(np.int64)

    vid = np.empty(n_paths, dtype=np.int64)
    disp = np.empty((n_paths, box.d), dtype=np.int64)
    jumps = np.empty(n_paths, dtype=np.int64)
    cap0 = _buffer_cap(lam * horizon)
    retries = 0
    for c0 in range(0, n_paths, chunk):
        c1 = min(c0 + chunk, n_paths)
        pend = np.arange(c0, c1)
        cap = cap0
        attempt = 0
        while pend.size:
            if attempt >= max_attempts:
                raise WalkerError("paths kept exhausting their event buffers")
            rng = stream(seed, "dynamic-walk", *stream_tag, c0, attempt)
            u_exp = 1.0 - rng.random((pend.size, cap))
            u_acc = rng.random((pend.size, cap))
            u_dir = rng.random((pend.size, cap))
            o_vid = np.empty(pend.size, dtype=np.int64)
            o_disp = np.empty((pend.size, box.d), dtype=np.int64)
            o_jump = np.empty(pend.size, dtype=np.int64)
            o_ok = np.empty(pend.size, dtype=np.int64)
            o_bad = np.empty(pend.size, dtype=np.int64)
            _kernels.walk_dynamic_tables_batch(
                box.nbr, box.inc, dirs, off, times, vals, lam, int(x0_vid),
                float(t_from), float(t_end), u_exp, u_acc, u_dir,
                o_vid, o_disp, o_jump, o_ok, o_bad)
            if o_bad.any():
                raise DominationViolated(
                    "an edge neighborhood outran the dominating rate")
            done = o_ok == 1
            vid[pend[done]] = o_vid[done]
            disp[pend[done]] = o_disp[done]
            jumps[pend[done]] = o_jump[done]
            pend = pend[~done]
            retries += int(np.count_nonzero(~done))
            attempt += 1
            cap *= 2
    meta = {"seed": int(seed), "retried_paths": retries, "lam": lam,
            "backend": _kernels.backend_name()}
    return EndpointSample(vid=vid, disp=disp, jumps=jumps, t=horizon, meta=meta)


# ---------------------------------------------------------------------------
# single recorded path (reference implementation, host rng)
# ---------------------------------------------------------------------------


@dataclass
class RecordedPath:
    times: np.ndarray = dc_field(repr=False)  # jump times, starting entry 0.0
    vids: np.ndarray = dc_field(repr=False)   # visited vertices, len(times)
    disp: np.ndarray = dc_field(repr=False)   # final unwrapped displacement
    t_end: float = 0.0


def simulate_static(field: ConductanceField, speed: SpeedMeasure, x0_vid: int,
                    t_end: float, seed: int) -> RecordedPath:
    """One fully recorded path, advanced step by step on the host.

    Exists as an independent cross-check of the batched kernel: same waiting
    law and jump law, different code path and different randomness layout.
    """
    box = field.box
    if box.boundary != "periodic":
        raise WalkerError("paths are defined on periodic boxes only")
    rate, cumw = _jump_tables(field, speed)
    rng = stream(seed, "recorded-walk")
    t = 0.0
    v = int(x0_vid)
    ts = [0.0]
    vs = [v]
    disp = np.zeros(box.d, dtype=np.int64)
    dirs = box.dirs.astype(np.int64)
    while True:
        t += rng.exponential(1.0 / rate[v])
        if t > t_end:
            break
        k = int(np.searchsorted(cumw[v], rng.random()))
        v = int(box.nbr[v, k])
        disp += dirs[k]
        ts.append(t)
        vs.append(v)
    return RecordedPath(times=np.array(ts), vids=np.array(vs, dtype=np.int64),
                        disp=disp, t_end=float(t_end))


# ---------------------------------------------------------------------------
# derived estimates
# ---------------------------------------------------------------------------


@dataclass
class EmpiricalKernel:
    counts: np.ndarray = dc_field(repr=False)
    n_paths: int = 0
    t: float = 0.0

    @property
    def prob(self) -> np.ndarray:
        return self.counts / self.n_paths

    def three_sigma(self, p_ref: np.ndarray) -> np.ndarray:
        """Pointwise 3-sigma band around reference occupation probabilities."""
        return 3.0 * np.sqrt(p_ref * (1.0 - p_ref) / self.n_paths)


def empirical_kernel(field: ConductanceField, speed: SpeedMeasure, x0_vid: int,
                     t: float, n_paths: int, seed: int, *, chunk: int = 2048,
                     allow_wrap: bool = True) -> EmpiricalKernel:
    sample = sample_static_endpoints(field, speed, x0_vid, t, n_paths, seed,
                                     chunk=chunk, allow_wrap=allow_wrap)
    counts = np.bincount(sample.vid, minlength=field.box.n_vertices)
    return EmpiricalKernel(counts=counts.astype(np.int64), n_paths=n_paths,
                           t=float(t))


@dataclass
class SigmaEstimate:
    matrix: np.ndarray          # (d, d) estimated diffusion matrix
    stderr: np.ndarray          # (d, d) batch-means standard error
    drift: np.ndarray           # (d,) displacement mean over t
    n_paths: int
    t: float
    kind: str
    meta: dict = dc_field(default_factory=dict)


def _second_moment(disp: np.ndarray, t: float) -> np.ndarray:
    x = disp.astype(float)
    return x.T @ x / (disp.shape[0] * t)


def estimate_sigma_quenched(field: ConductanceField, speed: SpeedMeasure,
                            t: float, n_paths: int, seed: int,
                            n_batches: int = 32, *,
                            x0_vid: int | None = None,
                            allow_wrap: bool = False) -> SigmaEstimate:
    """Diffusion matrix of one environment from path second moments."""
    x0 = field.box.center_vid if x0_vid is None else int(x0_vid)
    sample = sample_static_endpoints(field, speed, x0, t, n_paths, seed,
                                     allow_wrap=allow_wrap)
    mat = _second_moment(sample.disp, t)
    parts = np.array_split(sample.disp, n_batches)
    batch = np.stack([_second_moment(p, t) for p in parts])
    stderr = batch.std(axis=0, ddof=1) / math.sqrt(n_batches)
    drift = sample.disp.mean(axis=0) / t
    return SigmaEstimate(matrix=mat, stderr=stderr, drift=drift,
                         n_paths=n_paths, t=float(t), kind="quenched",
                         meta={"seed": int(seed)})


def estimate_sigma_annealed(box: LatticeBox, dist: DistSpec, speed_kind: str,
                            t: float, n_envs: int, paths_per_env: int,
                            seed: int, *,
                            allow_wrap: bool = False) -> SigmaEstimate:
    """Diffusion matrix averaged over environments; error bars across them."""
    env_seeds = stream(seed, "annealed-env-seeds").integers(0, 2**62, n_envs)
    mats = np.empty((n_envs, box.d, box.d))
    drifts = np.empty((n_envs, box.d))
    x0 = box.center_vid
    for e in range(n_envs):
        field = sample_iid(box, dist, int(env_seeds[e]))
        speed = make_speed(field, speed_kind)
        sample = sample_static_endpoints(field, speed, x0, t, paths_per_env,
                                         seed, allow_wrap=allow_wrap,
                                         stream_tag=("env", e))
        mats[e] = _second_moment(sample.disp, t)
        drifts[e] = sample.disp.mean(axis=0) / t
    mat = mats.mean(axis=0)
    stderr = mats.std(axis=0, ddof=1) / math.sqrt(n_envs)
    return SigmaEstimate(matrix=mat, stderr=stderr, drift=drifts.mean(axis=0),
                         n_paths=n_envs * paths_per_env, t=float(t),
                         kind="annealed",
                         meta={"seed": int(seed), "n_envs": n_envs})
