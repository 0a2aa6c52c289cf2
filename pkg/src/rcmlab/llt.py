"""Local-limit diagnostics: rescaled kernels against Gaussian densities.

The rescaled kernel n^d p(n^2 t, 0, floor(nx)) is compared with a*k_t(x),
where k_t is the Gaussian density with covariance t*Sigma^2 and the factor a
is the inverse mean speed weight (absent for dynamic walks, whose kernel
lives against counting measure).  Sup errors run over every lattice point of
the window |x|_inf <= K and a finite time grid in [T1, T2]; boxes are sized
so that several diffusive lengths separate the window from the torus wrap.

Also here: on-diagonal decay fits, near-diagonal minima, and the oscillation
of caloric functions over shrinking space-time cylinders (the contraction
factor gamma and the Hoelder exponent it implies).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .environment import (ConductanceField, DistSpec, DynamicEnvironment,
                          constant_field, make_speed, resampling_environment,
                          sample_iid)
from ._rng import stream
from .heatkernel import SolverParams, solve_dynamic, solve_static
from .lattice import LatticeBox, ball, build_box


class LLTError(RuntimeError):
    pass


class ScaleGuardError(LLTError):
    """The box is too small for the requested diffusive window."""


# ---------------------------------------------------------------------------
# Gaussian reference kernel
# ---------------------------------------------------------------------------


class GaussianKernel:
    """Centered Gaussian density with covariance t * sigma2."""

    def __init__(self, sigma2):
        s = np.asarray(sigma2, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise LLTError("sigma2 must be a square matrix")
        if not np.allclose(s, s.T):
            raise LLTError("sigma2 must be symmetric")
        eig = np.linalg.eigvalsh(s)
        if eig.min() <= 0:
            raise LLTError("sigma2 must be positive definite")
        self.d = s.shape[0]
        self.sigma2 = s
        self._inv = np.linalg.inv(s)
        self._det = float(np.linalg.det(s))

    def density(self, t: float, x) -> np.ndarray:
        """k_t at rows of x (shape (m, d) or (d,))."""
        if t <= 0:
            raise LLTError("t must be positive")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        quad = np.einsum("mi,ij,mj->m", x, self._inv, x)
        norm = (2.0 * math.pi * t) ** (-self.d / 2.0) / math.sqrt(self._det)
        return norm * np.exp(-quad / (2.0 * t))

    def on_diagonal(self, t: float) -> float:
        return float(self.density(t, np.zeros(self.d))[0])

    def mass_quadrature(self, t: float, n_sigma: float = 8.0,
                        points_per_axis: int = 81) -> float:
        """Trapezoid mass of the density; should be 1 to quadrature accuracy."""
        width = n_sigma * math.sqrt(t * float(np.linalg.eigvalsh(self.sigma2).max()))
        axes = [np.linspace(-width, width, points_per_axis)] * self.d
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        vals = self.density(t, pts).reshape(grids[0].shape)
        for ax in reversed(axes):
            vals = np.trapezoid(vals, ax, axis=-1)
        return float(vals)


def isotropic_kernel(d: int, s: float) -> GaussianKernel:
    return GaussianKernel(s * np.eye(d))


def constant_env_sigma2(d: int, speed_kind: str) -> np.ndarray:
    """Limit covariance for unit conductances: 2I per unit speed weight."""
    if speed_kind == "vsrw":
        return 2.0 * np.eye(d)
    if speed_kind == "csrw":
        return np.eye(d) / d  # mean speed weight is the degree 2d
    raise LLTError("closed-form covariance known for vsrw/csrw only")


def kernel_from_sigma_estimate(matrix: np.ndarray) -> GaussianKernel:
    """Isotropized Gaussian kernel from an estimated diffusion matrix."""
    m = np.asarray(matrix, dtype=float)
    return isotropic_kernel(m.shape[0], float(np.trace(m)) / m.shape[0])


# ---------------------------------------------------------------------------
# diffusive-scale bookkeeping
# ---------------------------------------------------------------------------


def required_half(n: int, K: float, t2: float, margin: float = 6.0) -> float:
    return margin * n * max(K, math.sqrt(t2))


def llt_side(n: int, K: float, t2: float, margin: float = 6.0) -> int:
    """Smallest odd side whose half-width clears the diffusive window."""
    return 2 * int(math.floor(required_half(n, K, t2, margin))) + 3


def check_diffusive_scale(box: LatticeBox, n: int, K: float, t2: float,
                          margin: float = 6.0):
    need = required_half(n, K, t2, margin)
    if box.half <= need:
        raise ScaleGuardError(
            f"half-side {box.half} does not clear {need:.1f} "
            f"(= {margin} * {n} * max(K, sqrt(T2)))")


def _window(box: LatticeBox, radius: int):
    """All lattice points with |z|_inf <= radius, as (vids, offsets)."""
    if radius > box.half:
        raise ScaleGuardError("window radius exceeds the half-side")
    axis = np.arange(-radius, radius + 1)
    grids = np.meshgrid(*([axis] * box.d), indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=1)
    shifted = (z + box.half) % box.side
    vids = np.zeros(z.shape[0], dtype=np.int64)
    for i in range(box.d):
        vids = vids * box.side + shifted[:, i]
    return vids, z


# ---------------------------------------------------------------------------
# sup-error of the rescaled kernel over a window
# ---------------------------------------------------------------------------


@dataclass
class LLTCurve:
    ns: list
    errors: np.ndarray
    kind: str
    meta: dict = dc_field(default_factory=dict)

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.errors) < 0))

    @property
    def final_error(self) -> float:
        return float(self.errors[-1])


def _time_grid(t1: float, t2: float, n_times: int) -> np.ndarray:
    if not (0 < t1 <= t2):
        raise LLTError("need 0 < T1 <= T2")
    return np.linspace(t1, t2, n_times)


def llt_sup_error(field: ConductanceField, speed, n: int,
                  kernel: GaussianKernel, a: float, K: float, t1: float,
                  t2: float, n_times: int = 5, margin: float = 6.0,
                  params: SolverParams | None = None) -> float:
    """sup over the window of |n^d p_theta(n^2 t, 0, z) - a k_t(z/n)|."""
    box = field.box
    check_diffusive_scale(box, n, K, t2, margin)
    radius = int(math.floor(n * K))
    vids, z = _window(box, radius)
    t_grid = _time_grid(t1, t2, n_times)
    ref = np.stack([a * kernel.density(t, z / n) for t in t_grid])
    theta_w = speed.theta[vids]
    scale = float(n) ** box.d
    worst = 0.0

    def cb(i, t, vec):
        nonlocal worst
        err = np.abs(scale * vec[vids] / theta_w - ref[i]).max()
        worst = max(worst, float(err))

    solve_static(field, speed, box.center_vid, n * n * t_grid, params,
                 collect=cb, store=False)
    return worst


def llt_sup_error_dynamic(env: DynamicEnvironment, n: int,
                          kernel: GaussianKernel, K: float, t1: float,
                          t2: float, n_times: int = 5, margin: float = 6.0,
                          params: SolverParams | None = None) -> float:
    """Dynamic analogue: counting-measure kernel, no speed factor."""
    box = env.box
    check_diffusive_scale(box, n, K, t2, margin)
    radius = int(math.floor(n * K))
    vids, z = _window(box, radius)
    t_grid = _time_grid(t1, t2, n_times)
    ref = np.stack([kernel.density(t, z / n) for t in t_grid])
    scale = float(n) ** box.d
    worst = 0.0

    def cb(i, t, vec):
        nonlocal worst
        err = np.abs(scale * vec[vids] - ref[i]).max()
        worst = max(worst, float(err))

    solve_dynamic(env, box.center_vid, 0.0, n * n * t_grid, params,
                  collect=cb, store=False)
    return worst


def quenched_llt_curve(d: int, ns, dist: DistSpec | None, speed_kind: str,
                       kernel: GaussianKernel, a: float, K: float, t1: float,
                       t2: float, seed: int, n_times: int = 5,
                       margin: float = 6.0,
                       params: SolverParams | None = None) -> LLTCurve:
    """One environment per scale; unit conductances when dist is None."""
    errors = []
    sides = []
    env_seeds = stream(seed, "quenched-llt-envs").integers(0, 2**62, len(list(ns)))
    ns = list(ns)
    for j, n in enumerate(ns):
        side = llt_side(n, K, t2, margin)
        box = build_box(d, side, "periodic")
        if dist is None:
            field = constant_field(box)
        else:
            field = sample_iid(box, dist, int(env_seeds[j]))
        speed = make_speed(field, speed_kind)
        errors.append(llt_sup_error(field, speed, n, kernel, a, K, t1, t2,
                                    n_times, margin, params))
        sides.append(side)
    return LLTCurve(ns=ns, errors=np.array(errors), kind="quenched",
                    meta={"sides": sides, "speed": speed_kind, "a": a,
                          "K": K, "window": (t1, t2), "seed": int(seed)})


def annealed_llt_curve(d: int, ns, dist: DistSpec, speed_kind: str,
                       kernel: GaussianKernel, a: float, K: float, t1: float,
                       t2: float, n_envs: int, seed: int, n_times: int = 3,
                       margin: float = 6.0,
                       params: SolverParams | None = None) -> LLTCurve:
    """Mean over environments of the per-environment sup error, per scale."""
    ns = list(ns)
    env_seeds = stream(seed, "annealed-llt-envs").integers(0, 2**62,
                                                           (len(ns), n_envs))
    per_env = np.empty((len(ns), n_envs))
    sides = []
    for j, n in enumerate(ns):
        side = llt_side(n, K, t2, margin)
        box = build_box(d, side, "periodic")
        for e in range(n_envs):
            field = sample_iid(box, dist, int(env_seeds[j, e]))
            speed = make_speed(field, speed_kind)
            per_env[j, e] = llt_sup_error(field, speed, n, kernel, a, K,
                                          t1, t2, n_times, margin, params)
        sides.append(side)
    return LLTCurve(ns=ns, errors=per_env.mean(axis=1), kind="annealed-static",
                    meta={"sides": sides, "speed": speed_kind, "a": a,
                          "per_env": per_env, "n_envs": n_envs,
                          "seed": int(seed)})


def annealed_dynamic_llt_curve(d: int, ns, dist: DistSpec, rate: float,
                               kernel: GaussianKernel, K: float, t1: float,
                               t2: float, n_envs: int, seed: int,
                               n_times: int = 3, margin: float = 6.0,
                               params: SolverParams | None = None) -> LLTCurve:
    """Resampling environments: each edge redraws on its own Poisson clock."""
    ns = list(ns)
    env_seeds = stream(seed, "annealed-dyn-envs").integers(0, 2**62,
                                                           (len(ns), n_envs))
    per_env = np.empty((len(ns), n_envs))
    sides = []
    for j, n in enumerate(ns):
        side = llt_side(n, K, t2, margin)
        box = build_box(d, side, "periodic")
        horizon = n * n * t2 * (1.0 + 1e-9) + 1e-9
        for e in range(n_envs):
            env = resampling_environment(box, dist, rate, 0.0, horizon,
                                         int(env_seeds[j, e]))
            per_env[j, e] = llt_sup_error_dynamic(env, n, kernel, K, t1, t2,
                                                  n_times, margin, params)
        sides.append(side)
    return LLTCurve(ns=ns, errors=per_env.mean(axis=1), kind="annealed-dynamic",
                    meta={"sides": sides, "rate": rate, "per_env": per_env,
                          "n_envs": n_envs, "seed": int(seed)})


# ---------------------------------------------------------------------------
# on-diagonal decay and near-diagonal minima
# ---------------------------------------------------------------------------


@dataclass
class DiagonalProfile:
    ts: np.ndarray
    values: np.ndarray
    slope: float
    intercept: float


def _loglog_fit(ts, vals):
    coef = np.polyfit(np.log(ts), np.log(vals), 1)
    return float(coef[0]), float(coef[1])


def diagonal_profile(field: ConductanceField, speed, ts,
                     params: SolverParams | None = None) -> DiagonalProfile:
    """p_theta(t, 0, 0) over ts with a log-log slope (expect about -d/2)."""
    ts = np.asarray(ts, dtype=float)
    box = field.box
    c = box.center_vid
    vals = np.empty(ts.size)

    def cb(i, t, vec):
        vals[i] = vec[c] / speed.theta[c]

    solve_static(field, speed, c, ts, params, collect=cb, store=False)
    slope, icpt = _loglog_fit(ts, vals)
    return DiagonalProfile(ts=ts, values=vals, slope=slope, intercept=icpt)


def dynamic_diagonal_profile(env: DynamicEnvironment, ts,
                             params: SolverParams | None = None) -> DiagonalProfile:
    ts = np.asarray(ts, dtype=float)
    box = env.box
    c = box.center_vid
    vals = np.empty(ts.size)

    def cb(i, t, vec):
        vals[i] = vec[c]

    solve_dynamic(env, c, 0.0, ts, params, collect=cb, store=False)
    slope, icpt = _loglog_fit(ts, vals)
    return DiagonalProfile(ts=ts, values=vals, slope=slope, intercept=icpt)


def near_diagonal_minimum(field: ConductanceField, speed, t: float,
                          params: SolverParams | None = None) -> float:
    """min of t^{d/2} p_theta(t, 0, z) over |z|_inf <= sqrt(t)."""
    box = field.box
    radius = max(1, int(math.isqrt(int(t))))
    vids, _ = _window(box, radius)
    sol = solve_static(field, speed, box.center_vid, [t], params)
    vals = sol.prob[0][vids] / speed.theta[vids]
    return float(t ** (box.d / 2.0) * vals.min())


# ---------------------------------------------------------------------------
# oscillation over shrinking cylinders
# ---------------------------------------------------------------------------


@dataclass
class OscillationReport:
    gamma: float
    osc_outer: float
    osc_inner: float
    shrink: int
    anchor_vid: int
    t0: float


def oscillation_ratio(field: ConductanceField, speed, anchor_vid: int,
                      t0: float, n: int, shrink: int = 4, n_times: int = 9,
                      src_vid: int | None = None,
                      params: SolverParams | None = None) -> OscillationReport:
    """Contraction of osc(p_theta) from the cylinder of radius n to n/shrink.

    The caloric function is the kernel from ``src_vid`` (default: box center)
    viewed over backward cylinders anchored at (anchor_vid, t0).
    """
    box = field.box
    src = box.center_vid if src_vid is None else int(src_vid)
    n_small = max(1, n // shrink)
    if t0 - n * n <= 0:
        raise LLTError("outer cylinder starts before time zero")
    times_big = np.linspace(t0 - n * n, t0, n_times)
    times_small = np.linspace(t0 - n_small * n_small, t0, n_times)
    all_times = np.unique(np.concatenate([times_big, times_small]))
    sol = solve_static(field, speed, src, all_times, params)
    vals = sol.prob / speed.theta  # (m, N)

    def osc(times, radius):
        b = ball(box, anchor_vid, radius)
        rows = np.isin(all_times, times)
        block = vals[np.flatnonzero(rows)][:, b.vids]
        return float(block.max() - block.min())

    osc_outer = osc(times_big, n)
    osc_inner = osc(times_small, n_small)
    if osc_outer <= 0:
        raise LLTError("outer oscillation vanished; move the anchor")
    return OscillationReport(gamma=osc_inner / osc_outer, osc_outer=osc_outer,
                             osc_inner=osc_inner, shrink=shrink,
                             anchor_vid=int(anchor_vid), t0=float(t0))


def hoelder_exponent(gammas, shrink: int = 4) -> float:
    """Exponent implied by a mean contraction factor below one."""
    g = float(np.mean(np.asarray(gammas, dtype=float)))
    if g <= 0:
        raise LLTError("contraction factors must be positive")
    return math.log(g) / math.log(1.0 / shrink)


def oscillation_survey(d: int, side: int, dist: DistSpec, speed_kind: str,
                       n: int, t0: float, n_envs: int, anchors_per_env: int,
                       seed: int, shrink: int = 4,
                       params: SolverParams | None = None) -> dict:
    """gamma-hat draws over (environment, anchor) pairs, plus the implied
    Hoelder exponent."""
    rng = stream(seed, "oscillation-survey")
    env_seeds = rng.integers(0, 2**62, n_envs)
    box = build_box(d, side, "periodic")
    gammas = []
    draws = []
    for e in range(n_envs):
        field = sample_iid(box, dist, int(env_seeds[e]))
        speed = make_speed(field, speed_kind)
        # anchors in a moderate neighborhood of the source
        offs = rng.integers(-n // 2, n // 2 + 1, size=(anchors_per_env, d))
        for row in offs:
            anchor = box.vid_of(row)
            rep = oscillation_ratio(field, speed, anchor, t0, n, shrink,
                                    params=params)
            gammas.append(rep.gamma)
            draws.append((e, int(anchor)))
    gammas = np.array(gammas)
    return {"gammas": gammas,
            "share_below_one": float(np.mean(gammas < 1.0)),
            "hoelder_exponent": hoelder_exponent(gammas, shrink),
            "n_draws": int(gammas.size),
            "draws": draws}


# ---------------------------------------------------------------------------
# parabolic Harnack ratio
# ---------------------------------------------------------------------------


@dataclass
class HarnackReport:
    sup_early: float
    inf_late: float
    ratio: float
    n: int


def harnack_ratio(field: ConductanceField, speed, anchor_vid: int, t0: float,
                  n: int, n_times: int = 5,
                  src_vid: int | None = None,
                  params: SolverParams | None = None) -> HarnackReport:
    """sup over the early half-cylinder over inf over the late one.

    Windows follow the usual parabolic split of [t0 - n^2, t0] with the ball
    of radius n/2: early [t0 - 3n^2/4, t0 - n^2/2], late [t0 - n^2/4, t0].
    """
    box = field.box
    src = box.center_vid if src_vid is None else int(src_vid)
    if t0 - n * n <= 0:
        raise LLTError("cylinder starts before time zero")
    early = np.linspace(t0 - 0.75 * n * n, t0 - 0.5 * n * n, n_times)
    late = np.linspace(t0 - 0.25 * n * n, t0, n_times)
    all_times = np.unique(np.concatenate([early, late]))
    sol = solve_static(field, speed, src, all_times, params)
    vals = sol.prob / speed.theta
    b = ball(box, anchor_vid, max(1, n // 2))

    def over(times, reduce_fn):
        rows = np.flatnonzero(np.isin(all_times, times))
        return float(reduce_fn(vals[rows][:, b.vids]))

    sup_early = over(early, np.max)
    inf_late = over(late, np.min)
    if inf_late <= 0:
        raise LLTError("late infimum vanished; enlarge t0 or shrink n")
    return HarnackReport(sup_early=sup_early, inf_late=inf_late,
                         ratio=sup_early / inf_late, n=n)
