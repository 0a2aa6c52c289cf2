"""Interface models with convex gradient interactions.

Heights live on a finite box, interact through an even convex potential of
the height differences, and evolve by overdamped Langevin dynamics.  The
module provides

* potentials with certified curvature bounds and the explicit-Euler stepper,
* Gibbs sampling (exact Gaussian for the quadratic potential on a pinned
  box, Langevin burn-in otherwise),
* the dynamic conductances induced by the interface gradients,
* space-time covariances measured two independent ways: directly on
  stationary trajectories, and as the time integral of the transition
  kernel of the random walk among the induced conductances,
* scaling checks: the rescaled covariance against its continuum limit, and
  the rescaled height pairing against the Gaussian free field variance,
* convexity-based concentration checks (exponential-moment comparison with
  the Gaussian of lowest curvature; raw-moment stability across box sizes).

Everything is driven by explicit integer seeds through named substreams, so
identical calls reproduce byte-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.integrate import simpson
from scipy.special import ive

from ._kernels import langevin_chunk
from ._rng import stream
from .environment import TrajectoryEnvironment, constant_field, make_speed
from .heatkernel import SolverParams, solve_dynamic, solve_static
from .lattice import LatticeBox, build_box


class GLError(RuntimeError):
    """Misuse of the interface-model layer."""


class StabilityError(GLError):
    """The explicit Euler step was too large for the observed curvature."""


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """Even convex interaction with a certified curvature lower bound.

    ``curvature_min`` is a constant c > 0 with V'' >= c everywhere; for the
    built-in kinds it is exact, for custom potentials it is spot-checked on
    a grid at construction.
    """

    v: Callable
    dv: Callable
    ddv: Callable
    kind: str
    curvature_min: float
    quartic: float = 0.0

    def stepper_kind(self) -> int:
        if self.kind == "quadratic":
            return 0
        if self.kind == "anharmonic":
            return 1
        raise GLError(
            "only the built-in potential kinds have a compiled stepper; "
            f"got kind={self.kind!r}"
        )


def quadratic_potential() -> Potential:
    return Potential(
        v=lambda x: 0.5 * np.square(x),
        dv=lambda x: np.asarray(x, dtype=float) + 0.0,
        ddv=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        kind="quadratic",
        curvature_min=1.0,
    )


def anharmonic_potential(lam: float = 0.1) -> Potential:
    """x^2 + lam*x^4 with second derivative 2 + 12*lam*x^2 >= 2."""
    if lam < 0:
        raise GLError(f"quartic coefficient must be nonnegative, got {lam}")
    lam = float(lam)
    return Potential(
        v=lambda x: np.square(x) + lam * np.square(x) ** 2,
        dv=lambda x: 2.0 * np.asarray(x, float) + 4.0 * lam * np.asarray(x, float) ** 3,
        ddv=lambda x: 2.0 + 12.0 * lam * np.square(x),
        kind="anharmonic",
        curvature_min=2.0,
        quartic=lam,
    )


def custom_potential(v, dv, ddv, curvature_min: float, grid=None) -> Potential:
    """Wrap user evaluators after spot-checking evenness and curvature."""
    if curvature_min <= 0:
        raise GLError("curvature_min must be positive")
    x = np.linspace(-8.0, 8.0, 1601) if grid is None else np.asarray(grid, float)
    vx = np.asarray(v(x), dtype=float)
    vmx = np.asarray(v(-x), dtype=float)
    if not np.allclose(vx, vmx, rtol=1e-9, atol=1e-9):
        raise GLError("potential is not even on the check grid")
    cur = np.asarray(ddv(x), dtype=float)
    if np.min(cur) < curvature_min - 1e-12:
        raise GLError(
            f"second derivative dips to {np.min(cur):.6g} on the check grid, "
            f"below the declared bound {curvature_min}"
        )
    return Potential(v=v, dv=dv, ddv=ddv, kind="custom",
                     curvature_min=float(curvature_min))


# ---------------------------------------------------------------------------
# fields and energy
# ---------------------------------------------------------------------------


@dataclass
class InterfaceField:
    """Height configuration on a box at a single time."""

    box: LatticeBox = dc_field(repr=False)
    phi: np.ndarray = dc_field(repr=False)
    t: float = 0.0

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.shape != (self.box.n_vertices,):
            raise GLError(
                f"height array has shape {self.phi.shape}, expected "
                f"({self.box.n_vertices},)"
            )
        if not np.all(np.isfinite(self.phi)):
            raise GLError("height configuration contains non-finite values")


def flat_field(box: LatticeBox, value: float = 0.0) -> InterfaceField:
    return InterfaceField(box, np.full(box.n_vertices, float(value)))


def hamiltonian(field: InterfaceField, potential: Potential,
                mass: float = 0.0) -> float:
    """Total interaction energy, boundary edges pinned at height zero.

    Sum of V over the height differences across every edge of the box (a
    pinned box contributes its closure edges against the zero boundary
    height), plus mass^2/2 times the summed squared heights when a mass is
    given.
    """
    phi = field.phi
    ends = field.box.edges
    a = phi[ends[:, 0]]
    b = np.where(ends[:, 1] >= 0, phi[np.maximum(ends[:, 1], 0)], 0.0)
    total = float(np.sum(potential.v(a - b)))
    if mass:
        total += 0.5 * float(mass) ** 2 * float(np.sum(np.square(phi)))
    return total


# ---------------------------------------------------------------------------
# Langevin dynamics
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Interface heights recorded on a declared time grid."""

    box: LatticeBox = dc_field(repr=False)
    times: np.ndarray = dc_field(repr=False)
    frames: np.ndarray = dc_field(repr=False)  # (len(times), n_vertices)
    dt: float = 0.0
    stationary: bool = False
    max_gradient: float = 0.0
    final_phi: np.ndarray | None = dc_field(default=None, repr=False)

    def frame_at(self, t: float) -> np.ndarray:
        idx = np.flatnonzero(np.abs(self.times - t) <= 1e-9 * max(1.0, abs(t)))
        if idx.size == 0:
            raise GLError(f"time {t} is not on the recorded grid")
        return self.frames[int(idx[0])]


# steps are processed in fixed-size noise blocks so the draw sequence does
# not depend on how the capture grid slices the run
_NOISE_BLOCK = 256


def evolve(start: InterfaceField, potential: Potential, dt: float,
           t_end: float, seed: int = 0, frame_times=None,
           noise_sign: float = 1.0, mass: float = 0.0) -> Trajectory:
    """Explicit Euler-Maruyama trajectory of the height dynamics.

    Each vertex feels minus the summed V' of its height differences (pinned
    boxes read missing neighbors as height zero) plus independent noise of
    variance 2*dt per step.  The step size is re-validated against the
    largest curvature actually observed; a violation raises rather than
    silently biasing the run.  ``noise_sign`` scales the injected noise: -1
    mirrors the driving noise, 0 gives the deterministic gradient flow.
    """
    box = start.box
    if dt <= 0:
        raise GLError("dt must be positive")
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise GLError(f"t_end={t_end} is not a whole number of steps of {dt}")
    if frame_times is None:
        frame_times = (t_end,)
    frame_times = np.asarray(frame_times, dtype=float)
    frame_steps = np.rint(frame_times / dt).astype(np.int64)
    if np.any(np.abs(frame_steps * dt - frame_times) > 1e-9):
        raise GLError("every frame time must sit on the step grid")
    if np.any(frame_steps < 0) or np.any(frame_steps > n_steps):
        raise GLError("frame times must lie inside [0, t_end]")
    if np.any(np.diff(frame_steps) <= 0):
        raise GLError("frame times must be strictly increasing")

    phi = start.phi.copy()
    scratch = np.empty_like(phi)
    frames = np.empty((len(frame_times), box.n_vertices))
    kind = potential.stepper_kind()
    scale = math.sqrt(2.0 * dt) * float(noise_sign)
    n = box.n_vertices
    guard_limit = 0.1 / dt
    gmax_total = 0.0

    write = 0
    if len(frame_steps) and frame_steps[0] == 0:
        frames[0] = phi
        write = 1

    step = 0
    block = None
    block_start = -1
    while step < n_steps:
        idx = step // _NOISE_BLOCK
        if idx * _NOISE_BLOCK != block_start:
            block_start = idx * _NOISE_BLOCK
            length = min(_NOISE_BLOCK, n_steps - block_start)
            if noise_sign == 0.0:
                block = np.zeros((length, n))
            else:
                rng = stream(seed, "interface-noise", idx)
                block = rng.standard_normal((length, n)) * scale
        nxt = frame_steps[write] if write < len(frame_steps) else n_steps
        stop = min(block_start + block.shape[0], int(nxt))
        noise = block[step - block_start: stop - block_start]
        gmax = langevin_chunk(phi, scratch, box.nbr, kind,
                              potential.quartic, float(mass) ** 2, dt, noise)
        step = stop
        if not math.isfinite(gmax):
            raise StabilityError(
                f"heights left the finite range near step {step} (NaN trap)"
            )
        if gmax > gmax_total:
            gmax_total = gmax
        curvature = float(potential.ddv(gmax_total))
        if curvature > guard_limit:
            raise StabilityError(
                f"observed curvature {curvature:.3g} violates the step-size "
                f"guard dt <= 0.1/curvature at dt={dt}"
            )
        if write < len(frame_steps) and step == frame_steps[write]:
            frames[write] = phi
            write += 1

    if write != len(frame_steps):
        raise GLError("internal error: not every frame was captured")
    return Trajectory(box=box, times=frame_times, frames=frames, dt=dt,
                      stationary=False, max_gradient=gmax_total,
                      final_phi=phi.copy())


# ---------------------------------------------------------------------------
# spectral helpers for the pinned quadratic model
# ---------------------------------------------------------------------------


def _modes_1d(side: int):
    """Eigenpairs of the pinned second-difference operator on a path.

    Returns (rates, vectors) with vectors[k, pos] orthonormal; rate k is
    2*(1 - cos(pi*(k+1)/(side+1))).
    """
    k = np.arange(1, side + 1, dtype=float)
    rates = 2.0 * (1.0 - np.cos(np.pi * k / (side + 1)))
    pos = np.arange(side, dtype=float)
    vectors = math.sqrt(2.0 / (side + 1)) * np.sin(
        np.pi * np.outer(k, pos + 1.0) / (side + 1)
    )
    return rates, vectors


def _mode_grids(side: int, d: int, offset):
    """Composite rates and center-anchored weights of the pinned box."""
    rates1, vecs = _modes_1d(side)
    center = side // 2
    offset = tuple(int(o) for o in offset)
    if len(offset) != d:
        raise GLError(f"offset must have {d} components")
    for o in offset:
        if not (0 <= center + o < side):
            raise GLError(f"offset {offset} leaves the box")
    lam = rates1
    wgt = vecs[:, center] * vecs[:, center + offset[0]]
    for i in range(1, d):
        lam = np.add.outer(lam, rates1)
        wgt = np.multiply.outer(wgt, vecs[:, center] * vecs[:, center + offset[i]])
    return lam.ravel(), wgt.ravel()


def dirichlet_green_cov(side: int, d: int, t: float, offset) -> float:
    """Stationary covariance cov(phi_0(center), phi_t(center+offset)) of the
    quadratic model on a pinned box, by exact mode summation."""
    lam, wgt = _mode_grids(side, d, offset)
    return float(np.sum(wgt * np.exp(-t * lam) / lam))


def dirichlet_green(side: int, d: int, offset) -> float:
    """Green function of the pinned box Laplacian at (center, center+offset)."""
    lam, wgt = _mode_grids(side, d, offset)
    return float(np.sum(wgt / lam))


def euler_stationary_cov(side: int, d: int, h: float, offset) -> float:
    """Equal-time covariance of the *discrete-step* quadratic chain.

    The explicit Euler chain with step h has a Gaussian stationary law whose
    per-mode variance is 1/(rate*(1 - h*rate/2)); this is the exact target
    the sampled chain should match, step-size bias included.
    """
    lam, wgt = _mode_grids(side, d, offset)
    top = float(np.max(lam))
    if h * top >= 2.0:
        raise GLError(f"step {h} is unstable for the stiffest mode ({top:.3g})")
    return float(np.sum(wgt / (lam * (1.0 - 0.5 * h * lam))))


def _draw_exact_gaussian(box: LatticeBox, rng) -> np.ndarray:
    """One equilibrium draw of the quadratic model on a pinned box."""
    side, d = box.side, box.d
    rates1, vecs = _modes_1d(side)
    lam = rates1
    for _ in range(d - 1):
        lam = np.add.outer(lam, rates1)
    coeff = rng.standard_normal((side,) * d) / np.sqrt(lam)
    arr = coeff
    for ax in range(d):
        arr = np.moveaxis(np.tensordot(vecs, np.moveaxis(arr, ax, 0),
                                       axes=(0, 0)), 0, ax)
    return arr.reshape(-1)


# ---------------------------------------------------------------------------
# Gibbs sampling
# ---------------------------------------------------------------------------


def _default_step(potential: Potential) -> float:
    # quartic tails steepen; leave guard headroom for gradients up to ~4.8
    if potential.kind == "quadratic":
        return 0.05
    return 1.0 / 300.0


def _relaxation_time(box: LatticeBox, potential: Potential) -> float:
    rates1, _ = _modes_1d(box.side)
    return 1.0 / (potential.curvature_min * box.d * float(rates1[0]))


def sample_gibbs(box: LatticeBox, potential: Potential, mode: str,
                 params: dict | None = None, seed: int = 0):
    """Ensemble of equilibrium height configurations.

    ``mode`` is ``exact-gaussian`` (quadratic potential on a pinned box:
    independent spectral draws) or ``langevin-burnin`` (one chain, a long
    conservative burn-in, then equally spaced thinned snapshots).  ``params``
    may override ``count``, ``dt``, ``burn_in``, ``thin``.
    """
    params = dict(params or {})
    count = int(params.pop("count", 64))
    if mode == "exact-gaussian":
        if potential.kind != "quadratic":
            raise GLError("exact sampling requires the quadratic potential")
        if box.boundary != "absorbing":
            raise GLError("exact sampling requires a pinned (absorbing) box")
        if params:
            raise GLError(f"unused sampling parameters: {sorted(params)}")
        rng = stream(seed, "gibbs-exact")
        out = []
        for _ in range(count):
            out.append(InterfaceField(box, _draw_exact_gaussian(box, rng)))
        return out
    if mode != "langevin-burnin":
        raise GLError(f"unknown sampling mode {mode!r}")

    dt = float(params.pop("dt", _default_step(potential)))
    if potential.kind == "quadratic":
        default_burn = 20.0 * _relaxation_time(box, potential)
    else:
        default_burn = 20.0 * box.side**2 / potential.curvature_min
    burn = float(params.pop("burn_in", default_burn))
    thin = float(params.pop("thin", burn))
    if params:
        raise GLError(f"unused sampling parameters: {sorted(params)}")
    burn = max(dt, round(burn / dt) * dt)
    thin = max(dt, round(thin / dt) * dt)

    state = flat_field(box)
    traj = evolve(state, potential, dt, burn, seed=_derived_seed(seed, "gibbs-burn"))
    phi = traj.final_phi
    out = []
    for i in range(count):
        traj = evolve(InterfaceField(box, phi), potential, dt, thin,
                      seed=_derived_seed(seed, "gibbs-thin", i))
        phi = traj.final_phi
        out.append(InterfaceField(box, phi.copy()))
    return out


def _derived_seed(seed: int, *path) -> int:
    return int(stream(seed, *path).integers(0, 2**62))


# ---------------------------------------------------------------------------
# induced dynamic environment
# ---------------------------------------------------------------------------


def induced_env(trajectory: Trajectory, potential: Potential) -> TrajectoryEnvironment:
    """Edge conductances read off the interface: the potential's curvature at
    each height difference, piecewise constant between recorded frames.

    Queries beyond the recorded horizon raise through the environment's own
    range check.  Positivity is automatic from the curvature bound.
    """
    return TrajectoryEnvironment(trajectory.box, trajectory.times,
                                 trajectory.frames, potential.ddv)


def stationary_trajectories(box: LatticeBox, potential: Potential, count: int,
                            horizon: float, frame_dt: float, seed: int = 0,
                            dt: float | None = None, burn_in: float | None = None,
                            thin: float | None = None):
    """Generator of stationary-start trajectories on a declared frame grid.

    Quadratic potential on a pinned box: starts are independent exact
    equilibrium draws.  Otherwise one Langevin chain supplies the starts: a
    conservative burn-in, then a fixed thinning stretch before each start.
    Regenerating with the same arguments reproduces the ensemble exactly.
    """
    dt = float(dt if dt is not None else _default_step(potential))
    n_frames = int(round(horizon / frame_dt))
    if abs(n_frames * frame_dt - horizon) > 1e-9:
        raise GLError("horizon must be a whole number of frame steps")
    if abs(round(frame_dt / dt) * dt - frame_dt) > 1e-9:
        raise GLError("frame_dt must be a whole number of steps")
    grid = np.arange(n_frames + 1, dtype=float) * frame_dt

    exact = potential.kind == "quadratic" and box.boundary == "absorbing"
    if exact:
        rng = stream(seed, "stationary-starts")
    else:
        relax = box.side**2 / potential.curvature_min
        burn = float(burn_in if burn_in is not None else 0.3 * relax)
        th = float(thin if thin is not None else 0.15 * relax)
        burn = max(dt, round(burn / dt) * dt)
        th = max(dt, round(th / dt) * dt)
        chain = evolve(flat_field(box), potential, dt, burn,
                       seed=_derived_seed(seed, "chain-burn"))
        phi = chain.final_phi

    for i in range(count):
        if exact:
            start = InterfaceField(box, _draw_exact_gaussian(box, rng))
        else:
            step = evolve(InterfaceField(box, phi), potential, dt, th,
                          seed=_derived_seed(seed, "chain-thin", i))
            phi = step.final_phi
            start = InterfaceField(box, phi.copy())
        traj = evolve(start, potential, dt, horizon, frame_times=grid,
                      seed=_derived_seed(seed, "trajectory", i))
        traj.stationary = True
        yield traj


# ---------------------------------------------------------------------------
# covariance estimates
# ---------------------------------------------------------------------------


@dataclass
class CovarianceEstimate:
    t: float
    x_offset: tuple
    value: float
    stderr: float
    method: str
    n_samples: int
    tail_bound: float = 0.0
    extras: dict = dc_field(default_factory=dict)


def _batch_stderr(values: np.ndarray, n_batches: int = 16) -> float:
    values = np.asarray(values, dtype=float)
    nb = max(2, min(n_batches, values.size // 2))
    size = values.size // nb
    trimmed = values[: nb * size].reshape(nb, size)
    means = trimmed.mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(nb))


def _offset_vid(box: LatticeBox, offset) -> int:
    offset = np.asarray(offset, dtype=int)
    if offset.shape != (box.d,):
        raise GLError(f"offset must have {box.d} components")
    return box.vid_of(offset)


def cov_direct(trajectories, x_offset, t: float,
               n_batches: int = 16) -> CovarianceEstimate:
    """Space-time covariance cov(phi_0(center), phi_t(center+offset)) from a
    stationary trajectory ensemble, stderr by batch means."""
    first_a = []
    later_b = []
    box = None
    for traj in trajectories:
        if box is None:
            box = traj.box
            vid_a = box.center_vid
            vid_b = _offset_vid(box, x_offset)
        if not traj.stationary:
            raise GLError("covariances need stationary-start trajectories")
        first_a.append(traj.frames[0][vid_a])
        later_b.append(traj.frame_at(t)[vid_b])
    if box is None:
        raise GLError("empty trajectory ensemble")
    a = np.asarray(first_a)
    b = np.asarray(later_b)
    centered = (a - a.mean()) * (b - b.mean())
    value = float(centered.mean())
    stderr = _batch_stderr(centered, n_batches)
    return CovarianceEstimate(t=float(t), x_offset=tuple(int(v) for v in x_offset),
                              value=value, stderr=stderr, method="direct",
                              n_samples=a.size)


def _hs_curves(trajectories, potential: Potential, requests, s_grids,
               params: SolverParams | None = None):
    """Kernel-integral covariance engine shared by cov_hs and the reports.

    ``requests`` is a list of (t, offset) pairs; ``s_grids`` maps each t to
    its integration grid.  One dynamic solve per trajectory covers every
    request; returns per-request integral samples and the mean kernel curve.
    """
    requests = [(float(t), tuple(int(v) for v in off)) for t, off in requests]
    times_needed = sorted({round(t + s, 9)
                           for t, _ in requests for s in s_grids[t]})
    times_arr = np.asarray(times_needed, dtype=float)
    lookup = {v: i for i, v in enumerate(times_needed)}

    samples = None
    curves = None
    count = 0
    box = None
    vids = None
    for traj in trajectories:
        if box is None:
            box = traj.box
            if box.d < 3:
                raise GLError("kernel-integral covariances need dimension >= 3")
            offsets = sorted({off for _, off in requests})
            vids = {off: _offset_vid(box, off) for off in offsets}
            samples = {req: [] for req in requests}
            curves = {req: np.zeros(len(s_grids[req[0]])) for req in requests}
        if not traj.stationary:
            raise GLError("covariances need stationary-start trajectories")
        env = induced_env(traj, potential)
        rows = np.empty((len(times_needed), len(vids)))
        vid_list = [vids[off] for off in sorted(vids)]
        col = {off: j for j, off in enumerate(sorted(vids))}

        def grab(i, _t, vec, rows=rows, vid_list=vid_list):
            rows[i] = vec[vid_list]

        solve_dynamic(env, box.center_vid, 0.0, times_arr, params=params,
                      collect=grab, store=False)
        for t, off in requests:
            grid = s_grids[t]
            idx = [lookup[round(t + s, 9)] for s in grid]
            kern = rows[idx, col[off]]
            samples[(t, off)].append(np.trapezoid(kern, grid))
            curves[(t, off)] += kern
        count += 1
    if count == 0:
        raise GLError("empty trajectory ensemble")
    for req in curves:
        curves[req] /= count
    return samples, curves, count, box


def cov_hs(trajectories, potential: Potential, x_offset, t: float,
           s_max: float = 16.0, params: SolverParams | None = None,
           s_points: int = 33, tail_tol: float | None = None,
           n_batches: int = 16) -> CovarianceEstimate:
    """Space-time covariance as the integral of the dynamic-walk kernel.

    For each stationary trajectory the induced environment is solved once and
    the kernel at (center, center+offset) integrated over [0, s_max] by
    trapezoid; the neglected tail is bounded through the measured on-diagonal
    decay constant and reported (``tail_tol`` turns an excessive bound into
    an error).
    """
    t = float(t)
    grid = np.linspace(0.0, float(s_max), int(s_points))
    off = tuple(int(v) for v in x_offset)
    samples, curves, count, box = _hs_curves(
        trajectories, potential, [(t, off)], {t: grid}, params)
    vals = np.asarray(samples[(t, off)])
    curve = curves[(t, off)]
    d = box.d
    upper = grid >= 0.5 * grid[-1]
    c19 = float(np.max(curve[upper] * (t + grid[upper]) ** (d / 2.0)))
    tail = c19 * (2.0 / (d - 2.0)) * (t + s_max) ** (1.0 - d / 2.0)
    value = float(vals.mean())
    if tail_tol is not None and tail > tail_tol * max(value, 1e-300):
        raise GLError(
            f"kernel tail bound {tail:.3g} exceeds {tail_tol:.3g} of the "
            f"integral {value:.3g}; increase s_max"
        )
    return CovarianceEstimate(
        t=t, x_offset=off, value=value, stderr=_batch_stderr(vals, n_batches),
        method="hs", n_samples=count, tail_bound=float(tail),
        extras={"decay_constant": c19, "s_max": float(s_max),
                "mean_curve": curve, "s_grid": grid})


# ---------------------------------------------------------------------------
# quadratic-model verification drivers
# ---------------------------------------------------------------------------


def gaussian_langevin_check(seed: int = 0, side: int = 9, d: int = 3,
                            dt: float = 0.05, burn: float = 70.0,
                            sample_time: float = 3000.0, frame_dt: float = 0.5,
                            n_batches: int = 30) -> dict:
    """Sampled equal-time covariances of the quadratic chain against the
    exact spectral values for the same step size.

    Returns one row per probed offset with the sampled value, its batch-means
    stderr, the per-mode oracle, and the z-score.
    """
    box = build_box(d, side, "absorbing")
    pot = quadratic_potential()
    rng = stream(seed, "langevin-check-start")
    start = InterfaceField(box, _draw_exact_gaussian(box, rng))
    warm = evolve(start, pot, dt, round(burn / dt) * dt,
                  seed=_derived_seed(seed, "langevin-check-burn"))
    n_frames = int(round(sample_time / frame_dt))
    grid = np.arange(1, n_frames + 1, dtype=float) * frame_dt
    run = evolve(InterfaceField(box, warm.final_phi), pot, dt,
                 n_frames * frame_dt, frame_times=grid,
                 seed=_derived_seed(seed, "langevin-check-run"))
    center = box.center_vid
    rows = []
    for offset in ((0,) * d, (1,) + (0,) * (d - 1)):
        other = box.vid_of(np.asarray(offset))
        a = run.frames[:, center]
        b = run.frames[:, other]
        prod = (a - a.mean()) * (b - b.mean())
        value = float(prod.mean())
        stderr = _batch_stderr(prod, n_batches)
        oracle = euler_stationary_cov(side, d, dt, offset)
        rows.append({
            "offset": offset, "value": value, "stderr": stderr,
            "oracle": oracle, "z": (value - oracle) / stderr,
        })
    return {"rows": rows, "dt": dt, "side": side, "samples": n_frames}


def _segmented_nodes(breaks, steps):
    edges = [0.0] + list(breaks)
    nodes = []
    for lo, hi, h in zip(edges[:-1], edges[1:], steps):
        count = int(round((hi - lo) / h)) + 1
        seg = np.linspace(lo, hi, count)
        nodes.append(seg if not nodes else seg[1:])
    return np.concatenate(nodes)


def hs_identity_check(side: int = 9, d: int = 3, t: float = 1.0,
                      offsets=((0, 0, 0), (1, 0, 0)),
                      params: SolverParams | None = None) -> dict:
    """Deterministic two-route check of the kernel-integral covariance
    identity for the quadratic model.

    Route one evaluates cov(phi_0(center), phi_t(center+x)) by exact mode
    summation.  Route two integrates the solver's transition kernel of the
    unit-conductance walk over s in [0, s_max] by composite Simpson on a
    graded grid, plus the spectrally evaluated remainder.  The two agree to
    solver truncation and quadrature error.
    """
    box = build_box(d, side, "absorbing")
    fld = constant_field(box)
    speed = make_speed(fld, "vsrw")
    s_nodes = _segmented_nodes((2.0, 10.0, 60.0), (0.01, 0.05, 0.25))
    times = t + s_nodes
    vids = [box.vid_of(np.asarray(off)) for off in offsets]
    rows_val = np.empty((len(times), len(vids)))

    def grab(i, _t, vec):
        rows_val[i] = vec[vids]

    solve_static(fld, speed, box.center_vid, times, params=params,
                 collect=grab, store=False)
    # composite Simpson per segment keeps the graded spacing exact
    seg_edges = [0.0, 2.0, 10.0, 60.0]
    out = []
    for j, off in enumerate(offsets):
        total = 0.0
        for lo, hi in zip(seg_edges[:-1], seg_edges[1:]):
            m = (s_nodes >= lo - 1e-12) & (s_nodes <= hi + 1e-12)
            total += float(simpson(rows_val[m, j], x=s_nodes[m]))
        tail = dirichlet_green_cov(side, d, t + s_nodes[-1], off)
        eigenvalue = dirichlet_green_cov(side, d, t, off)
        out.append({
            "offset": tuple(off), "eigen": eigenvalue,
            "integral": total, "tail": tail,
            "abs_error": abs(eigenvalue - (total + tail)),
        })
    return {"rows": out, "s_max": float(s_nodes[-1]), "t": t, "side": side}


# ---------------------------------------------------------------------------
# covariance scaling limit
# ---------------------------------------------------------------------------


def gradient_moment_power(d: int) -> float:
    """Integrability order of the induced conductances required by the
    covariance scaling limit."""
    return (2.0 + d) * (1.0 + 2.0 / d + math.sqrt(1.0 + 1.0 / d**2))


@dataclass
class CovScalingCurve:
    ns: tuple
    sides: tuple
    scaled_values: np.ndarray
    target: float
    errors: np.ndarray
    tail_shares: np.ndarray
    t: float
    x: tuple
    moment_power: float
    moment_estimate: float


def _pinned_axis_heat(side: int, offset: int, s_nodes: np.ndarray) -> np.ndarray:
    """Heat kernel of the pinned second-difference operator on a path,
    evaluated at (center, center+offset) on a vector of times."""
    rates, vecs = _modes_1d(side)
    center = side // 2
    w = vecs[:, center] * vecs[:, center + offset]
    return w @ np.exp(-np.outer(rates, s_nodes))


def _continuum_kernel_integral(t: float, x, sigma_sq: float = 2.0) -> float:
    """Integral over s >= 0 of the limit Gaussian kernel at (t+s, x), by
    graded quadrature plus a two-term analytic tail."""
    x = np.asarray(x, dtype=float)
    r2 = float(x @ x)
    diff = sigma_sq / 2.0
    scale = max(1.0, t, r2 / (4.0 * diff))
    s_head = np.linspace(0.0, 9.0 * scale, 1201)
    s_tail = np.geomspace(9.0 * scale, 1.0e4 * scale, 1401)[1:]
    s = np.concatenate([s_head, s_tail])
    u = t + s
    dens = (4.0 * math.pi * diff * u) ** -1.5 * np.exp(-r2 / (4.0 * diff * u))
    head = float(np.trapezoid(dens, s))
    big = t + s[-1]
    tail = (4.0 * math.pi * diff) ** -1.5 * (
        2.0 * big**-0.5 - (r2 / (4.0 * diff)) * (2.0 / 3.0) * big**-1.5
    )
    return head + tail


def cov_scaling_curve(potential: Potential, x=(0.0, 0.0, 0.0), t: float = 1.0,
                      n_list=(2, 4, 8)) -> CovScalingCurve:
    """Rescaled space-time covariance of the quadratic model against its
    continuum limit.

    For each n the covariance cov(phi_0(center), phi_{n^2 t}(center+floor(nx)))
    is evaluated on a pinned box (side about 24n, comfortably past the
    diffusive guard 6n*sqrt(t+1)) as an integral of products of pinned-path
    heat kernels, with a two-term analytic tail; the value scaled by n^{d-2}
    is compared to the integrated limit kernel.
    """
    if potential.kind != "quadratic":
        raise GLError("the scaling curve is implemented for the quadratic "
                      "potential, whose covariances are exactly computable")
    x = np.asarray(x, dtype=float)
    d = x.size
    if d != 3:
        raise GLError("the scaling study is fixed at dimension 3")
    target = _continuum_kernel_integral(t, x)
    scaled = []
    sides = []
    tails = []
    for n in n_list:
        side = 24 * int(n) + 1
        guard = 6.0 * n * math.sqrt(t + 1.0)
        if side < guard:
            raise GLError(f"box side {side} below the diffusive guard {guard:.1f}")
        offs = np.floor(n * x).astype(int)
        big_t = float(n) ** 2 * t
        u_max = 12.0 * n**2 * max(1.0, t)
        head = np.linspace(0.0, big_t, 601)
        geo = np.geomspace(big_t, u_max, 1401)[1:]
        u = np.concatenate([head, geo])
        s_nodes = big_t + u
        prod = np.ones_like(s_nodes)
        for i in range(3):
            prod *= _pinned_axis_heat(side, int(offs[i]), s_nodes)
        val = float(np.trapezoid(prod, u))
        s_end = s_nodes[-1]
        gamma = (3.0 - 4.0 * float(offs @ offs)) / 16.0
        tail = (4.0 * math.pi) ** -1.5 * (
            2.0 * s_end**-0.5 + gamma * (2.0 / 3.0) * s_end**-1.5
        )
        cov = val + tail
        scaled.append(float(n) ** (d - 2) * cov)
        sides.append(side)
        tails.append(tail / cov)
    scaled = np.asarray(scaled)
    return CovScalingCurve(
        ns=tuple(int(n) for n in n_list), sides=tuple(sides),
        scaled_values=scaled, target=target,
        errors=np.abs(scaled - target), tail_shares=np.asarray(tails),
        t=float(t), x=tuple(float(v) for v in x),
        moment_power=gradient_moment_power(d),
        # unit conductances: every moment of the induced weights is one
        moment_estimate=1.0)


# ---------------------------------------------------------------------------
# scaling to the Gaussian free field
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BumpProfile:
    """Even compactly supported profile; the test function is its d-fold
    product, so pairings factorize axis by axis."""

    func: Callable
    half_width: float = 4.0
    label: str = "gaussian-bump"


def default_bump() -> BumpProfile:
    return BumpProfile(func=lambda s: np.exp(-0.5 * np.square(s)))


def _heat_product_integral(coeff: np.ndarray, shifts: np.ndarray,
                           u_max: float, head_end: float, power: int,
                           lattice: bool, u_min: float = 0.0) -> float:
    """Integral over [u_min, u_max] plus tail of h(u)^power, where
    h(u) = sum_m coeff[m]*k_u(m).

    ``k_u`` is the one-dimensional heat kernel at time u: the modified-Bessel
    kernel of the rate-1-per-neighbor walk when ``lattice``, the Gaussian
    kernel otherwise.  A graded grid covers [u_min, u_max]; beyond u_max a
    two-term expansion of h about the flat kernel integrates analytically.
    """
    c0 = float(np.sum(coeff))
    c2 = float(np.sum(coeff * shifts.astype(float) ** 2))
    head = np.linspace(u_min, head_end, 481)
    geo = np.geomspace(max(head_end, 1e-12), u_max, 1401)[1:]
    u = np.concatenate([head, geo])
    if lattice:
        kern = ive(np.abs(shifts)[None, :], 2.0 * u[:, None])
    else:
        uu = u[:, None]
        kern = np.exp(-shifts[None, :] ** 2 / (4.0 * uu)) / np.sqrt(
            4.0 * math.pi * uu)
    h = kern @ coeff
    main = float(np.trapezoid(h**power, u))
    beta = power * ((1.0 / 16.0 if lattice else 0.0) - c2 / (4.0 * c0))
    tail = (4.0 * math.pi) ** (-power / 2.0) * c0**power * (
        2.0 * u_max ** -0.5 + beta * (2.0 / 3.0) * u_max ** -1.5
    )
    return main + tail


def lattice_pairing_variance(profile: BumpProfile, n: int, d: int = 3) -> float:
    """Exact variance of the rescaled height pairing for the quadratic model
    on the full lattice.

    The pairing weight n^{-(1+d/2)} f(z/n) has a product profile, so the
    Green-function quadratic form factorizes into one-dimensional heat-kernel
    autocorrelations integrated over time; no finite box enters, which
    matters because the summed weight grows like sqrt(n) and would make a
    pinned-boundary deficit first order.
    """
    if d != 3:
        raise GLError("the pairing study is fixed at dimension 3")
    reach = int(math.ceil(profile.half_width * n))
    z = np.arange(-reach, reach + 1)
    g = np.asarray(profile.func(z / float(n)), dtype=float)
    corr = np.correlate(g, g, mode="full")
    shifts = np.arange(-(g.size - 1), g.size)
    c2_over_c0 = float(np.sum(corr * shifts.astype(float) ** 2) / np.sum(corr))
    u_max = 200.0 * max(2.0, c2_over_c0)
    head_end = max(1.0, c2_over_c0)
    integral = _heat_product_integral(corr, shifts, u_max, head_end,
                                     power=d, lattice=True)
    return float(n) ** (-(2.0 + d)) * integral


def continuum_gff_variance(profile: BumpProfile, d: int = 3,
                           grid_step: float = 1.0 / 64.0,
                           sigma_sq: float = 2.0) -> float:
    """Variance of the limit free field tested against the product profile.

    Computed through the heat-kernel representation of the inverse of the
    limiting generator (diffusivity sigma_sq/2 per axis): the squared Fourier
    transform over the symbol, folded into one-dimensional Gaussian-kernel
    autocorrelation integrals.  Positive for any nonzero profile.
    """
    if d != 3:
        raise GLError("the pairing study is fixed at dimension 3")
    w = profile.half_width
    m = int(round(w / grid_step))
    s = np.arange(-m, m + 1) * grid_step
    g = np.asarray(profile.func(s), dtype=float)
    # autocorrelation against physical measure: values and coefficients
    # both carry one factor of the grid step
    rho = np.correlate(g, g, mode="full") * grid_step
    coeff = rho * grid_step
    shifts = np.arange(-(g.size - 1), g.size) * grid_step
    # analytic head below the kernel-vs-grid resolution limit:
    # h(u) ~ rho(0) - u*||g'||^2
    rho0 = float(np.sum(g * g) * grid_step)
    grad_sq = float(np.sum(np.gradient(g, grid_step) ** 2) * grid_step)
    u0 = 1.0e-3
    head = rho0**d * u0 - 0.5 * d * rho0 ** (d - 1) * grad_sq * u0**2
    c2_over_c0 = float(np.sum(coeff * shifts**2) / np.sum(coeff))
    u_max = 200.0 * max(2.0, c2_over_c0)
    body = _heat_product_integral(coeff, shifts, u_max, max(1.0, c2_over_c0),
                                  power=d, lattice=False, u_min=u0)
    return (head + body) * (2.0 / sigma_sq)


@dataclass
class GFFRecord:
    profile_label: str
    lambdas: np.ndarray
    ns: tuple
    pairing_variance: dict
    target_variance: float
    estimates: dict
    stderr_log: dict
    r_squared: dict
    flagged: dict
    sigma_sq_source: str
    target_curve: np.ndarray


def gff_test(potential: Potential, profile: BumpProfile | None = None,
             lambdas=None, n_list=(2, 4, 8), seed: int = 0,
             n_samples: int = 200_000, sigma2: np.ndarray | None = None,
             sigma_sq_source: str = "unit-conductance identity") -> GFFRecord:
    """Laplace-functional test of the rescaled height pairing.

    Quadratic potential: the pairing is exactly Gaussian with the computed
    variance, so sampling reduces to scalar normal draws; the estimates are
    fitted log-quadratically in lambda and compared against
    exp(lambda^2/2 * limit variance).  Estimates at lambda=0 are exactly one.
    Overly large lambdas (relative stderr above 0.2) are flagged.
    """
    if potential.kind != "quadratic":
        raise GLError("the pairing test is implemented for the quadratic "
                      "potential, whose pairing law is exactly Gaussian")
    profile = profile or default_bump()
    if sigma2 is None:
        sigma_sq = 2.0
    else:
        sigma2 = np.asarray(sigma2, dtype=float)
        if not np.allclose(sigma2, sigma2[0, 0] * np.eye(sigma2.shape[0]),
                           rtol=1e-6, atol=1e-9):
            raise GLError("anisotropic limit covariances are not supported")
        sigma_sq = float(sigma2[0, 0])
    target_var = continuum_gff_variance(profile, sigma_sq=sigma_sq)
    variances = {int(n): lattice_pairing_variance(profile, int(n))
                 for n in n_list}
    if lambdas is None:
        top = 0.75 / math.sqrt(max(variances.values()))
        lambdas = top * np.linspace(-1.0, 1.0, 9)
    lambdas = np.asarray(lambdas, dtype=float)

    estimates = {}
    stderr_log = {}
    r_squared = {}
    flagged = {}
    blocks = 20
    for n in n_list:
        n = int(n)
        rng = stream(seed, "pairing-samples", n)
        draws = rng.standard_normal(n_samples) * math.sqrt(variances[n])
        vals = np.empty(lambdas.size)
        errs = np.empty(lambdas.size)
        flags = []
        per_block = draws[: (n_samples // blocks) * blocks].reshape(blocks, -1)
        for j, lam in enumerate(lambdas):
            ex = np.exp(lam * draws)
            vals[j] = float(ex.mean())
            block_means = np.exp(lam * per_block).mean(axis=1)
            total = block_means.mean()
            loo = (blocks * total - block_means) / (blocks - 1)
            jack = np.log(loo)
            errs[j] = float(math.sqrt((blocks - 1) / blocks
                                      * np.sum((jack - jack.mean()) ** 2)))
            if lam != 0.0 and errs[j] > 0.2:
                flags.append(float(lam))
        y = np.log(vals)
        design = np.stack([lambdas**2, lambdas, np.ones_like(lambdas)], axis=1)
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r_squared[n] = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot else 1.0
        estimates[n] = vals
        stderr_log[n] = errs
        flagged[n] = flags
    return GFFRecord(
        profile_label=profile.label, lambdas=lambdas,
        ns=tuple(int(n) for n in n_list), pairing_variance=variances,
        target_variance=target_var, estimates=estimates,
        stderr_log=stderr_log, r_squared=r_squared, flagged=flagged,
        sigma_sq_source=sigma_sq_source,
        target_curve=np.exp(0.5 * lambdas**2 * target_var))


# ---------------------------------------------------------------------------
# concentration and moment checks
# ---------------------------------------------------------------------------


def brascamp_lieb_check(potential: Potential, nu, box: LatticeBox,
                        seed: int = 0, params: dict | None = None,
                        mode: str = "langevin-burnin") -> dict:
    """Exponential-moment comparison with the lowest-curvature Gaussian.

    Checks E[exp|<nu, phi - mean>|] <= 2*exp(var/2) with var the Gaussian
    comparison variance <nu, (c * pinned Laplacian)^{-1} nu> at curvature
    bound c; the sampled left side gets a 3-stderr allowance.
    """
    if box.boundary != "absorbing":
        raise GLError("the comparison variance needs the pinned box")
    weights = np.zeros(box.n_vertices)
    if isinstance(nu, dict):
        for vid, w in nu.items():
            weights[int(vid)] = float(w)
    else:
        weights = np.asarray(nu, dtype=float)
        if weights.shape != (box.n_vertices,):
            raise GLError("weight vector has the wrong length")
    support = np.flatnonzero(weights)
    lam1, vecs = _modes_1d(box.side)
    # quadratic form through the mode expansion, exact for any weights
    lam = lam1
    for _ in range(box.d - 1):
        lam = np.add.outer(lam, lam1)
    coords = box.coords[support] + box.half
    amp = np.zeros(lam.shape)
    for vid, pos in zip(support, coords):
        term = weights[vid]
        vec = None
        for i in range(box.d):
            axis = vecs[:, pos[i]]
            vec = axis if vec is None else np.multiply.outer(vec, axis)
        amp = amp + term * vec
    gauss_var = float(np.sum(amp**2 / lam) / potential.curvature_min)

    ensemble = sample_gibbs(box, potential, mode, params, seed=seed)
    vals = np.array([float(weights @ f.phi) for f in ensemble])
    centered = np.abs(vals - vals.mean())
    lhs_samples = np.exp(centered)
    lhs = float(lhs_samples.mean())
    stderr = _batch_stderr(lhs_samples)
    rhs = 2.0 * math.exp(0.5 * gauss_var)
    return {
        "lhs": lhs, "lhs_stderr": stderr, "rhs": rhs,
        "gaussian_variance": gauss_var,
        "passed": lhs <= rhs + 3.0 * stderr,
        "margin": rhs + 3.0 * stderr - lhs,
        "n_samples": len(ensemble),
    }


def moment_check(potential: Potential, p_list=(2, 4), sides=(5, 7, 9),
                 d: int = 3, seed: int = 0, params: dict | None = None,
                 mode: str = "langevin-burnin",
                 tolerance: float = 0.25) -> dict:
    """Raw absolute moments of the center height across box sizes.

    Consistency with finite moments is reported as stability: for each order
    the spread (max-min over mean) across the boxes must stay below the
    tolerance.
    """
    table = {float(p): {} for p in p_list}
    stderrs = {float(p): {} for p in p_list}
    for side in sides:
        box = build_box(d, int(side), "absorbing")
        ensemble = sample_gibbs(box, potential, mode, params,
                                seed=_derived_seed(seed, "moments", int(side)))
        center = np.array([f.phi[box.center_vid] for f in ensemble])
        for p in p_list:
            vals = np.abs(center) ** float(p)
            table[float(p)][int(side)] = float(vals.mean())
            stderrs[float(p)][int(side)] = _batch_stderr(vals)
    report = {}
    for p, row in table.items():
        vals = np.array(list(row.values()))
        spread = float((vals.max() - vals.min()) / vals.mean())
        report[p] = {"by_side": row, "stderr_by_side": stderrs[p],
                     "spread": spread, "stable": spread < tolerance}
    return {"orders": report, "sides": tuple(int(s) for s in sides),
            "tolerance": tolerance}


# ---------------------------------------------------------------------------
# combined anharmonic report
# ---------------------------------------------------------------------------


def anharmonic_covariance_report(seed: int = 0, side: int = 7,
                                 lam: float = 0.1, count: int = 192,
                                 horizon: float = 24.0, frame_dt: float = 0.25,
                                 dt: float = 1.0 / 300.0,
                                 s_max_cross: float = 16.0,
                                 s_max_decay: float = 8.0,
                                 decay_ts=(1.0, 2.0, 4.0, 8.0, 16.0),
                                 params: SolverParams | None = None) -> dict:
    """Cross-checks of the anharmonic model on one trajectory ensemble.

    Runs the ensemble twice (regeneration is deterministic): a direct pass
    for covariances, the exponential-moment comparison, raw moments, and the
    induced-conductance floor; a kernel pass for the same covariances via the
    dynamic-walk integral, and for the equal-site decay curve whose log-log
    slope is fitted.  Comparable entries carry combined z-scores.
    """
    d = 3
    box = build_box(d, int(side), "absorbing")
    pot = anharmonic_potential(lam)
    cross = ((1.0, (0, 0, 0)), (1.0, (1, 0, 0)), (4.0, (0, 0, 0)))
    power = gradient_moment_power(d)

    def make_ensemble():
        return stationary_trajectories(box, pot, count, horizon, frame_dt,
                                       seed=seed, dt=dt)

    # --- direct pass ------------------------------------------------------
    center = box.center_vid
    neighbor = box.vid_of(np.array([1] + [0] * (d - 1)))
    a0 = np.empty(count)
    series = {req: np.empty(count) for req in cross}
    min_weight = math.inf
    weight_power_sum = 0.0
    weight_count = 0
    ends = box.edges
    for i, traj in enumerate(make_ensemble()):
        a0[i] = traj.frames[0][center]
        for t, off in cross:
            vid = center if off == (0, 0, 0) else neighbor
            series[(t, off)][i] = traj.frame_at(t)[vid]
        pa = traj.frames[:, ends[:, 0]]
        pb = np.where(ends[:, 1] >= 0,
                      traj.frames[:, np.maximum(ends[:, 1], 0)], 0.0)
        conduct = pot.ddv(pb - pa)
        min_weight = min(min_weight, float(conduct.min()))
        weight_power_sum += float(np.mean(conduct**power))
        weight_count += 1
    direct = {}
    for t, off in cross:
        b = series[(t, off)]
        prod = (a0 - a0.mean()) * (b - b.mean())
        direct[(t, off)] = CovarianceEstimate(
            t=t, x_offset=off, value=float(prod.mean()),
            stderr=_batch_stderr(prod), method="direct", n_samples=count)

    centered = np.abs(a0 - a0.mean())
    bl_samples = np.exp(centered)
    gauss_var = dirichlet_green(side, d, (0,) * d) / pot.curvature_min
    bl_rhs = 2.0 * math.exp(0.5 * gauss_var)
    bl_lhs = float(bl_samples.mean())
    bl_err = _batch_stderr(bl_samples)

    # --- kernel pass ------------------------------------------------------
    grid_cross = np.linspace(0.0, s_max_cross, 33)
    grid_decay = np.linspace(0.0, s_max_decay, 17)
    requests = list(cross) + [(float(t), (0, 0, 0)) for t in decay_ts
                              if (float(t), (0, 0, 0)) not in cross]
    s_grids = {}
    for t, _ in cross:
        s_grids[float(t)] = grid_cross
    for t in decay_ts:
        s_grids.setdefault(float(t), grid_decay)
    samples, curves, n_run, _ = _hs_curves(make_ensemble(), pot, requests,
                                           s_grids, params)
    kernel = {}
    for t, off in cross:
        vals = np.asarray(samples[(t, off)])
        curve = curves[(t, off)]
        grid = s_grids[t]
        upper = grid >= 0.5 * grid[-1]
        c19 = float(np.max(curve[upper] * (t + grid[upper]) ** 1.5))
        tail = c19 * 2.0 * (t + grid[-1]) ** -0.5
        kernel[(t, off)] = CovarianceEstimate(
            t=t, x_offset=off, value=float(vals.mean()),
            stderr=_batch_stderr(vals), method="hs", n_samples=n_run,
            tail_bound=tail, extras={"decay_constant": c19})

    comparisons = []
    for req in cross:
        dd, kk = direct[req], kernel[req]
        sigma = math.sqrt(dd.stderr**2 + kk.stderr**2)
        comparisons.append({
            "t": req[0], "offset": req[1],
            "direct": dd.value, "direct_stderr": dd.stderr,
            "kernel": kk.value, "kernel_stderr": kk.stderr,
            "tail_bound": kk.tail_bound,
            "z": abs(dd.value - kk.value) / sigma if sigma else math.inf,
        })

    decay_vals = []
    for t in decay_ts:
        vals = np.asarray(samples[(float(t), (0, 0, 0))])
        decay_vals.append(float(vals.mean()))
    decay_vals = np.asarray(decay_vals)
    logt = np.log(np.asarray(decay_ts, dtype=float))
    slope, intercept = np.polyfit(logt, np.log(decay_vals), 1)

    return {
        "comparisons": comparisons,
        "decay": {"ts": tuple(float(t) for t in decay_ts),
                  "values": decay_vals, "fitted_exponent": float(slope),
                  "intercept": float(intercept)},
        "brascamp_lieb": {"lhs": bl_lhs, "lhs_stderr": bl_err, "rhs": bl_rhs,
                          "gaussian_variance": gauss_var,
                          "passed": bl_lhs <= bl_rhs + 3.0 * bl_err},
        "induced": {"min_weight": min_weight,
                    "curvature_floor": pot.curvature_min,
                    "moment_power": power,
                    "moment_estimate": weight_power_sum / weight_count},
        "count": count, "side": side, "dt": dt,
    }
