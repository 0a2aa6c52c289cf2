"""Heat kernels of continuous-time walks by uniformization.

The walk with generator  Lf(x) = (1/theta(x)) sum_y omega(x,y) (f(y) - f(x))
is propagated as a measure: the jump chain P = I + L/Lambda is row-stochastic
once Lambda dominates every exit rate mu(x)/theta(x), and

    P_x(X_t = .) = sum_k  e^{-Lambda t} (Lambda t)^k / k!  .  delta_x P^k ,

truncated where the Poisson tail drops below ``eps_trunc``.  Every term is
nonnegative, so kernels are nonnegative exactly; each advance loses at most
``eps_trunc`` of mass on a torus.  Absorbing boxes keep their closure
half-edges in the exit rates, so mass leaks there by design.

Time-dependent environments are handled by freezing the generator on short
steps at the step midpoint; when the environment is piecewise constant and its
change times are few enough to enumerate, steps are aligned to them and the
freezing is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from . import _kernels
from .environment import ConductanceField, DynamicEnvironment, SpeedMeasure, mu_nu
from .lattice import LatticeBox


class SolverError(RuntimeError):
    pass


class KOverflowError(SolverError):
    """Lambda * horizon beyond the supported range; resize the problem."""


@dataclass(frozen=True)
class SolverParams:
    eps_trunc: float = 1e-12
    # dynamic stepping: None means min(0.05, mean per-edge change spacing)
    dt_dynamic: float | None = None
    # align steps to environment change times when there are at most this many
    event_align_limit: int = 2000
    lam_t_max: float = 1e6

    def __post_init__(self):
        if not (0 < self.eps_trunc < 1e-3):
            raise SolverError("eps_trunc must lie in (0, 1e-3)")


@dataclass
class HeatKernelField:
    """Single-source kernel values on a time grid.

    ``prob[i]`` is the occupation law P_x0(X_{times[i]} = .).  For a static
    speed-theta walk the kernel is prob/theta; dynamic kernels live against
    counting measure, so the kernel is prob itself.
    """

    box: LatticeBox = dc_field(repr=False)
    x0_vid: int
    times: np.ndarray = dc_field(repr=False)
    prob: np.ndarray | None = dc_field(repr=False)
    theta: np.ndarray | None = dc_field(repr=False)
    kind: str = "static"
    meta: dict = dc_field(default_factory=dict)

    def kernel(self, i: int) -> np.ndarray:
        if self.prob is None:
            raise SolverError("kernel values were streamed, not stored")
        if self.kind == "static":
            return self.prob[i] / self.theta
        return self.prob[i]


def _poisson_depth(lam_h: float, eps: float) -> int:
    k = int(poisson.isf(eps, lam_h)) + 1
    while poisson.sf(k, lam_h) >= eps:  # isf can land one short; never under-truncate
        k += 1
    return k


def _poisson_weights(lam_h: float, kmax: int) -> np.ndarray:
    ks = np.arange(kmax + 1)
    return np.exp(ks * np.log(lam_h) - lam_h - gammaln(ks + 1))


class _Propagator:
    """Frozen-generator uniformization stage acting on measure vectors."""

    def __init__(self, box: LatticeBox, omega_edges: np.ndarray,
                 theta: np.ndarray, lam: float | None = None):
        n = box.n_vertices
        w = omega_edges[box.inc]  # (N, 2d) incident conductances
        rate = w.sum(axis=1) / theta
        self.lam = float(rate.max()) if lam is None else float(lam)
        if rate.max() > self.lam * (1 + 1e-12):
            raise SolverError("dominating rate below an exit rate")
        nbr = box.nbr
        self.nbr_safe = np.where(nbr >= 0, nbr, np.arange(n, dtype=nbr.dtype)[:, None])
        # incoming weight from neighbor x into y: omega(edge)/(theta(x)*Lambda)
        th_n = np.where(nbr >= 0, theta[self.nbr_safe], 1.0)
        self.w_in = np.where(nbr >= 0, w / (th_n * self.lam), 0.0)
        self.diag = 1.0 - rate / self.lam
        self._buf = np.empty(n)
        self._tmp = np.empty(n)

    def advance(self, vec: np.ndarray, h: float, eps: float) -> np.ndarray:
        lam_h = self.lam * h
        if lam_h <= 0.0:
            return vec.copy()
        kmax = _poisson_depth(lam_h, eps)
        wts = _poisson_weights(lam_h, kmax)
        acc = wts[0] * vec
        cur = vec.copy()
        nxt = self._buf
        for k in range(1, kmax + 1):
            _kernels.gather_step(nxt, cur, self.diag, self.nbr_safe, self.w_in)
            cur, nxt = nxt, cur
            np.multiply(cur, wts[k], out=self._tmp)
            acc += self._tmp
        return acc


def solve_static(field: ConductanceField, speed: SpeedMeasure, x0_vid: int,
                 times, params: SolverParams | None = None,
                 collect=None, store: bool = True,
                 start_vec: np.ndarray | None = None) -> HeatKernelField:
    """Occupation law of the static walk at the requested times.

    ``times`` must be nondecreasing.  With ``collect`` given, each (index,
    time, occupation vector) is handed to it in order and storage can be
    switched off for long grids.
    """
    params = params or SolverParams()
    box = field.box
    times = np.asarray(times, dtype=float)
    if times.size == 0 or np.any(np.diff(times) < 0) or times[0] < 0:
        raise SolverError("times must be nondecreasing and nonnegative")
    prop = _Propagator(box, field.omega, speed.theta)
    if prop.lam * float(times[-1]) > params.lam_t_max:
        raise KOverflowError(
            f"Lambda*t = {prop.lam * times[-1]:.3g} exceeds {params.lam_t_max:.0e}")

    n = box.n_vertices
    if start_vec is None:
        vec = np.zeros(n)
        vec[x0_vid] = 1.0
    else:
        vec = start_vec.astype(float).copy()
    out = np.empty((times.size, n)) if store else None
    t_prev = 0.0
    defects = 0.0
    for i, t in enumerate(times):
        vec = prop.advance(vec, t - t_prev, params.eps_trunc)
        t_prev = t
        if store:
            out[i] = vec
        if collect is not None:
            collect(i, float(t), vec)
    if box.boundary == "periodic":
        defects = abs(float(vec.sum()) - 1.0)
    meta = {"lambda": prop.lam, "eps_trunc": params.eps_trunc,
            "final_mass_defect": defects, "n_advances": int(times.size)}
    return HeatKernelField(box=box, x0_vid=int(x0_vid), times=times, prob=out,
                           theta=speed.theta, kind="static", meta=meta)


def _dynamic_step_grid(env: DynamicEnvironment, t_from: float, t_to: float,
                       out_times: np.ndarray, params: SolverParams) -> np.ndarray:
    changes = env.change_times()
    inside = changes[(changes > t_from) & (changes < t_to)]
    aligned = env.piecewise_constant and inside.size <= params.event_align_limit
    knots = [np.array([t_from, t_to]), np.asarray(out_times, dtype=float)]
    if aligned:
        knots.append(inside)
    grid = np.unique(np.concatenate(knots))
    grid = grid[(grid >= t_from) & (grid <= t_to)]
    if aligned:
        return grid  # freezing is exact on every span; no subdivision needed
    if params.dt_dynamic is not None:
        dt = params.dt_dynamic
    else:
        # aim below the mean per-edge change spacing, capped at 0.05
        dt = min(0.05, env.mean_change_gap())
    pieces = [np.array([t_from])]
    for a, b in zip(grid[:-1], grid[1:]):
        m = int(np.ceil((b - a) / dt - 1e-12))
        if m > 1:
            pieces.append(a + (b - a) * np.arange(1, m) / m)
        pieces.append(np.array([b]))
    return np.concatenate(pieces)


def solve_dynamic(env: DynamicEnvironment, x0_vid: int, t_from: float, times,
                  params: SolverParams | None = None, collect=None,
                  store: bool = True,
                  start_vec: np.ndarray | None = None) -> HeatKernelField:
    """Occupation law of the vertex-speed walk in a time-dependent environment.

    The generator is frozen per step at the step midpoint; steps align to the
    environment's change times when those are few (exact for piecewise-
    constant environments), else a uniform step ``dt_dynamic`` is used.
    """
    params = params or SolverParams()
    box = env.box
    times = np.asarray(times, dtype=float)
    if times.size == 0 or np.any(np.diff(times) < 0) or times[0] < t_from - 1e-12:
        raise SolverError("times must be nondecreasing and start at or after t_from")
    theta = np.ones(box.n_vertices)
    lam_probe = env.suggest_dominating_rate()
    if lam_probe * float(times[-1] - t_from) > params.lam_t_max:
        raise KOverflowError("Lambda*horizon exceeds the supported range")

    grid = _dynamic_step_grid(env, float(t_from), float(times[-1]), times, params)
    n = box.n_vertices
    if start_vec is None:
        vec = np.zeros(n)
        vec[x0_vid] = 1.0
    else:
        vec = start_vec.astype(float).copy()
    out = np.empty((times.size, n)) if store else None

    out_idx = 0
    while out_idx < times.size and abs(grid[0] - times[out_idx]) <= 1e-12:
        if store:
            out[out_idx] = vec
        if collect is not None:
            collect(out_idx, float(times[out_idx]), vec)
        out_idx += 1
    reader = env.cursor()
    for a, b in zip(grid[:-1], grid[1:]):
        w_mid = reader.values_at(0.5 * (a + b))
        prop = _Propagator(box, w_mid, theta)
        vec = prop.advance(vec, b - a, params.eps_trunc)
        while out_idx < times.size and abs(b - times[out_idx]) <= 1e-12:
            if store:
                out[out_idx] = vec
            if collect is not None:
                collect(out_idx, float(times[out_idx]), vec)
            out_idx += 1
    if out_idx != times.size:
        raise SolverError("internal stepping missed an output time")
    meta = {"eps_trunc": params.eps_trunc, "steps": int(grid.size - 1),
            "t_from": float(t_from)}
    return HeatKernelField(box=box, x0_vid=int(x0_vid), times=times, prob=out,
                           theta=None, kind="dynamic", meta=meta)


def chapman_kolmogorov_check(field: ConductanceField, speed: SpeedMeasure,
                             x0_vid: int, t1: float, t2: float,
                             params: SolverParams | None = None) -> float:
    """Max-abs defect of one-advance versus two-advance propagation."""
    params = params or SolverParams()
    two = solve_static(field, speed, x0_vid, [t1, t1 + t2], params)
    one = solve_static(field, speed, x0_vid, [t1 + t2], params)
    return float(np.max(np.abs(two.prob[1] - one.prob[0])))


# ---------------------------------------------------------------------------
# independent series oracle for the constant-conductance walk
# ---------------------------------------------------------------------------


def line_return_probability(t: float) -> float:
    """Return probability at the origin of the rate-1-per-neighbor walk on Z.

    Plain series sum_k e^{-2t} t^{2k} / (k!)^2 with the exponential folded into
    the first term so nothing overflows; summation stops only past the term
    peak (k ~ t) once terms are negligible.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        return 1.0
    term = float(np.exp(-2.0 * t))
    acc = term
    k = 0
    while True:
        k += 1
        term *= (t * t) / (k * k)
        acc += term
        if k > t and term < 1e-18 * acc:
            return acc
        if k > 100000:  # pragma: no cover - guard
            raise RuntimeError("series did not converge")


def constant_walk_diagonal(t: float, d: int) -> float:
    """On-diagonal kernel of the unit-conductance vertex-speed walk on Z^d."""
    return line_return_probability(t) ** d
