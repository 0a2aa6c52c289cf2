"""Random conductance environments: static fields, speed measures, dynamics.

A conductance field attaches a strictly positive weight to every edge of a
box; a speed measure attaches a positive weight to every vertex and sets the
walk's time parametrization (vertex-speed: all ones; conductance-speed: the
vertex's total conductance).  Dynamic environments extend fields along a time
horizon, either as piecewise-constant per-edge tables or as conductances
induced by an interface trajectory.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from ._rng import stream
from .lattice import LatticeBox, build_box


class EnvironmentError_(ValueError):
    pass


# ---------------------------------------------------------------------------
# edge-weight distributions
# ---------------------------------------------------------------------------

_DIST_KINDS = ("constant", "log-uniform", "uniform", "pareto", "inverse-pareto")


@dataclass(frozen=True)
class DistSpec:
    """A positive scalar law with sampling, closed-form moments, and support."""

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in _DIST_KINDS:
            raise EnvironmentError_(f"unknown distribution kind {self.kind!r}")
        p = self.params
        if self.kind == "constant":
            (c,) = p
            if c <= 0:
                raise EnvironmentError_("constant value must be positive")
        elif self.kind in ("log-uniform", "uniform"):
            a, b = p
            if not (0 < a < b):
                raise EnvironmentError_("need 0 < a < b")
        else:
            alpha, xmin = p
            if alpha <= 0 or xmin <= 0:
                raise EnvironmentError_("need alpha > 0 and xmin > 0")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(size, float(self.params[0]))
        if self.kind == "log-uniform":
            a, b = self.params
            return np.exp(rng.uniform(math.log(a), math.log(b), size))
        if self.kind == "uniform":
            a, b = self.params
            return rng.uniform(a, b, size)
        alpha, xmin = self.params
        u = rng.random(size)
        pareto = xmin * (1.0 - u) ** (-1.0 / alpha)
        if self.kind == "pareto":
            return pareto
        return 1.0 / pareto

    def moment(self, s: float) -> float:
        """E[X^s] in closed form; inf when the moment diverges."""
        if self.kind == "constant":
            return float(self.params[0]) ** s
        if self.kind == "log-uniform":
            a, b = self.params
            if s == 0:
                return 1.0
            return (b**s - a**s) / (s * math.log(b / a))
        if self.kind == "uniform":
            a, b = self.params
            if s == -1.0:
                return math.log(b / a) / (b - a)
            return (b ** (s + 1) - a ** (s + 1)) / ((b - a) * (s + 1))
        alpha, xmin = self.params
        if self.kind == "pareto":
            if s >= alpha:
                return math.inf
            return alpha * xmin**s / (alpha - s)
        # inverse-pareto: X = 1/P with P pareto(alpha, xmin)
        if s <= -alpha:
            return math.inf
        return alpha * xmin ** (-s) / (alpha + s)

    def support(self) -> tuple:
        if self.kind == "constant":
            c = float(self.params[0])
            return (c, c)
        if self.kind in ("log-uniform", "uniform"):
            a, b = self.params
            return (float(a), float(b))
        alpha, xmin = self.params
        if self.kind == "pareto":
            return (float(xmin), math.inf)
        return (0.0, 1.0 / float(xmin))

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    @staticmethod
    def from_json(obj: dict) -> "DistSpec":
        return DistSpec(kind=obj["kind"], params=tuple(obj["params"]))


# ---------------------------------------------------------------------------
# static fields and speed measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConductanceField:
    box: LatticeBox = dc_field(repr=False)
    omega: np.ndarray = dc_field(repr=False)
    dist: DistSpec | None
    seed: int | None

    def __post_init__(self):
        if self.omega.shape != (self.box.n_edges,):
            raise EnvironmentError_("omega must have one value per edge")
        if not np.all(self.omega > 0) or not np.all(np.isfinite(self.omega)):
            raise EnvironmentError_("conductances must be positive and finite")

    def mean_omega(self) -> float:
        return float(self.omega.mean())


def sample_iid(box: LatticeBox, dist: DistSpec, seed: int) -> ConductanceField:
    rng = stream(seed, "iid-conductance")
    omega = dist.sample(rng, box.n_edges)
    return ConductanceField(box=box, omega=omega, dist=dist, seed=int(seed))


def constant_field(box: LatticeBox, value: float = 1.0) -> ConductanceField:
    return ConductanceField(box=box, omega=np.full(box.n_edges, float(value)),
                            dist=DistSpec("constant", (float(value),)), seed=None)


def mu_nu(field: ConductanceField) -> tuple:
    """Total conductance and total resistance at every vertex."""
    w = field.omega[field.box.inc]
    return w.sum(axis=1), (1.0 / w).sum(axis=1)


_SPEED_KINDS = ("vsrw", "csrw", "custom")


@dataclass(frozen=True)
class SpeedMeasure:
    box: LatticeBox = dc_field(repr=False)
    theta: np.ndarray = dc_field(repr=False)
    kind: str
    dist: DistSpec | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.theta.shape != (self.box.n_vertices,):
            raise EnvironmentError_("theta must have one value per vertex")
        if not np.all(self.theta > 0) or not np.all(np.isfinite(self.theta)):
            raise EnvironmentError_("speed weights must be positive and finite")

    def mean(self) -> float:
        return float(self.theta.mean())


def make_speed(field: ConductanceField, kind: str, dist: DistSpec | None = None,
               seed: int | None = None) -> SpeedMeasure:
    if kind not in _SPEED_KINDS:
        raise EnvironmentError_(f"speed kind must be one of {_SPEED_KINDS}")
    box = field.box
    if kind == "vsrw":
        theta = np.ones(box.n_vertices)
    elif kind == "csrw":
        theta, _ = mu_nu(field)
    else:
        if dist is None or seed is None:
            raise EnvironmentError_("custom speed needs a distribution and a seed")
        theta = dist.sample(stream(seed, "custom-speed"), box.n_vertices)
    return SpeedMeasure(box=box, theta=theta, kind=kind, dist=dist, seed=seed)


# ---------------------------------------------------------------------------
# moment report
# ---------------------------------------------------------------------------


def _stable_under_doubling(dist: DistSpec, s: float, seed: int, n: int = 200_000,
                           tol: float = 0.20) -> tuple:
    """Empirical-finiteness proxy: does E-hat[X^s] move < tol when n doubles?"""
    rng = stream(seed, "moment-stability", int(round(1000 * s)) & 0x7FFFFFFF)
    x = dist.sample(rng, 2 * n)
    m1 = float(np.mean(x[:n] ** s))
    m2 = float(np.mean(x**s))
    drift = abs(m2 - m1) / max(abs(m2), abs(m1), 1e-300)
    return drift <= tol, m2, drift


@dataclass(frozen=True)
class MomentReport:
    d: int
    p: float
    q: float
    r: float
    sample_edges: int
    static_lhs: float
    static_rhs: float
    static_ok: bool
    dynamic_lhs: float
    dynamic_ok: bool
    emp_mu_over_theta_p: float
    emp_nu_q: float
    emp_theta_r: float
    emp_inv_theta: float
    emp_theta_over_mu: float  # recorded only, never enforced
    annealed_vsrw_exponents: tuple
    annealed_csrw_exponents: tuple
    annealed_vsrw_stable: bool | None
    annealed_csrw_stable: bool | None
    annealed_moments: dict


def check_moments(field: ConductanceField, speed: SpeedMeasure, p: float,
                  q: float, r: float, seed: int = 0) -> MomentReport:
    """Arithmetic moment-condition verdicts plus empirical moment estimates.

    The two structural conditions are plain arithmetic in (d, p, q, r).  The
    heavier annealed requirements (powers of omega up and down) get an
    empirical finiteness proxy: stability of the sample moment under doubling
    the sample size, drawn fresh from the field's distribution.
    """
    from .regularity import exponents as _exponents

    d = field.box.d
    if min(p, q, r) <= 1:
        raise EnvironmentError_("moment exponents must exceed 1")
    mu, nu = mu_nu(field)
    theta = speed.theta

    static_lhs = 1.0 / r + (1.0 / p) * (r - 1.0) / r + 1.0 / q
    dynamic_lhs = 1.0 / (p - 1.0) + 1.0 / ((p - 1.0) * q) + 1.0 / q
    rhs = 2.0 / d

    emp_mu_theta_p = float(np.mean((mu / theta) ** p * theta) / np.mean(theta))
    emp_nu_q = float(np.mean(nu**q))
    emp_theta_r = float(np.mean(theta**r))
    emp_inv_theta = float(np.mean(1.0 / theta))
    emp_theta_over_mu = float(np.mean(theta / mu))

    kp_v = _exponents(d, p, q, math.inf).l1_power
    kp_c = _exponents(d, math.inf, q, p).l1_power
    vsrw_exps = (2.0 * max(kp_v, p), -2.0 * max(kp_v, q))
    csrw_exps = (max(4.0 * kp_c, 2.0 * p), -max(4.0 * kp_c + 2.0, 2.0 * q))

    vsrw_stable = csrw_stable = None
    moments = {}
    if field.dist is not None:
        checks = {}
        for label, s in (("vsrw_up", vsrw_exps[0]), ("vsrw_down", vsrw_exps[1]),
                         ("csrw_up", csrw_exps[0]), ("csrw_down", csrw_exps[1])):
            ok, est, drift = _stable_under_doubling(field.dist, s, seed)
            closed = field.dist.moment(s)
            checks[label] = ok and math.isfinite(closed)
            moments[label] = {"exponent": s, "estimate": est, "drift": drift,
                              "closed_form": closed}
        vsrw_stable = checks["vsrw_up"] and checks["vsrw_down"]
        csrw_stable = checks["csrw_up"] and checks["csrw_down"]

    return MomentReport(
        d=d, p=p, q=q, r=r, sample_edges=field.box.n_edges,
        static_lhs=static_lhs, static_rhs=rhs, static_ok=static_lhs < rhs,
        dynamic_lhs=dynamic_lhs, dynamic_ok=dynamic_lhs < rhs,
        emp_mu_over_theta_p=emp_mu_theta_p, emp_nu_q=emp_nu_q,
        emp_theta_r=emp_theta_r, emp_inv_theta=emp_inv_theta,
        emp_theta_over_mu=emp_theta_over_mu,
        annealed_vsrw_exponents=vsrw_exps, annealed_csrw_exponents=csrw_exps,
        annealed_vsrw_stable=vsrw_stable, annealed_csrw_stable=csrw_stable,
        annealed_moments=moments,
    )


# ---------------------------------------------------------------------------
# dynamic environments
# ---------------------------------------------------------------------------


class DynamicEnvironment:
    """Time-dependent edge weights on a box over a horizon [t_start, t_end]."""

    kind = "abstract"
    piecewise_constant = False

    def __init__(self, box: LatticeBox, t_start: float, t_end: float):
        if t_end <= t_start:
            raise EnvironmentError_("horizon must have positive length")
        self.box = box
        self.t_start = float(t_start)
        self.t_end = float(t_end)

    def omega_full(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def suggest_dominating_rate(self) -> float:
        raise NotImplementedError

    def tables(self):
        """(offsets, times, values) piecewise-constant tables, if available."""
        raise EnvironmentError_(f"{self.kind} environment has no edge tables")

    def change_times(self) -> np.ndarray:
        """Sorted distinct times at which some edge weight changes."""
        return np.empty(0)

    def mean_change_gap(self) -> float:
        """Mean time between weight changes of a single edge; inf if none."""
        return math.inf

    def cursor(self):
        """Reader optimized for repeated queries at nondecreasing times."""
        return _StatelessCursor(self)

    def _check_t(self, t: float):
        if t < self.t_start - 1e-9 or t > self.t_end + 1e-9:
            raise EnvironmentError_(
                f"time {t} outside horizon [{self.t_start}, {self.t_end}]")


class _StatelessCursor:
    """Fallback cursor: every query re-evaluates the environment."""

    def __init__(self, env):
        self._env = env

    def values_at(self, t: float) -> np.ndarray:
        return self._env.omega_full(t)


class _TableCursor:
    """Per-edge event cursors advanced monotonically through the tables.

    Repeated queries at nondecreasing times cost one vectorized pass per
    event layer actually crossed, so a full sweep over the horizon touches
    every event once instead of rescanning from the start at each query.
    Querying an earlier time than the previous call resets the cursors.
    """

    def __init__(self, env):
        self._env = env
        self._reset()

    def _reset(self):
        env = self._env
        self._cur = env.off[:-1].copy()
        self._nxt = np.minimum(self._cur + 1, env.off[1:] - 1)
        self._last_t = -math.inf

    def values_at(self, t: float) -> np.ndarray:
        env = self._env
        env._check_t(t)
        if t < self._last_t:
            self._reset()
        self._last_t = t
        times = env.times
        while True:
            can = (self._nxt > self._cur) & (times[self._nxt] <= t)
            if not can.any():
                break
            self._cur = np.where(can, self._nxt, self._cur)
            self._nxt = np.minimum(self._cur + 1, env.off[1:] - 1)
        return env.vals[self._cur]


class TableEnvironment(DynamicEnvironment):
    """Piecewise-constant per-edge weights stored as flattened slices."""

    piecewise_constant = True

    def __init__(self, box, t_start, t_end, off, times, vals, kind, meta=None):
        super().__init__(box, t_start, t_end)
        self.kind = kind
        self.off = off
        self.times = times
        self.vals = vals
        self.meta = meta or {}
        if off.shape != (box.n_edges + 1,):
            raise EnvironmentError_("offsets must have one slice per edge")
        if not np.all(vals > 0):
            raise EnvironmentError_("dynamic conductances must stay positive")

    def omega_full(self, t: float) -> np.ndarray:
        return self.omega_full_many(np.array([float(t)]))[0]

    def omega_full_many(self, ts: np.ndarray) -> np.ndarray:
        """Values at several nondecreasing times; returns (len(ts), E)."""
        out = np.empty((len(ts), self.box.n_edges))
        cur = self.cursor()
        for row, t in enumerate(ts):
            out[row] = cur.values_at(t)
        return out

    def cursor(self):
        return _TableCursor(self)

    def tables(self):
        return self.off, self.times, self.vals

    def change_times(self) -> np.ndarray:
        starts = np.zeros(len(self.times), dtype=bool)
        starts[self.off[:-1]] = True
        inner = self.times[~starts]
        return np.unique(inner)

    def mean_change_gap(self) -> float:
        n_inner = len(self.times) - self.box.n_edges
        if n_inner <= 0:
            return math.inf
        return (self.t_end - self.t_start) * self.box.n_edges / n_inner

    def suggest_dominating_rate(self) -> float:
        deg = 2 * self.box.d
        cap = self.meta.get("support_max", math.inf)
        vmax = float(self.vals.max())
        return deg * min(vmax, cap) if math.isfinite(cap) else deg * vmax


def lift_static(field: ConductanceField, t_start: float, t_end: float) -> TableEnvironment:
    """A static field viewed as a (constant) dynamic environment."""
    e = field.box.n_edges
    off = np.arange(e + 1, dtype=np.int64)
    times = np.full(e, float(t_start))
    return TableEnvironment(field.box, t_start, t_end, off, times,
                            field.omega.copy(), kind="static-lift",
                            meta={"support_max": float(field.omega.max())})


def resampling_environment(box: LatticeBox, dist: DistSpec, rate: float,
                           t_start: float, t_end: float, seed: int) -> TableEnvironment:
    """Each edge redraws its weight at its own Poisson clock of rate ``rate``.

    The initial values are drawn from the same law, so the environment is
    stationary in time; all draws come from a stream derived from ``seed``.
    """
    if rate <= 0:
        raise EnvironmentError_("resampling rate must be positive")
    rng = stream(seed, "edge-resampling")
    e = box.n_edges
    horizon = float(t_end) - float(t_start)
    counts = rng.poisson(rate * horizon, e)
    total = int(counts.sum())
    off = np.zeros(e + 1, dtype=np.int64)
    np.cumsum(counts + 1, out=off[1:])
    times = np.empty(off[-1])
    vals = np.empty(off[-1])
    times[off[:-1]] = t_start
    vals[off[:-1]] = dist.sample(rng, e)
    if total:
        ev_t = rng.uniform(t_start, t_end, total)
        ev_v = dist.sample(rng, total)
        labels = np.repeat(np.arange(e), counts)
        order = np.lexsort((ev_t, labels))
        ev_t = ev_t[order]
        ev_v = ev_v[order]
        starts = np.zeros(off[-1], dtype=bool)
        starts[off[:-1]] = True
        times[~starts] = ev_t
        vals[~starts] = ev_v
    support_max = dist.support()[1]
    return TableEnvironment(box, t_start, t_end, off, times, vals,
                            kind="edge-resampling",
                            meta={"rate": float(rate), "dist": dist.to_json(),
                                  "support_max": support_max, "seed": int(seed)})


class TrajectoryEnvironment(DynamicEnvironment):
    """Edge weights induced by an interface trajectory: the potential's second
    derivative across each edge, piecewise constant on the trajectory grid."""

    kind = "interface-driven"
    piecewise_constant = True

    def __init__(self, box, frame_times, frames, vpp, t_start=None, t_end=None):
        t0 = frame_times[0] if t_start is None else t_start
        t1 = frame_times[-1] if t_end is None else t_end
        super().__init__(box, t0, t1)
        self.frame_times = np.asarray(frame_times, dtype=float)
        self.frames = frames  # (m, N) interface heights
        self.vpp = vpp  # second derivative callable, vectorized
        self._cache_idx = -1
        self._cache_val = None

    def _frame_index(self, t: float) -> int:
        self._check_t(t)
        j = int(np.searchsorted(self.frame_times, t + 1e-12, side="right") - 1)
        return min(max(j, 0), len(self.frame_times) - 1)

    def _gradients(self, j: int) -> np.ndarray:
        phi = self.frames[j]
        ends = self.box.edges
        a = phi[ends[:, 0]]
        b = np.where(ends[:, 1] >= 0, phi[np.maximum(ends[:, 1], 0)], 0.0)
        return b - a

    def omega_full(self, t: float) -> np.ndarray:
        j = self._frame_index(t)
        if j != self._cache_idx:
            self._cache_val = self.vpp(self._gradients(j))
            self._cache_idx = j
        return self._cache_val

    def change_times(self) -> np.ndarray:
        return self.frame_times[1:]

    def mean_change_gap(self) -> float:
        if len(self.frame_times) < 2:
            return math.inf
        return (self.t_end - self.t_start) / (len(self.frame_times) - 1)

    def max_gradient(self) -> float:
        g = 0.0
        for j in range(len(self.frame_times)):
            g = max(g, float(np.abs(self._gradients(j)).max()))
        return g

    def suggest_dominating_rate(self) -> float:
        return 2 * self.box.d * float(self.vpp(np.array([self.max_gradient()]))[0])


class SmoothEnvironment(DynamicEnvironment):
    """Callable-backed environment for solver self-convergence studies."""

    kind = "custom-smooth"

    def __init__(self, box, t_start, t_end, omega_fn, dominating_rate):
        super().__init__(box, t_start, t_end)
        self.omega_fn = omega_fn
        self._lam = float(dominating_rate)

    def omega_full(self, t: float) -> np.ndarray:
        self._check_t(t)
        w = np.asarray(self.omega_fn(t), dtype=float)
        if w.shape != (self.box.n_edges,):
            raise EnvironmentError_("omega_fn must return one value per edge")
        return w

    def suggest_dominating_rate(self) -> float:
        return self._lam


def shift(field: ConductanceField, vec) -> ConductanceField:
    """Translate a torus field by a lattice vector (environment shift)."""
    box = field.box
    if box.boundary != "periodic":
        raise EnvironmentError_("shift is defined on tori only")
    v = np.asarray(vec, dtype=np.int64)
    if v.shape != (box.d,):
        raise EnvironmentError_(f"shift vector must have shape ({box.d},)")
    n = box.n_vertices
    shape = (box.side,) * box.d
    out = np.empty_like(field.omega)
    for k in range(box.d):
        block = field.omega[k * n : (k + 1) * n].reshape(shape)
        out[k * n : (k + 1) * n] = np.roll(block, shift=tuple(-v), axis=tuple(range(box.d))).ravel()
    return ConductanceField(box=box, omega=out, dist=field.dist, seed=None)


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------


def write_field_csv(field: ConductanceField, path: str) -> None:
    """Edge list CSV (edge_id, x, y, omega) with a JSON sidecar at path+'.json'."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["edge_id", "x", "y", "omega"])
        for i in range(field.box.n_edges):
            a, b = field.box.edges[i]
            w.writerow([i, int(a), int(b), repr(float(field.omega[i]))])
    sidecar = {
        "box": {"d": field.box.d, "side": field.box.side,
                "boundary": field.box.boundary},
        "dist": None if field.dist is None else field.dist.to_json(),
        "seed": field.seed,
    }
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_field_csv(path: str) -> ConductanceField:
    with open(path + ".json", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    b = sidecar["box"]
    box = build_box(b["d"], b["side"], b["boundary"])
    omega = np.empty(box.n_edges)
    seen = 0
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != ["edge_id", "x", "y", "omega"]:
            raise EnvironmentError_(f"unexpected header {header!r}")
        for row in rd:
            i = int(row[0])
            if not (0 <= i < box.n_edges):
                raise EnvironmentError_(f"edge id {i} out of range")
            if int(row[1]) != int(box.edges[i, 0]) or int(row[2]) != int(box.edges[i, 1]):
                raise EnvironmentError_(f"edge {i} endpoints disagree with the box")
            omega[i] = float(row[3])
            seen += 1
    if seen != box.n_edges:
        raise EnvironmentError_(f"expected {box.n_edges} edges, read {seen}")
    dist = None if sidecar["dist"] is None else DistSpec.from_json(sidecar["dist"])
    return ConductanceField(box=box, omega=omega, dist=dist, seed=sidecar["seed"])
