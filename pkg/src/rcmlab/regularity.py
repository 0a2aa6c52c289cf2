"""Weighted norms, discrete energies, exponent bookkeeping, and statistical
verification of the functional inequalities behind the heat-kernel bounds.

The inequalities implemented here are of the form

    LHS(u, environment)  <=  c * RHS(u, environment)

with an unspecified finite constant c.  Numerically we therefore never assert
a fixed constant; instead `calibrate` fits the implied constant on a set of
random environments and validates it on a disjoint set (see
`inequality_suite`).  All norms are exact finite sums; time integrals use the
trapezoid rule on the supplied grid.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from ._rng import stream
from .environment import mu_nu, sample_iid, make_speed
from .lattice import ball as make_ball


class RegularityError(ValueError):
    pass


# ---------------------------------------------------------------------------
# averaged norms
# ---------------------------------------------------------------------------

def site_norm(values, p):
    """Count-averaged l^p norm: ((1/|B|) * sum |f|^p)^(1/p); p = inf -> max."""
    v = np.abs(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise RegularityError("norm over an empty set")
    if math.isinf(p):
        return float(v.max())
    if p <= 0:
        raise RegularityError("norm exponent must be positive")
    return float(np.mean(v ** p) ** (1.0 / p))


def weighted_site_norm(values, p, weight):
    """Weight-averaged norm: ((1/w(B)) * sum w |f|^p)^(1/p); p = inf -> max."""
    v = np.abs(np.asarray(values, dtype=np.float64))
    w = np.asarray(weight, dtype=np.float64)
    if np.any(w <= 0):
        raise RegularityError("weights must be positive")
    if math.isinf(p):
        return float(v.max())
    return float((np.sum(w * v ** p) / np.sum(w)) ** (1.0 / p))


def tilted_site_norm(values, p, weight):
    """Weight-in-sum, count-normalized norm: ((1/|B|) * sum w |f|^p)^(1/p).

    Differs from `weighted_site_norm` only in the normalizer, so the two
    coincide exactly when the weight is identically 1.
    """
    v = np.abs(np.asarray(values, dtype=np.float64))
    w = np.asarray(weight, dtype=np.float64)
    if math.isinf(p):
        return float(v.max())
    return float(np.mean(w * v ** p) ** (1.0 / p))


def spacetime_norm(snapshots, times, p_site, p_time, weight=None, tilted=False):
    """Space-time averaged norm on a time grid.

    snapshots has shape (n_times, n_sites).  The site norm (optionally
    weighted) is taken per row, then averaged in time:

        ((1/|I|) * integral inner(t)^p_time dt)^(1/p_time)

    with p_time = inf giving the max over the grid.  A single-time grid (or a
    degenerate interval) returns the inner norm maximum.
    """
    snaps = np.asarray(snapshots, dtype=np.float64)
    ts = np.asarray(times, dtype=np.float64)
    if snaps.ndim != 2 or snaps.shape[0] != ts.size:
        raise RegularityError("snapshot/time shape mismatch")
    if weight is None:
        inner = np.array([site_norm(row, p_site) for row in snaps])
    elif tilted:
        inner = np.array([tilted_site_norm(row, p_site, weight) for row in snaps])
    else:
        inner = np.array([weighted_site_norm(row, p_site, weight) for row in snaps])
    length = ts[-1] - ts[0]
    if math.isinf(p_time) or length <= 0:
        return float(inner.max())
    avg = np.trapezoid(inner ** p_time, ts) / length
    return float(avg ** (1.0 / p_time))


def weighted_mean(values, weight, vids=None):
    """Average of `values` with respect to `weight`, optionally over `vids`."""
    v = np.asarray(values, dtype=np.float64)
    w = np.asarray(weight, dtype=np.float64)
    if vids is not None:
        v = v[vids]
        w = w[vids]
    return float(np.sum(w * v) / np.sum(w))


# ---------------------------------------------------------------------------
# discrete energies and cutoffs
# ---------------------------------------------------------------------------

def _real_edges(box, member=None):
    a = box.edges[:, 0]
    b = box.edges[:, 1]
    keep = b >= 0
    if member is not None:
        keep = keep & member[a] & member[np.where(b >= 0, b, 0)]
    return a[keep], b[keep], keep


def dirichlet_energy(field, f, g=None, eta=None, member=None):
    """Quadratic form sum_e w(e) (f(b)-f(a)) (g(b)-g(a)) over lattice edges.

    `eta` (a [0,1] cutoff on vertices) replaces w(e) by
    min(eta(a), eta(b))^2 * w(e).  `member` restricts the sum to edges with
    both endpoints inside the given boolean vertex mask.  Edges leaving the
    box (open boundary) never contribute.
    """
    a, b, keep = _real_edges(field.box, member)
    w = field.omega[keep]
    if eta is not None:
        w = w * np.minimum(eta[a], eta[b]) ** 2
    df = f[b] - f[a]
    if g is None:
        return float(np.sum(w * df * df))
    return float(np.sum(w * df * (g[b] - g[a])))


def cutoff_support_ratio(box, eta):
    """Largest one-edge multiplicative jump of a nonnegative cutoff.

    max over edges, in both orientations with nonzero denominator, of
    (eta(head)/eta(tail)) or 1, whichever is larger.  Identically 1 for a
    constant positive cutoff.
    """
    a, b, _ = _real_edges(box)
    ea = eta[a]
    eb = eta[b]
    best = 1.0
    for tail, head in ((ea, eb), (eb, ea)):
        nz = tail != 0
        if np.any(nz):
            best = max(best, float(np.max(head[nz] / tail[nz])))
    return best


def max_cutoff_gradient(box, eta):
    """Largest |eta(b) - eta(a)| over edges."""
    a, b, _ = _real_edges(box)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(eta[b] - eta[a])))


def radial_cutoff(box, x0_vid, inner_radius, outer_radius):
    """Vertex cutoff that is 1 within graph distance inner_radius of the
    anchor, 0 at distance >= outer_radius, linear in between."""
    from .lattice import distance_field

    if not outer_radius > inner_radius >= 0:
        raise RegularityError("need outer_radius > inner_radius >= 0")
    dist = distance_field(box, x0_vid)
    eta = (outer_radius - dist) / float(outer_radius - inner_radius)
    return np.clip(eta, 0.0, 1.0)


def time_ramp(times, start, width):
    """Time cutoff rising linearly from 0 at `start` to 1 at `start+width`."""
    if width <= 0:
        raise RegularityError("ramp width must be positive")
    return np.clip((np.asarray(times, dtype=np.float64) - start) / width, 0.0, 1.0)


# ---------------------------------------------------------------------------
# exponent bookkeeping
# ---------------------------------------------------------------------------

def holder_conjugate(p):
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


@dataclass(frozen=True)
class ExponentBundle:
    """All derived integrability exponents for one choice of (d, p, q, r).

    p governs the moment of the vertex-weight ratio, q the moment of the
    inverse-conductance sum, r the moment of the speed measure.  Infinite
    inputs are handled symbolically (conjugate 1, limits of the formulas).
    """

    d: int
    p: float
    q: float
    r: float
    p_conj: float
    r_conj: float
    sobolev_exponent: float       # qd/(q(d-2)+d), infinite for d=2, q=inf
    iteration_gain: float         # 1 + 1/p_conj - r_conj/sobolev_exponent
    sup_power: float              # power on the env factor in the sup bound
    l1_power: float               # power in the L1-to-sup bound
    iteration_gain_dyn: float
    l1_power_dyn: float
    interpolation_weight: float   # per-step weight of the L1 factor, in (0,1)
    static_condition_value: float
    static_ok: bool
    dynamic_condition_value: float
    dynamic_ok: bool

    @property
    def sup_power_crosscheck(self):
        """Same sup-bound power computed through the iteration gain."""
        a = self.iteration_gain
        if a <= 1.0:
            return math.inf
        return (1.0 + a / (a - 1.0)) / 2.0

    def iteration_depth(self, n, delta, sigma, sigma_prime):
        """Number of nested cylinders used at scale n for gap sigma-sigma'."""
        gap = sigma - sigma_prime
        if not 0 < gap < 1:
            raise RegularityError("need 0 < sigma - sigma_prime < 1")
        if n < 1:
            raise RegularityError("scale must be >= 1")
        return int(math.floor((delta * math.log(n) - math.log(gap)) / math.log(2.0)))

    def interpolation_exponent(self, n, delta, sigma, sigma_prime):
        """Exponent on the L1 norm in the dynamic sup bound at scale n.

        Equals w * sum_{k<K} (1-w)^k = 1 - (1-w)^K for the interpolation
        weight w and iteration depth K; increases to 1 along n -> infinity.
        """
        depth = self.iteration_depth(n, delta, sigma, sigma_prime)
        if depth <= 0:
            return 0.0
        w = self.interpolation_weight
        return 1.0 - (1.0 - w) ** depth

    def as_dict(self):
        out = {}
        for name in ("d", "p", "q", "r", "p_conj", "r_conj", "sobolev_exponent",
                     "iteration_gain", "sup_power", "l1_power",
                     "iteration_gain_dyn", "l1_power_dyn",
                     "interpolation_weight", "static_condition_value",
                     "dynamic_condition_value"):
            out[name] = getattr(self, name)
        out["static_ok"] = self.static_ok
        out["dynamic_ok"] = self.dynamic_ok
        return out


def sobolev_embedding_exponent(d, q):
    """qd/(q(d-2)+d); the embedding power for squared functions."""
    if d < 2:
        raise RegularityError("dimension must be >= 2")
    if math.isinf(q):
        return math.inf if d == 2 else d / (d - 2.0)
    den = q * (d - 2.0) + d
    return q * d / den


def exponents(d, p, q, r, _require=False):
    """Derive every exponent used by the sup and L1 bounds.

    All of p, q, r lie in (1, inf].  Condition verdicts report whether the
    static moment condition 1/r + (1/p)(r-1)/r + 1/q < 2/d and its dynamic
    counterpart (1/(p-1))(q+1)/q + 1/q < 2/d hold; failed conditions give
    infinite powers rather than raising.
    """
    for name, val in (("p", p), ("q", q), ("r", r)):
        if not (val > 1):
            raise RegularityError("exponent %s must lie in (1, inf]" % name)
    p = float(p)
    q = float(q)
    r = float(r)
    pc = holder_conjugate(p)
    rc = holder_conjugate(r)
    rho = sobolev_embedding_exponent(d, q)

    inv = lambda x: 0.0 if math.isinf(x) else 1.0 / x
    static_val = inv(r) + inv(p) * (1.0 - inv(r)) + inv(q)
    static_ok = static_val < 2.0 / d
    dynamic_val = (0.0 if math.isinf(p) else (q + 1.0) / (q * (p - 1.0)) if not math.isinf(q)
                   else 1.0 / (p - 1.0)) + inv(q)
    dynamic_ok = dynamic_val < 2.0 / d

    if math.isinf(rho):
        gain = 1.0 + 1.0 / pc
        sup_power = 1.0 + pc / 2.0
        l1_power = pc + pc * pc
    elif rho > pc * rc:
        gain = 1.0 + 1.0 / pc - rc / rho
        sup_power = 1.0 + pc * rho / (2.0 * (rho - pc * rc))
        l1_power = pc + pc * pc * rho / (rho - rc * pc)
    else:
        # embedding too weak for the chosen moments; the bounds carry no power
        gain = 1.0 + 1.0 / pc - rc / rho
        sup_power = math.inf
        l1_power = math.inf

    rho_share = 1.0 if math.isinf(rho) else 1.0 - 1.0 / rho
    q_share = 1.0 if math.isinf(q) else q / (q + 1.0)
    gain_dyn = (1.0 + rho_share * q_share) / pc
    if gain_dyn > 1.0:
        l1_power_dyn = gain_dyn * gain_dyn * pc / (gain_dyn - 1.0)
        weight = 1.0 / (2.0 * gain_dyn * pc)
    else:
        l1_power_dyn = math.inf
        weight = 1.0 / (2.0 * gain_dyn * pc)

    bundle = ExponentBundle(
        d=d, p=p, q=q, r=r, p_conj=pc, r_conj=rc, sobolev_exponent=rho,
        iteration_gain=gain, sup_power=sup_power, l1_power=l1_power,
        iteration_gain_dyn=gain_dyn, l1_power_dyn=l1_power_dyn,
        interpolation_weight=weight,
        static_condition_value=static_val, static_ok=static_ok,
        dynamic_condition_value=dynamic_val, dynamic_ok=dynamic_ok)
    if _require and not static_ok:
        raise RegularityError("static moment condition fails for (d,p,q,r)=%r"
                              % ((d, p, q, r),))
    return bundle


# ---------------------------------------------------------------------------
# environment functionals entering the bounds
# ---------------------------------------------------------------------------

def env_factor_poincare(field, speed, ball, q, r):
    """Factor multiplying the gradient term in the weighted mean-value bound."""
    _, nu = mu_nu(field)
    th = speed.theta[ball.vids]
    return (site_norm(1.0 / th, 1) ** 2
            * site_norm(th, r) ** 2
            * site_norm(nu[ball.vids], q))


def env_factor_sup(field, speed, ball, p, q, r):
    """Factor raised to `sup_power` in the sup bound on caloric functions."""
    mu, nu = mu_nu(field)
    vids = ball.vids
    th = speed.theta[vids]
    t1 = weighted_site_norm(np.maximum(1.0, mu[vids] / th), p, th)
    t2 = site_norm(np.maximum(1.0, nu[vids]), q)
    t3 = site_norm(np.maximum(1.0, th), r) ** 2
    t4 = site_norm(np.maximum(1.0, 1.0 / th), 1)
    return t1 * t2 * t3 * t4


def env_factor_osc(field, speed, x0_vid, n):
    """Factor controlling the oscillation contraction at scale n >= 4."""
    if n < 4:
        raise RegularityError("oscillation factor needs n >= 4")
    box = field.box
    quarter = make_ball(box, x0_vid, max(1, n // 4))
    half = make_ball(box, x0_vid, n // 2)
    th = speed.theta
    return (site_norm(1.0 / th[quarter.vids], 1)
            * site_norm(th[half.vids], 1))


def env_factor_l1(field, speed, ball, p, q, r):
    """Factor raised to `l1_power` in the L1-to-sup bound.

    Similar in shape to `env_factor_sup` but with the count-normalized first
    norm, an unsquared speed norm, and the q-th moment of the inverse speed.
    """
    mu, nu = mu_nu(field)
    vids = ball.vids
    th = speed.theta[vids]
    t1 = tilted_site_norm(np.maximum(1.0, mu[vids] / th), p, th)
    t2 = site_norm(np.maximum(1.0, nu[vids]), q)
    t3 = site_norm(np.maximum(1.0, th), r)
    t4 = site_norm(np.maximum(1.0, 1.0 / th), q)
    return t1 * t2 * t3 * t4


def env_factor_dyn(mu_snaps, nu_snaps, times, p, q):
    """Space-time moment factor for the dynamic sup bound (p,p and q,q norms
    over the full cylinder)."""
    t1 = spacetime_norm(np.maximum(1.0, mu_snaps), times, p, p)
    t2 = spacetime_norm(np.maximum(1.0, nu_snaps), times, q, q)
    return t1 * t2


# ---------------------------------------------------------------------------
# inequality checks
# ---------------------------------------------------------------------------

@dataclass
class InequalityReport:
    which: str
    lhs: float
    rhs: float                    # constant-free right-hand side
    c_hat: float                  # implied constant, nan when rhs == 0
    factors: dict = dc_field(default_factory=dict)
    test_function: str = ""
    extras: dict = dc_field(default_factory=dict)


def _implied(lhs, rhs):
    if rhs <= 0.0:
        return math.nan
    return lhs / rhs


def check_sobolev(field, speed, ball, v, q):
    """Embedding bound for squared functions vanishing on the ball boundary:

        |v^2|_{rho}  <=  c * |B|^(2/d) * |nu|_q * |theta|_1 * E(v)/theta(B)
    """
    box = field.box
    if np.max(np.abs(v[ball.inner_boundary()])) != 0.0:
        raise RegularityError("test function must vanish on the ball boundary")
    d = box.d
    rho = sobolev_embedding_exponent(d, q)
    vids = ball.vids
    th = speed.theta[vids]
    _, nu = mu_nu(field)
    member = np.zeros(box.n_vertices, dtype=bool)
    member[vids] = True
    energy = dirichlet_energy(field, v, member=member)
    lhs = site_norm(v[vids] ** 2, rho)
    rhs = (vids.size ** (2.0 / d)
           * site_norm(nu[vids], q)
           * site_norm(th, 1)
           * energy / float(np.sum(th)))
    return InequalityReport(
        which="sobolev", lhs=lhs, rhs=rhs, c_hat=_implied(lhs, rhs),
        factors={"energy": energy},
        test_function="bump vanishing on the ball boundary",
        extras={"rho": rho, "q": q})


def check_poincare(field, speed, ball, u, q, r, radius, subset_vids=None):
    """Weighted mean-value bound over a graph ball of the given radius.

    With `subset_vids` the average is taken over that subset and the bound
    carries the extra factor (1 + theta(B)/theta(subset))^2.
    """
    box = field.box
    vids = ball.vids
    th_all = speed.theta
    th = th_all[vids]
    if subset_vids is None:
        center = weighted_mean(u, th_all, vids)
        variant = "mean"
        extra = 1.0
    else:
        sub = np.asarray(subset_vids)
        if sub.size == 0:
            raise RegularityError("subset for the averaged bound is empty")
        center = weighted_mean(u, th_all, sub)
        variant = "subset"
        extra = (1.0 + float(np.sum(th)) / float(np.sum(th_all[sub]))) ** 2
    lhs = weighted_site_norm(u[vids] - center, 1, th) ** 2
    member = np.zeros(box.n_vertices, dtype=bool)
    member[vids] = True
    grad_sq = dirichlet_energy(field, u, member=member)
    factor = env_factor_poincare(field, speed, ball, q, r)
    rhs = factor * extra * (radius ** 2 / float(vids.size)) * grad_sq
    return InequalityReport(
        which="poincare-" + variant, lhs=lhs, rhs=rhs,
        c_hat=_implied(lhs, rhs), factors={"A1": factor},
        test_function="given u", extras={"radius": radius})


def check_energy(field, speed, snapshots, times, ball, eta, xi, k, p):
    """Cutoff energy bound for nonnegative space-time solutions.

    The left side combines the peak weighted mass of xi*eta^2*(u-k)_+^2 with
    the time-averaged cutoff Dirichlet energy of eta*(u-k)_+; the right side
    is the (p, conjugate) space-time norm of (u-k)_+^2 times the cutoff
    steepness factors.  Time averaging uses the trapezoid rule on `times`.
    """
    box = field.box
    vids = ball.vids
    if np.max(np.abs(eta[ball.inner_boundary()])) != 0.0:
        raise RegularityError("spatial cutoff must vanish on the ball boundary")
    if abs(xi[0]) != 0.0:
        raise RegularityError("time cutoff must vanish at the interval start")
    ts = np.asarray(times, dtype=np.float64)
    length = ts[-1] - ts[0]
    if length <= 0:
        raise RegularityError("need a nondegenerate time interval")
    th = speed.theta[vids]
    theta_total = float(np.sum(th))
    member = np.zeros(box.n_vertices, dtype=bool)
    member[vids] = True

    v = np.maximum(np.asarray(snapshots, dtype=np.float64) - k, 0.0)
    mass = np.array([weighted_site_norm(xi[i] * (eta[vids] ** 2) * v[i, vids] ** 2,
                                        1, th)
                     for i in range(ts.size)])
    energies = np.array([dirichlet_energy(field, eta * v[i], member=member)
                         for i in range(ts.size)])
    lhs = (float(mass.max())
           + float(np.trapezoid(xi * energies / theta_total, ts))) / length

    mu, _ = mu_nu(field)
    steep = (weighted_site_norm(mu[vids] / th, p, th)
             * max_cutoff_gradient(box, eta) ** 2
             + float(np.max(np.abs(np.gradient(xi, ts)))))
    pc = holder_conjugate(p)
    rhs = steep * spacetime_norm(v[:, vids] ** 2, ts, pc, 1, weight=th)
    return InequalityReport(
        which="energy", lhs=lhs, rhs=rhs, c_hat=_implied(lhs, rhs),
        factors={"steepness": steep},
        test_function="clipped solution snapshots",
        extras={"k": k, "p": p})


def _time_slice(times, lo, hi):
    ts = np.asarray(times, dtype=np.float64)
    tol = 1e-9 * max(1.0, abs(hi))
    keep = (ts >= lo - tol) & (ts <= hi + tol)
    if not np.any(keep):
        raise RegularityError("no grid times inside the requested interval")
    return keep


def check_maximal(field, speed, snapshots, times, x0_vid, which, n,
                  sigma, sigma_prime, bundle, h=0.0, t0=None, eps=None,
                  delta=None, mu_snaps=None, nu_snaps=None):
    """Sup bound on a shrunk space-time cylinder from a norm on the full one.

    which = "backward":  cylinders [t0 - s*n^2, t0] x B(x0, s*n); bound
        max u <= h + c * (F2/(s-s')^2)^sup_power * |(u-h)_+|_{2p*,2,weighted}.
    which = "interior-l1":  cylinders [(1-s)*eps*n^2, n^2 - (1-s)*eps*n^2]
        x B(x0, s*n); L1-type right-hand side with power l1_power.
    which = "dynamic":  forward cylinders [t0, t0 + s*n^2] x B(x0, s*n);
        plain space-time L1 norm raised to the interpolation exponent, env
        factor from `mu_snaps`/`nu_snaps` sampled on the full grid.

    `snapshots` holds u on the full time grid over the whole box; only
    columns inside the relevant balls are read.
    """
    if not sigma > sigma_prime > 0:
        raise RegularityError("need sigma > sigma_prime > 0")
    box = field.box if field is not None else None
    ts = np.asarray(times, dtype=np.float64)
    snaps = np.asarray(snapshots, dtype=np.float64)
    gap = sigma - sigma_prime

    if which == "backward":
        if t0 is None:
            t0 = float(ts[-1])
        ball_out = make_ball(box, x0_vid, int(sigma * n))
        ball_in = make_ball(box, x0_vid, int(sigma_prime * n))
        keep_out = _time_slice(ts, t0 - sigma * n * n, t0)
        keep_in = _time_slice(ts, t0 - sigma_prime * n * n, t0)
        lhs = float(snaps[np.ix_(keep_in, ball_in.vids)].max())
        th = speed.theta[ball_out.vids]
        excess = np.maximum(snaps[np.ix_(keep_out, ball_out.vids)] - h, 0.0)
        norm = spacetime_norm(excess, ts[keep_out], 2.0 * bundle.p_conj, 2.0,
                              weight=th)
        factor = env_factor_sup(field, speed, make_ball(box, x0_vid, n),
                                bundle.p, bundle.q, bundle.r)
        rhs = (factor / gap ** 2) ** bundle.sup_power * norm
        c_hat = _implied(max(lhs - h, 0.0), rhs)
        return InequalityReport(
            which="maximal-backward", lhs=lhs, rhs=rhs, c_hat=c_hat,
            factors={"A2": factor},
            test_function="caloric snapshots", extras={"h": h, "n": n})

    if which == "interior-l1":
        if eps is None or not 0 < eps < 0.25:
            raise RegularityError("interior bound needs eps in (0, 1/4)")
        ball_out = make_ball(box, x0_vid, int(sigma * n))
        ball_in = make_ball(box, x0_vid, int(sigma_prime * n))
        lo_out = (1.0 - sigma) * eps * n * n
        hi_out = n * n - lo_out
        lo_in = (1.0 - sigma_prime) * eps * n * n
        hi_in = n * n - lo_in
        keep_out = _time_slice(ts, lo_out, hi_out)
        keep_in = _time_slice(ts, lo_in, hi_in)
        lhs = float(snaps[np.ix_(keep_in, ball_in.vids)].max())
        th = speed.theta[ball_out.vids]
        norm = spacetime_norm(snaps[np.ix_(keep_out, ball_out.vids)],
                              ts[keep_out], 1.0, 1.0 / bundle.p_conj,
                              weight=th, tilted=True)
        ball_full = make_ball(box, x0_vid, n)
        factor = env_factor_l1(field, speed, ball_full,
                               bundle.p, bundle.q, bundle.r)
        prefac = site_norm(np.maximum(1.0, 1.0 / speed.theta[ball_full.vids]), 1)
        rhs = prefac * (factor / (eps * gap ** 2)) ** bundle.l1_power * norm
        return InequalityReport(
            which="maximal-interior-l1", lhs=lhs, rhs=rhs,
            c_hat=_implied(lhs, rhs), factors={"A4": factor},
            test_function="kernel snapshots", extras={"eps": eps, "n": n})

    if which == "dynamic":
        if t0 is None:
            t0 = float(ts[0])
        if delta is None:
            raise RegularityError("dynamic bound needs the scale exponent delta")
        if mu_snaps is None or nu_snaps is None:
            raise RegularityError("dynamic bound needs mu/nu snapshots")
        ball_out = make_ball(box, x0_vid, int(sigma * n))
        ball_in = make_ball(box, x0_vid, int(sigma_prime * n))
        keep_out = _time_slice(ts, t0, t0 + sigma * n * n)
        keep_in = _time_slice(ts, t0, t0 + sigma_prime * n * n)
        lhs = float(snaps[np.ix_(keep_in, ball_in.vids)].max())
        norm = spacetime_norm(snaps[np.ix_(keep_out, ball_out.vids)],
                              ts[keep_out], 1.0, 1.0)
        beta = bundle.interpolation_exponent(n, delta, sigma, sigma_prime)
        ball_full = make_ball(box, x0_vid, n)
        factor = env_factor_dyn(mu_snaps[:, ball_full.vids],
                                nu_snaps[:, ball_full.vids], ts,
                                bundle.p, bundle.q)
        rhs = (factor / gap ** 2) ** bundle.l1_power_dyn * norm ** beta
        return InequalityReport(
            which="maximal-dynamic", lhs=lhs, rhs=rhs,
            c_hat=_implied(lhs, rhs), factors={"A5": factor},
            test_function="dynamic kernel snapshots",
            extras={"beta": beta, "delta": delta, "n": n})

    raise RegularityError("unknown maximal bound variant %r" % which)


# ---------------------------------------------------------------------------
# smoothed negative log used by the oscillation argument
# ---------------------------------------------------------------------------

def neg_log_matching_point(tol=1e-14):
    """Smallest root of 2 c ln(1/c) = 1 - c in [1/4, 1/3], by bisection.

    At this point the negative log and the quadratic branch of
    `smooth_neg_log` meet with matching value and slope.
    """
    f = lambda c: 2.0 * c * math.log(1.0 / c) - (1.0 - c)
    lo, hi = 0.25, 1.0 / 3.0
    if not (f(lo) < 0.0 < f(hi)):
        raise RegularityError("bracket does not straddle the matching point")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


_MATCH_POINT = None


def smooth_neg_log(z):
    """C^1 convex non-increasing surrogate of max(-ln z, 0).

    Equal to -ln z up to the matching point, a parabola (z-1)^2/(2 c (1-c))
    from there to 1, and zero beyond.  Accepts scalars or arrays; all inputs
    must be positive.
    """
    global _MATCH_POINT
    if _MATCH_POINT is None:
        _MATCH_POINT = neg_log_matching_point()
    c = _MATCH_POINT
    arr = np.asarray(z, dtype=np.float64)
    if np.any(arr <= 0.0):
        raise RegularityError("smooth_neg_log needs positive arguments")
    with np.errstate(divide="ignore"):
        out = np.where(arr <= c, -np.log(arr),
                       np.where(arr <= 1.0,
                                (arr - 1.0) ** 2 / (2.0 * c * (1.0 - c)),
                                0.0))
    if np.isscalar(z):
        return float(out)
    return out


# ---------------------------------------------------------------------------
# calibration / validation protocol
# ---------------------------------------------------------------------------

@dataclass
class CalibrationResult:
    which: str
    c_calibration: np.ndarray
    c_validation: np.ndarray
    c_max: float
    spread: float                 # max/min over the calibration set
    pass_rate: float              # share of validation runs within c_max
    passed: bool
    level: float
    records: list = dc_field(default_factory=list)  # per-run reports, cal then val
    seeds: np.ndarray | None = None


def calibrate(which, runner, seed, n_cal=20, n_val=20, level=0.95,
              spread_limit=10.0):
    """Fit the implied constant on `n_cal` random environments and validate
    it on `n_val` fresh ones.

    `runner(env_seed)` must return the implied constant of one inequality
    evaluation.  Passing requires the calibration constants to span less
    than `spread_limit` multiplicatively and the calibration maximum to
    dominate at least `level` of the validation runs.
    """
    seeds = stream(seed, "calibration", which).integers(0, 2 ** 62,
                                                        n_cal + n_val)
    records = [runner(int(s)) for s in seeds]
    cs = np.array([r.c_hat if isinstance(r, InequalityReport) else float(r)
                   for r in records])
    c_cal, c_val = cs[:n_cal], cs[n_cal:]
    if np.any(~np.isfinite(cs)):
        raise RegularityError("non-finite implied constant during calibration")
    c_max = float(c_cal.max())
    spread = float(c_cal.max() / c_cal.min())
    pass_rate = float(np.mean(c_val <= c_max))
    passed = spread < spread_limit and pass_rate >= level
    return CalibrationResult(which=which, c_calibration=c_cal,
                             c_validation=c_val, c_max=c_max, spread=spread,
                             pass_rate=pass_rate, passed=passed, level=level,
                             records=records, seeds=seeds)


# ---------------------------------------------------------------------------
# ready-made suite over random environments (drives the acceptance check)
# ---------------------------------------------------------------------------

def _grid_snapshots(field, speed, x0_vid, times, params):
    from .heatkernel import solve_static

    rows = np.empty((len(times), field.box.n_vertices))

    def cb(i, t, vec):
        rows[i] = vec / speed.theta

    solve_static(field, speed, x0_vid, times, params=params, collect=cb,
                 store=False)
    return rows


def inequality_suite(seed, d=2, n=16, dist=None, n_cal=20, n_val=20,
                     level=0.95, spread_limit=10.0, rate=0.5, params=None,
                     which=None):
    """Calibrate and validate every implemented inequality on random
    environments; returns {name: CalibrationResult}.

    Static checks run with conductance-sum speed on a periodic box just
    large enough for radius-n balls; the dynamic sup bound uses unit speed
    and a resampling environment.  Each inequality draws its own calibration
    and validation seeds from `seed`.
    """
    from .environment import constant_field, resampling_environment
    from .heatkernel import SolverParams, solve_dynamic
    from .lattice import build_box, distance_field

    if dist is None:
        from .environment import DistSpec
        dist = DistSpec("log-uniform", (0.5, 2.0))
    if params is None:
        params = SolverParams()
    side = 2 * (n + 1) + 1
    box = build_box(d, side, "periodic")
    x0 = box.center_vid
    ball_n = make_ball(box, x0, n)
    dist_x0 = distance_field(box, x0)
    bundle = exponents(d, 4.0, 4.0, 4.0)
    bundle_dyn = exponents(d, 8.0, 8.0, 8.0)
    t_end = float(n * n + 1)
    times_back = np.linspace(1.0, t_end, 33)
    times_fwd = np.linspace(0.0, float(n * n), 33)

    def env(env_seed):
        f = sample_iid(box, dist, env_seed)
        return f, make_speed(f, "csrw")

    def run_sobolev(env_seed):
        f, sp = env(env_seed)
        v = np.clip(1.0 - dist_x0 / float(n), 0.0, 1.0)
        return check_sobolev(f, sp, ball_n, v, q=bundle.q)

    def run_poincare(env_seed):
        f, sp = env(env_seed)
        u = box.coords[:, 0].astype(np.float64)
        return check_poincare(f, sp, ball_n, u, bundle.q, bundle.r, n)

    def run_poincare_subset(env_seed):
        f, sp = env(env_seed)
        u = box.coords[:, 0].astype(np.float64)
        sub = make_ball(box, x0, max(1, n // 4)).vids
        return check_poincare(f, sp, ball_n, u, bundle.q, bundle.r, n,
                              subset_vids=sub)

    def run_energy(env_seed):
        f, sp = env(env_seed)
        snaps = _grid_snapshots(f, sp, x0, times_back, params)
        eta = radial_cutoff(box, x0, n // 2, n)
        xi = time_ramp(times_back, times_back[0],
                       0.5 * (times_back[-1] - times_back[0]))
        return check_energy(f, sp, snaps, times_back, ball_n, eta, xi,
                            k=0.0, p=bundle.p)

    def run_maximal(env_seed):
        f, sp = env(env_seed)
        snaps = _grid_snapshots(f, sp, x0, times_back, params)
        return check_maximal(f, sp, snaps, times_back, x0, "backward", n,
                             1.0, 0.5, bundle, h=0.0, t0=t_end)

    def run_maximal_l1(env_seed):
        f, sp = env(env_seed)
        snaps = _grid_snapshots(f, sp, x0, times_fwd, params)
        return check_maximal(f, sp, snaps, times_fwd, x0, "interior-l1", n,
                             1.0, 0.5, bundle, eps=0.2)

    def run_maximal_dyn(env_seed):
        envd = resampling_environment(box, dist, rate, 0.0,
                                      float(n * n), env_seed)
        dyn_params = SolverParams(eps_trunc=params.eps_trunc, dt_dynamic=0.5)
        rows = np.empty((times_fwd.size, box.n_vertices))

        def cb(i, t, vec):
            rows[i] = vec

        solve_dynamic(envd, x0, 0.0, times_fwd, params=dyn_params,
                      collect=cb, store=False)
        oms = envd.omega_full_many(times_fwd)
        mu_snaps = oms[:, box.inc].sum(axis=2)
        nu_snaps = (1.0 / oms)[:, box.inc].sum(axis=2)
        carrier = constant_field(box)
        unit = make_speed(carrier, "vsrw")
        return check_maximal(carrier, unit, rows, times_fwd, x0, "dynamic",
                             n, 1.0, 0.5, bundle_dyn, t0=0.0, delta=0.5,
                             mu_snaps=mu_snaps, nu_snaps=nu_snaps)

    runners = {
        "sobolev": run_sobolev,
        "poincare": run_poincare,
        "poincare-subset": run_poincare_subset,
        "energy": run_energy,
        "maximal-backward": run_maximal,
        "maximal-interior-l1": run_maximal_l1,
        "maximal-dynamic": run_maximal_dyn,
    }
    if which is not None:
        if which not in runners:
            raise RegularityError(f"unknown inequality {which!r}")
        runners = {which: runners[which]}
    return {name: calibrate(name, fn, seed, n_cal=n_cal, n_val=n_val,
                            level=level, spread_limit=spread_limit)
            for name, fn in runners.items()}


# ---------------------------------------------------------------------------
# ergodic-average diagnostics
# ---------------------------------------------------------------------------

_BALL_FAMILY_2D = (((0.0, 0.0), 1.0), ((0.25, 0.0), 0.75), ((-0.2, 0.1), 0.5))


def _euclidean_ball_family(d):
    fam = []
    for center, radius in _BALL_FAMILY_2D:
        c = np.zeros(d)
        c[:2] = center[:2] if d >= 2 else center[:1]
        fam.append((c, radius))
    return fam


def _ball_volume(d, radius):
    return math.pi ** (d / 2.0) * radius ** d / math.gamma(d / 2.0 + 1.0)


def ergodic_ball_check(dist, d=2, ns=(8, 16, 32), n_seeds=50, seed=0):
    """Deviation of scaled ball averages of the conductance from its mean.

    For each scale n the deviation is the worst error, over a fixed family
    of Euclidean balls, of n^-d * sum over the scaled ball versus the ball
    volume times the distribution mean.  Returns per-scale medians over
    seeds and whether they decrease.
    """
    from .lattice import build_box

    ns = sorted(ns)
    reach = int(math.ceil(1.3 * max(ns))) + 1
    side = 2 * reach + 3
    box = build_box(d, side, "periodic")
    coords = box.coords.astype(np.float64)
    target_mean = dist.moment(1)
    family = _euclidean_ball_family(d)
    seeds = stream(seed, "ergodic-ball").integers(0, 2 ** 62, n_seeds)
    devs = np.empty((n_seeds, len(ns)))
    for i, s in enumerate(seeds):
        f = sample_iid(box, dist, int(s))
        fx = f.omega[:box.n_vertices]        # direction-0 edge at each site
        for j, n in enumerate(ns):
            worst = 0.0
            for center, radius in family:
                diff = coords - n * center
                inside = np.sum(diff * diff, axis=1) <= (n * radius) ** 2
                avg = float(np.sum(fx[inside])) / n ** d
                ref = _ball_volume(d, radius) * target_mean
                worst = max(worst, abs(avg - ref))
            devs[i, j] = worst
    medians = np.median(devs, axis=0)
    return {"ns": list(ns), "median_deviation": medians,
            "decreasing": bool(np.all(np.diff(medians) < 0)),
            "per_seed": devs}


def ergodic_spacetime_check(dist, rate, d=2, ns=(8, 16, 32), n_seeds=20,
                            seed=0, n_times=33):
    """Space-time version: deviation of the conductance averaged over a
    graph ball and the time window [0, n^2] of a resampling environment."""
    from .environment import resampling_environment
    from .lattice import build_box

    ns = sorted(ns)
    target_mean = dist.moment(1)
    seeds = stream(seed, "ergodic-spacetime").integers(0, 2 ** 62, n_seeds)
    devs = np.empty((n_seeds, len(ns)))
    for j, n in enumerate(ns):
        side = 2 * n + 3
        box = build_box(d, side, "periodic")
        ball_vids = make_ball(box, box.center_vid, n).vids
        horizon = float(n * n)
        ts = np.linspace(0.0, horizon, n_times)
        for i, s in enumerate(seeds):
            env = resampling_environment(box, dist, rate, 0.0, horizon,
                                         int(s))
            oms = env.omega_full_many(ts)
            site_avgs = oms[:, ball_vids].mean(axis=1)
            avg = float(np.trapezoid(site_avgs, ts)) / horizon
            devs[i, j] = abs(avg - target_mean)
    medians = np.median(devs, axis=0)
    return {"ns": list(ns), "median_deviation": medians,
            "decreasing": bool(np.all(np.diff(medians) < 0)),
            "per_seed": devs}
