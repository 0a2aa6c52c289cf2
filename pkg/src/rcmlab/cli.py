"""Experiment runner: JSON configs in, CSV tables and JSON manifests out.

Every experiment is a pure function of its validated config.  The config
(seed included) is hashed, the hash is stamped on every CSV row, and task
seeds are derived per (master seed, experiment, task path), so reruns --
at any parallelism -- reproduce the output files byte for byte.

Exit codes: 0 success, 2 config validation failure, 3 numerical guard trip.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__, glmodel, llt, regularity
from ._rng import stream
from .environment import (ConductanceField, DistSpec, EnvironmentError_,
                          constant_field, make_speed, resampling_environment,
                          sample_iid)
from .heatkernel import (KOverflowError, SolverError, SolverParams,
                         _poisson_depth, solve_static)
from .lattice import LatticeError, build_box
from .llt import LLTError, ScaleGuardError
from .regularity import RegularityError
from .walker import (DiffusiveScaleTooLarge, DominationViolated, WalkerError,
                     estimate_sigma_annealed, estimate_sigma_quenched,
                     simulate_static)

GUARD_ERRORS = (KOverflowError, ScaleGuardError, glmodel.StabilityError,
                DiffusiveScaleTooLarge, DominationViolated)
CONFIG_ERRORS = (LatticeError, EnvironmentError_, LLTError, RegularityError,
                 glmodel.GLError, WalkerError, SolverError, ValueError)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config schema machinery
# ---------------------------------------------------------------------------

_REQUIRED = object()


@dataclass(frozen=True)
class Field:
    cast: object
    default: object = _REQUIRED
    help: str = ""


def _int(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
        raise ConfigError("must be an integer")
    return int(v)


def _int_min(lo):
    def cast(v):
        n = _int(v)
        if n < lo:
            raise ConfigError(f"must be at least {lo}")
        return n
    return cast


def _dim(v):
    n = _int(v)
    if not 2 <= n <= 4:
        raise ConfigError("must be between 2 and 4")
    return n


def _odd_side(v):
    n = _int(v)
    if n < 3 or n % 2 == 0:
        raise ConfigError("must be an odd integer of at least 3")
    return n


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError("must be a number")
    return float(v)


def _pos_float(v):
    x = _float(v)
    if not x > 0:
        raise ConfigError("must be positive")
    return x


def _nonneg_float(v):
    x = _float(v)
    if x < 0:
        raise ConfigError("must be nonnegative")
    return x


def _choice(*options):
    def cast(v):
        if v not in options:
            raise ConfigError(f"must be one of {', '.join(options)}")
        return v
    return cast


def _bool(v):
    if not isinstance(v, bool):
        raise ConfigError("must be true or false")
    return v


def _law(v):
    """A sampling law as {"kind": ..., "params": [...]}; null means omega = 1."""
    if v is None:
        return None
    if not isinstance(v, dict) or set(v) != {"kind", "params"}:
        raise ConfigError('must be null or {"kind": ..., "params": [...]}')
    try:
        DistSpec(v["kind"], tuple(float(p) for p in v["params"]))
    except (EnvironmentError_, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return {"kind": v["kind"], "params": [float(p) for p in v["params"]]}


def _law_required(v):
    law = _law(v)
    if law is None:
        raise ConfigError("a sampling law is required here")
    return law


def _dist(law):
    return None if law is None else DistSpec(law["kind"], tuple(law["params"]))


def _scale_list(v):
    if not isinstance(v, list) or not v:
        raise ConfigError("must be a non-empty list of integers")
    ns = [_int_min(2)(x) for x in v]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigError("must be strictly increasing")
    return ns


def _float_list(v):
    if not isinstance(v, list) or not v:
        raise ConfigError("must be a non-empty list of numbers")
    return [_pos_float(x) for x in v]


def _window(v):
    if not isinstance(v, list) or len(v) != 2:
        raise ConfigError("must be a pair [t1, t2]")
    t1, t2 = _pos_float(v[0]), _pos_float(v[1])
    if not t1 < t2:
        raise ConfigError("needs t1 < t2")
    return [t1, t2]


def _offset(d):
    def cast(v):
        if not isinstance(v, list) or len(v) != d:
            raise ConfigError(f"must be a list of {d} integers")
        return [_int(x) for x in v]
    return cast


def _point3(v):
    if not isinstance(v, list) or len(v) != 3:
        raise ConfigError("must be a list of 3 numbers")
    return [_float(x) for x in v]


def _sigma2(v):
    if v is None or v == "exact-constant":
        return "exact-constant"
    if isinstance(v, list):
        n = len(v)
        root = int(round(math.sqrt(n)))
        if root * root != n:
            raise ConfigError("matrix must have d*d entries, row major")
        return [_float(x) for x in v]
    raise ConfigError('must be "exact-constant" or a flat d*d matrix')


def _potential(v):
    if not isinstance(v, dict) or "kind" not in v:
        raise ConfigError('must be {"kind": "quadratic"} or '
                          '{"kind": "anharmonic", "lam": ...}')
    kind = v["kind"]
    if kind == "quadratic":
        if set(v) != {"kind"}:
            raise ConfigError("quadratic takes no further keys")
        return {"kind": "quadratic"}
    if kind == "anharmonic":
        extra = set(v) - {"kind", "lam"}
        if extra:
            raise ConfigError(f"unknown keys {sorted(extra)}")
        lam = _nonneg_float(v.get("lam", 0.1))
        return {"kind": "anharmonic", "lam": lam}
    raise ConfigError('kind must be "quadratic" or "anharmonic"')


def _build_potential(spec):
    if spec["kind"] == "quadratic":
        return glmodel.quadratic_potential()
    return glmodel.anharmonic_potential(spec["lam"])


def _opt(cast):
    def wrapped(v):
        return None if v is None else cast(v)
    return wrapped


# ---------------------------------------------------------------------------
# result plumbing
# ---------------------------------------------------------------------------

def config_hash(experiment, cfg):
    payload = json.dumps({"experiment": experiment, "config": cfg},
                         sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows, chash):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(header) + ["config_hash"])
        for row in rows:
            w.writerow([_fmt(v) for v in row] + [chash])


def _file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _versions():
    import scipy
    try:
        import numba
        numba_version = numba.__version__
    except ImportError:
        numba_version = None
    from . import _kernels
    return {"rcmlab": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba_version,
            "compiled_kernels": bool(_kernels.USE_NUMBA)}


def _parallel(tasks, jobs):
    """Run thunks and return their results in submission order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn() for fn in tasks]
    results = [None] * len(tasks)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {pool.submit(fn): i for i, fn in enumerate(tasks)}
        for fut, i in futures.items():
            results[i] = fut.result()
    return results


def _coord_names(d, prefix="c"):
    return [f"{prefix}{i}" for i in range(d)]


_NAN = float("nan")


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _field_from_cfg(box, law, seed, tag):
    if law is None:
        return constant_field(box)
    return sample_iid(box, _dist(law), int(stream(seed, tag).integers(2**62)))


SCHEMA_ENV_SAMPLE = {
    "d": Field(_dim, help="lattice dimension"),
    "side": Field(_odd_side, help="odd box side"),
    "boundary": Field(_choice("periodic", "absorbing"), "periodic"),
    "law": Field(_law_required, help="edge weight law"),
    "seed": Field(_int_min(0), 0, "master seed"),
}


def run_env_sample(cfg, jobs):
    box = build_box(cfg["d"], cfg["side"], cfg["boundary"])
    field = sample_iid(box, _dist(cfg["law"]), cfg["seed"])
    rows = [(i, int(a), int(b), float(field.omega[i]))
            for i, (a, b) in enumerate(field.box.edges)]
    extra = {"n_vertices": box.n_vertices, "n_edges": box.n_edges,
             "law": cfg["law"], "seed": cfg["seed"]}
    return ["edge_id", "x", "y", "omega"], rows, extra


SCHEMA_WALK = {
    "d": Field(_dim),
    "side": Field(_odd_side),
    "law": Field(_law, None, "null for unit weights"),
    "speed": Field(_choice("vsrw", "csrw"), "vsrw"),
    "t_end": Field(_pos_float, help="horizon per path"),
    "n_paths": Field(_int_min(1), 4, "recorded paths"),
    "seed": Field(_int_min(0), 0),
}


def run_walk(cfg, jobs):
    d = cfg["d"]
    box = build_box(d, cfg["side"], "periodic")
    field = _field_from_cfg(box, cfg["law"], cfg["seed"], "walk-env")
    speed = make_speed(field, cfg["speed"])
    half = box.side // 2
    path_seeds = stream(cfg["seed"], "walk-paths").integers(0, 2**62,
                                                            cfg["n_paths"])

    def one(pid):
        def task():
            path = simulate_static(field, speed, box.center_vid,
                                   cfg["t_end"], int(path_seeds[pid]))
            coords = box.coords[path.vids]
            steps = np.diff(coords, axis=0)
            steps -= np.rint(steps / box.side).astype(np.int64) * box.side
            unwrapped = np.vstack([coords[:1],
                                   coords[0] + np.cumsum(steps, axis=0)])
            return [(pid, k, float(path.times[k]), *coords[k], *unwrapped[k])
                    for k in range(len(path.times))]
        return task

    chunks = _parallel([one(p) for p in range(cfg["n_paths"])], jobs)
    rows = [r for chunk in chunks for r in chunk]
    header = (["path_id", "event_index", "time"] + _coord_names(d, "x")
              + _coord_names(d, "u"))
    return header, rows, {"wrap_side": box.side, "half": half}


SCHEMA_HK_SOLVE = {
    "d": Field(_dim),
    "side": Field(_odd_side),
    "boundary": Field(_choice("periodic", "absorbing"), "periodic"),
    "law": Field(_law, None),
    "speed": Field(_choice("vsrw", "csrw"), "vsrw"),
    "times": Field(_float_list, help="output times, increasing"),
    "eps_trunc": Field(_pos_float, 1e-12, "series truncation"),
    "seed": Field(_int_min(0), 0),
}


def run_hk_solve(cfg, jobs):
    d = cfg["d"]
    box = build_box(d, cfg["side"], cfg["boundary"])
    field = _field_from_cfg(box, cfg["law"], cfg["seed"], "hk-env")
    speed = make_speed(field, cfg["speed"])
    times = sorted(cfg["times"])
    params = SolverParams(eps_trunc=cfg["eps_trunc"])
    sol = solve_static(field, speed, box.center_vid, times, params)
    rows = []
    for i, t in enumerate(times):
        kern = sol.kernel(i)
        for v in range(box.n_vertices):
            rows.append((float(t), *box.coords[v], float(sol.prob[i][v]),
                         float(kern[v])))
    lam = sol.meta["lambda"]
    gaps = np.diff([0.0] + list(times))
    depth = _poisson_depth(lam * float(gaps.max()), cfg["eps_trunc"])
    extra = {"uniformization_rate": lam, "poisson_depth_max": int(depth),
             "eps_trunc": cfg["eps_trunc"], "dt_dynamic": None,
             "final_mass_defect": sol.meta["final_mass_defect"]}
    header = ["t"] + _coord_names(d) + ["P", "p_theta"]
    return header, rows, extra


def _kernel_and_sigma(cfg):
    d = cfg["d"]
    if cfg["sigma2"] == "exact-constant":
        mat = llt.constant_env_sigma2(d, cfg["speed"])
    else:
        mat = np.asarray(cfg["sigma2"], dtype=float).reshape(d, d)
    return llt.GaussianKernel(mat), mat


_LLT_COMMON = {
    "d": Field(_dim),
    "n_list": Field(_scale_list, help="diffusive scales"),
    "speed": Field(_choice("vsrw", "csrw"), "vsrw"),
    "law": Field(_law, None),
    "K": Field(_pos_float, 1.0, "spatial window half width"),
    "window": Field(_window, [0.5, 1.0], "[t1, t2] in diffusive time"),
    "a": Field(_pos_float, 1.0, "limit density prefactor"),
    "sigma2": Field(_sigma2, "exact-constant"),
    "margin": Field(_pos_float, 6.0, "box margin in CLT widths"),
    "seed": Field(_int_min(0), 0),
}

SCHEMA_LLT_QUENCHED = dict(_LLT_COMMON,
                           n_times=Field(_int_min(2), 5, "times per window"))
SCHEMA_LLT_ANNEALED = dict(_LLT_COMMON,
                           n_times=Field(_int_min(2), 3),
                           n_envs=Field(_int_min(2), 8, "environments per scale"))
SCHEMA_LLT_DYNAMIC = {k: v for k, v in SCHEMA_LLT_ANNEALED.items()
                      if k not in ("speed", "a", "law")}
SCHEMA_LLT_DYNAMIC.update({
    "law": Field(_law_required, help="resampled edge law"),
    "rate": Field(_pos_float, 0.25, "per-edge resampling rate"),
})


def _llt_row(mode, n, cfg, err, stderr, m_envs, mat, a):
    t1, t2 = cfg["window"]
    return (mode, n, cfg["K"], t1, t2, float(err), stderr, m_envs,
            *[float(x) for x in mat.flat], a)


def _llt_header(d):
    names = [f"s{i}{j}" for i in range(d) for j in range(d)]
    return (["mode", "n", "K", "T1", "T2", "sup_error", "stderr", "m_envs"]
            + names + ["a"])


def run_llt_quenched(cfg, jobs):
    d = cfg["d"]
    kernel, mat = _kernel_and_sigma(cfg)
    t1, t2 = cfg["window"]
    ns = cfg["n_list"]
    env_seeds = stream(cfg["seed"], "quenched-llt-envs").integers(
        0, 2**62, len(ns))

    def one(j):
        def task():
            n = ns[j]
            side = llt.llt_side(n, cfg["K"], t2, cfg["margin"])
            box = build_box(d, side, "periodic")
            if cfg["law"] is None:
                field = constant_field(box)
            else:
                field = sample_iid(box, _dist(cfg["law"]), int(env_seeds[j]))
            speed = make_speed(field, cfg["speed"])
            return llt.llt_sup_error(field, speed, n, kernel, cfg["a"],
                                     cfg["K"], t1, t2, cfg["n_times"],
                                     cfg["margin"])
        return task

    errors = _parallel([one(j) for j in range(len(ns))], jobs)
    rows = [_llt_row("quenched", n, cfg, err, _NAN, 1, mat, cfg["a"])
            for n, err in zip(ns, errors)]
    return _llt_header(d), rows, {"errors_decreasing":
                                  bool(np.all(np.diff(errors) < 0))}


def run_llt_annealed(cfg, jobs):
    d = cfg["d"]
    kernel, mat = _kernel_and_sigma(cfg)
    t1, t2 = cfg["window"]
    ns, n_envs = cfg["n_list"], cfg["n_envs"]
    env_seeds = stream(cfg["seed"], "annealed-llt-envs").integers(
        0, 2**62, (len(ns), n_envs))

    def one(j, e):
        def task():
            n = ns[j]
            side = llt.llt_side(n, cfg["K"], t2, cfg["margin"])
            box = build_box(d, side, "periodic")
            field = sample_iid(box, _dist(cfg["law"]), int(env_seeds[j, e]))
            speed = make_speed(field, cfg["speed"])
            return llt.llt_sup_error(field, speed, n, kernel, cfg["a"],
                                     cfg["K"], t1, t2, cfg["n_times"],
                                     cfg["margin"])
        return task

    flat = _parallel([one(j, e) for j in range(len(ns))
                      for e in range(n_envs)], jobs)
    per_env = np.array(flat).reshape(len(ns), n_envs)
    means = per_env.mean(axis=1)
    errs = per_env.std(axis=1, ddof=1) / math.sqrt(n_envs)
    rows = [_llt_row("annealed-static", n, cfg, m, float(s), n_envs, mat,
                     cfg["a"])
            for n, m, s in zip(ns, means, errs)]
    return _llt_header(d), rows, {"errors_decreasing":
                                  bool(np.all(np.diff(means) < 0))}


def run_llt_dynamic(cfg, jobs):
    d = cfg["d"]
    cfg = dict(cfg, speed="vsrw")
    kernel, mat = _kernel_and_sigma(cfg)
    t1, t2 = cfg["window"]
    ns, n_envs = cfg["n_list"], cfg["n_envs"]
    env_seeds = stream(cfg["seed"], "annealed-dyn-envs").integers(
        0, 2**62, (len(ns), n_envs))

    def one(j, e):
        def task():
            n = ns[j]
            side = llt.llt_side(n, cfg["K"], t2, cfg["margin"])
            box = build_box(d, side, "periodic")
            horizon = n * n * t2 * (1.0 + 1e-9) + 1e-9
            env = resampling_environment(box, _dist(cfg["law"]), cfg["rate"],
                                         0.0, horizon, int(env_seeds[j, e]))
            return llt.llt_sup_error_dynamic(env, n, kernel, cfg["K"], t1, t2,
                                             cfg["n_times"], cfg["margin"])
        return task

    flat = _parallel([one(j, e) for j in range(len(ns))
                      for e in range(n_envs)], jobs)
    per_env = np.array(flat).reshape(len(ns), n_envs)
    means = per_env.mean(axis=1)
    errs = per_env.std(axis=1, ddof=1) / math.sqrt(n_envs)
    rows = [_llt_row("annealed-dynamic", n, cfg, m, float(s), n_envs, mat, 1.0)
            for n, m, s in zip(ns, means, errs)]
    return _llt_header(d), rows, {"errors_decreasing":
                                  bool(np.all(np.diff(means) < 0)),
                                  "rate": cfg["rate"]}


SCHEMA_SIGMA = {
    "d": Field(_dim),
    "side": Field(_odd_side),
    "law": Field(_law, None),
    "speed": Field(_choice("vsrw", "csrw"), "vsrw"),
    "estimator": Field(_choice("quenched", "annealed"), "quenched"),
    "t": Field(_pos_float, 16.0, "path horizon"),
    "n_paths": Field(_int_min(16), 20000, "paths (per environment)"),
    "n_envs": Field(_int_min(2), 8, "annealed only"),
    "seed": Field(_int_min(0), 0),
}


def run_sigma(cfg, jobs):
    d = cfg["d"]
    box = build_box(d, cfg["side"], "periodic")
    if cfg["estimator"] == "quenched":
        field = _field_from_cfg(box, cfg["law"], cfg["seed"], "sigma-env")
        speed = make_speed(field, cfg["speed"])
        est = estimate_sigma_quenched(field, speed, cfg["t"], cfg["n_paths"],
                                      cfg["seed"])
    else:
        law = cfg["law"]
        if law is None:
            law = {"kind": "constant", "params": [1.0]}
        est = estimate_sigma_annealed(box, _dist(law), cfg["speed"], cfg["t"],
                                      cfg["n_envs"], cfg["n_paths"],
                                      cfg["seed"])
    target = (llt.constant_env_sigma2(d, cfg["speed"])
              if cfg["law"] is None else np.full((d, d), _NAN))
    rows = [(cfg["estimator"], cfg["speed"], cfg["n_paths"], cfg["t"], i, j,
             float(est.matrix[i, j]), float(est.stderr[i, j]),
             float(target[i, j]))
            for i in range(d) for j in range(d)]
    header = ["estimator", "speed", "n_paths", "t", "i", "j", "value",
              "stderr", "target"]
    return header, rows, {"drift": [float(x) for x in est.drift],
                          "kind": est.kind}


_INEQUALITIES = ("sobolev", "poincare", "poincare-subset", "energy",
                 "maximal-backward", "maximal-interior-l1", "maximal-dynamic")

SCHEMA_REG_CHECK = {
    "d": Field(_dim, 2),
    "n": Field(_int_min(4), 16, "ball radius"),
    "law": Field(_law, None, "null for log-uniform(0.5, 2)"),
    "n_cal": Field(_int_min(2), 20),
    "n_val": Field(_int_min(2), 20),
    "level": Field(_pos_float, 0.95),
    "spread_limit": Field(_pos_float, 10.0),
    "rate": Field(_pos_float, 0.5, "dynamic resampling rate"),
    "inequalities": Field(_opt(lambda v: _ineq_list(v)), None, "null for all"),
    "seed": Field(_int_min(0), 0),
}


def _ineq_list(v):
    if not isinstance(v, list) or not v:
        raise ConfigError("must be a non-empty list of inequality names")
    for name in v:
        if name not in _INEQUALITIES:
            raise ConfigError(f"unknown inequality {name!r}")
    return list(v)


def run_reg_check(cfg, jobs):
    d, n = cfg["d"], cfg["n"]
    names = cfg["inequalities"] or list(_INEQUALITIES)
    dist = _dist(cfg["law"])

    def one(name):
        def task():
            res = regularity.inequality_suite(
                cfg["seed"], d=d, n=n, dist=dist, n_cal=cfg["n_cal"],
                n_val=cfg["n_val"], level=cfg["level"],
                spread_limit=cfg["spread_limit"], rate=cfg["rate"],
                which=name)[name]
            return name, res
        return task

    results = _parallel([one(name) for name in names], jobs)
    rows = []
    passed_all = True
    for name, res in results:
        passed_all = passed_all and res.passed
        pqr = (8.0, 8.0, 8.0) if name == "maximal-dynamic" else (4.0, 4.0, 4.0)
        for i, rep in enumerate(res.records):
            phase = "calibration" if i < cfg["n_cal"] else "validation"
            factors = getattr(rep, "factors", {})
            rows.append((name, n, int(res.seeds[i]), phase,
                         float(rep.lhs), float(rep.rhs), float(rep.c_hat),
                         *[float(factors.get(f"A{k}", _NAN))
                           for k in range(1, 6)],
                         *pqr, float(res.c_max), float(res.pass_rate),
                         res.passed))
    header = (["inequality", "n", "seed", "phase", "lhs", "rhs", "c_hat"]
              + [f"A{k}" for k in range(1, 6)]
              + ["p", "q", "r", "c_max", "pass_rate", "passed"])
    return header, rows, {"all_passed": passed_all,
                          "inequalities": list(names)}


SCHEMA_DIAG_BOUNDS = {
    "d": Field(_dim, 2),
    "side": Field(_odd_side),
    "law": Field(_law, None),
    "speed": Field(_choice("vsrw", "csrw"), "vsrw"),
    "ts": Field(_float_list, help="profile times, increasing"),
    "near_t": Field(_pos_float, 16.0, "near-diagonal window time"),
    "n_envs": Field(_int_min(1), 10),
    "include_dynamic": Field(_bool, False),
    "rate": Field(_pos_float, 0.5, "dynamic resampling rate"),
    "seed": Field(_int_min(0), 0),
}


def run_diag_bounds(cfg, jobs):
    d = cfg["d"]
    ts = sorted(cfg["ts"])
    box = build_box(d, cfg["side"], "periodic")
    env_seeds = stream(cfg["seed"], "diag-envs").integers(
        0, 2**62, (cfg["n_envs"], 2))

    def static_task(e):
        def task():
            if cfg["law"] is None:
                field = constant_field(box)
            else:
                field = sample_iid(box, _dist(cfg["law"]),
                                   int(env_seeds[e, 0]))
            speed = make_speed(field, cfg["speed"])
            prof = llt.diagonal_profile(field, speed, ts)
            near = llt.near_diagonal_minimum(field, speed, cfg["near_t"])
            return ("static", e, prof, near)
        return task

    def dynamic_task(e):
        def task():
            law = cfg["law"] or {"kind": "constant", "params": [1.0]}
            env = resampling_environment(box, _dist(law), cfg["rate"], 0.0,
                                         ts[-1] * (1 + 1e-9),
                                         int(env_seeds[e, 1]))
            prof = llt.dynamic_diagonal_profile(env, ts)
            return ("dynamic", e, prof, _NAN)
        return task

    tasks = [static_task(e) for e in range(cfg["n_envs"])]
    if cfg["include_dynamic"]:
        tasks += [dynamic_task(e) for e in range(cfg["n_envs"])]
    results = _parallel(tasks, jobs)
    rows = []
    slopes = {"static": [], "dynamic": []}
    for mode, e, prof, near in results:
        slopes[mode].append(prof.slope)
        for t, val in zip(prof.ts, prof.values):
            rows.append((e, mode, float(t), float(val), float(prof.slope),
                         near))
    header = ["env_id", "mode", "t", "value", "fitted_exponent",
              "near_constant"]
    extra = {"mean_static_exponent": float(np.mean(slopes["static"])),
             "target_exponent": -d / 2.0}
    if slopes["dynamic"]:
        extra["mean_dynamic_exponent"] = float(np.mean(slopes["dynamic"]))
    return header, rows, extra


SCHEMA_OSC = {
    "d": Field(_dim, 2),
    "side": Field(_odd_side),
    "law": Field(_law_required),
    "speed": Field(_choice("vsrw", "csrw"), "csrw"),
    "n": Field(_int_min(4), 32, "cylinder radius"),
    "t0": Field(_pos_float, help="cylinder anchor time"),
    "n_envs": Field(_int_min(1), 10),
    "anchors_per_env": Field(_int_min(1), 4),
    "shrink": Field(_int_min(2), 4),
    "seed": Field(_int_min(0), 0),
}


def run_osc(cfg, jobs):
    d = cfg["d"]
    survey = llt.oscillation_survey(d, cfg["side"], _dist(cfg["law"]),
                                    cfg["speed"], cfg["n"], cfg["t0"],
                                    cfg["n_envs"], cfg["anchors_per_env"],
                                    cfg["seed"], cfg["shrink"])
    box = build_box(d, cfg["side"], "periodic")
    rho = float(survey["hoelder_exponent"])
    rows = []
    for (env_id, anchor_vid), gamma in zip(survey["draws"],
                                           survey["gammas"]):
        rows.append((env_id, anchor_vid, *box.coords[anchor_vid],
                     float(gamma), rho))
    header = (["env_id", "anchor_vid"] + _coord_names(d, "a")
              + ["gamma_hat", "rho_hat"])
    extra = {"share_below_one": survey["share_below_one"],
             "hoelder_exponent": rho, "n_draws": survey["n_draws"]}
    return header, rows, extra


SCHEMA_GL_SIM = {
    "d": Field(_dim, 3),
    "side": Field(_odd_side, 9),
    "potential": Field(_potential, {"kind": "quadratic"}),
    "mode": Field(_choice("exact-gaussian", "langevin-burnin"),
                  "exact-gaussian"),
    "count": Field(_int_min(1), 4, "snapshots"),
    "dt": Field(_opt(_pos_float), None, "step override"),
    "burn_in": Field(_opt(_pos_float), None),
    "thin": Field(_opt(_pos_float), None),
    "seed": Field(_int_min(0), 0),
}


def run_gl_sim(cfg, jobs):
    box = build_box(cfg["d"], cfg["side"], "absorbing")
    potential = _build_potential(cfg["potential"])
    params = {"count": cfg["count"]}
    for key in ("dt", "burn_in", "thin"):
        if cfg[key] is not None:
            params[key] = cfg[key]
    ensemble = glmodel.sample_gibbs(box, potential, cfg["mode"], params,
                                    seed=cfg["seed"])
    rows = [(s, *box.coords[v], float(f.phi[v]))
            for s, f in enumerate(ensemble)
            for v in range(box.n_vertices)]
    header = ["sample_id"] + _coord_names(cfg["d"]) + ["phi"]
    energy = [glmodel.hamiltonian(f, potential) for f in ensemble]
    return header, rows, {"mean_energy": float(np.mean(energy)),
                          "mode": cfg["mode"]}


SCHEMA_GL_COV = {
    "potential": Field(_potential, {"kind": "anharmonic", "lam": 0.1}),
    "side": Field(_odd_side, 7),
    "count": Field(_int_min(8), 192, "trajectories (anharmonic)"),
    "horizon": Field(_pos_float, 24.0),
    "seed": Field(_int_min(0), 0),
}


def run_gl_cov(cfg, jobs):
    side = cfg["side"]
    header = (["n", "t"] + _coord_names(3, "x")
              + ["cov_mc", "stderr", "cov_hs", "tail_bound", "target"])
    if cfg["potential"]["kind"] == "anharmonic":
        report = glmodel.anharmonic_covariance_report(
            seed=cfg["seed"], side=side, lam=cfg["potential"]["lam"],
            count=cfg["count"], horizon=cfg["horizon"])
        rows = [(side, c["t"], *c["offset"], c["direct"], c["direct_stderr"],
                 c["kernel"], c["tail_bound"], _NAN)
                for c in report["comparisons"]]
        extra = {"decay": {"ts": list(report["decay"]["ts"]),
                           "fitted_exponent":
                           report["decay"]["fitted_exponent"]},
                 "brascamp_lieb_passed": report["brascamp_lieb"]["passed"],
                 "induced_min_weight": report["induced"]["min_weight"],
                 "moment_power": report["induced"]["moment_power"],
                 "moment_estimate": report["induced"]["moment_estimate"]}
        return header, rows, extra
    ident = glmodel.hs_identity_check(side=side)
    sampled = glmodel.gaussian_langevin_check(seed=cfg["seed"], side=side)
    rows = [(side, ident["t"], *r["offset"], _NAN, _NAN,
             r["integral"] + r["tail"], r["tail"], r["eigen"])
            for r in ident["rows"]]
    rows += [(side, 0.0, *r["offset"], r["value"], r["stderr"], _NAN, _NAN,
              r["oracle"])
             for r in sampled["rows"]]
    extra = {"identity_max_error": max(r["abs_error"]
                                       for r in ident["rows"]),
             "sampled_frames": sampled["samples"]}
    return header, rows, extra


SCHEMA_GL_SCALING = {
    "t": Field(_pos_float, 1.0),
    "x": Field(_point3, [0.0, 0.0, 0.0], "scaled displacement"),
    "n_list": Field(_scale_list, [2, 4, 8]),
    "seed": Field(_int_min(0), 0, "unused; kept for uniform hashing"),
}


def run_gl_scaling(cfg, jobs):
    curve = glmodel.cov_scaling_curve(glmodel.quadratic_potential(),
                                      x=tuple(cfg["x"]), t=cfg["t"],
                                      n_list=tuple(cfg["n_list"]))
    rows = []
    for i, n in enumerate(curve.ns):
        scaled = float(curve.scaled_values[i])
        rows.append((n, cfg["t"], *cfg["x"], _NAN, _NAN, scaled,
                     scaled * float(curve.tail_shares[i]),
                     float(curve.target)))
    header = (["n", "t"] + _coord_names(3, "x")
              + ["cov_mc", "stderr", "cov_hs", "tail_bound", "target"])
    extra = {"sides": list(curve.sides),
             "errors": [float(e) for e in curve.errors],
             "moment_power": curve.moment_power,
             "moment_estimate": curve.moment_estimate}
    return header, rows, extra


SCHEMA_GL_GFF = {
    "n_list": Field(_scale_list, [2, 4, 8]),
    "lambdas": Field(_opt(lambda v: [_float(x) for x in v]), None,
                     "null for an automatic symmetric grid"),
    "n_samples": Field(_int_min(1000), 200000),
    "seed": Field(_int_min(0), 0),
}


def run_gl_gff(cfg, jobs):
    lambdas = None if cfg["lambdas"] is None else np.array(cfg["lambdas"])
    record = glmodel.gff_test(glmodel.quadratic_potential(), lambdas=lambdas,
                              n_list=tuple(cfg["n_list"]), seed=cfg["seed"],
                              n_samples=cfg["n_samples"])
    rows = []
    for n in record.ns:
        for k, lam in enumerate(record.lambdas):
            rows.append((n, float(lam), float(record.estimates[n][k]),
                         float(record.target_curve[k]),
                         float(record.stderr_log[n][k]),
                         float(lam) in record.flagged[n],
                         float(record.r_squared[n]),
                         float(record.pairing_variance[n]),
                         float(record.target_variance)))
    header = ["n", "lam", "laplace_estimate", "laplace_target", "stderr_log",
              "flagged", "r_squared", "pairing_variance", "limit_variance"]
    extra = {"profile": record.profile_label,
             "sigma_sq_source": record.sigma_sq_source,
             "target_variance": float(record.target_variance)}
    return header, rows, extra


EXPERIMENTS = {
    "env-sample": (SCHEMA_ENV_SAMPLE, run_env_sample,
                   "draw an edge weight field and dump its edge list"),
    "walk": (SCHEMA_WALK, run_walk,
             "record full jump paths of the random walk"),
    "hk-solve": (SCHEMA_HK_SOLVE, run_hk_solve,
                 "transition law on the whole box at fixed times"),
    "llt-quenched": (SCHEMA_LLT_QUENCHED, run_llt_quenched,
                     "sup distance to the limit density, one environment "
                     "per scale"),
    "llt-annealed": (SCHEMA_LLT_ANNEALED, run_llt_annealed,
                     "mean sup distance over random environments"),
    "llt-dynamic": (SCHEMA_LLT_DYNAMIC, run_llt_dynamic,
                    "mean sup distance over resampling environments"),
    "sigma": (SCHEMA_SIGMA, run_sigma,
              "diffusion matrix from sampled displacements"),
    "reg-check": (SCHEMA_REG_CHECK, run_reg_check,
                  "calibrate and validate the functional inequalities"),
    "gl-sim": (SCHEMA_GL_SIM, run_gl_sim,
               "equilibrium interface snapshots"),
    "gl-cov": (SCHEMA_GL_COV, run_gl_cov,
               "interface covariances, sampled versus kernel integral"),
    "gl-scaling": (SCHEMA_GL_SCALING, run_gl_scaling,
                   "rescaled covariance against the continuum limit"),
    "gl-gff": (SCHEMA_GL_GFF, run_gl_gff,
               "Laplace functional of the rescaled height pairing"),
    "diag-bounds": (SCHEMA_DIAG_BOUNDS, run_diag_bounds,
                    "on and near diagonal kernel decay profiles"),
    "osc": (SCHEMA_OSC, run_osc,
            "oscillation decay over shrinking space-time cylinders"),
}


# ---------------------------------------------------------------------------
# front door
# ---------------------------------------------------------------------------

def validate_config(experiment, raw):
    """Apply the experiment schema; returns (config, error list)."""
    schema = EXPERIMENTS[experiment][0]
    if not isinstance(raw, dict):
        return {}, ["config: must be a JSON object"]
    errors = [f"{key}: unknown field" for key in sorted(set(raw) - set(schema))]
    cfg = {}
    for name, fld in schema.items():
        if name in raw:
            try:
                cfg[name] = fld.cast(raw[name])
            except ConfigError as exc:
                errors.append(f"{name}: {exc}")
        elif fld.default is _REQUIRED:
            errors.append(f"{name}: required field is missing")
        else:
            cfg[name] = fld.default
    return cfg, errors


def describe(experiment):
    """Parameter schema of one experiment as a plain dict."""
    schema, _, blurb = EXPERIMENTS[experiment]
    fields = {}
    for name, fld in schema.items():
        entry = {"required": fld.default is _REQUIRED}
        if fld.default is not _REQUIRED:
            entry["default"] = fld.default
        if fld.help:
            entry["help"] = fld.help
        fields[name] = entry
    return {"experiment": experiment, "summary": blurb, "fields": fields}


def run_experiment(experiment, cfg, out_dir, jobs):
    """Execute one validated config; returns the manifest dict."""
    chash = config_hash(experiment, cfg)
    _, runner, _ = EXPERIMENTS[experiment]
    header, rows, extra = runner(cfg, jobs)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{experiment}.csv")
    write_csv(csv_path, header, rows, chash)
    manifest = {
        "experiment": experiment,
        "config": cfg,
        "config_hash": chash,
        "columns": list(header) + ["config_hash"],
        "rows": len(rows),
        "files": {f"{experiment}.csv": _file_sha256(csv_path)},
        "versions": _versions(),
        "seed_layout": "per-task generators spawned from (seed, experiment, "
                       "task index); worker count never enters",
        "results": extra,
    }
    with open(os.path.join(out_dir, f"{experiment}.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="rcmlab",
        description="Reproducible random-walk and interface experiments.")
    parser.add_argument("experiment", choices=sorted(EXPERIMENTS))
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker threads (does not affect results)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config master seed")
    parser.add_argument("--describe", action="store_true",
                        help="print the parameter schema and exit")
    parser.add_argument("--validate-only", action="store_true",
                        help="check the config without running")
    args = parser.parse_args(argv)

    if args.describe:
        print(json.dumps(describe(args.experiment), indent=2))
        return 0

    if args.config is None:
        print("error: --config is required to run", file=sys.stderr)
        return 2
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2

    if args.seed is not None:
        raw = dict(raw, seed=args.seed)
    cfg, errors = validate_config(args.experiment, raw)
    if errors:
        for err in errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    if args.validate_only:
        print(f"ok {config_hash(args.experiment, cfg)}")
        return 0

    if args.jobs < 1:
        print("config error: jobs: must be at least 1", file=sys.stderr)
        return 2
    try:
        manifest = run_experiment(args.experiment, cfg, args.out, args.jobs)
    except GUARD_ERRORS as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return 3
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.experiment}.csv ({manifest['rows']} rows) in "
          f"{args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
