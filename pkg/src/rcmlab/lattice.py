"""Finite lattice boxes, l1 balls, and space-time cylinders.

Boxes are centered: an odd ``side`` puts vertex coordinates in
``[-(side-1)/2, (side-1)/2]^d`` with the origin at the center vertex, which is
what every diffusive-scaling experiment wants.  Periodic boxes are tori;
absorbing boxes keep their edges into the (pinned) outside closure so that
exit rates and Dirichlet forms see the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class LatticeError(ValueError):
    pass


class DimensionError(LatticeError):
    pass


class EvenSideError(LatticeError):
    pass


class SideTooSmallError(LatticeError):
    pass


_BOUNDARIES = ("periodic", "absorbing")


@dataclass(frozen=True)
class LatticeBox:
    """A centered finite box of Z^d with its adjacency and edge tables.

    Attributes
    ----------
    nbr : (N, 2d) int32
        Neighbor vertex ids; directions ordered +e_0..+e_{d-1}, -e_0..-e_{d-1}.
        Entry -1 marks a neighbor outside an absorbing box (pinned closure).
    inc : (N, 2d) int64
        Incident edge ids in the same direction order.  On an absorbing box a
        missing direction holds the id of the half-edge into the closure.
    edges : (E, 2) int32
        Edge endpoints; second endpoint -1 for closure half-edges.
    """

    d: int
    side: int
    boundary: str
    coords: np.ndarray = field(repr=False)
    nbr: np.ndarray = field(repr=False)
    inc: np.ndarray = field(repr=False)
    edges: np.ndarray = field(repr=False)
    dirs: np.ndarray = field(repr=False)
    n_internal_edges: int

    @property
    def n_vertices(self) -> int:
        return self.side**self.d

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def half(self) -> int:
        return (self.side - 1) // 2

    @property
    def center_vid(self) -> int:
        return self.vid_of(np.zeros(self.d, dtype=np.int64))

    def vid_of(self, coord) -> int:
        c = np.asarray(coord, dtype=np.int64)
        if c.shape != (self.d,):
            raise LatticeError(f"coordinate must have shape ({self.d},)")
        h = self.half
        if np.any(np.abs(c) > h):
            if self.boundary == "periodic":
                c = (c + h) % self.side - h
            else:
                raise LatticeError(f"coordinate {c.tolist()} outside the box")
        shifted = c + h
        vid = 0
        for i in range(self.d):
            vid = vid * self.side + int(shifted[i])
        return vid

    def boundary_vertices(self) -> np.ndarray:
        """Vertices with at least one neighbor in the closure (absorbing only)."""
        return np.flatnonzero((self.nbr < 0).any(axis=1))

    def wrap_displacement(self, delta: np.ndarray) -> np.ndarray:
        """Componentwise shortest representative of a torus displacement."""
        h = self.half
        return (delta + h) % self.side - h


def build_box(d: int, side: int, boundary: str = "periodic") -> LatticeBox:
    """Construct a centered box with adjacency, incidence, and edge tables."""
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise DimensionError(f"dimension must be an integer >= 2, got {d!r}")
    if not isinstance(side, (int, np.integer)) or side < 3:
        raise SideTooSmallError(f"side must be an integer >= 3, got {side!r}")
    if side % 2 == 0:
        raise EvenSideError(f"side must be odd so the box is centered, got {side}")
    if boundary not in _BOUNDARIES:
        raise LatticeError(f"boundary must be one of {_BOUNDARIES}, got {boundary!r}")

    d = int(d)
    side = int(side)
    n = side**d
    h = (side - 1) // 2

    grid = np.indices((side,) * d).reshape(d, n).T.astype(np.int32)
    coords = grid - h

    dirs = np.zeros((2 * d, d), dtype=np.int64)
    for k in range(d):
        dirs[k, k] = 1
        dirs[d + k, k] = -1

    strides = np.array([side ** (d - 1 - i) for i in range(d)], dtype=np.int64)

    nbr = np.empty((n, 2 * d), dtype=np.int32)
    for k in range(2 * d):
        moved = grid.astype(np.int64) + dirs[k]
        if boundary == "periodic":
            moved %= side
            nbr[:, k] = moved @ strides
        else:
            inside = ((moved >= 0) & (moved < side)).all(axis=1)
            vids = (moved % side) @ strides
            nbr[:, k] = np.where(inside, vids, -1).astype(np.int32)

    inc = np.empty((n, 2 * d), dtype=np.int64)
    if boundary == "periodic":
        # direction-major ids: edge (v -> v + e_k) has id k*n + v
        base = np.arange(n, dtype=np.int64)
        for k in range(d):
            inc[:, k] = k * n + base
            inc[:, d + k] = k * n + nbr[:, d + k].astype(np.int64)
        edges = np.empty((d * n, 2), dtype=np.int32)
        for k in range(d):
            edges[k * n : (k + 1) * n, 0] = base
            edges[k * n : (k + 1) * n, 1] = nbr[:, k]
        n_internal = d * n
    else:
        # internal edges first (direction-major over +e_k), then closure
        # half-edges (direction-major over all 2d directions)
        plus_ids = np.full((d, n), -1, dtype=np.int64)
        eid = 0
        edge_rows = []
        for k in range(d):
            present = np.flatnonzero(nbr[:, k] >= 0)
            plus_ids[k, present] = eid + np.arange(present.size)
            rows = np.empty((present.size, 2), dtype=np.int32)
            rows[:, 0] = present
            rows[:, 1] = nbr[present, k]
            edge_rows.append(rows)
            eid += present.size
        n_internal = eid
        for k in range(2 * d):
            missing = np.flatnonzero(nbr[:, k] < 0)
            rows = np.empty((missing.size, 2), dtype=np.int32)
            rows[:, 0] = missing
            rows[:, 1] = -1
            edge_rows.append(rows)
            inc[missing, k] = eid + np.arange(missing.size)
            eid += missing.size
        edges = np.concatenate(edge_rows, axis=0)
        for k in range(d):
            present = np.flatnonzero(nbr[:, k] >= 0)
            inc[present, k] = plus_ids[k, present]
            back = np.flatnonzero(nbr[:, d + k] >= 0)
            inc[back, d + k] = plus_ids[k, nbr[back, d + k].astype(np.int64)]

    return LatticeBox(
        d=d,
        side=side,
        boundary=boundary,
        coords=coords,
        nbr=nbr,
        inc=inc,
        edges=edges,
        dirs=dirs,
        n_internal_edges=n_internal,
    )


def distance_field(box: LatticeBox, center_vid: int) -> np.ndarray:
    """Graph (l1) distance from ``center_vid`` to every vertex."""
    delta = np.abs(box.coords.astype(np.int64) - box.coords[center_vid])
    if box.boundary == "periodic":
        delta = np.minimum(delta, box.side - delta)
    return delta.sum(axis=1)


def graph_distance(box: LatticeBox, a_vid: int, b_vid: int) -> int:
    delta = np.abs(box.coords[a_vid].astype(np.int64) - box.coords[b_vid])
    if box.boundary == "periodic":
        delta = np.minimum(delta, box.side - delta)
    return int(delta.sum())


@dataclass(frozen=True)
class Ball:
    """An l1 ball: member vids with their distances to the center."""

    box: LatticeBox = field(repr=False)
    center_vid: int
    radius: int
    vids: np.ndarray = field(repr=False)
    dists: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.vids.size

    def inner_boundary(self) -> np.ndarray:
        """Members at distance exactly r (they have neighbors outside)."""
        return self.vids[self.dists == self.radius]

    def interior_mask(self) -> np.ndarray:
        return self.dists < self.radius


def ball(box: LatticeBox, center_vid: int, radius: int) -> Ball:
    if radius < 1:
        raise LatticeError(f"ball radius must be >= 1, got {radius}")
    if radius > box.half and box.boundary == "periodic":
        raise LatticeError(
            f"ball radius {radius} exceeds half-side {box.half}; it would self-wrap"
        )
    dist = distance_field(box, center_vid)
    vids = np.flatnonzero(dist <= radius)
    return Ball(box=box, center_vid=int(center_vid), radius=int(radius),
                vids=vids, dists=dist[vids])


_CYLINDER_KINDS = ("backward", "interior", "forward")


@dataclass(frozen=True)
class SpaceTimeCylinder:
    """A time interval crossed with an l1 ball, in one of three conventions.

    backward : [t0 - tau*n^2, t0] x B(x0, sigma*n)   (maximal-value windows)
    interior : [(1-sigma)*eps*n^2, n^2 - (1-sigma)*eps*n^2] x B(x0, sigma*n)
    forward  : [t0, t0 + sigma*n^2] x B(x0, sigma*n) (time-dependent windows)
    """

    kind: str
    t_lo: float
    t_hi: float
    ball: Ball
    n: int
    sigma: float
    tau: float | None = None
    eps: float | None = None

    @property
    def t_len(self) -> float:
        return self.t_hi - self.t_lo


def make_cylinder(box: LatticeBox, kind: str, x0_vid: int, n: int, sigma: float,
                  t0: float | None = None, tau: float | None = None,
                  eps: float | None = None) -> SpaceTimeCylinder:
    if kind not in _CYLINDER_KINDS:
        raise LatticeError(f"cylinder kind must be one of {_CYLINDER_KINDS}")
    if not (0.0 < sigma <= 1.0):
        raise LatticeError(f"sigma must lie in (0, 1], got {sigma}")
    radius = int(np.floor(sigma * n + 1e-12))
    b = ball(box, x0_vid, radius)
    nn = float(n) * float(n)
    if kind == "backward":
        if t0 is None:
            raise LatticeError("backward cylinders need t0")
        tau_eff = 1.0 if tau is None else float(tau)
        if tau_eff <= 0:
            raise LatticeError("tau must be positive")
        t_lo, t_hi = t0 - tau_eff * nn, float(t0)
    elif kind == "interior":
        if eps is None or not (0.0 < eps < 0.25):
            raise LatticeError("interior cylinders need eps in (0, 1/4)")
        pad = (1.0 - sigma) * eps * nn
        t_lo, t_hi = pad, nn - pad
        tau_eff = tau
    else:
        if t0 is None:
            raise LatticeError("forward cylinders need t0")
        t_lo, t_hi = float(t0), t0 + sigma * nn
        tau_eff = tau
    if t_hi <= t_lo:
        raise LatticeError("empty time interval")
    return SpaceTimeCylinder(kind=kind, t_lo=t_lo, t_hi=t_hi, ball=b, n=int(n),
                             sigma=float(sigma), tau=tau_eff, eps=eps)
