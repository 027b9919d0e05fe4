"""Masked uniform grids over arbitrary open sets.

An open set is discretized by sampling a membership predicate on a uniform
lattice inside a bounding box.  Nodes strictly inside the box where the
predicate holds form the active node set; everything else is exterior.  The
same structure also carries the increasing subdomain sequence used by the
truncated solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import EmptyDomainError, PreconditionError

__all__ = ["DomainSpec", "GridDomain", "build_domain", "with_closure", "exhaustion", "node_mask"]

_TOL = 1e-9


@dataclass(frozen=True)
class DomainSpec:
    """Geometry description: a named primitive or an indicator expression.

    ``kind`` is one of ``box``, ``interval``, ``disk``, ``annulus``,
    ``lshape``, ``union_boxes``, ``indicator``.  The open set is the points
    of the bounding box where :meth:`membership` is true.
    """

    kind: str
    indicator: ex.Expr | None = None
    params: dict = field(default_factory=dict)

    @classmethod
    def box(cls) -> "DomainSpec":
        return cls("box")

    interval = box  # 1-d alias

    @classmethod
    def from_indicator(cls, text: str, dim: int) -> "DomainSpec":
        e = ex.parse_expr(text, dim)
        bad = ex.free_vars(e) - {f"x{i}" for i in range(1, dim + 1)}
        if bad:
            raise PreconditionError(f"indicator may only use x-variables, found {sorted(bad)}")
        return cls("indicator", indicator=e)

    @classmethod
    def disk(cls, center, radius: float) -> "DomainSpec":
        return cls("disk", params={"center": np.asarray(center, float), "radius": float(radius)})

    @classmethod
    def annulus(cls, center, r_inner: float, r_outer: float) -> "DomainSpec":
        return cls("annulus", params={"center": np.asarray(center, float),
                                      "r_inner": float(r_inner), "r_outer": float(r_outer)})

    @classmethod
    def lshape(cls) -> "DomainSpec":
        """Bounding box minus its closed upper-right quadrant."""
        return cls("lshape")

    @classmethod
    def union_boxes(cls, boxes) -> "DomainSpec":
        return cls("union_boxes", params={"boxes": [np.asarray(b, float) for b in boxes]})

    def membership(self, coords: np.ndarray, box: np.ndarray) -> np.ndarray:
        """Boolean mask of coords (M, d) belonging to the open set."""
        kind = self.kind
        if kind in ("box", "interval"):
            return np.ones(len(coords), dtype=bool)
        if kind == "indicator":
            env = {f"x{i + 1}": coords[:, i] for i in range(coords.shape[1])}
            return ex.eval_array(self.indicator, env) > 0.0
        if kind == "disk":
            c, r = self.params["center"], self.params["radius"]
            return np.sum((coords - c) ** 2, axis=1) < r * r
        if kind == "annulus":
            c = self.params["center"]
            r0, r1 = self.params["r_inner"], self.params["r_outer"]
            rho2 = np.sum((coords - c) ** 2, axis=1)
            return (rho2 > r0 * r0) & (rho2 < r1 * r1)
        if kind == "lshape":
            mid = 0.5 * (box[:, 0] + box[:, 1])
            return ~np.all(coords > mid[None, :], axis=1)
        if kind == "union_boxes":
            out = np.zeros(len(coords), dtype=bool)
            for b in self.params["boxes"]:
                out |= np.all((coords > b[:, 0]) & (coords < b[:, 1]), axis=1)
            return out
        raise PreconditionError(f"unknown domain kind '{kind}'")


class GridDomain:
    """Active node set of a masked uniform grid.

    Attributes
    ----------
    dim : int
        Spatial dimension (1, 2 or 3).
    h : float
        Lattice spacing, identical along all axes.
    box : ndarray (dim, 2)
        Bounding box; the lattice is anchored at the lower corner.
    idx : ndarray (N, dim) of int
        Lattice indices of the active nodes, in row order.
    coords : ndarray (N, dim)
        Node coordinates.
    lattice : ndarray of int
        Dense lattice index -> row map, -1 for exterior points.
    nbr : ndarray (N, dim, 2) of int
        Row of the (-, +) lattice neighbor along each axis, -1 if exterior.
    faces : ndarray (F, 3) of int
        Boundary faces as (row, axis, sign) with sign in {0: -, 1: +};
        each face carries area ``h**(dim-1)``.
    """

    def __init__(self, h: float, box: np.ndarray, mask: np.ndarray):
        box = np.asarray(box, dtype=float)
        if box.ndim != 2 or box.shape[1] != 2 or np.any(box[:, 1] - box[:, 0] <= 0):
            raise PreconditionError("bounding box must be nondegenerate, shape (d, 2)")
        if h <= 0:
            raise PreconditionError("spacing h must be positive")
        self.dim = box.shape[0]
        self.h = float(h)
        self.box = box
        self._mask = mask

        rows = np.full(mask.shape, -1, dtype=np.int64)
        flat_order = np.argwhere(mask)  # lexicographic row order
        if len(flat_order) == 0:
            raise EmptyDomainError("no lattice node belongs to the domain")
        rows[tuple(flat_order.T)] = np.arange(len(flat_order))
        self.lattice = rows
        self.idx = flat_order.astype(np.int64)
        self.coords = box[:, 0][None, :] + self.idx * self.h

        n = len(self.idx)
        nbr = np.full((n, self.dim, 2), -1, dtype=np.int64)
        for axis in range(self.dim):
            for s, step in enumerate((-1, 1)):
                shifted = self.idx.copy()
                shifted[:, axis] += step
                ok = (shifted[:, axis] >= 0) & (shifted[:, axis] < mask.shape[axis])
                nbr[ok, axis, s] = rows[tuple(shifted[ok].T)]
        self.nbr = nbr

        face_list = np.argwhere(nbr < 0)  # (row, axis, sign) triples
        self.faces = face_list

    # -- basic quantities ---------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.idx)

    @property
    def measure(self) -> float:
        return self.n_nodes * self.h**self.dim

    @property
    def face_area(self) -> float:
        return self.h ** (self.dim - 1)

    def face_midpoints(self) -> np.ndarray:
        mids = self.coords[self.faces[:, 0]].copy()
        signs = np.where(self.faces[:, 2] == 0, -1.0, 1.0)
        mids[np.arange(len(mids)), self.faces[:, 1]] += 0.5 * self.h * signs
        return mids

    def same_lattice(self, other: "GridDomain") -> bool:
        return (self.dim == other.dim and self.h == other.h
                and np.array_equal(self.box, other.box)
                and self.lattice.shape == other.lattice.shape)

    def validate(self) -> None:
        """Structural invariants, used by the test suite."""
        assert self.n_nodes > 0
        held = self.lattice[tuple(self.idx.T)]
        assert np.array_equal(np.sort(held), np.arange(self.n_nodes))
        interior_neighbors = np.count_nonzero(self.nbr >= 0, axis=(1, 2))
        assert np.all(interior_neighbors + np.bincount(
            self.faces[:, 0], minlength=self.n_nodes) == 2 * self.dim)


def _lattice_coords(box: np.ndarray, h: float):
    steps = [int(np.floor((hi - lo) / h + _TOL)) for lo, hi in box]
    axes = [lo + h * np.arange(n + 1) for (lo, hi), n in zip(box, steps)]
    return steps, axes


def _candidate_mask(box: np.ndarray, h: float, steps) -> np.ndarray:
    """Mask of lattice points strictly inside the box."""
    mask_axes = []
    for (lo, hi), n in zip(box, steps):
        coord = lo + h * np.arange(n + 1)
        mask_axes.append((np.arange(n + 1) >= 1) & (coord < hi - _TOL * h))
    full = mask_axes[0]
    for m in mask_axes[1:]:
        full = np.multiply.outer(full, m)
    return full.astype(bool)


def build_domain(spec: DomainSpec, h: float, box) -> GridDomain:
    """Sample the open set on the lattice; exterior is everything else."""
    box = np.atleast_2d(np.asarray(box, dtype=float))
    steps, axes = _lattice_coords(box, h)
    inside = _candidate_mask(box, h, steps)
    pts = np.argwhere(inside)
    coords = box[:, 0][None, :] + pts * h
    member = spec.membership(coords, box)
    mask = np.zeros(inside.shape, dtype=bool)
    mask[tuple(pts[member].T)] = True
    if not mask.any():
        raise EmptyDomainError("domain specification selects no grid node")
    return GridDomain(h, box, mask)


def with_closure(dom: GridDomain) -> GridDomain:
    """Add the lattice neighbors of the active set (the discrete closure).

    Used for boundary conditions that keep boundary-adjacent nodes as
    unknowns.  Neighbors outside the closed bounding-box lattice are not
    representable and stay exterior.
    """
    mask = dom._mask.copy()
    for axis in range(dom.dim):
        grown = mask.copy()
        sl_lo = [slice(None)] * dom.dim
        sl_hi = [slice(None)] * dom.dim
        sl_lo[axis] = slice(None, -1)
        sl_hi[axis] = slice(1, None)
        grown[tuple(sl_lo)] |= dom._mask[tuple(sl_hi)]
        grown[tuple(sl_hi)] |= dom._mask[tuple(sl_lo)]
        mask |= grown
    return GridDomain(dom.h, dom.box, mask)


def exhaustion(dom: GridDomain, k: int, s0: float = 1.0) -> GridDomain | None:
    """Subdomain of nodes inside the centered cube of half-width k*s0.

    A node qualifies if it lies strictly inside the level-k cube and every
    lattice neighbor position lies inside the level-(k+1) cube, so each
    level sits one cell inside the next.  Returns None when no node
    qualifies (callers skip empty levels).
    """
    if k < 1:
        raise PreconditionError("exhaustion level k must be >= 1")
    center = 0.5 * (dom.box[:, 0] + dom.box[:, 1])
    offset = np.abs(dom.coords - center[None, :])
    keep = np.all(offset < k * s0, axis=1)
    keep &= np.all(offset + dom.h < (k + 1) * s0, axis=1)
    if not keep.any():
        return None
    mask = np.zeros(dom.lattice.shape, dtype=bool)
    mask[tuple(dom.idx[keep].T)] = True
    return GridDomain(dom.h, dom.box, mask)


def node_mask(dom: GridDomain, sub: GridDomain | None) -> np.ndarray:
    """Indicator over dom's rows of membership in the subdomain."""
    if sub is None:
        return np.zeros(dom.n_nodes, dtype=bool)
    if not dom.same_lattice(sub):
        raise PreconditionError("subdomain lives on a different lattice")
    return sub.lattice[tuple(dom.idx.T)] >= 0
