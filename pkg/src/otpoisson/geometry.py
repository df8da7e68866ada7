"""Domains, uniform grids and candidate point sets.

Two domains are supported: the unit square [0,1]^2 and the open unit disk
B_1(0).  Grids are uniform lattices over the bounding box; quadrature
weights are cell areas clipped to the domain, so that sum(weights) -> |Omega|
at first order as h -> 0.  Candidate sets discretize the compact control
region (full domain, an annulus, or a box) on the same lattice.

All values are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyRegionError, InvalidParameterError

_SUBSAMPLE = 4  # cut cells at the disk boundary: 4x4 midpoint subsampling


@dataclass(frozen=True)
class Domain:
    """Computational domain, either ``unit_square`` or ``unit_disk``."""

    kind: str

    def __post_init__(self):
        if self.kind not in ("unit_square", "unit_disk"):
            raise InvalidParameterError(f"unknown domain kind {self.kind!r}")

    @property
    def bounding_box(self):
        """(xmin, xmax, ymin, ymax) of the closed domain."""
        if self.kind == "unit_square":
            return (0.0, 1.0, 0.0, 1.0)
        return (-1.0, 1.0, -1.0, 1.0)

    @property
    def area(self) -> float:
        return 1.0 if self.kind == "unit_square" else np.pi

    def contains(self, points: np.ndarray, strict: bool = False) -> np.ndarray:
        """Membership mask; ``strict`` tests the open domain."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "unit_square":
            if strict:
                m = (pts > 0.0).all(axis=1) & (pts < 1.0).all(axis=1)
            else:
                m = (pts >= 0.0).all(axis=1) & (pts <= 1.0).all(axis=1)
        else:
            r2 = (pts ** 2).sum(axis=1)
            m = r2 < 1.0 if strict else r2 <= 1.0
        return m

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance to the boundary, positive inside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "unit_square":
            return np.minimum.reduce(
                [pts[:, 0], 1.0 - pts[:, 0], pts[:, 1], 1.0 - pts[:, 1]]
            )
        return 1.0 - np.linalg.norm(pts, axis=1)


@dataclass(frozen=True)
class Grid:
    """Uniform lattice of spacing ``h`` covering the domain bounding box.

    Nodes are stored lexicographically (x major, y minor); ``index(ix, iy)
    = ix * ny + iy``.  ``quad_weights[k]`` is the area of the h x h cell
    centered at node k clipped to the domain; the interior mask marks nodes
    strictly inside.
    """

    domain: Domain
    h: float
    nx: int
    ny: int
    origin: tuple
    nodes: np.ndarray = field(repr=False)
    interior_mask: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    def node_index(self, ix, iy):
        return np.asarray(ix) * self.ny + np.asarray(iy)

    def cell_of(self, points: np.ndarray):
        """Lower-left lattice index (ix, iy) of the cell containing each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        fx = (pts[:, 0] - self.origin[0]) / self.h
        fy = (pts[:, 1] - self.origin[1]) / self.h
        ix = np.clip(np.floor(fx).astype(int), 0, self.nx - 2)
        iy = np.clip(np.floor(fy).astype(int), 0, self.ny - 2)
        return ix, iy, fx - ix, fy - iy


def _lattice_coords(lo: float, hi: float, h: float) -> np.ndarray:
    n = int(np.floor((hi - lo) / h + 1e-9)) + 1
    if lo + (n - 1) * h < hi - 1e-12:
        n += 1  # lattice may overshoot hi; outside nodes get weight 0
    return lo + h * np.arange(n)


def _clipped_cell_areas_square(nodes: np.ndarray, h: float) -> np.ndarray:
    # exact overlap of the h x h cell with [0,1]^2
    ox = np.minimum(nodes[:, 0] + h / 2, 1.0) - np.maximum(nodes[:, 0] - h / 2, 0.0)
    oy = np.minimum(nodes[:, 1] + h / 2, 1.0) - np.maximum(nodes[:, 1] - h / 2, 0.0)
    return np.maximum(ox, 0.0) * np.maximum(oy, 0.0)


def _clipped_cell_areas_disk(nodes: np.ndarray, h: float) -> np.ndarray:
    r = np.linalg.norm(nodes, axis=1)
    half_diag = h * np.sqrt(2.0) / 2.0
    areas = np.zeros(len(nodes))
    areas[r + half_diag <= 1.0] = h * h
    cut = (r + half_diag > 1.0) & (r - half_diag < 1.0)
    if np.any(cut):
        # midpoint subsampling of the cut cells
        s = (np.arange(_SUBSAMPLE) + 0.5) / _SUBSAMPLE - 0.5
        sx, sy = np.meshgrid(s * h, s * h, indexing="ij")
        sub = np.stack([sx.ravel(), sy.ravel()], axis=1)  # (16, 2)
        pts = nodes[cut][:, None, :] + sub[None, :, :]
        inside = (pts ** 2).sum(axis=2) <= 1.0
        areas[cut] = h * h * inside.mean(axis=1)
    return areas


def build_grid(domain: Domain, h: float) -> Grid:
    """Build the uniform grid of spacing ``h`` over ``domain``.

    Raises InvalidParameterError unless 0 < h <= 1/2 (the run configuration
    restricts h further; 1/2 keeps the degenerate 3x3 square lattice legal).
    """
    if not (0.0 < h <= 0.5):
        raise InvalidParameterError(f"grid spacing h={h} out of range (0, 1/2]")
    xmin, xmax, ymin, ymax = domain.bounding_box
    xs = _lattice_coords(xmin, xmax, h)
    ys = _lattice_coords(ymin, ymax, h)
    nodes = np.stack(
        [np.repeat(xs, len(ys)), np.tile(ys, len(xs))], axis=1
    )  # x major, y minor
    interior = domain.contains(nodes, strict=True)
    if domain.kind == "unit_square":
        weights = _clipped_cell_areas_square(nodes, h)
    else:
        weights = _clipped_cell_areas_disk(nodes, h)
    nodes.setflags(write=False)
    interior.setflags(write=False)
    weights.setflags(write=False)
    return Grid(
        domain=domain,
        h=h,
        nx=len(xs),
        ny=len(ys),
        origin=(xmin, ymin),
        nodes=nodes,
        interior_mask=interior,
        quad_weights=weights,
    )


def candidate_points(domain: Domain, region, h: float) -> np.ndarray:
    """Lattice points of spacing ``h`` inside ``region`` and the closed domain.

    ``region`` is ``"full"``, ``("annulus", r1, r2)`` or
    ``("subgrid", (xmin, xmax, ymin, ymax))``.  Output is deduplicated and
    sorted lexicographically.
    """
    if not (0.0 < h <= 0.5):
        raise InvalidParameterError(f"candidate spacing h={h} out of range (0, 1/2]")
    xmin, xmax, ymin, ymax = domain.bounding_box
    xs = _lattice_coords(xmin, xmax, h)
    ys = _lattice_coords(ymin, ymax, h)
    pts = np.stack([np.repeat(xs, len(ys)), np.tile(ys, len(xs))], axis=1)
    mask = domain.contains(pts)
    if region == "full":
        pass
    elif isinstance(region, tuple) and region[0] == "annulus":
        _, r1, r2 = region
        if not (0.0 <= r1 <= r2):
            raise InvalidParameterError(f"bad annulus radii ({r1}, {r2})")
        r = np.linalg.norm(pts, axis=1)
        mask &= (r >= r1 - 1e-12) & (r <= r2 + 1e-12)
    elif isinstance(region, tuple) and region[0] == "subgrid":
        bx = region[1]
        mask &= (
            (pts[:, 0] >= bx[0] - 1e-12)
            & (pts[:, 0] <= bx[1] + 1e-12)
            & (pts[:, 1] >= bx[2] - 1e-12)
            & (pts[:, 1] <= bx[3] + 1e-12)
        )
    else:
        raise InvalidParameterError(f"unknown candidate region {region!r}")
    pts = pts[mask]
    if len(pts) == 0:
        raise EmptyRegionError(f"region {region!r} contains no lattice points")
    pts = np.unique(pts, axis=0)  # unique also sorts lexicographically
    return pts
