"""Discrete measures on the plane: pushforwards, supports, atom and density
diagnostics.

A ``DiscreteMeasure`` is a finite weighted point set.  Control measures are
nonnegative; signed weights are tolerated by the container itself because
linearity tests of the PDE solver form signed combinations and the
transport distance must be able to answer "+infinity" on a negative input.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import InsufficientDataError
from .geometry import Grid

_MERGE_TOL = 1e-12  # atoms closer than this merge into one


class DiscreteMeasure:
    """Finite atomic measure: points (n, 2) and weights (n,).

    Duplicate points (within 1e-12) are merged by summing their weights.
    """

    def __init__(self, points, weights):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        if pts.shape[0] != w.shape[0]:
            raise ValueError("points and weights must have the same length")
        if pts.size and not np.isfinite(pts).all():
            raise ValueError("atom coordinates must be finite")
        if w.size and not np.isfinite(w).all():
            raise ValueError("weights must be finite")
        if pts.shape[0]:
            keys = np.round(pts / _MERGE_TOL).astype(np.int64)
            _, first, inverse = np.unique(
                keys, axis=0, return_index=True, return_inverse=True
            )
            merged_w = np.zeros(len(first))
            np.add.at(merged_w, inverse, w)
            pts = pts[first]
            w = merged_w
            order = np.lexsort((pts[:, 1], pts[:, 0]))
            pts, w = pts[order], w[order]
        self.points = pts
        self.weights = w
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def is_nonnegative(self) -> bool:
        return bool((self.weights >= 0).all())

    def scaled(self, factor: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points, self.weights * factor)

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        return DiscreteMeasure(
            np.vstack([self.points, other.points]),
            np.concatenate([self.weights, other.weights]),
        )

    def restricted(self, mask) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points[mask], self.weights[mask])

    # CSV contract: header "x,y,w", one row per atom
    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv_string())

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        buf.write("x,y,w\n")
        for (x, y), w in zip(self.points, self.weights):
            buf.write(f"{float(x)!r},{float(y)!r},{float(w)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path) -> "DiscreteMeasure":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 3:
            raise ValueError("measure CSV must have columns x,y,w")
        return cls(data[:, :2], data[:, 2])


def pushforward(map_fn, mu: DiscreteMeasure) -> DiscreteMeasure:
    """Image measure T_# mu; merges atoms with identical images.

    Total mass is preserved exactly (up to summation reassociation).
    """
    if mu.n_atoms == 0:
        return mu
    images = np.array([map_fn(p) for p in mu.points], dtype=float)
    return DiscreteMeasure(images, mu.weights)


def support(mu: DiscreteMeasure, mass_tol: float = 0.0) -> np.ndarray:
    """Atoms carrying weight > mass_tol * total_mass."""
    if mass_tol < 0:
        raise ValueError("mass_tol must be >= 0")
    thresh = mass_tol * abs(mu.total_mass)
    return mu.points[mu.weights > thresh]


@dataclass
class AtomReport:
    """Ball-mass decay under refinement; ``atomic`` if it does not decay."""

    ball_masses: list
    radii: list
    ratios: list
    atomic: bool


def detect_atoms(measures, node_radii) -> AtomReport:
    """Check whether the maximum mass in balls of radius 2*h decays.

    ``measures`` holds one measure per refinement level (coarse to fine),
    ``node_radii`` the matching h.  A genuine atom keeps O(1) ball mass at
    every level; diffuse measures lose mass at least linearly.  The flag
    uses the finest consecutive ratio with threshold 0.8.
    """
    measures = list(measures)
    radii = [float(r) for r in node_radii]
    if len(measures) < 2 or len(radii) != len(measures):
        raise InsufficientDataError("need at least two refinement levels")
    masses = []
    for mu, h in zip(measures, radii):
        tree = cKDTree(mu.points)
        groups = tree.query_ball_point(mu.points, r=2.0 * h)
        masses.append(max(float(mu.weights[g].sum()) for g in groups))
    ratios = [masses[i + 1] / masses[i] if masses[i] > 0 else 0.0
              for i in range(len(masses) - 1)]
    return AtomReport(
        ball_masses=masses, radii=radii, ratios=ratios, atomic=ratios[-1] > 0.8
    )


@dataclass
class DensityEstimate:
    """Histogram density of a measure against a grid.

    ``values[k]`` = (mass assigned to node k) / (clipped cell area of k);
    nodes outside the domain keep density zero.  The quadrature integral of
    the density reproduces the mass captured by the grid region exactly.
    """

    grid: Grid
    values: np.ndarray
    norm_inf: float
    captured_mass: float

    def interpolate(self, points: np.ndarray) -> np.ndarray:
        from .pde import ScalarField  # local import to avoid a cycle

        return ScalarField(self.grid, self.values).interpolate(points)


def estimate_density(mu: DiscreteMeasure, grid: Grid) -> DensityEstimate:
    """Nearest-node histogram density of ``mu`` on ``grid``."""
    values = np.zeros(grid.n_nodes)
    captured = 0.0
    if mu.n_atoms:
        ix, iy, fx, fy = grid.cell_of(mu.points)
        ix = ix + (fx > 0.5)
        iy = iy + (fy > 0.5)
        idx = grid.node_index(ix, iy)
        node_mass = np.zeros(grid.n_nodes)
        np.add.at(node_mass, idx, mu.weights)
        pos = grid.quad_weights > 0
        values[pos] = node_mass[pos] / grid.quad_weights[pos]
        captured = float(node_mass[pos].sum())
    return DensityEstimate(
        grid=grid,
        values=values,
        norm_inf=float(np.abs(values).max()) if len(values) else 0.0,
        captured_mass=captured,
    )


def boundary_mass(mu: DiscreteMeasure, grid: Grid) -> float:
    """Mass within distance 2h of the domain boundary (diagnostic only)."""
    d = grid.domain.boundary_distance(mu.points)
    return float(mu.weights[d <= 2.0 * grid.h].sum())
