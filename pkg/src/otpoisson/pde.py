"""Poisson solves with measure right-hand sides on the grid domains.

Two interchangeable backends:

* ``fd_grid``: homogeneous-Dirichlet 5-point Laplacian on the interior
  nodes, solved by conjugate gradients (relative residual 1e-10).  Atomic
  sources are deposited on the containing cell's nodes by bilinear weights;
  mass falling on non-interior nodes (the boundary) is dropped, matching the
  fact that boundary mass does not influence the state.
* ``green_disk``: kernel evaluation with the unit-disk Green function
  G(x, xi) = (1/2pi) ln(|x - xi*| |xi| / |x - xi|), xi* = xi/|xi|^2, which
  reduces to -(1/2pi) ln|x| for xi = 0.  Adjoint solves use midpoint
  quadrature of the same (symmetric) kernel; the log singularity on the
  diagonal is replaced by the mean potential of a disk of radius h/2.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, DomainError, InvalidParameterError, ShapeMismatchError
from .geometry import Domain, Grid, build_grid
from .measures import DiscreteMeasure

TWO_PI = 2.0 * np.pi


@dataclass
class ScalarField:
    """Grid-sampled function with bilinear off-node evaluation."""

    grid: Grid
    values: np.ndarray
    dirichlet: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise ShapeMismatchError(
                f"field has {self.values.shape} values for {self.grid.n_nodes} nodes"
            )
        if not np.isfinite(self.values).all():
            raise ValueError("field values must be finite")

    def interpolate(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = self.grid
        xmin, ymin = g.origin
        xmax = xmin + (g.nx - 1) * g.h
        ymax = ymin + (g.ny - 1) * g.h
        eps = 1e-9 * g.h
        if ((pts[:, 0] < xmin - eps) | (pts[:, 0] > xmax + eps)
                | (pts[:, 1] < ymin - eps) | (pts[:, 1] > ymax + eps)).any():
            raise DomainError("interpolation point outside the grid bounding box")
        ix, iy, fx, fy = g.cell_of(pts)
        fx = np.clip(fx, 0.0, 1.0)
        fy = np.clip(fy, 0.0, 1.0)
        v00 = self.values[g.node_index(ix, iy)]
        v10 = self.values[g.node_index(ix + 1, iy)]
        v01 = self.values[g.node_index(ix, iy + 1)]
        v11 = self.values[g.node_index(ix + 1, iy + 1)]
        return ((1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10
                + (1 - fx) * fy * v01 + fx * fy * v11)

    def norm_inf(self) -> float:
        mask = self.grid.quad_weights > 0
        return float(np.abs(self.values[mask]).max()) if mask.any() else 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv_string())

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        buf.write("x,y,value\n")
        for (x, y), v in zip(self.grid.nodes, self.values):
            buf.write(f"{float(x)!r},{float(y)!r},{float(v)!r}\n")
        return buf.getvalue()


@dataclass
class VectorField:
    """Two-component grid field (used for adjoint gradients)."""

    grid: Grid
    gx: np.ndarray
    gy: np.ndarray

    def interpolate(self, points) -> np.ndarray:
        fx = ScalarField(self.grid, self.gx).interpolate(points)
        fy = ScalarField(self.grid, self.gy).interpolate(points)
        return np.stack([fx, fy], axis=1)


def quad_inner(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    """Quadrature L2 inner product of nodal value vectors."""
    return float(np.sum(grid.quad_weights * f * g))


def _deposit(grid: Grid, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Bilinear deposition of atomic masses onto lattice nodes."""
    node_mass = np.zeros(grid.n_nodes)
    if len(points) == 0:
        return node_mass
    ix, iy, fx, fy = grid.cell_of(points)
    fx = np.clip(fx, 0.0, 1.0)
    fy = np.clip(fy, 0.0, 1.0)
    for dx, dy, frac in (
        (0, 0, (1 - fx) * (1 - fy)),
        (1, 0, fx * (1 - fy)),
        (0, 1, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        np.add.at(node_mass, grid.node_index(ix + dx, iy + dy), weights * frac)
    return node_mass


def _cg(A, b, rtol: float, maxiter: int):
    try:
        x, info = spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=maxiter)
    except TypeError:  # scipy < 1.12 spells it tol
        x, info = spla.cg(A, b, tol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0:
        raise ConvergenceError(f"CG did not converge (info={info})")
    return x


class FDPoissonBackend:
    """5-point finite-difference backend on a grid (square or disk)."""

    kind = "fd_grid"

    def __init__(self, grid: Grid):
        self.grid = grid
        self._interior = np.flatnonzero(grid.interior_mask)
        self._full_to_red = -np.ones(grid.n_nodes, dtype=int)
        self._full_to_red[self._interior] = np.arange(len(self._interior))
        self._matrix = self._assemble()

    def _assemble(self):
        g = self.grid
        n = len(self._interior)
        h2 = g.h * g.h
        rows, cols, vals = [], [], []
        ix = self._interior // g.ny
        iy = self._interior % g.ny
        for k in range(n):
            r = k
            rows.append(r)
            cols.append(r)
            vals.append(4.0 / h2)
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                jx, jy = ix[k] + dx, iy[k] + dy
                if 0 <= jx < g.nx and 0 <= jy < g.ny:
                    nb = self._full_to_red[g.node_index(jx, jy)]
                    if nb >= 0:
                        rows.append(r)
                        cols.append(nb)
                        vals.append(-1.0 / h2)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def _solve_reduced(self, rhs_reduced: np.ndarray) -> np.ndarray:
        if not len(rhs_reduced):
            return rhs_reduced
        if not rhs_reduced.any():
            return np.zeros_like(rhs_reduced)
        n = len(rhs_reduced)
        x = _cg(self._matrix, rhs_reduced, rtol=1e-10, maxiter=10 * n)
        res = np.linalg.norm(self._matrix @ x - rhs_reduced)
        if res > 1e-9 * (1.0 + np.linalg.norm(rhs_reduced)):
            raise ConvergenceError("CG residual above tolerance", residual=res)
        return x

    def solve_state_points(self, points, weights) -> ScalarField:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        if len(pts) and not self.grid.domain.contains(pts).all():
            raise DomainError("source atom outside the closed domain")
        node_mass = _deposit(self.grid, pts, w)
        rhs = node_mass[self._interior] / (self.grid.h ** 2)
        values = np.zeros(self.grid.n_nodes)
        values[self._interior] = self._solve_reduced(rhs)
        return ScalarField(self.grid, values, dirichlet=True)

    def solve_state(self, u: DiscreteMeasure) -> ScalarField:
        return self.solve_state_points(u.points, u.weights)

    def solve_adjoint(self, rhs: ScalarField) -> ScalarField:
        if rhs.grid is not self.grid and rhs.grid.n_nodes != self.grid.n_nodes:
            raise ShapeMismatchError("adjoint right-hand side lives on another grid")
        values = np.zeros(self.grid.n_nodes)
        values[self._interior] = self._solve_reduced(rhs.values[self._interior])
        return ScalarField(self.grid, values, dirichlet=True)

    def adjoint_from_residual(self, residual: np.ndarray, obs_weight: np.ndarray) -> ScalarField:
        """Exact adjoint of the discrete quadrature objective.

        For J(u) = 1/2 sum_k obs_weight_k (y_k - yd_k)^2 the derivative w.r.t.
        a unit source at xi is the bilinear interpolation at xi of the
        solution of A p = obs_weight * residual / h^2.
        """
        rhs = ScalarField(self.grid, obs_weight * residual / (self.grid.h ** 2))
        return self.solve_adjoint(rhs)

    def green_potential(self, u: DiscreteMeasure, x) -> float:
        x = np.asarray(x, dtype=float)
        if not self.grid.domain.contains(x[None, :], strict=True)[0]:
            raise DomainError("evaluation point outside the open domain")
        if u.n_atoms and np.min(np.linalg.norm(u.points - x, axis=1)) < 1e-14:
            return np.inf
        return float(self.solve_state(u).interpolate(x[None, :])[0])


class GreenDiskBackend:
    """Unit-disk Green-function backend (kernel sums + quadrature adjoints)."""

    kind = "green_disk"

    def __init__(self, grid: Grid):
        if grid.domain.kind != "unit_disk":
            raise InvalidParameterError("green_disk backend requires the unit disk")
        self.grid = grid
        self._qidx = np.flatnonzero(grid.quad_weights > 0)
        self._qnodes = grid.nodes[self._qidx]
        self._qw = grid.quad_weights[self._qidx]
        self._G_qq = None  # lazily built (n_q x n_q)

    # -- kernel ---------------------------------------------------------
    @staticmethod
    def kernel(x: np.ndarray, xi: np.ndarray, clamp_h: float | None = None) -> np.ndarray:
        """G(x_i, xi_j) for row points x and column points xi.

        ``clamp_h``: if given, distances below clamp_h/2 are replaced by the
        mean potential of a uniform disk of radius clamp_h/2 (keeps values
        finite on the quadrature diagonal); result is floored at 0, the
        pointwise lower bound for a Green function.
        """
        x = np.atleast_2d(x)
        xi = np.atleast_2d(xi)
        diff = x[:, None, :] - xi[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=2))
        # |x - xi*| |xi| in the form sqrt(|x|^2 |xi|^2 - 2 x.xi + 1): smooth at xi=0
        img2 = ((x ** 2).sum(axis=1)[:, None] * (xi ** 2).sum(axis=1)[None, :]
                - 2.0 * (x @ xi.T) + 1.0)
        img2 = np.maximum(img2, 1e-300)
        with np.errstate(divide="ignore"):
            log_dist = np.log(dist)
        if clamp_h is not None:
            a = clamp_h / 2.0
            near = dist < a
            # mean of -log r over a disk of radius a equals 1/2 - log a
            log_dist = np.where(near, np.log(a) - 0.5, log_dist)
            vals = (0.5 * np.log(img2) - log_dist) / TWO_PI
            return np.maximum(vals, 0.0)
        return (0.5 * np.log(img2) - log_dist) / TWO_PI

    @staticmethod
    def kernel_grad_x(x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Gradient of G in the first argument, shape (len(x), len(xi), 2)."""
        x = np.atleast_2d(x)
        xi = np.atleast_2d(xi)
        diff = x[:, None, :] - xi[None, :, :]
        dist2 = np.maximum((diff ** 2).sum(axis=2), 1e-300)
        img2 = ((x ** 2).sum(axis=1)[:, None] * (xi ** 2).sum(axis=1)[None, :]
                - 2.0 * (x @ xi.T) + 1.0)
        img2 = np.maximum(img2, 1e-300)
        xi_norm2 = (xi ** 2).sum(axis=1)[None, :]
        img_grad = (x[:, None, :] * xi_norm2[:, :, None] - xi[None, :, :]) / img2[:, :, None]
        return (img_grad - diff / dist2[:, :, None]) / TWO_PI

    # -- state / adjoint --------------------------------------------------
    def _ensure_gqq(self):
        if self._G_qq is None:
            self._G_qq = self.kernel(self._qnodes, self._qnodes, clamp_h=self.grid.h)
        return self._G_qq

    def solve_state_points(self, points, weights) -> ScalarField:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        values = np.zeros(self.grid.n_nodes)
        if len(pts):
            if not self.grid.domain.contains(pts).all():
                raise DomainError("source atom outside the closed disk")
            values[self._qidx] = self.kernel(self._qnodes, pts, clamp_h=self.grid.h) @ w
        return ScalarField(self.grid, values, dirichlet=True)

    def solve_state(self, u: DiscreteMeasure) -> ScalarField:
        return self.solve_state_points(u.points, u.weights)

    def candidate_state_matrix(self, candidates: np.ndarray) -> np.ndarray:
        """Columns are states of unit Diracs at the candidate points."""
        return self.kernel(self._qnodes, candidates, clamp_h=self.grid.h)

    def solve_adjoint(self, rhs: ScalarField) -> ScalarField:
        if rhs.grid.n_nodes != self.grid.n_nodes:
            raise ShapeMismatchError("adjoint right-hand side lives on another grid")
        return self.adjoint_from_residual(rhs.values, self.grid.quad_weights)

    def adjoint_from_residual(self, residual: np.ndarray, obs_weight: np.ndarray) -> ScalarField:
        values = np.zeros(self.grid.n_nodes)
        values[self._qidx] = self._ensure_gqq() @ (obs_weight[self._qidx] * residual[self._qidx])
        return ScalarField(self.grid, values, dirichlet=True)

    def adjoint_at(self, points: np.ndarray, residual: np.ndarray,
                   obs_weight: np.ndarray) -> np.ndarray:
        """Adjoint values at arbitrary points by the same quadrature rule."""
        G = self.kernel(np.atleast_2d(points), self._qnodes, clamp_h=self.grid.h)
        return G @ (obs_weight[self._qidx] * residual[self._qidx])

    def adjoint_grad_at(self, points: np.ndarray, residual: np.ndarray,
                        obs_weight: np.ndarray) -> np.ndarray:
        """Analytic gradient of the quadrature adjoint at given points."""
        Gg = self.kernel_grad_x(np.atleast_2d(points), self._qnodes)
        f = obs_weight[self._qidx] * residual[self._qidx]
        return np.einsum("ijk,j->ik", Gg, f)

    def green_potential(self, u: DiscreteMeasure, x) -> float:
        x = np.asarray(x, dtype=float)
        if not self.grid.domain.contains(x[None, :], strict=True)[0]:
            raise DomainError("evaluation point outside the open disk")
        if u.n_atoms == 0:
            return 0.0
        if np.min(np.linalg.norm(u.points - x, axis=1)) < 1e-14:
            return np.inf
        return float((self.kernel(x[None, :], u.points) @ u.weights)[0])


def make_backend(kind: str, grid: Grid):
    if kind == "fd_grid":
        return FDPoissonBackend(grid)
    if kind == "green_disk":
        return GreenDiskBackend(grid)
    raise InvalidParameterError(f"unknown backend kind {kind!r}")


def solve_state(backend, u: DiscreteMeasure) -> ScalarField:
    return backend.solve_state(u)


def solve_adjoint(backend, rhs: ScalarField) -> ScalarField:
    return backend.solve_adjoint(rhs)


def green_potential(u: DiscreteMeasure, x, backend) -> float:
    """Pointwise potential of ``u`` at ``x``; +inf when x sits on an atom."""
    return backend.green_potential(u, x)


def gradient_field(f: ScalarField) -> VectorField:
    """Central differences inside the lattice, one-sided at its edges."""
    g = f.grid
    v = f.values.reshape(g.nx, g.ny)
    gx = np.empty_like(v)
    gy = np.empty_like(v)
    h = g.h
    gx[1:-1, :] = (v[2:, :] - v[:-2, :]) / (2 * h)
    gx[0, :] = (v[1, :] - v[0, :]) / h
    gx[-1, :] = (v[-1, :] - v[-2, :]) / h
    gy[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2 * h)
    gy[:, 0] = (v[:, 1] - v[:, 0]) / h
    gy[:, -1] = (v[:, -1] - v[:, -2]) / h
    return VectorField(g, gx.ravel(), gy.ravel())


def backend_for_domain(domain: Domain, h: float, prefer_green: bool = False):
    """Convenience constructor: grid + matching backend."""
    grid = build_grid(domain, h)
    if prefer_green and domain.kind == "unit_disk":
        return grid, GreenDiskBackend(grid)
    return grid, FDPoissonBackend(grid)
