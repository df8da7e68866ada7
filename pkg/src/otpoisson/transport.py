"""Transport costs, c-bar conjugates, exact and entropic Kantorovich solvers.

The exact solver is a transportation simplex (northwest-corner start, MODI
pricing, Bland's rule on row-major index order) returning the optimal plan
together with dual potentials read off the final basis tree.  Strong duality
of the LP is the certificate every structural check builds on.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .errors import (
    ConvergenceError,
    InvalidParameterError,
    MassMismatchError,
)
from .measures import DiscreteMeasure

_ROW_CHUNK = 256


class CostModel:
    """Transportation cost c(x, xi).

    kinds: ``metric`` |x-xi|, ``power`` |x-xi|^gamma / gamma with
    gamma in (1, 2], ``quadratic`` |x-xi|^2 / 2, or ``radial`` h(|x-xi|)
    with h(0) = 0 nondecreasing.
    """

    def __init__(self, kind: str, gamma: float | None = None,
                 radial_fn=None, label: str = ""):
        if kind not in ("metric", "power", "quadratic", "radial"):
            raise InvalidParameterError(f"unknown cost kind {kind!r}")
        if kind == "power":
            if gamma is None or not (1.0 < gamma <= 2.0):
                raise InvalidParameterError("gamma must be in (1,2]")
        if kind == "radial":
            if radial_fn is None:
                raise InvalidParameterError("radial cost needs a profile h(r)")
            if abs(radial_fn(0.0)) > 1e-14:
                raise InvalidParameterError("radial profile must satisfy h(0)=0")
        self.kind = kind
        self.gamma = float(gamma) if gamma is not None else None
        self.radial_fn = radial_fn
        self.label = label or kind

    def of_distance(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "metric":
            return r
        if self.kind == "quadratic":
            return 0.5 * r * r
        if self.kind == "power":
            return r ** self.gamma / self.gamma
        return np.vectorize(self.radial_fn, otypes=[float])(r)

    def pairwise(self, X: np.ndarray, Xi: np.ndarray) -> np.ndarray:
        return self.of_distance(cdist(np.atleast_2d(X), np.atleast_2d(Xi)))

    # strong-convexity modulus of the profile on a ball of radius R
    def strong_convexity(self, R: float) -> float:
        if self.kind == "quadratic":
            return 1.0
        if self.kind == "power":
            if self.gamma == 2.0:
                return 1.0
            return (self.gamma - 1.0) * R ** (self.gamma - 2.0)
        return 0.0  # metric / generic radial carry no modulus

    def lipschitz(self, R: float) -> float:
        """Lipschitz constant of the profile on [0, R]."""
        if self.kind == "metric":
            return 1.0
        if self.kind == "quadratic":
            return R
        if self.kind == "power":
            return R ** (self.gamma - 1.0)
        rs = np.linspace(0.0, R, 257)
        vals = self.of_distance(rs)
        return float(np.max(np.abs(np.diff(vals)) / (rs[1] - rs[0])))

    def laplacian_sup(self) -> float:
        """sup |Delta_xi c| for twice-differentiable models (2-D)."""
        if self.kind == "quadratic" or (self.kind == "power" and self.gamma == 2.0):
            return 2.0
        raise InvalidParameterError(
            f"cost model {self.kind!r} has no bounded second derivatives"
        )


@dataclass
class CostMatrix:
    row_points: np.ndarray
    col_points: np.ndarray
    values: np.ndarray

    @property
    def shape(self):
        return self.values.shape


def cost_matrix(model: CostModel, X: np.ndarray, Xi: np.ndarray) -> CostMatrix:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xi = np.atleast_2d(np.asarray(Xi, dtype=float))
    if len(X) == 0 or len(Xi) == 0:
        raise InvalidParameterError("cost matrix needs nonempty point sets")
    return CostMatrix(X, Xi, model.pairwise(X, Xi))


class TransportPlan:
    """Sparse nonnegative plan with fixed row marginals.

    Entries are stored as COO triplets sorted row-major.  Row sums equal the
    source weights by construction; column sums define the target measure.
    """

    def __init__(self, source_points, source_weights, target_points,
                 rows, cols, vals):
        self.source_points = np.atleast_2d(np.asarray(source_points, dtype=float))
        self.source_weights = np.asarray(source_weights, dtype=float)
        self.target_points = np.atleast_2d(np.asarray(target_points, dtype=float))
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        vals = np.asarray(vals, dtype=float)
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        order = np.lexsort((cols, rows))
        self.rows, self.cols, self.vals = rows[order], cols[order], vals[order]
        if len(self.vals) and self.vals.min() < -1e-13 * max(1.0, abs(vals).max()):
            raise ValueError("transport plan has a negative entry")

    @property
    def n_sources(self):
        return len(self.source_weights)

    @property
    def n_targets(self):
        return len(self.target_points)

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.vals, minlength=self.n_sources)

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.cols, weights=self.vals, minlength=self.n_targets)

    def cost_inner(self, C: CostMatrix) -> float:
        return float(np.sum(self.vals * C.values[self.rows, self.cols]))

    def target_measure(self) -> DiscreteMeasure:
        cs = self.col_sums()
        active = cs > 0
        return DiscreteMeasure(self.target_points[active], cs[active])

    def support(self, tol: float = 0.0):
        keep = self.vals > tol
        return self.rows[keep], self.cols[keep], self.vals[keep]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv_string())

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        buf.write("i,j,weight,x_i,y_i,x_j,y_j\n")
        for i, j, w in zip(self.rows, self.cols, self.vals):
            xs, ys = self.source_points[i]
            xt, yt = self.target_points[j]
            buf.write(f"{i},{j},{float(w)!r},{float(xs)!r},{float(ys)!r},{float(xt)!r},{float(yt)!r}\n")
        return buf.getvalue()


@dataclass
class DualPotentials:
    """Kantorovich potentials phi (sources) and psi (targets)."""

    phi: np.ndarray
    psi: np.ndarray

    def feasibility_residual(self, C: CostMatrix) -> float:
        """max_ij phi_i + psi_j - C_ij (feasible when <= 0)."""
        worst = -np.inf
        for lo in range(0, len(self.phi), _ROW_CHUNK):
            hi = min(lo + _ROW_CHUNK, len(self.phi))
            block = self.phi[lo:hi, None] + self.psi[None, :] - C.values[lo:hi]
            worst = max(worst, float(block.max()))
        return worst

    def dual_value(self, mu_weights, nu_weights) -> float:
        return float(self.phi @ mu_weights + self.psi @ nu_weights)


def c_bar_transform(psi: np.ndarray, model: CostModel, X: np.ndarray,
                    Xi: np.ndarray, C: CostMatrix | None = None):
    """Discrete c-bar conjugate: psi^cbar(x_i) = min_j (c(x_i, xi_j) - psi_j).

    Returns (values, argmin indices); ties resolve to the lowest index.
    """
    psi = np.asarray(psi, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xi = np.atleast_2d(np.asarray(Xi, dtype=float))
    if len(Xi) == 0:
        raise InvalidParameterError("c-bar transform needs a nonempty target set")
    m = len(X)
    values = np.empty(m)
    argmins = np.empty(m, dtype=int)
    for lo in range(0, m, _ROW_CHUNK):
        hi = min(lo + _ROW_CHUNK, m)
        block = C.values[lo:hi] if C is not None else model.pairwise(X[lo:hi], Xi)
        block = block - psi[None, :]
        argmins[lo:hi] = np.argmin(block, axis=1)
        values[lo:hi] = block[np.arange(hi - lo), argmins[lo:hi]]
    return values, argmins


def eval_F(psi: np.ndarray, model: CostModel, u0: DiscreteMeasure,
           Xi: np.ndarray) -> float:
    """Pre-conjugate of the transport distance: F(psi) = -<psi^cbar, u0>."""
    vals, _ = c_bar_transform(psi, model, u0.points, Xi)
    return float(-(u0.weights @ vals))


# ---------------------------------------------------------------------------
# exact solver: transportation simplex
# ---------------------------------------------------------------------------

def _northwest_corner(a: np.ndarray, b: np.ndarray):
    m, n = len(a), len(b)
    a_rem = a.astype(float).copy()
    b_rem = b.astype(float).copy()
    basis = []
    x = np.zeros((m, n))
    i = j = 0
    while True:
        q = min(a_rem[i], b_rem[j])
        basis.append((i, j))
        x[i, j] = q
        a_rem[i] -= q
        b_rem[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if a_rem[i] <= 0.0 and i < m - 1:
            i += 1
        elif j < n - 1:
            j += 1
        else:
            i += 1
    return basis, x


def _potentials_from_basis(basis, C, m, n):
    """Solve u_i + v_j = C_ij on the basis tree, rooted at target 0 (v_0 = 0)."""
    adj = [[] for _ in range(m + n)]
    for (i, j) in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    v[0] = 0.0
    stack = [m + 0]
    seen = np.zeros(m + n, dtype=bool)
    seen[m + 0] = True
    Cl = C  # local alias
    while stack:
        node = stack.pop()
        for nb in adj[node]:
            if seen[nb]:
                continue
            seen[nb] = True
            if nb < m:  # source node, neighbor 'node' is target
                u[nb] = Cl[nb, node - m] - v[node - m]
            else:
                v[nb - m] = Cl[node, nb - m] - u[node]
            stack.append(nb)
    if not seen.all():
        raise ConvergenceError("transportation basis is not a spanning tree")
    return u, v


def _tree_path(basis, start, goal, m):
    """Node path from ``start`` to ``goal`` in the basis tree."""
    adj = {}
    for (i, j) in basis:
        adj.setdefault(i, []).append(m + j)
        adj.setdefault(m + j, []).append(i)
    parent = {start: None}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for nb in adj.get(node, ()):
            if nb not in parent:
                parent[nb] = node
                stack.append(nb)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    return path[::-1]


def _resolve_tree_flows(basis, a, b, m, n):
    """Unique flows on the basis tree with the given marginals (leaf solve)."""
    adj = {}
    for (i, j) in basis:
        adj.setdefault(i, set()).add(m + j)
        adj.setdefault(m + j, set()).add(i)
    rem = np.concatenate([a.astype(float), b.astype(float)])
    flows = {}
    degree = {node: len(nbs) for node, nbs in adj.items()}
    leaves = [node for node, d in degree.items() if d == 1]
    while leaves:
        leaf = leaves.pop()
        if degree.get(leaf, 0) != 1:
            continue
        nb = next(iter(adj[leaf]))
        q = rem[leaf]
        cell = (leaf, nb - m) if leaf < m else (nb, leaf - m)
        flows[cell] = q
        rem[leaf] = 0.0
        rem[nb] -= q
        adj[leaf].remove(nb)
        adj[nb].remove(leaf)
        degree[leaf] -= 1
        degree[nb] -= 1
        if degree[nb] == 1:
            leaves.append(nb)
    return flows


def solve_kantorovich_exact(mu_weights, nu_weights, C: CostMatrix,
                            max_pivots: int | None = None):
    """Optimal transport LP between weight vectors over C.

    Returns (TransportPlan, DualPotentials, value).  Primal and dual values
    agree to 1e-9 relative; the plan support has at most m + n - 1 entries.
    """
    a = np.asarray(mu_weights, dtype=float)
    b = np.asarray(nu_weights, dtype=float)
    if (a < 0).any() or (b < 0).any():
        raise MassMismatchError("marginals must be nonnegative")
    total = a.sum()
    if abs(total - b.sum()) > 1e-9 * max(1.0, abs(total)):
        raise MassMismatchError(
            f"marginal masses differ: {total} vs {b.sum()}"
        )
    m, n = C.shape
    if len(a) != m or len(b) != n:
        raise InvalidParameterError("marginal lengths do not match the cost matrix")

    basis, x = _northwest_corner(a, b)
    scale = 1.0 + float(np.abs(C.values).max())
    tol = 1e-12 * scale
    if max_pivots is None:
        max_pivots = 2000 + 40 * m * n
    basis_set = set(basis)
    for _ in range(max_pivots):
        u, v = _potentials_from_basis(basis, C.values, m, n)
        red = C.values - u[:, None] - v[None, :]
        flat = np.flatnonzero(red.ravel() < -tol)
        if len(flat) == 0:
            break
        enter = int(flat[0])  # Bland: lowest row-major index
        ei, ej = divmod(enter, n)
        # cycle: entering arc closes the unique tree path target ej -> source ei
        path = _tree_path(basis, m + ej, ei, m)
        cycle = [(ei, ej)]
        for kk in range(len(path) - 1):
            p, q = path[kk], path[kk + 1]
            cycle.append((q, p - m) if p >= m else (p, q - m))
        minus_cells = cycle[1::2]
        theta = min(x[c] for c in minus_cells)
        leaving = min(c for c in minus_cells if x[c] <= theta)
        for k, c in enumerate(cycle):
            x[c] = x[c] + theta if k % 2 == 0 else x[c] - theta
        x[leaving] = 0.0
        basis_set.remove(leaving)
        basis_set.add((ei, ej))
        basis = sorted(basis_set)
    else:
        raise ConvergenceError("transportation simplex exceeded its pivot budget")

    u, v = _potentials_from_basis(basis, C.values, m, n)
    flows = _resolve_tree_flows(basis, a, b, m, n)
    rows, cols, vals = [], [], []
    for (i, j), q in sorted(flows.items()):
        if q > 0:
            rows.append(i)
            cols.append(j)
            vals.append(q)
    plan = TransportPlan(C.row_points, a, C.col_points, rows, cols, vals)
    duals = DualPotentials(phi=u, psi=v)
    value = plan.cost_inner(C)
    dual_value = duals.dual_value(a, b)
    if abs(value - dual_value) > 1e-9 * (1.0 + abs(value)):
        raise ConvergenceError(
            f"LP duality gap {value - dual_value} above tolerance"
        )
    return plan, duals, value


def duality_gap(plan: TransportPlan, duals: DualPotentials, C: CostMatrix) -> float:
    """<C, pi> - (<phi, mu> + <psi, nu>); nonnegative for feasible duals."""
    return plan.cost_inner(C) - duals.dual_value(plan.row_sums(), plan.col_sums())


# ---------------------------------------------------------------------------
# entropic solver
# ---------------------------------------------------------------------------

def solve_sinkhorn(mu_weights, nu_weights, C: CostMatrix, eps: float,
                   tol: float = 1e-9, max_iter: int = 100_000) -> TransportPlan:
    """Log-domain Sinkhorn iteration, rounded to exact row marginals.

    The returned plan has row sums equal to mu exactly and column-marginal
    l1 error at most ``tol``.  The entropic value exceeds the exact optimum
    by at most O(eps log(mn)) times the mass (not asserted here).
    """
    if eps <= 0:
        raise InvalidParameterError("entropic regularization eps must be > 0")
    a = np.asarray(mu_weights, dtype=float)
    b = np.asarray(nu_weights, dtype=float)
    if abs(a.sum() - b.sum()) > 1e-9 * max(1.0, a.sum()):
        raise MassMismatchError("marginal masses differ")
    ia = np.flatnonzero(a > 0)
    ib = np.flatnonzero(b > 0)
    aa, bb = a[ia], b[ib]
    Cv = C.values[np.ix_(ia, ib)]
    f = np.zeros(len(aa))
    g = np.zeros(len(bb))
    log_a = np.log(aa)
    log_b = np.log(bb)
    target = 0.5 * tol
    for _ in range(max_iter):
        f = eps * log_a - eps * logsumexp((g[None, :] - Cv) / eps, axis=1)
        g = eps * log_b - eps * logsumexp((f[:, None] - Cv) / eps, axis=0)
        P = np.exp((f[:, None] + g[None, :] - Cv) / eps)
        err_row = np.abs(P.sum(axis=1) - aa).sum()
        err_col = np.abs(P.sum(axis=0) - bb).sum()
        if err_row <= target and err_col <= target:
            break
    else:
        raise ConvergenceError(
            "Sinkhorn did not reach the marginal tolerance",
            residual=float(err_row + err_col),
        )
    P *= (aa / P.sum(axis=1))[:, None]  # exact row marginals
    rows, cols = np.nonzero(P)
    return TransportPlan(
        C.row_points, a, C.col_points, ia[rows], ib[cols], P[rows, cols]
    )


def eval_transport_distance(model: CostModel, u0: DiscreteMeasure,
                            u: DiscreteMeasure) -> float:
    """Optimal transport cost from u0 to u; +inf on mass mismatch or u < 0."""
    if not u.is_nonnegative or not u0.is_nonnegative:
        return np.inf
    m0, m1 = u0.total_mass, u.total_mass
    if abs(m0 - m1) > 1e-9 * max(1.0, abs(m0)):
        return np.inf
    if u0.n_atoms == 0 and u.n_atoms == 0:
        return 0.0
    C = cost_matrix(model, u0.points, u.points)
    _, _, value = solve_kantorovich_exact(u0.weights, u.weights, C)
    return value
