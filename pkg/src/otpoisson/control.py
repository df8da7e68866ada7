"""Reduced optimal-control problem over transport plans and its
conditional-gradient (Frank-Wolfe) solver.

The optimization variable is the plan pi on (prior atoms) x (candidates)
with row marginals fixed to the prior weights, so the feasible set is a
product of scaled simplices.  The objective

    f(pi) = 1/2 || S P1# pi - y_d ||^2_{L2(D)} + alpha <C, pi>

is jointly convex; the linear-minimization oracle puts each row's mass on
argmin_j C_ij + p(xi_j)/alpha, which is exactly the support condition of the
continuous optimality system.  Iterates are kept as convex combinations of
oracle vertices; states of vertices are cached so one iteration costs at
most one state and one adjoint solve.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, ShapeMismatchError
from .geometry import Domain, Grid
from .measures import DiscreteMeasure
from .pde import GreenDiskBackend, ScalarField, gradient_field
from .transport import CostMatrix, CostModel, DualPotentials, TransportPlan, c_bar_transform, cost_matrix


@dataclass
class ControlProblem:
    """Data of one control problem instance.

    ``window_mask`` is None for tracking over the whole domain, else a
    boolean node mask defining the observation window D.
    """

    domain: Domain
    grid: Grid
    backend: object
    prior: DiscreteMeasure
    candidates: np.ndarray
    cost_model: CostModel
    C: CostMatrix
    alpha: float
    y_d: ScalarField
    window_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise InvalidParameterError("alpha must be > 0")
        if not self.prior.is_nonnegative:
            raise InvalidParameterError("the prior must be nonnegative")
        if not self.domain.contains(self.candidates).all():
            raise InvalidParameterError("candidates must lie in the closed domain")
        if self.y_d.grid.n_nodes != self.grid.n_nodes:
            raise ShapeMismatchError("desired state lives on another grid")
        if self.window_mask is not None and len(self.window_mask) != self.grid.n_nodes:
            raise ShapeMismatchError("window mask must be a node mask")

    @property
    def objective_kind(self) -> str:
        return "tracking_full" if self.window_mask is None else "tracking_window"

    @property
    def obs_weight(self) -> np.ndarray:
        w = self.grid.quad_weights
        if self.window_mask is None:
            return w
        return w * self.window_mask

    def radius_bound(self) -> float:
        """Radius rho with omega_1 - omega_0 contained in B_rho(0)."""
        return float(self.C.values.max())  # metric distances; safe for profiles too

    def pair_radius(self) -> float:
        from scipy.spatial.distance import cdist

        return float(cdist(self.prior.points, self.candidates).max())


def make_control_problem(domain, grid, backend, prior, candidates, cost_model,
                         alpha, y_d, window_mask=None) -> ControlProblem:
    C = cost_matrix(cost_model, prior.points, candidates)
    return ControlProblem(domain, grid, backend, prior, np.atleast_2d(candidates),
                          cost_model, C, float(alpha), y_d, window_mask)


# ---------------------------------------------------------------------------
# objective / gradient / oracle
# ---------------------------------------------------------------------------

class _StateEngine:
    """Backend-specific state/adjoint evaluations used by the solver."""

    def __init__(self, problem: ControlProblem):
        self.problem = problem
        self.obsw = problem.obs_weight
        self.yd = problem.y_d.values
        be = problem.backend
        if isinstance(be, GreenDiskBackend):
            self._qidx = be._qidx
            self._Gc = be.candidate_state_matrix(problem.candidates)
            self._green = True
        else:
            self._green = False
            self._last_adjoint_field = None

    def state_values(self, colsums: np.ndarray) -> np.ndarray:
        """Nodal state of the measure sum_j colsums_j delta_{xi_j}."""
        be = self.problem.backend
        if self._green:
            values = np.zeros(self.problem.grid.n_nodes)
            values[self._qidx] = self._Gc @ colsums
            return values
        nz = np.flatnonzero(colsums)
        return be.solve_state_points(
            self.problem.candidates[nz], colsums[nz]
        ).values

    def tracking_value(self, y: np.ndarray) -> float:
        r = y - self.yd
        return 0.5 * float(np.sum(self.obsw * r * r))

    def adjoint_at_candidates(self, y: np.ndarray) -> np.ndarray:
        """Exact gradient of the discrete tracking term w.r.t. column masses."""
        r = y - self.yd
        be = self.problem.backend
        if self._green:
            return self._Gc.T @ (self.obsw[self._qidx] * r[self._qidx])
        p_field = be.adjoint_from_residual(r, self.obsw)
        self._last_adjoint_field = p_field
        return p_field.interpolate(self.problem.candidates)

    def adjoint_field(self, y: np.ndarray) -> ScalarField:
        r = y - self.yd
        return self.problem.backend.adjoint_from_residual(r, self.obsw)

    def adjoint_gradient_at_candidates(self, y: np.ndarray) -> np.ndarray:
        be = self.problem.backend
        if self._green:
            r = y - self.yd
            return be.adjoint_grad_at(self.problem.candidates, r, self.obsw)
        return gradient_field(self.adjoint_field(y)).interpolate(self.problem.candidates)


def objective(problem: ControlProblem, plan: TransportPlan) -> float:
    """J(S P1# pi) + alpha <C, pi> for a row-feasible plan."""
    engine = _StateEngine(problem)
    y = engine.state_values(plan.col_sums())
    return engine.tracking_value(y) + problem.alpha * plan.cost_inner(problem.C)


def gradient_wrt_plan(problem: ControlProblem, plan: TransportPlan) -> np.ndarray:
    """Dense gradient matrix alpha*C_ij + p(xi_j) at the plan's state."""
    engine = _StateEngine(problem)
    y = engine.state_values(plan.col_sums())
    p_cand = engine.adjoint_at_candidates(y)
    return problem.alpha * problem.C.values + p_cand[None, :]


def fw_vertex_assignment(gradient: np.ndarray) -> np.ndarray:
    """Row-wise argmin column; ties resolve to the lowest index."""
    return np.argmin(gradient, axis=1)


def fw_vertex(gradient: np.ndarray, u0_weights, source_points=None,
              target_points=None) -> TransportPlan:
    """Linear-minimization oracle vertex: full row mass on the argmin column."""
    u0w = np.asarray(u0_weights, dtype=float)
    cols = fw_vertex_assignment(gradient)
    rows = np.arange(len(u0w))
    if source_points is None:
        source_points = np.zeros((len(u0w), 2))
    if target_points is None:
        target_points = np.zeros((gradient.shape[1], 2))
    return TransportPlan(source_points, u0w, target_points, rows, cols, u0w)


# ---------------------------------------------------------------------------
# fully-corrective weight re-optimization over the collected vertex set
# ---------------------------------------------------------------------------

def _project_simplex(z: np.ndarray) -> np.ndarray:
    # Euclidean projection onto the probability simplex (sort-based)
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, len(z) + 1)
    cond = u - css / ks > 0
    rho = ks[cond][-1]
    theta = css[rho - 1] / rho
    return np.maximum(z - theta, 0.0)


def _corrective_weights(G: np.ndarray, lin: np.ndarray, lam0: np.ndarray,
                        iters: int) -> np.ndarray:
    """Projected gradient for min 1/2 lam' G lam + lin' lam over the simplex."""
    K = len(lam0)
    if K < 2:
        return lam0
    v = np.full(K, 1.0 / np.sqrt(K))
    for _ in range(30):  # power iteration for the Lipschitz constant
        v = G @ v
        nrm = np.linalg.norm(v)
        if nrm == 0:
            return lam0
        v /= nrm
    L = float(v @ (G @ v))
    step = 1.0 / (1.2 * L + 1e-300)

    def val(lam):
        return 0.5 * lam @ (G @ lam) + lin @ lam

    lam = lam0.copy()
    best, best_val = lam0, val(lam0)
    # FISTA-style acceleration with a monotone guard
    zeta = lam.copy()
    tk = 1.0
    for _ in range(iters):
        lam_new = _project_simplex(zeta - step * (G @ zeta + lin))
        tk_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        zeta = lam_new + ((tk - 1.0) / tk_new) * (lam_new - lam)
        lam, tk = lam_new, tk_new
        v_new = val(lam_new)
        if v_new < best_val:
            best, best_val = lam_new, v_new
    return best


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

@dataclass
class SolveReport:
    """Everything a certificate check needs about one solve."""

    problem: ControlProblem
    plan: TransportPlan
    u_bar: DiscreteMeasure
    state: ScalarField
    adjoint: ScalarField
    p_at_candidates: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    phi_argmin: np.ndarray
    grad_p_at_candidates: np.ndarray
    objective_value: float
    fw_gap: float
    converged: bool
    iterations: int
    objective_history: list
    gap_history: list
    wall_time: float
    tol: float
    certificate: dict | None = None
    structure: dict | None = None

    @property
    def duals(self) -> DualPotentials:
        return DualPotentials(phi=self.phi, psi=self.psi)


def _materialize_plan(problem: ControlProblem, vertices, lam) -> TransportPlan:
    """Aggregate the vertex mixture into a sparse plan with exact row sums."""
    m = problem.prior.n_atoms
    n = len(problem.candidates)
    u0w = problem.prior.weights
    keys = np.concatenate([
        np.arange(m, dtype=np.int64) * n + v.astype(np.int64) for v in vertices
    ])
    wts = np.concatenate([lk * u0w for lk in lam])
    uniq, inv = np.unique(keys, return_inverse=True)
    acc = np.zeros(len(uniq))
    np.add.at(acc, inv, wts)
    rows = (uniq // n).astype(int)
    cols = (uniq % n).astype(int)
    # pin each row sum to the prior weight exactly: assign the residual to
    # the row's largest entry (compensates float drift of sum(lam) ~ 1)
    starts = np.searchsorted(rows, np.arange(m))
    ends = np.searchsorted(rows, np.arange(m), side="right")
    for i in range(m):
        s, e = starts[i], ends[i]
        if e <= s:
            continue
        seg = acc[s:e]
        jmax = s + int(np.argmax(seg))
        others = seg.sum() - acc[jmax]
        acc[jmax] = u0w[i] - others
    return TransportPlan(problem.prior.points, u0w, problem.candidates,
                         rows, cols, acc)


def solve_control(problem: ControlProblem, tol: float = 1e-6,
                  max_iter: int = 5000, corrective_every: int = 10,
                  corrective_iters: int = 50,
                  init_assignment: np.ndarray | None = None) -> SolveReport:
    """Frank-Wolfe with exact line search and fully-corrective passes.

    Stops when the FW gap <C*alpha + p, pi - v> falls below
    tol * (1 + |objective|), a certified suboptimality bound for the convex
    reduced problem.
    """
    if tol <= 0:
        raise InvalidParameterError("tol must be > 0")
    t0 = time.perf_counter()
    engine = _StateEngine(problem)
    Cv = problem.C.values
    u0w = problem.prior.weights
    alpha = problem.alpha
    m, n = Cv.shape

    if init_assignment is None:
        init_assignment = fw_vertex_assignment(Cv)
    init_assignment = np.asarray(init_assignment, dtype=int)
    if init_assignment.shape != (m,):
        raise ShapeMismatchError("initial assignment must have one column per row")

    rowind = np.arange(m)

    def vertex_data(assign):
        colsums = np.bincount(assign, weights=u0w, minlength=n)
        y = engine.state_values(colsums)
        cost = float(np.sum(u0w * Cv[rowind, assign]))
        return colsums, y, cost

    vertices = [init_assignment]
    vkeys = {init_assignment.tobytes(): 0}
    cs0, y0, c0 = vertex_data(init_assignment)
    colsums_list = [cs0]
    ys = [y0]
    costs = [c0]
    obsw = engine.obsw
    gram = np.array([[float(np.sum(obsw * y0 * y0))]])
    dvec = np.array([float(np.sum(obsw * y0 * engine.yd))])
    lam = np.array([1.0])

    y = y0.copy()
    colsums = cs0.copy()
    cost_cur = c0
    obj_hist: list = []
    gap_hist: list = []
    converged = False
    iterations = 0
    gap = np.inf
    scores = np.empty_like(Cv)

    for it in range(max_iter):
        iterations = it + 1
        J = engine.tracking_value(y)
        obj = J + alpha * cost_cur
        p_cand = engine.adjoint_at_candidates(y)
        np.add(Cv, (p_cand / alpha)[None, :], out=scores)
        assign_v = np.argmin(scores, axis=1)
        lin_v = float(np.sum(u0w * (alpha * Cv[rowind, assign_v] + p_cand[assign_v])))
        lin_pi = alpha * cost_cur + float(colsums @ p_cand)
        gap = lin_pi - lin_v
        obj_hist.append(obj)
        gap_hist.append(max(gap, 0.0))
        if gap <= tol * (1.0 + abs(obj)):
            converged = True
            break

        key = assign_v.tobytes()
        if key in vkeys:
            kv = vkeys[key]
        else:
            kv = len(vertices)
            vkeys[key] = kv
            cs_v, y_v, c_v = vertex_data(assign_v)
            vertices.append(assign_v)
            colsums_list.append(cs_v)
            ys.append(y_v)
            costs.append(c_v)
            cross = np.array([float(np.sum(obsw * y_v * yk)) for yk in ys])
            G_new = np.zeros((kv + 1, kv + 1))
            G_new[:kv, :kv] = gram
            G_new[kv, :] = cross
            G_new[:, kv] = cross
            gram = G_new
            dvec = np.append(dvec, float(np.sum(obsw * y_v * engine.yd)))
            lam = np.append(lam, 0.0)

        # exact line search along pi + t (v - pi): 1-D quadratic in t
        y_v = ys[kv]
        dy = y_v - y
        b = float(np.sum(obsw * (y - engine.yd) * dy)) + alpha * (costs[kv] - cost_cur)
        c2 = 0.5 * float(np.sum(obsw * dy * dy))
        if c2 > 1e-300:
            t = min(1.0, max(0.0, -b / (2.0 * c2)))
        else:
            t = 1.0 if b < 0 else 0.0
        lam *= 1.0 - t
        lam[kv] += t
        y = (1.0 - t) * y + t * y_v
        colsums = (1.0 - t) * colsums + t * colsums_list[kv]
        cost_cur = (1.0 - t) * cost_cur + t * costs[kv]

        if corrective_every and (it + 1) % corrective_every == 0 and len(lam) > 1:
            lam = _corrective_weights(gram, alpha * np.asarray(costs) - dvec,
                                      lam, corrective_iters)
            keep = lam > 0.0
            if not keep.all():
                lam = lam[keep]
                vertices = [v for v, k in zip(vertices, keep) if k]
                colsums_list = [c for c, k in zip(colsums_list, keep) if k]
                ys = [yk for yk, k in zip(ys, keep) if k]
                costs = [ck for ck, k in zip(costs, keep) if k]
                gram = gram[np.ix_(keep, keep)]
                dvec = dvec[keep]
                vkeys = {v.tobytes(): idx for idx, v in enumerate(vertices)}
            y = np.einsum("k,kn->n", lam, np.asarray(ys))
            colsums = np.einsum("k,kn->n", lam, np.asarray(colsums_list))
            cost_cur = float(lam @ np.asarray(costs))

    plan = _materialize_plan(problem, vertices, lam)
    colsums = plan.col_sums()
    y = engine.state_values(colsums)
    p_field = engine.adjoint_field(y)
    if engine._green:
        p_cand = engine.adjoint_at_candidates(y)
    else:
        p_cand = p_field.interpolate(problem.candidates)
    psi = -p_cand / alpha
    phi, phi_arg = c_bar_transform(psi, problem.cost_model, problem.prior.points,
                                   problem.candidates, C=problem.C)
    grad_p = engine.adjoint_gradient_at_candidates(y)
    state_field = ScalarField(problem.grid, y, dirichlet=True)
    u_bar = plan.target_measure()
    report = SolveReport(
        problem=problem,
        plan=plan,
        u_bar=u_bar,
        state=state_field,
        adjoint=p_field,
        p_at_candidates=p_cand,
        psi=psi,
        phi=phi,
        phi_argmin=phi_arg,
        grad_p_at_candidates=grad_p,
        objective_value=obj_hist[-1] if obj_hist else objective(problem, plan),
        fw_gap=max(gap, 0.0) if np.isfinite(gap) else np.inf,
        converged=converged,
        iterations=iterations,
        objective_history=obj_hist,
        gap_history=gap_hist,
        wall_time=time.perf_counter() - t0,
        tol=tol,
    )
    from . import structure  # deferred: structure consumes reports

    report.certificate = structure.check_optimality(report, tol=None).as_dict()
    return report
