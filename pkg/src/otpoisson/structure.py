"""Certificates for the first-order system and structural diagnostics.

Every check is a pure function of a solve report (or its pieces) and
returns residuals together with the tolerance actually used, in the form
``tol_abs + K * h``: continuum statements are verified up to an explicit
discretization slack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    InvalidParameterError,
    SeparationError,
    WrongModelError,
)
from .geometry import Domain, Grid, build_grid, candidate_points
from .measures import DensityEstimate, DiscreteMeasure, estimate_density, pushforward
from .pde import (
    FDPoissonBackend,
    GreenDiskBackend,
    ScalarField,
    gradient_field,
    make_backend,
)
from .transport import CostMatrix, CostModel, TransportPlan
from .control import ControlProblem, SolveReport, make_control_problem


@dataclass
class CheckResult:
    name: str
    residual: float
    tol_abs: float
    slack_K: float
    h: float

    @property
    def tol(self) -> float:
        return self.tol_abs + self.slack_K * self.h

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "residual": float(self.residual),
            "tol_abs": float(self.tol_abs),
            "slack_K": float(self.slack_K),
            "h": float(self.h),
            "tol": float(self.tol),
            "passed": bool(self.passed),
        }


@dataclass
class CertificateReport:
    """Dual feasibility, support inclusion, transport duality gap, FW gap."""

    dual_feasibility: CheckResult
    support_inclusion: CheckResult
    ot_gap: CheckResult
    fw_gap: CheckResult

    @property
    def passed(self) -> bool:
        return (self.dual_feasibility.passed and self.support_inclusion.passed
                and self.ot_gap.passed and self.fw_gap.passed)

    def as_dict(self) -> dict:
        return {
            "dual_feasibility": self.dual_feasibility.as_dict(),
            "support_inclusion": self.support_inclusion.as_dict(),
            "ot_gap": self.ot_gap.as_dict(),
            "fw_gap": self.fw_gap.as_dict(),
            "passed": bool(self.passed),
        }


def check_optimality(report: SolveReport, tol: float | None = None) -> CertificateReport:
    """Verify that (psi^cbar, -p/alpha) certifies the computed plan.

    Residuals: (i) max phi_i + psi_j - C_ij (feasibility of the dual pair),
    (ii) <C, pi> - <phi, u0> - <psi, u_bar> (strong duality on the transport
    subproblem), (iii) the final FW gap.
    """
    problem = report.problem
    C = problem.C
    h = problem.grid.h
    feas = report.duals.feasibility_residual(C)
    ot_gap = (report.plan.cost_inner(C)
              - report.duals.dual_value(report.plan.row_sums(),
                                        report.plan.col_sums()))
    scale = 1.0 + abs(report.objective_value)
    if tol is None:
        tol = 1e-6
    supp = check_support_inclusion(report.plan, report.p_at_candidates,
                                   problem.alpha, C, tol=tol + 5 * h,
                                   mass_tol=1e-6)
    return CertificateReport(
        dual_feasibility=CheckResult("dual_feasibility", feas,
                                     1e-9 * (1.0 + float(np.abs(C.values).max())),
                                     0.0, h),
        support_inclusion=supp,
        ot_gap=CheckResult("ot_gap", ot_gap,
                           max(tol, report.tol * scale / problem.alpha), 5.0, h),
        fw_gap=CheckResult("fw_gap", report.fw_gap,
                           report.tol * scale, 0.0, h),
    )


def check_support_inclusion(plan: TransportPlan, p_on_candidates: np.ndarray,
                            alpha: float, C: CostMatrix,
                            tol: float, mass_tol: float = 1e-12) -> CheckResult:
    """Support condition: every positive plan entry sits in the row argmin of
    c(x_i, .) + p/alpha."""
    scores = C.values + (p_on_candidates / alpha)[None, :]
    rowmin = scores.min(axis=1)
    rows, cols, vals = plan.support(mass_tol * max(plan.vals.sum(), 1.0))
    residual = 0.0
    if len(rows):
        residual = float(np.max(scores[rows, cols] - rowmin[rows]))
    # tolerance purely absolute: the discrete argmin has no h gap
    return CheckResult("support_inclusion", residual, tol, 0.0, 0.0)


@dataclass
class RayReport:
    """Transport-ray geometry and gradient complementarity (metric cost)."""

    grad_norm_excess: float     # max over active columns of |grad p| - alpha
    collinearity: float         # max distance of sources to their target ray
    active_gradient_gap: float  # max | |grad p| - alpha | where mass moved
    n_active_columns: int
    n_transport_entries: int
    tol: float

    @property
    def passed(self) -> bool:
        return (self.grad_norm_excess <= self.tol
                and self.collinearity <= self.tol
                and self.active_gradient_gap <= self.tol)

    def as_dict(self) -> dict:
        return {
            "grad_norm_excess": float(self.grad_norm_excess),
            "collinearity": float(self.collinearity),
            "active_gradient_gap": float(self.active_gradient_gap),
            "n_active_columns": int(self.n_active_columns),
            "n_transport_entries": int(self.n_transport_entries),
            "tol": float(self.tol),
            "passed": bool(self.passed),
        }


def check_transport_rays(plan: TransportPlan, grad_p_targets: np.ndarray,
                         alpha: float, tol: float, model: CostModel | None = None,
                         mass_tol: float = 1e-10,
                         min_transport_dist: float = 0.0) -> RayReport:
    """Rays [xi, xi + r grad p(xi)] must carry the mass arriving at xi.

    For each target with positive column mass: (a) |grad p| <= alpha;
    (b) each source of that column lies on the ray through grad p(xi);
    (c) if mass arrives from x != xi then |grad p(xi)| = alpha.
    """
    if model is not None and model.kind != "metric":
        raise WrongModelError("transport rays require the metric cost model")
    total = max(plan.vals.sum(), 1.0)
    rows, cols, vals = plan.support(mass_tol * total)
    colmass = plan.col_sums()
    active = np.flatnonzero(colmass > mass_tol * total)
    gnorm = np.linalg.norm(grad_p_targets, axis=1)
    excess = float(np.max(gnorm[active] - alpha)) if len(active) else 0.0

    src = plan.source_points[rows]
    tgt = plan.target_points[cols]
    disp = src - tgt
    dist = np.linalg.norm(disp, axis=1)
    moved = dist > max(min_transport_dist, 1e-12)
    collin = 0.0
    act_gap = 0.0
    if moved.any():
        g = grad_p_targets[cols[moved]]
        gn = np.linalg.norm(g, axis=1)
        unit = np.zeros_like(g)
        ok = gn > 1e-14
        unit[ok] = g[ok] / gn[ok, None]
        # x - xi should equal |x - xi| * grad p / alpha; compare to the unit ray
        perp = disp[moved] - dist[moved, None] * unit
        collin = float(np.max(np.linalg.norm(perp, axis=1)))
        act_gap = float(np.max(np.abs(gn - alpha)))
    return RayReport(
        grad_norm_excess=excess,
        collinearity=collin,
        active_gradient_gap=act_gap,
        n_active_columns=len(active),
        n_transport_entries=int(moved.sum()),
        tol=tol,
    )


@dataclass
class CurvatureReport:
    kappa_hat: float
    beta: float
    alpha: float
    verdict: bool

    def as_dict(self) -> dict:
        return {"kappa_hat": float(self.kappa_hat), "beta": float(self.beta),
                "alpha": float(self.alpha), "verdict": bool(self.verdict)}


def check_curvature(grad_p_at, candidates: np.ndarray, model: CostModel,
                    alpha: float, radius: float | None = None,
                    max_pairs: int = 1_000_000, seed: int = 42) -> CurvatureReport:
    """Estimate kappa = max -(grad p(xi)-grad p(zeta)).(xi-zeta)/|xi-zeta|^2
    and compare against alpha * beta (beta = strong-convexity modulus).

    ``grad_p_at`` is either an (n,2) array of gradients at the candidates or
    a ScalarField whose gradient is then formed by central differences.
    """
    if model.kind not in ("power", "quadratic"):
        raise WrongModelError("curvature check requires power or quadratic cost")
    pts = np.atleast_2d(candidates)
    if isinstance(grad_p_at, ScalarField):
        grads = gradient_field(grad_p_at).interpolate(pts)
    else:
        grads = np.asarray(grad_p_at, dtype=float)
    n = len(pts)
    kappa = 0.0
    if n >= 2:
        if n * (n - 1) // 2 <= max_pairs and n <= 2000:
            for lo in range(0, n - 1):  # chunk rows of the pair triangle
                dxi = pts[lo + 1:] - pts[lo]
                dg = grads[lo + 1:] - grads[lo]
                d2 = (dxi ** 2).sum(axis=1)
                ok = d2 > 1e-24
                if ok.any():
                    vals = -(dg[ok] * dxi[ok]).sum(axis=1) / d2[ok]
                    kappa = max(kappa, float(vals.max()))
        else:
            rng = np.random.default_rng(seed)
            ii = rng.integers(0, n, size=max_pairs)
            jj = rng.integers(0, n, size=max_pairs)
            keep = ii != jj
            dxi = pts[ii[keep]] - pts[jj[keep]]
            dg = grads[ii[keep]] - grads[jj[keep]]
            d2 = (dxi ** 2).sum(axis=1)
            vals = -(dg * dxi).sum(axis=1) / d2
            kappa = float(vals.max())
    if radius is None:
        radius = float(np.sqrt(((pts.max(axis=0) - pts.min(axis=0)) ** 2).sum()))
    beta = model.strong_convexity(radius)
    return CurvatureReport(kappa, beta, alpha, kappa < alpha * beta)


@dataclass
class MapExtraction:
    success: bool
    assignment: np.ndarray | None
    worst_row: int
    worst_secondary_fraction: float
    pushforward_error: float
    holder_dx: np.ndarray | None = None
    holder_dT: np.ndarray | None = None
    holder_margin: float | None = None  # min of 2 Lip(h) dx - (beta-kappa/alpha) dT^2

    def as_dict(self) -> dict:
        return {
            "success": bool(self.success),
            "worst_row": int(self.worst_row),
            "worst_secondary_fraction": float(self.worst_secondary_fraction),
            "pushforward_error": float(self.pushforward_error),
            "holder_margin": None if self.holder_margin is None else float(self.holder_margin),
        }


def extract_transport_map(plan: TransportPlan, tol: float = 1e-6,
                          model: CostModel | None = None,
                          alpha: float | None = None,
                          kappa_hat: float | None = None) -> MapExtraction:
    """Read a transport map off a plan whose rows are single-entry up to tol.

    On success the map satisfies pushforward(T, u0) = u_bar within tol and,
    when (model, alpha, kappa_hat) are supplied, the sensitivity inequality
    (beta - kappa/alpha) |T(x1)-T(x2)|^2 <= 2 Lip(h) |x1-x2| over row pairs.
    """
    m = plan.n_sources
    u0w = plan.source_weights
    best = np.zeros(m)
    best_col = -np.ones(m, dtype=int)
    rowmass = np.zeros(m)
    for i, j, w in zip(plan.rows, plan.cols, plan.vals):
        rowmass[i] += w
        if w > best[i]:
            best[i] = w
            best_col[i] = j
    secondary = np.zeros(m)
    pos = rowmass > 0
    secondary[pos] = (rowmass[pos] - best[pos]) / rowmass[pos]
    worst = int(np.argmax(secondary)) if m else 0
    if m == 0 or secondary.max(initial=0.0) > tol or (best_col < 0).any():
        return MapExtraction(False, None, worst, float(secondary.max(initial=0.0)), np.inf)

    images = plan.target_points[best_col]
    pf = DiscreteMeasure(images, u0w)
    ub = plan.target_measure()
    # total-variation error between the pushforward and the column marginal
    table: dict = {}
    for p, w in zip(pf.points, pf.weights):
        table[(p[0], p[1])] = table.get((p[0], p[1]), 0.0) + w
    for p, w in zip(ub.points, ub.weights):
        table[(p[0], p[1])] = table.get((p[0], p[1]), 0.0) - w
    pf_err = float(sum(abs(v) for v in table.values()))
    if pf_err > tol * max(1.0, u0w.sum()):
        return MapExtraction(False, best_col, worst, float(secondary.max()), pf_err)

    result = MapExtraction(True, best_col, worst, float(secondary.max()), pf_err)
    if model is not None and alpha is not None and kappa_hat is not None and m >= 2:
        iu, ju = np.triu_indices(m, k=1)
        dx = np.linalg.norm(plan.source_points[iu] - plan.source_points[ju], axis=1)
        dT = np.linalg.norm(images[iu] - images[ju], axis=1)
        R = float(cdist(plan.source_points, plan.target_points).max())
        beta = model.strong_convexity(R)
        lip = model.lipschitz(R)
        margin = 2.0 * lip * dx - (beta - kappa_hat / alpha) * dT ** 2
        result.holder_dx = dx
        result.holder_dT = dT
        result.holder_margin = float(margin.min()) if len(margin) else 0.0
    return result


@dataclass
class DensityBoundReport:
    max_violation: float
    worst_node: int
    n_nodes_checked: int
    gamma: float

    def as_dict(self) -> dict:
        return {"max_violation": float(self.max_violation),
                "worst_node": int(self.worst_node),
                "n_nodes_checked": int(self.n_nodes_checked),
                "gamma": float(self.gamma)}


def check_density_bound(plan, p_field: ScalarField, gamma: float,
                        U0: DensityEstimate, grid: Grid, alpha: float,
                        margin_nodes: np.ndarray | None = None) -> DensityBoundReport:
    """Pointwise density bound for power costs with an absolutely continuous
    prior: density(u_bar) <= (U0 o T)|det DT| with the backtracing map
    T(xi) = xi - |grad psi|^{(2-gamma)/(gamma-1)} grad psi, psi = -p/alpha.

    ``plan`` may be a TransportPlan or directly the transported measure.
    """
    if not (1.0 < gamma <= 2.0):
        raise InvalidParameterError("gamma must be in (1,2]")
    psi = ScalarField(grid, -p_field.values / alpha)
    gpsi = gradient_field(psi)
    gx, gy = gpsi.gx, gpsi.gy
    norm = np.hypot(gx, gy)
    expo = (2.0 - gamma) / (gamma - 1.0)
    factor = np.ones_like(norm) if expo == 0.0 else norm ** expo
    Tx = grid.nodes[:, 0] - factor * gx
    Ty = grid.nodes[:, 1] - factor * gy
    dTx = gradient_field(ScalarField(grid, Tx))
    dTy = gradient_field(ScalarField(grid, Ty))
    det = dTx.gx * dTy.gy - dTx.gy * dTy.gx

    if margin_nodes is None:
        inner = grid.interior_mask & (grid.domain.boundary_distance(grid.nodes)
                                      > 2.0 * grid.h)
        margin_nodes = np.flatnonzero(inner)
    u_bar = plan.target_measure() if isinstance(plan, TransportPlan) else plan
    ubar_density = estimate_density(u_bar, grid).values

    # The histogram density is a cell average, so the right-hand side is
    # averaged over the same cell: (U0 o T)|det DT| sampled on a subgrid of
    # each cell, with U0 looked up at its nearest node (cell resolution).
    # Pointwise evaluation would compare two differently smeared edge
    # profiles of U0 and stall at an O(1) mismatch under refinement.
    h = grid.h
    xmin, ymin = grid.origin
    xmax = xmin + (grid.nx - 1) * h
    ymax = ymin + (grid.ny - 1) * h
    Tx_f = ScalarField(grid, Tx)
    Ty_f = ScalarField(grid, Ty)
    det_f = ScalarField(grid, det)
    subs = 4
    s = (np.arange(subs) + 0.5) / subs - 0.5
    sx, sy = np.meshgrid(s * h, s * h, indexing="ij")
    offsets = np.stack([sx.ravel(), sy.ravel()], axis=1)
    bound = np.zeros(len(margin_nodes))
    u0_min = np.full(len(margin_nodes), np.inf)
    u0_max = np.full(len(margin_nodes), -np.inf)
    base = grid.nodes[margin_nodes]
    for off in offsets:
        pts = np.clip(base + off, [xmin, ymin], [xmax, ymax])
        tp = np.stack([Tx_f.interpolate(pts), Ty_f.interpolate(pts)], axis=1)
        tp = np.clip(tp, [xmin, ymin], [xmax, ymax])
        ix, iy, fx, fy = grid.cell_of(tp)
        ix = ix + (np.clip(fx, 0, 1) > 0.5)
        iy = iy + (np.clip(fy, 0, 1) > 0.5)
        u0_nn = U0.values[grid.node_index(ix, iy)]
        u0_min = np.minimum(u0_min, u0_nn)
        u0_max = np.maximum(u0_max, u0_nn)
        bound += u0_nn * np.abs(det_f.interpolate(pts))
    bound /= len(offsets)
    # cells whose backtrace straddles a jump of U0 cannot be compared at
    # cell resolution (a.e. statement; the jump set has measure zero and
    # the excluded band shrinks with h)
    resolved = u0_max - u0_min <= 0.25 * (u0_max + 1e-30)
    gapv = np.where(resolved, ubar_density[margin_nodes] - bound, -np.inf)
    worst = int(np.argmax(gapv))
    return DensityBoundReport(
        max_violation=float(max(gapv[worst], 0.0)),
        worst_node=int(margin_nodes[worst]),
        n_nodes_checked=int(resolved.sum()),
        gamma=gamma,
    )


@dataclass
class StateBoundReport:
    support_margin: float   # min over supp(u_bar) of y_d + alpha sup|Dc| - y
    global_margin: float    # ||y_d|| + alpha sup|Dc| - ||y||
    laplacian_sup: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.support_margin >= -self.tol and self.global_margin >= -self.tol

    def as_dict(self) -> dict:
        return {"support_margin": float(self.support_margin),
                "global_margin": float(self.global_margin),
                "laplacian_sup": float(self.laplacian_sup),
                "tol": float(self.tol), "passed": bool(self.passed)}


def check_state_bounds(report: SolveReport, problem: ControlProblem,
                       tol_abs: float = 1e-9, slack_K: float = 10.0) -> StateBoundReport:
    """State bound y <= y_d + alpha sup|Laplacian c| on supp(u_bar), and its
    global sup-norm consequence (tracking over the full domain)."""
    if problem.objective_kind != "tracking_full":
        raise InvalidParameterError("state bounds require full-domain tracking")
    try:
        lap = problem.cost_model.laplacian_sup()
    except InvalidParameterError as exc:
        raise WrongModelError(str(exc)) from None
    h = problem.grid.h
    tol = tol_abs + slack_K * h
    ub = report.u_bar
    interior = problem.domain.contains(ub.points, strict=True)
    support_margin = np.inf
    if interior.any():
        pts = ub.points[interior]
        yvals = report.state.interpolate(pts)
        ydvals = problem.y_d.interpolate(pts)
        support_margin = float(np.min(ydvals + problem.alpha * lap - yvals))
    global_margin = (problem.y_d.norm_inf() + problem.alpha * lap
                     - report.state.norm_inf())
    return StateBoundReport(support_margin, float(global_margin), lap, tol)


@dataclass
class SparsityThreshold:
    alpha_bound: float
    alpha: float
    predicted: bool
    S_norm: float
    separation: float
    yd_norm: float

    def as_dict(self) -> dict:
        return {"alpha_bound": float(self.alpha_bound), "alpha": float(self.alpha),
                "predicted": bool(self.predicted), "S_norm": float(self.S_norm),
                "separation": float(self.separation), "yd_norm": float(self.yd_norm)}


def sparsity_threshold(problem: ControlProblem) -> SparsityThreshold:
    """Computable no-transport threshold for metric cost and a separated
    observation window:

        alpha > 4 d^2 |S| / r^2 * (|y_d|_{L2(D)} + |S| mass(u0)),  d = 2,

    with r = dist(candidates, boundary of (domain minus window)) and |S| the
    norm of the control-to-observation map, realized as the largest L2(D)
    norm over candidate Dirac states (the extreme points of the mass ball).
    """
    if problem.cost_model.kind != "metric":
        raise WrongModelError("the sparsity threshold applies to metric cost")
    if problem.window_mask is None:
        raise InvalidParameterError("the sparsity threshold needs a window objective")
    grid = problem.grid
    obs_nodes = grid.nodes[problem.window_mask & (grid.quad_weights > 0)]
    if len(obs_nodes) == 0:
        raise InvalidParameterError("empty observation window")
    d_window = cdist(problem.candidates, obs_nodes).min()
    if d_window <= 0:
        raise SeparationError("observation window touches the candidate set")
    d_boundary = problem.domain.boundary_distance(problem.candidates).min()
    r = float(min(d_window, d_boundary))

    obsw = problem.obs_weight
    be = problem.backend
    if isinstance(be, GreenDiskBackend):
        Gc = be.candidate_state_matrix(problem.candidates)
        wq = obsw[be._qidx]
        norms = np.sqrt(np.einsum("ij,i->j", Gc ** 2, wq))
        S_norm = float(norms.max())
    else:
        S_norm = 0.0
        for xi in problem.candidates:
            y = be.solve_state_points(xi[None, :], np.array([1.0])).values
            S_norm = max(S_norm, float(np.sqrt(np.sum(obsw * y * y))))
    yd_norm = float(np.sqrt(np.sum(obsw * problem.y_d.values ** 2)))
    bound = (16.0 * S_norm / r ** 2) * (yd_norm + S_norm * problem.prior.total_mass)
    return SparsityThreshold(bound, problem.alpha, problem.alpha > bound,
                             S_norm, r, yd_norm)


# ---------------------------------------------------------------------------
# worked examples
# ---------------------------------------------------------------------------

@dataclass
class AnnulusReference:
    """Closed-form optimum of the ring benchmark on the unit disk.

    The prior is Lebesgue measure on the annulus B_1 minus B_1/2; the optimal
    control is the uniform line measure of mass 3 pi / 4 on the circle of
    radius 1/2; the adjoint is p(xi) = |xi|^2 - 1, and each source x with
    |x| >= 1/2 is transported to x / (2 |x|) along the radial ray.
    """

    ring_radius: float
    mass: float
    u_ref: DiscreteMeasure
    state_ref: ScalarField

    @staticmethod
    def p(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return (pts ** 2).sum(axis=1) - 1.0

    @staticmethod
    def psi(points: np.ndarray) -> np.ndarray:
        return -AnnulusReference.p(points)

    @staticmethod
    def phi(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        r = np.linalg.norm(pts, axis=1)
        return np.where(r < 0.5, r ** 2 - 1.0, r - 1.25)

    @staticmethod
    def target_map(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        r = np.linalg.norm(pts, axis=1)
        out = pts.copy()
        far = r >= 0.5
        out[far] = pts[far] / (2.0 * r[far, None])
        return out


def _cell_areas_in_ball(nodes: np.ndarray, h: float, radius: float,
                        subs: int = 8) -> np.ndarray:
    r = np.linalg.norm(nodes, axis=1)
    half_diag = h * np.sqrt(2.0) / 2.0
    areas = np.zeros(len(nodes))
    areas[r + half_diag <= radius] = h * h
    cut = (r + half_diag > radius) & (r - half_diag < radius)
    if np.any(cut):
        s = (np.arange(subs) + 0.5) / subs - 0.5
        sx, sy = np.meshgrid(s * h, s * h, indexing="ij")
        sub = np.stack([sx.ravel(), sy.ravel()], axis=1)
        pts = nodes[cut][:, None, :] + sub[None, :, :]
        inside = (pts ** 2).sum(axis=2) <= radius ** 2
        areas[cut] = h * h * inside.mean(axis=1)
    return areas


def build_annulus_example(h: float, alpha: float = 1.0,
                          backend_kind: str = "green_disk"):
    """Ring benchmark: disk domain, metric cost, engineered desired state.

    Returns (ControlProblem, AnnulusReference).  The prior discretizes
    Lebesgue measure restricted to the annulus with total mass normalized to
    exactly 3 pi / 4; y_d = S(u_ref) + 4 realizes the adjoint p = |xi|^2 - 1
    (the Laplacian of p is the constant 4).
    """
    domain = Domain("unit_disk")
    grid = build_grid(domain, h)
    backend = make_backend(backend_kind, grid)

    outer = _cell_areas_in_ball(grid.nodes, h, 1.0)
    inner = _cell_areas_in_ball(grid.nodes, h, 0.5)
    w = np.maximum(outer - inner, 0.0)
    keep = w > 0
    mass = 0.75 * np.pi
    weights = w[keep] * (mass / w[keep].sum())
    prior = DiscreteMeasure(grid.nodes[keep], weights)

    n_ring = max(64, int(np.ceil(2.0 * np.pi / h)))
    angles = 2.0 * np.pi * np.arange(n_ring) / n_ring
    ring_pts = 0.5 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    u_ref = DiscreteMeasure(ring_pts, np.full(n_ring, mass / n_ring))

    state_ref = backend.solve_state(u_ref)
    yd_values = state_ref.values + 4.0 * (grid.quad_weights > 0)
    y_d = ScalarField(grid, yd_values)

    candidates = candidate_points(domain, "full", h)
    problem = make_control_problem(
        domain, grid, backend, prior, candidates,
        CostModel("metric"), alpha, y_d, window_mask=None,
    )
    reference = AnnulusReference(ring_radius=0.5, mass=mass, u_ref=u_ref,
                                 state_ref=state_ref)
    return problem, reference


def build_density_bound_study(h: float, amplitude: float = 0.01,
                              alpha: float = 1.0, gamma: float = 2.0,
                              patch=(0.3, 0.5, 0.4, 0.6), subs: int = 4):
    """Constructed transport for the density-bound refinement study.

    Uses the analytic dual potential psi = A sin(2 pi x) sin(2 pi y), whose
    backtracing map T(xi) = xi - grad psi(xi) is a diffeomorphism for small
    A.  The transported measure is the exact image of the uniform patch
    prior: each cell weight integrates (U0 o T)|det DT| by subsampling, so
    any violation of the pointwise bound is pure discretization error of the
    checking pipeline (density histogram, FD Jacobian, interpolated U0) and
    decays at first order in h.

    Returns (u_bar, p_field, U0_estimate, grid, margin_nodes, prior).
    """
    domain = Domain("unit_square")
    grid = build_grid(domain, h)
    x0, x1, y0, y1 = patch

    def psi_grad(pts):
        two_pi = 2.0 * np.pi
        gx = amplitude * two_pi * np.cos(two_pi * pts[:, 0]) * np.sin(two_pi * pts[:, 1])
        gy = amplitude * two_pi * np.sin(two_pi * pts[:, 0]) * np.cos(two_pi * pts[:, 1])
        return np.stack([gx, gy], axis=1)

    def psi_hessian(pts):
        two_pi = 2.0 * np.pi
        s = amplitude * two_pi ** 2
        hxx = -s * np.sin(two_pi * pts[:, 0]) * np.sin(two_pi * pts[:, 1])
        hxy = s * np.cos(two_pi * pts[:, 0]) * np.cos(two_pi * pts[:, 1])
        return hxx, hxy, hxx  # hyy = hxx for this profile

    # prior: uniform density 1 on the patch, cell-clipped weights
    ox = np.minimum(grid.nodes[:, 0] + h / 2, x1) - np.maximum(grid.nodes[:, 0] - h / 2, x0)
    oy = np.minimum(grid.nodes[:, 1] + h / 2, y1) - np.maximum(grid.nodes[:, 1] - h / 2, y0)
    w = np.maximum(ox, 0.0) * np.maximum(oy, 0.0)
    keep = w > 0
    prior = DiscreteMeasure(grid.nodes[keep], w[keep])
    U0 = estimate_density(prior, grid)

    # exact image measure: per-cell integral of (U0 o T)|det DT|
    s = (np.arange(subs) + 0.5) / subs - 0.5
    sx, sy = np.meshgrid(s * h, s * h, indexing="ij")
    offsets = np.stack([sx.ravel(), sy.ravel()], axis=1)
    weights = np.zeros(grid.n_nodes)
    expo = (2.0 - gamma) / (gamma - 1.0)
    for off in offsets:
        pts = grid.nodes + off
        gpsi = psi_grad(pts)
        norm = np.linalg.norm(gpsi, axis=1)
        factor = np.ones_like(norm) if expo == 0.0 else norm ** expo
        back = pts - factor[:, None] * gpsi
        hxx, hxy, hyy = psi_hessian(pts)
        if gamma == 2.0:
            det = np.abs((1.0 - hxx) * (1.0 - hyy) - hxy * hxy)
        else:  # generic gamma: finite-difference the analytic backtrace
            eps = 1e-6
            bxp = _backtrace(pts + [eps, 0], psi_grad, expo)
            bxm = _backtrace(pts - [eps, 0], psi_grad, expo)
            byp = _backtrace(pts + [0, eps], psi_grad, expo)
            bym = _backtrace(pts - [0, eps], psi_grad, expo)
            jxx = (bxp[:, 0] - bxm[:, 0]) / (2 * eps)
            jxy = (byp[:, 0] - bym[:, 0]) / (2 * eps)
            jyx = (bxp[:, 1] - bxm[:, 1]) / (2 * eps)
            jyy = (byp[:, 1] - bym[:, 1]) / (2 * eps)
            det = np.abs(jxx * jyy - jxy * jyx)
        inside = ((back[:, 0] >= x0) & (back[:, 0] <= x1)
                  & (back[:, 1] >= y0) & (back[:, 1] <= y1))
        weights += inside * det * (h * h / subs ** 2)
    keep = weights > 0
    u_bar = DiscreteMeasure(grid.nodes[keep], weights[keep])

    p_field = ScalarField(
        grid,
        -alpha * amplitude * np.sin(2 * np.pi * grid.nodes[:, 0])
        * np.sin(2 * np.pi * grid.nodes[:, 1]),
    )
    inner = grid.interior_mask & (grid.domain.boundary_distance(grid.nodes) > 2 * h)
    margin_nodes = np.flatnonzero(inner)
    return u_bar, p_field, U0, grid, margin_nodes, prior


def _backtrace(pts, psi_grad, expo):
    gpsi = psi_grad(pts)
    norm = np.linalg.norm(gpsi, axis=1)
    factor = np.ones_like(norm) if expo == 0.0 else norm ** expo
    return pts - factor[:, None] * gpsi


def build_sparsity_example(h: float = 0.1, alpha_factor: float = 2.0,
                           yd_value: float = 0.5):
    """No-transport benchmark: square domain, metric cost, candidate box on
    the left, observation window on the right (separation >= 0.3), and
    alpha set to ``alpha_factor`` times the computable threshold."""
    domain = Domain("unit_square")
    grid = build_grid(domain, h)
    backend = FDPoissonBackend(grid)
    candidates = candidate_points(domain, ("subgrid", (0.1, 0.3, 0.1, 0.9)), h)
    window = ((grid.nodes[:, 0] >= 0.65) & (grid.nodes[:, 0] <= 0.9)
              & (grid.nodes[:, 1] >= 0.1) & (grid.nodes[:, 1] <= 0.9))
    y_d = ScalarField(grid, np.full(grid.n_nodes, yd_value))
    sel = [len(candidates) // 5, len(candidates) // 2, (4 * len(candidates)) // 5]
    prior = DiscreteMeasure(candidates[sel], [1.0, 0.7, 0.4])
    probe = make_control_problem(domain, grid, backend, prior, candidates,
                                 CostModel("metric"), 1.0, y_d, window_mask=window)
    thresh = sparsity_threshold(probe)
    alpha = alpha_factor * thresh.alpha_bound
    problem = make_control_problem(domain, grid, backend, prior, candidates,
                                   CostModel("metric"), alpha, y_d,
                                   window_mask=window)
    return problem, sparsity_threshold(problem)


def discrete_lipschitz(values: np.ndarray, points: np.ndarray) -> float:
    """Largest difference quotient |f(x)-f(y)| / |x-y| over point pairs.

    Reported for psi = -p/alpha as information only: values below 1 mean the
    dual potential is c-concave for the metric cost, but optimal adjoints
    need not be (the ring benchmark is the standard counterexample).
    """
    pts = np.atleast_2d(points)
    vals = np.asarray(values, dtype=float)
    best = 0.0
    for lo in range(len(pts) - 1):
        d = np.linalg.norm(pts[lo + 1:] - pts[lo], axis=1)
        ok = d > 1e-14
        if ok.any():
            q = np.abs(vals[lo + 1:][ok] - vals[lo]) / d[ok]
            best = max(best, float(q.max()))
    return best


def ring_band_mass_fraction(u_bar: DiscreteMeasure, radius: float,
                            band: float) -> float:
    """Fraction of mass with | |x| - radius | <= band (annulus diagnostics)."""
    r = np.linalg.norm(u_bar.points, axis=1)
    sel = np.abs(r - radius) <= band
    total = u_bar.total_mass
    return float(u_bar.weights[sel].sum() / total) if total > 0 else 0.0
