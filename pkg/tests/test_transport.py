import itertools

import numpy as np
import pytest

from otpoisson import (
    CostMatrix,
    CostModel,
    DiscreteMeasure,
    InvalidParameterError,
    MassMismatchError,
    TransportPlan,
    c_bar_transform,
    cost_matrix,
    duality_gap,
    eval_F,
    eval_transport_distance,
    solve_kantorovich_exact,
    solve_sinkhorn,
)


def brute_force_ot_value(a, b, Cv):
    """Enumerate basic solutions of the transportation LP (oracle).

    Bases are (m+n-1)-subsets of cells; flows solve the marginal equations
    restricted to the basis (one redundant constraint dropped).
    """
    m, n = Cv.shape
    k = m + n - 1
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    d = np.concatenate([a, b])
    best = np.inf
    subsets = np.array(list(itertools.combinations(range(m * n), k)))
    mats = A[:-1][:, subsets.T].transpose(2, 0, 1)  # (K, m+n-1, k)
    dets = np.abs(np.linalg.det(mats))
    ok = dets > 1e-10
    if ok.any():
        rhs = np.tile(d[:-1], (int(ok.sum()), 1))[:, :, None]
        sols = np.linalg.solve(mats[ok], rhs)[:, :, 0]
        last = A[-1][subsets[ok]]
        consistent = np.abs((sols * last).sum(axis=1) - d[-1]) <= 1e-9 * (1 + abs(d[-1]))
        feasible = (sols >= -1e-9).all(axis=1) & consistent
        if feasible.any():
            costs = (sols[feasible] * Cv.ravel()[subsets[ok][feasible]]).sum(axis=1)
            best = float(costs.min())
    return best


def make_C(rng, m, n):
    return CostMatrix(rng.random((m, 2)), rng.random((n, 2)), rng.random((m, n)))


# -- cost models ------------------------------------------------------------

def test_metric_zero_diagonal():
    pts = np.random.default_rng(0).random((4, 2))
    C = cost_matrix(CostModel("metric"), pts, pts)
    assert np.allclose(np.diag(C.values), 0.0)


def test_quadratic_example():
    C = cost_matrix(CostModel("quadratic"), [[0.0, 0.0]], [[1.0, 1.0]])
    assert C.values[0, 0] == pytest.approx(1.0)


def test_power_example():
    C = cost_matrix(CostModel("power", gamma=1.5), [[0.0, 0.0]], [[1.0, 0.0]])
    assert C.values[0, 0] == pytest.approx(1 / 1.5)


def test_power_gamma_validation():
    with pytest.raises(InvalidParameterError):
        CostModel("power", gamma=2.5)
    with pytest.raises(InvalidParameterError):
        CostModel("power", gamma=1.0)


def test_radial_profile():
    model = CostModel("radial", radial_fn=lambda r: r**1.2, label="r12")
    C = cost_matrix(model, [[0.0, 0.0]], [[2.0, 0.0]])
    assert C.values[0, 0] == pytest.approx(2.0**1.2)


# -- c-bar transform --------------------------------------------------------

def test_cbar_zero_psi():
    rng = np.random.default_rng(1)
    X, Xi = rng.random((6, 2)), rng.random((9, 2))
    model = CostModel("metric")
    vals, arg = c_bar_transform(np.zeros(9), model, X, Xi)
    C = model.pairwise(X, Xi)
    assert np.allclose(vals, C.min(axis=1))
    assert (arg == C.argmin(axis=1)).all()


def test_cbar_involution_small_lipschitz():
    # psi = (kappa/alpha)(|x| - 1) with kappa/alpha < 1 on a shared grid
    rng = np.random.default_rng(2)
    pts = rng.random((40, 2)) * 2 - 1
    psi = 0.7 * (np.linalg.norm(pts, axis=1) - 1.0)
    vals, _ = c_bar_transform(psi, CostModel("metric"), pts, pts)
    assert np.abs(vals + psi).max() <= 1e-12


def test_cbar_annulus_piecewise_formula():
    # psi = 1 - |xi|^2 on disk candidates: the conjugate is p inside r < 1/2
    # and |x| - 5/4 outside, up to the candidate-grid fill distance
    h = 0.02
    xs = np.arange(-1, 1 + h / 2, h)
    pts = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)
    pts = pts[np.linalg.norm(pts, axis=1) <= 1.0]
    psi = 1.0 - (pts**2).sum(axis=1)
    X = pts[:: 7]
    vals, _ = c_bar_transform(psi, CostModel("metric"), X, pts)
    r = np.linalg.norm(X, axis=1)
    ref = np.where(r < 0.5, r**2 - 1.0, r - 1.25)
    assert np.abs(vals - ref).max() <= 3 * h


def test_cbar_nonexpansive_and_order_reversal():
    rng = np.random.default_rng(3)
    X, Xi = rng.random((8, 2)), rng.random((12, 2))
    model = CostModel("quadratic")
    C = cost_matrix(model, X, Xi)
    for _ in range(50):
        p1 = rng.normal(size=12)
        p2 = rng.normal(size=12)
        v1, _ = c_bar_transform(p1, model, X, Xi, C=C)
        v2, _ = c_bar_transform(p2, model, X, Xi, C=C)
        assert np.abs(v1 - v2).max() <= np.abs(p1 - p2).max()
        lo = np.minimum(p1, p2)
        vlo, _ = c_bar_transform(lo, model, X, Xi, C=C)
        assert (vlo >= np.maximum(v1, v2) - 1e-15).all()


# -- exact LP ---------------------------------------------------------------

def test_single_dirac_pair():
    C = cost_matrix(CostModel("metric"), [[0.0, 0.0]], [[3.0, 4.0]])
    plan, duals, val = solve_kantorovich_exact([1.0], [1.0], C)
    assert val == pytest.approx(5.0)
    assert len(plan.vals) == 1


def test_identical_marginals_zero_value():
    rng = np.random.default_rng(4)
    pts = rng.random((7, 2))
    C = cost_matrix(CostModel("metric"), pts, pts)
    w = rng.random(7)
    plan, duals, val = solve_kantorovich_exact(w, w, C)
    assert val == pytest.approx(0.0, abs=1e-12)


def test_exact_matches_enumeration_oracle():
    rng = np.random.default_rng(5)
    for _ in range(40):
        m, n = rng.integers(2, 4, size=2)
        a = rng.random(m) + 0.05
        b = rng.random(n) + 0.05
        b *= a.sum() / b.sum()
        C = make_C(rng, m, n)
        _, _, val = solve_kantorovich_exact(a, b, C)
        oracle = brute_force_ot_value(a, b, C.values)
        assert val == pytest.approx(oracle, rel=1e-9, abs=1e-12)


def test_plan_properties_and_duals():
    rng = np.random.default_rng(6)
    m, n = 20, 30
    a = rng.random(m)
    b = rng.random(n)
    b *= a.sum() / b.sum()
    C = make_C(rng, m, n)
    plan, duals, val = solve_kantorovich_exact(a, b, C)
    assert len(plan.vals) <= m + n - 1
    assert np.abs(plan.row_sums() - a).max() <= 1e-12
    assert np.abs(plan.col_sums() - b).max() <= 1e-9
    assert duals.feasibility_residual(C) <= 1e-10
    assert duality_gap(plan, duals, C) <= 1e-9 * (1 + val)
    assert duality_gap(plan, duals, C) >= -1e-12 * (1 + val)
    # every source with positive weight keeps a positive row entry
    assert set(plan.rows) == set(range(m))


def test_mass_mismatch_raises():
    C = cost_matrix(CostModel("metric"), [[0.0, 0.0]], [[1.0, 0.0]])
    with pytest.raises(MassMismatchError):
        solve_kantorovich_exact([1.0], [2.0], C)


def test_weak_duality_random_feasible_plans():
    rng = np.random.default_rng(7)
    m, n = 4, 5
    a = rng.random(m) + 0.1
    b = rng.random(n) + 0.1
    b *= a.sum() / b.sum()
    C = make_C(rng, m, n)
    _, _, val = solve_kantorovich_exact(a, b, C)
    for _ in range(20):
        # random feasible plan by iterative proportional filling
        P = rng.random((m, n))
        for _ in range(60):
            P *= (a / P.sum(axis=1))[:, None]
            P *= (b / P.sum(axis=0))[None, :]
        assert (P * C.values).sum() >= val - 1e-6


def test_duality_gap_arithmetic():
    rng = np.random.default_rng(8)
    m, n = 3, 4
    a = rng.random(m) + 0.1
    b = rng.random(n) + 0.1
    b *= a.sum() / b.sum()
    C = make_C(rng, m, n)
    plan, duals, val = solve_kantorovich_exact(a, b, C)
    # zero duals are feasible (C >= 0): gap equals the primal value
    zero = type(duals)(phi=np.zeros(m), psi=np.zeros(n))
    assert duality_gap(plan, zero, C) == pytest.approx(val)
    # perturbing psi by +delta on one index raises the dual value by delta*b_j
    pert = type(duals)(phi=duals.phi.copy(), psi=duals.psi.copy())
    pert.psi[2] += 0.125
    assert duality_gap(plan, pert, C) == pytest.approx(
        duality_gap(plan, duals, C) - 0.125 * b[2])


# -- sinkhorn ---------------------------------------------------------------

def test_sinkhorn_single_pair_exact():
    C = cost_matrix(CostModel("metric"), [[0.0, 0.0]], [[1.0, 0.0]])
    plan = solve_sinkhorn([2.0], [2.0], C, eps=0.5)
    assert plan.vals[0] == pytest.approx(2.0)


def test_sinkhorn_close_to_exact():
    rng = np.random.default_rng(9)
    m = n = 5
    a = rng.random(m) + 0.2
    b = rng.random(n) + 0.2
    b *= a.sum() / b.sum()
    C = make_C(rng, m, n)
    _, _, val = solve_kantorovich_exact(a, b, C)
    plan = solve_sinkhorn(a, b, C, eps=1e-3, tol=1e-10)
    assert abs(plan.cost_inner(C) - val) <= 1e-2 * val
    assert np.abs(plan.row_sums() - a).max() <= 1e-14


def test_sinkhorn_identical_marginals_entropic_bound():
    rng = np.random.default_rng(10)
    pts = rng.random((6, 2))
    C = cost_matrix(CostModel("metric"), pts, pts)
    w = rng.random(6) + 0.2
    eps = 1e-3
    plan = solve_sinkhorn(w, w, C, eps=eps, tol=1e-10)
    assert plan.cost_inner(C) <= eps * w.sum() * np.log(6) + 1e-9


# -- distance functional ----------------------------------------------------

def test_distance_zero_for_equal_measures():
    rng = np.random.default_rng(11)
    mu = DiscreteMeasure(rng.random((8, 2)), rng.random(8))
    for model in (CostModel("metric"), CostModel("quadratic"),
                  CostModel("power", gamma=1.5)):
        assert eval_transport_distance(model, mu, mu) == pytest.approx(0.0, abs=1e-12)


def test_distance_infinite_sentinels():
    model = CostModel("metric")
    u0 = DiscreteMeasure([[0.0, 0.0]], [1.0])
    assert eval_transport_distance(model, u0, DiscreteMeasure([[1.0, 0.0]], [2.0])) == np.inf
    assert eval_transport_distance(model, u0,
                                   DiscreteMeasure([[1.0, 0.0], [0.5, 0.5]],
                                                   [2.0, -1.0])) == np.inf


def test_distance_dirac_pair_quadratic():
    model = CostModel("quadratic")
    u0 = DiscreteMeasure([[0.0, 0.0]], [1.0])
    u1 = DiscreteMeasure([[1.0, 1.0]], [1.0])
    assert eval_transport_distance(model, u0, u1) == pytest.approx(1.0)


# -- F functional -----------------------------------------------------------

def test_F_zero_when_source_in_targets():
    model = CostModel("metric")
    Xi = np.array([[0.0, 0.0], [1.0, 0.0]])
    u0 = DiscreteMeasure([[0.0, 0.0]], [1.0])
    assert eval_F(np.zeros(2), model, u0, Xi) == pytest.approx(0.0)


def test_F_shift_rule():
    rng = np.random.default_rng(12)
    model = CostModel("quadratic")
    Xi = rng.random((7, 2))
    u0 = DiscreteMeasure(rng.random((4, 2)), rng.random(4))
    psi = rng.normal(size=7)
    t = 0.37
    assert eval_F(psi + t, model, u0, Xi) == pytest.approx(
        eval_F(psi, model, u0, Xi) + t * u0.total_mass)


def test_F_convexity():
    rng = np.random.default_rng(13)
    model = CostModel("metric")
    Xi = rng.random((9, 2))
    u0 = DiscreteMeasure(rng.random((5, 2)), rng.random(5))
    for _ in range(25):
        p1, p2 = rng.normal(size=9), rng.normal(size=9)
        mid = eval_F(0.5 * p1 + 0.5 * p2, model, u0, Xi)
        assert mid <= 0.5 * eval_F(p1, model, u0, Xi) \
            + 0.5 * eval_F(p2, model, u0, Xi) + 1e-12


def test_plan_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(14)
    plan = TransportPlan(rng.random((3, 2)), np.ones(3), rng.random((4, 2)),
                         [0, 1, 2], [1, 2, 0], [1.0, 1.0, 1.0])
    path = tmp_path / "plan.csv"
    plan.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "i,j,weight,x_i,y_i,x_j,y_j"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (3, 7)


def test_sinkhorn_nonconvergence_reports_residual():
    from otpoisson import ConvergenceError

    rng = np.random.default_rng(15)
    C = make_C(rng, 6, 6)
    a = rng.random(6) + 0.2
    b = rng.random(6) + 0.2
    b *= a.sum() / b.sum()
    with pytest.raises(ConvergenceError) as err:
        solve_sinkhorn(a, b, C, eps=1e-4, tol=1e-12, max_iter=3)
    assert err.value.residual is not None and err.value.residual > 0
