import numpy as np
import pytest

from otpoisson import (
    DiscreteMeasure,
    Domain,
    DomainError,
    FDPoissonBackend,
    GreenDiskBackend,
    ScalarField,
    build_grid,
    gradient_field,
    green_potential,
    quad_inner,
    solve_adjoint,
    solve_state,
)


@pytest.fixture(scope="module")
def square():
    g = build_grid(Domain("unit_square"), 0.1)
    return g, FDPoissonBackend(g)


@pytest.fixture(scope="module")
def disk():
    g = build_grid(Domain("unit_disk"), 0.05)
    return g, FDPoissonBackend(g), GreenDiskBackend(g)


def test_zero_source_gives_zero_state(square):
    g, be = square
    y = solve_state(be, DiscreteMeasure(np.zeros((0, 2)), np.zeros(0)))
    assert not y.values.any()


def test_comparison_principle_both_backends(disk):
    g, fd, gr = disk
    rng = np.random.default_rng(1)
    mu = DiscreteMeasure(rng.random((30, 2)) - 0.5, rng.random(30))
    for be in (fd, gr):
        y = solve_state(be, mu)
        assert y.values.min() >= -1e-10 * max(np.abs(y.values).max(), 1e-30)


def test_green_disk_delta_origin(disk):
    g, fd, gr = disk
    mu = DiscreteMeasure([[0.0, 0.0]], [1.0])
    val = green_potential(mu, np.array([0.5, 0.0]), gr)
    assert val == pytest.approx(-np.log(0.5) / (2 * np.pi), rel=1e-12)
    # fd solve agrees to O(h)
    y_fd = solve_state(fd, mu)
    assert y_fd.interpolate(np.array([[0.5, 0.0]]))[0] == pytest.approx(val, abs=0.01)


def test_green_potential_sentinel_and_domain(disk):
    g, fd, gr = disk
    mu = DiscreteMeasure([[0.2, 0.1]], [1.0])
    assert green_potential(mu, np.array([0.2, 0.1]), gr) == np.inf
    with pytest.raises(DomainError):
        green_potential(mu, np.array([1.5, 0.0]), gr)
    empty = DiscreteMeasure(np.zeros((0, 2)), np.zeros(0))
    assert green_potential(empty, np.array([0.1, 0.1]), gr) == 0.0


def test_weak_form_of_green_delta():
    # y = G(., 0) satisfies int y (-lap phi) = phi(0) for smooth compact phi;
    # midpoint quadrature of the log-singular integrand converges as h -> 0
    rho = 0.8

    def neg_lap_phi(pts):
        s = (pts**2).sum(axis=1)
        inside = s < rho**2
        val = 12 * (rho**2 - s) ** 2 - 24 * s * (rho**2 - s)
        return np.where(inside, -val / rho**6, 0.0)

    errs = []
    for h in (0.1, 0.05, 0.025):
        g = build_grid(Domain("unit_disk"), h)
        gr = GreenDiskBackend(g)
        y = gr.solve_state(DiscreteMeasure([[0.0, 0.0]], [1.0]))
        integral = float(np.sum(g.quad_weights * y.values * (-neg_lap_phi(g.nodes))))
        errs.append(abs(integral - 1.0))
    assert errs[-1] < errs[0]
    assert errs[-1] < 0.02


def test_atom_outside_domain_rejected(square):
    g, be = square
    with pytest.raises(DomainError):
        be.solve_state(DiscreteMeasure([[1.5, 0.5]], [1.0]))


def test_boundary_mass_has_no_effect(square):
    g, be = square
    inner = DiscreteMeasure([[0.5, 0.5]], [1.0])
    with_boundary = DiscreteMeasure([[0.5, 0.5], [0.0, 0.5], [1.0, 0.3]],
                                    [1.0, 2.0, 3.0])
    y1 = be.solve_state(inner)
    y2 = be.solve_state(with_boundary)
    assert np.allclose(y1.values, y2.values, atol=1e-12)


def test_linearity(square):
    g, be = square
    rng = np.random.default_rng(3)
    u1 = DiscreteMeasure(rng.random((5, 2)), rng.random(5))
    u2 = DiscreteMeasure(rng.random((5, 2)), rng.random(5))
    a, b = 2.5, -1.25
    combo = u1.scaled(a) + u2.scaled(b)
    y = be.solve_state(combo).values
    y_lin = a * be.solve_state(u1).values + b * be.solve_state(u2).values
    scale = np.abs(y_lin).max()
    assert np.abs(y - y_lin).max() <= 1e-9 * scale


def test_adjoint_zero(square):
    g, be = square
    p = solve_adjoint(be, ScalarField(g, np.zeros(g.n_nodes)))
    assert not p.values.any()


def test_self_adjointness(square):
    g, be = square
    rng = np.random.default_rng(4)
    f = ScalarField(g, rng.random(g.n_nodes))
    gg = ScalarField(g, rng.random(g.n_nodes))
    lhs = quad_inner(g, solve_adjoint(be, f).values, gg.values)
    rhs = quad_inner(g, f.values, solve_adjoint(be, gg).values)
    assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(lhs)))


def test_discrete_adjoint_identity(square):
    # <S u, f>_quad equals the weighted-adjoint solution summed over atoms
    g, be = square
    rng = np.random.default_rng(5)
    u = DiscreteMeasure(rng.random((6, 2)) * 0.8 + 0.1, rng.random(6))
    f = rng.random(g.n_nodes)
    y = be.solve_state(u)
    lhs = float(np.sum(g.quad_weights * y.values * f))
    p = be.adjoint_from_residual(f, g.quad_weights)
    rhs = float(np.sum(u.weights * p.interpolate(u.points)))
    assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(lhs)))


def test_adjoint_recovery_disk_annulus_rhs():
    # -lap p = -4 with p = |x|^2 - 1 on the disk; the staircase Dirichlet
    # boundary limits the finite-difference backend to first-order accuracy,
    # the Green-quadrature backend is much sharper
    errs_fd = []
    for h in (0.1, 0.05):
        g = build_grid(Domain("unit_disk"), h)
        fd = FDPoissonBackend(g)
        rhs = ScalarField(g, np.full(g.n_nodes, -4.0))
        p_ref = (g.nodes**2).sum(axis=1) - 1.0
        interior = g.interior_mask & (np.linalg.norm(g.nodes, axis=1) < 0.8)
        p_fd = solve_adjoint(fd, rhs)
        errs_fd.append(np.abs(p_fd.values - p_ref)[interior].max())
        gr = GreenDiskBackend(g)
        p_gr = solve_adjoint(gr, rhs)
        assert np.abs(p_gr.values - p_ref)[interior].max() < 0.3 * h
    assert errs_fd[1] < errs_fd[0] / 1.5  # first-order decay
    assert errs_fd[1] < 0.05


def test_backend_consistency_on_disk(disk):
    g, fd, gr = disk
    rng = np.random.default_rng(6)
    pts = (rng.random((40, 2)) - 0.5) * 1.1
    mu = DiscreteMeasure(pts, rng.random(40))
    y1 = solve_state(fd, mu).values
    y2 = solve_state(gr, mu).values
    l2 = np.sqrt(np.sum(g.quad_weights * (y1 - y2) ** 2))
    assert l2 <= 1.0 * g.h * mu.total_mass


def test_gradient_constant_and_quadratic(square):
    g, be = square
    zero = gradient_field(ScalarField(g, np.ones(g.n_nodes)))
    assert np.abs(zero.gx).max() == 0.0 and np.abs(zero.gy).max() == 0.0
    f = ScalarField(g, (g.nodes**2).sum(axis=1) - 1.0)
    grad = gradient_field(f)
    inner = (g.nodes[:, 0] > 0.05) & (g.nodes[:, 0] < 0.95) \
        & (g.nodes[:, 1] > 0.05) & (g.nodes[:, 1] < 0.95)
    assert np.abs(grad.gx[inner] - 2 * g.nodes[inner, 0]).max() < 1e-10
    assert np.abs(grad.gy[inner] - 2 * g.nodes[inner, 1]).max() < 1e-10


def test_gradient_of_dirac_state_decays_like_inverse_radius():
    g = build_grid(Domain("unit_disk"), 0.02)
    gr = GreenDiskBackend(g)
    y = gr.solve_state(DiscreteMeasure([[0.0, 0.0]], [1.0]))
    grad = gradient_field(y)
    for r in (0.1, 0.2, 0.3):
        pt = np.array([[r, 0.0]])
        gnorm = np.linalg.norm(grad.interpolate(pt)[0])
        assert gnorm == pytest.approx(1.0 / (2 * np.pi * r), rel=0.05)


def test_field_csv(square, tmp_path):
    g, be = square
    f = ScalarField(g, np.arange(g.n_nodes, dtype=float))
    path = tmp_path / "f.csv"
    f.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,value"
    assert len(lines) == g.n_nodes + 1
