import numpy as np
import pytest

from ellcert.discrete import (
    Discretization,
    Field,
    apply_gradient,
    assemble_dirichlet_laplacian,
    assemble_robin_form,
    cg_solve,
    gradient_form,
    smallest_eigenvalue,
    solve_spd,
    SparseOperator,
)
from ellcert.domain import DomainSpec, build_domain, with_closure
from ellcert.errors import NegativeBetaError, NonSPDError
from ellcert.expr import parse_expr


def interval(h=0.25, length=1.0):
    return build_domain(DomainSpec.box(), h=h, box=[(0.0, length)])


def square(h=0.25):
    return build_domain(DomainSpec.box(), h=h, box=[(0.0, 1.0), (0.0, 1.0)])


def test_laplacian_interval_entries():
    lap = assemble_dirichlet_laplacian(interval())
    expect = np.array([[32.0, -16.0, 0.0], [-16.0, 32.0, -16.0], [0.0, -16.0, 32.0]])
    assert np.array_equal(lap.to_dense(), expect)


def test_laplacian_single_node_square():
    dom = square(h=0.5)
    lap = assemble_dirichlet_laplacian(dom)
    assert dom.n_nodes == 1
    assert np.array_equal(lap.to_dense(), [[16.0]])


def test_laplacian_m_matrix_row_sums():
    dom = build_domain(DomainSpec.disk((0.0, 0.0), 1.0), h=0.2,
                       box=[(-1.0, 1.0), (-1.0, 1.0)])
    lap = assemble_dirichlet_laplacian(dom)
    sums = lap.to_dense().sum(axis=1)
    assert np.all(sums >= -1e-12)
    has_face = np.zeros(dom.n_nodes, dtype=bool)
    has_face[dom.faces[:, 0]] = True
    assert np.all(sums[has_face] > 0)


def test_gradient_zero_field():
    dom = interval()
    g = apply_gradient(dom, Field.zeros(dom))
    assert np.all(g.values == 0.0)


def test_gradient_constant_field_hits_boundary():
    dom = interval()
    order = np.argsort(dom.coords[:, 0])
    u = Field(dom, np.ones(3))
    g = apply_gradient(dom, u).values[order, 0]
    assert np.array_equal(g, [0.0, 0.0, -4.0])


def test_summation_by_parts_random_domains():
    rng = np.random.default_rng(20240511)
    domains = [
        interval(h=1 / 8),
        square(h=1 / 4),
        build_domain(DomainSpec.disk((0.0, 0.0), 1.0), h=0.25, box=[(-1, 1), (-1, 1)]),
        build_domain(DomainSpec.lshape(), h=0.2, box=[(0, 1), (0, 1)]),
    ]
    for dom in domains:
        lap = assemble_dirichlet_laplacian(dom)
        w = dom.h**dom.dim
        for _ in range(20):
            u = rng.standard_normal(dom.n_nodes)
            v = rng.standard_normal(dom.n_nodes)
            lhs = np.dot(lap @ u, v) * w
            rhs = gradient_form(dom, u, v)
            assert lhs == pytest.approx(rhs, rel=1e-13, abs=1e-13)


def test_cg_zero_rhs_returns_zero():
    lap = assemble_dirichlet_laplacian(interval())
    x = cg_solve(lap, np.zeros(3), tol=1e-12)
    assert np.array_equal(x, np.zeros(3))


def test_cg_discrete_parabola():
    dom = interval()
    lap = assemble_dirichlet_laplacian(dom)
    sol = solve_spd(lap, Field(dom, np.ones(3)), tol=1e-13)
    order = np.argsort(dom.coords[:, 0])
    assert np.allclose(sol.values[order], [3 / 32, 1 / 8, 3 / 32], rtol=0, atol=1e-12)


def test_cg_identity():
    eye = SparseOperator.from_coo(4, np.arange(4), np.arange(4), np.ones(4))
    rhs = np.array([1.0, -2.0, 3.0, 0.5])
    assert np.allclose(cg_solve(eye, rhs, tol=1e-14), rhs, atol=1e-14)


def test_cg_matches_dense_solve():
    rng = np.random.default_rng(42)
    dom = build_domain(DomainSpec.box(), h=1 / 14, box=[(0, 1), (0, 1)])
    assert dom.n_nodes <= 200
    lap = assemble_dirichlet_laplacian(dom).plus_diagonal(rng.uniform(0.5, 2.0, dom.n_nodes))
    b = rng.standard_normal(dom.n_nodes)
    x = cg_solve(lap, b, tol=1e-12)
    x_dense = np.linalg.solve(lap.to_dense(), b)
    assert np.linalg.norm(x - x_dense) <= 1e-9 * np.linalg.norm(x_dense)


def test_cg_detects_indefinite():
    op = SparseOperator.from_coo(2, [0, 1], [0, 1], [1.0, -1.0])
    with pytest.raises(NonSPDError):
        cg_solve(op, np.array([1.0, 1.0]), tol=1e-10)


def closed_form_lambda1_interval(h):
    return (2.0 - 2.0 * np.cos(np.pi * h)) / h**2


def test_smallest_eigenvalue_interval():
    dom = interval()
    lap = assemble_dirichlet_laplacian(dom)
    lam, vec = smallest_eigenvalue(lap, tol=1e-12, dom=dom)
    assert lam == pytest.approx(16 * (2 - np.sqrt(2)), rel=1e-10)
    assert lam == pytest.approx(closed_form_lambda1_interval(0.25), rel=1e-12)
    # normalized in the h-weighted norm
    assert np.dot(vec.values, vec.values) * dom.h == pytest.approx(1.0, rel=1e-12)


def test_smallest_eigenvalue_square_tensor_sum():
    lam1, _ = smallest_eigenvalue(assemble_dirichlet_laplacian(interval()), tol=1e-12)
    lam2, _ = smallest_eigenvalue(assemble_dirichlet_laplacian(square()), tol=1e-12)
    assert lam2 == pytest.approx(2 * lam1, rel=1e-10)


def test_neumann_form_has_zero_eigenvalue():
    dom = with_closure(interval(h=0.2))
    form = assemble_robin_form(dom, parse_expr("0", dim=1))
    lam, vec = smallest_eigenvalue(form, tol=1e-10, dom=dom)
    assert abs(lam) <= 1e-8
    v = vec.values / vec.values[0]
    assert np.allclose(v, 1.0, atol=1e-6)


def test_poincare_inequality_random_fields():
    dom = square(h=0.2)
    disc = Discretization.dirichlet(dom)
    lam, vec = smallest_eigenvalue(disc.lap, tol=1e-12, dom=dom)
    rng = np.random.default_rng(7)
    for _ in range(100):
        u = rng.standard_normal(dom.n_nodes)
        assert lam * disc.l2(u) ** 2 <= disc.form(u) + 1e-10
    ev = vec.values
    assert lam * disc.l2(ev) ** 2 == pytest.approx(disc.form(ev), rel=1e-9)


def test_robin_interval_hand_assembly():
    dom = with_closure(interval(h=0.5))
    form = assemble_robin_form(dom, parse_expr("1", dim=1))
    order = np.argsort(dom.coords[:, 0])
    dense = form.to_dense()[np.ix_(order, order)]
    expect = np.array([[6.0, -4.0, 0.0], [-4.0, 8.0, -4.0], [0.0, -4.0, 6.0]])
    assert np.allclose(dense, expect, atol=1e-12)
    # quadratic form matches the stated edge/face decomposition
    rng = np.random.default_rng(3)
    u = rng.standard_normal(3)[np.argsort(order)]
    uo = u[order]
    direct = 2 * (uo[1] - uo[0]) ** 2 + 2 * (uo[2] - uo[1]) ** 2 + uo[0] ** 2 + uo[2] ** 2
    assert np.dot(u, form @ u) * 0.5 == pytest.approx(direct, rel=1e-14)


def test_robin_penalty_limit_matches_dirichlet():
    dom = interval(h=1 / 8)
    closed = with_closure(dom)
    dirichlet_eigs = np.linalg.eigvalsh(assemble_dirichlet_laplacian(dom).to_dense())
    robin = assemble_robin_form(closed, parse_expr("1e12", dim=1))
    robin_eigs = np.linalg.eigvalsh(robin.to_dense())
    # the low end of the penalty spectrum reproduces the Dirichlet eigenvalues
    for k in range(dom.n_nodes):
        assert robin_eigs[k] == pytest.approx(dirichlet_eigs[k], rel=1e-6)


def test_robin_rejects_negative_beta():
    dom = with_closure(interval(h=0.25))
    with pytest.raises(NegativeBetaError):
        assemble_robin_form(dom, parse_expr("0 - 1", dim=1))


def test_neumann_gradient_has_no_boundary_term():
    dom = with_closure(interval(h=0.25))
    u = np.ones(dom.n_nodes)
    g = apply_gradient(dom, Field(dom, u), zero_extend=False)
    assert np.all(g.values == 0.0)
    form = assemble_robin_form(dom, parse_expr("0", dim=1))
    assert np.dot(u, form @ u) == pytest.approx(0.0, abs=1e-14)
    assert gradient_form(dom, u, u, zero_extend=False) == pytest.approx(0.0, abs=1e-14)
