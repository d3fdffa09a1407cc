import numpy as np
import pytest

from rfisim import (
    AffineSubspace,
    Ball,
    Box,
    DimensionMismatchError,
    Hyperplane,
    InvalidSpecError,
    QuadraticFn,
    SolverError,
    compose_cyclic,
    compose_dr,
    compose_fb,
    grad_step,
    project,
    projector_map,
    prox,
    reflect,
    relax,
    scale_map,
)

RNG = np.random.default_rng(20240817)


def random_sets(dim=4, n_each=3):
    sets = []
    for _ in range(n_each):
        a = RNG.normal(size=dim)
        sets.append(Hyperplane(a, RNG.normal()))
        lo = RNG.normal(size=dim)
        sets.append(Box(lo, lo + RNG.random(size=dim) + 0.1))
        sets.append(Ball(RNG.normal(size=dim), 0.5 + RNG.random()))
        A = RNG.normal(size=(2, dim))
        sets.append(AffineSubspace(A, RNG.normal(size=2)))
    return sets


def test_hyperplane_closed_form():
    h = Hyperplane([1.0, 0.0], 0.0)
    assert np.allclose(project(h, [3.0, 4.0]), [0.0, 4.0], atol=0)


def test_projection_idempotent_and_fixed_on_set():
    for s in random_sets():
        x = RNG.normal(size=s.dim) * 3
        p = project(s, x)
        assert np.allclose(project(s, p), p, atol=1e-10)


def test_affine_subspace_matches_kkt_oracle():
    # independent oracle: solve the dense KKT system of min |p-x|^2 s.t. Ap=b
    for _ in range(5):
        A = RNG.normal(size=(2, 4))
        b = RNG.normal(size=2)
        x = RNG.normal(size=4)
        sub = AffineSubspace(A, b)
        kkt = np.block([[np.eye(4), A.T], [A, np.zeros((2, 2))]])
        sol = np.linalg.solve(kkt, np.concatenate([x, b]))
        assert np.max(np.abs(sub.project(x) - sol[:4])) <= 1e-10


def test_affine_subspace_rank_check():
    A = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    with pytest.raises(InvalidSpecError):
        AffineSubspace(A, [1.0, 2.0])


def test_grad_step_examples():
    f = QuadraticFn(np.eye(2))
    assert np.allclose(grad_step(f, 1.0, [5.0, -3.0]), [0.0, 0.0], atol=0)
    f0 = QuadraticFn(np.zeros((2, 2)))
    x = np.array([1.3, -0.2])
    assert np.array_equal(grad_step(f0, 0.5, x), x)
    f2 = QuadraticFn(np.diag([2.0, 1.0]), c=[1.0, 0.0])
    assert np.allclose(grad_step(f2, 0.1, [1.0, 1.0]), [0.7, 0.9], atol=1e-15)


def test_prox_examples():
    h = Hyperplane([1.0, 0.0], 0.0)
    assert np.allclose(prox(h, [3.0, 4.0]), [0.0, 4.0])
    f = QuadraticFn(np.eye(2))
    assert np.allclose(prox(f, [2.0, 2.0]), [1.0, 1.0])


def test_prox_first_order_condition():
    # oracle: the prox point satisfies x = p + Qp + c
    M = RNG.normal(size=(3, 3))
    f = QuadraticFn(M @ M.T + 0.1 * np.eye(3), c=RNG.normal(size=3))
    x = RNG.normal(size=3)
    p = prox(f, x)
    assert np.max(np.abs(p + f.Q @ p + f.c - x)) <= 1e-10


def test_prox_rejects_indefinite_shift():
    f = QuadraticFn(np.diag([-2.0, 1.0]))
    with pytest.raises(SolverError, match="smallest eigenvalue"):
        prox(f, [1.0, 1.0])


def test_reflect_examples():
    h = Hyperplane([1.0, 0.0], 0.0)
    assert np.allclose(reflect(h, [3.0, 4.0]), [-3.0, 4.0])
    on_set = np.array([0.0, 7.0])
    assert np.allclose(reflect(h, on_set), on_set)
    A = RNG.normal(size=(2, 5))
    sub = AffineSubspace(A, RNG.normal(size=2))
    x = RNG.normal(size=5)
    assert np.max(np.abs(reflect(sub, reflect(sub, x)) - x)) <= 1e-12


def test_compose_fb_free_backward_is_gradient_step():
    f = QuadraticFn(np.diag([2.0, 1.0]), c=[1.0, 0.0])
    fb = compose_fb(f, None, 0.1)
    x = RNG.normal(size=2)
    assert np.array_equal(fb(x), grad_step(f, 0.1, x))


def test_compose_dr_fixed_points():
    h = Hyperplane([1.0, 1.0], 1.0)
    dr = compose_dr(h, h)
    x = np.array([0.5, 0.5])
    assert np.array_equal(dr(x), x)
    # consistent pair: intersection points are fixed
    h2 = Hyperplane([1.0, -1.0], 0.0)
    dr2 = compose_dr(h, h2)
    assert np.allclose(dr2(x), x, atol=1e-15)


def test_compose_cyclic_coordinate_planes():
    p1 = projector_map(Hyperplane([1.0, 0.0], 0.0))
    p2 = projector_map(Hyperplane([0.0, 1.0], 0.0))
    cyc = compose_cyclic([p1, p2])
    assert np.allclose(cyc(np.array([3.0, 4.0])), [0.0, 0.0], atol=0)


def test_compose_cyclic_empty_rejected():
    with pytest.raises(InvalidSpecError):
        compose_cyclic([])


def test_relax():
    T = scale_map(2, -1.0)
    with pytest.raises(InvalidSpecError):
        relax(T, 1.0)
    half = relax(T, 0.5)
    assert np.allclose(half(np.array([2.0, -4.0])), [0.0, 0.0])


def test_projectors_firmly_nonexpansive():
    for s in random_sets():
        for _ in range(10):
            x = RNG.normal(size=s.dim) * 2
            y = RNG.normal(size=s.dim) * 2
            px, py = project(s, x), project(s, y)
            lhs = np.sum((px - py) ** 2) + np.sum(((x - px) - (y - py)) ** 2)
            assert lhs <= np.sum((x - y) ** 2) + 1e-10


def test_reflectors_nonexpansive():
    for s in random_sets():
        for _ in range(10):
            x = RNG.normal(size=s.dim) * 2
            y = RNG.normal(size=s.dim) * 2
            rx, ry = reflect(s, x), reflect(s, y)
            assert np.linalg.norm(rx - ry) <= np.linalg.norm(x - y) + 1e-10


def test_grad_step_contraction_on_strongly_monotone():
    M = RNG.normal(size=(4, 4))
    Q = M @ M.T + 0.5 * np.eye(4)
    f = QuadraticFn(Q)
    m, L = -f.tau_hypo, f.lipschitz
    assert m > 0
    t = m / L**2
    factor = np.sqrt(1.0 - t * m)
    for _ in range(10):
        x = RNG.normal(size=4)
        y = RNG.normal(size=4)
        fx, fy = grad_step(f, t, x), grad_step(f, t, y)
        assert np.linalg.norm(fx - fy) <= factor * np.linalg.norm(x - y) + 1e-12


def test_quadratic_constants():
    f = QuadraticFn(np.diag([2.0, -1.0]))
    assert f.lipschitz == 2.0
    assert f.tau_hypo == 1.0  # nonconvex: positive hypomonotonicity violation
    g = QuadraticFn(np.diag([2.0, 1.0]))
    assert g.tau_hypo == -1.0  # strongly monotone: negative by the sign convention


def test_dimension_errors():
    h = Hyperplane([1.0, 0.0], 0.0)
    with pytest.raises(DimensionMismatchError):
        project(h, [1.0, 2.0, 3.0])
    with pytest.raises(InvalidSpecError):
        Hyperplane([0.0, 0.0], 1.0)
    with pytest.raises(InvalidSpecError):
        Box([0.0, 0.0], [-1.0, 1.0])
    with pytest.raises(InvalidSpecError):
        Ball([0.0], 0.0)
