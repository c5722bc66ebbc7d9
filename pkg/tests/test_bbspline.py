import numpy as np
import pytest

from splineot.bbspline import (
    BForm,
    OutOfDomainError,
    SplineSpace,
    basis_derivative_row,
    bform_from_json,
    bform_to_json,
    domain_points,
    eval_bform,
    hessian_det_lap,
    integral_bform,
)
from splineot.mesh import Triangulation
from splineot.quadrature import triangle_rule
from splineot.shapes import square_grid_mesh


def two_triangle_square():
    return Triangulation(
        np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]),
        np.array([(0, 1, 2), (0, 2, 3)]),
    )


def single_triangle():
    return Triangulation(np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]), np.array([(0, 1, 2)]))


def random_polynomial(rng, degree):
    terms = [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]
    coef = rng.standard_normal(len(terms))

    def poly(x, y):
        return sum(c * x**i * y**j for c, (i, j) in zip(coef, terms))

    def poly_dx(x, y):
        return sum(c * i * x ** max(i - 1, 0) * y**j for c, (i, j) in zip(coef, terms) if i)

    def poly_dy(x, y):
        return sum(c * j * x**i * y ** max(j - 1, 0) for c, (i, j) in zip(coef, terms) if j)

    return poly, poly_dx, poly_dy


class TestDomainPoints:
    def test_single_triangle_degree2(self):
        pts = domain_points(single_triangle(), 2)
        assert len(pts.points) == 6

    def test_two_triangles_dedup(self):
        assert len(domain_points(two_triangle_square(), 1).points) == 4
        assert len(domain_points(two_triangle_square(), 3).points) == 16

    def test_boundary_partition(self):
        pts = domain_points(square_grid_mesh(0.0, 1.0, 4), 4)
        on_b = pts.points[pts.boundary_mask]
        x, y = on_b[:, 0], on_b[:, 1]
        assert np.all((np.isclose(x, 0) | np.isclose(x, 1) | np.isclose(y, 0) | np.isclose(y, 1)))
        assert pts.n_interior + pts.n_boundary == len(pts.points)


class TestEvaluation:
    def test_polynomial_reproduction(self):
        space = SplineSpace(square_grid_mesh(0.0, 1.0, 2), 8, 2)
        s = space.interpolate(lambda x, y: x**2 + y**2)
        assert eval_bform(s, (0.3, 0.4)) == pytest.approx(0.25, abs=1e-12)
        assert eval_bform(s, (0.3, 0.4), 2, 0) == pytest.approx(2.0, abs=1e-10)
        assert eval_bform(s, (0.3, 0.4), 1, 1) == pytest.approx(0.0, abs=1e-10)

    def test_vertex_coefficient_property_degree1(self):
        mesh = two_triangle_square()
        space = SplineSpace(mesh, 1, 0, force=True)
        coeffs = np.array([3.0, 5.0, 7.0, 3.0, 7.0, 11.0])  # vertex values per block
        s = BForm(space, coeffs)
        assert eval_bform(s, (0.0, 0.0)) == pytest.approx(3.0)
        assert eval_bform(s, (1.0, 0.0)) == pytest.approx(5.0)
        assert eval_bform(s, (0.0, 1.0)) == pytest.approx(11.0)

    def test_mixed_derivative_cubic(self):
        space = SplineSpace(square_grid_mesh(0.0, 1.0, 2), 8, 2)
        s = space.interpolate(lambda x, y: x**3 * y)
        # d2/dxdy (x^3 y) = 3 x^2
        assert eval_bform(s, (0.5, 0.2), 1, 1) == pytest.approx(0.75, rel=1e-10)

    def test_hessian_det_lap_quadratic(self):
        space = SplineSpace(square_grid_mesh(-1.0, 1.0, 2), 8, 2)
        s = space.interpolate(lambda x, y: 0.5 * (x**2 + y**2))
        det, lap, grad = hessian_det_lap(s, (0.37, -0.21))
        assert det == pytest.approx(1.0, abs=1e-9)
        assert lap == pytest.approx(2.0, abs=1e-9)
        assert (grad.x, grad.y) == pytest.approx((0.37, -0.21), abs=1e-9)

    def test_hessian_det_lap_saddle(self):
        space = SplineSpace(square_grid_mesh(-1.0, 1.0, 2), 8, 2)
        s = space.interpolate(lambda x, y: x**2 - y**2)
        det, lap, _ = hessian_det_lap(s, (0.1, 0.2))
        assert det == pytest.approx(-4.0, abs=1e-9)
        assert lap == pytest.approx(0.0, abs=1e-9)

    def test_interpolated_exponential_determinant(self):
        # det(D^2 e^{(x^2+y^2)/2}) = (1+x^2+y^2) e^{x^2+y^2}
        space = SplineSpace(square_grid_mesh(-1.0, 1.0, 8), 8, 2)
        s = space.interpolate(lambda x, y: np.exp((x**2 + y**2) / 2))
        for p in [(0.3, 0.4), (-0.55, 0.1), (0.0, 0.0)]:
            det, lap, grad = hessian_det_lap(s, p)
            x, y = p
            expect = (1 + x**2 + y**2) * np.exp(x**2 + y**2)
            assert det == pytest.approx(expect, rel=1e-6)

    def test_out_of_domain_raises(self):
        space = SplineSpace(two_triangle_square(), 8, 2)
        s = space.zero()
        with pytest.raises(OutOfDomainError):
            eval_bform(s, (2.0, 2.0))

    def test_derivatives_match_finite_differences(self):
        rng = np.random.default_rng(3)
        space = SplineSpace(square_grid_mesh(0.0, 1.0, 4), 8, 2)
        s = space.interpolate(lambda x, y: np.sin(2 * x) * np.cos(y) + x**3)
        h = 1e-5
        for p in rng.uniform(0.2, 0.8, size=(5, 2)):
            x, y = p
            v = lambda a, b: eval_bform(s, (a, b))
            fd_x = (v(x + h, y) - v(x - h, y)) / (2 * h)
            fd_xx = (v(x + h, y) - 2 * v(x, y) + v(x - h, y)) / h**2
            fd_xy = (v(x + h, y + h) - v(x + h, y - h) - v(x - h, y + h) + v(x - h, y - h)) / (4 * h**2)
            assert eval_bform(s, p, 1, 0) == pytest.approx(fd_x, rel=1e-6, abs=1e-6)
            assert eval_bform(s, p, 2, 0) == pytest.approx(fd_xx, rel=1e-4, abs=1e-4)
            assert eval_bform(s, p, 1, 1) == pytest.approx(fd_xy, rel=1e-4, abs=1e-4)


class TestRows:
    def test_vertex_row_is_one_hot(self):
        space = SplineSpace(two_triangle_square(), 3, 0, force=True)
        row = basis_derivative_row(space, (0.0, 0.0), 0, 0).toarray().ravel()
        assert row.sum() == pytest.approx(1.0)
        assert np.count_nonzero(np.abs(row) > 1e-14) == 1

    def test_partition_of_unity(self):
        rng = np.random.default_rng(11)
        space = SplineSpace(square_grid_mesh(0.0, 1.0, 3), 8, 2)
        for p in rng.uniform(0.05, 0.95, size=(10, 2)):
            row = basis_derivative_row(space, p, 0, 0)
            assert row.sum() == pytest.approx(1.0, abs=1e-12)

    def test_row_reproduces_derivative(self):
        space = SplineSpace(square_grid_mesh(0.0, 1.0, 3), 8, 2)
        s = space.interpolate(lambda x, y: x**2 + y**2)
        row = basis_derivative_row(space, (0.4, 0.7), 2, 0)
        assert row @ s.coeffs == pytest.approx(2.0, abs=1e-10)

    def test_laplacian_row_kills_affine(self):
        space = SplineSpace(square_grid_mesh(0.0, 1.0, 3), 8, 2)
        s = space.interpolate(lambda x, y: 3.0 + 2 * x - 5 * y)
        row = (
            basis_derivative_row(space, (0.3, 0.3), 2, 0)
            + basis_derivative_row(space, (0.3, 0.3), 0, 2)
        )
        assert row @ s.coeffs == pytest.approx(0.0, abs=1e-9)


class TestIntegration:
    def test_constant_integrates_to_area(self):
        space = SplineSpace(square_grid_mesh(-1.0, 1.0, 4), 6, 0, force=True)
        s = BForm(space, np.ones(space.size))
        assert integral_bform(s) == pytest.approx(4.0, rel=1e-12)

    def test_linear_on_unit_square(self):
        space = SplineSpace(two_triangle_square(), 4, 0, force=True)
        s = space.interpolate(lambda x, y: x + 0 * y)
        assert integral_bform(s) == pytest.approx(0.5, rel=1e-12)

    def test_x2y2_exact(self):
        space = SplineSpace(two_triangle_square(), 4, 0, force=True)
        s = space.interpolate(lambda x, y: x**2 * y**2)
        assert integral_bform(s) == pytest.approx(1.0 / 9.0, rel=1e-12)

    def test_random_polynomial_roundtrip(self):
        rng = np.random.default_rng(7)
        space = SplineSpace(square_grid_mesh(0.0, 1.0, 3), 8, 2)
        for _ in range(5):
            poly, poly_dx, poly_dy = random_polynomial(rng, 8)
            s = space.interpolate(poly)
            for p in rng.uniform(0.1, 0.9, size=(4, 2)):
                assert eval_bform(s, p) == pytest.approx(poly(*p), rel=1e-10, abs=1e-10)
                assert eval_bform(s, p, 1, 0) == pytest.approx(poly_dx(*p), rel=1e-8, abs=1e-8)
                assert eval_bform(s, p, 0, 1) == pytest.approx(poly_dy(*p), rel=1e-8, abs=1e-8)

    def test_triangle_rule_exactness(self):
        bary, w = triangle_rule(10)
        # reference triangle (0,0),(1,0),(0,1): integral x^a y^b = a! b! / (a+b+2)!
        from math import factorial

        x = bary[:, 1]
        y = bary[:, 2]
        for a in range(0, 6):
            for b in range(0, 6 - a):
                exact = 2 * factorial(a) * factorial(b) / factorial(a + b + 2)
                got = 2 * float(w @ (x**a * y**b))
                assert got == pytest.approx(exact, rel=1e-12), (a, b)


class TestSerialization:
    def test_json_roundtrip(self):
        mesh = square_grid_mesh(0.0, 1.0, 2)
        space = SplineSpace(mesh, 8, 2)
        s = space.interpolate(lambda x, y: x * y)
        s2 = bform_from_json(bform_to_json(s), mesh)
        assert np.allclose(s2.coeffs, s.coeffs)

    def test_mesh_hash_mismatch(self):
        s = SplineSpace(square_grid_mesh(0.0, 1.0, 2), 8, 2).zero()
        other = square_grid_mesh(0.0, 1.0, 3)
        with pytest.raises(ValueError, match="mesh hash"):
            bform_from_json(bform_to_json(s), other)


class TestSpaceGuards:
    def test_smoothness_degree_guard(self):
        mesh = two_triangle_square()
        with pytest.raises(ValueError, match="force=True"):
            SplineSpace(mesh, 5, 2)
        SplineSpace(mesh, 5, 2, force=True)
        SplineSpace(mesh, 5, 1)


class TestBackends:
    def test_backends_agree(self):
        from splineot import _kernels_numpy
        from splineot import kernels

        mesh = square_grid_mesh(0.0, 1.0, 4)
        space = SplineSpace(mesh, 8, 2)
        s = space.interpolate(lambda x, y: np.sin(x + 2 * y))
        rng = np.random.default_rng(0)
        pts = rng.uniform(0.0, 1.0, size=(300, 2))
        tp, gb, bins = mesh.geometry_cache()
        t1, b1 = kernels.locate_points(pts[:, 0], pts[:, 1], tp, bins)
        t2, b2 = _kernels_numpy.locate_points(pts[:, 0], pts[:, 1], tp, bins)
        assert np.array_equal(t1, t2)
        assert np.allclose(b1, b2, atol=1e-14)
        f1 = kernels.eval_derivs(s.coeffs, t1, b1, gb, 8, 2)
        f2 = _kernels_numpy.eval_derivs(s.coeffs, t2, b2, gb, 8, 2)
        assert np.allclose(f1, f2, atol=1e-12)
        r1 = kernels.basis_rows(t1[:5], b1[:5], gb, 8, 1, 1)
        r2 = _kernels_numpy.basis_rows(t2[:5], b2[:5], gb, 8, 1, 1)
        assert np.allclose(r1, r2, atol=1e-12)
