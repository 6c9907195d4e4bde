import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mfgfem as mf
from mfgfem.errors import ConfigurationError, NumericError
from mfgfem.fespace import quadrature, quadrature_points_xy


def reference_space():
    return mf.P1Space(mf.Mesh2D([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)]))


def exact_monomial_integral(a, b):
    """int_T x^a y^b over the reference triangle = a! b! / (a + b + 2)!."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


class TestSpace:
    def test_dof_enumeration(self, square_hierarchy):
        space = mf.P1Space(square_hierarchy[2])
        assert space.ndof == 9
        assert np.all(space.dof_of_vertex[space.vertex_of_dof] == np.arange(9))
        interior = space.mesh.interior_vertex_mask
        assert np.all(interior[space.vertex_of_dof])

    def test_partition_of_unity(self, rhombus_hierarchy):
        grads = mf.P1Space(rhombus_hierarchy[2]).elem_grads
        assert np.abs(grads.sum(axis=1)).max() < 1e-13

    def test_gradient_magnitudes(self):
        # |grad xi_i| = opposite edge length / (2 area)
        mesh = mf.generate_acute_rhombus(2)
        space = mf.P1Space(mesh)
        norms = np.linalg.norm(space.elem_grads, axis=2)
        for s in range(3):
            opp = mesh.edge_lengths[mesh.tri_edges[:, s]]
            assert np.allclose(norms[:, s], opp / (2.0 * mesh.areas), rtol=1e-13)


class TestInterpolation:
    def test_zero_field(self, square_spaces):
        fn = mf.interpolate(square_spaces[2], lambda x, y: np.zeros_like(x))
        assert np.all(fn.coeffs == 0.0)

    def test_parabola_center_value(self):
        space = mf.P1Space(mf.generate_structured_square(2))
        fn = mf.interpolate(space, lambda x, y: x * (1 - x))
        mesh = space.mesh
        center_vertex = int(np.argmin(((mesh.vertices - 0.5) ** 2).sum(axis=1)))
        assert fn.nodal_values()[center_vertex] == pytest.approx(0.25)
        # barycentric evaluation at that vertex returns the nodal value
        tri = int(np.nonzero((mesh.triangles == center_vertex).any(axis=1))[0][0])
        local = list(mesh.triangles[tri]).index(center_vertex)
        bary = np.eye(3)[local]
        assert fn.eval(tri, bary) == pytest.approx(0.25)

    def test_affine_reproduced_at_quadrature_points(self, square_spaces):
        # P1 reproduces affine functions: on elements away from the boundary the
        # interpolant of x matches x at every quadrature point
        space = square_spaces[3]
        fn = mf.interpolate(space, lambda x, y: x)
        rule = quadrature(3)
        xq = quadrature_points_xy(space.mesh, rule)
        vals = fn.values_at_quadrature(rule)
        interior_elems = np.all(space.elem_dofs >= 0, axis=1)
        assert np.allclose(vals[interior_elems], xq[interior_elems, :, 0], atol=1e-13)

    def test_non_finite_rejected(self, square_spaces):
        def blows_up(x, y):
            with np.errstate(divide="ignore", invalid="ignore"):
                return x / (y - y)

        with pytest.raises(NumericError):
            mf.interpolate(square_spaces[2], blows_up)


class TestEvalAndGradients:
    def test_zero_function_zero_gradient(self, square_spaces):
        fn = square_spaces[2].zero_function()
        assert np.all(fn.element_gradients() == 0.0)

    def test_gradient_of_coordinate_interpolant(self, square_spaces):
        space = square_spaces[3]
        fn = mf.interpolate(space, lambda x, y: x)
        grads = fn.element_gradients()
        interior_elems = np.all(space.elem_dofs >= 0, axis=1)
        assert np.allclose(grads[interior_elems], [1.0, 0.0], atol=1e-13)

    def test_reference_triangle_nodal_solve(self):
        # nodal values (0, 1, 0) on (0,0), (1,0), (0,1): the affine interpolation
        # system gives u = x, hence gradient (1, 0)
        space = reference_space()
        full = np.array([0.0, 1.0, 0.0])
        # no interior dofs on a single triangle; work through the nodal path
        vals = full[space.mesh.triangles[0]]
        grad = vals @ space.elem_grads[0]
        assert np.allclose(grad, [1.0, 0.0], atol=1e-15)

    def test_interpolation_identity_at_vertices(self, square_spaces):
        space = square_spaces[2]
        f = lambda x, y: np.sin(x) + y ** 2
        fn = mf.interpolate(space, f)
        xy = space.mesh.vertices[space.vertex_of_dof]
        assert np.allclose(fn.coeffs, f(xy[:, 0], xy[:, 1]), rtol=0, atol=0)

    def test_affine_gradient_exact(self, rhombus_spaces):
        space = rhombus_spaces[2]
        fn = mf.interpolate(space, lambda x, y: 2.0 * x - 3.0 * y + 1.0)
        grads = fn.element_gradients()
        interior_elems = np.all(space.elem_dofs >= 0, axis=1)
        err = np.abs(grads[interior_elems] - np.array([2.0, -3.0]))
        assert err.max() < 1e-13 * 3.0


class TestQuadrature:
    def test_centroid_rule(self):
        rule = quadrature(1)
        assert len(rule.weights) == 1
        assert rule.weights[0] == 1.0
        assert np.allclose(rule.points, 1.0 / 3.0)

    def test_unsupported_degree(self):
        with pytest.raises(ConfigurationError):
            quadrature(7)

    @pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6])
    def test_weights_positive_and_normalized(self, degree):
        rule = quadrature(degree)
        assert np.all(rule.weights > 0)
        assert rule.weights.sum() == pytest.approx(1.0, rel=1e-13)

    def test_degree2_x_squared(self):
        # int over reference triangle of x^2 = 1/12
        rule = quadrature(2)
        x = rule.points[:, 1]  # barycentric coordinate of vertex (1, 0)
        val = 0.5 * np.sum(rule.weights * x ** 2)
        assert val == pytest.approx(1.0 / 12.0, rel=1e-14)

    @pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6])
    def test_monomial_exactness(self, degree):
        rule = quadrature(degree)
        x = rule.points[:, 1]
        y = rule.points[:, 2]
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                approx = 0.5 * np.sum(rule.weights * x ** a * y ** b)
                assert approx == pytest.approx(exact_monomial_integral(a, b), rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(coeffs=st.lists(st.floats(-5, 5), min_size=3, max_size=3))
    def test_affine_integrated_exactly_by_all_rules(self, coeffs):
        c0, c1, c2 = coeffs
        exact = 0.5 * c0 + c1 / 6.0 + c2 / 6.0
        for degree in (1, 2, 4, 6):
            rule = quadrature(degree)
            val = 0.5 * np.sum(rule.weights
                               * (c0 + c1 * rule.points[:, 1] + c2 * rule.points[:, 2]))
            assert val == pytest.approx(exact, rel=1e-12, abs=1e-12)

    def test_gradient_energy_rule_independent(self, square_spaces):
        # piecewise constant gradients: degree-1 and degree-4 give identical energy
        space = square_spaces[3]
        rng = np.random.default_rng(3)
        fn = mf.P1Function(space, rng.standard_normal(space.ndof))
        grads = fn.element_gradients()
        e1 = float(((grads ** 2).sum(axis=1) * space.elem_areas).sum())
        rule = quadrature(4)
        e4 = float(np.einsum("t,q->", (grads ** 2).sum(axis=1) * space.elem_areas,
                             rule.weights))
        assert e1 == pytest.approx(e4, rel=1e-13)


class TestExport:
    def test_csv_includes_boundary(self, tmp_path, square_spaces):
        space = square_spaces[2]
        fn = mf.interpolate(space, lambda x, y: x * y)
        path = tmp_path / "fn.csv"
        mf.fespace.function_to_csv(fn, path, header_comment="config deadbeef")
        lines = path.read_text().splitlines()
        assert lines[0] == "# config deadbeef"
        assert lines[1] == "vertex_index,x,y,value"
        assert len(lines) == 2 + space.mesh.num_vertices
        # boundary vertices carry value 0
        for line in lines[2:]:
            idx, x, y, v = line.split(",")
            if space.mesh.boundary_vertex_flags[int(idx)]:
                assert float(v) == 0.0
