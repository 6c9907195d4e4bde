import math

import numpy as np
import pytest

import mfgfem as mf
from mfgfem.errors import ConfigurationError, InvariantViolation
from mfgfem.stabilization import StabilizationTensor, random_disk_drift

SQRT2 = math.sqrt(2.0)


def fan_mesh():
    """Unit square fanned around its center: the four spokes are the internal
    edges (each touches the interior center vertex)."""
    vertices = [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)]
    triangles = [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)]
    return mf.Mesh2D(vertices, triangles)


class TestXZTensor:
    def test_zero_for_zero_lipschitz(self, square_hierarchy):
        tensor = mf.build_xz_tensor(square_hierarchy[2], 0.0)
        assert tensor.is_zero
        assert tensor.c_d_observed == 0.0

    def test_fan_mesh_hand_assembled(self):
        # each spoke has length sqrt(2)/2 and diagonal direction; with factor c
        # and L_H = 1 each element collects its two spokes:
        # omega (t t^T + s s^T) with t = (1,1)/sqrt2, s = (-1,1)/sqrt2 summing to
        # omega * I, omega = c * sqrt(2)/2
        mesh = fan_mesh()
        factor = 1.0
        tensor = mf.build_xz_tensor(mesh, 1.0, omega_factor=factor)
        omega = factor * SQRT2 / 2.0
        for t in range(4):
            assert np.allclose(tensor.per_element[t], omega * np.eye(2), atol=1e-14)

    def test_rank_one_outer_product_structure(self):
        # isolate a single spoke: scale L_H so omega = 1 and check eigenvalues
        mesh = fan_mesh()
        tensor = mf.build_xz_tensor(mesh, 1.0, omega_factor=1.0 / (SQRT2 / 2.0))
        # per element = t t^T + s s^T with orthogonal unit t, s -> eigenvalues {1, 1}
        eigs = np.linalg.eigvalsh(tensor.per_element[0])
        assert np.allclose(eigs, [1.0, 1.0], atol=1e-13)

    def test_single_direction_outer_product(self):
        # directly verify the rank-1 block for a diagonal unit tangent
        t = np.array([1.0, 1.0]) / SQRT2
        block = np.outer(t, t)
        assert np.allclose(block, [[0.5, 0.5], [0.5, 0.5]])
        assert np.allclose(sorted(np.linalg.eigvalsh(block)), [0.0, 1.0], atol=1e-15)

    def test_interior_element_composition(self, square_hierarchy):
        # an element with all three edges internal carries the sum of one
        # horizontal, one vertical, and one diagonal edge tensor
        mesh = square_hierarchy[3]
        n = 8
        factor = mesh.shape_regularity / 3.0
        tensor = mf.build_xz_tensor(mesh, 1.0)
        internal_elems = np.nonzero(
            mesh.internal_edge_mask[mesh.tri_edges].all(axis=1))[0]
        expected = (factor / n) * (np.diag([1.0, 0.0]) + np.diag([0.0, 1.0])
                                   + SQRT2 * np.array([[0.5, 0.5], [0.5, 0.5]]))
        for t in internal_elems[:8]:
            assert np.allclose(tensor.per_element[t], expected, atol=1e-14)

    def test_weight_window_gate(self, square_hierarchy):
        mesh = square_hierarchy[2]
        with pytest.raises(ConfigurationError, match="window"):
            mf.build_xz_tensor(mesh, 1.0, omega_factor=mesh.shape_regularity / 6.0)

    def test_requires_xz_mesh(self):
        height = 0.5 / math.tan(math.radians(50.0))
        kite = mf.Mesh2D([(0, 0), (1, 0), (0.5, height), (0.5, -height)],
                         [(0, 1, 2), (0, 3, 1)])
        with pytest.raises(ConfigurationError, match="XZ"):
            mf.build_xz_tensor(kite, 1.0)

    def test_linear_scaling_in_lipschitz_constant(self, square_hierarchy):
        mesh = square_hierarchy[3]
        t1 = mf.build_xz_tensor(mesh, 1.0)
        t2 = mf.build_xz_tensor(mesh, 2.0)
        assert np.allclose(t2.per_element, 2.0 * t1.per_element, rtol=0, atol=0)

    def test_h1_constant_across_levels(self, square_hierarchy):
        # weights scale with edge diameters, so c_d is level-independent and
        # bounded by 3 * omega_factor * L_H
        values = []
        for mesh in square_hierarchy[2:6]:
            tensor = mf.build_xz_tensor(mesh, 1.0)
            report = mf.verify_h1(tensor, mesh)
            values.append(report.c_d_observed)
            assert report.c_d_observed <= 3.0 * (mesh.shape_regularity / 3.0) + 1e-12
        assert np.allclose(values, values[0], rtol=1e-12)


class TestAcuteTensor:
    def test_clamped_to_zero_for_large_nu(self, rhombus_hierarchy):
        tensor = mf.build_acute_tensor(rhombus_hierarchy[2], 1.0, 1e6)
        assert tensor.is_zero

    def test_arithmetic_on_unit_rhombus(self):
        # side 1 equilateral: sigma = 2/sqrt(3), theta = pi/6;
        # coefficient = 1.1 / ((2/sqrt3) * 0.5) - 0.5 = 1.1 sqrt(3) - 0.5
        mesh = mf.generate_acute_rhombus(1)
        tensor = mf.build_acute_tensor(mesh, 1.0, 0.5, mu=1.1)
        expected = 1.1 * math.sqrt(3.0) - 0.5
        assert expected == pytest.approx(1.4053, abs=1e-4)
        for block in tensor.per_element:
            assert np.allclose(block, expected * np.eye(2), atol=1e-12)

    def test_sigma_constant_for_equilateral(self):
        # diam * min |grad psi| = l * 2/(sqrt3 l) = 2/sqrt3 independent of side
        for n in (1, 2, 4):
            mesh = mf.generate_acute_rhombus(n)
            grads = np.linalg.norm(mesh.basis_gradients, axis=2)
            sigma = mesh.diameters * grads.min(axis=1)
            assert np.allclose(sigma, 2.0 / math.sqrt(3.0), rtol=1e-12)

    def test_vanishes_past_clamp_level(self, rhombus_hierarchy):
        # with nu = L_H = 1, mu = 1.1 the clamp engages at level 1 and stays
        zero_from = None
        for level, mesh in enumerate(rhombus_hierarchy):
            tensor = mf.build_acute_tensor(mesh, 1.0, 1.0, mu=1.1)
            if tensor.is_zero and zero_from is None:
                zero_from = level
            if zero_from is not None:
                assert tensor.is_zero
        assert zero_from == 1

    def test_rejects_bad_parameters(self, rhombus_hierarchy, square_hierarchy):
        with pytest.raises(ConfigurationError):
            mf.build_acute_tensor(rhombus_hierarchy[2], 1.0, 1.0, mu=1.0)
        with pytest.raises(ConfigurationError):
            mf.build_acute_tensor(square_hierarchy[2], 1.0, 1.0)  # theta = 0


class TestVerifyH1:
    def test_zero_tensor(self, square_hierarchy):
        report = mf.verify_h1(mf.none_tensor(square_hierarchy[2]), square_hierarchy[2])
        assert report.psd_ok
        assert report.c_d_observed == 0.0

    def test_negative_eigenvalue_detected(self, square_hierarchy):
        mesh = square_hierarchy[2]
        blocks = np.zeros((mesh.num_triangles, 2, 2))
        blocks[3] = np.diag([0.2, -0.1])
        bad = StabilizationTensor(blocks, "none", 0.0)
        with pytest.raises(InvariantViolation, match="element 3"):
            mf.verify_h1(bad, mesh)


class TestVerifyH2DMP:
    def test_laplacian_on_xz_mesh(self, square_spaces):
        # zero drift, zero tensor: the XZ mesh makes the stiffness an M-matrix
        space = square_spaces[3]
        drift = np.zeros((space.mesh.num_triangles, 2))
        assert mf.verify_h2_dmp(space, 1.0, None, drift=drift, trials=20, seed=0)

    def test_constant_drift_with_xz_tensor(self, square_hierarchy):
        for level in (2, 3, 4):
            mesh = square_hierarchy[level]
            space = mf.P1Space(mesh)
            tensor = mf.build_xz_tensor(mesh, 1.0)
            drift = np.tile([1.0, 0.0], (mesh.num_triangles, 1))
            assert mf.verify_h2_dmp(space, 1.0, tensor, drift=drift, trials=10, seed=1)

    def test_random_drifts_both_families(self, square_spaces, rhombus_hierarchy):
        space = square_spaces[3]
        tensor = mf.build_xz_tensor(space.mesh, 1.0)
        assert mf.verify_h2_dmp(space, 1.0, tensor, L_H=1.0, trials=50, seed=2)
        mesh = rhombus_hierarchy[3]
        space_r = mf.P1Space(mesh)
        tensor_r = mf.build_acute_tensor(mesh, 1.0, 1.0)
        assert mf.verify_h2_dmp(space_r, 1.0, tensor_r, L_H=1.0, trials=50, seed=2)

    def test_detects_violation_without_stabilization(self, square_spaces):
        # strong unstabilized drift on the diagonal edges breaks the M-matrix
        # structure; the sampler must be able to report failure
        space = square_spaces[3]
        drift = np.tile([8.0, 8.0], (space.mesh.num_triangles, 1))
        result = mf.verify_h2_dmp(space, 0.05, None, drift=drift, trials=40, seed=3)
        assert result is False

    def test_disk_drift_radius(self, square_hierarchy):
        rng = np.random.default_rng(0)
        drift = random_disk_drift(square_hierarchy[3], 2.5, rng)
        assert np.hypot(drift[:, 0], drift[:, 1]).max() <= 2.5

    def test_requires_drift_or_bound(self, square_spaces):
        with pytest.raises(ConfigurationError):
            mf.verify_h2_dmp(square_spaces[2], 1.0, None)


class TestExport:
    def test_tensor_csv(self, tmp_path, square_hierarchy):
        from mfgfem.stabilization import tensor_to_csv
        mesh = square_hierarchy[2]
        tensor = mf.build_xz_tensor(mesh, 1.0)
        path = tmp_path / "tensor.csv"
        tensor_to_csv(tensor, mesh, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "element,d00,d01,d10,d11,frobenius,diam"
        assert len(lines) == 1 + mesh.num_triangles
        # round-trip a representative entry
        parts = lines[1].split(",")
        assert float(parts[1]) == tensor.per_element[0, 0, 0]
