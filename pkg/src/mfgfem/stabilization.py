"""Stabilization tensors for the two mesh regimes, plus numerical verification
of the structural assumptions: optimal-order boundedness of the tensor and the
discrete maximum principle for the whole advection class it must control.

Two constructions:

* ``build_xz_tensor`` - rank-one edge tensors omega_E t_E (x) t_E summed over
  the internal edges of each element, for meshes satisfying the XZ condition.
  The weight is omega_E = omega_factor * L_H * diam(E), gated against the
  admissible window whose lower endpoint is delta/(2(d+1)) = delta/6 in 2D
  (delta = observed shape regularity).
* ``build_acute_tensor`` - isotropic artificial diffusion
  max(mu L_H h_K / (sigma_k sin theta) - nu, 0) I on strictly acute meshes,
  which vanishes identically once the mesh is fine enough.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from . import assembly
from .errors import ConfigurationError, InvariantViolation, SolverError
from .mesh import check_acute, check_xz

PSD_TOL = -1e-12
DMP_TOL = -1e-10


@dataclass
class StabilizationTensor:
    """Symmetric PSD 2x2 matrix per triangle."""
    per_element: np.ndarray  # (nt, 2, 2)
    kind: str                # none | xz_edge | acute_artificial
    c_d_observed: float      # max_K |D_K|_F / diam(K)

    @property
    def is_zero(self):
        return not np.any(self.per_element)


def _frobenius(per_element):
    return np.sqrt((per_element ** 2).sum(axis=(1, 2)))


def _observed_cd(per_element, mesh):
    if len(per_element) == 0:
        return 0.0
    return float((_frobenius(per_element) / mesh.diameters).max())


def none_tensor(mesh):
    """Explicit zero tensor (stabilization disabled)."""
    return StabilizationTensor(np.zeros((mesh.num_triangles, 2, 2)), "none", 0.0)


def build_xz_tensor(mesh, L_H, omega_factor=None):
    """Edge-tensor stabilization for XZ meshes.

    ``omega_factor`` scales every weight as omega_E = omega_factor L_H diam(E)
    and must exceed delta/6; the default delta/3 doubles the lower endpoint of
    the admissible window, keeping the stabilization minimal.
    """
    if L_H < 0:
        raise ConfigurationError("L_H must be nonnegative")
    ok, worst = check_xz(mesh)
    if not ok:
        raise ConfigurationError(
            f"mesh violates the XZ condition (worst cotangent sum {worst:.6g})")
    delta = mesh.shape_regularity
    if omega_factor is None:
        omega_factor = delta / 3.0
    if omega_factor <= delta / 6.0:
        raise ConfigurationError(
            f"omega_factor {omega_factor:.6g} is at or below the admissible weight "
            f"window's lower endpoint delta/6 = {delta / 6.0:.6g}")

    per_element = np.zeros((mesh.num_triangles, 2, 2))
    internal = np.nonzero(mesh.internal_edge_mask)[0]
    if len(internal) and L_H > 0:
        tang = (mesh.vertices[mesh.edges[internal, 1]]
                - mesh.vertices[mesh.edges[internal, 0]])
        lengths = mesh.edge_lengths[internal]
        tang = tang / lengths[:, None]
        omega = omega_factor * L_H * lengths
        rank1 = omega[:, None, None] * np.einsum("ei,ej->eij", tang, tang)
        for col in range(2):
            adjacent = mesh.edge_triangles[internal, col]
            valid = adjacent >= 0
            np.add.at(per_element, adjacent[valid], rank1[valid])
    return StabilizationTensor(per_element, "xz_edge", _observed_cd(per_element, mesh))


def build_acute_tensor(mesh, L_H, nu, mu=1.1):
    """Artificial diffusion for strictly acute meshes (vanishes on fine meshes)."""
    if mu <= 1.0:
        raise ConfigurationError("mu must be > 1")
    if nu <= 0.0:
        raise ConfigurationError("nu must be positive")
    if L_H < 0:
        raise ConfigurationError("L_H must be nonnegative")
    theta = check_acute(mesh)
    if theta <= 0.0:
        raise ConfigurationError("mesh is not strictly acute (theta = 0)")

    grad_norms = np.linalg.norm(mesh.basis_gradients, axis=2)  # (nt, 3)
    sigma_K = mesh.diameters * grad_norms.min(axis=1)
    sigma_k = float(sigma_K.min())
    coeff = np.maximum(mu * L_H * mesh.diameters / (sigma_k * np.sin(theta)) - nu, 0.0)
    per_element = coeff[:, None, None] * np.eye(2)
    return StabilizationTensor(per_element, "acute_artificial",
                               _observed_cd(per_element, mesh))


@dataclass
class H1Report:
    psd_ok: bool
    min_eigenvalue: float
    c_d_observed: float
    worst_element: int


def verify_h1(tensor, mesh):
    """Assert per-element symmetry and positive semi-definiteness; report the
    observed optimal-order constant max_K |D_K|_F / diam(K)."""
    D = tensor.per_element
    if D.shape[0] != mesh.num_triangles:
        raise ConfigurationError("tensor does not match mesh")
    asym = np.abs(D[:, 0, 1] - D[:, 1, 0]).max(initial=0.0)
    if asym > 1e-14:
        raise InvariantViolation(f"tensor not symmetric (max off-diagonal gap {asym:.3g})")
    # closed-form eigenvalues of symmetric 2x2
    mean = 0.5 * (D[:, 0, 0] + D[:, 1, 1])
    radius = np.sqrt((0.5 * (D[:, 0, 0] - D[:, 1, 1])) ** 2 + D[:, 0, 1] ** 2)
    lam_min = mean - radius
    worst = int(np.argmin(lam_min)) if len(lam_min) else -1
    min_eig = float(lam_min.min(initial=0.0))
    if min_eig < PSD_TOL:
        raise InvariantViolation(
            f"tensor not positive semi-definite on element {worst} "
            f"(eigenvalue {min_eig:.3g})")
    return H1Report(True, min_eig, _observed_cd(D, mesh), worst)


def tensor_to_csv(tensor, mesh, path):
    """Per-element dump 'element,d00,d01,d10,d11,frobenius,diam' for debugging."""
    frob = _frobenius(tensor.per_element)
    with open(path, "w") as fh:
        fh.write("element,d00,d01,d10,d11,frobenius,diam\n")
        for t, D in enumerate(tensor.per_element):
            fh.write(f"{t},{D[0, 0]:.17g},{D[0, 1]:.17g},{D[1, 0]:.17g},"
                     f"{D[1, 1]:.17g},{frob[t]:.17g},{mesh.diameters[t]:.17g}\n")


def random_disk_drift(mesh, L_H, rng):
    """Element-wise constant drift drawn uniformly from the disk of radius L_H."""
    nt = mesh.num_triangles
    radius = L_H * np.sqrt(rng.uniform(size=nt))
    angle = rng.uniform(0.0, 2.0 * np.pi, size=nt)
    return np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])


def verify_h2_dmp(space, nu, tensor, L_H=None, drift=None, trials=200, seed=0,
                  tol=DMP_TOL):
    """Sample the discrete maximum principle over the advection class.

    For each trial, assemble L = diffusion(nu, D) + drift advection (the drift
    either fixed, or freshly drawn from the disk of radius L_H), solve
    L v = b and L^T v = b for a random nonnegative load b, and require
    v >= tol nodally in both cases.  Returns True iff every trial passes.
    """
    if drift is None and L_H is None:
        raise ConfigurationError("provide either a fixed drift field or L_H")
    rng = np.random.default_rng(seed)
    K = assembly.assemble_diffusion(space, nu, tensor)
    for _ in range(max(int(trials), 1)):
        b_field = drift if drift is not None else random_disk_drift(space.mesh, L_H, rng)
        L = K + assembly.assemble_hjb_drift(space, b_field, drift_bound=L_H)
        try:
            lu = spla.splu(L.tocsc())
        except RuntimeError as exc:
            raise SolverError(
                "singular operator in the advection class; this contradicts the "
                "uniform invertibility assumption") from exc
        load = rng.uniform(0.0, 1.0, size=space.ndof)
        if lu.solve(load).min(initial=0.0) < tol:
            return False
        if lu.solve(load, trans="T").min(initial=0.0) < tol:
            return False
    return True
