"""Element-wise assembly of the discrete operators and load vectors.

All operators act on interior dofs only (matching the space); ``full=True``
assembles over every vertex for diagnostics such as row-sum checks.  Matrices
are returned as ``scipy.sparse`` CSR.

Drift fields are element-wise constant 2-vectors.  Because P1 gradients are
constant per triangle, the Hamiltonian and drift terms are integrated exactly
with the single weight area/3 per basis function when the Hamiltonian does not
depend on x; an x-dependent Hamiltonian falls back to degree-2 quadrature.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import ConfigurationError
from .fespace import quadrature, quadrature_points_xy


def _scatter(space, blocks, full):
    """Sum (nt, 3, 3) local blocks into a CSR matrix."""
    mesh = space.mesh
    if full:
        dofs = mesh.triangles
        n = mesh.num_vertices
    else:
        dofs = space.elem_dofs
        n = space.ndof
    rows = np.repeat(dofs, 3, axis=1).ravel()      # i index varies slowly
    cols = np.tile(dofs, (1, 3)).ravel()           # j index varies fast
    vals = blocks.ravel()
    keep = (rows >= 0) & (cols >= 0)
    mat = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))
    return mat.tocsr()


def _scatter_load(space, elem_loads, full):
    """Sum (nt, 3) per-element nodal loads into a vector."""
    mesh = space.mesh
    if full:
        dofs = mesh.triangles
        n = mesh.num_vertices
    else:
        dofs = space.elem_dofs
        n = space.ndof
    out = np.zeros(n)
    flat_dofs = dofs.ravel()
    keep = flat_dofs >= 0
    np.add.at(out, flat_dofs[keep], elem_loads.ravel()[keep])
    return out


def _diffusion_tensors(space, nu, tensor):
    A = np.broadcast_to(nu * np.eye(2), (space.mesh.num_triangles, 2, 2))
    if tensor is not None:
        per_element = tensor.per_element
        if per_element.shape[0] != space.mesh.num_triangles:
            raise ConfigurationError("stabilization tensor does not match the mesh")
        A = A + per_element
    return A


def assemble_diffusion(space, nu, tensor=None, full=False):
    """Stiffness of the diffusion tensor nu*I + D: sum_K area (A grad xi_j).grad xi_i."""
    A = _diffusion_tensors(space, nu, tensor)
    g = space.elem_grads
    blocks = np.einsum("t,tid,tde,tje->tij", space.elem_areas, g, A, g)
    return _scatter(space, blocks, full)


def assemble_hjb_drift(space, drift, full=False, drift_bound=None):
    """Advection tested against nodal basis: B[i,j] = sum_K (b.grad xi_j) area/3."""
    drift = np.asarray(drift, dtype=float)
    if drift_bound is not None:
        worst = np.hypot(drift[:, 0], drift[:, 1]).max(initial=0.0)
        if worst > drift_bound * (1 + 1e-12):
            warnings.warn(f"drift magnitude {worst:.3g} exceeds bound {drift_bound:.3g}",
                          stacklevel=2)
    col = np.einsum("td,tjd->tj", drift, space.elem_grads) * (space.elem_areas / 3.0)[:, None]
    blocks = np.repeat(col[:, None, :], 3, axis=1)  # same for every test function i
    return _scatter(space, blocks, full)


def assemble_kfp_drift(space, drift, full=False, drift_bound=None):
    """Divergence-form advection: C[i,j] = sum_K (b.grad xi_i) area/3 (adjoint pattern)."""
    drift = np.asarray(drift, dtype=float)
    if drift_bound is not None:
        worst = np.hypot(drift[:, 0], drift[:, 1]).max(initial=0.0)
        if worst > drift_bound * (1 + 1e-12):
            warnings.warn(f"drift magnitude {worst:.3g} exceeds bound {drift_bound:.3g}",
                          stacklevel=2)
    row = np.einsum("td,tid->ti", drift, space.elem_grads) * (space.elem_areas / 3.0)[:, None]
    blocks = np.repeat(row[:, :, None], 3, axis=2)  # same for every trial function j
    return _scatter(space, blocks, full)


_MASS_BLOCK = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def assemble_mass(space, full=False):
    blocks = space.elem_areas[:, None, None] * _MASS_BLOCK
    return _scatter(space, blocks, full)


def assemble_h1_gram(space):
    """Gram matrix of the full H1 inner product (mass + unit stiffness)."""
    return assemble_mass(space) + assemble_diffusion(space, 1.0)


def grad_p_field(space, hamiltonian, u):
    """Element-wise drift dH/dp(x_K, grad u|_K), shape (nt, 2)."""
    grads = u.element_gradients()
    return np.asarray(hamiltonian.grad_p(space.mesh.barycenters, grads), dtype=float)


def hamiltonian_load(space, hamiltonian, u, full=False):
    """Load vector of H[grad u] against the nodal basis.

    Exact (weight area/3) for x-independent Hamiltonians; degree-2 quadrature
    of the x-dependence otherwise.
    """
    grads = u.element_gradients()
    if not getattr(hamiltonian, "x_dependent", False):
        hvals = np.asarray(hamiltonian.value(space.mesh.barycenters, grads), dtype=float)
        loads = (hvals * space.elem_areas / 3.0)[:, None] * np.ones(3)
        return _scatter_load(space, loads, full)
    rule = quadrature(2)
    xq = quadrature_points_xy(space.mesh, rule)            # (nt, nq, 2)
    hq = np.asarray(hamiltonian.value(xq, grads[:, None, :]), dtype=float)
    loads = np.einsum("tq,q,qi->ti", hq, rule.weights, rule.points) * space.elem_areas[:, None]
    return _scatter_load(space, loads, full)


def element_constant_load(space, values, full=False):
    """Load of a piecewise constant scalar field against the basis (area/3 rule)."""
    loads = (np.asarray(values, dtype=float) * space.elem_areas / 3.0)[:, None] * np.ones(3)
    return _scatter_load(space, loads, full)


def assemble_kfp_operator(space, u, nu, tensor, hamiltonian):
    """Discrete KFP operator at a fixed value function u: diffusion + divergence drift."""
    drift = grad_p_field(space, hamiltonian, u)
    K = assemble_diffusion(space, nu, tensor)
    C = assemble_kfp_drift(space, drift, drift_bound=hamiltonian.L_H)
    return K + C


def assemble_hjb_nonlinear_residual(space, u, m, problem, tensor):
    """Residual load of the discrete HJB equation at (m, u):
    <F[m], xi_i> - int A grad u . grad xi_i + H[grad u] xi_i."""
    K = assemble_diffusion(space, problem.nu, tensor)
    return (problem.coupling.load_vector(space, m)
            - K @ u.coeffs
            - hamiltonian_load(space, problem.hamiltonian, u))


def assemble_kfp_residual(space, u, m, problem, tensor):
    """Residual load of the discrete KFP equation at (m, u):
    <G, xi_i> - int A grad m . grad xi_i + m dH/dp[grad u] . grad xi_i."""
    op = assemble_kfp_operator(space, u, problem.nu, tensor, problem.hamiltonian)
    return problem.source.load_vector(space) - op @ m.coeffs


def export_matrix_market(op, path, comment=""):
    scipy.io.mmwrite(path, sp.coo_matrix(op), comment=comment)
