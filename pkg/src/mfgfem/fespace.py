"""Nodal P1 finite element space on a :class:`~mfgfem.mesh.Mesh2D`.

Degrees of freedom are the interior vertices only; boundary values are
identically zero (homogeneous Dirichlet).  Gradients of discrete functions are
constant on each triangle, which is what makes the Hamiltonian terms of the
discrete system computable element by element.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError


class P1Space:
    """Interior-vertex P1 space: dof maps, basis gradients, element areas."""

    def __init__(self, mesh):
        self.mesh = mesh
        interior = np.nonzero(mesh.interior_vertex_mask)[0]
        self.vertex_of_dof = interior
        self.dof_of_vertex = -np.ones(mesh.num_vertices, dtype=np.int64)
        self.dof_of_vertex[interior] = np.arange(len(interior))
        self.ndof = len(interior)
        self.elem_dofs = self.dof_of_vertex[mesh.triangles]  # -1 marks boundary
        self.elem_grads = mesh.basis_gradients
        self.elem_areas = mesh.areas
        for arr in (self.vertex_of_dof, self.dof_of_vertex, self.elem_dofs):
            arr.setflags(write=False)

    def zero_function(self):
        return P1Function(self, np.zeros(self.ndof))

    def function_from_nodal(self, full_values):
        """Restrict a full per-vertex vector to interior dofs."""
        full_values = np.asarray(full_values, dtype=float)
        if full_values.shape != (self.mesh.num_vertices,):
            raise ConfigurationError("nodal vector has wrong length")
        return P1Function(self, full_values[self.vertex_of_dof].copy())

    def __repr__(self):
        return f"P1Space(ndof={self.ndof}, mesh={self.mesh!r})"


@dataclass
class P1Function:
    """Piecewise affine function vanishing on the boundary.

    ``coeffs`` holds the interior nodal values in dof order.
    """
    space: P1Space
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.ndof,):
            raise ConfigurationError(
                f"coefficient vector has length {self.coeffs.shape}, expected {self.space.ndof}")

    def nodal_values(self):
        """Full per-vertex value vector, zeros at boundary vertices."""
        full = np.zeros(self.space.mesh.num_vertices)
        full[self.space.vertex_of_dof] = self.coeffs
        return full

    def eval(self, tri, bary):
        """Value at a barycentric point of triangle ``tri``."""
        vals = self.nodal_values()[self.space.mesh.triangles[tri]]
        return float(np.dot(vals, np.asarray(bary, dtype=float)))

    def grad_on_element(self, tri):
        """Constant gradient on triangle ``tri`` as a 2-vector."""
        vals = self.nodal_values()[self.space.mesh.triangles[tri]]
        return vals @ self.space.elem_grads[tri]

    def element_gradients(self):
        """Gradients on all triangles at once, shape (nt, 2)."""
        vals = self.nodal_values()[self.space.mesh.triangles]  # (nt, 3)
        return np.einsum("ti,tid->td", vals, self.space.elem_grads)

    def values_at_quadrature(self, rule):
        """Values at the physical quadrature points of every triangle, (nt, nq)."""
        vals = self.nodal_values()[self.space.mesh.triangles]
        return vals @ rule.points.T

    def __add__(self, other):
        return P1Function(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return P1Function(self.space, self.coeffs - other.coeffs)

    def __rmul__(self, scalar):
        return P1Function(self.space, float(scalar) * self.coeffs)


def interpolate(space, f):
    """Nodal interpolant: coeffs[i] = f(x_i, y_i) at interior vertices.

    ``f`` must accept numpy arrays (x, y) elementwise.
    """
    xy = space.mesh.vertices[space.vertex_of_dof]
    values = np.asarray(f(xy[:, 0], xy[:, 1]), dtype=float)
    values = np.broadcast_to(values, (space.ndof,)).copy()
    if not np.all(np.isfinite(values)):
        raise NumericError("interpolated field is non-finite at an interior vertex")
    return P1Function(space, values)


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric rule on the reference triangle; weights sum to one and are
    scaled by the element area at the point of use."""
    points: np.ndarray   # (nq, 3) barycentric coordinates
    weights: np.ndarray  # (nq,), positive
    degree: int


def _perm3(a):
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


def _perm6(a, b):
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _rule(points, weights, degree):
    return QuadratureRule(points=np.array(points), weights=np.array(weights), degree=degree)


_CENTROID = _rule([(1 / 3, 1 / 3, 1 / 3)], [1.0], 1)

_DEG2 = _rule(_perm3(1 / 6), [1 / 3] * 3, 2)

# Strang-Fix degree 4, 6 points (also serves requested degree 3)
_A4, _WA4 = 0.445948490915965, 0.223381589678011
_B4, _WB4 = 0.091576213509771, 0.109951743655322
_DEG4 = _rule(_perm3(_A4) + _perm3(_B4), [_WA4] * 3 + [_WB4] * 3, 4)

_SQ15 = np.sqrt(15.0)
_DEG5 = _rule(
    [(1 / 3, 1 / 3, 1 / 3)] + _perm3((6 + _SQ15) / 21) + _perm3((6 - _SQ15) / 21),
    [9 / 40] + [(155 + _SQ15) / 1200] * 3 + [(155 - _SQ15) / 1200] * 3,
    5)

_DEG6 = _rule(
    _perm3(0.063089014491502) + _perm3(0.249286745170910)
    + _perm6(0.636502499121399, 0.310352451033785),
    [0.050844906370207] * 3 + [0.116786275726379] * 3 + [0.082851075618374] * 6,
    6)

_RULES = {1: _CENTROID, 2: _DEG2, 3: _DEG4, 4: _DEG4, 5: _DEG5, 6: _DEG6}


def quadrature(degree):
    """Positive-weight symmetric rule exact at least to ``degree`` (1..6)."""
    try:
        return _RULES[int(degree)]
    except (KeyError, ValueError):
        raise ConfigurationError(f"unsupported quadrature degree {degree!r}") from None


def quadrature_points_xy(mesh, rule):
    """Physical quadrature points on every triangle, shape (nt, nq, 2)."""
    corners = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    return np.einsum("qi,tid->tqd", rule.points, corners)


def function_to_csv(fn, path, header_comment=None):
    """Export 'vertex_index,x,y,value' rows, boundary vertices included."""
    mesh = fn.space.mesh
    full = fn.nodal_values()
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("vertex_index,x,y,value\n")
        for i, ((x, y), v) in enumerate(zip(mesh.vertices, full)):
            fh.write(f"{i},{x:.17g},{y:.17g},{v:.17g}\n")
