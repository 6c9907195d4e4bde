"""Problem data for the stationary MFG system: coupling operators F, sources G
in the weak form <G, phi> = int g0 phi + gtilde . grad phi, and manufactured
instances with known exact pairs (u*, m*).

The manufactured construction works backwards from the exact pair:

* coupling offset  f0 := -nu lap(u*) + H[grad u*] - c_F m*   (forces the HJB row),
* source           gtilde := nu grad(m*) + m* dH/dp[grad u*]  (forces the KFP row),

so no second derivatives of m* are ever needed and the pairing assembled for
the source is exactly the one the discrete KFP equation tests against.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from . import assembly
from .errors import ConfigurationError
from .fespace import P1Space, quadrature, quadrature_points_xy
from .hamiltonian import HamiltonianSpec, huber_ball
from .mesh import generate_acute_rhombus, generate_structured_square

NONNEG_TOL = -1e-10


# -- exact solution fields --------------------------------------------------

@dataclass(frozen=True)
class ScalarField:
    """C^2 scalar field bundle: value, gradient and (optionally) Laplacian."""
    value: Callable                      # (x, y) -> (...)
    grad: Callable                       # (x, y) -> (..., 2)
    laplacian: Optional[Callable] = None


@dataclass(frozen=True)
class ExactSolution:
    u: ScalarField
    m: ScalarField


def sine_product_field(transform=None):
    """sin(pi s) sin(pi t) in the coordinates (s, t) = A^-1 (x, y).

    With the default identity map this is the unit-square eigenfunction; for a
    parallelogram image A [0,1]^2 it vanishes on that boundary instead.
    """
    A = np.eye(2) if transform is None else np.asarray(transform, dtype=float)
    Ainv = np.linalg.inv(A)
    C = Ainv @ Ainv.T  # metric factors for the mapped Laplacian

    def _st(x, y):
        s = Ainv[0, 0] * x + Ainv[0, 1] * y
        t = Ainv[1, 0] * x + Ainv[1, 1] * y
        return s, t

    def value(x, y):
        s, t = _st(x, y)
        return np.sin(np.pi * s) * np.sin(np.pi * t)

    def grad(x, y):
        s, t = _st(x, y)
        gs = np.pi * np.cos(np.pi * s) * np.sin(np.pi * t)
        gt = np.pi * np.sin(np.pi * s) * np.cos(np.pi * t)
        return np.stack([Ainv[0, 0] * gs + Ainv[1, 0] * gt,
                         Ainv[0, 1] * gs + Ainv[1, 1] * gt], axis=-1)

    def laplacian(x, y):
        s, t = _st(x, y)
        ss = np.sin(np.pi * s) * np.sin(np.pi * t)
        cc = np.cos(np.pi * s) * np.cos(np.pi * t)
        return np.pi ** 2 * (-(C[0, 0] + C[1, 1]) * ss + 2.0 * C[0, 1] * cc)

    return ScalarField(value=value, grad=grad, laplacian=laplacian)


def zero_field():
    def value(x, y):
        return np.zeros(np.broadcast(x, y).shape)

    def grad(x, y):
        return np.zeros(np.broadcast(x, y).shape + (2,))

    return ScalarField(value=value, grad=grad, laplacian=value)


RHOMBUS_TRANSFORM = np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]])

EXACT_REGISTRY = {
    "sine_product": sine_product_field,
    "zero": lambda transform=None: zero_field(),
}


# -- coupling ----------------------------------------------------------------

@dataclass
class CouplingF:
    """F[m] = c_F m + (K * m) + f0; the kernel part is present only for the
    nonlocal variant and is realized as a dense symmetric PSD matrix built for
    one specific space."""
    kind: str                                  # local_linear | nonlocal_convolution
    c_F: float
    L_F: float
    offset: Optional[Callable] = None          # f0(x, y)
    kernel_matrix: Optional[np.ndarray] = None
    kernel_space: Optional[P1Space] = None
    _offset_cache: weakref.WeakKeyDictionary = field(
        default_factory=weakref.WeakKeyDictionary, repr=False)

    def offset_load(self, space, degree=4):
        """<f0, xi_i> by quadrature (cached per space)."""
        if self.offset is None:
            return np.zeros(space.ndof)
        if space not in self._offset_cache:
            self._offset_cache[space] = scalar_load(space, self.offset, degree=degree)
        return self._offset_cache[space]

    def load_vector(self, space, m=None):
        """<F[m], xi_i> for a P1 density m (None means m = 0)."""
        out = self.offset_load(space).copy()
        if m is not None:
            out += self.c_F * (assembly_mass(space) @ m.coeffs)
            if self.kernel_matrix is not None:
                if self.kernel_space is not space:
                    raise ConfigurationError(
                        "nonlocal coupling was built for a different space")
                out += self.kernel_matrix @ m.coeffs
        return out


def local_linear_coupling(c_F, offset=None):
    return CouplingF(kind="local_linear", c_F=float(c_F), L_F=float(c_F), offset=offset)


def nonlocal_convolution_coupling(space, c_F, kernel, offset=None, degree=2):
    """c_F m + (K * m) + f0 with K(x, y) a symmetric PSD kernel function.

    The discrete kernel matrix C[i,j] = int int K(x,y) xi_i(x) xi_j(y) dx dy is
    dense; intended for small spaces.
    """
    rule = quadrature(degree)
    mesh = space.mesh
    xq = quadrature_points_xy(mesh, rule).reshape(-1, 2)          # (NQ, 2)
    wq = (mesh.areas[:, None] * rule.weights[None, :]).ravel()     # (NQ,)
    # basis values at quadrature points, restricted to interior dofs
    nt, nq = mesh.num_triangles, len(rule.weights)
    basis = np.zeros((nt * nq, space.ndof))
    rows = np.arange(nt * nq)
    for i in range(3):
        dofs = np.repeat(space.elem_dofs[:, i], nq)
        vals = np.tile(rule.points[:, i], nt)
        keep = dofs >= 0
        basis[rows[keep], dofs[keep]] += vals[keep]
    Kq = kernel(xq[:, None, :], xq[None, :, :])
    C = basis.T @ (wq[:, None] * Kq * wq[None, :]) @ basis
    C = 0.5 * (C + C.T)
    mass = assembly_mass(space).toarray()
    lam_max = float(scipy.linalg.eigh(C, mass, eigvals_only=True)[-1])
    return CouplingF(kind="nonlocal_convolution", c_F=float(c_F),
                     L_F=float(c_F) + max(lam_max, 0.0), offset=offset,
                     kernel_matrix=C, kernel_space=space)


def gaussian_kernel(width, scale=1.0):
    """K(x, y) = scale * exp(-|x - y|^2 / (2 width^2)); symmetric and PSD."""

    def kernel(x, y):
        d2 = ((np.asarray(x) - np.asarray(y)) ** 2).sum(axis=-1)
        return scale * np.exp(-0.5 * d2 / width ** 2)

    return kernel


# -- source -------------------------------------------------------------------

@dataclass
class SourceG:
    """G = g0 - div(gtilde) realized through <G, phi> = int g0 phi + gtilde . grad phi.

    ``exact_load`` overrides the quadrature path for sources whose pairing has
    a closed form (used for indicator fields, where clipped element areas make
    the load exact even when the jump crosses element interiors).
    """
    g0: Optional[Callable] = None          # (x, y) -> (...)
    g_tilde: Optional[Callable] = None     # (x, y) -> (..., 2)
    nonneg_certified: bool = False
    label: str = ""
    exact_load: Optional[Callable] = None  # space -> load vector
    _load_cache: weakref.WeakKeyDictionary = field(
        default_factory=weakref.WeakKeyDictionary, repr=False)

    def load_vector(self, space, degree=4):
        per_space = self._load_cache.setdefault(space, {})
        if degree not in per_space:
            per_space[degree] = source_load(space, self, degree=degree)
        return per_space[degree]


def scalar_load(space, f, degree=4, full=False):
    """<f, xi_i> by symmetric quadrature of the stated degree."""
    rule = quadrature(degree)
    mesh = space.mesh
    xq = quadrature_points_xy(mesh, rule)
    fq = np.asarray(f(xq[..., 0], xq[..., 1]), dtype=float)
    fq = np.broadcast_to(fq, xq.shape[:2])
    loads = np.einsum("tq,q,qi->ti", fq, rule.weights, rule.points) * mesh.areas[:, None]
    return assembly._scatter_load(space, loads, full)


def vector_load(space, gt, degree=4, full=False):
    """<gtilde, grad xi_i> by quadrature; exact when gtilde is constant per element."""
    rule = quadrature(degree)
    mesh = space.mesh
    xq = quadrature_points_xy(mesh, rule)
    gq = np.asarray(gt(xq[..., 0], xq[..., 1]), dtype=float)   # (nt, nq, 2)
    mean = np.einsum("tqd,q->td", gq, rule.weights)
    loads = np.einsum("td,tid->ti", mean, space.elem_grads) * mesh.areas[:, None]
    return assembly._scatter_load(space, loads, full)


def source_load(space, source, degree=4, full=False, force_quadrature=False):
    if source.exact_load is not None and not force_quadrature and not full:
        return source.exact_load(space)
    out = np.zeros(space.mesh.num_vertices if full else space.ndof)
    if source.g0 is not None:
        out += scalar_load(space, source.g0, degree=degree, full=full)
    if source.g_tilde is not None:
        out += vector_load(space, source.g_tilde, degree=degree, full=full)
    return out


def halfplane_clipped_areas(mesh, threshold):
    """Area of each triangle's intersection with the half-plane {x < threshold}."""
    corners = mesh.vertices[mesh.triangles]          # (nt, 3, 2)
    below = corners[..., 0] < threshold
    count = below.sum(axis=1)
    areas = np.where(count == 3, mesh.areas, 0.0)
    for t in np.nonzero((count > 0) & (count < 3))[0]:
        poly = corners[t]
        clipped = []
        for i in range(3):
            a, b = poly[i], poly[(i + 1) % 3]
            a_in, b_in = a[0] < threshold, b[0] < threshold
            if a_in:
                clipped.append(a)
            if a_in != b_in:
                # intersection of segment ab with the vertical line x = threshold
                s = (threshold - a[0]) / (b[0] - a[0])
                clipped.append(a + s * (b - a))
        if len(clipped) >= 3:
            poly_arr = np.array(clipped)
            x, y = poly_arr[:, 0], poly_arr[:, 1]
            areas[t] = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    return areas


def assemble_source_load(space, source, degree=4):
    """Load vector b_i = int g0 xi_i + gtilde . grad xi_i dx."""
    return source_load(space, source, degree=degree)


# -- problems -----------------------------------------------------------------

@dataclass
class MFGProblem:
    nu: float
    hamiltonian: HamiltonianSpec
    coupling: CouplingF
    source: SourceG
    domain: str = "xz_square"
    exact: Optional[ExactSolution] = None

    def __post_init__(self):
        if self.nu <= 0:
            raise ConfigurationError("nu must be positive")


def _certification_mesh(domain, level):
    n = 2 ** level
    if domain == "acute_rhombus":
        return generate_acute_rhombus(n)
    return generate_structured_square(n)


def make_manufactured(nu, hamiltonian, c_F, u_star=None, m_star=None,
                      domain="xz_square", certify_level=6):
    """Manufactured instance with exact pair (u*, m*), defaulting to the mapped
    sine product on the requested domain.

    The source nonnegativity flag is set by sampling the nodal loads <G, xi_i>
    on the finest experiment mesh of the family; the construction itself does
    not guarantee a sign.
    """
    if not hamiltonian.smooth:
        raise ConfigurationError("manufactured instances require a smooth Hamiltonian")
    transform = RHOMBUS_TRANSFORM if domain == "acute_rhombus" else None
    if u_star is None:
        u_star = sine_product_field(transform)
    if m_star is None:
        m_star = sine_product_field(transform)
    if u_star.laplacian is None:
        raise ConfigurationError("u_star needs a Laplacian callable")

    def f0(x, y):
        xy = np.stack(np.broadcast_arrays(x, y), axis=-1)
        return (-nu * u_star.laplacian(x, y)
                + hamiltonian.value(xy, u_star.grad(x, y))
                - c_F * m_star.value(x, y))

    def g_tilde(x, y):
        xy = np.stack(np.broadcast_arrays(x, y), axis=-1)
        drift = hamiltonian.grad_p(xy, u_star.grad(x, y))
        return nu * m_star.grad(x, y) + m_star.value(x, y)[..., None] * drift

    source = SourceG(g0=None, g_tilde=g_tilde, nonneg_certified=False,
                     label="manufactured")
    if certify_level is not None:
        space = P1Space(_certification_mesh(domain, certify_level))
        loads = source_load(space, source)
        source.nonneg_certified = bool(loads.min(initial=0.0) >= NONNEG_TOL)

    return MFGProblem(nu=float(nu), hamiltonian=hamiltonian,
                      coupling=local_linear_coupling(c_F, offset=f0),
                      source=source, domain=domain,
                      exact=ExactSolution(u=u_star, m=m_star))


def make_g_one_problem(nu=1.0, hamiltonian=None, c_F=1.0, domain="xz_square"):
    """Instance with G identically 1: <G, phi> = int phi >= 0 for phi >= 0, so
    the nonnegativity certificate holds by construction.  No exact solution."""
    if hamiltonian is None:
        hamiltonian = huber_ball(1.0)

    def one(x, y):
        return np.ones(np.broadcast(x, y).shape)

    source = SourceG(g0=one, g_tilde=None, nonneg_certified=True, label="g_one")
    return MFGProblem(nu=float(nu), hamiltonian=hamiltonian,
                      coupling=local_linear_coupling(c_F),
                      source=source, domain=domain, exact=None)


def make_rough_density_problem(nu=1.0, hamiltonian=None, c_F=1.0, jump_x=1.0 / 3.0):
    """Convex-domain instance with distributional source only in H^-1:
    gtilde is the indicator of {x < jump_x} times (1, 0), a line source that
    kinks the density so it stays outside H^2.

    The jump defaults to x = 1/3, deliberately OFF the dyadic grid lines of the
    structured square family: a jump aligned with mesh edges would make the
    density's kink exactly representable by P1 functions, restoring optimal
    rates and erasing the regularity gap this instance exists to exhibit.  The
    pairing <G, phi> = int_{x < jump_x} d(phi)/dx dx is still integrated exactly,
    via half-plane clipped element areas, since grad(phi) is constant per cell.

    The coupling offset reuses the smooth manufactured field for u so that the
    value function stays H^2-regular while the density does not; there is no
    closed-form exact pair (reference solutions are used instead), and <G, phi>
    is not sign-definite, so the nonnegativity certificate is withheld.
    """
    if hamiltonian is None:
        hamiltonian = huber_ball(1.0)
    u_rich = sine_product_field()
    jump = float(jump_x)

    def f0(x, y):
        xy = np.stack(np.broadcast_arrays(x, y), axis=-1)
        return -nu * u_rich.laplacian(x, y) + hamiltonian.value(xy, u_rich.grad(x, y))

    def g_tilde(x, y):
        left = np.where(np.asarray(x) < jump, 1.0, 0.0)
        return np.stack([left, np.zeros_like(left)], axis=-1)

    def exact_load(space):
        clipped = halfplane_clipped_areas(space.mesh, jump)
        loads = space.elem_grads[:, :, 0] * clipped[:, None]
        return assembly._scatter_load(space, loads, False)

    source = SourceG(g0=None, g_tilde=g_tilde, nonneg_certified=False,
                     label="rough", exact_load=exact_load)
    return MFGProblem(nu=float(nu), hamiltonian=hamiltonian,
                      coupling=local_linear_coupling(c_F, offset=f0),
                      source=source, domain="xz_square", exact=None)


def make_zero_problem(nu=1.0, hamiltonian=None, c_F=1.0, domain="xz_square"):
    """Zero data with H(0) subtracted so that (0, 0) is the exact solution."""
    if hamiltonian is None:
        hamiltonian = huber_ball(1.0)

    def f0(x, y):
        xy = np.stack(np.broadcast_arrays(x, y), axis=-1)
        return hamiltonian.value(xy, np.zeros(xy.shape))

    source = SourceG(g0=None, g_tilde=None, nonneg_certified=True, label="zero")
    return MFGProblem(nu=float(nu), hamiltonian=hamiltonian,
                      coupling=local_linear_coupling(c_F, offset=f0),
                      source=source, domain=domain,
                      exact=ExactSolution(u=zero_field(), m=zero_field()))


def assembly_mass(space):
    """Mass matrix memoized on the space instance."""
    cached = getattr(space, "_mass_cache", None)
    if cached is None:
        cached = assembly.assemble_mass(space)
        space._mass_cache = cached
    return cached
