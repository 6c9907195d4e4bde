"""Control-set Hamiltonians H(x, p) = sup_a (b(x,a).p - f(x,a)) and the
constants that the discretization needs from them: the Lipschitz/drift bound
L_H, the growth constant C_H, and the Lipschitz constant L_Hp of dH/dp.

Both built-in instances are x-independent, but every callable accepts the
spatial argument so that x-dependent variants plug into the same machinery.
Callables are vectorized: x has shape (..., 2), p has shape (..., 2), values
have shape (...).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import ConfigurationError


@dataclass(frozen=True)
class HamiltonianSpec:
    value: Callable      # (x, p) -> H(x, p)
    grad_p: Callable     # (x, p) -> dH/dp(x, p), shape (..., 2)
    L_H: float           # Lipschitz constant in p; also the drift bound
    C_H: float           # growth constant: |H| <= C_H (|p| + 1)
    L_Hp: float          # Lipschitz constant of dH/dp in p
    smooth: bool         # True iff grad_p is globally Lipschitz
    x_dependent: bool = False
    label: str = ""


def huber_ball(R):
    """Hamiltonian of the control disk of radius R with quadratic running cost:
    H(p) = |p|^2/2 for |p| <= R, else R|p| - R^2/2 (the Huber function)."""
    if R <= 0:
        raise ConfigurationError("R must be positive")

    def value(x, p):
        p = np.asarray(p, dtype=float)
        r = np.linalg.norm(p, axis=-1)
        return np.where(r <= R, 0.5 * r ** 2, R * r - 0.5 * R ** 2)

    def grad_p(x, p):
        p = np.asarray(p, dtype=float)
        r = np.linalg.norm(p, axis=-1)
        scale = np.where(r <= R, 1.0, R / np.maximum(r, np.finfo(float).tiny))
        return scale[..., None] * p

    return HamiltonianSpec(value=value, grad_p=grad_p, L_H=float(R),
                           C_H=float(max(R, 0.5 * R * R)), L_Hp=1.0,
                           smooth=True, label=f"huber_ball(R={R})")


def finite_control(drifts, costs, smoothing=0.0):
    """Finite control set: H(p) = max_a (b_a.p - f_a).

    With ``smoothing`` epsilon > 0 the max is replaced by the log-sum-exp
    regularization, restoring a Lipschitz derivative (L_Hp = 2 max|b|^2 / eps,
    a safe upper bound).  With epsilon = 0 the instance is exact but only
    piecewise smooth: ties break to the lowest control index and the result is
    flagged non-smooth, outside what the Newton solver accepts.
    """
    B = np.atleast_2d(np.asarray(drifts, dtype=float))
    f = np.atleast_1d(np.asarray(costs, dtype=float))
    if B.size == 0 or f.size == 0:
        raise ConfigurationError("drifts and costs must be nonempty")
    if B.shape[0] != f.shape[0] or B.shape[1] != 2:
        raise ConfigurationError("drifts must be (n, 2) with matching costs (n,)")
    eps = float(smoothing)
    if eps < 0:
        raise ConfigurationError("smoothing must be nonnegative")
    bmax = float(np.linalg.norm(B, axis=1).max())
    label = f"finite_control(n={len(f)}, eps={eps})"

    if eps == 0.0:

        def value(x, p):
            scores = np.asarray(p, dtype=float) @ B.T - f
            return scores.max(axis=-1)

        def grad_p(x, p):
            scores = np.asarray(p, dtype=float) @ B.T - f
            best = scores.argmax(axis=-1)  # argmax keeps the lowest index on ties
            return B[best]

        return HamiltonianSpec(value=value, grad_p=grad_p, L_H=bmax,
                               C_H=float(max(bmax, np.abs(f).max())),
                               L_Hp=math.inf, smooth=False, label=label)

    def value(x, p):
        scores = (np.asarray(p, dtype=float) @ B.T - f) / eps
        return eps * logsumexp(scores, axis=-1)

    def grad_p(x, p):
        scores = (np.asarray(p, dtype=float) @ B.T - f) / eps
        return softmax(scores, axis=-1) @ B

    c_h = float(max(bmax, np.abs(f).max()) + eps * math.log(len(f)))
    return HamiltonianSpec(value=value, grad_p=grad_p, L_H=bmax, C_H=c_h,
                           L_Hp=2.0 * bmax ** 2 / eps, smooth=True, label=label)


def check_gradient(spec, samples=1000, seed=0, step=1e-6, p_scale=3.0):
    """Central finite-difference validation of grad_p on random (x, p) samples.

    Returns the maximum relative discrepancy |fd - grad| / max(1, |grad|).
    """
    if not spec.smooth:
        raise ConfigurationError("gradient check requires a smooth Hamiltonian")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(samples, 2))
    p = p_scale * rng.standard_normal((samples, 2))
    grad = np.asarray(spec.grad_p(x, p), dtype=float)
    fd = np.empty_like(grad)
    for comp in range(2):
        dp = np.zeros(2)
        dp[comp] = step
        fd[:, comp] = (spec.value(x, p + dp) - spec.value(x, p - dp)) / (2.0 * step)
    err = np.linalg.norm(fd - grad, axis=1)
    scale = np.maximum(1.0, np.linalg.norm(grad, axis=1))
    return float((err / scale).max())


def linearization_remainder(spec, space, v, w):
    """Element-wise remainder H[grad v] - H[grad w] - dH/dp[grad w].grad(v - w),
    constant per triangle; nonnegative by convexity."""
    x = space.mesh.barycenters
    gv = v.element_gradients()
    gw = w.element_gradients()
    return (np.asarray(spec.value(x, gv), dtype=float)
            - np.asarray(spec.value(x, gw), dtype=float)
            - np.einsum("td,td->t", np.asarray(spec.grad_p(x, gw), dtype=float), gv - gw))


def check_semismooth_bound(spec, space, pairs=20, seed=0, gamma=1.0 / 9.0):
    """Worst observed ratio ||remainder||_{V*} / ||v - w||_{H1}^{1+gamma} over
    random P1 pairs; the two-dimensional exponent is gamma = 1/9.

    The constant multiplying ||v - w||^{1+gamma} in the bound is existential,
    so callers assert boundedness/stability of this ratio, not a value.
    """
    from . import assembly
    from .fespace import P1Function
    from .solver import riesz_dual_norm

    if not spec.smooth:
        raise ConfigurationError("semismooth bound check requires a smooth Hamiltonian")
    rng = np.random.default_rng(seed)
    gram = assembly.assemble_h1_gram(space)
    worst = 0.0
    for k in range(pairs):
        scale = 10.0 ** rng.uniform(-2.0, 0.5)
        v = P1Function(space, scale * rng.standard_normal(space.ndof))
        w = P1Function(space, scale * rng.standard_normal(space.ndof))
        diff = v.coeffs - w.coeffs
        h1 = math.sqrt(diff @ (gram @ diff))
        if h1 == 0.0:
            continue
        remainder = linearization_remainder(spec, space, v, w)
        load = assembly.element_constant_load(space, remainder)
        ratio = riesz_dual_norm(gram, load) / h1 ** (1.0 + gamma)
        worst = max(worst, ratio)
    return worst
