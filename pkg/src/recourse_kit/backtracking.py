"""Unnormalized backtracking kernel over latent vectors and its grid MAP.

The kernel scores a candidate latent vector by how far its generated
observation strays from the factual observation plus ``lam`` times how far
the latents themselves move:

    log density = -d_x(F(u), F(u_cf)) - lam * d_u(u, u_cf)   (up to a constant)

Restricted to latent vectors whose observation classifies as the target, the
maximizer of this density is exactly the minimizer of the blended search
objective, which the grid MAP here makes checkable by brute force. The
normalization constant is never computed.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import EmptyFeasibleSetError
from .learners import LogisticModel
from .scm import LinearSCM, abduct_batch, reduced_form
from .solver import distance_u, distance_x, grid_candidates

Vector = np.ndarray


@dataclass(frozen=True)
class BacktrackingKernel:
    scm: LinearSCM
    lam: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")


def log_density_unnormalized(kernel: BacktrackingKernel, u: Vector, u_cf: Vector) -> float:
    """Log kernel value for a candidate latent vector, exact metrics, no
    normalization."""
    scm = kernel.scm
    d_x = distance_x(reduced_form(scm, u), reduced_form(scm, u_cf), scm.features)
    d_u = distance_u(u, u_cf, scm.features)
    return -d_x - kernel.lam * d_u


def map_argmax_grid(
    kernel: BacktrackingKernel,
    u: Vector,
    target: int,
    classifier: LogisticModel,
    bounds: tuple[float, float] = (-5.0, 5.0),
    resolution: float = 0.01,
) -> Vector:
    """Grid maximizer of the log density over the target-class region.

    The grid spans the mutable latent coordinates in units of their feature
    scales around ``u``; immutable features stay pinned to their factual
    values (their latents compensate). Guarded to at most 2 free dimensions.
    """
    Z, U_cf, X_cf, logp, feas = _grid_eval(kernel, u, target, classifier, bounds, resolution)
    if not np.any(feas):
        raise EmptyFeasibleSetError("no grid point reaches the target class")
    k = int(np.argmax(np.where(feas, logp, -np.inf)))
    return U_cf[k]


def density_surface_csv(
    kernel: BacktrackingKernel,
    u: Vector,
    target: int,
    classifier: LogisticModel,
    bounds: tuple[float, float] = (-5.0, 5.0),
    resolution: float = 0.1,
) -> str:
    """Dump the (2-D) density surface as CSV rows ``u1,u2,logp,feasible``."""
    if len(kernel.scm.mutable_indices) != 2:
        raise ValueError("density surface dump requires exactly 2 mutable dimensions")
    Z, _, _, logp, feas = _grid_eval(kernel, u, target, classifier, bounds, resolution)
    buf = io.StringIO()
    buf.write("u1,u2,logp,feasible\n")
    for (z1, z2), lp, ok in zip(Z, logp, feas):
        buf.write(f"{z1:.12g},{z2:.12g},{lp:.12g},{int(ok)}\n")
    return buf.getvalue()


def _grid_eval(kernel, u, target, classifier, bounds, resolution):
    scm = kernel.scm
    mutable = list(scm.mutable_indices)
    if len(mutable) > 2:
        raise ValueError("grid MAP limited to 2 mutable latent dimensions")
    u = np.asarray(u, dtype=float)
    x_fact = reduced_form(scm, u)
    sigma = scm.feature_sigma()

    Z = grid_candidates(u[mutable], sigma[mutable], bounds, resolution)
    X_cf = _pinned_forward(scm, x_fact, Z, mutable)
    U_cf = abduct_batch(scm, X_cf)
    U_cf[:, mutable] = Z  # bit-exact grid coordinates on the free axes

    d_x = np.sum(np.abs(X_cf[:, mutable] - x_fact[mutable]) / sigma[mutable], axis=1)
    d_u = np.sqrt(np.sum(((Z - u[mutable]) / sigma[mutable]) ** 2, axis=1))
    logp = -d_x - kernel.lam * d_u
    feas = classifier.predict(X_cf) == target
    return Z, U_cf, X_cf, logp, feas


def _pinned_forward(scm, x_fact, Z, mutable):
    """Mechanism evaluation with grid latents on mutable nodes and immutable
    features pinned to their factual values."""
    col = {i: k for k, i in enumerate(mutable)}
    W = scm.weight_matrix()
    X = np.zeros((Z.shape[0], scm.n))
    for i in scm.topological_order():
        if i in col:
            X[:, i] = X @ W[i] + scm.intercepts[i] + Z[:, col[i]]
        else:
            X[:, i] = x_fact[i]
    return X
