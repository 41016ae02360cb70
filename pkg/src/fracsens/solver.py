"""Direct and eigen-decomposition solvers for the tensor-structured system.

The fast solver diagonalizes every factor. With spatial pencils
``S_j V_j = M_j V_j diag(l_j)`` and the temporal pencil
``M_T W = S_T W diag(l_t)``, the unknown ``U = Z x_0 W x_j V_j`` satisfies

    Z[n, m..] * (1 + l_t[n] (gamma + sum_j l_j[m_j])) = F x_0 (S_T W)^-1 x_j (M_j V_j)^-1

so only small dense solves remain. Eigenpairs may be complex because the
temporal matrices are not symmetric; the reconstructed tensor must be real.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .assembly import OperatorSet, axis_rule, mode_apply, resolve_tau
from .errors import ConfigurationError, DomainError, SingularityError, SolverError
from .model import ModelParams
from .specfun import (
    BasisConfig,
    GradedMesh,
    affine_map,
    jacobi_table,
    legendre_table,
    spatial_trial_scale,
)

log = logging.getLogger(__name__)

DIRECT_SOLVE_CAP = 20_000
EIG_RESIDUAL_TOL = 1e-9
IMAG_TOL = 1e-9
RESONANCE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GeneralizedEigenPair:
    """Solutions of ``A e = lambda B e``; ``vectors[:, i]`` pairs with ``values[i]``."""

    values: np.ndarray
    vectors: np.ndarray

    def residuals(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        V = self.vectors
        R = A @ V - (B @ V) * self.values
        return np.linalg.norm(R, axis=0) / np.linalg.norm(V, axis=0)


def generalized_eig(A: np.ndarray, B: np.ndarray) -> GeneralizedEigenPair:
    """Eigenpairs of the pencil ``(A, B)`` via the QZ algorithm."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigurationError("pencil matrices must be square and of equal shape")
    try:
        values, vectors = sla.eig(A, B)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"generalized eigenproblem failed: {exc}") from None
    if not np.all(np.isfinite(values)):
        raise SolverError("pencil has infinite eigenvalues; B is singular")
    pair = GeneralizedEigenPair(values, vectors)
    scale = max(1.0, np.linalg.norm(A, 2)) + np.abs(values) * np.linalg.norm(B, 2)
    res = pair.residuals(A, B) / scale
    if np.any(res > EIG_RESIDUAL_TOL):
        raise SolverError(f"eigenpair residual {res.max():.2e} above tolerance")
    return pair


def kronecker_matrix(ops: OperatorSet) -> np.ndarray:
    """Dense matrix of the system operator for row-major vectorized tensors."""
    def kron_all(mats):
        out = np.ones((1, 1))
        for m in mats:
            out = np.kron(out, m)
        return out

    masses = ([ops.m_temporal] if ops.has_time else []) + list(ops.m_spatial)
    t0 = 1 if ops.has_time else 0
    n = int(np.prod(ops.shape))
    A = np.zeros((n, n))
    if ops.has_time:
        A += kron_all([ops.s_temporal] + list(ops.m_spatial))
    for j, s in enumerate(ops.s_spatial):
        mats = list(masses)
        mats[t0 + j] = s
        A += kron_all(mats)
    if ops.gamma:
        A += ops.gamma * kron_all(masses)
    return A


def _check_load(ops: OperatorSet, load) -> np.ndarray:
    load = np.asarray(load, dtype=float)
    if load.shape != ops.shape:
        raise ConfigurationError(f"load shape {load.shape} != system shape {ops.shape}")
    if not np.all(np.isfinite(load)):
        raise ConfigurationError("load has non-finite entries")
    return load


def direct_solve(ops: OperatorSet, load, cap: int = DIRECT_SOLVE_CAP) -> np.ndarray:
    """Solve by forming the full Kronecker matrix and a dense LU factorization."""
    load = _check_load(ops, load)
    n = load.size
    if n > cap:
        raise SolverError(f"{n} unknowns exceed the direct-solve cap of {cap}")
    A = kronecker_matrix(ops)
    try:
        lu = sla.lu_factor(A, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"LU factorization failed: {exc}") from None
    rcond = _rcond(A, lu)
    if rcond < np.finfo(float).eps:
        raise SolverError(f"system is numerically singular (condition estimate {1 / max(rcond, 1e-300):.2e})")
    x = sla.lu_solve(lu, load.ravel())
    return x.reshape(ops.shape)


def _rcond(A: np.ndarray, lu) -> float:
    from scipy.linalg.lapack import dgecon

    anorm = np.linalg.norm(A, 1)
    if anorm == 0:
        return 0.0
    rcond, info = dgecon(lu[0], anorm, norm="1")
    return float(rcond) if info == 0 else 0.0


def fast_solve(ops: OperatorSet, load) -> np.ndarray:
    """Solve through generalized eigen-decompositions of every factor."""
    load = _check_load(ops, load)
    spatial = [generalized_eig(s, m) for s, m in zip(ops.s_spatial, ops.m_spatial)]
    lam_space = 0.0
    for j, pair in enumerate(spatial):
        shape = [1] * len(spatial)
        shape[j] = -1
        lam_space = lam_space + pair.values.reshape(shape)
    left, right = [], []
    if ops.has_time:
        temporal = generalized_eig(ops.m_temporal, ops.s_temporal)
        lam_t = temporal.values.reshape((-1,) + (1,) * len(spatial))
        big_lambda = 1.0 + lam_t * (ops.gamma + lam_space)
        left.append(ops.s_temporal @ temporal.vectors)
        right.append(temporal.vectors)
    else:
        big_lambda = ops.gamma + lam_space
    for pair, m in zip(spatial, ops.m_spatial):
        left.append(m @ pair.vectors)
        right.append(pair.vectors)
    big_lambda = np.broadcast_to(big_lambda, ops.shape)
    if np.min(np.abs(big_lambda)) < RESONANCE_TOL:
        raise SingularityError("a diagonal factor of the transformed system vanishes")
    try:
        inverses = [np.linalg.inv(b) for b in left]
    except np.linalg.LinAlgError:
        raise SolverError("eigenvector basis is singular") from None
    z = mode_apply(load.astype(complex), inverses) / big_lambda
    u = mode_apply(z, right)
    scale = max(np.max(np.abs(u)), np.finfo(float).tiny)
    if np.max(np.abs(u.imag)) > IMAG_TOL * scale:
        raise SolverError("reconstructed solution is not real")
    return np.ascontiguousarray(u.real)


def solve(ops: OperatorSet, load, method: str = "fast") -> np.ndarray:
    if method == "fast":
        return fast_solve(ops, load)
    if method == "direct":
        return direct_solve(ops, load)
    raise ConfigurationError(f"unknown solver {method!r}")


# ---------------------------------------------------------------------------
# evaluation


def basis_values(params: ModelParams, cfg: BasisConfig, axis_points) -> list[np.ndarray]:
    """Trial function tables ``(modes, points)`` for each axis."""
    tau = resolve_tau(params, cfg)
    axes = params.axes()
    if len(axis_points) != len(axes):
        raise ConfigurationError(f"expected coordinates for {len(axes)} axes")
    out = []
    t0 = 1 if params.kind.has_time else 0
    for a, (pts, (lo, hi)) in enumerate(zip(axis_points, axes)):
        pts = np.asarray(pts, dtype=float)
        if np.any(pts < lo - 1e-12 * (hi - lo)) or np.any(pts > hi + 1e-12 * (hi - lo)):
            raise DomainError("evaluation point outside the domain")
        y = np.clip(affine_map(pts, lo, hi), -1.0, 1.0)
        if a < t0:
            n = cfg.n_temporal
            out.append(np.power(1 + y, tau) * jacobi_table(-tau, tau, n - 1, y))
        else:
            m_modes = cfg.m_spatial[a - t0]
            tab = legendre_table(m_modes + 1, y)
            out.append(np.array([spatial_trial_scale(m) * (tab[m + 1] - tab[m - 1])
                                 for m in range(1, m_modes + 1)]))
    return out


def evaluate_grid(coeffs, cfg: BasisConfig, params: ModelParams, *axis_points) -> np.ndarray:
    """Field values on the tensor grid spanned by per-axis point sets."""
    tables = basis_values(params, cfg, axis_points)
    return mode_apply(np.asarray(coeffs, dtype=float), [t.T for t in tables])


def evaluate_field(coeffs, cfg: BasisConfig, params: ModelParams, *coords):
    """Field value ``sum U[n, m..] psi_n(t) prod phi_m(x_j)`` at scattered points."""
    coeffs = np.asarray(coeffs, dtype=float)
    coords = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in coords])
    shape = coords[0].shape
    flat = [c.ravel() for c in coords]
    tables = basis_values(params, cfg, flat)
    # contract one axis at a time, keeping the point index aligned
    out = np.einsum("n...,np->p...", coeffs, tables[0])
    for tab in tables[1:]:
        out = np.einsum("pm...,mp->p...", out, tab)
    out = out.reshape(shape)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class QuadGrid:
    """Tensor-product quadrature grid over the physical domain."""

    points: tuple
    weights: tuple

    def integrate(self, values: np.ndarray) -> float:
        return float(mode_apply(values, [w[None, :] for w in self.weights]).ravel()[0])

    def norm(self, values: np.ndarray) -> float:
        return float(np.sqrt(max(self.integrate(values * values), 0.0)))

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return self.integrate(a * b)


def quadrature_grid(params: ModelParams, levels: int = 12, points: int = 16) -> QuadGrid:
    """Grid graded toward both ends of every axis, finer than assembly rules."""
    mesh = GradedMesh(levels=levels, points=points)
    pts, wts = [], []
    for lo, hi in params.axes():
        y, w = axis_rule(lo, hi, mesh, levels)
        pts.append(y)
        wts.append(w)
    return QuadGrid(tuple(pts), tuple(wts))


def _exact_on_grid(exact, params: ModelParams, grid: QuadGrid) -> np.ndarray:
    if hasattr(exact, "on_grid"):
        return exact.on_grid(*grid.points)
    mesh = np.meshgrid(*grid.points, indexing="ij")
    return np.broadcast_to(np.asarray(exact(*mesh), dtype=float), mesh[0].shape)


def l2_error(coeffs, exact, cfg: BasisConfig, params: ModelParams,
             grid: QuadGrid | None = None) -> float:
    """``||u_N - u*||`` in L2 of the physical domain.

    ``exact`` is a callable of the physical coordinates or any object with an
    ``on_grid`` method (such as a separable function).
    """
    grid = grid or quadrature_grid(params)
    approx = evaluate_grid(coeffs, cfg, params, *grid.points)
    return grid.norm(approx - _exact_on_grid(exact, params, grid))
