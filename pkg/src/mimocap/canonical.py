"""Canonical system of the large-system EMI approximation.

For a transmit covariance ``Q`` the approximation depends on the positive
solution ``(delta, delta_tilde)`` of the 2L equations

    delta_l       = f_l(delta_tilde)  = (1/t) Tr[cr[l] T(delta_tilde)]
    delta_tilde_l = ft_l(delta, Q)    = (1/t) Tr[Q^{1/2} ct[l] Q^{1/2} Tt(delta, Q)]

with resolvents

    T^{-1}  = sigma2 (I_r + sum_j delta_tilde_j cr[j])
    Tt^{-1} = sigma2 (I_t + sum_j delta_j Q^{1/2} ct[j] Q^{1/2}).

The solution is found by the Jacobi fixed-point iteration and certified
unique by checking ``rho(sigma2^2 * At @ A) < 1`` at the limit.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .channel import hermitian_sqrt

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
MAX_CONDITION = 1e14


class CanonicalSolverError(RuntimeError):
    pass


class MaxIterationsExceeded(CanonicalSolverError):
    def __init__(self, iterations, residual):
        super().__init__(f"canonical iteration did not converge in {iterations} "
                         f"iterations (last step {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class NonFiniteIterate(CanonicalSolverError):
    pass


class IllConditionedResolvent(CanonicalSolverError):
    pass


@dataclass(frozen=True)
class DeltaSolution:
    """Converged canonical solution and its certificates.

    Attributes
    ----------
    delta, delta_tilde : ndarray, shape (L,)
        Positive solution of the canonical system.
    T, T_tilde : ndarray
        Resolvents (r x r and t x t) evaluated at the solution.
    residual : float
        ``max(|delta - f(delta_tilde)|_inf, |delta_tilde - ft(delta, Q)|_inf)``.
    iterations : int
        Fixed-point iterations used.
    rho_M : float
        Spectral radius of ``sigma2**2 * At(T_tilde) @ A(T)``.
    steps : ndarray
        Sup-norm step of every iteration.
    tol : float
        Tolerance the solution was computed with.
    """

    delta: np.ndarray
    delta_tilde: np.ndarray
    T: np.ndarray
    T_tilde: np.ndarray
    residual: float
    iterations: int
    rho_M: float
    steps: np.ndarray
    tol: float


def transformed_transmit(stats, q):
    """Stack of ``Q^{1/2} ct[l] Q^{1/2}``."""
    qh = hermitian_sqrt(q)
    return np.ascontiguousarray(qh @ stats.ct @ qh)


def _checked_inverse(m):
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise IllConditionedResolvent(f"resolvent condition number {cond:.3e}")
    inv = np.linalg.inv(m)
    return 0.5 * (inv + inv.conj().T)


def _resolvent(mats, weights, sigma2):
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (mats.shape[0],):
        raise ValueError(f"expected {mats.shape[0]} weights, got shape {weights.shape}")
    if np.any(weights < 0):
        raise ValueError("resolvent weights must be >= 0")
    n = mats.shape[1]
    return _checked_inverse(sigma2 * (np.eye(n) + np.tensordot(weights, mats, axes=1)))


def resolvent_T(stats, delta_tilde):
    """``[sigma2 (I_r + sum_j delta_tilde_j cr[j])]^{-1}``."""
    return _resolvent(stats.cr, delta_tilde, stats.sigma2)


def resolvent_T_tilde(stats, delta, q):
    """``[sigma2 (I_t + sum_j delta_j Q^{1/2} ct[j] Q^{1/2})]^{-1}``."""
    return _resolvent(transformed_transmit(stats, q), delta, stats.sigma2)


def _traces(mats, res, t):
    return np.einsum("lij,ji->l", mats, res).real / t


def f_maps(stats, q, delta, delta_tilde):
    """Evaluate ``(f(delta_tilde), ft(delta, Q))``."""
    cq = transformed_transmit(stats, q)
    f = _traces(stats.cr, resolvent_T(stats, delta_tilde), stats.t)
    ft = _traces(cq, _resolvent(cq, delta, stats.sigma2), stats.t)
    return f, ft


def _coupling(cr, cq, T, T_tilde, t):
    rt = cr @ T
    tt = cq @ T_tilde
    a = np.einsum("kij,lji->kl", rt, rt).real / t
    at = np.einsum("kij,lji->kl", tt, tt).real / t
    return a, at


def coupling_matrices(stats, q, T, T_tilde):
    """``A(T)_{kl} = (1/t) Tr(cr[k] T cr[l] T)`` and its transmit analogue."""
    return _coupling(stats.cr, transformed_transmit(stats, q), T, T_tilde, stats.t)


def uniqueness_certificate(stats, q, solution):
    """Spectral radius of ``M = sigma2^2 * At(T_tilde) @ A(T)``.

    A value below one guarantees that no other positive solution exists.
    """
    a, at = coupling_matrices(stats, q, solution.T, solution.T_tilde)
    m = stats.sigma2**2 * (at @ a)
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def solve_canonical(stats, q, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, *,
                    init=1.0, backend=None):
    """Solve the canonical system for covariance ``q`` by Jacobi iteration.

    Parameters
    ----------
    stats : ChannelStats
    q : array_like, shape (t, t)
        Any Hermitian PSD matrix (need not have normalized trace).
    tol : float
        Sup-norm tolerance on the change between successive iterates.
    max_iter : int
    init : float or (delta0, delta_tilde0)
        Strictly positive starting point; a scalar sets every entry.
    backend : str, optional
        Kernel backend name, see :mod:`mimocap.kernels`.

    Returns
    -------
    DeltaSolution

    Raises
    ------
    MaxIterationsExceeded, NonFiniteIterate, IllConditionedResolvent
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    L = stats.L
    if np.isscalar(init):
        d0 = np.full(L, float(init))
        dt0 = np.full(L, float(init))
    else:
        d0, dt0 = (np.asarray(v, dtype=float).reshape(L) for v in init)
    if np.any(d0 <= 0) or np.any(dt0 <= 0):
        raise ValueError("initial point must be strictly positive")

    q = np.asarray(q, dtype=np.complex128)
    cq = transformed_transmit(stats, q)
    kern = kernels.get_backend(backend)
    # The kernel stops on the step size; under slow contraction the defect can
    # still exceed tol, so tighten the step tolerance and resume until it doesn't.
    step_tol, iters, all_steps = float(tol), 0, []
    while True:
        delta, delta_tilde, n, steps, status = kern.fixed_point(
            stats.cr, cq, float(stats.sigma2), d0, dt0, step_tol,
            int(max_iter) - iters, int(stats.t))
        iters += n
        all_steps.append(steps)
        if status == 1:
            raise MaxIterationsExceeded(iters, float(steps[-1]) if n else np.inf)
        if status == 2:
            raise NonFiniteIterate(f"non-finite iterate after {iters} iterations")
        if status == 3:
            raise IllConditionedResolvent("resolvent lost positive definiteness")

        T = resolvent_T(stats, delta_tilde)
        T_tilde = _resolvent(cq, delta, stats.sigma2)
        f = _traces(stats.cr, T, stats.t)
        ft = _traces(cq, T_tilde, stats.t)
        residual = max(np.max(np.abs(delta - f)), np.max(np.abs(delta_tilde - ft)))
        scale = max(np.abs(delta).max(), np.abs(delta_tilde).max(), 1.0)
        if residual <= tol or step_tol < 1e-15 * scale:
            break
        step_tol *= min(0.5, tol / residual)
        d0, dt0 = delta, delta_tilde
    steps = np.concatenate(all_steps)

    a, at = _coupling(stats.cr, cq, T, T_tilde, stats.t)
    rho = float(np.max(np.abs(np.linalg.eigvals(stats.sigma2**2 * (at @ a)))))
    return DeltaSolution(delta=delta, delta_tilde=delta_tilde, T=T, T_tilde=T_tilde,
                         residual=float(residual), iterations=int(iters),
                         rho_M=rho, steps=steps, tol=float(tol))
