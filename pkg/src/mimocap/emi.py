"""Ergodic mutual information: large-system approximation and Monte-Carlo.

All values are in nats.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numpy as np

from . import kernels
from .canonical import f_maps, solve_canonical
from .channel import draw_channels, hermitian_sqrt

MC_BLOCK = 4096
PSD_TOL = 1e-10
TRACE_TOL = 1e-12


@dataclass(frozen=True)
class EmiEstimate:
    mean: float
    std_error: float
    trials: int
    seed: int


def as_covariance(q, *, normalized=False):
    """Validate a transmit covariance: Hermitize and clip tiny negative modes.

    With ``normalized=True`` the matrix must also satisfy ``Tr(Q)/t = 1``.
    """
    q = np.asarray(q, dtype=np.complex128)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError(f"covariance must be square, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("covariance has non-finite entries")
    scale = max(1.0, float(np.abs(q).max()))
    if np.abs(q - q.conj().T).max() > 1e-10 * scale:
        raise ValueError("covariance must be Hermitian")
    w, v = np.linalg.eigh(0.5 * (q + q.conj().T))
    if w[0] < -PSD_TOL * max(w[-1], 1e-300):
        raise ValueError(f"covariance is not PSD (min eigenvalue {w[0]:.3e})")
    q = (v * np.clip(w, 0, None)) @ v.conj().T
    if normalized and abs(np.trace(q).real / q.shape[0] - 1) > TRACE_TOL * 10:
        raise ValueError("covariance trace is not normalized to t")
    return q


def normalize_trace(q):
    """Scale ``q`` so that ``Tr(q) = t``."""
    q = np.asarray(q, dtype=np.complex128)
    return q * (q.shape[0] / np.trace(q).real)


def random_covariance(t, rng, rank=None):
    """Random element of the normalized-trace set (Wishart-like, given rank)."""
    rank = t if rank is None else rank
    g = rng.standard_normal((t, rank)) + 1j * rng.standard_normal((t, rank))
    return normalize_trace(g @ g.conj().T)


def _logdet_hpd(m):
    return float(np.linalg.slogdet(m)[1])


def v_function(stats, q, kappa, kappa_tilde):
    """``log|I + sum kt_l cr[l]| + log|I + Q sum k_l ct[l]| - sigma2 t sum k_l kt_l``.

    Equal to the EMI approximation when evaluated at the canonical solution.
    """
    kappa = np.asarray(kappa, dtype=float)
    kappa_tilde = np.asarray(kappa_tilde, dtype=float)
    qh = hermitian_sqrt(q)
    c_rx = np.eye(stats.r) + stats.receive_sum(kappa_tilde)
    # |I + Q C| = |I + Q^{1/2} C Q^{1/2}|, the latter Hermitian
    c_tx = np.eye(stats.t) + qh @ stats.transmit_sum(kappa) @ qh
    return (_logdet_hpd(c_rx) + _logdet_hpd(c_tx)
            - stats.sigma2 * stats.t * float(kappa @ kappa_tilde))


def v_gradient(stats, q, kappa, kappa_tilde):
    """Analytic partial derivatives of :func:`v_function`.

    Returns ``(dV/dkappa, dV/dkappa_tilde)`` with

        dV/dkappa_l       = sigma2 t (ft_l(kappa, Q) - kappa_tilde_l)
        dV/dkappa_tilde_l = sigma2 t (f_l(kappa_tilde) - kappa_l)
    """
    f, ft = f_maps(stats, q, kappa, kappa_tilde)
    c = stats.sigma2 * stats.t
    return c * (ft - np.asarray(kappa_tilde)), c * (f - np.asarray(kappa))


def stationarity_defect(stats, q, sol):
    """:func:`v_gradient` at the canonical solution; both vectors vanish there."""
    return v_gradient(stats, q, sol.delta, sol.delta_tilde)


def emi_approx(stats, q, sol, *, max_residual=None):
    """Large-system approximation of the EMI for covariance ``q``.

    ``sol`` must be the canonical solution for ``(stats, q)``; its defect is
    checked against ``max_residual`` (default ``10 * sol.tol``).
    """
    limit = 10 * sol.tol if max_residual is None else max_residual
    if not sol.residual <= limit:
        raise ValueError(f"canonical solution not converged (residual "
                         f"{sol.residual:.3e} > {limit:.3e})")
    return v_function(stats, q, sol.delta, sol.delta_tilde)


def emi(stats, q, tol=1e-10, **solver_kwargs):
    """Solve the canonical system and return ``(emi_approx, solution)``."""
    sol = solve_canonical(stats, q, tol=tol, **solver_kwargs)
    return emi_approx(stats, q, sol), sol


def directional_derivative(stats, q, p, h=1e-4, *, tol=1e-12):
    """Forward difference of the EMI approximation from ``q`` towards ``p``.

    Returns ``[I(q + h (p - q)) - I(q)] / h`` with a fresh canonical solve at
    each point. Both points stay in the normalized-trace set for ``h`` in (0, 1].
    """
    if not 0 < h <= 1:
        raise ValueError("h must lie in (0, 1]")
    q = np.asarray(q, dtype=np.complex128)
    p = np.asarray(p, dtype=np.complex128)
    if np.array_equal(p, q):
        return 0.0
    base, _ = emi(stats, q, tol=tol)
    moved, _ = emi(stats, q + h * (p - q), tol=tol)
    return (moved - base) / h


def _mc_block(stats, q, seed, key, block, size, backend):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(*key, block)))
    h = draw_channels(stats, rng, size)
    return kernels.get_backend(backend).batch_logdet(h, q, 1.0 / stats.sigma2)


def emi_monte_carlo(stats, q, trials=10_000, seed=0, *, key=(), workers=1,
                    block_size=MC_BLOCK, backend=None):
    """Monte-Carlo estimate of ``E log|I_r + H Q H^H / sigma2|``.

    Trials are split into fixed-size blocks; block ``b`` draws from the
    substream ``SeedSequence(seed, spawn_key=(*key, b))``. The estimate is
    therefore a function of ``(seed, key, trials, block_size)`` only, whatever
    the number of ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    q = np.ascontiguousarray(q, dtype=np.complex128)
    if not np.any(q):
        return EmiEstimate(0.0, 0.0, int(trials), int(seed))
    sizes = [min(block_size, trials - start) for start in range(0, trials, block_size)]
    args = [(stats, q, seed, tuple(key), b, n, backend) for b, n in enumerate(sizes)]
    if workers > 1 and len(args) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _mc_block(*a), args))
    else:
        parts = [_mc_block(*a) for a in args]
    values = np.concatenate(parts)
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("non-finite log-determinant in Monte-Carlo draw")
    mean = math.fsum(values) / trials
    if trials > 1:
        var = math.fsum((values - mean) ** 2) / (trials - 1)
        se = math.sqrt(var / trials)
    else:
        se = 0.0
    return EmiEstimate(mean, se, int(trials), int(seed))

