"""Maximization of the EMI approximation by iterative waterfilling.

Each outer step solves the canonical system at the current covariance
``Q_{k-1}`` and replaces it by the waterfilling solution of
``max log|I + Q Ct(delta^(k))|`` over ``Tr(Q) = t``, where
``Ct(delta) = sum_l delta_l ct[l]``. Convergence of the delta sequence is
monitored; a stalled run is restarted from a perturbed starting point.
"""

from dataclasses import dataclass, field
import logging
from typing import NamedTuple

import numpy as np

from .canonical import solve_canonical
from .emi import directional_derivative, emi_approx, normalize_trace, random_covariance

log = logging.getLogger(__name__)

ZERO_EIG_RTOL = 1e-14


class TrajectoryPoint(NamedTuple):
    iteration: int
    emi: float          # approximation at Q_{k-1}
    q_step: float       # ||Q_k - Q_{k-1}||_F
    delta_step: float   # max(||delta^(k) - delta^(k-1)||_inf, same for delta_tilde)


@dataclass(frozen=True)
class WaterfillSolution:
    q: np.ndarray
    water_level: float
    active_set: tuple
    powers: np.ndarray
    eigenvalues: np.ndarray
    degenerate: bool = False


@dataclass
class OptimizationResult:
    q_star: np.ndarray
    delta_star: np.ndarray
    delta_tilde_star: np.ndarray
    emi_star: float
    rho_M: float
    trajectory: list = field(default_factory=list)
    stop_reason: str = "max_iterations"
    restarts: int = 0
    monotone: bool = True
    kkt_worst: float | None = None

    @property
    def converged(self):
        return self.stop_reason == "converged"

    @property
    def iterations(self):
        return len(self.trajectory)


def waterfill(c_tilde, budget=None):
    """Maximize ``log|I + Q C|`` over Hermitian PSD ``Q`` with ``Tr(Q) = budget``.

    ``budget`` defaults to the dimension ``t``. Modes with eigenvalue at most
    ``1e-14 * lambda_max`` never receive power. An all-zero ``c_tilde`` has no
    preferred direction; the isotropic ``Q`` is returned with ``degenerate=True``.
    """
    c = np.asarray(c_tilde, dtype=np.complex128)
    t = c.shape[0]
    budget = float(t if budget is None else budget)
    lam, u = np.linalg.eigh(0.5 * (c + c.conj().T))
    lam, u = lam[::-1], u[:, ::-1]
    if lam[0] <= 0:
        q = np.eye(t, dtype=complex) * (budget / t)
        return WaterfillSolution(q, np.inf, tuple(range(t)), np.full(t, budget / t),
                                 lam, degenerate=True)
    usable = lam > ZERO_EIG_RTOL * lam[0]
    inv = np.full(t, np.inf)
    inv[usable] = 1.0 / lam[usable]
    # active set is a prefix of the descending order; largest feasible k wins
    k = int(usable.sum())
    while k > 1:
        mu = (budget + inv[:k].sum()) / k
        if mu > inv[k - 1]:
            break
        k -= 1
    mu = (budget + inv[:k].sum()) / k
    powers = np.zeros(t)
    powers[:k] = mu - inv[:k]
    q = (u * powers) @ u.conj().T
    q = 0.5 * (q + q.conj().T)
    return WaterfillSolution(q, float(mu), tuple(range(k)), powers, lam)


def _perturbed_start(q0, rng):
    return normalize_trace(0.9 * q0 + 0.1 * random_covariance(q0.shape[0], rng))


def optimize_covariance(stats, *, tol_delta=1e-8, tol_q=1e-8, max_iter=200,
                        inner_tol=None, q0=None, stall_window=10, max_restarts=5,
                        seed=0, n_probe=0, probe_h=1e-4, backend=None):
    """Iterative waterfilling maximization of the EMI approximation.

    Parameters
    ----------
    stats : ChannelStats
    tol_delta, tol_q : float
        Stop once both the delta change (sup-norm) and the covariance change
        (Frobenius) fall below these.
    max_iter : int
        Outer iteration cap per start.
    inner_tol : float, optional
        Canonical solver tolerance; defaults to ``min(tol_delta / 100, 1e-10)``.
    q0 : array_like, optional
        Starting covariance, identity by default.
    stall_window, max_restarts : int
        A start is abandoned when the delta change has not decreased for
        ``stall_window`` consecutive iterations; at most ``max_restarts``
        perturbed restarts follow.
    seed : int
        Seeds the restart perturbations and the optimality probes.
    n_probe : int
        If positive, run :func:`optimality_check` with that many random
        probes on convergence and store the result in ``kkt_worst``.

    Returns
    -------
    OptimizationResult
        ``stop_reason`` is ``"converged"``, ``"max_iterations"`` or
        ``"restart_exhausted"``.
    """
    inner_tol = min(tol_delta / 100, 1e-10) if inner_tol is None else inner_tol
    rng = np.random.default_rng(seed)
    t = stats.t
    start = np.eye(t, dtype=complex) if q0 is None else normalize_trace(q0)
    trajectory = []
    restarts = 0
    it = 0
    stop_reason = "max_iterations"

    while True:
        q_prev = start
        d_prev = dt_prev = None
        steps = []
        stalled = False
        for it in range(1, max_iter + 1):
            sol = solve_canonical(stats, q_prev, tol=inner_tol, backend=backend)
            value = emi_approx(stats, q_prev, sol)
            q_new = waterfill(stats.transmit_sum(sol.delta)).q
            q_step = float(np.linalg.norm(q_new - q_prev))
            if d_prev is None:
                d_step = np.inf
            else:
                d_step = float(max(np.abs(sol.delta - d_prev).max(),
                                   np.abs(sol.delta_tilde - dt_prev).max()))
            trajectory.append(TrajectoryPoint(len(trajectory) + 1, value, q_step, d_step))
            d_prev, dt_prev = sol.delta, sol.delta_tilde
            q_prev = q_new
            if d_step <= tol_delta and q_step <= tol_q:
                stop_reason = "converged"
                break
            steps.append(d_step)
            if len(steps) > stall_window and all(
                    b >= a for a, b in zip(steps[-stall_window - 1:-1],
                                           steps[-stall_window:])):
                stalled = True
                break
        if stop_reason == "converged" or not stalled:
            break
        if restarts >= max_restarts:
            stop_reason = "restart_exhausted"
            break
        restarts += 1
        log.info("delta sequence stalled after %d iterations; restart %d", it, restarts)
        start = _perturbed_start(start, rng)

    q_star = q_prev
    sol = solve_canonical(stats, q_star, tol=inner_tol, backend=backend)
    emi_star = emi_approx(stats, q_star, sol)
    values = [p.emi for p in trajectory] + [emi_star]
    monotone = all(b >= a - 1e-9 for a, b in zip(values, values[1:]))
    if not monotone:
        log.warning("EMI approximation decreased along the waterfilling trajectory")
    result = OptimizationResult(q_star=q_star, delta_star=sol.delta,
                                delta_tilde_star=sol.delta_tilde, emi_star=emi_star,
                                rho_M=sol.rho_M, trajectory=trajectory,
                                stop_reason=stop_reason, restarts=restarts,
                                monotone=monotone)
    if n_probe > 0 and result.converged:
        result.kkt_worst = optimality_check(stats, result, n_probe=n_probe,
                                            h=probe_h, seed=seed)
    return result


def probe_directions(t, n_probe, rng, *, vertices=True):
    """Random normalized-trace covariances (mixed rank) plus the vertices ``t e_i e_i^H``."""
    probes = []
    for i in range(n_probe):
        rank = 1 + i % t
        probes.append(random_covariance(t, rng, rank=rank))
    if vertices:
        for i in range(t):
            v = np.zeros((t, t), dtype=complex)
            v[i, i] = t
            probes.append(v)
    return probes


def ascent_probes(stats, q, *, tol=1e-12):
    """Probes aimed at the steepest ascent directions of the approximation at ``q``.

    Returns the vertex ``t u u^H`` for the top eigenvector ``u`` of the
    gradient ``Ct (I + Q Ct)^{-1}`` (which maximizes the linearized objective
    over the normalized-trace set) and the waterfilling best response.
    """
    sol = solve_canonical(stats, q, tol=tol)
    c = stats.transmit_sum(sol.delta)
    grad = c @ np.linalg.inv(np.eye(stats.t) + q @ c)
    _, vecs = np.linalg.eigh(0.5 * (grad + grad.conj().T))
    u = vecs[:, -1]
    return [stats.t * np.outer(u, u.conj()), waterfill(c).q]


def optimality_check(stats, result, n_probe=50, h=1e-4, seed=0, *, vertices=True,
                     ascent=True):
    """Worst forward directional derivative of the approximation at ``q_star``.

    Non-positive (up to finite-difference error) at the maximizer. Probes are
    ``n_probe`` random covariances, the coordinate vertices and, with
    ``ascent=True``, the directions from :func:`ascent_probes`.
    ``result`` may be an :class:`OptimizationResult` or a bare covariance.
    """
    q = result.q_star if isinstance(result, OptimizationResult) else np.asarray(result)
    rng = np.random.default_rng(seed)
    probes = probe_directions(q.shape[0], n_probe, rng, vertices=vertices)
    if ascent:
        probes += ascent_probes(stats, q)
    return max(directional_derivative(stats, q, p, h) for p in probes)
