"""Pure-numpy fallback for the compiled kernels in ``_core.pyx``.

Signatures and return layouts match the compiled module one to one.
"""

import numpy as np


def _f_map(c, weights, sigma2, inv_t):
    n = c.shape[1]
    a = np.eye(n, dtype=np.complex128) + np.tensordot(weights, c, axes=1)
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return None
    linv = np.linalg.inv(chol)
    inv = linv.conj().T @ linv
    # Tr(c_l @ inv) = sum_ij c_l[i, j] inv[j, i]
    return (inv_t / sigma2) * np.einsum("lij,ji->l", c, inv).real


def fixed_point(cr, cq, sigma2, delta0, delta_tilde0, tol, max_iter, t):
    """Jacobi iteration of the canonical system (see ``_core.fixed_point``)."""
    cr = np.ascontiguousarray(cr, dtype=np.complex128)
    cq = np.ascontiguousarray(cq, dtype=np.complex128)
    d = np.array(delta0, dtype=np.float64, copy=True)
    dt = np.array(delta_tilde0, dtype=np.float64, copy=True)
    inv_t = 1.0 / t
    steps = np.empty(max_iter, dtype=np.float64)
    status = 1
    it = 0
    while it < max_iter:
        dn = _f_map(cr, dt, sigma2, inv_t)
        dtn = _f_map(cq, d, sigma2, inv_t) if dn is not None else None
        if dn is None or dtn is None:
            status = 3
            break
        finite = np.all(np.isfinite(dn)) and np.all(np.isfinite(dtn))
        step = max(np.max(np.abs(dn - d)), np.max(np.abs(dtn - dt)))
        d, dt = dn, dtn
        steps[it] = step
        it += 1
        if not finite:
            status = 2
            break
        if step <= tol:
            status = 0
            break
    return d, dt, it, steps[:it].copy(), status


def batch_logdet(h, q, inv_sigma2):
    """log|I + inv_sigma2 * H_i Q H_i^H| for each H_i in the stack ``h``."""
    h = np.asarray(h, dtype=np.complex128)
    r = h.shape[1]
    g = inv_sigma2 * (h @ q @ h.conj().transpose(0, 2, 1))
    g = g + np.eye(r)
    g = 0.5 * (g + g.conj().transpose(0, 2, 1))
    try:
        chol = np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        sign, logdet = np.linalg.slogdet(g)
        return np.where(sign.real > 0, logdet, np.nan)
    return 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2).real), axis=1)
