"""Per-path antenna correlation matrices and Kronecker-structured channel draws.

Each propagation path is a scatterer cluster seen by a uniform linear array
through a mean angle and an angular spread. The path gain matrix is

    H_l = (1/sqrt(t)) * cr[l]^{1/2} @ W_l @ ct[l]^{1/2}

with ``W_l`` i.i.d. standard circular complex Gaussian, independent across
paths. Only the frequency-flat sum ``H = sum_l H_l`` matters for the ergodic
mutual information, so that is what :func:`draw_channels` returns.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

DEFAULT_SPACING = 0.5
QUADRATURE_ORDER = 64
TRUNCATION_STDS = 4.0
PD_FLOOR = 1e-9


@dataclass(frozen=True)
class PathAngularSpec:
    """Angular description of one scatterer cluster (angles in radians)."""

    mean_departure_angle: float
    departure_spread: float
    mean_arrival_angle: float
    arrival_spread: float
    relative_power: float = 1.0

    def __post_init__(self):
        values = (self.mean_departure_angle, self.departure_spread,
                  self.mean_arrival_angle, self.arrival_spread,
                  self.relative_power)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite path parameter in {self!r}")
        if self.departure_spread < 0 or self.arrival_spread < 0:
            raise ValueError("angular spreads must be >= 0")
        if self.relative_power <= 0:
            raise ValueError("relative_power must be > 0")


# Five equal-power clusters (radians), carrier 2 GHz, t = r = 4.
FIVE_CLUSTER_PATHS = (
    PathAngularSpec(6.15, 0.06, 4.85, 0.06),
    PathAngularSpec(3.52, 0.09, 3.48, 0.08),
    PathAngularSpec(4.04, 0.05, 1.71, 0.05),
    PathAngularSpec(2.58, 0.05, 5.31, 0.02),
    PathAngularSpec(2.66, 0.03, 0.06, 0.11),
)


def hermitian_sqrt(a):
    """Hermitian PSD square root, negative eigenvalues clipped to zero."""
    a = np.asarray(a, dtype=np.complex128)
    w, v = np.linalg.eigh(0.5 * (a + a.conj().swapaxes(-1, -2)))
    root = np.sqrt(np.clip(w, 0.0, None))
    return (v * root[..., None, :]) @ v.conj().swapaxes(-1, -2)


def _angular_nodes(mean_angle, spread, weight, order):
    if weight == "gaussian":
        half_width = TRUNCATION_STDS * spread
        x, w = np.polynomial.legendre.leggauss(order)
        theta = mean_angle + half_width * x
        density = np.exp(-0.5 * x**2 * TRUNCATION_STDS**2)
        w = w * density
    elif weight == "uniform":
        x, w = np.polynomial.legendre.leggauss(order)
        theta = mean_angle + math.pi * x
    else:
        raise ValueError(f"unknown angular weight {weight!r}")
    # the truncated density is renormalized, which pins the diagonal to 1
    return theta, w / w.sum()


def regularize_correlation(c, floor=PD_FLOOR):
    """Lift the spectrum to ``floor`` if needed and restore a unit diagonal."""
    c = 0.5 * (c + c.conj().T)
    lam_min = np.linalg.eigvalsh(c)[0]
    if lam_min < floor:
        c = c + (floor - lam_min) * np.eye(c.shape[0])
        d = 1.0 / np.sqrt(np.diag(c).real)
        c = c * np.outer(d, d)
    np.fill_diagonal(c, 1.0)
    return c


def build_ula_correlation(mean_angle, spread, n, spacing_wavelengths=DEFAULT_SPACING,
                          *, weight="gaussian", order=QUADRATURE_ORDER,
                          regularize=True):
    """Spatial correlation of an ``n``-element ULA illuminated by one cluster.

    ``C[p, q] = E[exp(2j*pi*spacing*(p - q)*sin(theta))]`` with ``theta``
    Gaussian (mean ``mean_angle``, std ``spread``, truncated at 4 std) or,
    with ``weight="uniform"``, uniform over a full turn around ``mean_angle``.
    The expectation is a fixed-order Gauss-Legendre sum.

    Parameters
    ----------
    mean_angle, spread : float
        Cluster centre and angular standard deviation, radians.
    n : int
        Number of antennas.
    spacing_wavelengths : float
        Inter-element spacing in carrier wavelengths.
    regularize : bool
        Enforce positive definiteness (see :func:`regularize_correlation`).

    Returns
    -------
    ndarray, shape (n, n), complex
        Hermitian, unit diagonal, positive semidefinite.
    """
    for name, v in (("mean_angle", mean_angle), ("spread", spread),
                    ("spacing_wavelengths", spacing_wavelengths)):
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")
    if int(n) != n or n < 1:
        raise ValueError(f"antenna count must be a positive integer, got {n!r}")
    if spread < 0:
        raise ValueError("spread must be >= 0")
    n = int(n)
    lags = np.arange(n)
    if spread == 0 and weight == "gaussian":
        phase = 2 * np.pi * spacing_wavelengths * lags * math.sin(mean_angle)
        coeffs = np.exp(1j * phase)
    else:
        theta, w = _angular_nodes(mean_angle, spread, weight, order)
        phase = 2 * np.pi * spacing_wavelengths * np.outer(lags, np.sin(theta))
        coeffs = np.exp(1j * phase) @ w
    # Toeplitz: C[p, q] = coeffs[p - q], C[q, p] = conj(coeffs[p - q])
    diff = lags[:, None] - lags[None, :]
    c = np.where(diff >= 0, coeffs[np.abs(diff)], coeffs[np.abs(diff)].conj())
    np.fill_diagonal(c, 1.0)
    if regularize:
        c = regularize_correlation(c)
    return c


@dataclass(frozen=True)
class ChannelStats:
    """Second-order statistics of the L-path channel.

    ``ct`` has shape (L, t, t) and ``cr`` shape (L, r, r).
    """

    ct: np.ndarray
    cr: np.ndarray
    sigma2: float
    spacing_wavelengths: float = DEFAULT_SPACING
    carrier_hz: float | None = field(default=None, compare=False)

    def __post_init__(self):
        ct = np.ascontiguousarray(self.ct, dtype=np.complex128)
        cr = np.ascontiguousarray(self.cr, dtype=np.complex128)
        if ct.ndim != 3 or cr.ndim != 3 or ct.shape[1] != ct.shape[2] \
                or cr.shape[1] != cr.shape[2]:
            raise ValueError("ct and cr must be stacks of square matrices")
        if ct.shape[0] != cr.shape[0] or ct.shape[0] < 1:
            raise ValueError("ct and cr must hold the same number (>= 1) of paths")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive and finite, got {self.sigma2!r}")
        for name, mats in (("ct", ct), ("cr", cr)):
            if not np.allclose(mats, mats.conj().transpose(0, 2, 1),
                               rtol=0, atol=1e-12 * max(1.0, np.abs(mats).max())):
                raise ValueError(f"{name} matrices must be Hermitian")
            if np.linalg.eigvalsh(mats).min() <= 0:
                raise ValueError(f"{name} matrices must be positive definite")
        ct.flags.writeable = False
        cr.flags.writeable = False
        object.__setattr__(self, "ct", ct)
        object.__setattr__(self, "cr", cr)

    @property
    def t(self):
        return self.ct.shape[1]

    @property
    def r(self):
        return self.cr.shape[1]

    @property
    def L(self):
        return self.ct.shape[0]

    @cached_property
    def ct_sqrt(self):
        return hermitian_sqrt(self.ct)

    @cached_property
    def cr_sqrt(self):
        return hermitian_sqrt(self.cr)

    def with_sigma2(self, sigma2):
        return ChannelStats(self.ct, self.cr, sigma2, self.spacing_wavelengths,
                            self.carrier_hz)

    def transmit_sum(self, weights):
        """``sum_l weights[l] * ct[l]``."""
        return np.tensordot(np.asarray(weights, dtype=float), self.ct, axes=1)

    def receive_sum(self, weights):
        """``sum_l weights[l] * cr[l]``."""
        return np.tensordot(np.asarray(weights, dtype=float), self.cr, axes=1)

    def channel_covariance(self):
        """Covariance of vec(H) (column stacking): (1/t) sum_l ct[l]^T kron cr[l]."""
        return sum(np.kron(ct.T, cr) for ct, cr in zip(self.ct, self.cr)) / self.t


def build_channel_stats(specs, t, r, sigma2, spacing_wavelengths=DEFAULT_SPACING,
                        *, identity=False, carrier_hz=None, **corr_kwargs):
    """Assemble :class:`ChannelStats` from cluster descriptions.

    Transmit correlations are scaled so that
    ``Tr(ct[l]) = relative_power_l * t * L / sum_m relative_power_m``
    (equal powers give ``Tr(ct[l]) = t``); receive correlations keep a unit
    diagonal. ``identity=True`` replaces every correlation by the identity
    (after the same power scaling), i.e. the uncorrelated channel.
    """
    specs = tuple(specs)
    if not specs:
        raise ValueError("at least one path is required")
    if t < 1 or r < 1:
        raise ValueError("antenna counts must be >= 1")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be > 0")
    powers = np.array([s.relative_power for s in specs], dtype=float)
    scale = powers * len(specs) / powers.sum()
    ct, cr = [], []
    for spec, g in zip(specs, scale):
        if identity:
            ct.append(g * np.eye(t, dtype=complex))
            cr.append(np.eye(r, dtype=complex))
            continue
        ct.append(g * build_ula_correlation(spec.mean_departure_angle,
                                            spec.departure_spread, t,
                                            spacing_wavelengths, **corr_kwargs))
        cr.append(build_ula_correlation(spec.mean_arrival_angle,
                                        spec.arrival_spread, r,
                                        spacing_wavelengths, **corr_kwargs))
    return ChannelStats(np.array(ct), np.array(cr), float(sigma2),
                        spacing_wavelengths, carrier_hz)


def iid_stats(t, r, sigma2, L=1):
    """Uncorrelated channel with ``L`` unit-power paths."""
    return ChannelStats(np.array([np.eye(t)] * L, dtype=complex),
                        np.array([np.eye(r)] * L, dtype=complex), float(sigma2))


def draw_channels(stats, rng, n):
    """Draw ``n`` independent realizations of ``H = sum_l H_l``, shape (n, r, t)."""
    z = rng.standard_normal((n, stats.L, stats.r, stats.t, 2))
    w = (z[..., 0] + 1j * z[..., 1]) * math.sqrt(0.5)
    h = np.einsum("lab,nlbc,lcd->nad", stats.cr_sqrt, w, stats.ct_sqrt,
                  optimize=True)
    return np.ascontiguousarray(h / math.sqrt(stats.t))


def draw_channel(stats, rng):
    """One realization of the frequency-flat channel ``H(1)``, shape (r, t)."""
    return draw_channels(stats, rng, 1)[0]
