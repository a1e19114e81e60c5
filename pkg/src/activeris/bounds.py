"""Realization-wise SINR envelopes, the high-gain ceiling and related tests.

All eigenvalues of ``Q = r r^T + c c^T`` come from its 2 x 2 Gram matrix, so
nothing here is O(N^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from activeris.sinr import SinrCoefficients, config_terms


def rank2_eigenvalues(r: NDArray, c: NDArray) -> tuple[float, float]:
    """``(lambda_min, lambda_max)`` of ``r r^T + c c^T`` (an N x N matrix)."""
    n = r.shape[0]
    a, b, d = float(r @ r), float(r @ c), float(c @ c)
    half_tr = 0.5 * (a + d)
    disc = math.hypot(0.5 * (a - d), b)
    lam_max = half_tr + disc
    if n == 1:
        return lam_max, lam_max
    if n > 2:
        return 0.0, lam_max
    # N == 2: the Gram eigenvalues are Q's eigenvalues; det/lam_max avoids cancellation.
    lam_min = (a * d - b * b) / lam_max if lam_max > 0 else 0.0
    return max(lam_min, 0.0), lam_max


@dataclass(frozen=True)
class EnvelopeTerms:
    B_bar: float
    C_lo: float
    C_hi: float
    B_bar_m: NDArray[np.float64]
    C_lo_m: NDArray[np.float64]
    C_hi_m: NDArray[np.float64]
    lam_max_Q: float
    lam_min_Q: float
    lam_max_Qm: NDArray[np.float64]
    lam_min_Qm: NDArray[np.float64]


def envelope_terms(coeffs: SinrCoefficients) -> EnvelopeTerms:
    rho, N = coeffs.rho, coeffs.N
    lam_min, lam_max = rank2_eigenvalues(coeffs.r, coeffs.c)
    eig_m = np.array([rank2_eigenvalues(coeffs.r_m[m], coeffs.c_m[m]) for m in range(coeffs.M)]).reshape(-1, 2)
    return EnvelopeTerms(
        B_bar=2.0 * rho * coeffs.abs_d * float(np.abs(coeffs.r).sum()),
        C_lo=rho**2 * N * lam_min,
        C_hi=rho**2 * N * lam_max,
        B_bar_m=2.0 * rho * coeffs.abs_dm * np.abs(coeffs.r_m).sum(axis=1),
        C_lo_m=rho**2 * N * eig_m[:, 0],
        C_hi_m=rho**2 * N * eig_m[:, 1],
        lam_max_Q=lam_max,
        lam_min_Q=lam_min,
        lam_max_Qm=eig_m[:, 1],
        lam_min_Qm=eig_m[:, 0],
    )


class Envelope(NamedTuple):
    """Lower/upper SINR envelopes.

    ``numerator_clipped`` / ``interference_clipped`` flag where the lower
    numerator or an interferer's lower term was raised to zero.
    ``unbounded`` marks an upper envelope reported as +inf.
    """

    lb: NDArray | float
    ub: NDArray | float
    numerator_clipped: NDArray | bool
    interference_clipped: NDArray | bool
    unbounded: NDArray | bool


def sinr_envelopes(coeffs: SinrCoefficients, terms: EnvelopeTerms, g) -> Envelope:
    """Envelopes valid for every ``b`` at gain(s) ``g`` (scalar or array)."""
    scalar = np.ndim(g) == 0
    g = np.atleast_1d(np.asarray(g, dtype=float))
    g2 = g * g
    P_d, P_m = coeffs.P_d, coeffs.P_m
    A, A_m = coeffs.A, coeffs.A_m

    n_lo_raw = A - g * terms.B_bar + g2 * terms.C_lo
    n_lo = np.maximum(n_lo_raw, 0.0)
    n_hi = A + g * terms.B_bar + g2 * terms.C_hi

    # per-interferer terms, shape (G, M)
    i_lo_raw = A_m - np.outer(g, terms.B_bar_m) + np.outer(g2, terms.C_lo_m)
    i_lo = np.maximum(i_lo_raw, 0.0)
    i_hi = A_m + np.outer(g, terms.B_bar_m) + np.outer(g2, terms.C_hi_m)

    base = coeffs.D0 + g2 * coeffs.D1
    d_hi = base + i_hi @ P_m
    d_lo = base + i_lo @ P_m

    lb = P_d * n_lo / d_hi
    unbounded = d_lo <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ub = np.where(unbounded, np.inf, P_d * n_hi / np.where(unbounded, 1.0, d_lo))
    out = Envelope(lb, ub, n_lo_raw < 0, (i_lo_raw < 0).any(axis=1), unbounded)
    if scalar:
        return Envelope(*(x[0].item() for x in out))
    return out


def small_g_triangle_bounds(A: float, C_max: float, g):
    """``((sqrt(A) - sqrt(C_max) g)_+^2, (sqrt(A) + sqrt(C_max) g)^2)``.

    Brackets ``|d + rho g u~^T b|^2`` with ``C_max = rho^2 N lambda_max(Q)``.
    """
    sa, sc = np.sqrt(A), np.sqrt(C_max)
    lo = np.maximum(sa - sc * np.asarray(g), 0.0) ** 2
    hi = (sa + sc * np.asarray(g)) ** 2
    if np.ndim(g) == 0:
        return float(lo), float(hi)
    return lo, hi


def _ratio(num: float, den: float) -> float:
    if den > 0:
        return num / den
    return math.inf if num > 0 else 0.0


def high_gain_ceiling(coeffs: SinrCoefficients, b: NDArray) -> float:
    """Limit of SINR(b, g) as g -> inf; +inf if the limit denominator vanishes."""
    _, C, _, C_m = config_terms(coeffs, b)
    return _ratio(coeffs.P_d * C, coeffs.D1 + float(coeffs.P_m @ C_m))


def ceiling_upper_bound(coeffs: SinrCoefficients, terms: EnvelopeTerms) -> float:
    """Configuration-independent bound on :func:`high_gain_ceiling`."""
    return _ratio(coeffs.P_d * terms.C_hi, coeffs.D1 + float(coeffs.P_m @ terms.C_lo_m))


def amplification_beneficial(coeffs: SinrCoefficients, terms: EnvelopeTerms) -> bool:
    """Sufficient condition: the ceiling bound exceeds the passive (g = 0) SINR."""
    return ceiling_upper_bound(coeffs, terms) > coeffs.passive_sinr()
