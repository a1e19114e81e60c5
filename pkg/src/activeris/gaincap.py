"""Admissible amplifier gain from small-signal stability and EIRP limits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from activeris.errors import DomainError

RULES = ("worst_case", "quantile", "cantelli")


def g_stab(mu_safety: float, MAG: float) -> float:
    """Stability-limited gain ``mu * MAG``."""
    if not 0 < mu_safety < 1:
        raise DomainError(f"safety factor must lie in (0, 1), got {mu_safety}")
    if MAG <= 0:
        raise DomainError("MAG must be positive")
    return mu_safety * MAG


def psi_max_per_sample(samples) -> NDArray[np.float64]:
    """Worst-cell incident power of each sample.

    Accepts ``ScenarioSample`` objects or a 2-D array of per-element powers.
    """
    if isinstance(samples, np.ndarray):
        psi = samples
    else:
        samples = list(samples)
        if not samples:
            raise ValueError("empty sample set")
        psi = np.array([s.Psi for s in samples])
    if psi.size == 0:
        raise ValueError("empty sample set")
    return psi.max(axis=1)


def _cap(P_cell_max: float, rho: float, level: float) -> float:
    if P_cell_max <= 0:
        raise DomainError("P_cell_max must be positive")
    if not 0 < rho <= 1:
        raise DomainError("rho must lie in (0, 1]")
    if level <= 0:
        return math.inf
    return math.sqrt(P_cell_max) / (rho * math.sqrt(level))


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def g_eirp_worst_case(psi_max: NDArray, P_cell_max: float, rho: float) -> float:
    psi_max = np.asarray(psi_max, dtype=float)
    return _cap(P_cell_max, rho, float(psi_max.max()))


def ceil_rank(x: float) -> int:
    """``ceil(x)`` that ignores float noise such as ``(1 - 0.7) * 10 = 3.0000000000000004``."""
    return math.ceil(round(x, 9))


def upper_order_statistic(values: NDArray, alpha: float) -> float:
    """``(1 - alpha)`` quantile: entry ``ceil((1 - alpha) S)`` (1-based) of the sorted values."""
    _check_alpha(alpha)
    v = np.sort(np.asarray(values, dtype=float))
    k = ceil_rank((1.0 - alpha) * v.size)
    return float(v[min(max(k, 1), v.size) - 1])


def g_eirp_quantile(psi_max: NDArray, alpha: float, P_cell_max: float, rho: float) -> float:
    return _cap(P_cell_max, rho, upper_order_statistic(psi_max, alpha))


def cantelli_level(psi_max: NDArray, alpha: float) -> tuple[float, float, float]:
    """``(mu, sigma, mu + c_alpha sigma)`` with ``c_alpha = sqrt((1 - alpha)/alpha)``."""
    _check_alpha(alpha)
    psi_max = np.asarray(psi_max, dtype=float)
    if psi_max.size < 2:
        raise ValueError("Cantelli bound needs at least two samples")
    mu = float(psi_max.mean())
    sigma = float(psi_max.std(ddof=1))
    return mu, sigma, mu + math.sqrt((1.0 - alpha) / alpha) * sigma


def g_eirp_cantelli(psi_max: NDArray, alpha: float, P_cell_max: float, rho: float) -> float:
    return _cap(P_cell_max, rho, cantelli_level(psi_max, alpha)[2])


def g_max(g_stab_value: float, g_eirp_value: float) -> float:
    if g_stab_value < 0 or g_eirp_value < 0:
        raise DomainError("gain bounds must be nonnegative")
    return min(g_stab_value, g_eirp_value)


@dataclass(frozen=True)
class GainCap:
    g_stab: float
    g_eirp: float
    g_max: float
    rule: str
    alpha: float | None = None
    diagnostics: dict = field(default_factory=dict)


def compute_gain_cap(
    psi: NDArray,
    *,
    mu_safety: float,
    MAG: float,
    P_cell_max: float,
    rho: float,
    rule: str = "worst_case",
    alpha: float | None = None,
) -> GainCap:
    """Full gain-cap report from per-sample incident powers ``psi`` (S x N)."""
    if rule not in RULES:
        raise ValueError(f"unknown EIRP rule {rule!r}; choose from {RULES}")
    pm = psi_max_per_sample(np.asarray(psi))
    diag = {"samples": int(pm.size), "psi_max_max": float(pm.max())}
    gs = g_stab(mu_safety, MAG)
    if rule == "worst_case":
        ge = g_eirp_worst_case(pm, P_cell_max, rho)
    elif rule == "quantile":
        ge = g_eirp_quantile(pm, alpha, P_cell_max, rho)
        diag["q_1_minus_alpha"] = upper_order_statistic(pm, alpha)
    else:
        mu, sigma, _ = cantelli_level(pm, alpha)
        ge = g_eirp_cantelli(pm, alpha, P_cell_max, rho)
        diag.update(mu_max=mu, sigma_max=sigma)
    return GainCap(gs, ge, g_max(gs, ge), rule, alpha if rule != "worst_case" else None, diag)
