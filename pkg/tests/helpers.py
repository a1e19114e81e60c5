"""Shared builders and independent reference computations for the tests."""
from __future__ import annotations

import itertools

import numpy as np

from activeris.saa import SAACoefficients
from activeris.sinr import SinrCoefficients


def random_coeffs(
    rng: np.random.Generator,
    S: int,
    N: int,
    M: int,
    *,
    rho: float = 0.9,
    P_d: float = 1.0,
    sigma_min_sq: float = 0.05,
    eta: float = 0.02,
    u_scale: float = 0.4,
    provenance: dict | None = None,
) -> SAACoefficients:
    """Synthetic coefficient set with channel-like magnitudes (no channel draw)."""
    d = rng.standard_normal(S) + 1j * rng.standard_normal(S)
    dm = rng.standard_normal((S, M)) + 1j * rng.standard_normal((S, M))
    L = rng.exponential(1.0, S)
    return SAACoefficients(
        abs_d=np.abs(d) / np.sqrt(2),
        r=u_scale * rng.standard_normal((S, N)),
        c=u_scale * rng.standard_normal((S, N)),
        abs_dm=np.abs(dm) / np.sqrt(2),
        r_m=u_scale * rng.standard_normal((S, M, N)),
        c_m=u_scale * rng.standard_normal((S, M, N)),
        D0=1.0 + sigma_min_sq * L,
        D1=eta * L,
        L=L,
        Psi=rng.exponential(1.0, (S, N)),
        rho=rho,
        P_d=P_d,
        P_m=np.ones(M),
        provenance=dict(provenance or {}),
    )


def single(coeffs: SAACoefficients, s: int = 0) -> SinrCoefficients:
    return coeffs.sample(s)


def all_configs(N: int) -> np.ndarray:
    """Every b in {-1, +1}^N, one per row."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=N)))


def loop_sinr(cs: SinrCoefficients, b, g: float) -> float:
    """SINR from the complex-free quadratic form, written as plain loops."""
    N = cs.N
    br = sum(b[i] * cs.r[i] for i in range(N))
    bc = sum(b[i] * cs.c[i] for i in range(N))
    num = cs.P_d * ((cs.abs_d + cs.rho * g * br) ** 2 + (cs.rho * g * bc) ** 2)
    den = cs.D0 + g * g * cs.D1
    for m in range(cs.M):
        brm = sum(b[i] * cs.r_m[m][i] for i in range(N))
        bcm = sum(b[i] * cs.c_m[m][i] for i in range(N))
        den += cs.P_m[m] * ((cs.abs_dm[m] + cs.rho * g * brm) ** 2 + (cs.rho * g * bcm) ** 2)
    return num / den


def raw_channel_sinr(sample, cfg, b, g: float) -> float:
    """SINR straight from the complex channel matrices of a sample.

    Uses explicit sums over antennas and elements; shares no code with the
    coefficient pipeline.
    """
    w, f = cfg.w, cfg.f
    N = cfg.N

    def direct(H, prec):
        return sum(
            np.conj(w[a]) * H[a, k] * prec[k] for a in range(H.shape[0]) for k in range(H.shape[1])
        )

    def element(H_r, G, prec, i):
        left = sum(np.conj(w[a]) * H_r[a, i] for a in range(H_r.shape[0]))
        right = sum(G[i, k] * prec[k] for k in range(G.shape[1]))
        return left * right

    def gain_term(H, G, prec):
        d = direct(H, prec)
        s = sum(element(sample.H_r, G, prec, i) * b[i] for i in range(N))
        return abs(d + cfg.rho * g * s) ** 2

    Smin, Sex = cfg.amp_noise.matrices(N)
    proj = np.array([sum(np.conj(sample.H_r[a, i]) * w[a] for a in range(len(w))) for i in range(N)])
    fold_min = float(np.real(np.conj(proj) @ Smin @ proj))
    fold_ex = float(np.real(np.conj(proj) @ Sex @ proj))
    den = cfg.N_0 * float(np.real(np.vdot(w, w))) + fold_min + g * g * fold_ex
    for m in range(cfg.M):
        den += cfg.P_m[m] * gain_term(sample.H_dm[m], sample.G_tm[m], cfg.f_m[m])
    return cfg.P_d * gain_term(sample.H_d, sample.G_t, f) / den


def grid_best_order_statistic(coeffs: SAACoefficients, k: int, g_grid: np.ndarray, chunk: int = 64):
    """Brute force ``max over (b, g) of the (k+1)-th smallest sample SINR``."""
    B = all_configs(coeffs.N)
    best = -np.inf
    for start in range(0, B.shape[0], chunk):
        Bc = B[start : start + chunk]
        br = Bc @ coeffs.r.T
        bc = Bc @ coeffs.c.T
        g = g_grid[None, None, :]
        num = coeffs.P_d * ((coeffs.abs_d[None, :, None] + coeffs.rho * g * br[:, :, None]) ** 2
                            + (coeffs.rho * g * bc[:, :, None]) ** 2)
        den = coeffs.D0[None, :, None] + g * g * coeffs.D1[None, :, None]
        for m in range(coeffs.M):
            brm = Bc @ coeffs.r_m[:, m, :].T
            bcm = Bc @ coeffs.c_m[:, m, :].T
            den = den + coeffs.P_m[m] * ((coeffs.abs_dm[None, :, m, None] + coeffs.rho * g * brm[:, :, None]) ** 2
                                         + (coeffs.rho * g * bcm[:, :, None]) ** 2)
        sinr = num / den
        kth = np.partition(sinr, k, axis=1)[:, k, :]
        best = max(best, float(kth.max()))
    return best


# Acceptance verdicts collected during the run and echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def verdict(criterion: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
    print(line, flush=True)
    ACCEPTANCE_LINES.append(line)
    return ok
