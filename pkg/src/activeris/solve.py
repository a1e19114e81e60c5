"""Threshold bisection with pluggable SAA feasibility oracles.

For a fixed configuration ``b`` and threshold ``tau`` each scenario constraint
is a quadratic inequality in the gain::

    a g^2 + bh g + c >= 0
    a  = P_d C(b) - tau (D1 + sum_m P_m C_m(b))
    bh = P_d B(b) - tau sum_m P_m B_m(b)
    c  = P_d A - tau (D0 + sum_m P_m A_m)

so the set of gains satisfying it is at most two closed intervals. A pair
``(b, g)`` meets the violation budget when ``g`` is covered by at least
``S - kappa`` of these interval sets, which a sorted endpoint sweep decides
exactly.
"""
from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
from numpy.typing import NDArray

from activeris.errors import CapabilityError, DimensionError, DomainError
from activeris.gaincap import ceil_rank
from activeris.saa import SAACoefficients, violation_budget
from activeris.sinr import SinrCoefficients, config_terms

N_ENUM_CAP = 16
# Relative margin a sample must clear before a candidate is accepted, so that a
# gain sitting exactly on an interval endpoint cannot flip under rounding.
ACCEPT_MARGIN = 1e-9
ORACLES = ("exact", "local_search", "external")


# ---------------------------------------------------------------------------
# gain interval sets


@dataclass(frozen=True)
class GIntervalSet:
    """Sorted, disjoint, nonempty closed intervals."""

    intervals: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        prev = -math.inf
        for lo, hi in self.intervals:
            if not lo <= hi:
                raise ValueError(f"empty interval [{lo}, {hi}]")
            if lo <= prev:
                raise ValueError("intervals must be sorted and disjoint")
            prev = hi

    @classmethod
    def from_pairs(cls, pairs) -> GIntervalSet:
        """Union of closed intervals; empty ones are dropped and touching ones merged."""
        kept = sorted((float(lo), float(hi)) for lo, hi in pairs if lo <= hi)
        merged: list[list[float]] = []
        for lo, hi in kept:
            if merged and lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return cls(tuple((lo, hi) for lo, hi in merged))

    def __iter__(self) -> Iterator[tuple[float, float]]:
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def measure(self) -> float:
        return sum(hi - lo for lo, hi in self.intervals)

    def contains(self, g: float) -> bool:
        return any(lo <= g <= hi for lo, hi in self.intervals)


def quadratic_intervals(a, bh, c, g_max: float, g_min: float = 0.0):
    """Solution set of ``a g^2 + bh g + c >= 0`` on ``[g_min, g_max]``, elementwise.

    Returns ``(lo1, hi1, lo2, hi2)``; an empty slot is ``(inf, inf)``. The two
    intervals never overlap.
    """
    a, bh, c = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, bh, c)))
    shape = a.shape
    lo1 = np.full(shape, np.inf)
    hi1 = np.full(shape, np.inf)
    lo2 = np.full(shape, np.inf)
    hi2 = np.full(shape, np.inf)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        disc = bh * bh - 4.0 * a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        q = -0.5 * (bh + np.copysign(sq, bh))
        ra = q / a
        rb = c / q
        r1 = np.minimum(ra, rb)
        r2 = np.maximum(ra, rb)
        zero_q = q == 0
        r1 = np.where(zero_q, 0.0, r1)
        r2 = np.where(zero_q, 0.0, r2)
        root = -c / bh

    full = np.zeros(shape, dtype=bool)
    full |= (a == 0) & (bh == 0) & (c >= 0)
    full |= (a > 0) & (disc <= 0)

    # convex with two distinct roots: (-inf, r1] and [r2, inf)
    cvx = (a > 0) & (disc > 0)
    lo1 = np.where(cvx, g_min, lo1)
    hi1 = np.where(cvx, np.minimum(r1, g_max), hi1)
    lo2 = np.where(cvx, np.maximum(r2, g_min), lo2)
    hi2 = np.where(cvx, g_max, hi2)

    # concave: [r1, r2]
    ccv = (a < 0) & (disc >= 0)
    lo1 = np.where(ccv, np.maximum(r1, g_min), lo1)
    hi1 = np.where(ccv, np.minimum(r2, g_max), hi1)

    # linear
    up = (a == 0) & (bh > 0)
    lo1 = np.where(up, np.maximum(root, g_min), lo1)
    hi1 = np.where(up, g_max, hi1)
    down = (a == 0) & (bh < 0)
    lo1 = np.where(down, g_min, lo1)
    hi1 = np.where(down, np.minimum(root, g_max), hi1)

    lo1 = np.where(full, g_min, lo1)
    hi1 = np.where(full, g_max, hi1)

    for lo, hi in ((lo1, hi1), (lo2, hi2)):
        bad = ~(lo <= hi) | np.isnan(lo) | np.isnan(hi)
        lo[bad] = np.inf
        hi[bad] = np.inf
    # canonical +0.0 so the bit-level sort below orders correctly
    return lo1 + 0.0, hi1 + 0.0, lo2 + 0.0, hi2 + 0.0


def _pairs_to_set(lo1, hi1, lo2, hi2) -> GIntervalSet:
    return GIntervalSet.from_pairs(
        (lo, hi) for lo, hi in ((float(lo1), float(hi1)), (float(lo2), float(hi2))) if math.isfinite(lo)
    )


def _as_sample(coeffs) -> SinrCoefficients:
    if isinstance(coeffs, SAACoefficients):
        if coeffs.S != 1:
            raise DimensionError("expected the coefficients of a single sample")
        return coeffs.sample(0)
    return coeffs


def feasible_g_intervals(coeffs_s, b: NDArray, tau: float, g_max: float) -> GIntervalSet:
    """Gains in ``[0, g_max]`` at which one sample reaches SINR ``tau`` with configuration ``b``."""
    cs = _as_sample(coeffs_s)
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    B, C, B_m, C_m = config_terms(cs, b)
    a = cs.P_d * C - tau * (cs.D1 + float(cs.P_m @ C_m))
    bh = cs.P_d * B - tau * float(cs.P_m @ B_m)
    c = cs.P_d * cs.A - tau * (cs.D0 + float(cs.P_m @ cs.A_m))
    return _pairs_to_set(*quadratic_intervals(a, bh, c, g_max))


# ---------------------------------------------------------------------------
# batched evaluation of configurations


class _Prepared:
    """Sample-stacked quantities reused across configurations and thresholds."""

    def __init__(self, coeffs: SAACoefficients) -> None:
        self.coeffs = coeffs
        S, N, M = coeffs.S, coeffs.N, coeffs.M
        self.S, self.N, self.M = S, N, M
        self.r, self.c = coeffs.r, coeffs.c
        self.rm = coeffs.r_m.reshape(S * M, N)
        self.cm = coeffs.c_m.reshape(S * M, N)
        self.rho, self.P_d, self.P_m = coeffs.rho, coeffs.P_d, coeffs.P_m
        self.A = coeffs.A
        self.interf_A = coeffs.A_m @ coeffs.P_m if M else np.zeros(S)

    def terms(self, Bm: NDArray):
        """Gain polynomials of numerator and denominator for rows ``Bm`` (K x N).

        Returns ``(n1, n2, d1, d2)`` with per-sample numerator
        ``P_d A + n1 g + n2 g^2`` and denominator ``D0 + sum P_m A_m + d1 g + d2 g^2``.
        """
        rho, P_d, P_m, S, M = self.rho, self.P_d, self.P_m, self.S, self.M
        cf = self.coeffs
        br = Bm @ self.r.T
        bc = Bm @ self.c.T
        n2 = P_d * rho**2 * (br * br + bc * bc)
        n1 = (2.0 * rho * P_d) * cf.abs_d * br
        if M:
            brm = (Bm @ self.rm.T).reshape(-1, S, M)
            bcm = (Bm @ self.cm.T).reshape(-1, S, M)
            d2 = cf.D1 + rho**2 * ((brm * brm + bcm * bcm) @ P_m)
            d1 = 2.0 * rho * ((cf.abs_dm * brm) @ P_m)
        else:
            d2 = np.broadcast_to(cf.D1, n2.shape)
            d1 = np.zeros_like(n1)
        return n1, n2, d1, d2

    @property
    def n0(self) -> NDArray:
        return self.P_d * self.A

    @property
    def d0(self) -> NDArray:
        return self.coeffs.D0 + self.interf_A

    def quadratic(self, Bm: NDArray, tau: float):
        """Per-row, per-sample ``(a, bh, c)`` for configuration rows ``Bm`` (K x N)."""
        n1, n2, d1, d2 = self.terms(Bm)
        return n2 - tau * d2, n1 - tau * d1, self.n0 - tau * self.d0

    def sinr(self, Bm: NDArray, g: float) -> NDArray:
        n1, n2, d1, d2 = self.terms(Bm)
        return (self.n0 + g * (n1 + g * n2)) / (self.d0 + g * (d1 + g * d2))


def _sweep_rows(lo: NDArray, hi: NDArray):
    """Best coverage per row of closed intervals ``[lo, hi]`` (empty = inf).

    Returns ``(coverage, seg_lo, seg_hi)`` where the segment is the widest
    stretch attaining that coverage. Endpoints are sorted as bit patterns with
    a start/end flag in the low bit so starts precede ends at equal positions.
    """
    K = lo.shape[0]
    ev = np.concatenate(
        [lo.view(np.uint64) << np.uint64(1), (hi.view(np.uint64) << np.uint64(1)) | np.uint64(1)], axis=1
    )
    ev.sort(axis=1)
    is_end = (ev & np.uint64(1)).astype(bool)
    pos = (ev >> np.uint64(1)).view(np.float64)
    cov = np.cumsum(np.where(is_end, -1, 1).astype(np.int32), axis=1)
    cov[is_end | np.isinf(pos)] = -1
    nxt = np.empty_like(pos)
    nxt[:, :-1] = pos[:, 1:]
    nxt[:, -1] = pos[:, -1]
    best = cov.max(axis=1)
    with np.errstate(invalid="ignore"):
        width = np.where(cov == best[:, None], nxt - pos, -1.0)
    k = width.argmax(axis=1)
    rows = np.arange(K)
    best = np.maximum(best, 0)
    return best, pos[rows, k], nxt[rows, k]


def _score_rows(prep: _Prepared, Bm: NDArray, tau: float, g_max: float, need: int, g_fixed: float | None = None):
    """``(coverage, seg_lo, seg_hi)`` for each configuration row."""
    a, bh, c = prep.quadratic(Bm, tau)
    if g_fixed is not None:
        val = (a * g_fixed + bh) * g_fixed + c
        cov = (val >= 0).sum(axis=1).astype(np.int32)
        g = np.full(cov.shape, float(g_fixed))
        return cov, g, g
    lo1, hi1, lo2, hi2 = quadratic_intervals(a, bh, c, g_max)
    nonempty = np.isfinite(lo1) | np.isfinite(lo2)
    count = nonempty.sum(axis=1).astype(np.int32)
    K = Bm.shape[0]
    cov = count.copy()
    seg_lo = np.full(K, np.nan)
    seg_hi = np.full(K, np.nan)
    live = np.flatnonzero(count >= need)
    if live.size:
        c_, l_, h_ = _sweep_rows(
            np.concatenate([lo1[live], lo2[live]], axis=1), np.concatenate([hi1[live], hi2[live]], axis=1)
        )
        cov[live] = c_
        seg_lo[live] = l_
        seg_hi[live] = h_
    return cov, seg_lo, seg_hi


def config_rows(N: int, index: NDArray) -> NDArray[np.float64]:
    """Configurations for enumeration indices ``j``.

    ``j >> 1`` selects a sign class (first element fixed to +1, the rest from
    its bits) and the low bit selects ``b`` or ``-b``.
    """
    index = np.asarray(index, dtype=np.int64)
    k = index >> 1
    sign = 1.0 - 2.0 * (index & 1)
    rows = np.ones((index.size, N))
    if N > 1:
        bits = (k[:, None] >> np.arange(N - 1)) & 1
        rows[:, 1:] = 1.0 - 2.0 * bits
    return rows * sign[:, None]


def config_index(b: NDArray) -> int:
    """Inverse of :func:`config_rows`."""
    b = np.asarray(b)
    neg = b[0] < 0
    cls = b * (-1 if neg else 1)
    k = sum(1 << i for i, x in enumerate(cls[1:]) if x < 0)
    return 2 * k + int(neg)


# ---------------------------------------------------------------------------
# verification


def sinr_per_sample(coeffs: SAACoefficients, b: NDArray, g: float) -> tuple[NDArray, NDArray]:
    """Numerator ``P_d |.|^2`` and denominator of every sample's SINR."""
    b = np.asarray(b, dtype=float)
    rho = coeffs.rho
    br, bc = coeffs.r @ b, coeffs.c @ b
    num = coeffs.P_d * (coeffs.A + g * 2 * rho * coeffs.abs_d * br + g * g * rho**2 * (br * br + bc * bc))
    den = coeffs.D0 + g * g * coeffs.D1
    if coeffs.M:
        brm, bcm = coeffs.r_m @ b, coeffs.c_m @ b
        im = coeffs.A_m + g * 2 * rho * coeffs.abs_dm * brm + g * g * rho**2 * (brm * brm + bcm * bcm)
        den = den + im @ coeffs.P_m
    return num, den


def count_violations(coeffs: SAACoefficients, b: NDArray, g: float, tau: float, margin: float = 0.0) -> int:
    """Scenarios with ``P_d S_s(b, g) < tau (1 + margin) D_s(b, g)``."""
    num, den = sinr_per_sample(coeffs, b, g)
    return int(np.count_nonzero(num < tau * (1.0 + margin) * den))


@dataclass(frozen=True)
class OracleResult:
    """A verified ``(b, g)`` meeting the violation budget at ``tau``."""

    b: NDArray[np.int8]
    g: float
    tau: float
    coverage: int
    violations: int
    oracle: str
    feasible_configs: NDArray[np.int64] | None = None


def _verify_candidates(coeffs, order, cov, seg_lo, seg_hi, index, tau, kappa, need, oracle, limit=64):
    N = coeffs.N
    for pos in order[:limit]:
        if cov[pos] < need:
            break
        lo, hi = seg_lo[pos], seg_hi[pos]
        g = float(0.5 * (lo + hi)) if math.isfinite(hi) else float(lo)
        b = config_rows(N, np.array([index[pos]]))[0]
        if count_violations(coeffs, b, g, tau, ACCEPT_MARGIN) <= kappa:
            viol = count_violations(coeffs, b, g, tau)
            return OracleResult(b.astype(np.int8), g, float(tau), int(cov[pos]), viol, oracle)
    return None


def _rank(cov, seg_lo, seg_hi, index):
    width = np.where(np.isfinite(seg_hi), seg_hi - seg_lo, 0.0)
    width = np.nan_to_num(width, nan=-1.0)
    return np.lexsort((index, -width, -cov))


# ---------------------------------------------------------------------------
# exact oracle


def check_feasible_exact(
    coeffs: SAACoefficients,
    tau: float,
    kappa: int,
    g_max: float,
    *,
    n_cap: int = N_ENUM_CAP,
    threads: int = 1,
    block: int = 4096,
    candidates: NDArray | None = None,
    g_fixed: float | None = None,
) -> OracleResult | None:
    """Exact budget feasibility by enumerating every configuration.

    Each sign class ``{b, -b}`` shares its quadratic terms and flips its
    linear ones; both members are scanned. ``candidates`` restricts the scan
    to enumeration indices known to be the only ones that can still be
    feasible (used by the bisection driver, which passes the configurations
    feasible at a lower threshold). ``g_fixed`` pins the gain instead of
    searching ``[0, g_max]``.

    Returns the pair of largest coverage (widest segment, then lowest index
    on ties) with ``g`` at the segment midpoint, or ``None``.
    """
    N, S = coeffs.N, coeffs.S
    if N > n_cap:
        raise CapabilityError(
            f"exact enumeration is capped at N={n_cap} (got N={N}); use the local_search or external oracle"
        )
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    need = S - kappa
    if need <= 0:
        b = np.ones(N, dtype=np.int8)
        g0 = 0.0 if g_fixed is None else float(g_fixed)
        return OracleResult(b, g0, float(tau), S, count_violations(coeffs, b, g0, tau), "exact")
    prep = _Prepared(coeffs)
    index = np.arange(2**N, dtype=np.int64) if candidates is None else np.asarray(candidates, dtype=np.int64)
    chunks = [index[i : i + block] for i in range(0, index.size, block)]

    def work(idx):
        return _score_rows(prep, config_rows(N, idx), tau, g_max, need, g_fixed)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(ch) for ch in chunks]
    if not parts:
        return None
    cov = np.concatenate([p[0] for p in parts])
    seg_lo = np.concatenate([p[1] for p in parts])
    seg_hi = np.concatenate([p[2] for p in parts])
    ok = cov >= need
    if not ok.any():
        return None
    order = _rank(cov, seg_lo, seg_hi, index)
    res = _verify_candidates(coeffs, order, cov, seg_lo, seg_hi, index, tau, kappa, need, "exact")
    if res is None:
        return None
    return OracleResult(res.b, res.g, res.tau, res.coverage, res.violations, "exact", index[ok])


def _enumerate_order_statistic(coeffs, k, g, n_cap, block, threads):
    N = coeffs.N
    if N > n_cap:
        raise CapabilityError(
            f"exact enumeration is capped at N={n_cap} (got N={N}); use the local_search or external oracle"
        )
    prep = _Prepared(coeffs)
    index = np.arange(2**N, dtype=np.int64)
    chunks = [index[i : i + block] for i in range(0, index.size, block)]

    def work(idx):
        return np.partition(prep.sinr(config_rows(N, idx), g), k, axis=1)[:, k]

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            vals = np.concatenate(list(ex.map(work, chunks)))
    else:
        vals = np.concatenate([work(ch) for ch in chunks])
    best = int(np.argmax(vals))
    return float(vals[best]), config_rows(N, index[best : best + 1])[0].astype(np.int8)


def _climb_order_statistic(coeffs, k, g, restarts, seed):
    N = coeffs.N
    prep = _Prepared(coeffs)
    rng = np.random.Generator(np.random.Philox(seed))
    flips = 1.0 - 2.0 * np.eye(N)

    def score(rows):
        return np.partition(prep.sinr(rows, g), k, axis=1)[:, k]

    best_val, best_b = -math.inf, None
    for _ in range(restarts):
        b = rng.choice(np.array([-1.0, 1.0]), size=N)
        cur = float(score(b[None, :])[0])
        for _ in range(4 * N):
            vals = score(b[None, :] * flips)
            j = int(np.argmax(vals))
            if vals[j] <= cur:
                break
            b, cur = b * flips[j], float(vals[j])
        if cur > best_val:
            best_val, best_b = cur, b.copy()
    return best_val, best_b.astype(np.int8)


def best_order_statistic(
    coeffs: SAACoefficients,
    k: int,
    g: float,
    *,
    method: str = "auto",
    n_cap: int = N_ENUM_CAP,
    block: int = 4096,
    threads: int = 1,
    restarts: int = 8,
    seed: int = 0,
) -> tuple[float, NDArray[np.int8], str]:
    """Maximize the ``k``-th smallest (0-based) sample SINR over ``b`` at gain ``g``.

    ``method`` is ``"exact"`` (enumeration), ``"local_search"`` (seeded
    bit-flip hill climbing) or ``"auto"`` (exact up to ``n_cap``).
    Returns ``(value, b, method_used)``.
    """
    if g < 0:
        raise DomainError("gain must be nonnegative")
    k = min(max(int(k), 0), coeffs.S - 1)
    if method == "auto":
        method = "exact" if coeffs.N <= n_cap else "local_search"
    if method == "exact":
        val, b = _enumerate_order_statistic(coeffs, k, g, n_cap, block, threads)
    elif method == "local_search":
        val, b = _climb_order_statistic(coeffs, k, g, restarts, seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    return val, b, method


def max_tau_fixed_gain(
    coeffs: SAACoefficients,
    kappa: int,
    g: float,
    *,
    n_cap: int = N_ENUM_CAP,
    block: int = 4096,
    threads: int = 1,
) -> tuple[float, NDArray[np.int8]]:
    """Exact ``tau*`` at a pinned gain, without bisection.

    With ``g`` fixed, ``b`` meets the budget at ``tau`` iff at least
    ``S - kappa`` samples reach ``tau``, i.e. iff its ``(kappa + 1)``-th
    smallest sample SINR is at least ``tau``. ``tau*`` is the maximum of that
    order statistic over all configurations (ties to the lowest index).
    """
    val, b, _ = best_order_statistic(coeffs, kappa, g, method="exact", n_cap=n_cap, block=block, threads=threads)
    return val, b


class ExactOracle:
    """Callable wrapper of :func:`check_feasible_exact`."""

    name = "exact"
    accepts_candidates = True

    def __init__(self, n_cap: int = N_ENUM_CAP, threads: int = 1, g_fixed: float | None = None) -> None:
        self.n_cap = n_cap
        self.threads = threads
        self.g_fixed = g_fixed

    def __call__(self, coeffs, tau, kappa, g_max, candidates=None):
        return check_feasible_exact(
            coeffs, tau, kappa, g_max, n_cap=self.n_cap, threads=self.threads, candidates=candidates, g_fixed=self.g_fixed
        )


# ---------------------------------------------------------------------------
# local search


def check_feasible_local(
    coeffs: SAACoefficients,
    tau: float,
    kappa: int,
    g_max: float,
    restarts: int = 16,
    rng: np.random.Generator | int | None = None,
    *,
    max_steps: int | None = None,
    g_fixed: float | None = None,
) -> OracleResult | None:
    """Multi-start single-bit-flip hill climbing over configurations.

    A configuration scores by its best coverage from the interval sweep, then
    by the width of that segment. Returned pairs are re-verified; ``None``
    does not prove infeasibility.
    """
    if restarts < 1:
        raise DomainError("restarts must be at least 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.Generator(np.random.Philox(0 if rng is None else rng))
    N, S = coeffs.N, coeffs.S
    need = S - kappa
    prep = _Prepared(coeffs)
    max_steps = max_steps or 4 * N
    flips = 1.0 - 2.0 * np.eye(N)

    def check(rows):
        cov, lo, hi = _score_rows(prep, rows, tau, g_max, max(need, 0), g_fixed)
        return cov, lo, hi, np.arange(rows.shape[0])

    for _ in range(restarts):
        b = rng.choice(np.array([-1.0, 1.0]), size=N)
        cov, lo, hi, idx = check(b[None, :])
        cur = (int(cov[0]), _width(lo[0], hi[0]))
        for _ in range(max_steps):
            if cur[0] >= need:
                break
            nb = b[None, :] * flips
            cov, lo, hi, idx = check(nb)
            order = _rank(cov, lo, hi, idx)
            k = order[0]
            cand = (int(cov[k]), _width(lo[k], hi[k]))
            if cand <= cur:
                break
            b, cur = nb[k], cand
        if cur[0] >= need:
            cov, lo, hi, _ = check(b[None, :])
            res = _verify_local(coeffs, b, cov[0], lo[0], hi[0], tau, kappa)
            if res is not None:
                return res
    return None


def _verify_local(coeffs, b, cov, lo, hi, tau, kappa):
    g = float(0.5 * (lo + hi)) if math.isfinite(hi) else float(lo)
    if count_violations(coeffs, b, g, tau, ACCEPT_MARGIN) > kappa:
        return None
    viol = count_violations(coeffs, b, g, tau)
    return OracleResult(b.astype(np.int8), g, float(tau), int(cov), viol, "local_search")


def _width(lo: float, hi: float) -> float:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return -1.0
    return float(hi - lo)


class LocalSearchOracle:
    """Local search with a fresh, identically seeded generator on every call."""

    name = "local_search"
    accepts_candidates = False

    def __init__(self, restarts: int = 16, seed: int = 0, g_fixed: float | None = None) -> None:
        self.restarts = restarts
        self.seed = seed
        self.g_fixed = g_fixed

    def __call__(self, coeffs, tau, kappa, g_max):
        rng = np.random.Generator(np.random.Philox(self.seed))
        return check_feasible_local(coeffs, tau, kappa, g_max, self.restarts, rng, g_fixed=self.g_fixed)


# ---------------------------------------------------------------------------
# bisection


@dataclass(frozen=True)
class BisectionTrace:
    tau_star: float
    incumbent: object
    incumbent_tau: float
    iterations: int
    tau_hi: float
    history: tuple[tuple[float, bool], ...]


def bisection_iterations(span: float, eps_tau: float) -> int:
    return max(0, math.ceil(math.log2(span / eps_tau))) if span > 0 else 0


def bisection_search(
    feasible: Callable[..., object | None],
    tau_lo: float,
    tau_hi: float,
    eps_tau: float = 1e-3,
    *,
    pass_incumbent: bool = False,
) -> BisectionTrace:
    """Classic bisection on a monotone oracle ``feasible(tau) -> witness | None``.

    With ``pass_incumbent`` the oracle is called as ``feasible(tau, last)``
    where ``last`` is the most recent feasible witness. If the final lower
    bracket was never evaluated (no feasible midpoint), it is evaluated once.
    """
    if not tau_hi > tau_lo:
        raise DomainError("tau_hi must exceed tau_lo")
    if eps_tau <= 0:
        raise DomainError("eps_tau must be positive")
    n_iter = bisection_iterations(tau_hi - tau_lo, eps_tau)
    lo, hi = float(tau_lo), float(tau_hi)
    incumbent, inc_tau = None, math.nan
    history = []

    def call(tau):
        return feasible(tau, incumbent) if pass_incumbent else feasible(tau)

    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        res = call(mid)
        ok = res is not None and res is not False
        history.append((mid, ok))
        if ok:
            lo, incumbent, inc_tau = mid, res, mid
        else:
            hi = mid
    if incumbent is None or inc_tau != lo:
        res = call(lo)
        history.append((lo, res is not None and res is not False))
        if res is None or res is False:
            raise RuntimeError(f"oracle reported infeasible at the lower bracket tau={lo}")
        incumbent, inc_tau = res, lo
    return BisectionTrace(lo, incumbent, inc_tau, n_iter, float(tau_hi), tuple(history))


def sample_sinr_bounds(coeffs: SAACoefficients, g_max: float, cells: int = 256) -> NDArray[np.float64]:
    """Per-sample bound on the SINR over every ``b`` and every ``g`` in ``[0, g_max]``.

    With ``k = rho ||u~||_1`` the triangle inequality gives
    ``|d| + k g >= |d + rho g b.u~|`` and ``(|d_m| - k_m g)_+`` as a floor for
    each interferer amplitude. On each gain cell ``[g_a, g_b]`` the numerator
    is taken at ``g_b`` and the denominator floor at the end that minimizes
    each term, so the maximum over cells bounds the SINR everywhere.
    """
    rho = coeffs.rho
    k = rho * np.hypot(coeffs.r, coeffs.c).sum(axis=1)
    edges = np.linspace(0.0, g_max, cells + 1)
    ga, gb = edges[:-1], edges[1:]
    num = coeffs.P_d * (coeffs.abs_d[:, None] + k[:, None] * gb) ** 2
    den = coeffs.D0[:, None] + coeffs.D1[:, None] * ga * ga
    if coeffs.M:
        km = rho * np.hypot(coeffs.r_m, coeffs.c_m).sum(axis=2)
        amp = np.maximum(coeffs.abs_dm[:, :, None] - km[:, :, None] * gb, 0.0)
        den = den + np.einsum("smg,m->sg", amp * amp, coeffs.P_m)
    return (num / den).max(axis=1)


def default_tau_hi(coeffs: SAACoefficients, kappa: int, g_max: float, margin: float = 0.05) -> float:
    """Upper bracket no budget-feasible threshold can reach.

    A feasible ``tau`` needs ``S - kappa`` samples with SINR at least ``tau``,
    so it cannot exceed the ``(S - kappa)``-th largest per-sample bound.
    """
    ub = sample_sinr_bounds(coeffs, g_max)
    k = min(max(kappa, 0), coeffs.S - 1)
    return float(np.sort(ub)[k]) * (1.0 + margin) + 1e-9


@dataclass(frozen=True)
class Design:
    """Solution ``(b*, g*, tau*)`` of the bisection with its provenance."""

    b_star: NDArray[np.int8]
    g_star: float
    tau_star: float
    oracle: str
    violated_on_train: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        b = np.asarray(self.b_star)
        if b.ndim != 1 or not np.all(np.abs(b) == 1):
            raise DomainError("b_star must be a vector of +-1 entries")
        object.__setattr__(self, "b_star", b.astype(np.int8))
        if self.oracle not in ORACLES:
            raise ValueError(f"unknown oracle {self.oracle!r}")
        kappa = self.provenance.get("kappa")
        if kappa is not None and self.violated_on_train > kappa:
            raise DomainError(f"design violates {self.violated_on_train} > kappa={kappa} training scenarios")

    @property
    def kappa(self) -> int | None:
        return self.provenance.get("kappa")

    def to_dict(self) -> dict:
        return {
            "b_star": [int(x) for x in self.b_star],
            "g_star": self.g_star,
            "tau_star": self.tau_star,
            "oracle": self.oracle,
            "violated_on_train": self.violated_on_train,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Design:
        return cls(
            np.array(data["b_star"], dtype=np.int8),
            float(data["g_star"]),
            float(data["tau_star"]),
            data["oracle"],
            int(data["violated_on_train"]),
            dict(data.get("provenance", {})),
        )


def _oracle_name(oracle) -> str:
    return getattr(oracle, "name", "external")


def bisect_tau(
    oracle,
    coeffs: SAACoefficients,
    epsilon: float,
    g_max: float,
    tau_lo: float = 0.0,
    tau_hi: float | None = None,
    eps_tau: float = 1e-3,
    provenance: dict | None = None,
) -> Design:
    """Largest threshold the oracle can certify, to within ``eps_tau``.

    ``oracle(coeffs, tau, kappa, g_max)`` returns an :class:`OracleResult` or
    ``None``. Oracles flagged ``accepts_candidates`` also receive the
    configurations feasible at the current lower bracket; by monotonicity no
    other configuration can be feasible above it.
    """
    S = coeffs.S
    kappa = violation_budget(epsilon, S)
    if tau_hi is None:
        tau_hi = default_tau_hi(coeffs, kappa, g_max)
    hinted = getattr(oracle, "accepts_candidates", False)

    def feasible(tau, last):
        if hinted and last is not None and last.feasible_configs is not None:
            return oracle(coeffs, tau, kappa, g_max, candidates=last.feasible_configs)
        return oracle(coeffs, tau, kappa, g_max)

    trace = bisection_search(feasible, tau_lo, tau_hi, eps_tau, pass_incumbent=True)
    res: OracleResult = trace.incumbent
    viol = count_violations(coeffs, res.b, res.g, trace.tau_star)
    prov = dict(provenance or {})
    prov.update(
        epsilon=float(epsilon),
        S=int(S),
        kappa=int(kappa),
        eps_tau=float(eps_tau),
        iterations=int(trace.iterations),
        tau_lo=float(tau_lo),
        tau_hi=float(trace.tau_hi),
        g_max=float(g_max),
        coverage=int(res.coverage),
    )
    return Design(res.b, float(res.g), float(trace.tau_star), _oracle_name(oracle), viol, prov)


# ---------------------------------------------------------------------------
# gain refinement


def coverage_segments(coeffs: SAACoefficients, b: NDArray, tau: float, kappa: int, g_max: float) -> GIntervalSet:
    """All gains in ``[0, g_max]`` where ``b`` meets the budget at ``tau``."""
    prep = _Prepared(coeffs)
    a, bh, c = prep.quadratic(np.asarray(b, dtype=float)[None, :], tau)
    lo1, hi1, lo2, hi2 = (x[0] for x in quadratic_intervals(a, bh, c, g_max))
    lo = np.concatenate([lo1, lo2])
    hi = np.concatenate([hi1, hi2])
    keep = np.isfinite(lo)
    lo, hi = lo[keep], hi[keep]
    need = coeffs.S - kappa
    if need <= 0:
        return GIntervalSet(((0.0, float(g_max)),))
    pos = np.concatenate([lo, hi])
    kind = np.concatenate([np.zeros(lo.size), np.ones(hi.size)])  # starts before ends
    order = np.lexsort((kind, pos))
    level = 0
    segs = []
    start = None
    for k in order:
        if kind[k] == 0:
            level += 1
            if level == need and start is None:
                start = pos[k]
        else:
            if level == need and start is not None:
                segs.append((start, pos[k]))
                start = None
            level -= 1
    return GIntervalSet.from_pairs(segs)


def lower_quantile_index(epsilon: float, S: int) -> int:
    """1-based ascending index ``ceil(eps S)`` of the lower-tail order statistic."""
    return min(max(ceil_rank(epsilon * S), 1), S)


def refine_gain(
    coeffs: SAACoefficients,
    b_star: NDArray,
    tau_star: float,
    kappa: int,
    g_max: float,
    g_incumbent: float | None = None,
    epsilon: float | None = None,
    grid: int = 64,
) -> float:
    """Gain maximizing the training lower-tail SINR quantile among budget-feasible gains.

    Candidates are a grid over every qualifying segment (endpoints included,
    plus endpoints nudged inward) and the incumbent. Only candidates that
    pass direct verification with ``ACCEPT_MARGIN`` count; the incumbent is
    kept unless strictly beaten. With no qualifying gain the incumbent is
    returned.
    """
    S = coeffs.S
    segs = coverage_segments(coeffs, b_star, tau_star, kappa, g_max)
    if segs.is_empty:
        return g_incumbent if g_incumbent is not None else 0.0
    k = lower_quantile_index(epsilon, S) if epsilon is not None else min(max(kappa, 1), S)
    cands = []
    for lo, hi in segs:
        cands.append(np.linspace(lo, hi, grid))
        nudge = 1e-12 * max(1.0, abs(hi))
        if hi - lo > 2 * nudge:
            cands.append(np.array([lo + nudge, hi - nudge]))
    cands = np.unique(np.concatenate(cands))

    def score(g):
        num, den = sinr_per_sample(coeffs, b_star, g)
        if np.count_nonzero(num < tau_star * (1.0 + ACCEPT_MARGIN) * den) > kappa:
            return None
        return float(np.sort(num / den)[k - 1])

    best_g, best_q = None, -math.inf
    if g_incumbent is not None:
        q = score(g_incumbent)
        if q is not None:
            best_g, best_q = float(g_incumbent), q
    for g in cands:
        q = score(float(g))
        if q is not None and q > best_q:
            best_g, best_q = float(g), q
    if best_g is None:
        return g_incumbent if g_incumbent is not None else float(cands[0])
    return best_g


# ---------------------------------------------------------------------------
# full design


def solve_design(
    coeffs: SAACoefficients,
    epsilon: float,
    g_max: float,
    oracle: str | object = "exact",
    *,
    eps_tau: float = 1e-3,
    tau_hi: float | None = None,
    refine: bool = True,
    threads: int = 1,
    restarts: int = 16,
    seed: int = 0,
    n_cap: int = N_ENUM_CAP,
    provenance: dict | None = None,
) -> Design:
    """Bisection, optional gain refinement and a final budget check."""
    if oracle == "exact":
        oracle = ExactOracle(n_cap=n_cap, threads=threads)
    elif oracle == "local_search":
        oracle = LocalSearchOracle(restarts=restarts, seed=seed)
    elif isinstance(oracle, str):
        raise ValueError(f"unknown oracle {oracle!r}; choose exact or local_search")
    if _oracle_name(oracle) == "exact" and coeffs.N > n_cap:
        raise CapabilityError(
            f"exact enumeration is capped at N={n_cap} (got N={coeffs.N}); use the local_search or external oracle"
        )
    design = bisect_tau(oracle, coeffs, epsilon, g_max, eps_tau=eps_tau, tau_hi=tau_hi, provenance=provenance)
    if not refine:
        return design
    kappa = design.kappa
    g_new = refine_gain(coeffs, design.b_star, design.tau_star, kappa, g_max, design.g_star, epsilon)
    if count_violations(coeffs, design.b_star, g_new, design.tau_star, ACCEPT_MARGIN) > kappa:
        return design
    viol = count_violations(coeffs, design.b_star, g_new, design.tau_star)
    prov = dict(design.provenance, g_incumbent=design.g_star, refined=True)
    return Design(design.b_star, g_new, design.tau_star, design.oracle, viol, prov)


# ---------------------------------------------------------------------------
# external solutions

_ASSIGN = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(\S+)\s*$")


def parse_assignment(text: str) -> dict[str, float]:
    """Parse ``name = value`` lines; blank lines and ``#`` comments are skipped."""
    out: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0]
        if not line.strip():
            continue
        m = _ASSIGN.match(line)
        if not m:
            raise ValueError(f"line {lineno}: expected 'name = value', got {line.strip()!r}")
        name, value = m.groups()
        if name in out:
            raise ValueError(f"line {lineno}: duplicate assignment to {name}")
        out[name] = float(value)
    return out


def ingest_solution(source, coeffs: SAACoefficients, tau: float, kappa: int, g_max: float, tol: float = 1e-6) -> OracleResult:
    """Accept an externally solved ``(y, g, v)`` assignment after re-verification.

    ``source`` is a path or the assignment text. ``y_i`` must be binary within
    ``tol``; ``b = 2 y - 1``. Extra variables are ignored.
    """
    if isinstance(source, Path) or ("\n" not in source and "=" not in source):
        text = Path(source).read_text()
    else:
        text = source
    vals = parse_assignment(text)
    N = coeffs.N
    try:
        y = np.array([vals[f"y_{i}"] for i in range(N)])
        g = vals["g"]
    except KeyError as exc:
        raise ValueError(f"solution is missing variable {exc.args[0]}") from None
    if np.any(np.minimum(np.abs(y), np.abs(y - 1)) > tol):
        raise DomainError("y values are not binary")
    if not -tol <= g <= g_max * (1 + tol) + tol:
        raise DomainError(f"gain {g} outside [0, {g_max}]")
    g = min(max(g, 0.0), g_max)
    b = (2 * np.rint(y) - 1).astype(np.int8)
    viol = count_violations(coeffs, b, g, tau)
    if viol > kappa:
        raise DomainError(f"ingested solution violates {viol} > kappa={kappa} scenarios at tau={tau}")
    return OracleResult(b, float(g), float(tau), coeffs.S - viol, viol, "external")
