"""SAA coefficients and the lifted mixed-integer conic feasibility model.

With ``b = 2y - 1``, ``t = g^2`` and the products ``s_ij = y_i y_j``,
``u_i = g y_i``, ``z_i = t y_i``, ``Z_ij = t s_ij``, every scenario
constraint ``P_d S_s(b, g) >= tau (D0_s + D1_s g^2 + I_s(b, g))`` becomes
affine in ``(y, g, t, u, z, s, Z)``.  Products are relaxed by McCormick
envelopes, ``t >= g^2`` by one rotated second-order cone, and up to
``kappa = floor(eps S)`` scenarios may be switched off through Big-M
indicators ``v_s``.

Variable order is fixed: ``y, v, g, t, u, z, s (row-major), Z (row-major)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from activeris.errors import DimensionError, DomainError
from activeris.sinr import SinrCoefficients, coefficients_from_sample


@dataclass(frozen=True)
class SAACoefficients:
    """Stacked per-sample coefficients; the leading axis indexes samples.

    Interferer arrays have shape ``(S, M)`` or ``(S, M, N)``.
    """

    abs_d: NDArray[np.float64]
    r: NDArray[np.float64]
    c: NDArray[np.float64]
    abs_dm: NDArray[np.float64]
    r_m: NDArray[np.float64]
    c_m: NDArray[np.float64]
    D0: NDArray[np.float64]
    D1: NDArray[np.float64]
    L: NDArray[np.float64]
    Psi: NDArray[np.float64]
    rho: float
    P_d: float
    P_m: NDArray[np.float64]
    N_0: float = 1.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        S, N = self.r.shape
        M = self.P_m.shape[0]
        if self.c.shape != (S, N) or self.abs_d.shape != (S,):
            raise DimensionError("inconsistent desired-link arrays")
        if self.r_m.shape != (S, M, N) or self.c_m.shape != (S, M, N) or self.abs_dm.shape != (S, M):
            raise DimensionError("inconsistent interferer arrays")
        for name in ("abs_d", "r", "c", "abs_dm", "r_m", "c_m", "D0", "D1"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"non-finite coefficients in {name}")

    @property
    def S(self) -> int:
        return self.r.shape[0]

    @property
    def N(self) -> int:
        return self.r.shape[1]

    @property
    def M(self) -> int:
        return self.P_m.shape[0]

    @property
    def A(self) -> NDArray[np.float64]:
        return self.abs_d**2

    @property
    def A_m(self) -> NDArray[np.float64]:
        return self.abs_dm**2

    @property
    def q(self) -> NDArray[np.float64]:
        """``Q_s 1`` per sample, from the rank-2 factors."""
        return self.r * self.r.sum(axis=1, keepdims=True) + self.c * self.c.sum(axis=1, keepdims=True)

    @property
    def q0(self) -> NDArray[np.float64]:
        return self.r.sum(axis=1) ** 2 + self.c.sum(axis=1) ** 2

    @property
    def q_m(self) -> NDArray[np.float64]:
        return self.r_m * self.r_m.sum(axis=2, keepdims=True) + self.c_m * self.c_m.sum(axis=2, keepdims=True)

    @property
    def q0_m(self) -> NDArray[np.float64]:
        return self.r_m.sum(axis=2) ** 2 + self.c_m.sum(axis=2) ** 2

    def sample(self, s: int) -> SinrCoefficients:
        return SinrCoefficients(
            abs_d=float(self.abs_d[s]),
            r=self.r[s],
            c=self.c[s],
            abs_dm=self.abs_dm[s],
            r_m=self.r_m[s],
            c_m=self.c_m[s],
            D0=float(self.D0[s]),
            D1=float(self.D1[s]),
            rho=self.rho,
            P_d=self.P_d,
            P_m=self.P_m,
            N_0=self.N_0,
        )

    def subset(self, idx) -> SAACoefficients:
        idx = np.atleast_1d(np.asarray(idx))
        return replace(
            self,
            abs_d=self.abs_d[idx],
            r=self.r[idx],
            c=self.c[idx],
            abs_dm=self.abs_dm[idx],
            r_m=self.r_m[idx],
            c_m=self.c_m[idx],
            D0=self.D0[idx],
            D1=self.D1[idx],
            L=self.L[idx],
            Psi=self.Psi[idx],
        )


def per_sample_coefficients(sample, cfg) -> SAACoefficients:
    """Coefficients of one sample as a set of size one."""
    return stack_coefficients([sample], cfg)


def stack_coefficients(samples, cfg, provenance: dict | None = None) -> SAACoefficients:
    samples = list(samples)
    if not samples:
        raise ValueError("empty sample set")
    one = [coefficients_from_sample(s, cfg) for s in samples]
    M, N, S = cfg.M, cfg.N, len(samples)
    return SAACoefficients(
        abs_d=np.array([x.abs_d for x in one]),
        r=np.array([x.r for x in one]).reshape(S, N),
        c=np.array([x.c for x in one]).reshape(S, N),
        abs_dm=np.array([x.abs_dm for x in one]).reshape(S, M),
        r_m=np.array([x.r_m for x in one]).reshape(S, M, N),
        c_m=np.array([x.c_m for x in one]).reshape(S, M, N),
        D0=np.array([x.D0 for x in one]),
        D1=np.array([x.D1 for x in one]),
        L=np.array([s.L for s in samples]),
        Psi=np.array([s.Psi for s in samples]).reshape(S, N),
        rho=float(cfg.rho),
        P_d=float(cfg.P_d),
        P_m=np.asarray(cfg.P_m, dtype=float),
        N_0=float(cfg.N_0),
        provenance=dict(provenance or {}),
    )


def violation_budget(epsilon: float, S: int) -> int:
    """``kappa = floor(eps S)``, robust to products like ``0.29 * 100 = 28.999999999999996``."""
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    return math.floor(round(epsilon * S, 9))


# ---------------------------------------------------------------------------
# variable layout


@dataclass(frozen=True)
class VariableLayout:
    """Index map of the lifted variables; ``pairs`` lists instantiated (i, j)."""

    N: int
    S: int
    pairs: NDArray[np.int64]

    @classmethod
    def dense(cls, N: int, S: int) -> VariableLayout:
        ii, jj = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
        return cls(N, S, np.stack([ii.ravel(), jj.ravel()], axis=1))

    @property
    def P(self) -> int:
        return self.pairs.shape[0]

    @property
    def y(self) -> int:
        return 0

    @property
    def v(self) -> int:
        return self.N

    @property
    def g(self) -> int:
        return self.N + self.S

    @property
    def t(self) -> int:
        return self.g + 1

    @property
    def u(self) -> int:
        return self.t + 1

    @property
    def z(self) -> int:
        return self.u + self.N

    @property
    def s(self) -> int:
        return self.z + self.N

    @property
    def Z(self) -> int:
        return self.s + self.P

    @property
    def n(self) -> int:
        return self.Z + self.P

    def names(self) -> list[str]:
        out = [f"y_{i}" for i in range(self.N)]
        out += [f"v_{s}" for s in range(self.S)]
        out += ["g", "t"]
        out += [f"u_{i}" for i in range(self.N)]
        out += [f"z_{i}" for i in range(self.N)]
        out += [f"s_{i}_{j}" for i, j in self.pairs]
        out += [f"Z_{i}_{j}" for i, j in self.pairs]
        return out


# ---------------------------------------------------------------------------
# scenario rows


def _row_blocks(coeffs: SAACoefficients, tau: float, pairs: NDArray) -> dict:
    """Affine coefficients of ``E_s`` for every sample, grouped by variable block."""
    rho, P_d, P_m = coeffs.rho, coeffs.P_d, coeffs.P_m
    S = coeffs.S
    const = P_d * coeffs.A - tau * (coeffs.D0 + coeffs.A_m @ P_m)
    # (S, N) linear-in-r terms: P_d |d| r - tau sum_m P_m |d_m| r_m
    lin_r = P_d * coeffs.abs_d[:, None] * coeffs.r - tau * np.einsum("m,sm,smn->sn", P_m, coeffs.abs_dm, coeffs.r_m)
    g_coef = -2.0 * rho * lin_r.sum(axis=1)
    u_coef = 4.0 * rho * lin_r
    t_coef = rho**2 * (P_d * coeffs.q0 - tau * coeffs.q0_m @ P_m) - tau * coeffs.D1
    z_coef = -4.0 * rho**2 * (P_d * coeffs.q - tau * np.einsum("m,smn->sn", P_m, coeffs.q_m))
    i, j = pairs[:, 0], pairs[:, 1]
    Zq = P_d * (coeffs.r[:, i] * coeffs.r[:, j] + coeffs.c[:, i] * coeffs.c[:, j])
    if coeffs.M:
        Zq = Zq - tau * np.einsum(
            "m,smp->sp", P_m, coeffs.r_m[:, :, i] * coeffs.r_m[:, :, j] + coeffs.c_m[:, :, i] * coeffs.c_m[:, :, j]
        )
    Z_coef = 4.0 * rho**2 * Zq
    return dict(const=const, g=g_coef, t=t_coef, u=u_coef, z=z_coef, Z=Z_coef, S=S)


def scenario_row(coeffs: SAACoefficients, s: int, tau: float, layout: VariableLayout | None = None):
    """Affine form of ``E_s(x; tau)`` as ``(const, columns, values)``.

    ``E_s(x) = const + values @ x[columns]``.
    """
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    layout = layout or VariableLayout.dense(coeffs.N, coeffs.S)
    blk = _row_blocks(coeffs.subset([s]), tau, layout.pairs)
    cols = np.concatenate(
        [
            [layout.g, layout.t],
            layout.u + np.arange(layout.N),
            layout.z + np.arange(layout.N),
            layout.Z + np.arange(layout.P),
        ]
    )
    vals = np.concatenate([[blk["g"][0], blk["t"][0]], blk["u"][0], blk["z"][0], blk["Z"][0]])
    return float(blk["const"][0]), cols, vals


def lift(b: NDArray, g: float, layout: VariableLayout, v: NDArray | None = None) -> NDArray[np.float64]:
    """Exact lift of a concrete ``(b, g)`` (and indicators ``v``) into the model space."""
    b = np.asarray(b, dtype=float)
    y = (b + 1.0) / 2.0
    t = g * g
    x = np.zeros(layout.n)
    x[layout.y : layout.y + layout.N] = y
    if v is not None:
        x[layout.v : layout.v + layout.S] = v
    x[layout.g] = g
    x[layout.t] = t
    x[layout.u : layout.u + layout.N] = g * y
    x[layout.z : layout.z + layout.N] = t * y
    s = y[layout.pairs[:, 0]] * y[layout.pairs[:, 1]]
    x[layout.s : layout.s + layout.P] = s
    x[layout.Z : layout.Z + layout.P] = t * s
    return x


# ---------------------------------------------------------------------------
# Big-M


def _box(layout: VariableLayout, g_max: float) -> tuple[NDArray, NDArray]:
    lo = np.zeros(layout.n)
    hi = np.ones(layout.n)
    T = g_max * g_max
    hi[layout.g] = g_max
    hi[layout.t] = T
    hi[layout.u : layout.u + layout.N] = g_max
    hi[layout.z : layout.z + layout.N] = T
    hi[layout.Z : layout.Z + layout.P] = T
    return lo, hi


def big_m_bounds(coeffs: SAACoefficients, g_max: float, pairs: NDArray | None = None):
    """Term-wise interval bounds ``(L_lo, R_hi)`` per sample over the lifted box.

    ``L_lo <= P_d T_s`` and ``R_hi >= D0 + D1 t + sum_m P_m T_{m,s}`` for
    every point of the box (all variables have lower bound 0).
    """
    if pairs is None:
        pairs = VariableLayout.dense(coeffs.N, 1).pairs
    T = g_max * g_max
    # tau = 0 isolates the numerator; numerator minus row at tau = 1 gives the denominator.
    num = _row_blocks(coeffs, 0.0, pairs)
    one = _row_blocks(coeffs, 1.0, pairs)
    den = {k: num[k] - one[k] for k in ("const", "g", "t", "u", "z", "Z")}

    def lo_terms(blk):
        return (
            np.minimum(blk["g"] * g_max, 0.0)
            + np.minimum(blk["t"] * T, 0.0)
            + np.minimum(blk["u"] * g_max, 0.0).sum(axis=1)
            + np.minimum(blk["z"] * T, 0.0).sum(axis=1)
            + np.minimum(blk["Z"] * T, 0.0).sum(axis=1)
        )

    def hi_terms(blk):
        return (
            np.maximum(blk["g"] * g_max, 0.0)
            + np.maximum(blk["t"] * T, 0.0)
            + np.maximum(blk["u"] * g_max, 0.0).sum(axis=1)
            + np.maximum(blk["z"] * T, 0.0).sum(axis=1)
            + np.maximum(blk["Z"] * T, 0.0).sum(axis=1)
        )

    L_lo = num["const"] + lo_terms(num)
    R_hi = den["const"] + hi_terms(den)
    return L_lo, R_hi


def compute_big_m(coeffs: SAACoefficients, tau: float, eta_M: float, g_max: float, pairs: NDArray | None = None) -> float:
    """``(1 + eta_M) max_s (tau R_hi_s - L_lo_s)``, floored at 0."""
    if not 0.01 <= eta_M <= 0.05:
        warnings.warn(f"eta_M={eta_M} outside the customary range [0.01, 0.05]", stacklevel=2)
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    L_lo, R_hi = big_m_bounds(coeffs, g_max, pairs)
    worst = float(np.max(tau * R_hi - L_lo))
    if not math.isfinite(worst):
        raise DomainError("non-finite Big-M")
    return (1.0 + eta_M) * max(worst, 0.0)


# ---------------------------------------------------------------------------
# lifted model


@dataclass
class LiftedModel:
    """Feasibility model ``row_lo <= A x <= row_hi``, box bounds, integrality, one rotated SOC.

    The SOC is ``||(2 g, t - 1)||_2 <= t + 1`` on the variables ``soc = (g, t)``.
    """

    layout: VariableLayout
    names: list[str]
    lower: NDArray[np.float64]
    upper: NDArray[np.float64]
    integer: NDArray[np.bool_]
    A: sp.csr_matrix
    row_lo: NDArray[np.float64]
    row_hi: NDArray[np.float64]
    row_names: list[str]
    soc: tuple[int, int]
    meta: dict

    @property
    def n_binary(self) -> int:
        return int(self.integer.sum())

    @property
    def n_continuous(self) -> int:
        return int((~self.integer).sum())

    @property
    def n_linear(self) -> int:
        return self.A.shape[0]

    @property
    def n_soc(self) -> int:
        return 1

    def counts(self) -> dict:
        return {
            "binary": self.n_binary,
            "continuous": self.n_continuous,
            "linear": self.n_linear,
            "soc": self.n_soc,
        }

    def residuals(self, x: NDArray) -> dict:
        """Largest violations of each constraint family at point ``x``."""
        ax = self.A @ x
        g, t = x[self.soc[0]], x[self.soc[1]]
        return {
            "rows": float(max(np.max(self.row_lo - ax, initial=0.0), np.max(ax - self.row_hi, initial=0.0))),
            "bounds": float(max(np.max(self.lower - x), np.max(x - self.upper), 0.0)),
            "soc": float(max(math.hypot(2 * g, t - 1) - (t + 1), 0.0)),
        }


def _mccormick(rows, cols, vals, lo, hi, names, w, x, y, xU, yU, tag):
    """Append the four McCormick rows for ``w = x y`` with ``x in [0, xU]``, ``y in [0, yU]``.

    ``w``, ``x``, ``y`` are index arrays (y may equal x for squares).
    """
    k = len(w)
    base = len(lo)
    r = base + np.arange(4 * k).reshape(4, k)
    one = np.ones(k)
    # w >= 0
    rows += [r[0]]
    cols += [w]
    vals += [one]
    # w - yU x - xU y >= -xU yU
    rows += [r[1], r[1], r[1]]
    cols += [w, x, y]
    vals += [one, -yU * one, -xU * one]
    # xU y - w >= 0
    rows += [r[2], r[2]]
    cols += [y, w]
    vals += [xU * one, -one]
    # yU x - w >= 0
    rows += [r[3], r[3]]
    cols += [x, w]
    vals += [yU * one, -one]
    lo += [np.zeros(k), np.full(k, -xU * yU), np.zeros(k), np.zeros(k)]
    hi += [np.full(4 * k, np.inf)]
    names += [[f"mc_{tag}_{q}_{j}" for j in range(k)] for q in range(4)]


def build_feasibility_model(
    coeffs: SAACoefficients,
    tau: float,
    epsilon: float,
    g_max: float,
    density: str = "dense",
    eta_M: float = 0.02,
    symmetric: bool = False,
) -> LiftedModel:
    """Assemble the SAA feasibility model at threshold ``tau``."""
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    if g_max <= 0:
        raise DomainError("g_max must be positive")
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    N, S = coeffs.N, coeffs.S
    kappa = violation_budget(epsilon, S)
    if density == "dense":
        layout = VariableLayout.dense(N, S)
    elif density == "sparse":
        Q = (coeffs.r[:, :, None] * coeffs.r[:, None, :] + coeffs.c[:, :, None] * coeffs.c[:, None, :]) != 0
        nz = Q.any(axis=0)
        if coeffs.M:
            Qm = (
                coeffs.r_m[..., :, None] * coeffs.r_m[..., None, :] + coeffs.c_m[..., :, None] * coeffs.c_m[..., None, :]
            ) != 0
            nz |= Qm.any(axis=(0, 1))
        layout = VariableLayout(N, S, np.argwhere(nz))
    else:
        raise ValueError(f"unknown density {density!r}")

    M_big = compute_big_m(coeffs, tau, eta_M, g_max, layout.pairs)
    lower, upper = _box(layout, g_max)
    integer = np.zeros(layout.n, dtype=bool)
    integer[layout.y : layout.y + N] = True
    integer[layout.v : layout.v + S] = True

    rows: list = []
    cols: list = []
    vals: list = []
    lo: list = []
    hi: list = []
    row_names: list = []

    # scenario rows: E_s + M_big v_s >= 0
    blk = _row_blocks(coeffs, tau, layout.pairs)
    sidx = np.arange(S)
    for block, start, width in (
        ("g", layout.g, 1),
        ("t", layout.t, 1),
        ("u", layout.u, N),
        ("z", layout.z, N),
        ("Z", layout.Z, layout.P),
    ):
        coef = blk[block].reshape(S, width)
        rows.append(np.repeat(sidx, width))
        cols.append(np.tile(start + np.arange(width), S))
        vals.append(coef.ravel())
    rows.append(sidx)
    cols.append(layout.v + sidx)
    vals.append(np.full(S, M_big))
    lo.append(-blk["const"] + 0.0)
    hi.append(np.full(S, np.inf))
    row_names.append([f"scen_{s}" for s in range(S)])

    # budget: -sum v >= -kappa
    rows.append(np.full(S, S))
    cols.append(layout.v + sidx)
    vals.append(-np.ones(S))
    lo.append(np.array([-float(kappa)]))
    hi.append(np.array([np.inf]))
    row_names.append(["budget"])

    T = g_max * g_max
    pi, pj = layout.pairs[:, 0], layout.pairs[:, 1]
    offset = S + 1

    def mc(w, x, y, xU, yU, tag):
        nonlocal offset
        r_, c_, v_, l_, h_, n_ = [], [], [], [], [], []
        _mccormick(r_, c_, v_, l_, h_, n_, w, x, y, xU, yU, tag)
        rows.extend(offset + r for r in r_)
        cols.extend(c_)
        vals.extend(v_)
        lo.extend(l_)
        hi.extend(h_)
        row_names.extend(n_)
        offset += 4 * len(w)

    ar = np.arange(N)
    mc(layout.s + np.arange(layout.P), layout.y + pi, layout.y + pj, 1.0, 1.0, "s")
    mc(layout.u + ar, np.full(N, layout.g), layout.y + ar, g_max, 1.0, "u")
    mc(layout.z + ar, np.full(N, layout.t), layout.y + ar, T, 1.0, "z")
    mc(layout.Z + np.arange(layout.P), np.full(layout.P, layout.t), layout.s + np.arange(layout.P), T, 1.0, "Z")

    if symmetric:
        index = {(int(i), int(j)): k for k, (i, j) in enumerate(layout.pairs)}
        sym = [(k, index[(j, i)]) for (i, j), k in index.items() if i < j and (j, i) in index]
        if sym:
            a = np.array(sym)
            k = len(a)
            rr = offset + np.arange(k)
            rows += [rr, rr]
            cols += [layout.s + a[:, 0], layout.s + a[:, 1]]
            vals += [np.ones(k), -np.ones(k)]
            lo.append(np.zeros(k))
            hi.append(np.zeros(k))
            row_names.append([f"sym_{int(layout.pairs[p, 0])}_{int(layout.pairs[p, 1])}" for p in a[:, 0]])
            offset += k

    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(offset, layout.n),
    )
    A.eliminate_zeros()
    A.sort_indices()
    meta = {
        "tau": float(tau),
        "epsilon": float(epsilon),
        "kappa": int(kappa),
        "g_max": float(g_max),
        "M_big": float(M_big),
        "eta_M": float(eta_M),
        "density": density,
        "symmetric": bool(symmetric),
        "N": N,
        "S": S,
    }
    return LiftedModel(
        layout=layout,
        names=layout.names(),
        lower=lower,
        upper=upper,
        integer=integer,
        A=A,
        row_lo=np.concatenate(lo),
        row_hi=np.concatenate(hi),
        row_names=[n for group in row_names for n in group],
        soc=(layout.g, layout.t),
        meta=meta,
    )


def expected_dense_counts(N: int, S: int) -> dict:
    return {"binary": N + S, "continuous": 2 * N * N + 2 * N + 2, "linear": 8 * N * N + 8 * N + S + 1, "soc": 1}
