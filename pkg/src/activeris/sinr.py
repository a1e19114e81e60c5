"""Quadratic-form SINR model with folded amplifier noise.

For a binary configuration ``b`` and common gain ``g``::

    SINR = P_d (A + g B + g^2 C) / (D0 + g^2 D1 + sum_m P_m (A_m + g B_m + g^2 C_m))

with ``A = |d|^2``, ``B = 2 rho |d| b.r`` and ``C = rho^2 ((b.r)^2 + (b.c)^2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from activeris.errors import DimensionError, DomainError


def _check_psd(S: NDArray, name: str) -> NDArray[np.float64]:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"{name} must be square")
    if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise DomainError(f"{name} must be symmetric")
    if S.size:
        # Cholesky on a slightly shifted copy accepts singular PSD inputs.
        shift = 1e-12 * max(1.0, float(np.abs(np.diag(S)).max()))
        try:
            np.linalg.cholesky(S + shift * np.eye(S.shape[0]))
        except np.linalg.LinAlgError:
            raise DomainError(f"{name} is not positive semidefinite") from None
    return S


@dataclass(frozen=True)
class AmpNoiseModel:
    """Affine amplifier-noise covariance ``Sigma_min + g^2 Sigma_ex``.

    ``kind`` is ``"iid"`` (scalars), ``"diagonal"`` (length-N vectors) or
    ``"correlated"`` (N x N symmetric PSD matrices).
    """

    kind: str
    sigma_min: float | NDArray[np.float64]
    sigma_ex: float | NDArray[np.float64]

    def __post_init__(self) -> None:
        if self.kind == "iid":
            if self.sigma_min < 0 or self.sigma_ex < 0:
                raise DomainError("noise variances must be nonnegative")
            object.__setattr__(self, "sigma_min", float(self.sigma_min))
            object.__setattr__(self, "sigma_ex", float(self.sigma_ex))
        elif self.kind == "diagonal":
            lo = np.asarray(self.sigma_min, dtype=float)
            ex = np.asarray(self.sigma_ex, dtype=float)
            if lo.ndim != 1 or lo.shape != ex.shape:
                raise DimensionError("diagonal model needs two vectors of equal length")
            if (lo < 0).any() or (ex < 0).any():
                raise DomainError("noise variances must be nonnegative")
            object.__setattr__(self, "sigma_min", lo)
            object.__setattr__(self, "sigma_ex", ex)
        elif self.kind == "correlated":
            lo = _check_psd(self.sigma_min, "Sigma_min")
            ex = _check_psd(self.sigma_ex, "Sigma_ex")
            if lo.shape != ex.shape:
                raise DimensionError("Sigma_min and Sigma_ex differ in size")
            object.__setattr__(self, "sigma_min", lo)
            object.__setattr__(self, "sigma_ex", ex)
        else:
            raise ValueError(f"unknown amplifier-noise model {self.kind!r}")

    @classmethod
    def iid(cls, sigma_min_sq: float, eta: float) -> AmpNoiseModel:
        return cls("iid", sigma_min_sq, eta)

    @classmethod
    def diagonal(cls, sigma_min_sq, eta) -> AmpNoiseModel:
        return cls("diagonal", sigma_min_sq, eta)

    @classmethod
    def correlated(cls, sigma_min, sigma_ex) -> AmpNoiseModel:
        return cls("correlated", sigma_min, sigma_ex)

    @property
    def size(self) -> int | None:
        return None if self.kind == "iid" else len(self.sigma_min)

    def matrices(self, N: int) -> tuple[NDArray, NDArray]:
        """Dense ``(Sigma_min, Sigma_ex)``."""
        if self.kind == "iid":
            return self.sigma_min * np.eye(N), self.sigma_ex * np.eye(N)
        if self.kind == "diagonal":
            return np.diag(self.sigma_min), np.diag(self.sigma_ex)
        return self.sigma_min, self.sigma_ex

    def fold(self, H_r: NDArray, w: NDArray) -> tuple[float, float]:
        return folded_noise_variance(H_r, w, self)

    def to_dict(self) -> dict:
        if self.kind == "iid":
            return {"kind": "iid", "sigma_min_sq": self.sigma_min, "eta": self.sigma_ex}
        if self.kind == "diagonal":
            return {"kind": "diagonal", "sigma_min_sq": self.sigma_min.tolist(), "eta": self.sigma_ex.tolist()}
        return {"kind": "correlated", "sigma_min": self.sigma_min.tolist(), "sigma_ex": self.sigma_ex.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> AmpNoiseModel:
        kind = data.get("kind", "iid")
        if kind in ("iid", "diagonal"):
            extra = set(data) - {"kind", "sigma_min_sq", "eta"}
            if extra:
                raise ValueError(f"unknown amp_noise keys: {sorted(extra)}")
            return cls(kind, data["sigma_min_sq"], data["eta"])
        extra = set(data) - {"kind", "sigma_min", "sigma_ex", "synthetic"}
        if extra:
            raise ValueError(f"unknown amp_noise keys: {sorted(extra)}")
        return cls(kind, data["sigma_min"], data["sigma_ex"])


def folded_noise_variance(H_r: NDArray, w: NDArray, model: AmpNoiseModel, g: float = 0.0) -> tuple[float, float]:
    """Folded baseline and excess variances ``(D0_RA, D1_RA)``.

    The folded variance at gain ``g`` is ``D0_RA + g**2 * D1_RA``; ``g`` only
    enters through that combination and is validated here.
    """
    if g < 0:
        raise DomainError("gain must be nonnegative")
    H_r = np.asarray(H_r)
    w = np.asarray(w)
    if H_r.shape[0] != w.shape[0]:
        raise DimensionError("H_r rows must match the combiner length")
    proj = H_r.conj().T @ w  # H_r^H w, length N
    p2 = np.abs(proj) ** 2
    if model.kind == "iid":
        L = float(p2.sum())
        return model.sigma_min * L, model.sigma_ex * L
    if model.size != H_r.shape[1]:
        raise DimensionError("noise model size does not match the RIS size")
    if model.kind == "diagonal":
        return float(model.sigma_min @ p2), float(model.sigma_ex @ p2)
    d0 = np.vdot(proj, model.sigma_min @ proj).real
    d1 = np.vdot(proj, model.sigma_ex @ proj).real
    return float(max(d0, 0.0)), float(max(d1, 0.0))


def ritz_bounds(H_r: NDArray, w: NDArray, Sigma: NDArray) -> tuple[float, float]:
    """``(lambda_min(Sigma) L, lambda_max(Sigma) L)`` bracketing ``w^H H_r Sigma H_r^H w``."""
    Sigma = _check_psd(Sigma, "Sigma")
    proj = np.asarray(H_r).conj().T @ np.asarray(w)
    L = float(np.vdot(proj, proj).real)
    ev = np.linalg.eigvalsh(Sigma)
    return max(float(ev[0]), 0.0) * L, max(float(ev[-1]), 0.0) * L


@dataclass(frozen=True)
class SinrCoefficients:
    """Per-realization coefficients of the quadratic-form SINR."""

    abs_d: float
    r: NDArray[np.float64]
    c: NDArray[np.float64]
    abs_dm: NDArray[np.float64]
    r_m: NDArray[np.float64]
    c_m: NDArray[np.float64]
    D0: float
    D1: float
    rho: float
    P_d: float
    P_m: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    N_0: float = 1.0

    @property
    def A(self) -> float:
        return self.abs_d**2

    @property
    def A_m(self) -> NDArray[np.float64]:
        return self.abs_dm**2

    @property
    def N(self) -> int:
        return self.r.shape[0]

    @property
    def M(self) -> int:
        return self.abs_dm.shape[0]

    def passive_sinr(self) -> float:
        return self.P_d * self.A / (self.D0 + float(self.P_m @ self.A_m))


def coefficients_from_sample(sample, cfg) -> SinrCoefficients:
    """Build :class:`SinrCoefficients` from a ``ScenarioSample`` and its config."""
    return SinrCoefficients(
        abs_d=sample.abs_d,
        r=sample.r,
        c=sample.c,
        abs_dm=sample.abs_dm,
        r_m=sample.r_m,
        c_m=sample.c_m,
        D0=cfg.N_0 * cfg.w_norm_sq + sample.D0_RA,
        D1=sample.D1_RA,
        rho=cfg.rho,
        P_d=cfg.P_d,
        P_m=np.asarray(cfg.P_m, dtype=float),
        N_0=cfg.N_0,
    )


def config_terms(coeffs: SinrCoefficients, b: NDArray) -> tuple[float, float, NDArray, NDArray]:
    """``(B, C, B_m, C_m)`` for configuration ``b``."""
    b = np.asarray(b, dtype=float)
    if b.shape != (coeffs.N,):
        raise DimensionError(f"b has shape {b.shape}, expected ({coeffs.N},)")
    rho = coeffs.rho
    br, bc = b @ coeffs.r, b @ coeffs.c
    B = 2.0 * rho * coeffs.abs_d * br
    C = rho**2 * (br * br + bc * bc)
    brm, bcm = coeffs.r_m @ b, coeffs.c_m @ b
    B_m = 2.0 * rho * coeffs.abs_dm * brm
    C_m = rho**2 * (brm * brm + bcm * bcm)
    return float(B), float(C), B_m, C_m


def evaluate_sinr(coeffs: SinrCoefficients, b: NDArray, g: float) -> float:
    B, C, B_m, C_m = config_terms(coeffs, b)
    num = coeffs.P_d * (coeffs.A + g * B + g * g * C)
    interf = coeffs.P_m @ (coeffs.A_m + g * B_m + g * g * C_m)
    return float(num / (coeffs.D0 + g * g * coeffs.D1 + interf))
