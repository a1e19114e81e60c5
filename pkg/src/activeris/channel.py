"""Rician block-fading channel draws and cascaded link coefficients.

Every link is drawn as

    H = sqrt(beta) * (sqrt(K/(K+1)) * H_los + sqrt(1/(K+1)) * H_nlos)

with i.i.d. CN(0, 1) scattering.  A realization is reduced to the scalar and
vector quantities the SINR model needs: the direct coefficient ``d``, the
RIS-mediated vector ``u`` (one entry per element), their phase-aligned real
parts ``r`` and ``c``, the folding factor ``L`` and per-element incident
powers ``Psi``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from activeris.errors import DimensionError, DomainError
from activeris.rng import link_generator
from activeris.sinr import AmpNoiseModel

LINKS = ("sat_rx", "sat_ris", "ris_rx", "int_rx", "int_ris")

# Substream ids inside one sample; interferer m uses 3 + 2m and 4 + 2m.
_LINK_SAT_RX = 0
_LINK_SAT_RIS = 1
_LINK_RIS_RX = 2


@dataclass(frozen=True)
class LinkParams:
    """Rician K-factor, free-space loss and LoS angles of one hop."""

    K: float = 6.0
    beta: float = 1.0
    aod_deg: float = 0.0
    aoa_deg: float = 0.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.K) or self.K < 0:
            raise ValueError(f"Rician K must be finite and >= 0, got {self.K}")
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")

    @classmethod
    def from_distance(cls, K: float, distance: float, wavelength: float, **kw) -> LinkParams:
        return cls(K=K, beta=free_space_loss(distance, wavelength), **kw)


def free_space_loss(distance: float, wavelength: float) -> float:
    """Power loss factor (4*pi*s/lambda)**-2."""
    if distance <= 0 or wavelength <= 0:
        raise ValueError("distance and wavelength must be positive")
    return float((4.0 * np.pi * distance / wavelength) ** -2)


def ula_response(n: int, angle_deg: float) -> NDArray[np.complex128]:
    """Half-wavelength ULA steering vector with unit-modulus entries."""
    k = np.arange(n)
    return np.exp(1j * np.pi * k * np.sin(np.deg2rad(angle_deg)))


def los_matrix(rows: int, cols: int, link: LinkParams) -> NDArray[np.complex128]:
    """Rank-one LoS response a_rx(aoa) a_tx(aod)^H."""
    return np.outer(ula_response(rows, link.aoa_deg), ula_response(cols, link.aod_deg).conj())


def _default_links() -> dict[str, LinkParams]:
    return {
        "sat_rx": LinkParams(aod_deg=10.0, aoa_deg=-20.0),
        "sat_ris": LinkParams(aod_deg=15.0, aoa_deg=30.0),
        "ris_rx": LinkParams(aod_deg=-25.0, aoa_deg=40.0),
        "int_rx": LinkParams(aod_deg=-5.0, aoa_deg=5.0),
        "int_ris": LinkParams(aod_deg=-10.0, aoa_deg=-35.0),
    }


@dataclass(frozen=True)
class ScenarioConfig:
    """Immutable experiment description.

    ``P_m`` defaults to ``P_d`` for every interferer.  Interferer m's LoS
    angles are the ``int_*`` link angles shifted by ``m * interferer_angle_step_deg``.
    Precoders/combiner default to unit-norm uniform vectors.
    """

    N: int = 16
    M: int = 2
    N_t: int = 4
    N_r: int = 2
    P_d: float = 1.0
    P_m: tuple[float, ...] | None = None
    N_0: float = 1.0
    rho: float = 0.9
    amp_noise: AmpNoiseModel = field(default_factory=lambda: AmpNoiseModel.iid(0.05, 0.02))
    links: dict[str, LinkParams] = field(default_factory=_default_links)
    interferer_angle_step_deg: float = 10.0
    f: NDArray[np.complex128] | None = None
    f_m: tuple[NDArray[np.complex128], ...] | None = None
    w: NDArray[np.complex128] | None = None
    los: dict[str, NDArray[np.complex128]] | None = None

    def __post_init__(self) -> None:
        for name in ("N", "N_t", "N_r"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.M < 0:
            raise ValueError("M must be >= 0")
        if self.P_m is None:
            object.__setattr__(self, "P_m", (float(self.P_d),) * self.M)
        else:
            object.__setattr__(self, "P_m", tuple(float(p) for p in self.P_m))
        if len(self.P_m) != self.M:
            raise DimensionError(f"P_m has {len(self.P_m)} entries, expected M={self.M}")
        if self.P_d < 0 or any(p < 0 for p in self.P_m):
            raise ValueError("powers must be nonnegative")
        if self.N_0 <= 0:
            raise ValueError("N_0 must be positive")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        missing = set(LINKS) - set(self.links)
        if missing:
            raise ValueError(f"missing link parameters: {sorted(missing)}")
        if self.amp_noise.size not in (None, self.N):
            raise DimensionError("amplifier-noise model size does not match N")

        f = _unit_uniform(self.N_t) if self.f is None else np.asarray(self.f, dtype=complex)
        w = _unit_uniform(self.N_r) if self.w is None else np.asarray(self.w, dtype=complex)
        if self.f_m is None:
            f_m = tuple(_unit_uniform(self.N_t) for _ in range(self.M))
        else:
            f_m = tuple(np.asarray(v, dtype=complex) for v in self.f_m)
        if f.shape != (self.N_t,) or any(v.shape != (self.N_t,) for v in f_m) or len(f_m) != self.M:
            raise DimensionError("precoder dimensions do not match N_t / M")
        if w.shape != (self.N_r,):
            raise DimensionError("combiner dimension does not match N_r")
        if np.linalg.norm(w) == 0:
            raise ValueError("combiner w must be nonzero")
        for arr in (f, w, *f_m):
            arr.setflags(write=False)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "f_m", f_m)

    @property
    def w_norm_sq(self) -> float:
        return float(np.vdot(self.w, self.w).real)

    def link_los(self, name: str, m: int = 0) -> NDArray[np.complex128]:
        """Deterministic LoS matrix of link ``name`` (interferer index ``m``)."""
        key = name if not name.startswith("int_") else f"{name}_{m}"
        if self.los is not None and key in self.los:
            return np.asarray(self.los[key], dtype=complex)
        rows, cols = self.link_shape(name)
        link = self.links[name]
        if name.startswith("int_"):
            step = m * self.interferer_angle_step_deg
            link = LinkParams(link.K, link.beta, link.aod_deg + step, link.aoa_deg + step)
        return los_matrix(rows, cols, link)

    def link_shape(self, name: str) -> tuple[int, int]:
        return {
            "sat_rx": (self.N_r, self.N_t),
            "int_rx": (self.N_r, self.N_t),
            "sat_ris": (self.N, self.N_t),
            "int_ris": (self.N, self.N_t),
            "ris_rx": (self.N_r, self.N),
        }[name]

    def with_updates(self, **changes) -> ScenarioConfig:
        """Copy with some fields replaced; precoders are re-derived when M or sizes change."""
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if any(k in changes for k in ("M", "N_t")):
            data["f_m"] = None
            if "M" in changes:
                data["P_m"] = None
        if "N_t" in changes:
            data["f"] = None
        if "N_r" in changes:
            data["w"] = None
        if "N" in changes and data["amp_noise"].size is not None:
            raise ValueError("cannot change N with an element-wise amplifier-noise model")
        data.update(changes)
        return ScenarioConfig(**data)

    def to_dict(self) -> dict:
        """JSON-ready description (the persisted configuration schema)."""
        out = {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "N": self.N,
            "M": self.M,
            "N_t": self.N_t,
            "N_r": self.N_r,
            "P_d": self.P_d,
            "P_m": list(self.P_m),
            "N_0": self.N_0,
            "rho": self.rho,
            "amp_noise": self.amp_noise.to_dict(),
            "links": {k: vars(v).copy() for k, v in sorted(self.links.items())},
            "interferer_angle_step_deg": self.interferer_angle_step_deg,
            "f": _cplx_to_list(self.f),
            "f_m": [_cplx_to_list(v) for v in self.f_m],
            "w": _cplx_to_list(self.w),
        }
        if self.los is not None:
            out["los"] = {k: _cplx_to_list(np.asarray(v)) for k, v in sorted(self.los.items())}
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


CONFIG_SCHEMA_VERSION = 1


def _unit_uniform(n: int) -> NDArray[np.complex128]:
    return np.full(n, 1.0 / np.sqrt(n), dtype=complex)


def _cplx_to_list(a: NDArray) -> list:
    a = np.asarray(a)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _cplx_from_list(x) -> NDArray[np.complex128]:
    a = np.asarray(x, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


@dataclass(frozen=True)
class ScenarioSample:
    """One block-fading realization and its reduced coefficients.

    Interferer arrays carry a leading axis of length M.  ``Q = r r^T + c c^T``
    is never stored densely.
    """

    d: complex
    u: NDArray[np.complex128]
    d_m: NDArray[np.complex128]
    u_m: NDArray[np.complex128]
    abs_d: float
    r: NDArray[np.float64]
    c: NDArray[np.float64]
    abs_dm: NDArray[np.float64]
    r_m: NDArray[np.float64]
    c_m: NDArray[np.float64]
    L: float
    D0_RA: float
    D1_RA: float
    Psi: NDArray[np.float64]
    index: int = 0
    seed_tag: str = ""
    H_d: NDArray[np.complex128] | None = None
    G_t: NDArray[np.complex128] | None = None
    H_r: NDArray[np.complex128] | None = None
    H_dm: NDArray[np.complex128] | None = None
    G_tm: NDArray[np.complex128] | None = None

    @property
    def N(self) -> int:
        return self.r.shape[0]

    @property
    def M(self) -> int:
        return self.abs_dm.shape[0]

    def dense_Q(self, m: int | None = None) -> NDArray[np.float64]:
        r, c = (self.r, self.c) if m is None else (self.r_m[m], self.c_m[m])
        return np.outer(r, r) + np.outer(c, c)


def rician_matrix(
    rows: int,
    cols: int,
    K: float,
    beta: float,
    H_los: NDArray[np.complex128],
    rng: np.random.Generator,
) -> NDArray[np.complex128]:
    """Draw one Rician channel matrix of shape ``(rows, cols)``."""
    H_los = np.asarray(H_los)
    if H_los.shape != (rows, cols):
        raise DimensionError(f"LoS matrix has shape {H_los.shape}, expected {(rows, cols)}")
    if not np.isfinite(K) or K < 0:
        raise DomainError(f"K must be finite and >= 0, got {K}")
    if beta < 0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    nlos = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)
    los_w = np.sqrt(K / (K + 1.0))
    nlos_w = np.sqrt(1.0 / (K + 1.0))
    return np.sqrt(beta) * (los_w * H_los + nlos_w * nlos)


def cascade_coefficients(
    w: NDArray[np.complex128],
    f: NDArray[np.complex128],
    H_d: NDArray[np.complex128],
    G_t: NDArray[np.complex128],
    H_r: NDArray[np.complex128],
) -> tuple[complex, NDArray[np.complex128]]:
    """Direct coefficient ``d = w^H H_d f`` and per-element ``u_i = (w^H h_{r,i})(g_{t,i}^T f)``."""
    w = np.asarray(w)
    f = np.asarray(f)
    if H_d.shape != (w.shape[0], f.shape[0]):
        raise DimensionError("H_d shape does not match (len(w), len(f))")
    if G_t.shape[1] != f.shape[0] or H_r.shape[0] != w.shape[0] or H_r.shape[1] != G_t.shape[0]:
        raise DimensionError("G_t / H_r shapes are inconsistent")
    d = complex(w.conj() @ H_d @ f)
    u = (w.conj() @ H_r) * (G_t @ f)
    return d, u


def phase_align(d: complex, u: NDArray[np.complex128]) -> tuple[float, NDArray, NDArray]:
    """Rotate ``u`` by ``exp(-j arg d)``; returns ``(|d|, r, c)`` with ``u~ = r + j c``.

    ``arg(0)`` is taken as 0.
    """
    abs_d = abs(d)
    phase = np.exp(-1j * np.angle(d)) if abs_d > 0 else 1.0
    ut = np.asarray(u) * phase
    return float(abs_d), ut.real.copy(), ut.imag.copy()


def sample_scenario(
    cfg: ScenarioConfig,
    seed: int,
    index: int = 0,
    stream: int = 0,
    keep_channels: bool = False,
) -> ScenarioSample:
    """Draw realization ``index`` of substream ``stream`` under master ``seed``.

    Each link gets its own generator keyed by (seed, stream, index, link), so
    adding interferers never perturbs the desired-link draws.
    """

    def draw(name: str, link_id: int, m: int = 0) -> NDArray[np.complex128]:
        rng = link_generator(seed, stream, index, link_id)
        rows, cols = cfg.link_shape(name)
        p = cfg.links[name]
        return rician_matrix(rows, cols, p.K, p.beta, cfg.link_los(name, m), rng)

    H_d = draw("sat_rx", _LINK_SAT_RX)
    G_t = draw("sat_ris", _LINK_SAT_RIS)
    H_r = draw("ris_rx", _LINK_RIS_RX)
    H_dm = [draw("int_rx", 3 + 2 * m, m) for m in range(cfg.M)]
    G_tm = [draw("int_ris", 4 + 2 * m, m) for m in range(cfg.M)]

    d, u = cascade_coefficients(cfg.w, cfg.f, H_d, G_t, H_r)
    abs_d, r, c = phase_align(d, u)
    d_m = np.empty(cfg.M, dtype=complex)
    u_m = np.empty((cfg.M, cfg.N), dtype=complex)
    abs_dm = np.empty(cfg.M)
    r_m = np.empty((cfg.M, cfg.N))
    c_m = np.empty((cfg.M, cfg.N))
    for m in range(cfg.M):
        d_m[m], u_m[m] = cascade_coefficients(cfg.w, cfg.f_m[m], H_dm[m], G_tm[m], H_r)
        abs_dm[m], r_m[m], c_m[m] = phase_align(d_m[m], u_m[m])

    proj = H_r.conj().T @ cfg.w
    L = float(np.vdot(proj, proj).real)
    D0_RA, D1_RA = cfg.amp_noise.fold(H_r, cfg.w)

    Psi = cfg.P_d * np.abs(G_t @ cfg.f) ** 2
    for m in range(cfg.M):
        Psi = Psi + cfg.P_m[m] * np.abs(G_tm[m] @ cfg.f_m[m]) ** 2

    extra = {}
    if keep_channels:
        extra = dict(
            H_d=H_d,
            G_t=G_t,
            H_r=H_r,
            H_dm=np.array(H_dm).reshape(cfg.M, cfg.N_r, cfg.N_t),
            G_tm=np.array(G_tm).reshape(cfg.M, cfg.N, cfg.N_t),
        )
    return ScenarioSample(
        d=d,
        u=u,
        d_m=d_m,
        u_m=u_m,
        abs_d=abs_d,
        r=r,
        c=c,
        abs_dm=abs_dm,
        r_m=r_m,
        c_m=c_m,
        L=L,
        D0_RA=D0_RA,
        D1_RA=D1_RA,
        Psi=Psi,
        index=index,
        seed_tag=f"{seed}:{stream}:{index}",
        **extra,
    )


def sample_many(
    cfg: ScenarioConfig,
    seed: int,
    count: int,
    stream: int = 0,
    threads: int = 1,
    keep_channels: bool = False,
) -> list[ScenarioSample]:
    """Draw ``count`` samples; the result does not depend on ``threads``."""
    if count < 1:
        raise ValueError("sample count must be >= 1")
    indices = range(count)
    if threads <= 1:
        return [sample_scenario(cfg, seed, i, stream, keep_channels) for i in indices]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: sample_scenario(cfg, seed, i, stream, keep_channels), indices))
