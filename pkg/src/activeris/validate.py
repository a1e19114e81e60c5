"""Out-of-sample certification of a design.

SINRs here are evaluated sample by sample through
:func:`activeris.sinr.evaluate_sinr`, a separate code path from the batched
verifier used by the solvers, so the training-budget re-check is independent.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from statistics import NormalDist

import numpy as np
from numpy.typing import NDArray

from activeris.bounds import high_gain_ceiling
from activeris.errors import ProvenanceError
from activeris.gaincap import ceil_rank
from activeris.saa import SAACoefficients
from activeris.sinr import evaluate_sinr

Z95 = NormalDist().inv_cdf(0.975)


def sample_set_hash(coeffs: SAACoefficients) -> str:
    """Content hash of the coefficient arrays of a sample set."""
    h = hashlib.sha256()
    for name in ("abs_d", "r", "c", "abs_dm", "r_m", "c_m", "D0", "D1"):
        arr = np.ascontiguousarray(getattr(coeffs, name), dtype=float)
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def check_separation(train: dict, test: dict) -> None:
    """Raise :class:`ProvenanceError` if a test set may reuse training draws.

    Sets collide when their content hashes match, or when they come from the
    same master seed and the same random stream.
    """
    th, sh = train.get("sample_hash"), test.get("sample_hash")
    if th is not None and th == sh:
        raise ProvenanceError("test samples are identical to the training samples")
    same_seed = train.get("seed") is not None and train.get("seed") == test.get("seed")
    same_stream = train.get("stream") is not None and train.get("stream") == test.get("stream")
    if same_seed and same_stream:
        raise ProvenanceError(
            f"test set drawn from the training stream (seed={train['seed']}, stream={train['stream']}); "
            "use an independent stream or seed"
        )


def design_sinr(design, coeffs: SAACoefficients) -> NDArray[np.float64]:
    """SINR of the design's ``(b*, g*)`` on every sample."""
    b = np.asarray(design.b_star, dtype=float)
    return np.array([evaluate_sinr(coeffs.sample(s), b, design.g_star) for s in range(coeffs.S)])


def wilson_interval(successes: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("empty sample")
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    return max(0.0, min(centre - half, p)), min(1.0, max(centre + half, p))


def reliability_from_sinr(sinr: NDArray, tau: float) -> tuple[float, tuple[float, float]]:
    sinr = np.asarray(sinr, dtype=float)
    if sinr.size == 0:
        raise ValueError("empty test set")
    k = int(np.count_nonzero(sinr >= tau))
    return k / sinr.size, wilson_interval(k, sinr.size)


def empirical_reliability(design, test: SAACoefficients, tau: float | None = None, check: bool = True):
    """``(p_hat, (lo, hi))``: fraction of test samples with SINR at least ``tau``.

    ``tau`` defaults to the design's threshold; a Wilson 95% interval is attached.
    """
    if test.S == 0:
        raise ValueError("empty test set")
    if check:
        check_separation(design.provenance, _provenance_of(test))
    tau = design.tau_star if tau is None else tau
    return reliability_from_sinr(design_sinr(design, test), tau)


def lower_tail_quantile(values: NDArray, epsilon: float) -> float:
    """Order statistic ``ceil(eps S)`` (1-based) of the ascending values."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("empty sample")
    k = min(max(ceil_rank(epsilon * v.size), 1), v.size)
    return float(v[k - 1])


def sinr_statistics(values: NDArray, epsilon: float) -> dict:
    """Mean, unbiased variance and lower-tail ``(1 - eps)`` quantile."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("empty sample")
    mean = float(np.sum(v) / v.size)
    var = float(np.sum((v - mean) ** 2) / (v.size - 1)) if v.size > 1 else 0.0
    return {"mean": mean, "var": var, "quantile": lower_tail_quantile(v, epsilon), "min": float(v.min()), "max": float(v.max())}


def design_statistics(design, samples: SAACoefficients, epsilon: float) -> dict:
    return sinr_statistics(design_sinr(design, samples), epsilon)


def ceiling_gap(design, samples: SAACoefficients) -> dict:
    """Ratio of achieved SINR to the high-gain ceiling of ``b*``, per sample.

    Samples whose ceiling is +inf (vanishing limit denominator) are excluded
    and counted. Ratios are reported raw; they may exceed one at finite gain.
    """
    b = np.asarray(design.b_star, dtype=float)
    ratios = []
    excluded = 0
    for s in range(samples.S):
        cs = samples.sample(s)
        ceil = high_gain_ceiling(cs, b)
        if math.isinf(ceil):
            excluded += 1
            continue
        sinr = evaluate_sinr(cs, b, design.g_star)
        ratios.append(sinr / ceil if ceil > 0 else math.inf)
    r = np.array(ratios)
    finite = r[np.isfinite(r)]
    return {
        "mean": float(np.sum(finite) / finite.size) if finite.size else math.nan,
        "min": float(finite.min()) if finite.size else math.nan,
        "max": float(finite.max()) if finite.size else math.nan,
        "count": int(r.size),
        "excluded_infinite_ceiling": excluded,
        "zero_ceiling": int(r.size - finite.size),
        "ratios": r,
    }


def training_violations(design, train: SAACoefficients) -> int:
    """Training scenarios below ``tau*``, evaluated independently of the solver."""
    return int(np.count_nonzero(design_sinr(design, train) < design.tau_star))


@dataclass(frozen=True)
class ValidationReport:
    p_succ_hat: float
    ci95: tuple[float, float]
    mean: float
    var: float
    quantile: float
    ceiling_gap_stats: dict
    S_test: int
    tau: float
    epsilon: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        lo, hi = self.ci95
        if not lo <= self.p_succ_hat <= hi:
            raise ValueError("confidence interval does not contain the estimate")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci95"] = list(self.ci95)
        return out


def _provenance_of(coeffs: SAACoefficients) -> dict:
    prov = dict(coeffs.provenance)
    prov.setdefault("sample_hash", sample_set_hash(coeffs))
    return prov


def validate_design(
    design,
    test: SAACoefficients,
    epsilon: float | None = None,
    tau: float | None = None,
) -> tuple[ValidationReport, NDArray[np.float64]]:
    """Full report on an independent test set, plus the per-sample SINRs."""
    test_prov = _provenance_of(test)
    check_separation(design.provenance, test_prov)
    epsilon = design.provenance.get("epsilon") if epsilon is None else epsilon
    if epsilon is None:
        raise ValueError("epsilon is required when the design does not record it")
    tau = design.tau_star if tau is None else tau
    sinr = design_sinr(design, test)
    p_hat, ci = reliability_from_sinr(sinr, tau)
    stats = sinr_statistics(sinr, epsilon)
    gap = ceiling_gap(design, test)
    gap.pop("ratios")
    report = ValidationReport(
        p_succ_hat=p_hat,
        ci95=ci,
        mean=stats["mean"],
        var=stats["var"],
        quantile=stats["quantile"],
        ceiling_gap_stats=gap,
        S_test=test.S,
        tau=float(tau),
        epsilon=float(epsilon),
        provenance={
            "test": {k: test_prov.get(k) for k in ("seed", "stream", "config_hash", "sample_hash")},
            "train": {k: design.provenance.get(k) for k in ("seed", "stream", "config_hash", "sample_hash")},
            "certification_floor": certification_floor(epsilon, test.S),
        },
    )
    return report, sinr


def certification_floor(epsilon: float, S_test: int) -> float:
    """``1 - eps - 3 sqrt(eps (1 - eps) / S_test)``."""
    return 1.0 - epsilon - 3.0 * math.sqrt(epsilon * (1.0 - epsilon) / S_test)


def default_test_size(S: int) -> int:
    return 10 * S


__all__ = [
    "ValidationReport",
    "ceiling_gap",
    "certification_floor",
    "check_separation",
    "default_test_size",
    "design_sinr",
    "design_statistics",
    "empirical_reliability",
    "lower_tail_quantile",
    "sample_set_hash",
    "sinr_statistics",
    "training_violations",
    "validate_design",
    "wilson_interval",
]
