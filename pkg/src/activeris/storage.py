"""Files: configuration JSON, scenario archives, atomic writes and JSON helpers."""
from __future__ import annotations

import hashlib
import io
import json
import math
import os
import tempfile
import zipfile
from pathlib import Path

import numpy as np

from activeris.channel import CONFIG_SCHEMA_VERSION, LinkParams, ScenarioConfig, _cplx_from_list, _default_links
from activeris.saa import SAACoefficients
from activeris.sinr import AmpNoiseModel

SCENARIO_FORMAT = "activeris-scenarios"
SCENARIO_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)
_ARRAYS = ("abs_d", "r", "c", "abs_dm", "r_m", "c_m", "D0", "D1", "L", "Psi", "P_m")
_SCALARS = ("rho", "P_d", "N_0")


# ---------------------------------------------------------------------------
# atomic writes


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    umask = os.umask(0)
    os.umask(umask)
    try:
        os.chmod(tmp, 0o666 & ~umask)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# JSON with tagged non-finite floats


def encode_json(obj):
    """Replace non-finite floats by ``{"$float": "inf"}`` style tags, recursively."""
    if isinstance(obj, dict):
        return {str(k): encode_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return encode_json(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return {"$float": "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")}
    return obj


def decode_json(obj):
    if isinstance(obj, dict):
        if set(obj) == {"$float"}:
            return float(obj["$float"])
        return {k: decode_json(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [decode_json(v) for v in obj]
    return obj


def dumps_json(obj) -> str:
    return json.dumps(encode_json(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def loads_json(text: str):
    return decode_json(json.loads(text))


# ---------------------------------------------------------------------------
# configuration

_CONFIG_KEYS = {
    "schema_version",
    "N",
    "M",
    "N_t",
    "N_r",
    "P_d",
    "P_m",
    "N_0",
    "rho",
    "amp_noise",
    "links",
    "interferer_angle_step_deg",
    "f",
    "f_m",
    "w",
    "los",
}
_LINK_KEYS = {"K", "beta", "aod_deg", "aoa_deg"}


def config_from_dict(data: dict) -> ScenarioConfig:
    """Strict inverse of :meth:`ScenarioConfig.to_dict`; omitted keys take defaults.

    Unknown keys and a missing or different ``schema_version`` are errors.
    """
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    version = data.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ValueError(f"configuration schema_version must be {CONFIG_SCHEMA_VERSION}, got {version!r}")
    kw: dict = {}
    for key in ("N", "M", "N_t", "N_r"):
        if key in data:
            kw[key] = int(data[key])
    for key in ("P_d", "N_0", "rho", "interferer_angle_step_deg"):
        if key in data:
            kw[key] = float(data[key])
    if "P_m" in data:
        kw["P_m"] = tuple(float(p) for p in data["P_m"])
    if "amp_noise" in data:
        kw["amp_noise"] = AmpNoiseModel.from_dict(data["amp_noise"])
    if "links" in data:
        links = _default_links()
        for name, spec in data["links"].items():
            if name not in links:
                raise ValueError(f"unknown link {name!r}")
            extra = set(spec) - _LINK_KEYS
            if extra:
                raise ValueError(f"unknown keys for link {name!r}: {sorted(extra)}")
            links[name] = LinkParams(**{**vars(links[name]), **spec})
        kw["links"] = links
    if "f" in data:
        kw["f"] = _cplx_from_list(data["f"])
    if "w" in data:
        kw["w"] = _cplx_from_list(data["w"])
    if "f_m" in data:
        kw["f_m"] = tuple(_cplx_from_list(v) for v in data["f_m"])
    if "los" in data:
        kw["los"] = {k: _cplx_from_list(v) for k, v in data["los"].items()}
    return ScenarioConfig(**kw)


def load_config(path: str | Path | None) -> ScenarioConfig:
    """Read a JSON configuration; ``None`` gives the defaults."""
    if path is None:
        return ScenarioConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ValueError(f"{path}: configuration must be a JSON object")
    return config_from_dict(data)


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    atomic_write_text(path, dumps_json(cfg.to_dict()))


# ---------------------------------------------------------------------------
# scenario archives


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def scenario_bytes(coeffs: SAACoefficients, meta: dict) -> bytes:
    """Deterministic ``.npz``-compatible archive: fixed member order and timestamps."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        header = dict(meta, format=SCENARIO_FORMAT, version=SCENARIO_VERSION)
        header["scalars"] = {k: float(getattr(coeffs, k)) for k in _SCALARS}
        members = [("meta.json", dumps_json(header).encode())]
        members += [(f"{k}.npy", _npy_bytes(getattr(coeffs, k))) for k in _ARRAYS]
        for name, blob in members:
            info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
            info.external_attr = 0o644 << 16
            zf.writestr(info, blob)
    return buf.getvalue()


def save_scenarios(path: str | Path, coeffs: SAACoefficients, meta: dict) -> None:
    atomic_write_bytes(path, scenario_bytes(coeffs, meta))


def load_scenarios(path: str | Path) -> tuple[SAACoefficients, dict]:
    """Inverse of :func:`save_scenarios`; the metadata becomes the coefficients' provenance."""
    with zipfile.ZipFile(path) as zf:
        meta = loads_json(zf.read("meta.json").decode())
        if meta.get("format") != SCENARIO_FORMAT or meta.get("version") != SCENARIO_VERSION:
            raise ValueError(f"{path}: not a version {SCENARIO_VERSION} scenario file")
        arrays = {k: np.lib.format.read_array(io.BytesIO(zf.read(f"{k}.npy"))) for k in _ARRAYS}
    scalars = meta.pop("scalars")
    coeffs = SAACoefficients(**arrays, **scalars, provenance=dict(meta))
    return coeffs, meta
