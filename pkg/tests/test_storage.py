from __future__ import annotations

import json
import math
import os
import stat

import numpy as np
import pytest

from activeris.channel import ScenarioConfig, sample_many
from activeris.saa import stack_coefficients
from activeris.sinr import AmpNoiseModel
from activeris.storage import (
    atomic_write_text,
    config_from_dict,
    dumps_json,
    load_config,
    load_scenarios,
    loads_json,
    save_config,
    save_scenarios,
    scenario_bytes,
    sha256_file,
)


class TestConfig:
    def test_roundtrip(self, tmp_path):
        cfg = ScenarioConfig(N=6, M=3, P_m=(0.5, 1.0, 2.0), amp_noise=AmpNoiseModel.diagonal([0.1] * 6, [0.2] * 6))
        path = tmp_path / "cfg.json"
        save_config(cfg, path)
        back = load_config(path)
        assert back.to_dict() == cfg.to_dict() and back.config_hash() == cfg.config_hash()

    def test_partial_takes_defaults(self):
        cfg = config_from_dict({"schema_version": 1, "N": 8, "links": {"ris_rx": {"K": 3.0}}})
        assert cfg.N == 8 and cfg.M == ScenarioConfig().M
        assert cfg.links["ris_rx"].K == 3.0
        assert cfg.links["ris_rx"].beta == ScenarioConfig().links["ris_rx"].beta

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown configuration keys"):
            config_from_dict({"schema_version": 1, "Nn": 8})

    def test_unknown_link_key(self):
        with pytest.raises(ValueError):
            config_from_dict({"schema_version": 1, "links": {"ris_rx": {"kfactor": 1}}})
        with pytest.raises(ValueError):
            config_from_dict({"schema_version": 1, "links": {"satellite": {"K": 1}}})

    def test_schema_version(self):
        with pytest.raises(ValueError, match="schema_version"):
            config_from_dict({"N": 4})
        with pytest.raises(ValueError):
            config_from_dict({"schema_version": 2})

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{N: 4")
        with pytest.raises(ValueError, match="invalid JSON"):
            load_config(p)
        p.write_text("[1, 2]")
        with pytest.raises(ValueError):
            load_config(p)

    def test_defaults_without_file(self):
        assert load_config(None).to_dict() == ScenarioConfig().to_dict()


class TestScenarioFiles:
    def test_roundtrip(self, tmp_path):
        cfg = ScenarioConfig(N=4, M=2)
        co = stack_coefficients(sample_many(cfg, 3, 7), cfg)
        meta = {"seed": 3, "stream": 0, "config_hash": cfg.config_hash()}
        path = tmp_path / "s.npz"
        save_scenarios(path, co, meta)
        back, meta_back = load_scenarios(path)
        for name in ("abs_d", "r", "c", "abs_dm", "r_m", "c_m", "D0", "D1", "L", "Psi", "P_m"):
            assert getattr(back, name).tobytes() == getattr(co, name).tobytes()
        assert (back.rho, back.P_d, back.N_0) == (co.rho, co.P_d, co.N_0)
        assert meta_back["seed"] == 3 and back.provenance["config_hash"] == cfg.config_hash()

    def test_bytes_deterministic(self):
        cfg = ScenarioConfig(N=3, M=1)
        co = stack_coefficients(sample_many(cfg, 5, 4), cfg)
        assert scenario_bytes(co, {"seed": 5}) == scenario_bytes(co, {"seed": 5})

    def test_readable_by_numpy(self, tmp_path):
        cfg = ScenarioConfig(N=3, M=0)
        co = stack_coefficients(sample_many(cfg, 1, 2), cfg)
        save_scenarios(tmp_path / "s.npz", co, {})
        with np.load(tmp_path / "s.npz") as z:
            assert np.array_equal(z["r"], co.r)

    def test_wrong_format(self, tmp_path):
        import zipfile

        p = tmp_path / "x.npz"
        with zipfile.ZipFile(p, "w") as zf:
            zf.writestr("meta.json", json.dumps({"format": "other"}))
        with pytest.raises(ValueError):
            load_scenarios(p)


class TestJson:
    def test_non_finite_tags(self):
        text = dumps_json({"a": math.inf, "b": [-math.inf, 1.5], "c": math.nan, "d": np.int64(3)})
        data = json.loads(text)
        assert data["a"] == {"$float": "inf"} and data["b"][0] == {"$float": "-inf"} and data["d"] == 3
        back = loads_json(text)
        assert back["a"] == math.inf and back["b"] == [-math.inf, 1.5] and math.isnan(back["c"])

    def test_sorted_and_stable(self):
        assert dumps_json({"b": 1, "a": 2}) == dumps_json({"a": 2, "b": 1})


class TestAtomicWrite:
    def test_write_and_mode(self, tmp_path):
        p = tmp_path / "sub" / "out.txt"
        atomic_write_text(p, "hello")
        assert p.read_text() == "hello"
        umask = os.umask(0)
        os.umask(umask)
        assert stat.S_IMODE(p.stat().st_mode) == 0o666 & ~umask
        assert [f.name for f in p.parent.iterdir()] == ["out.txt"]

    def test_hash(self, tmp_path):
        p = tmp_path / "h"
        atomic_write_text(p, "")
        assert sha256_file(p) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
