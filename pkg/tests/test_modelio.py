from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from activeris.modelio import export_model, model_from_ir, model_to_cbf, model_to_ir, read_model, write_model
from activeris.saa import SAACoefficients, build_feasibility_model

from helpers import random_coeffs

DATA = Path(__file__).parent / "data"


def _golden_model():
    co = SAACoefficients(
        abs_d=np.array([1.0, 0.5]),
        r=np.eye(2),
        c=np.zeros((2, 2)),
        abs_dm=np.zeros((2, 0)),
        r_m=np.zeros((2, 0, 2)),
        c_m=np.zeros((2, 0, 2)),
        D0=np.ones(2),
        D1=np.full(2, 0.1),
        L=np.full(2, 2.0),
        Psi=np.ones((2, 2)),
        rho=1.0,
        P_d=1.0,
        P_m=np.zeros(0),
    )
    return build_feasibility_model(co, 1.0, 0.5, 1.0)


class TestGolden:
    def test_ir_matches_golden(self):
        assert model_to_ir(_golden_model()) == (DATA / "golden_n2_s2.ir").read_text()

    def test_cbf_matches_golden(self):
        assert model_to_cbf(_golden_model()) == (DATA / "golden_n2_s2.cbf").read_text()

    def test_golden_scenario_rows(self):
        m = _golden_model()
        rows = {name: i for i, name in enumerate(m.row_names)}
        r0 = m.A.getrow(rows["scen_0"]).toarray().ravel()
        lay = m.layout
        assert r0[lay.g] == -2.0 and r0[lay.t] == pytest.approx(0.9)
        assert r0[lay.u] == 4.0 and r0[lay.z] == -4.0 and r0[lay.Z] == 4.0
        assert m.row_lo[rows["scen_1"]] == 0.75
        assert m.meta["M_big"] == pytest.approx(6.222)

    def test_cbf_header(self):
        lines = model_to_cbf(_golden_model()).splitlines()
        con = lines.index("CON")
        assert lines[con + 1 : con + 4] == ["90 2", "L+ 87", "QR 3"]
        assert "VER" in lines and lines[lines.index("VER") + 1] == "3"


class TestRoundTrip:
    def test_ir_byte_identical(self):
        text = (DATA / "golden_n2_s2.ir").read_text()
        assert model_to_ir(model_from_ir(text)) == text

    def test_random_model_roundtrip(self, tmp_path):
        co = random_coeffs(np.random.default_rng(0), 6, 4, 2)
        m = build_feasibility_model(co, 0.7, 0.3, 2.5, density="sparse", symmetric=True)
        path = tmp_path / "m.ir"
        write_model(m, path)
        back = read_model(path)
        assert model_to_ir(back) == path.read_text()
        assert (back.A != m.A).nnz == 0
        np.testing.assert_array_equal(back.row_lo, m.row_lo)
        np.testing.assert_array_equal(back.integer, m.integer)
        assert back.counts() == m.counts()

    def test_bad_header(self):
        with pytest.raises(ValueError):
            model_from_ir("something else\n")

    def test_truncated(self):
        text = (DATA / "golden_n2_s2.ir").read_text()
        with pytest.raises(ValueError):
            model_from_ir("\n".join(text.splitlines()[:30]))

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            export_model(_golden_model(), "mps")
