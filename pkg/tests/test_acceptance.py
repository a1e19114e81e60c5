"""Acceptance criteria, one test each, every test printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` or directly as a script.
The verdict lines are also repeated in the pytest terminal summary.
"""
from __future__ import annotations

import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from activeris.bounds import ceiling_upper_bound, envelope_terms, high_gain_ceiling, sinr_envelopes
from activeris.channel import ScenarioConfig, sample_many, sample_scenario
from activeris.cli import DEFAULT_MAG, DEFAULT_MU_SAFETY, DEFAULT_P_CELL_MAX, draw_coefficients, main
from activeris.gaincap import (
    cantelli_level,
    compute_gain_cap,
    g_eirp_cantelli,
    g_eirp_quantile,
    g_eirp_worst_case,
    psi_max_per_sample,
)
from activeris.rng import TEST_STREAM, TRAIN_STREAM
from activeris.saa import (
    VariableLayout,
    build_feasibility_model,
    compute_big_m,
    expected_dense_counts,
    scenario_row,
    stack_coefficients,
    violation_budget,
)
from activeris.sinr import coefficients_from_sample, evaluate_sinr
from activeris.solve import (
    ExactOracle,
    bisect_tau,
    check_feasible_exact,
    default_tau_hi,
    max_tau_fixed_gain,
    solve_design,
)
from activeris.storage import save_config
from activeris.validate import (
    certification_floor,
    empirical_reliability,
    lower_tail_quantile,
    training_violations,
)

sys.path.insert(0, str(Path(__file__).parent))
from helpers import all_configs, grid_best_order_statistic, random_coeffs, raw_channel_sinr, verdict  # noqa: E402

EPS = 0.1
S_TRAIN = 200
S_TEST = 2000
TRAIN_SEED = 1
TEST_SEED = 2
DESK_N = (8, 16)
DESK_M = (0, 2, 4)
G_POINTS = 25


def _gain_cap(coeffs) -> float:
    return compute_gain_cap(
        coeffs.Psi, mu_safety=DEFAULT_MU_SAFETY, MAG=DEFAULT_MAG, P_cell_max=DEFAULT_P_CELL_MAX, rho=coeffs.rho
    ).g_max


def _all_sinr(cs, B, g):
    """SINR of every configuration row of ``B`` at every gain of ``g``, shape (len(B), len(g))."""
    g = np.asarray(g)[None, :]
    br, bc = (B @ cs.r)[:, None], (B @ cs.c)[:, None]
    num = cs.P_d * ((cs.abs_d + cs.rho * g * br) ** 2 + (cs.rho * g * bc) ** 2)
    den = cs.D0 + g * g * cs.D1
    for m in range(cs.M):
        brm, bcm = (B @ cs.r_m[m])[:, None], (B @ cs.c_m[m])[:, None]
        den = den + cs.P_m[m] * ((cs.abs_dm[m] + cs.rho * g * brm) ** 2 + (cs.rho * g * bcm) ** 2)
    return num / den


# ---------------------------------------------------------------------------
# shared desk-scale designs (criteria 6 and 9)


@pytest.fixture(scope="module")
def desk():
    out = {}
    for N in DESK_N:
        for M in DESK_M:
            cfg = ScenarioConfig(N=N, M=M)
            train = draw_coefficients(cfg, TRAIN_SEED, S_TRAIN, TRAIN_STREAM, 1)
            test = draw_coefficients(cfg, TEST_SEED, S_TEST, TEST_STREAM, 1)
            g_max = _gain_cap(train)
            t0 = time.perf_counter()
            prov = {k: train.provenance[k] for k in ("seed", "stream", "config_hash", "sample_hash")}
            design = solve_design(train, EPS, g_max, "exact", provenance=prov)
            out[(N, M)] = dict(train=train, test=test, g_max=g_max, design=design, seconds=time.perf_counter() - t0)
    return out


# ---------------------------------------------------------------------------
# criteria


def test_criterion_1_instance_size():
    t0 = time.perf_counter()
    co = random_coeffs(np.random.default_rng(1), 200, 128, 0)
    counts = build_feasibility_model(co, 1.0, EPS, 10.0).counts()
    big_ok = counts == {"binary": 328, "continuous": 33026, "linear": 132297, "soc": 1}
    elapsed = time.perf_counter() - t0
    small = []
    for N in (2, 4, 8, 16):
        m = build_feasibility_model(random_coeffs(np.random.default_rng(N), S_TRAIN, N, 1), 1.0, EPS, 10.0)
        small.append(m.counts() == expected_dense_counts(N, S_TRAIN) == {
            "binary": N + S_TRAIN, "continuous": 2 * N * N + 2 * N + 2, "linear": 8 * N * N + 8 * N + S_TRAIN + 1,
            "soc": 1})
    ok = big_ok and all(small) and elapsed < 10
    assert verdict("1", ok, f"N=128 S=200 counts {counts}, small-N closed forms {small}, build {elapsed:.2f}s")


def test_criterion_2_identity_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst, triples = 0.0, 0
    for k in range(200):
        N, M = 1 + k % 16, k % 3
        cfg = ScenarioConfig(N=N, M=M)
        sample = sample_scenario(cfg, seed=20, index=k, keep_channels=True)
        cs = coefficients_from_sample(sample, cfg)
        for _ in range(5):
            b = rng.choice([-1.0, 1.0], N)
            g = float(rng.uniform(0, 10))
            ref = raw_channel_sinr(sample, cfg, b, g)
            worst = max(worst, abs(evaluate_sinr(cs, b, g) - ref) / ref)
            triples += 1
    elapsed = time.perf_counter() - t0
    ok = triples >= 1000 and worst <= 1e-10 and elapsed < 5
    assert verdict("2", ok, f"{triples} triples, max rel err {worst:.2e}, {elapsed:.2f}s")


def test_criterion_3_envelope_sandwich():
    t0 = time.perf_counter()
    cfg = ScenarioConfig(N=8, M=2)
    samples = sample_many(cfg, 3, 100)
    co = stack_coefficients(samples, cfg)
    g_max = _gain_cap(co)
    grid = np.linspace(0.0, g_max, 100)
    B = all_configs(8)
    violations, coincide, spot = 0, True, 0.0
    for s in range(co.S):
        cs = co.sample(s)
        env = sinr_envelopes(cs, envelope_terms(cs), grid)
        vals = _all_sinr(cs, B, grid)
        violations += int(np.count_nonzero(vals < env.lb - 1e-9) + np.count_nonzero(vals > env.ub + 1e-9))
        coincide &= bool(env.lb[0] == env.ub[0])
        j = s % 256
        spot = max(spot, abs(vals[j, 50] / evaluate_sinr(cs, B[j], grid[50]) - 1))
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and coincide and spot < 1e-12 and elapsed < 60
    assert verdict("3", ok, f"{violations} violations over 100x256x100 points (g_max={g_max:.3g}), "
                            f"coincide at g=0: {coincide}, {elapsed:.2f}s")


def test_criterion_4_ceiling_law():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst, dominated = 0.0, True
    for k in range(100):
        cfg = ScenarioConfig(N=4 + k % 13, M=k % 3)
        cs = coefficients_from_sample(sample_scenario(cfg, seed=40, index=k), cfg)
        b = rng.choice([-1.0, 1.0], cfg.N)
        ceil = high_gain_ceiling(cs, b)
        worst = max(worst, abs(evaluate_sinr(cs, b, 1e6) / ceil - 1))
        dominated &= ceil <= ceiling_upper_bound(cs, envelope_terms(cs)) * (1 + 1e-12)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-3 and dominated and elapsed < 10
    assert verdict("4", ok, f"max |SINR/ceiling - 1| = {worst:.2e}, ceiling <= bound: {dominated}, {elapsed:.2f}s")


def test_criterion_5_exact_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    mismatches, tau_gaps = [], []
    for k in range(20):
        N, S, M = int(rng.integers(2, 9)), int(rng.integers(5, 21)), int(rng.integers(0, 3))
        co = random_coeffs(rng, S, N, M)
        g_max = float(rng.uniform(1.0, 5.0))
        kappa = violation_budget(0.2, S)
        grid = np.linspace(0.0, g_max, 10_000)
        tau_grid = grid_best_order_statistic(co, kappa, grid)
        # feasible below the grid optimum, infeasible clearly above it
        checks = [(tau_grid * f, True) for f in (0.25, 0.5, 0.9, 0.999)] + [(tau_grid - 1e-6, True)]
        checks += [(tau_grid * f, False) for f in (1.01, 1.1, 2.0)]
        for tau, expect in checks:
            if (check_feasible_exact(co, tau, kappa, g_max) is not None) != expect:
                mismatches.append((k, tau, expect))
        # bisection vs a coarse-to-fine scan of the same oracle over a dense tau grid
        design = bisect_tau(ExactOracle(), co, 0.2, g_max, eps_tau=1e-3)
        lo, hi = 0.0, default_tau_hi(co, kappa, g_max)
        while hi - lo > 1e-5:
            taus = np.linspace(lo, hi, 41)
            ok = [check_feasible_exact(co, t, kappa, g_max) is not None for t in taus]
            last = max(i for i, f in enumerate(ok) if f)
            lo, hi = taus[last], taus[min(last + 1, 40)]
        tau_gaps.append(abs(design.tau_star - lo))
    elapsed = time.perf_counter() - t0
    ok = not mismatches and max(tau_gaps) <= 1e-3 and elapsed < 300
    assert verdict("5", ok, f"{len(mismatches)} verdict mismatches over 20 instances x 8 thresholds, "
                            f"max |tau*_bisect - tau*_scan| = {max(tau_gaps):.2e}, {elapsed:.1f}s")


def test_criterion_6_budget_contract(desk):
    worst = []
    for (N, M), cell in desk.items():
        d = cell["design"]
        worst.append((N, M, training_violations(d, cell["train"]), d.violated_on_train, d.kappa))
    ok = all(v <= 20 and kappa == 20 and solver == v for _, _, v, solver, kappa in worst)
    detail = ", ".join(f"(N={N},M={M}) {v}/{kappa}" for N, M, v, _, kappa in worst)
    assert verdict("6", ok, f"independent re-check of training violations: {detail}")


def test_criterion_7_big_m_validity():
    rng = np.random.default_rng(7)
    bad = 0
    for k in range(20):
        N, S, M = 2 + k % 5, 4 + k % 7, k % 3
        if k % 2:
            cfg = ScenarioConfig(N=N, M=M)
            co = stack_coefficients(sample_many(cfg, 70 + k, S), cfg)
        else:
            co = random_coeffs(rng, S, N, M)
        layout = VariableLayout.dense(N, S)
        g_max = float(rng.uniform(0.5, 10.0))
        tau = float(rng.uniform(0.0, 10.0))
        M_big = compute_big_m(co, tau, 0.02, g_max)
        model = build_feasibility_model(co, tau, EPS if S >= 10 else 0.5, g_max)
        X = rng.uniform(0.0, 1.0, (10_000, layout.n)) * model.upper
        for s in range(S):
            const, cols, vals = scenario_row(co, s, tau, layout)
            bad += int(np.count_nonzero(const + X[:, cols] @ vals < -M_big))
    assert verdict("7", bad == 0, f"{bad} violations of E_s >= -M_big over 20 instances x 10^4 box points")


def test_criterion_8_eirp_bounds():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    order_ok = exceed_ok = scale_ok = True
    for k in range(50):
        if k % 2:
            cfg = ScenarioConfig(N=4 + k % 8, M=k % 3)
            psi = psi_max_per_sample(sample_many(cfg, 80 + k, 60))
        else:
            psi = rng.lognormal(0.0, 1.0, 60)
        P, rho = float(rng.uniform(1, 2000)), float(rng.uniform(0.5, 1.0))
        wc = g_eirp_worst_case(psi, P, rho)
        for a in (0.05, 0.1, 0.25):
            order_ok &= wc <= g_eirp_quantile(psi, a, P, rho)
            exceed_ok &= float(np.mean(psi > cantelli_level(psi, a)[2])) <= a
        c, r2 = float(rng.uniform(0.1, 10)), float(rng.uniform(0.2, 1.0))
        for fn in (lambda p, rr: g_eirp_worst_case(p, P, rr),
                   lambda p, rr: g_eirp_quantile(p, 0.1, P, rr),
                   lambda p, rr: g_eirp_cantelli(p, 0.1, P, rr)):
            base = fn(psi, rho)
            scale_ok &= math.isclose(fn(c * psi, rho), base / math.sqrt(c), rel_tol=1e-12)
            scale_ok &= math.isclose(fn(psi, r2), base * rho / r2, rel_tol=1e-12)
    elapsed = time.perf_counter() - t0
    ok = order_ok and exceed_ok and scale_ok and elapsed < 5
    assert verdict("8", ok, f"worst-case <= quantile: {order_ok}, Cantelli exceedance <= alpha: {exceed_ok}, "
                            f"psi/rho scaling: {scale_ok}, {elapsed:.2f}s")


def test_criterion_9a_quantile_decreasing_in_m(desk):
    rows = []
    for N in DESK_N:
        q = []
        for M in DESK_M:
            co = desk[(N, M)]["train"]
            q.append(lower_tail_quantile(co.P_d * co.A / (co.D0 + co.A_m @ co.P_m), EPS))
        rows.append((N, q))
    ok = all(a > b for _, q in rows for a, b in zip(q, q[1:]))
    detail = "; ".join(f"N={N}: " + ", ".join(f"{x:.4g}" for x in q) for N, q in rows)
    assert verdict("9(a)", ok, f"g=0 lower-tail quantile over M={DESK_M}: {detail}")


def test_criterion_9b_tau_versus_gain(desk):
    rows, ok = [], True
    for (N, M), cell in desk.items():
        co, g_max = cell["train"], cell["g_max"]
        kappa = violation_budget(EPS, co.S)
        grid = np.linspace(0.0, g_max, G_POINTS)
        taus = np.array([max_tau_fixed_gain(co, kappa, float(g))[0] for g in grid])
        at_cap = taus[-1] >= 0.9 * taus.max()
        rising = taus[1] > taus[0]
        ok &= at_cap and rising
        rows.append(f"(N={N},M={M}) tau(0)={taus[0]:.4g} tau(g1)={taus[1]:.4g} "
                    f"tau(g_max)={taus[-1]:.4g} max={taus.max():.4g}")
    # cross-check one grid point against bisection with the gain pinned
    co, g_max = desk[(8, 2)]["train"], desk[(8, 2)]["g_max"]
    g_mid = float(np.linspace(0.0, g_max, G_POINTS)[12])
    direct = max_tau_fixed_gain(co, violation_budget(EPS, co.S), g_mid)[0]
    bis = bisect_tau(ExactOracle(g_fixed=g_mid), co, EPS, g_max, eps_tau=1e-3).tau_star
    cross = abs(direct - bis) <= 1e-3
    ok &= cross
    assert verdict("9(b)", ok, "; ".join(rows) + f"; bisection cross-check |{direct:.5g} - {bis:.5g}| <= 1e-3: {cross}")


def test_criterion_9c_out_of_sample_reliability(desk):
    floor = certification_floor(EPS, S_TEST)
    cells, ok = [], True
    for (N, M), cell in desk.items():
        p_hat, (lo, hi) = empirical_reliability(cell["design"], cell["test"])
        ok &= p_hat >= floor
        cells.append(f"(N={N},M={M}) p={p_hat:.4f}{'' if p_hat >= floor else ' BELOW'}")
    assert verdict("9(c)", ok, f"floor {floor:.4f} at S_test={S_TEST}: " + ", ".join(cells))


def test_criterion_9_runtime(desk):
    total = sum(cell["seconds"] for cell in desk.values())
    assert verdict("9(runtime)", total < 900, f"six desk-scale designs took {total:.1f}s (limit 900s)")


def test_criterion_10_determinism(tmp_path):
    cfg = tmp_path / "cfg.json"
    save_config(ScenarioConfig(N=6, M=2), cfg)

    def run(tag, threads):
        d = tmp_path / tag
        d.mkdir()
        steps = [
            ["simulate", "--config", str(cfg), "--seed", "11", "-S", "60", "--out", str(d / "train.npz")],
            ["design", "--scenarios", str(d / "train.npz"), "--out", str(d / "design.json")],
            ["validate", "--design", str(d / "design.json"), "--config", str(cfg), "--seed", "12", "-S", "300",
             "--dump-sinr", str(d / "sinr.csv"), "--out", str(d / "report.json")],
            ["export-model", "--scenarios", str(d / "train.npz"), "--tau", "0.5", "--g-max", "3",
             "--out", str(d / "model.ir")],
            ["sweep", "--config", str(cfg), "--N", "4,6", "--M", "0,2", "-S", "40", "--g-points", "5",
             "--out", str(d / "sweep")],
        ]
        codes = [main(argv + ["--threads", str(threads)]) for argv in steps]
        return d, codes

    a, codes_a = run("a", 1)
    b, codes_b = run("b", 4)

    def artifacts(d):
        files = sorted(p for p in d.rglob("*") if p.is_file() and not p.name.endswith(".manifest.json"))
        return {str(p.relative_to(d)): p.read_bytes() for p in files}

    def manifest_hashes(d):
        return {str(p.relative_to(d)): json.loads(p.read_text())["manifest_hash"] for p in d.rglob("*.manifest.json")}

    # outputs name their own directory only through the manifest, so compare contents
    same_threads = artifacts(a).keys() == artifacts(b).keys() and all(
        artifacts(a)[k] == artifacts(b)[k] for k in artifacts(a) if not k.endswith(".json")
    )
    same_threads &= manifest_hashes(a) == manifest_hashes(b)
    json_same = all(artifacts(a)[k] == artifacts(b)[k] for k in artifacts(a) if k.endswith(".json"))

    redo = tmp_path / "redo"
    rerun_codes = [main(["rerun", str(m), "--out-dir", str(redo), "--threads", "3"])
                   for m in sorted(a.glob("*.manifest.json"))]
    reproduced = all((redo / name).read_bytes() == (a / name).read_bytes()
                     for name in ("train.npz", "design.json", "report.json", "sinr.csv", "model.ir"))
    ok = codes_a == codes_b == [0] * 5 and same_threads and json_same and reproduced and set(rerun_codes) == {0}
    assert verdict("10", ok, f"{len(artifacts(a))} artifacts byte-identical across --threads 1/4: "
                             f"{same_threads and json_same}; manifest reruns reproduce outputs: {reproduced}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
