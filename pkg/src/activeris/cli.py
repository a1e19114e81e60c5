"""Command-line driver: ``activeris <subcommand> ...``.

Every run writes its outputs atomically together with a manifest
(``<output>.manifest.json``). The manifest hash covers the subcommand, its
output-relevant arguments, the configuration and the content of the input
files; it excludes thread counts, output paths and wall-clock times, so a
re-run from the manifest reproduces every output byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from activeris import __version__
from activeris.bounds import ceiling_upper_bound, envelope_terms, high_gain_ceiling, sinr_envelopes
from activeris.channel import ScenarioConfig, sample_many
from activeris.errors import CapabilityError, DimensionError, DomainError, ProvenanceError
from activeris.gaincap import RULES, compute_gain_cap
from activeris.modelio import FORMATS, export_model
from activeris.rng import TEST_STREAM, TRAIN_STREAM
from activeris.sinr import evaluate_sinr
from activeris.saa import (
    SAACoefficients,
    build_feasibility_model,
    compute_big_m,
    expected_dense_counts,
    stack_coefficients,
    violation_budget,
)
from activeris.solve import (
    Design,
    best_order_statistic,
    ingest_solution,
    solve_design,
)
from activeris.storage import (
    atomic_write_bytes,
    atomic_write_text,
    dumps_json,
    load_config,
    load_scenarios,
    loads_json,
    scenario_bytes,
    sha256_file,
)
from activeris.validate import (
    default_test_size,
    lower_tail_quantile,
    sample_set_hash,
    training_violations,
    validate_design,
)

THREADS_ENV = "ACTIVERIS_THREADS"
STREAMS = {"train": TRAIN_STREAM, "test": TEST_STREAM}
SWEEP_TABLES = ("quantile-vs-M", "tau-vs-g", "tau-surface", "envelope-vs-g")

# Gain-cap defaults (assumptions; the stability cap is an input, not derived).
DEFAULT_MU_SAFETY = 0.5
DEFAULT_MAG = 20.0
DEFAULT_P_CELL_MAX = 1500.0
DEFAULT_G_POINTS = 25


# ---------------------------------------------------------------------------
# helpers


def db(x: float) -> float:
    """``10 log10(x)``; ``-inf`` for zero, ``nan`` for negative input."""
    if x > 0:
        return 10.0 * math.log10(x)
    return -math.inf if x == 0 else math.nan


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def table_text(rows: list[dict], columns: list[str], manifest_hash: str) -> str:
    buf = io.StringIO()
    buf.write(f"# manifest_hash={manifest_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _probability(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return value


def _int_list(text: str) -> list[int]:
    out = [int(x) for x in text.split(",") if x.strip()]
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _float_list(text: str) -> list[float]:
    out = [float(x) for x in text.split(",") if x.strip()]
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def draw_coefficients(cfg: ScenarioConfig, seed: int, S: int, stream: int, threads: int) -> SAACoefficients:
    samples = sample_many(cfg, seed, S, stream=stream, threads=threads)
    prov = {"seed": int(seed), "stream": int(stream), "config_hash": cfg.config_hash(), "S": int(S)}
    coeffs = stack_coefficients(samples, cfg, prov)
    coeffs.provenance["sample_hash"] = sample_set_hash(coeffs)
    return coeffs


def gain_cap_from_args(args, coeffs: SAACoefficients):
    cap = compute_gain_cap(
        coeffs.Psi,
        mu_safety=args.mu_safety,
        MAG=args.mag,
        P_cell_max=args.p_cell_max,
        rho=coeffs.rho,
        rule=args.eirp_rule,
        alpha=args.alpha if args.eirp_rule != "worst_case" else None,
    )
    g_max = cap.g_max if args.g_max is None else args.g_max
    if not math.isfinite(g_max) or g_max <= 0:
        raise DomainError(f"gain cap must be finite and positive, got {g_max}")
    return cap, g_max


# ---------------------------------------------------------------------------
# manifests


class Run:
    """Manifest bookkeeping for one subcommand invocation."""

    def __init__(self, command: str, args: argparse.Namespace, hashed: dict, config: dict | None, inputs: dict):
        self.command = command
        self.args = args
        self.identity = {
            "tool": "activeris",
            "version": __version__,
            "command": command,
            "parameters": hashed,
            "config": config,
            "inputs": {k: sha256_file(v) for k, v in sorted(inputs.items())},
        }
        self.inputs = dict(inputs)
        blob = json.dumps(self.identity, sort_keys=True, separators=(",", ":"), default=str)
        self.hash = hashlib.sha256(blob.encode()).hexdigest()
        self.outputs: dict[str, str] = {}
        self.timings: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def stage(self, name: str, since: float) -> float:
        now = time.perf_counter()
        self.timings[name] = now - since
        return now

    def output(self, role: str, path: str | Path, data: str | bytes) -> None:
        if isinstance(data, str):
            atomic_write_text(path, data)
        else:
            atomic_write_bytes(path, data)
        self.outputs[role] = str(path)

    def finish(self, manifest_path: str | Path, argv: list[str]) -> None:
        self.timings["total"] = time.perf_counter() - self._t0
        manifest = {
            "manifest_hash": self.hash,
            **self.identity,
            "argv": argv,
            "inputs_paths": {k: str(v) for k, v in sorted(self.inputs.items())},
            "outputs": {k: {"path": v, "sha256": sha256_file(v)} for k, v in sorted(self.outputs.items())},
            "wall_clock_s": self.timings,
        }
        atomic_write_text(manifest_path, dumps_json(manifest))


def _manifest_path(out: str | Path) -> Path:
    return Path(str(out) + ".manifest.json")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> Run:
    cfg = load_config(args.config)
    inputs = {"config": args.config} if args.config else {}
    run = Run(
        "simulate",
        args,
        {"seed": args.seed, "samples": args.samples, "stream": args.stream},
        cfg.to_dict(),
        inputs,
    )
    t = time.perf_counter()
    coeffs = draw_coefficients(cfg, args.seed, args.samples, STREAMS[args.stream], args.threads)
    t = run.stage("sample", t)
    meta = dict(
        coeffs.provenance,
        stream_name=args.stream,
        config=cfg.to_dict(),
        manifest_hash=run.hash,
        first_index=0,
    )
    run.output("scenarios", args.out, scenario_bytes(coeffs, meta))
    run.stage("write", t)
    return run


def _load_train(path) -> tuple[SAACoefficients, dict]:
    coeffs, meta = load_scenarios(path)
    coeffs.provenance.setdefault("sample_hash", sample_set_hash(coeffs))
    return coeffs, meta


def cmd_design(args) -> Run:
    coeffs, meta = _load_train(args.scenarios)
    params = {
        k: getattr(args, k)
        for k in (
            "epsilon",
            "oracle",
            "eps_tau",
            "mu_safety",
            "mag",
            "p_cell_max",
            "eirp_rule",
            "alpha",
            "g_max",
            "restarts",
            "seed",
            "n_cap",
            "tau",
            "no_refine",
        )
    }
    inputs = {"scenarios": args.scenarios}
    if args.solution:
        inputs["solution"] = args.solution
    run = Run("design", args, params, meta.get("config"), inputs)
    t = time.perf_counter()
    cap, g_max = gain_cap_from_args(args, coeffs)
    kappa = violation_budget(args.epsilon, coeffs.S)
    prov = {k: coeffs.provenance.get(k) for k in ("seed", "stream", "config_hash", "sample_hash")}
    prov["manifest_hash"] = run.hash
    t = run.stage("gain_cap", t)

    if args.oracle == "external":
        if args.solution is None or args.tau is None:
            raise SystemExit("error: --oracle external needs --solution and --tau")
        res = ingest_solution(Path(args.solution), coeffs, args.tau, kappa, g_max)
        prov.update(epsilon=args.epsilon, S=coeffs.S, kappa=kappa, eps_tau=args.eps_tau, iterations=0, g_max=g_max)
        design = Design(res.b, res.g, res.tau, "external", res.violations, prov)
    else:
        design = solve_design(
            coeffs,
            args.epsilon,
            g_max,
            args.oracle,
            eps_tau=args.eps_tau,
            refine=not args.no_refine,
            threads=args.threads,
            restarts=args.restarts,
            seed=args.seed,
            n_cap=args.n_cap,
            provenance=prov,
        )
    t = run.stage("solve", t)

    viol = training_violations(design, coeffs)
    if viol > kappa:
        raise DomainError(f"design violates {viol} > kappa={kappa} training scenarios; not written")
    M_big = compute_big_m(coeffs, design.tau_star, 0.02, g_max)
    summary = {
        "kind": "design",
        "manifest_hash": run.hash,
        "design": design.to_dict(),
        "design_db": {"tau_star_db": db(design.tau_star)},
        "gain_cap": {
            "g_stab": cap.g_stab,
            "g_eirp": cap.g_eirp,
            "g_max_rule": cap.g_max,
            "g_max_used": g_max,
            "rule": cap.rule,
            "alpha": cap.alpha,
            "diagnostics": cap.diagnostics,
            "mu_safety": args.mu_safety,
            "MAG": args.mag,
            "P_cell_max": args.p_cell_max,
        },
        "model_stats": {
            "dense_counts": expected_dense_counts(coeffs.N, coeffs.S),
            "M_big_at_tau_star": M_big,
            "eta_M": 0.02,
        },
        "verification": {"training_violations": viol, "kappa": kappa, "tau_star_feasible": True},
        "scenario_provenance": {k: meta.get(k) for k in ("seed", "stream", "config_hash", "sample_hash", "S")},
    }
    run.output("design", args.out, dumps_json(summary))
    run.stage("write", t)
    return run


def load_design(path) -> tuple[Design, dict]:
    summary = loads_json(Path(path).read_text())
    if summary.get("kind") != "design":
        raise ValueError(f"{path} is not a design summary")
    return Design.from_dict(summary["design"]), summary


def cmd_validate(args) -> Run:
    design, summary = load_design(args.design)
    cfg = load_config(args.config)
    train_seed = design.provenance.get("seed")
    if train_seed is not None and args.seed == train_seed:
        raise ProvenanceError(f"validation seed {args.seed} equals the training seed; choose a different seed")
    if design.provenance.get("config_hash") not in (None, cfg.config_hash()):
        raise ProvenanceError("configuration differs from the one the design was trained on")
    S_train = int(design.provenance.get("S", 0))
    S_test = args.samples or default_test_size(S_train)
    if S_test < 1:
        raise SystemExit("error: test set size must be positive")
    inputs = {"design": args.design}
    if args.config:
        inputs["config"] = args.config
    run = Run("validate", args, {"seed": args.seed, "samples": S_test, "tau": args.tau}, cfg.to_dict(), inputs)
    t = time.perf_counter()
    test = draw_coefficients(cfg, args.seed, S_test, TEST_STREAM, args.threads)
    t = run.stage("sample", t)
    report, sinr = validate_design(design, test, tau=args.tau)
    t = run.stage("evaluate", t)
    out = {"kind": "validation", "manifest_hash": run.hash, "report": report.to_dict()}
    out["report_db"] = {"mean_db": db(report.mean), "quantile_db": db(report.quantile), "tau_db": db(report.tau)}
    run.output("report", args.out, dumps_json(out))
    if args.dump_sinr:
        rows = [{"sample": i, "sinr_lin": float(v), "sinr_db": db(float(v))} for i, v in enumerate(sinr)]
        run.output("sinr_table", args.dump_sinr, table_text(rows, ["sample", "sinr_lin", "sinr_db"], run.hash))
    run.stage("write", t)
    return run


def cmd_export_model(args) -> Run:
    coeffs, meta = _load_train(args.scenarios)
    params = {k: getattr(args, k) for k in ("tau", "epsilon", "g_max", "format", "density", "eta_m", "symmetric")}
    inputs = {"scenarios": args.scenarios}
    run = Run("export-model", args, params, meta.get("config"), inputs)
    t = time.perf_counter()
    model = build_feasibility_model(
        coeffs, args.tau, args.epsilon, args.g_max, density=args.density, eta_M=args.eta_m, symmetric=args.symmetric
    )
    model.meta["manifest_hash"] = run.hash
    t = run.stage("build", t)
    run.output("model", args.out, export_model(model, args.format))
    run.stage("write", t)
    return run


def sweep_tables(cfg: ScenarioConfig, args) -> dict[str, tuple[list[str], list[dict]]]:
    """Compute every requested sweep table as ``{name: (columns, rows)}``."""
    eps = args.epsilon
    tables: dict[str, tuple[list[str], list[dict]]] = {}
    cache: dict[tuple[int, int], SAACoefficients] = {}

    def coeffs_for(N: int, M: int) -> SAACoefficients:
        if (N, M) not in cache:
            cfg_nm = cfg.with_updates(N=N, M=M)
            cache[(N, M)] = draw_coefficients(cfg_nm, args.seed, args.samples, TRAIN_STREAM, args.threads)
        return cache[(N, M)]

    def cap_for(co: SAACoefficients) -> float:
        return gain_cap_from_args(args, co)[1]

    search = dict(n_cap=args.n_cap, threads=args.threads, restarts=args.restarts, seed=args.seed)

    if "quantile-vs-M" in args.tables:
        cols = ["N", "M", "g", "epsilon", "S", "quantile_lin", "quantile_db", "b_search", "b_independent"]
        rows = []
        for N in args.N:
            for M in args.M:
                co = coeffs_for(N, M)
                k = max(math.ceil(round(eps * co.S, 9)), 1) - 1
                for g in args.g:
                    if g == 0:
                        # SINR at g = 0 does not depend on b
                        vals = co.P_d * co.A / (co.D0 + co.A_m @ co.P_m)
                        q, how = lower_tail_quantile(vals, eps), "none"
                    else:
                        q, _, how = best_order_statistic(co, k, g, **search)
                    rows.append(
                        dict(N=N, M=M, g=float(g), epsilon=eps, S=co.S, quantile_lin=q, quantile_db=db(q),
                             b_search=how, b_independent=int(g == 0))
                    )
        tables["quantile-vs-M"] = (cols, rows)

    if "tau-vs-g" in args.tables:
        cols = ["N", "M", "g", "g_max", "epsilon", "kappa", "tau_star_lin", "tau_star_db", "b_search"]
        rows = []
        for N in args.N:
            for M in args.M:
                co = coeffs_for(N, M)
                g_max = cap_for(co)
                kappa = violation_budget(eps, co.S)
                for g in np.linspace(0.0, g_max, args.g_points):
                    tau, _, how = best_order_statistic(co, kappa, float(g), **search)
                    rows.append(
                        dict(N=N, M=M, g=float(g), g_max=g_max, epsilon=eps, kappa=kappa, tau_star_lin=tau,
                             tau_star_db=db(tau), b_search=how)
                    )
        tables["tau-vs-g"] = (cols, rows)

    if "tau-surface" in args.tables:
        cols = ["N", "M", "g_max", "epsilon", "kappa", "tau_star_lin", "tau_star_db", "g_star", "oracle"]
        rows = []
        for N in args.N:
            for M in args.M:
                co = coeffs_for(N, M)
                g_max = cap_for(co)
                oracle = "exact" if N <= args.n_cap else "local_search"
                d = solve_design(co, eps, g_max, oracle, eps_tau=args.eps_tau, threads=args.threads,
                                 restarts=args.restarts, seed=args.seed, n_cap=args.n_cap)
                rows.append(
                    dict(N=N, M=M, g_max=g_max, epsilon=eps, kappa=d.kappa, tau_star_lin=d.tau_star,
                         tau_star_db=db(d.tau_star), g_star=d.g_star, oracle=oracle)
                )
        tables["tau-surface"] = (cols, rows)

    if "envelope-vs-g" in args.tables:
        cols = ["N", "M", "g", "lb_mean_lin", "ub_mean_lin", "sinr_mean_lin", "ceiling_mean_lin",
                "ceiling_bound_mean_lin", "lb_mean_db", "ub_mean_db", "sinr_mean_db", "b_search"]
        rows = []
        for N in args.N:
            for M in args.M:
                co = coeffs_for(N, M)
                g_max = cap_for(co)
                kappa = violation_budget(eps, co.S)
                _, b, how = best_order_statistic(co, kappa, g_max, **search)
                per = [co.sample(s) for s in range(co.S)]
                terms = [envelope_terms(cs) for cs in per]
                ceil = np.array([high_gain_ceiling(cs, b) for cs in per])
                ceil_ub = np.array([ceiling_upper_bound(cs, tm) for cs, tm in zip(per, terms)])
                grid = np.linspace(0.0, g_max, args.g_points)
                env = [sinr_envelopes(cs, tm, grid) for cs, tm in zip(per, terms)]
                lb = np.mean([e.lb for e in env], axis=0)
                ub_all = np.array([e.ub for e in env])
                sinr = np.array([[evaluate_sinr(cs, b, float(g)) for g in grid] for cs in per]).mean(axis=0)
                finite = np.isfinite(ceil)
                for i, g in enumerate(grid):
                    ub = float(np.mean(ub_all[:, i]))
                    rows.append(
                        dict(N=N, M=M, g=float(g), lb_mean_lin=float(lb[i]), ub_mean_lin=ub,
                             sinr_mean_lin=float(sinr[i]),
                             ceiling_mean_lin=float(np.mean(ceil[finite])) if finite.any() else math.inf,
                             ceiling_bound_mean_lin=float(np.mean(ceil_ub)),
                             lb_mean_db=db(float(lb[i])), ub_mean_db=db(ub), sinr_mean_db=db(float(sinr[i])),
                             b_search=how)
                    )
        tables["envelope-vs-g"] = (cols, rows)
    return tables


def cmd_sweep(args) -> Run:
    cfg = load_config(args.config)
    if not args.tables or not args.N or not args.M:
        raise SystemExit("error: sweep axes must be nonempty")
    params = {
        k: getattr(args, k)
        for k in ("tables", "N", "M", "g", "g_points", "epsilon", "samples", "seed", "eps_tau", "mu_safety", "mag",
                  "p_cell_max", "eirp_rule", "alpha", "g_max", "restarts", "n_cap")
    }
    inputs = {"config": args.config} if args.config else {}
    run = Run("sweep", args, params, cfg.to_dict(), inputs)
    t = time.perf_counter()
    tables = sweep_tables(cfg, args)
    t = run.stage("compute", t)
    out = Path(args.out)
    for name, (cols, rows) in tables.items():
        path = out / f"{name}.csv" if len(tables) > 1 or out.suffix != ".csv" else out
        run.output(name, path, table_text(rows, cols, run.hash))
    run.stage("write", t)
    return run


def cmd_rerun(args) -> int:
    manifest = loads_json(Path(args.manifest).read_text())
    argv = list(manifest["argv"])
    if args.out_dir:
        argv = _redirect_outputs(argv, manifest, Path(args.out_dir))
    if args.threads is not None:
        argv = [a for a in argv] + ["--threads", str(args.threads)]
    return main(argv)


_OUTPUT_FLAGS = ("--out", "--dump-sinr")


def _redirect_outputs(argv: list[str], manifest: dict, out_dir: Path) -> list[str]:
    out = list(argv)
    for i, a in enumerate(out[:-1]):
        if a in _OUTPUT_FLAGS:
            out[i + 1] = str(out_dir / Path(out[i + 1]).name)
    return out


# ---------------------------------------------------------------------------
# argument parsing


def _add_gain_cap(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mu-safety", type=float, default=DEFAULT_MU_SAFETY, help="stability safety factor in (0, 1)")
    p.add_argument("--mag", type=float, default=DEFAULT_MAG, help="maximum available gain (linear)")
    p.add_argument("--p-cell-max", type=float, default=DEFAULT_P_CELL_MAX, help="per-cell EIRP limit (linear)")
    p.add_argument("--eirp-rule", choices=RULES, default="worst_case")
    p.add_argument("--alpha", type=_probability, default=0.05, help="EIRP exceedance level for quantile/cantelli")
    p.add_argument("--g-max", type=float, default=None, help="override the computed gain cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="activeris", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"activeris {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", default=None, help="JSON configuration file (defaults if omitted)")
        p.add_argument("--threads", type=_positive_int, default=None, help=f"worker threads (env {THREADS_ENV})")

    p = sub.add_parser("simulate", help="draw and persist scenario samples")
    common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--samples", "-S", type=_positive_int, default=200)
    p.add_argument("--stream", choices=sorted(STREAMS), default="train")
    p.add_argument("--out", required=True)

    p = sub.add_parser("design", help="solve the SAA design by bisection")
    common(p, config=False)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--epsilon", type=_probability, default=0.1)
    p.add_argument("--oracle", choices=("exact", "local_search", "external"), default="exact")
    p.add_argument("--eps-tau", type=float, default=1e-3)
    p.add_argument("--restarts", type=_positive_int, default=16)
    p.add_argument("--seed", type=int, default=0, help="local-search seed")
    p.add_argument("--n-cap", type=_positive_int, default=16, help="largest N for exact enumeration")
    p.add_argument("--no-refine", action="store_true", help="skip the 1-D gain refinement")
    p.add_argument("--solution", default=None, help="external 'name = value' solution file")
    p.add_argument("--tau", type=float, default=None, help="threshold of the external solution")
    _add_gain_cap(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("validate", help="out-of-sample certification of a design")
    common(p)
    p.add_argument("--design", required=True)
    p.add_argument("--seed", type=int, required=True, help="test seed (must differ from training)")
    p.add_argument("--samples", "-S", type=int, default=None, help="test set size (default 10 x training S)")
    p.add_argument("--tau", type=float, default=None, help="threshold (default: the design's tau*)")
    p.add_argument("--dump-sinr", default=None, help="write per-sample SINRs to this CSV")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="parameter sweeps as long-format CSV tables")
    common(p)
    p.add_argument("--tables", type=lambda s: [t for t in s.split(",") if t], default=list(SWEEP_TABLES))
    p.add_argument("--N", type=_int_list, default=[16, 32, 64, 128])
    p.add_argument("--M", type=_int_list, default=[2, 4, 6, 8])
    p.add_argument("--g", type=_float_list, default=[0.0, 0.5, 1.0, 2.0], help="gain panels for quantile-vs-M")
    p.add_argument("--g-points", type=_positive_int, default=DEFAULT_G_POINTS, help="grid size on [0, g_max]")
    p.add_argument("--epsilon", type=_probability, default=0.1)
    p.add_argument("--samples", "-S", type=_positive_int, default=200)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--eps-tau", type=float, default=1e-3)
    p.add_argument("--restarts", type=_positive_int, default=8)
    p.add_argument("--n-cap", type=_positive_int, default=16)
    _add_gain_cap(p)
    p.add_argument("--out", required=True, help="directory (or .csv path for a single table)")

    p = sub.add_parser("export-model", help="write the lifted feasibility model")
    p.add_argument("--scenarios", required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--epsilon", type=_probability, default=0.1)
    p.add_argument("--g-max", type=float, required=True)
    p.add_argument("--format", choices=FORMATS, default="ir")
    p.add_argument("--density", choices=("dense", "sparse"), default="dense")
    p.add_argument("--eta-m", type=float, default=0.02)
    p.add_argument("--symmetric", action="store_true", help="add s_ij = s_ji equalities")
    p.add_argument("--threads", type=_positive_int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("rerun", help="re-execute a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", default=None, help="write outputs here instead of the recorded paths")
    p.add_argument("--threads", type=_positive_int, default=None)
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "design": cmd_design,
    "validate": cmd_validate,
    "sweep": cmd_sweep,
    "export-model": cmd_export_model,
}


def _recorded_argv(argv: list[str]) -> list[str]:
    """Arguments as recorded in the manifest, without thread settings."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--threads":
            skip = True
            continue
        if a.startswith("--threads="):
            continue
        out.append(a)
    return out


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "rerun":
        return cmd_rerun(args)
    if args.threads is None:
        args.threads = default_threads()
    if args.command == "sweep":
        bad = [t for t in args.tables if t not in SWEEP_TABLES]
        if bad:
            parser.error(f"unknown sweep tables {bad}; choose from {SWEEP_TABLES}")
    try:
        run = COMMANDS[args.command](args)
        run.finish(_manifest_path(args.out), _recorded_argv(argv))
    except CapabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ProvenanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (DomainError, DimensionError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
