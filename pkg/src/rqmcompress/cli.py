"""Command-line entry points: build-model, train, evaluate, sweep, selftest.

Exit codes: 0 success, 2 usage/config error, 3 data/state error, 4 numerical
failure.  All stochastic work is driven by explicit seeds from the config, so
identical configs produce byte-identical result rows (wall time aside).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import ansatz, baseline, cyclicwalk, qcore, rqm, training
from . import qfdr as qfdr_mod
from .config import ConfigError, ExperimentConfig, load_config

CSV_COLUMNS = [
    "n",
    "n_tilde",
    "method",
    "seed",
    "r_f",
    "c_q",
    "final_cost",
    "d_bar",
    "f_bar",
    "iterations",
    "wall_time_s",
    "config_hash",
]


class DataError(RuntimeError):
    """Missing or inconsistent input artifacts (CLI exit code 3)."""


# ---------------------------------------------------------------- model I/O


def _build_for(cfg: ExperimentConfig, n: int):
    shift = cyclicwalk.parse_shift(cfg.resolved_shift(n))
    masses = cyclicwalk.discretize_shift(shift, 2**n)
    p = cyclicwalk.transition_matrix(masses)
    model = cyclicwalk.build_model(p)
    return model, p


def _model_payload(cfg: ExperimentConfig, n: int) -> dict:
    model, p = _build_for(cfg, n)
    stat = rqm.exact_stationary(rqm.kraus_from_unitary(model))
    return {
        "model": json.loads(model.to_json()),
        "transition": p.tolist(),
        "c_q": rqm.cq(stat.rho),
        "stationary_degenerate": stat.degenerate,
        "shift": cfg.resolved_shift(n),
        "config_hash": cfg.hash(),
    }


def _load_model_file(path: Path) -> tuple[rqm.Rqm, dict]:
    try:
        payload = json.loads(path.read_text())
        model = rqm.Rqm.from_json(json.dumps(payload["model"]))
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot load model file {path}: {exc}") from exc
    return model, payload


def cmd_build_model(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out_dir) if args.out_dir else cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    for n in cfg.n_list:
        payload = _model_payload(cfg, n)
        path = out_dir / f"model_n{n}.json"
        path.write_text(json.dumps(payload))
        print(f"n={n}: wrote {path}  C_q = {payload['c_q']:.6f} bits  "
              f"(shift={payload['shift']})")
    return 0


# ------------------------------------------------------------------ training


def _problem_for(cfg: ExperimentConfig, model: rqm.Rqm, n_tilde: int, seed: int):
    red = cfg.reduction
    ensemble = rqm.sample_memory_ensemble(
        model,
        k=int(red["k"]),
        burn_in=cfg.burn_in_for(model.n_mem),
        seed=int(red["ensemble_seed"]),
    )
    out_qubits = int(np.log2(model.d_out))
    return training.ReductionProblem(
        target=model,
        ensemble=ensemble,
        n_reduced=n_tilde,
        v_spec=ansatz.AnsatzSpec(model.n_mem, int(red["v_layers"])),
        u_spec=ansatz.AnsatzSpec(n_tilde + out_qubits, int(red["u_layers"])),
        alpha=float(red["alpha"]),
        beta=float(red["beta"]),
        seed=seed,
    )


def _problem_hash(cfg: ExperimentConfig, model: rqm.Rqm, n_tilde: int, seed: int) -> str:
    key = json.dumps(
        {
            "u": hashlib.sha256(model.u.tobytes()).hexdigest(),
            "n_tilde": n_tilde,
            "seed": seed,
            "config": cfg.hash(),
        },
        sort_keys=True,
    )
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def _run_training(cfg: ExperimentConfig, model: rqm.Rqm, n_tilde: int, seed: int,
                  theta0: np.ndarray | None = None) -> training.TrainResult:
    opt = cfg.optimizer
    problem = _problem_for(cfg, model, n_tilde, seed)
    return training.train(
        problem,
        max_iter=int(opt["max_iter"]),
        tol_cost=float(opt["tol_cost"]),
        tol_grad=float(opt["tol_grad"]),
        max_restarts=int(opt["restarts"]),
        two_phase=bool(opt["two_phase"]),
        theta0=theta0,
    )


def _checkpoint_payload(cfg, model, n_tilde, seed, result) -> dict:
    return {
        "problem_hash": _problem_hash(cfg, model, n_tilde, seed),
        "config_hash": cfg.hash(),
        "config": cfg.raw,
        "n": model.n_mem,
        "n_tilde": n_tilde,
        "seed": seed,
        "theta1": result.theta1.tolist(),
        "theta2": result.theta2.tolist(),
        "cost_trace": result.cost_trace.tolist(),
        "d_bar": result.d_bar,
        "f_bar": result.f_bar,
        "iterations": result.iterations,
        "converged": result.converged,
        "finished": True,
    }


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    model, _ = _load_model_file(Path(args.model))
    out_dir = Path(args.out_dir) if args.out_dir else cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    n_tildes = [t for t in cfg.n_tilde_list if t < model.n_mem]
    if not n_tildes:
        raise ConfigError("no n_tilde in config is smaller than the model size")
    for n_tilde in n_tildes:
        for seed in seeds:
            path = out_dir / f"ckpt_n{model.n_mem}_nt{n_tilde}_seed{seed}.json"
            theta0 = None
            if path.exists():
                try:
                    snap = json.loads(path.read_text())
                except ValueError as exc:
                    raise DataError(f"corrupt checkpoint {path}: {exc}") from exc
                if snap.get("problem_hash") != _problem_hash(cfg, model, n_tilde, seed):
                    raise DataError(
                        f"checkpoint {path} does not match the current config/model"
                    )
                if snap.get("finished"):
                    print(f"{path}: already finished, nothing to do")
                    continue
                theta0 = np.array(snap["theta1"] + snap["theta2"], dtype=float)
            t0 = time.time()
            result = _run_training(cfg, model, n_tilde, seed, theta0=theta0)
            path.write_text(json.dumps(_checkpoint_payload(cfg, model, n_tilde, seed, result)))
            print(
                f"{path}: C={result.final_cost:.8f} D̄={result.d_bar:.6f} "
                f"F̄={result.f_bar:.6f} iters={result.iterations} "
                f"({time.time() - t0:.1f}s)"
            )
    return 0


# ---------------------------------------------------------------- evaluation


def _csv_row(record: dict) -> str:
    return ",".join(repr(record[c]) if isinstance(record[c], float) else str(record[c])
                    for c in CSV_COLUMNS)


def _append_rows(path: Path, records: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists()
    with path.open("a") as fh:
        if new:
            fh.write(",".join(CSV_COLUMNS) + "\n")
        for rec in records:
            fh.write(_csv_row(rec) + "\n")
            fh.flush()


def _evaluate_trained(cfg, model, payload, n_tilde, seed, theta2, extra) -> dict:
    target_mps = qfdr_mod.mps_from_model(model)
    u_spec = ansatz.AnsatzSpec(n_tilde + int(np.log2(model.d_out)),
                               int(cfg.reduction["u_layers"]))
    if len(theta2) != ansatz.param_count(u_spec):
        raise DataError("checkpoint parameter vector does not match the config ansatz")
    u_tilde = ansatz.build_unitary(u_spec, np.asarray(theta2, dtype=float))
    reduced = qfdr_mod.mps_from_reduced(u_tilde, n_tilde, model.d_out)
    result = qfdr_mod.qfdr(target_mps, reduced)
    return {
        "n": model.n_mem,
        "n_tilde": n_tilde,
        "method": "trained",
        "seed": seed,
        "r_f": result.r_f,
        "c_q": payload["c_q"],
        "final_cost": extra.get("final_cost", float("nan")),
        "d_bar": extra.get("d_bar", float("nan")),
        "f_bar": extra.get("f_bar", float("nan")),
        "iterations": extra.get("iterations", 0),
        "wall_time_s": extra.get("wall_time_s", 0.0),
        "config_hash": cfg.hash(),
    }


def _evaluate_baseline(cfg, model, payload, n_tilde, seed) -> dict:
    t0 = time.time()
    target_mps = qfdr_mod.mps_from_model(model)
    bl = cfg.baseline
    trunc = baseline.truncate(
        target_mps,
        d_tilde=2**n_tilde,
        delta_thresh=float(bl["delta_thresh"]),
        max_iter=int(bl["max_iter"]),
        restarts=int(bl["restarts"]),
        seed=seed,
    )
    result = qfdr_mod.qfdr(target_mps, trunc.mps)
    return {
        "n": model.n_mem,
        "n_tilde": n_tilde,
        "method": "baseline",
        "seed": seed,
        "r_f": result.r_f,
        "c_q": payload["c_q"],
        "final_cost": -trunc.per_site_overlap,
        "d_bar": float("nan"),
        "f_bar": float("nan"),
        "iterations": trunc.iterations,
        "wall_time_s": time.time() - t0,
        "config_hash": cfg.hash(),
    }


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    model, payload = _load_model_file(Path(args.model))
    out = Path(args.out) if args.out else cfg.output_dir / "results.csv"
    if args.self_test:
        target_mps = qfdr_mod.mps_from_model(model)
        result = qfdr_mod.qfdr(target_mps, target_mps)
        rec = {
            "n": model.n_mem, "n_tilde": model.n_mem, "method": "self",
            "seed": -1, "r_f": result.r_f, "c_q": payload["c_q"],
            "final_cost": 0.0, "d_bar": 1.0, "f_bar": 1.0, "iterations": 0,
            "wall_time_s": 0.0, "config_hash": cfg.hash(),
        }
        _append_rows(out, [rec])
        print(f"self-test r_f = {result.r_f} -> {out}")
        return 0
    if args.baseline:
        seed = args.seed if args.seed is not None else cfg.seeds[0]
        n_tildes = [t for t in cfg.n_tilde_list if t < model.n_mem]
        recs = [_evaluate_baseline(cfg, model, payload, t, seed) for t in n_tildes]
        _append_rows(out, recs)
        for r in recs:
            print(f"baseline n={r['n']} n_tilde={r['n_tilde']} r_f={r['r_f']:.6e}")
        return 0
    if not args.checkpoint:
        raise ConfigError("evaluate needs --checkpoint, --baseline, or --self-test")
    try:
        snap = json.loads(Path(args.checkpoint).read_text())
        theta2 = snap["theta2"]
        n_tilde = int(snap["n_tilde"])
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot load checkpoint {args.checkpoint}: {exc}") from exc
    if int(snap.get("n", -1)) != model.n_mem:
        raise DataError("checkpoint was trained against a different model size")
    rec = _evaluate_trained(
        cfg, model, payload, n_tilde, int(snap["seed"]), theta2,
        {k: snap.get(k) for k in ("d_bar", "f_bar", "iterations")}
        | {"final_cost": snap["cost_trace"][-1] if snap.get("cost_trace") else float("nan")},
    )
    _append_rows(out, [rec])
    print(f"trained n={rec['n']} n_tilde={rec['n_tilde']} seed={rec['seed']} "
          f"r_f={rec['r_f']:.6e}")
    return 0


# -------------------------------------------------------------------- sweep


def _sweep_cell(raw_cfg: dict, n: int, n_tilde: int, method: str, seed: int) -> dict:
    """One (n, ñ, method, seed) cell; runs inside a worker process."""
    cfg = ExperimentConfig(raw=raw_cfg)
    t0 = time.time()
    model, _ = _build_for(cfg, n)
    payload = {"c_q": rqm.cq(rqm.exact_stationary(rqm.kraus_from_unitary(model)).rho)}
    if method == "baseline":
        rec = _evaluate_baseline(cfg, model, payload, n_tilde, seed)
    else:
        result = _run_training(cfg, model, n_tilde, seed)
        rec = _evaluate_trained(
            cfg, model, payload, n_tilde, seed, result.theta2,
            {
                "final_cost": result.final_cost,
                "d_bar": result.d_bar,
                "f_bar": result.f_bar,
                "iterations": result.iterations,
            },
        )
    rec["wall_time_s"] = time.time() - t0
    return rec


def run_sweep(cfg: ExperimentConfig, out_dir: Path, echo=print) -> tuple[Path, Path]:
    """Full grid n × ñ × {trained, baseline} × seeds with a small worker pool.

    Rows are written in deterministic cell order as soon as they complete;
    failed cells are recorded in summary.json and the sweep continues.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "results.csv"
    if csv_path.exists():
        csv_path.unlink()
    cells = [
        (n, nt, method, seed)
        for (n, nt) in cfg.valid_cells()
        for method in ("trained", "baseline")
        for seed in cfg.seeds
    ]
    failures: list[dict] = []
    records: list[dict] = []
    with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(_sweep_cell, cfg.raw, *cell) for cell in cells]
        for cell, fut in zip(cells, futures):
            try:
                rec = fut.result()
            except Exception as exc:  # cell failures shouldn't kill the sweep
                failures.append({"cell": list(cell), "error": f"{type(exc).__name__}: {exc}"})
                echo(f"cell {cell}: FAILED ({exc})")
                continue
            records.append(rec)
            _append_rows(csv_path, [rec])
            echo(
                f"n={rec['n']} ñ={rec['n_tilde']} {rec['method']:8s} seed={rec['seed']}: "
                f"r_f={rec['r_f']:.6e} ({rec['wall_time_s']:.0f}s)"
            )
    summary = _summarize(cfg, records, failures)
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2))
    _write_dat_files(out_dir, records)
    return csv_path, summary_path


def _summarize(cfg: ExperimentConfig, records: list[dict], failures: list[dict]) -> dict:
    cells: dict = {}
    for rec in records:
        key = f"n={rec['n']},n_tilde={rec['n_tilde']},method={rec['method']}"
        cells.setdefault(key, []).append(rec["r_f"])
    stats = {
        key: {
            "mean_r_f": float(np.mean(v)),
            "std_r_f": float(np.std(v, ddof=1)) if len(v) > 1 else 0.0,
            "best_r_f": float(np.min(v)),
            "count": len(v),
        }
        for key, v in sorted(cells.items())
    }
    return {
        "config": cfg.raw,
        "config_hash": cfg.hash(),
        "cells": stats,
        "failures": failures,
    }


def _write_dat_files(out_dir: Path, records: list[dict]) -> None:
    """Gnuplot-friendly companion files: r_f versus n per (method, ñ)."""
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec["method"], rec["n_tilde"]), {}).setdefault(
            rec["n"], []
        ).append(rec["r_f"])
    for (method, nt), by_n in sorted(groups.items()):
        lines = ["# n  best_r_f  mean_r_f  std_r_f"]
        for n in sorted(by_n):
            v = np.array(by_n[n])
            std = v.std(ddof=1) if len(v) > 1 else 0.0
            lines.append(f"{n} {v.min():.10e} {v.mean():.10e} {std:.10e}")
        (out_dir / f"rf_vs_n_{method}_nt{nt}.dat").write_text("\n".join(lines) + "\n")


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out_dir) if args.out_dir else cfg.output_dir
    csv_path, summary_path = run_sweep(cfg, out_dir)
    print(f"wrote {csv_path} and {summary_path}")
    return 0


# ----------------------------------------------------------------- selftest


def cmd_selftest(args) -> int:
    """Fast oracle spot checks; exit 4 on any failure."""
    checks: list[tuple[str, bool]] = []

    def check(name, ok):
        checks.append((name, bool(ok)))
        print(f"{'PASS' if ok else 'FAIL'}  {name}")

    grid_ok = all(
        ansatz.param_count(ansatz.AnsatzSpec(n, L)) == n * (3 + 9 * L) - 6 * L
        for n in range(1, 6)
        for L in range(5)
    )
    check("ansatz parameter-count formula (n 1..5, layers 0..4)", grid_ok)

    rng = np.random.default_rng(0)
    spec = ansatz.AnsatzSpec(3, 2)
    u = ansatz.build_unitary(spec, ansatz.random_params(spec, rng, uniform_2pi=True))
    check("ansatz unitary within 1e-10", qcore.is_unitary(u))

    q = cyclicwalk.discretize_shift(cyclicwalk.WrappedGaussian(0.0, 0.125), 4)
    model = cyclicwalk.build_model(cyclicwalk.transition_matrix(q))
    kraus = rqm.kraus_from_unitary(model)
    comp = np.einsum("xij,xik->jk", kraus.operators.conj(), kraus.operators)
    check("Kraus completeness of the cyclic-walk model", np.linalg.norm(comp - np.eye(4)) < 1e-10)

    mps = qfdr_mod.mps_from_model(model)
    check("structural zero qfdr(a, a) = 0", qfdr_mod.qfdr(mps, mps).r_f == 0.0)

    pt = training.planted_target(2, 1, seed=0)
    ens = rqm.sample_memory_ensemble(pt.model, k=16, burn_in=8, seed=0)
    prob = training.ReductionProblem(
        target=pt.model, ensemble=ens, n_reduced=1,
        v_spec=ansatz.AnsatzSpec(2, 2), u_spec=ansatz.AnsatzSpec(2, 2), seed=0,
    )
    ev = training.CostEvaluator(prob)
    rng = np.random.default_rng(1)
    th1 = ansatz.random_params(prob.v_spec, rng, uniform_2pi=True)
    th2 = ansatz.random_params(prob.u_spec, rng, uniform_2pi=True)
    c, g = ev.cost_and_grad(th1, th2)
    x = np.concatenate([th1, th2])
    h, idx = 1e-5, 7
    xp, xm = x.copy(), x.copy()
    xp[idx] += h
    xm[idx] -= h
    fd = (ev.cost(xp[: len(th1)], xp[len(th1):]) - ev.cost(xm[: len(th1)], xm[len(th1):])) / (2 * h)
    check("parameter-shift gradient matches finite differences", abs(g[idx] - fd) < 1e-6)
    check("combined cost within [-(alpha+beta), 0]", -2.0 <= c <= 0.0)

    if all(ok for _, ok in checks):
        return 0
    return 4


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rqmcompress",
        description="Compress recurrent quantum model memory and score it with "
        "the quantum fidelity divergence rate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-model", help="build cyclic-walk models from a config")
    p.add_argument("--config", help="YAML config file (defaults apply when omitted)")
    p.add_argument("--out-dir", help="output directory (default: config output_dir)")
    p.set_defaults(func=cmd_build_model)

    p = sub.add_parser("train", help="train compression circuits against a model file")
    p.add_argument("--config")
    p.add_argument("--model", required=True, help="model JSON from build-model")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int, help="train only this seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint or the baseline")
    p.add_argument("--config")
    p.add_argument("--model", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--baseline", action="store_true")
    p.add_argument("--self-test", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV to append to (default: output_dir/results.csv)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="full grid sweep -> results.csv + summary.json")
    p.add_argument("--config")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", help="run fast oracle spot checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except qcore.NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
