"""Command-line entry point: ``ttarecovery <subcommand>``.

Exit codes: 0 success, 2 infeasible-instance gate, 1 any other error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, bench
from .adapt import EtaTooLarge, InvalidEta
from .artifacts import dumps, write_csv, write_json
from .bounds import BridgeInfeasible, evaluate, lower_bound, upper_bound_table
from .mixing import MixingProcess, empirical_phi_report
from .model import NonInteriorError, synthetic_preset
from .recovery import InfeasibleRegime, NoRecoveryWithinHorizon, estimate_recovery
from .streams import (BadParams, SingleStepViolation, greedy_quantize, read_trajectory_csv,
                      shift_count_bound)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


def decimal_arg(text: str) -> float:
    """Decimal string with ``.`` separator (no locale, no hex, no inf/nan)."""
    try:
        d = Decimal(text.strip())
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a decimal number: {text!r}") from None
    if not d.is_finite():
        raise argparse.ArgumentTypeError(f"not a finite number: {text!r}")
    return float(d)


def _load_config(path: str) -> bench.ExperimentConfig:
    """Accept a config file or any JSON artifact that embeds one."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if isinstance(raw, dict) and "meta" in raw and "config" in raw["meta"]:
        raw = raw["meta"]["config"]
    return bench.ExperimentConfig.from_dict(raw)


def _out_dir(args, cfg: bench.ExperimentConfig | None = None) -> Path:
    if args.out_dir is not None:
        return Path(args.out_dir)
    return Path(cfg.output_path) if cfg is not None else Path(".")


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg, file=sys.stderr)


# ---------------------------------------------------------------- subcommands

def cmd_quantize(args) -> int:
    traj = read_trajectory_csv(args.trajectory)
    q = greedy_quantize(traj, args.delta_w)
    disc = float(np.max(np.abs(traj.locations - q.anchor_locations)))
    cfg = {"trajectory": str(args.trajectory), "delta_W": args.delta_w}
    summary = {"shift_count": q.shift_count,
               "shift_count_bound": shift_count_bound(traj.path_variation, args.delta_w),
               "sup_discrepancy": disc, "path_variation": traj.path_variation,
               "horizon_T": traj.horizon_T}
    meta = bench.artifact_meta(cfg, "quantize", summary=summary)
    rows = []
    for t in range(traj.horizon_T):
        shift = bool(q.shift_flags[t - 1]) if t > 0 else False
        rows.append((t + 1, float(traj.locations[t]), float(q.anchor_locations[t]), shift))
    out = args.out or (_out_dir(args) / "quantized.csv")
    write_csv(out, ("t", "location", "anchor", "shift"), rows, meta)
    _say(args, f"{out}: K_S={q.shift_count} (bound {summary['shift_count_bound']}), "
               f"sup discrepancy {disc:.6g}")
    return EXIT_OK


def cmd_calibrate_mixing(args) -> int:
    proc = MixingProcess.from_rho(args.rho, args.sigma, args.seed)
    rows = empirical_phi_report(proc, args.lags, args.n_samples)
    cfg = {"rho_mix": args.rho, "sigma": args.sigma, "lags": args.lags,
           "n_samples": args.n_samples, "master_seed": args.seed}
    meta = bench.artifact_meta(cfg, "calibrate-mixing",
                               all_ok=all(r.ok for r in rows))
    out = args.out or (_out_dir(args) / "mixing.csv")
    write_csv(out, ("lag", "cov", "bound", "ratio", "stderr"),
              [(r.lag, r.cov, r.bound, r.ratio, r.stderr) for r in rows], meta)
    _say(args, f"{out}: {sum(r.ok for r in rows)}/{len(rows)} lags within the bound (3 SE)")
    return EXIT_OK


def _recover_point(cfg: bench.ExperimentConfig, problem, point_index: int):
    inst, traj = bench.single_shift(problem, cfg.shift, cfg.bias_xi, cfg.theta_init)
    base = bench.make_baseline_config(problem, cfg.eta, 1, cfg.master_seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = estimate_recovery(inst, traj, base, n_runs=cfg.n_runs, T_max=cfg.T_max,
                                estimator=cfg.estimator, hitting_rule=cfg.hitting_rule,
                                point_index=point_index)
    notes = sorted({f"{w.category.__name__}: {w.message}" for w in caught
                    if issubclass(w.category, (InfeasibleRegime, NoRecoveryWithinHorizon))})
    return est, base, notes


def cmd_recover(args) -> int:
    cfg = _load_config(args.config)
    out_dir = _out_dir(args, cfg)
    cd = cfg.to_dict()
    if cfg.sweep is None:
        points = [(None, cfg.problem())]
    else:
        name = cfg.sweep["param"]
        cast = int if name == "batch_B" else float
        points = [(v, cfg.problem(**{name: cast(v)})) for v in cfg.sweep["values"]]

    summaries, curves = [], []
    for i, (value, problem) in enumerate(points):
        est, base, notes = _recover_point(cfg, problem, i)
        s = est.summary()
        s.update({"point_index": i, "eta": base.eta, "eta_c": base.eta_c,
                  "LB": lower_bound(problem), "UB": upper_bound_table(problem),
                  "feasibility": bench.flags_dict(problem), "warnings": notes})
        if value is not None:
            s[cfg.sweep["param"]] = value
        summaries.append(s)
        curves.append((i, value, est))
        for n in notes:
            _say(args, n)

    meta = bench.artifact_meta(cd, "recover", feasibility=[s["feasibility"] for s in summaries])
    if cfg.sweep is None:
        est = curves[0][2]
        result = summaries[0]
        if cfg.format == "json":
            result = dict(result, p_fail=est.failure_curve, stderr=est.stderr_curve)
        else:
            write_csv(out_dir / "recover.csv", ("t", "p_fail", "stderr"),
                      zip(range(1, est.horizon_T_max + 1), est.failure_curve, est.stderr_curve),
                      meta)
        write_json(out_dir / "recover.json", meta, result)
    else:
        param = cfg.sweep["param"]
        cols = (param, "LB", "tau_hat", "UB", "tau_uniform_tail", "tau_mean_sustained",
                "tau_mean_first_crossing", "eta", "eta_c", "T_max", "n_runs", "feasible",
                "point_index")
        if cfg.format == "csv":
            write_csv(out_dir / "recover_sweep.csv", cols, summaries, meta)
        write_json(out_dir / "recover.json", meta, {"points": summaries})

    if args.emit_plot_data:
        rows = ((i, v, t + 1, p, s) for i, v, est in curves
                for t, (p, s) in enumerate(zip(est.failure_curve, est.stderr_curve)))
        write_csv(out_dir / "recover_plot_data.csv",
                  ("point_index", "value", "t", "p_fail", "stderr"), rows, meta)
    if args.plot:
        from . import plotting
        labels = [f"{cfg.sweep['param']}={v}" if v is not None else "run" for _, v, _ in curves]
        plotting.failure_curves(out_dir / "recover.png",
                                [(lab, e.failure_curve, e.stderr_curve)
                                 for lab, (_, _, e) in zip(labels, curves)],
                                points[0][1].delta)
    for s in summaries:
        _say(args, f"tau_hat={s['tau_hat']} ({s['estimator']}), T_max={s['T_max']}, "
                   f"feasible={s['feasible']}")
    return EXIT_OK


def cmd_learnability(args) -> int:
    cfg = _load_config(args.config)
    out_dir = _out_dir(args, cfg)
    if cfg.trajectory is None:
        raise bench.ConfigError("learnability needs a 'trajectory' block")
    problem = cfg.problem()
    flags = bench.flags_dict(problem)
    meta = bench.artifact_meta(cfg.to_dict(), "learnability", feasibility=flags)
    if not flags["bridge_ok"]["ok"]:
        write_json(out_dir / "learnability.json", meta,
                   {"claim": None, "reason": "bridge infeasible: eps must exceed "
                    "Lambda*delta_W with the alignment margin at eps'"})
        _say(args, "infeasible: bridge condition fails; no claim emitted")
        return EXIT_INFEASIBLE
    traj = bench.trajectory_from_config(cfg.trajectory, problem.delta_W)
    if cfg.eta is not None:
        base = bench.make_baseline_config(problem, cfg.eta, 1, cfg.master_seed)
    else:
        base = bench.learnability_baseline(problem, cfg.master_seed)
    rep = bench.run_learnability_experiment(problem, traj, base, n_runs=cfg.n_runs,
                                            bias_xi=cfg.bias_xi, theta_init=cfg.theta_init)
    result = dict(rep.summary(), eta=base.eta, eta_c=base.eta_c)
    write_json(out_dir / "learnability.json", meta, result)
    if args.emit_plot_data:
        write_csv(out_dir / "learnability_plot_data.csv", ("t", "location", "p_violation",
                                                          "mean_excess"),
                  zip(range(1, traj.horizon_T + 1), traj.locations, rep.per_t_violation,
                      rep.mean_excess), meta)
    if args.plot:
        from . import plotting
        q = greedy_quantize(traj, problem.delta_W)
        plotting.violation_curve(out_dir / "learnability.png", rep.per_t_violation,
                                 [s for s, _ in q.segments[1:]], rep.rho_hat, rep.rho_bound)
    _say(args, f"rho_hat={rep.rho_hat:.4g} <= bound {rep.rho_bound:.4g}: {rep.transfer_holds}; "
               f"cumulative excess {rep.cumulative_excess:.4g} <= {rep.regret_bound:.4g}: "
               f"{rep.regret_holds}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = _load_config(args.config)
    problem = cfg.problem()
    c = float((cfg.eta or {}).get("c", 1.0))
    report = evaluate(problem, eta_c=c, K_S=args.shifts, tau=args.tau, T=args.horizon_t)
    flags = bench.flags_dict(problem)
    meta = bench.artifact_meta(cfg.to_dict(), "bounds", feasibility=flags)
    result = report.to_dict()
    result["feasibility"] = flags
    out = args.out or (_out_dir(args, cfg) / "bounds.json")
    write_json(out, meta, result)
    _say(args, f"{out}: LB={report.lb:.6g} UB={report.ub:.6g}")
    return EXIT_OK


def cmd_repro_tables(args) -> int:
    if args.preset != "appendix-h":
        raise bench.ConfigError(f"unknown preset {args.preset!r}")
    out_dir = _out_dir(args)
    base = synthetic_preset()
    cfg = {"preset": args.preset, "instance": base.to_dict(), "n_runs": args.n_runs,
           "master_seed": args.seed, "estimator": "uniform-tail", "hitting_rule": "sustained"}
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoRecoveryWithinHorizon)
        tune = bench.tune_eta_c(base, bench.grid_problems(base), n_runs=args.n_runs,
                                master_seed=args.seed)
        ta = bench.repro_table_alpha(base, tune["eta_c"], args.n_runs, args.seed)
        tb = bench.repro_table_B(base, tune["eta_c"], args.n_runs, args.seed)
    elapsed = time.perf_counter() - start
    feas = bench.flags_dict(base)
    for table in (ta, tb):
        meta = bench.artifact_meta(cfg, "repro-tables", table=table.name, tuning=tune,
                                   feasibility=feas)
        cols = (table.param, "LB", "tau_hat", "UB", table.scaled_name) + bench.TABLE_COLUMNS[4:]
        rows = [dict(r, **{table.scaled_name: r["tau_hat_scaled"]}) for r in table.rows]
        write_csv(out_dir / f"{table.name}.csv", cols, rows, meta)
    summary = {"tuning": tune,
               "alpha_spread": ta.scaled_spread(), "B_spread": tb.scaled_spread(),
               "alpha_above_lb": ta.above_lower_bound(), "B_above_lb": tb.above_lower_bound(),
               "table_alpha": ta.rows, "table_B": tb.rows}
    meta = bench.artifact_meta(cfg, "repro-tables", feasibility=feas)
    write_json(out_dir / "tables.json", meta, summary)
    if args.emit_plot_data:
        rows = [(t.name, i, t.rows[i][t.param], tt + 1, p, s)
                for t in (ta, tb) for i, est in enumerate(t.estimates)
                for tt, (p, s) in enumerate(zip(est.failure_curve, est.stderr_curve))]
        write_csv(out_dir / "tables_plot_data.csv",
                  ("table", "point_index", "value", "t", "p_fail", "stderr"), rows, meta)
    if args.plot:
        from . import plotting
        for t, xlabel in ((ta, "alpha"), (tb, "B")):
            xs = [r[t.param] for r in t.rows]
            plotting.scaling_table(out_dir / f"{t.name}.png", xs, [r["tau_hat"] for r in t.rows],
                                   [r["LB"] for r in t.rows], [r["UB"] for r in t.rows], xlabel)
    _say(args, f"c={tune['eta_c']:.4g}; spreads alpha {ta.scaled_spread():.3f}, "
               f"B {tb.scaled_spread():.3f}; {elapsed:.1f}s")
    return EXIT_OK


def cmd_schema(args) -> int:
    sys.stdout.write(dumps(bench.CONFIG_SCHEMA))
    return EXIT_OK


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    # usage errors exit 1; exit code 2 is reserved for the infeasibility gate
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ttarecovery",
                                 description="Recovery-time experiments for test-time adaptation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, plots=False):
        p.add_argument("--out-dir", default=None, help="output directory")
        p.add_argument("-q", "--quiet", action="store_true")
        if plots:
            p.add_argument("--emit-plot-data", action="store_true",
                           help="also write long-format CSV for plotting")
            p.add_argument("--plot", action="store_true",
                           help="also render PNG figures (needs matplotlib)")
        return p

    p = common(sub.add_parser("quantize", help="greedy shift quantization of a trajectory CSV"))
    p.add_argument("trajectory")
    p.add_argument("--delta-w", type=decimal_arg, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_quantize)

    p = common(sub.add_parser("calibrate-mixing", help="lag covariances vs. the mixing bound"))
    p.add_argument("--rho", type=decimal_arg, required=True)
    p.add_argument("--lags", type=int, required=True)
    p.add_argument("--sigma", type=decimal_arg, default=1.0)
    p.add_argument("--n-samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_calibrate_mixing)

    p = common(sub.add_parser("recover", help="Monte Carlo recovery time"), plots=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_recover)

    p = common(sub.add_parser("learnability", help="violation rate on a shifting stream"),
               plots=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_learnability)

    p = common(sub.add_parser("bounds", help="closed-form bounds and feasibility flags"))
    p.add_argument("--config", required=True)
    p.add_argument("--tau", type=decimal_arg, default=None)
    p.add_argument("--horizon-t", type=int, default=None)
    p.add_argument("--shifts", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bounds)

    p = common(sub.add_parser("repro-tables", help="reproduce the alpha and B tables"),
               plots=True)
    p.add_argument("--preset", default="appendix-h", choices=["appendix-h"])
    p.add_argument("--n-runs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_repro_tables)

    p = sub.add_parser("schema", help="print the JSON schema of experiment configs")
    p.set_defaults(func=cmd_schema)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BridgeInfeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (bench.ConfigError, BadParams, SingleStepViolation, NonInteriorError, InvalidEta,
            EtaTooLarge, ValueError, RuntimeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
