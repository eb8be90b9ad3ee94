"""Batch command line: single runs, parameter sweeps, stationary solves, checks.

Exit codes: 0 success, 1 configuration or usage error, 2 time-step underflow,
3 stationary non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

import numpy as np
import yaml

from . import diagnostics, plots, snapshots
from .assembly import State
from .config import ConfigError, RunConfig
from .stationary import NoConvergence, residual_stationary, solve_stationary, stationary_from_state
from .stepper import StepTooSmall, mollify_initial, run


def _fail(msg, code=1):
    print(f"error: {msg}", file=sys.stderr)
    return code


def _run_id(cfg_dict, rp):
    blob = yaml.safe_dump(cfg_dict, sort_keys=True).encode()
    digest = hashlib.sha256(blob).hexdigest()[:10]
    return f"eps{rp.eps:.3e}_mu{rp.mu:.3e}_{digest}"


def execute_run(cfg: RunConfig, outdir, snapshot_every=None, render=True):
    """Build, mollify, march, and write every artifact of a single run."""
    spaces, mat, forms, rp, src, state, schedule = cfg.build()
    if snapshot_every is not None:
        schedule.snapshot_every = snapshot_every
    state.theta = mollify_initial(forms, state.theta, rp.eps)
    state.theta_s = mollify_initial(forms, state.theta_s, rp.eps, where="surface")

    os.makedirs(outdir, exist_ok=True)
    ledger = diagnostics.EnergyLedger(forms, mat, rp)
    ledger.data_norm = diagnostics.compute_data_norm(
        forms, mat, rp, src, state, schedule.t_end
    )
    sink = snapshots.SnapshotSink(outdir, rp, spaces)
    result = run(state, schedule, forms, mat, src, rp, sinks=(sink,), ledger=ledger)

    snapshots.write_ledger_csv(os.path.join(outdir, "ledger.csv"), result.ledger)
    snapshots.atomic_write(os.path.join(outdir, "config_normalized.yaml"), cfg.emit())

    terminal = result.state
    stat = stationary_from_state(terminal, forms, mat, rp)
    f_inf = src.load_dual(schedule.t_end, forms)
    stat_res = residual_stationary(stat, forms, mat, f_inf, rp)
    final_row = result.ledger.rows[-1]
    eq = result.equilibrium
    summary = {
        "run_id": _run_id(cfg.normalized(), rp),
        "params": {"eps": rp.eps, "mu": rp.mu},
        "equilibrium": bool(eq.equilibrium) if eq is not None else False,
        "theta_bar_estimate": stat.theta_bar,
        "final_norms": {name: final_row[name] for name in diagnostics.INDICATOR_NAMES},
        "mean_temperature_gap": diagnostics.mean_temperature_gap(terminal, forms),
        "stationary_residual": stat_res,
        "data_norm": ledger.data_norm,
        "status": result.status,
        "wall_time_s": result.wall_time_s,
    }
    snapshots.write_json(os.path.join(outdir, "summary.json"), summary)
    if render:
        plots.render_run_figures(outdir, result.ledger, terminal, spaces)
    return result, summary, (spaces, mat, forms, rp, src, schedule)


def cmd_run(args):
    try:
        cfg = RunConfig.load(args.config)
    except ConfigError as exc:
        return _fail(str(exc))
    except (OSError, yaml.YAMLError) as exc:
        return _fail(f"cannot load config: {exc}")
    outdir = args.out or cfg.normalized()["output"]["dir"]
    try:
        result, summary, _ = execute_run(cfg, outdir, snapshot_every=args.snapshot_every)
    except StepTooSmall as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 2
    print(f"run {summary['run_id']} finished: t_end status={summary['status']} "
          f"equilibrium={summary['equilibrium']} out={outdir}")
    return 0


def _sweep_worker(payload):
    (cfg_dict, eps, mu, outdir) = payload
    cfg_dict = dict(cfg_dict)
    cfg_dict["regularization"] = {"eps": eps, "mu": mu}
    cfg = RunConfig.from_dict(cfg_dict)
    try:
        result, summary, ctx = execute_run(cfg, outdir, render=False)
    except StepTooSmall as exc:
        return {"eps": eps, "mu": mu, "outdir": outdir, "ok": False, "error": str(exc)}
    spaces, mat, forms, rp, src, schedule = ctx
    final = result.state
    snapshots.write_snapshot(
        os.path.join(outdir, "final.txt"), final, result.ledger.rows[-1]["t"],
        result.ledger.rows[-1]["dt"], rp, spaces,
    )
    return {"eps": eps, "mu": mu, "outdir": outdir, "ok": True, "summary": summary}


def _load_final_state(outdir):
    data = snapshots.read_snapshot(os.path.join(outdir, "final.txt"))
    return State(
        theta=data["theta"], theta_s=data["theta_s"], u=data["u"], chi=data["chi"]
    )


def cmd_sweep(args):
    try:
        cfg = RunConfig.load(args.config)
    except ConfigError as exc:
        return _fail(str(exc))
    except (OSError, yaml.YAMLError) as exc:
        return _fail(f"cannot load config: {exc}")
    base = cfg.normalized()
    eps_list = [float(v) for v in (args.eps or base["regularization"].get("eps_list", []))]
    mu_list = [float(v) for v in (args.mu or base["regularization"].get("mu_list", []))]
    if not eps_list:
        eps_list = [float(base["regularization"]["eps"])]
    if not mu_list:
        mu_list = [float(base["regularization"]["mu"])]
    outdir = args.out or base["output"]["dir"]
    os.makedirs(outdir, exist_ok=True)

    jobs = []
    for eps in eps_list:
        for mu in mu_list:
            rundir = os.path.join(outdir, f"run_eps{eps:.3e}_mu{mu:.3e}")
            jobs.append((base, eps, mu, rundir))

    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]

    failures = [r for r in results if not r["ok"]]
    ok = {(r["eps"], r["mu"]): r for r in results if r["ok"]}

    # distance chains: down each eps list at fixed mu, and down each mu list
    spaces, mat, forms, rp, src, state, schedule = cfg.build()
    chains = {}
    rows = []
    for mu in mu_list:
        cols = sorted([e for e in eps_list if (e, mu) in ok], reverse=True)
        if len(cols) >= 2:
            finals = [_load_final_state(ok[(e, mu)]["outdir"]) for e in cols]
            dists = [
                diagnostics.state_distance(finals[i], finals[i + 1], forms)
                for i in range(len(finals) - 1)
            ]
            chains[f"eps chain (mu={mu:g})"] = (cols, dists)
            for e, d in zip(cols[1:], dists):
                rows.append({"chain": f"eps@mu={mu:g}", "param": e, "distance": d})
    for eps in eps_list:
        cols = sorted([m for m in mu_list if (eps, m) in ok], reverse=True)
        if len(cols) >= 2:
            finals = [_load_final_state(ok[(eps, m)]["outdir"]) for m in cols]
            dists = [
                diagnostics.state_distance(finals[i], finals[i + 1], forms)
                for i in range(len(finals) - 1)
            ]
            chains[f"mu chain (eps={eps:g})"] = (cols, dists)
            for m, d in zip(cols[1:], dists):
                rows.append({"chain": f"mu@eps={eps:g}", "param": m, "distance": d})

    lines = ["chain,param,distance"]
    for r in rows:
        lines.append(f"{r['chain']},{r['param']!r},{r['distance']!r}")
    snapshots.atomic_write(os.path.join(outdir, "sweep_table.csv"), "\n".join(lines) + "\n")
    snapshots.write_json(
        os.path.join(outdir, "sweep_summary.json"),
        {
            "runs": [
                {k: r[k] for k in ("eps", "mu", "ok")} | {"outdir": os.path.basename(r["outdir"])}
                for r in results
            ],
            "chains": {k: {"params": v[0], "distances": v[1]} for k, v in chains.items()},
        },
    )
    plots.render_sweep_figure(outdir, chains)
    for r in rows:
        print(f"{r['chain']}: param={r['param']:g} distance={r['distance']:.6e}")
    if failures:
        for f in failures:
            print(f"failed: eps={f['eps']:g} mu={f['mu']:g}: {f['error']}", file=sys.stderr)
        return 1
    return 0


def cmd_stationary(args):
    try:
        cfg = RunConfig.load(args.config)
    except ConfigError as exc:
        return _fail(str(exc))
    except (OSError, yaml.YAMLError) as exc:
        return _fail(f"cannot load config: {exc}")
    spaces, mat, forms, rp, src, state, schedule = cfg.build()
    outdir = args.out or cfg.normalized()["output"]["dir"]
    os.makedirs(outdir, exist_ok=True)

    theta_bar = args.theta_bar
    init = None
    if args.from_snapshot:
        data = snapshots.read_snapshot(args.from_snapshot)
        est = State(theta=data["theta"], theta_s=data["theta_s"], u=data["u"], chi=data["chi"])
        packaged = stationary_from_state(est, forms, mat, rp)
        if theta_bar is None:
            theta_bar = packaged.theta_bar
        init = (est.u, est.chi)
    if theta_bar is None:
        theta_bar = cfg.normalized().get("stationary", {}).get("theta_bar")
    if theta_bar is None:
        return _fail("theta_bar is required (flag --theta-bar, config stationary.theta_bar, "
                     "or --from-snapshot)")

    f_inf = src.load_dual(schedule.t_end, forms)
    rng = np.random.default_rng(args.seed)
    stat = None
    for attempt in range(1 + args.restarts):
        try:
            guess = init
            if attempt > 0:
                guess = (
                    spaces.apply_constraints(rng.normal(0.0, 0.2, 2 * spaces.n_scalar)),
                    rng.normal(0.5, 0.5, spaces.n_surface),
                )
            stat = solve_stationary(forms, mat, f_inf, float(theta_bar), rp, init=guess)
            break
        except NoConvergence:
            continue
    if stat is None:
        print("stationary solve failed after restarts", file=sys.stderr)
        return 3

    res = residual_stationary(stat, forms, mat, f_inf, rp)
    final = State(
        theta=np.full(spaces.n_scalar, stat.theta_bar),
        theta_s=np.full(spaces.n_surface, stat.theta_bar),
        u=stat.u_inf,
        chi=stat.chi_inf,
        xi=stat.xi_inf,
        zeta=stat.zeta_inf,
        eta_density=stat.eta_density_inf,
    )
    snapshots.write_snapshot(
        os.path.join(outdir, "stationary.txt"), final, float("inf"), 0.0, rp, spaces
    )
    snapshots.write_json(
        os.path.join(outdir, "stationary_report.json"),
        {
            "theta_bar": stat.theta_bar,
            "residual": res,
            "chi_min": float(np.min(stat.chi_inf)),
            "chi_max": float(np.max(stat.chi_inf)),
        },
    )
    print(f"stationary solve done: residual={res:.3e} out={outdir}")
    return 0


def cmd_verify(args):
    from .verify import SUITES, run_suite

    if args.suite not in SUITES:
        return _fail(f"unknown suite '{args.suite}' (choose from {', '.join(sorted(SUITES))})")
    return run_suite(args.suite)


def build_parser():
    parser = argparse.ArgumentParser(prog="adhesim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a single simulation")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--snapshot-every", type=int, default=None, metavar="K")
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="parameter study over eps and/or mu")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--eps", type=float, nargs="*", default=None)
    p_sweep.add_argument("--mu", type=float, nargs="*", default=None)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_stat = sub.add_parser("stationary", help="solve the equilibrium system")
    p_stat.add_argument("--config", required=True)
    p_stat.add_argument("--out", default=None)
    p_stat.add_argument("--theta-bar", type=float, default=None)
    p_stat.add_argument("--from-snapshot", default=None)
    p_stat.add_argument("--seed", type=int, default=0)
    p_stat.add_argument("--restarts", type=int, default=8)
    p_stat.set_defaults(fn=cmd_stationary)

    p_ver = sub.add_parser("verify", help="run an acceptance sub-suite")
    p_ver.add_argument("suite")
    p_ver.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
