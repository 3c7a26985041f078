"""Command-line entry point.

Subcommands: mesh gen, simulate, make-dataset, train, eval-offline,
run-sync-avoid, bench, metrics, sweep-ns.  Every run writes a metadata record
(config hash, seed, library versions) next to its primary output.  Errors
leave one machine-parseable line on stderr and a nonzero exit code.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import comm, evaluate, fem, integrator, metrics as metrics_mod
from . import sampling, syncavoid, training
from .config import RunConfig, parse_config, write_metadata
from .mesh import generate_beam_mesh, read_mesh, write_mesh
from .nn import load_model, save_model
from .partition import partition_mesh

logger = logging.getLogger("elastosync")


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_config(path)


def _apply_comm_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "cores", None) is not None:
        cfg.cores = args.cores
    if getattr(args, "latency_us", None) is not None:
        cfg.latency_us = args.latency_us
    if getattr(args, "mode", None) is not None:
        cfg.mode = args.mode
    return cfg


def _metadata_path(out: str) -> Path:
    p = Path(out)
    return p.with_name(p.name + ".meta.json")


def _cmd_mesh_gen(args) -> int:
    mesh = generate_beam_mesh(args.L, args.W, args.H, args.nx, args.ny, args.nz)
    write_mesh(mesh, args.out)
    write_metadata(_metadata_path(args.out), RunConfig(), "mesh gen",
                   {"n_nodes": mesh.n_nodes, "n_elems": mesh.n_elems})
    logger.info("wrote %s: %d nodes, %d tets", args.out, mesh.n_nodes,
                mesh.n_elems)
    return 0


def _cmd_simulate(args) -> int:
    cfg = _apply_comm_overrides(_load_config(args.config), args)
    mesh = read_mesh(args.mesh)
    mat = cfg.material()
    load = cfg.load_spec()
    n_T = args.steps if args.steps else cfg.n_T
    rho_hat = None
    if cfg.beta > 1.0:
        scaling = fem.mass_scale(mesh, mat, cfg.beta, cfg.alpha_s)
        rho_hat = scaling.rho_hat
        logger.info("mass scaling: dt_hat=%.3e, R_m=%.2f%%", scaling.dt_hat,
                    scaling.mass_increase_pct)
        dt = cfg.dt if cfg.dt > 0 else scaling.dt_hat
    else:
        dt = cfg.time_step(mesh)
    if cfg.cores == 1:
        traj = integrator.serial_solve(mesh, mat, load, dt, n_T, rho_hat=rho_hat)
    else:
        part = partition_mesh(mesh, cfg.cores)
        traj, timings = comm.distributed_solve(
            mesh, part, mat, load, dt, n_T, mode=cfg.solver_mode(),
            latency_s=cfg.latency_us * 1e-6, rho_hat=rho_hat)
        if args.timing_out:
            comm.write_timing_csv(args.timing_out, timings)
    integrator.write_trajectory(args.out, traj, dt)
    write_metadata(_metadata_path(args.out), cfg, "simulate",
                   {"n_T": n_T, "dt": dt, "mesh": str(args.mesh)})
    logger.info("wrote %s: %d steps at dt=%.3e", args.out, n_T, dt)
    return 0


def _cmd_make_dataset(args) -> int:
    cfg = _load_config(args.config)
    mesh = read_mesh(args.mesh)
    part = partition_mesh(mesh, cfg.cores)
    traj, _ = integrator.read_trajectory(args.traj)
    ds = sampling.build_dataset(
        traj, part.shared_dofs(args.rank), cfg.sample_config(),
        alpha_f=args.alpha_f)
    sampling.write_dataset(ds, args.out)
    write_metadata(_metadata_path(args.out), cfg, "make-dataset",
                   {"rank": args.rank, "n_windows": ds.n_windows})
    logger.info("wrote %s: %d windows x %d dofs", args.out, ds.n_windows,
                ds.n_dof)
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args.config)
    ds = sampling.read_dataset(args.data)
    shift, scale = sampling.normalization_stats(ds)
    from .nn import init_encdec

    params = init_encdec(
        n_dof=ds.n_dof, n_hidden=cfg.n_H, k=cfg.k,
        conditional=bool(cfg.conditional), n_rep=cfg.n_rep,
        seed=cfg.seed + args.rank, norm_shift=shift, norm_scale=scale,
        n_p=ds.X.shape[2], n_f=ds.Y.shape[2], n_s=cfg.n_s)
    history = training.train_model(ds, params, cfg.train_config(args.rank),
                                   log_every=args.log_every)
    save_model(params, args.out_model)
    write_metadata(_metadata_path(args.out_model), cfg, "train",
                   {"rank": args.rank, "final_loss": history[-1],
                    "epochs": len(history)})
    logger.info("wrote %s: final loss %.3e after %d epochs", args.out_model,
                history[-1], len(history))
    return 0


def _cmd_eval_offline(args) -> int:
    cfg = _load_config(args.config)
    model = load_model(args.model)
    traj, _ = integrator.read_trajectory(args.traj)
    sample = sampling.SampleConfig(n_s=model.n_s, n_p=model.n_p,
                                   n_f=model.n_f, n_ts=cfg.n_ts)
    if model.shared_dofs is None:
        raise ValueError("model artifact does not record its shared dofs")
    n_sampled = len(range(0, traj.shape[0], sample.n_s))
    start = args.start if args.start else max(
        sample.n_p, n_sampled - args.N * sample.n_f)
    value = evaluate.e_mse(model, traj, model.shared_dofs, start, args.N,
                           sample, alpha_f=args.alpha_f)
    print(f"sqrt_e_mse = {np.sqrt(value):.6e} (N={args.N}, start={start})")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(f"{np.sqrt(value)!r}\n")
        write_metadata(_metadata_path(args.out), cfg, "eval-offline",
                       {"N": args.N, "start": start})
    return 0


def _cmd_run_sync_avoid(args) -> int:
    cfg = _apply_comm_overrides(_load_config(args.config), args)
    mesh = read_mesh(args.mesh)
    part = partition_mesh(mesh, cfg.cores)
    models = [load_model(Path(args.models_dir) / f"model_rank{r}.json")
              for r in range(cfg.cores)]
    mat = cfg.material()
    load = cfg.load_spec(args.alpha_f)
    dt = cfg.time_step(mesh)
    sample = sampling.SampleConfig(n_s=models[0].n_s, n_p=models[0].n_p,
                                   n_f=models[0].n_f, n_ts=cfg.n_ts)
    sa_cfg = syncavoid.SyncAvoidConfig(
        n_cri=cfg.n_cri if cfg.n_cri else sample.n_p * sample.n_s + 1,
        sample=sample)
    result = syncavoid.sync_avoiding_solve(
        mesh, part, mat, load, dt, cfg.n_T, models, sa_cfg,
        mode=cfg.solver_mode(), latency_s=cfg.latency_us * 1e-6)
    integrator.write_trajectory(args.out, result.trajectory, dt)
    if args.timing_out:
        comm.write_timing_csv(args.timing_out, result.timings)
    if args.metrics_out:
        if args.true_traj:
            truth, _ = integrator.read_trajectory(args.true_traj)
        else:
            # Online monitoring without a reference: compare the paired
            # predictions only; truth-based columns are reported against the
            # run's own gathered values (zero by construction).
            truth = result.trajectory
        m = metrics_mod.error_metrics(truth, result.trajectory, part,
                                      result.rank_shared_series,
                                      result.shared_dofs)
        metrics_mod.write_metrics_csv(args.metrics_out, m)
        logger.info("es_bar/es_hat correlation: %.4f", m.correlation_bar_hat())
    write_metadata(_metadata_path(args.out), cfg, "run-sync-avoid",
                   {"n_cri": sa_cfg.n_cri, "dt": dt, "n_T": cfg.n_T})
    return 0


def _cmd_bench(args) -> int:
    cfg = _apply_comm_overrides(_load_config(args.config), args)
    mesh = read_mesh(args.mesh)
    part = partition_mesh(mesh, cfg.cores)
    mat = cfg.material()
    load = cfg.load_spec()
    dt = cfg.time_step(mesh)
    n_shared = len(part.all_shared_nodes())

    def run_baseline():
        _, timings = comm.distributed_solve(
            mesh, part, mat, load, dt, cfg.n_T, mode=cfg.solver_mode(),
            latency_s=cfg.latency_us * 1e-6)
        return bench_mod.max_average(timings, n_shared)

    summaries = {}
    baselines = [run_baseline() for _ in range(args.repeat)]
    summaries["baseline"] = baselines[
        int(np.argsort([s.t_t for s in baselines])[len(baselines) // 2])]
    zeta = None
    if args.models_dir:
        models = [load_model(Path(args.models_dir) / f"model_rank{r}.json")
                  for r in range(cfg.cores)]
        sample = sampling.SampleConfig(n_s=models[0].n_s, n_p=models[0].n_p,
                                       n_f=models[0].n_f, n_ts=cfg.n_ts)
        sa_cfg = syncavoid.SyncAvoidConfig(
            n_cri=cfg.n_cri if cfg.n_cri else sample.n_p * sample.n_s + 1,
            sample=sample)

        def run_accel():
            result = syncavoid.sync_avoiding_solve(
                mesh, part, mat, load, dt, cfg.n_T, models, sa_cfg,
                mode=cfg.solver_mode(), latency_s=cfg.latency_us * 1e-6)
            return bench_mod.max_average(result.timings, n_shared)

        accels = [run_accel() for _ in range(args.repeat)]
        summaries["sync_avoiding"] = accels[
            int(np.argsort([s.t_t for s in accels])[len(accels) // 2])]
        zeta = bench_mod.speedup(summaries["baseline"],
                                 summaries["sync_avoiding"])
    out = Path(args.out)
    doc = {label: s.as_json() for label, s in summaries.items()}
    with open(out.with_suffix(".json"), "w") as fh:
        fh.write("{\n")
        fh.write(",\n".join(f'"{label}": {text}' for label, text in doc.items()))
        if zeta is not None:
            fh.write(f',\n"speedup": {zeta!r}')
        fh.write("\n}\n")
    bench_mod.write_summary_csv(out.with_suffix(".csv"), summaries, zeta)
    write_metadata(_metadata_path(str(out)), cfg, "bench",
                   {"repeat": args.repeat})
    if zeta is not None:
        print(f"speedup = {zeta:.3f}")
    return 0


def _cmd_metrics(args) -> int:
    cfg = _load_config(args.config)
    mesh = read_mesh(args.mesh)
    part = partition_mesh(mesh, cfg.cores)
    truth, _ = integrator.read_trajectory(args.true)
    pred, _ = integrator.read_trajectory(args.pred)
    m = metrics_mod.error_metrics(truth, pred, part)
    metrics_mod.write_metrics_csv(args.out, m)
    write_metadata(_metadata_path(args.out), cfg, "metrics", {})
    return 0


def _cmd_sweep_ns(args) -> int:
    cfg = _load_config(args.config)
    mesh = read_mesh(args.mesh)
    part = partition_mesh(mesh, cfg.cores)
    traj, _ = integrator.read_trajectory(args.traj)
    ns_values = [int(v) for v in args.ns.split(",")]
    rank = args.rank
    shared = part.shared_dofs(rank)
    rows = []
    for n_s in ns_values:
        sample = sampling.SampleConfig(n_s=n_s, n_p=cfg.n_p, n_f=cfg.n_f,
                                       n_ts=cfg.n_ts)
        ds = sampling.build_dataset(traj, shared, sample)
        shift, scale = sampling.normalization_stats(ds)
        from .nn import init_encdec

        params = init_encdec(n_dof=ds.n_dof, n_hidden=cfg.n_H, k=cfg.k,
                             seed=cfg.seed + rank, norm_shift=shift,
                             norm_scale=scale, n_p=cfg.n_p, n_f=cfg.n_f,
                             n_s=n_s)
        training.train_model(ds, params, cfg.train_config(rank))
        n_sampled = len(range(0, traj.shape[0], n_s))
        start = max(cfg.n_p, n_sampled - args.N * cfg.n_f)
        value = evaluate.e_mse(params, traj, shared, start, args.N, sample)
        rows.append((n_s, float(np.sqrt(value))))
        logger.info("n_s=%d: sqrt_e_mse=%.3e", n_s, rows[-1][1])
    with open(args.out, "w") as fh:
        fh.write("n_s,sqrt_e_mse\n")
        for n_s, val in rows:
            fh.write(f"{n_s},{val!r}\n")
    write_metadata(_metadata_path(args.out), cfg, "sweep-ns",
                   {"ns": ns_values, "N": args.N})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elastosync",
        description="Distributed explicit elastodynamics with learned "
                    "synchronization avoidance")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_mesh = sub.add_parser("mesh", help="mesh utilities")
    mesh_sub = p_mesh.add_subparsers(dest="mesh_command", required=True)
    p_gen = mesh_sub.add_parser("gen", help="generate a cantilever beam mesh")
    p_gen.add_argument("--L", type=float, default=25.0)
    p_gen.add_argument("--W", type=float, default=1.0)
    p_gen.add_argument("--H", type=float, default=1.0)
    p_gen.add_argument("--nx", type=int, required=True)
    p_gen.add_argument("--ny", type=int, required=True)
    p_gen.add_argument("--nz", type=int, required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=_cmd_mesh_gen)

    def add_comm_flags(p):
        p.add_argument("--cores", type=int, help="override config cores")
        p.add_argument("--latency-us", type=float, dest="latency_us",
                       help="inject artificial sync latency [us]")
        p.add_argument("--mode", choices=("pre", "nopre"),
                       help="pre-assembled or per-step element assembly")

    p_sim = sub.add_parser("simulate", help="run the synchronized solver")
    p_sim.add_argument("--mesh", required=True)
    p_sim.add_argument("--config")
    p_sim.add_argument("--steps", type=int, default=0,
                       help="override config n_T")
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--timing-out", dest="timing_out")
    add_comm_flags(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_ds = sub.add_parser("make-dataset",
                          help="cut a trajectory into training windows")
    p_ds.add_argument("--traj", required=True)
    p_ds.add_argument("--mesh", required=True)
    p_ds.add_argument("--config")
    p_ds.add_argument("--rank", type=int, default=0)
    p_ds.add_argument("--alpha-f", type=float, dest="alpha_f")
    p_ds.add_argument("--out", required=True)
    p_ds.set_defaults(func=_cmd_make_dataset)

    p_train = sub.add_parser("train", help="train one rank's surrogate")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--config")
    p_train.add_argument("--rank", type=int, default=0)
    p_train.add_argument("--log-every", type=int, default=0)
    p_train.add_argument("--out-model", required=True, dest="out_model")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval-offline",
                            help="recursive accuracy of a trained model")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--traj", required=True)
    p_eval.add_argument("--config")
    p_eval.add_argument("--N", type=int, default=60)
    p_eval.add_argument("--start", type=int, default=0,
                        help="subsampled start index (default: last N*n_f window)")
    p_eval.add_argument("--alpha-f", type=float, dest="alpha_f")
    p_eval.add_argument("--out")
    p_eval.set_defaults(func=_cmd_eval_offline)

    p_run = sub.add_parser("run-sync-avoid",
                           help="switched solver with per-rank surrogates")
    p_run.add_argument("--mesh", required=True)
    p_run.add_argument("--models-dir", required=True, dest="models_dir")
    p_run.add_argument("--config")
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--timing-out", dest="timing_out")
    p_run.add_argument("--metrics-out", dest="metrics_out")
    p_run.add_argument("--true-traj", dest="true_traj")
    p_run.add_argument("--alpha-f", type=float, dest="alpha_f")
    add_comm_flags(p_run)
    p_run.set_defaults(func=_cmd_run_sync_avoid)

    p_bench = sub.add_parser("bench", help="max-average performance summary")
    p_bench.add_argument("--mesh", required=True)
    p_bench.add_argument("--config")
    p_bench.add_argument("--models-dir", dest="models_dir")
    p_bench.add_argument("--repeat", type=int, default=1)
    p_bench.add_argument("--out", required=True)
    add_comm_flags(p_bench)
    p_bench.set_defaults(func=_cmd_bench)

    p_met = sub.add_parser("metrics", help="error metrics between trajectories")
    p_met.add_argument("--true", required=True)
    p_met.add_argument("--pred", required=True)
    p_met.add_argument("--mesh", required=True)
    p_met.add_argument("--config")
    p_met.add_argument("--out", required=True)
    p_met.set_defaults(func=_cmd_metrics)

    p_sweep = sub.add_parser("sweep-ns",
                             help="train quick models across sampling strides")
    p_sweep.add_argument("--traj", required=True)
    p_sweep.add_argument("--mesh", required=True)
    p_sweep.add_argument("--config")
    p_sweep.add_argument("--ns", required=True,
                         help="comma-separated stride list, e.g. 20,40,80")
    p_sweep.add_argument("--rank", type=int, default=0)
    p_sweep.add_argument("--N", type=int, default=10)
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=_cmd_sweep_ns)

    return parser


def dispatch(argv: list[str] | None = None) -> int:
    """Parse and run; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 single-line diagnostics by contract
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())
