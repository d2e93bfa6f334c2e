"""Command-line front end: simulate / convergence / kickmap subcommands.

Every output file is accompanied by a JSON manifest with the fully
resolved parameter set, so any artifact can be reproduced bit-exactly.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__, analysis, dynamics, integrate, kickmap


def _parse_vector(s: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in s.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated vector: {s!r}")


def _parse_matrix(s: str) -> np.ndarray:
    flat = _parse_vector(s)
    n = int(round(len(flat) ** 0.5))
    if n * n != len(flat):
        raise argparse.ArgumentTypeError(
            f"matrix needs a square number of entries, got {len(flat)}"
        )
    return flat.reshape(n, n)


def _parse_eps_exps(s: str) -> list[int]:
    if ".." in s:
        lo, hi = s.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in s.split(",")]


def _resolve_model(args) -> dynamics.Model:
    if args.model == "pendulum":
        return dynamics.pendulum_model(alpha_pend=args.alpha_pend)
    if args.model == "affine_kick":
        A = _parse_matrix(args.A) if args.A else np.zeros((len(args.x0), len(args.x0)))
        c = (
            _parse_vector(args.c)
            if args.c
            else np.zeros(A.shape[0])
        )
        d = A.shape[0]
        eye = np.eye(d)
        # kick-only system: zero drift, identity diffusion
        return dynamics.affine_kick_model(
            A,
            c,
            base_drift=lambda x: np.zeros_like(np.asarray(x, float)),
            diffusion=lambda x: np.broadcast_to(
                eye, np.shape(np.asarray(x))[:-1] + (d, d)
            ),
            drift_jacobian=lambda x: np.zeros((d, d)),
            diffusion_constant=eye,
        )
    raise ValueError(f"unknown model {args.model!r}")


def _write_manifest(path: str, subcommand: str, params: dict, outputs, t0: float):
    manifest = {
        "subcommand": subcommand,
        "parameters": params,
        "outputs": list(outputs),
        "tool_version": __version__,
        "duration_seconds": time.time() - t0,
    }
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--model", default="pendulum", choices=["pendulum", "affine_kick"])
    p.add_argument("--alpha", type=float, default=1.0, help="impulse offset in (0,1]")
    p.add_argument("--alpha-pend", type=float, default=1.0,
                   help="pendulum stiffness constant")
    p.add_argument("--T", type=float, default=8.0, help="time horizon")
    p.add_argument("--dt-exp", type=int, default=12, metavar="M",
                   help="time step dt = 2^-M")
    p.add_argument("--x0", type=_parse_vector, default="0.5,0.5",
                   help="initial state, comma-separated")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="output CSV path (default stdout)")
    p.add_argument("--A", default=None, help="kick matrix, row-major comma-separated")
    p.add_argument("--c", default=None, help="kick offset vector")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impulsesim",
        description="Simulate impulsive dynamical systems under small noise "
        "and verify convergence rates.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_sim = sub.add_parser("simulate", help="one coupled trajectory as CSV")
    _add_common(p_sim)
    p_sim.add_argument("--eps", type=float, required=True, help="noise scale in (0,1)")
    p_sim.add_argument("--allow-degenerate", action="store_true",
                       help="permit eps=0 (noise-free check mode)")

    p_conv = sub.add_parser("convergence", help="Monte Carlo slope study as CSV")
    _add_common(p_conv)
    p_conv.add_argument("--paths", type=int, default=1000)
    p_conv.add_argument("--eps-exps", default="1..10",
                        help="exponents i for eps=2^-i, as 'lo..hi' or a comma list")
    p_conv.add_argument("--mode", default="both", choices=["lln", "clt", "both"])
    p_conv.add_argument("--preset", default=None, choices=["paper", "desk"],
                        help="paper: 1000 paths at dt=2^-12; desk: 200 paths at 2^-10")

    p_kick = sub.add_parser("kickmap", help="kick-map convergence error table as CSV")
    p_kick.add_argument("--A", required=True)
    p_kick.add_argument("--c", required=True)
    p_kick.add_argument("--r", required=True, help="starting point, comma-separated")
    p_kick.add_argument("--deltas", default="0.1,0.05,0.025,0.0125")
    p_kick.add_argument("--out", default=None)
    return parser


def _open_out(args):
    if args.out is None:
        return sys.stdout, None
    return open(args.out, "w", newline="\n"), args.out


def cmd_simulate(args) -> int:
    t0 = time.time()
    if args.eps == 0.0 and not args.allow_degenerate:
        raise ValueError("eps=0 requires --allow-degenerate")
    config = integrate.SimulationConfig(
        epsilon=args.eps, x0=args.x0, seed=args.seed, T=args.T,
        m=args.dt_exp, alpha=args.alpha, allow_degenerate=args.allow_degenerate,
    )
    model = _resolve_model(args)
    schedule = dynamics.ImpulseSchedule(alpha=config.alpha)
    grid = integrate.build_grid(config.T, config.m, schedule)
    det = integrate.integrate_deterministic(model, grid, args.x0)
    path = integrate.sample_brownian(grid, model.r, args.seed)
    noisy = integrate.integrate_sde(model, grid, args.x0, args.eps, path)
    fluct = integrate.integrate_fluctuation(model, grid, det, path)
    out, out_path = _open_out(args)
    try:
        integrate.write_trajectory_csv(out, det, noisy, fluct, args.eps)
    finally:
        if out_path:
            out.close()
    if out_path:
        _write_manifest(
            out_path + ".manifest.json",
            "simulate",
            {
                "model": args.model, "alpha": args.alpha,
                "alpha_pend": args.alpha_pend, "T": args.T,
                "dt_exp": args.dt_exp, "x0": list(args.x0),
                "eps": args.eps, "seed": args.seed,
                "allow_degenerate": args.allow_degenerate,
            },
            [out_path],
            t0,
        )
    return 0


def cmd_convergence(args) -> int:
    t0 = time.time()
    if args.preset == "paper":
        args.paths, args.dt_exp = 1000, 12
    elif args.preset == "desk":
        args.paths, args.dt_exp = 200, 10
    exps = _parse_eps_exps(args.eps_exps)
    model = _resolve_model(args)
    schedule = dynamics.ImpulseSchedule(alpha=args.alpha)
    grid = integrate.build_grid(args.T, args.dt_exp, schedule)
    report = analysis.run_convergence_study(
        model, schedule, grid, args.x0, exps, args.paths, args.seed,
        mode=args.mode, threads=args.threads,
    )
    out, out_path = _open_out(args)
    try:
        analysis.write_report_csv(report, out)
    finally:
        if out_path:
            out.close()
    print("slope_lln per coordinate:",
          " ".join(f"{s:.4f}" for s in report.slope_lln))
    print("slope_clt per coordinate:",
          " ".join(f"{s:.4f}" for s in report.slope_clt))
    if out_path:
        _write_manifest(
            out_path + ".manifest.json",
            "convergence",
            {
                "model": args.model, "alpha": args.alpha,
                "alpha_pend": args.alpha_pend, "T": args.T,
                "dt_exp": args.dt_exp, "x0": list(args.x0),
                "eps_exponents": exps, "paths": args.paths,
                "mode": args.mode, "seed": args.seed,
                "threads": args.threads, "preset": args.preset,
            },
            [out_path],
            t0,
        )
    return 0


def cmd_kickmap(args) -> int:
    A = _parse_matrix(args.A)
    c = _parse_vector(args.c)
    r = _parse_vector(args.r)
    deltas = [float(v) for v in args.deltas.split(",")]
    field = kickmap.KickField(
        g=lambda x: np.asarray(x, float) @ A.T + c,
        g_jacobian=lambda x: A,
    )
    closed, _ = kickmap.affine_kick_map(A, c)
    rows = kickmap.kick_limit_check(field, closed, r, deltas)
    out, out_path = _open_out(args)
    try:
        out.write("delta,substeps,error\n")
        for delta, substeps, err in rows:
            out.write(f"{delta:.17g},{substeps},{err:.17g}\n")
    finally:
        if out_path:
            out.close()
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if isinstance(getattr(args, "x0", None), str):
        args.x0 = _parse_vector(args.x0)
    handlers = {
        "simulate": cmd_simulate,
        "convergence": cmd_convergence,
        "kickmap": cmd_kickmap,
    }
    try:
        return handlers[args.subcommand](args)
    except (ValueError, argparse.ArgumentTypeError,
            integrate.IntegrationOverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
