"""Command-line interface.

Subcommands: solve (single instance), sweep (Monte-Carlo grid from a JSON
config), snapshot (per-user SNR table of one realization), oracle (random
sampling bound), verify (re-check the optimality residuals of a saved
solution).  Exit codes: 0 success, 1 usage error, 2 input-file error,
3 sweep completed with recorded failures.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .channels import (ChannelSet, ChannelFormatError, ChannelValidationError,
                       generate_iid, load_channels, save_channels)
from .solver import (SolverConfig, Precoder, DualSolution, kkt_residuals,
                     update_beta, solve, solve_multistart)
from .baselines import OracleConfig, random_sampling_oracle
from .bench import SweepConfig, sweep_config_from_dict, run_sweep, db_to_linear
from . import report as report_mod

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_SWEEP_FAILURES = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class InputError(Exception):
    pass


def _complex_pairs(vec) -> list:
    return [[float(x.real), float(x.imag)] for x in np.asarray(vec)]


def _pairs_complex(pairs) -> np.ndarray:
    return np.array([complex(re, im) for re, im in pairs], dtype=np.complex128)


def _load_instance(args) -> ChannelSet:
    if args.channels is not None:
        try:
            return load_channels(args.channels)
        except FileNotFoundError as e:
            raise InputError(f"channel file not found: {args.channels}") from e
        except (ChannelFormatError, ChannelValidationError) as e:
            raise InputError(f"bad channel file {args.channels}: {e}") from e
    if args.seed is None or args.m is None or args.k is None:
        raise InputError("provide either --channels FILE or all of --seed/--m/--k")
    return generate_iid(args.seed, args.m, args.k, args.variance)


def _add_instance_args(p):
    p.add_argument("--channels", help="channel file (JSON)")
    p.add_argument("--seed", type=int, help="generator seed")
    p.add_argument("--m", type=int, help="antenna count")
    p.add_argument("--k", type=int, help="user count")
    p.add_argument("--variance", type=float, default=1.0, help="per-entry channel variance")
    p.add_argument("--pt-db", type=float, default=10.0, help="transmit power [dB]")


def _add_solver_args(p):
    p.add_argument("--outer-tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--init", default="sum-of-channels",
                   choices=["sum-of-channels", "principal-eigenvector"])
    p.add_argument("--inner-update", default="auto", choices=["auto", "active-set"])
    p.add_argument("--collinear-tol", type=float, default=1e-9)
    p.add_argument("--multistart", type=int, default=0, metavar="N",
                   help="run N extra random starts and keep the best result")


def _solver_config(args) -> SolverConfig:
    return SolverConfig(outer_tol=args.outer_tol, max_outer_iters=args.max_iters,
                        init_strategy=args.init, inner_update=args.inner_update,
                        collinear_tol=args.collinear_tol)


def _solution_payload(channels, pt, result, beta) -> dict:
    rep = result.report
    cols = [_complex_pairs(channels.H[:, k]) for k in range(channels.K)]
    return {
        "pt": pt,
        "channels": {"M": channels.M, "K": channels.K, "columns": cols},
        "w": _complex_pairs(result.precoder.w),
        "lam": [float(x) for x in result.dual.lam],
        "mu": result.dual.mu,
        "zeta": result.dual.zeta,
        "z": result.dual.z,
        "eta": result.dual.eta,
        "active": list(result.dual.active),
        "beta": _complex_pairs(beta),
        "report": {
            "min_snr": rep.min_snr,
            "per_user_snr": [float(x) for x in rep.per_user_snr],
            "balanced": rep.balanced,
            "rank_case": rep.rank_case,
            "certified": rep.certified,
            "converged": rep.converged,
            "iters": rep.iters,
            "dropped_users": list(rep.dropped_users),
            "kkt": rep.kkt.as_dict(),
        },
    }


def _print_solution(result, pt_db):
    rep = result.report
    print(f"pt: {pt_db:g} dB  min-SNR: {rep.min_snr:.10g}")
    print("per-user SNR: " + "  ".join(f"{x:.10g}" for x in rep.per_user_snr))
    print("lambda:       " + "  ".join(f"{x:.10g}" for x in result.dual.lam))
    print(f"z: {result.dual.z:.10g}  mu: {result.dual.mu:.3e}  zeta: {result.dual.zeta:.6g}")
    print(f"rank case: {rep.rank_case}  balanced: {rep.balanced}  "
          f"certified: {rep.certified}  converged: {rep.converged}  iters: {rep.iters}")
    if rep.dropped_users:
        print(f"inactive users (zero weight): {rep.dropped_users}")
    kk = rep.kkt.as_dict()
    print("kkt residuals: " + "  ".join(f"{k}={v:.3e}" for k, v in kk.items()))


def _cmd_solve(args) -> int:
    channels = _load_instance(args)
    pt = db_to_linear(args.pt_db)
    cfg = _solver_config(args)
    if args.multistart > 0:
        result = solve_multistart(channels, pt, cfg, n_random=args.multistart)
    else:
        result = solve(channels, pt, cfg)
    beta = update_beta(result.precoder, channels)
    if args.json:
        print(json.dumps(_solution_payload(channels, pt, result, beta), indent=2))
    else:
        _print_solution(result, args.pt_db)
    if args.save_solution:
        with open(args.save_solution, "w") as f:
            json.dump(_solution_payload(channels, pt, result, beta), f, indent=2)
            f.write("\n")
        print(f"solution written to {args.save_solution}")
    if args.save_channels:
        save_channels(channels, args.save_channels)
        print(f"channels written to {args.save_channels}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    try:
        with open(args.config) as f:
            payload = json.load(f)
    except FileNotFoundError:
        raise InputError(f"sweep config not found: {args.config}")
    except json.JSONDecodeError as e:
        raise InputError(f"bad sweep config {args.config}: {e}")
    try:
        cfg = sweep_config_from_dict(payload)
    except (TypeError, ValueError) as e:
        raise InputError(f"bad sweep config {args.config}: {e}")
    result = run_sweep(cfg, n_workers=args.workers)

    outputs = dict(cfg.outputs)
    if args.outdir is not None:
        import os
        os.makedirs(args.outdir, exist_ok=True)
        outputs = {"csv": os.path.join(args.outdir, "sweep.csv"),
                   "json": os.path.join(args.outdir, "sweep.json"),
                   "svg": os.path.join(args.outdir, "sweep.svg")}
    for fmt in ("csv", "json", "svg"):
        if fmt in outputs and outputs[fmt]:
            if fmt == "svg":
                report_mod.render_sweep_svg(result, outputs[fmt], db_scale=args.db_scale)
            else:
                report_mod.emit(result, fmt, outputs[fmt])
            print(f"{fmt}: {outputs[fmt]}")
    n_failed = len(result.failed_records())
    if n_failed:
        print(f"sweep finished with {n_failed} failed records", file=sys.stderr)
        return EXIT_SWEEP_FAILURES
    return EXIT_OK


def _cmd_snapshot(args) -> int:
    channels = _load_instance(args)
    cfg = SweepConfig(M=channels.M, K=channels.K, pt_grid_db=(args.pt_db,),
                      n_realizations=1, master_seed=0,
                      solver=_solver_config(args))
    table = _snapshot_from_channels(channels, args, cfg)
    csv_text = report_mod.snapshot_csv(table)
    out_csv = f"{args.out}.csv"
    with open(out_csv, "w", newline="") as f:
        f.write(csv_text)
    print(f"csv: {out_csv}")
    if args.svg:
        out_svg = f"{args.out}.svg"
        report_mod.render_snapshot_svg(table, out_svg)
        print(f"svg: {out_svg}")
    return EXIT_OK


def _snapshot_from_channels(channels, args, cfg):
    from .bench import SnapshotTable, _run_method
    pt = db_to_linear(args.pt_db)
    snrs = {}
    for method in cfg.methods():
        fields = _run_method(method, channels, pt, cfg)
        snrs[method] = fields["per_user_snr"]
    return SnapshotTable(pt_db=args.pt_db, realization=0, K=channels.K,
                         methods=tuple(cfg.methods()), snrs=snrs)


def _cmd_oracle(args) -> int:
    channels = _load_instance(args)
    pt = db_to_linear(args.pt_db)
    cfg = OracleConfig(n_samples=args.samples, seed=args.oracle_seed,
                       refine=not args.no_refine)
    prec, value = random_sampling_oracle(channels, pt, cfg)
    print(f"oracle min-SNR: {value:.10g}  (n_samples={args.samples}, "
          f"refine={not args.no_refine})")
    print("w: " + "  ".join(f"{x.real:+.6g}{x.imag:+.6g}j" for x in prec.w))
    return EXIT_OK


def _cmd_verify(args) -> int:
    try:
        with open(args.solution) as f:
            payload = json.load(f)
    except FileNotFoundError:
        raise InputError(f"solution file not found: {args.solution}")
    except json.JSONDecodeError as e:
        raise InputError(f"bad solution file {args.solution}: {e}")
    try:
        ch = payload["channels"]
        H = np.column_stack([_pairs_complex(col) for col in ch["columns"]])
        channels = ChannelSet(H=H, source=f"file:{args.solution}")
        pt = float(payload["pt"])
        prec = Precoder(w=_pairs_complex(payload["w"]), pt=pt)
        dual = DualSolution(lam=np.asarray(payload["lam"], dtype=float),
                            mu=float(payload["mu"]), zeta=float(payload["zeta"]),
                            z=float(payload["z"]), eta=float(payload["eta"]),
                            active=tuple(payload["active"]))
        beta = _pairs_complex(payload["beta"])
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"bad solution file {args.solution}: {e}")
    if args.refresh_beta:
        beta = update_beta(prec, channels)
    res = kkt_residuals(prec, dual, beta, channels)
    for name, value in res.as_dict().items():
        print(f"{name:14s} {value:.6e}")
    worst = res.max_residual()
    ok = worst <= args.tol
    print(f"max residual   {worst:.6e}  ({'PASS' if ok else 'FAIL'} at tol {args.tol:g})")
    return EXIT_OK if ok else EXIT_USAGE


def build_parser() -> _Parser:
    parser = _Parser(prog="mmfbeam",
                     description="Max-min fair multicast beamforming toolkit")
    parser.add_argument("--version", action="version", version=f"mmfbeam {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance")
    _add_instance_args(p)
    _add_solver_args(p)
    p.add_argument("--json", action="store_true", help="print the solution as JSON")
    p.add_argument("--save-solution", metavar="PATH", help="write solution JSON")
    p.add_argument("--save-channels", metavar="PATH", help="write the channel file")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("sweep", help="run a Monte-Carlo sweep from a JSON config")
    p.add_argument("--config", required=True, help="sweep config JSON")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--outdir", help="write sweep.csv/json/svg into this directory")
    p.add_argument("--db-scale", action="store_true",
                   help="render the SVG y-axis in dB (default is linear SNR)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("snapshot", help="per-user SNR table for one realization")
    _add_instance_args(p)
    _add_solver_args(p)
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--svg", action="store_true", help="also render the bar chart")
    p.set_defaults(func=_cmd_snapshot)

    p = sub.add_parser("oracle", help="random-sampling lower bound")
    _add_instance_args(p)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--oracle-seed", type=int, default=0)
    p.add_argument("--no-refine", action="store_true")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("verify", help="print KKT residuals of a saved solution")
    p.add_argument("solution", help="solution JSON written by `solve --save-solution`")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--refresh-beta", action="store_true",
                   help="recompute beta from w instead of using the stored value")
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
