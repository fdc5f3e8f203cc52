"""Command-line entry point: ``fpsi {run, sweep-delta, verify, mms}``.

Exit codes: 0 success, 2 configuration error, 3 degeneracy termination,
4 property failure.
"""
from __future__ import annotations

import argparse
import os
import sys

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_PROPERTY = 0, 2, 3, 4
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fpsi", description="Regularized fluid / poroelastic / plate interaction solver")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--out", help="output directory (overridden by $FPSI_OUT_DIR)")
    common.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread count")
    common.add_argument("--seed", type=int, default=0, help="seed for random-field property tests")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[common], help="simulate and write the energy ledger and snapshots")
    sub.add_parser("sweep-delta", parents=[common], help="delta sweep (consistency or mollifier rates)")
    sub.add_parser("verify", parents=[common], help="run the property suite")
    m = sub.add_parser("mms", parents=[common], help="PDE-residual check of a reference solution")
    m.add_argument("--reference", choices=("rest", "separable"), default=None)
    m.add_argument("--points", type=int, default=100)
    return p


def _load(path):
    from .io import parse_config

    if path is None:
        return None
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        from .errors import ConfigError

        raise ConfigError(f"cannot read config {path}: {exc}") from None


def _require(cfg, command):
    from .errors import ConfigError

    if cfg is None:
        raise ConfigError(f"{command} requires --config")
    return cfg


def cmd_run(args) -> int:
    from .assembly import Discretization
    from .io import output_dir, write_ledger_csv, write_state_vtk
    from .scheme import OK, Simulation, initial_data

    cfg = _require(_load(args.config), "run")
    out = output_dir(args.out, cfg)
    disc = Discretization(cfg.params, cfg.nx, cfg.ny, order=cfg.order, delta=cfg.delta or None,
                          h_aux_factor=cfg.h_aux_factor)
    sim = Simulation(disc, cfg.dt, cfg.thresholds)
    s0 = sim.initial_state(**initial_data(cfg.init, cfg.params, cfg.init_amp))
    res = sim.run(s0, cfg.T, snapshot_stride=cfg.snapshot_stride)
    write_ledger_csv(out / "ledger.csv", res.ledger)
    if cfg.snapshot_stride:
        for s in res.trajectory.states:
            write_state_vtk(out, disc, s, f"{s.n:06d}")
    last = res.monitors[-1]
    print(f"steps={len(res.ledger.rows)} t={res.final.t:.6g} cause={res.cause} "
          f"min_det={last.min_det:.6g} min_gap_R={last.min_gap_R:.6g}")
    if res.cause != OK:
        print(f"terminated: {res.cause}", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .io import output_dir, write_mollifier_csv, write_report_csv

    cfg = _require(_load(args.config), "sweep-delta")
    out = output_dir(args.out, cfg)
    if cfg.sweep_kind == "mollifier":
        from .regularizer import convolution_rate_report
        from .verify import rate_field

        eta, grad = rate_field()
        rows = convolution_rate_report(eta, grad, cfg.sweep_deltas, cfg.params.L, cfg.params.R, cfg.h_aux_factor)
        write_mollifier_csv(out / "mollifier_rates.csv", rows)
        print(f"H1 order {rows[0].fitted_order_h1:.4f}, gradient order {rows[0].fitted_order_grad:.4f}")
        return EXIT_OK
    from .consistency import catalog_reference, delta_sweep

    ref = catalog_reference(cfg.reference, cfg.params, cfg.T, cfg.ref_amp)
    rep = delta_sweep(ref, cfg.sweep_deltas, cfg.nx, cfg.dt, cfg.T, ny=cfg.ny, order=cfg.order,
                      h_aux_factor=cfg.h_aux_factor, mode=cfg.sweep_mode, thresholds=cfg.thresholds)
    write_report_csv(out / "consistency_report.csv", rep)
    for r in rep.rows:
        print(f"delta={r.delta:.4g} max_E={r.max_E:.6e} cause={r.cause}")
    status = "inconclusive (floor dominates)" if rep.inconclusive else f"fitted order {rep.fitted_order:.4f}"
    print(f"{status}; strictly decreasing: {rep.strictly_decreasing}; "
          f"bootstrap violations: {rep.bootstrap_violations}")
    if any(r.cause != "ok" for r in rep.rows):
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import property_suite

    results = property_suite(seed=args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_PROPERTY


def cmd_mms(args) -> int:
    from .assembly import PhysicalParams
    from .consistency import catalog_reference, mms_residual_check

    cfg = _load(args.config)
    kind = args.reference or (cfg.reference if cfg else "separable")
    params = cfg.params if cfg else PhysicalParams()
    ref = catalog_reference(kind, params, cfg.T if cfg else 1.0, cfg.ref_amp if cfg else 0.05)
    rep = mms_residual_check(ref, n_points=args.points, seed=args.seed)
    for k, v in vars(rep).items():
        print(f"{k}: {v:.3e}")
    ok = rep.passed()
    print(f"[{'PASS' if ok else 'FAIL'}] {kind} reference residual check")
    return EXIT_OK if ok else EXIT_PROPERTY


COMMANDS = {"run": cmd_run, "sweep-delta": cmd_sweep, "verify": cmd_verify, "mms": cmd_mms}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("fpsi: error: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        for v in _THREAD_VARS:
            os.environ[v] = str(args.threads)
    from .errors import ConfigError, DegeneracyError

    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegeneracyError as exc:
        print(f"terminated: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


def entry() -> None:
    try:
        code = main()
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    sys.exit(code)


if __name__ == "__main__":
    entry()
