"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(non-convergence or a failed oracle check), 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ehmac import __version__
from ehmac.config import ConfigError, ExperimentConfig, load_config
from ehmac.dual import calibrate
from ehmac.fading import Distribution, sample_block
from ehmac.model import Mode, Weights
from ehmac.oracle import baseline_mac_region, exhaustive_region_tiny, max_grid_gap
from ehmac.results import (
    calibration_records,
    read_calibration,
    region_rows,
    write_json,
    write_region_csv,
    write_trace,
)
from ehmac.simulator import run_ensemble, run_trajectory
from ehmac.sweep import run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
GRID_GAP_LIMIT = 1e-6

log = logging.getLogger("ehmac")


class _Fail(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _say(args, *parts):
    if not args.quiet:
        print(*parts)


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed_override is not None:
        if not 0 <= args.seed_override < 2**64:
            raise ConfigError("--seed-override must be an unsigned 64-bit integer")
        cfg = cfg.with_seed(args.seed_override)
    return cfg


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.out) if args.out else cfg.out_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise _Fail(EXIT_IO, f"cannot create output directory {out}: {e}") from e
    return out


def _weights(args, cfg: ExperimentConfig) -> Weights:
    if args.mu is None:
        ws = cfg.weights()
        return ws[len(ws) // 2]
    try:
        return Weights(np.array([float(v) for v in args.mu.split(",")]))
    except ValueError as e:
        raise ConfigError(f"bad --mu: {e}") from e


def cmd_region(args) -> int:
    cfg = _load(args)
    spec = cfg.sweep_spec()
    region = run_sweep(spec, cfg.params(), cfg.fading_config(), jobs=args.jobs)
    out = _out_dir(args, cfg)
    rows = region_rows(region)
    try:
        write_region_csv(rows, out / "region.csv")
        write_json(calibration_records(region), out / "calibration.json")
        write_json({"version": __version__, "config": cfg.to_dict(), "n_points": len(rows),
                    "failed": [{"mode": p.mode.value, "mu": p.weights.mu.tolist()}
                               for p in region.failed if p.m_slots == spec.m_slots_list[-1]]},
                   out / "metadata.json")
    except OSError as e:
        raise _Fail(EXIT_IO, f"cannot write results: {e}") from e
    for r in rows:
        _say(args, f"{r.mode.value} M={r.m_slots} mu={list(r.mu)} rates={list(r.rates)}")
    return EXIT_NUMERIC if region.failed else EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    mode = Mode(args.mode)
    w = _weights(args, cfg)
    spec = cfg.sweep_spec()
    slots = args.slots or spec.n_calib_slots
    max_iter = spec.max_iter if args.max_iter is None else args.max_iter
    if max_iter < 0:
        raise ConfigError("--max-iter must be nonnegative")
    rep = calibrate(w, cfg.params(mode), cfg.fading_config(), spec.tolerance, max_iter, slots)
    out = _out_dir(args, cfg)
    try:
        write_json({"mode": mode.value, "mu": w.mu.tolist(), **rep.to_dict()},
                   out / f"calibration_{mode.value}.json")
    except OSError as e:
        raise _Fail(EXIT_IO, f"cannot write calibration: {e}") from e
    _say(args, f"converged={rep.converged} iterations={rep.n_iterations} "
               f"multipliers={rep.multipliers.as_vector().tolist()} max|r|={rep.max_abs_residual:.3g}")
    return EXIT_OK if rep.converged else EXIT_NUMERIC


def cmd_simulate(args) -> int:
    cfg = _load(args)
    mode = Mode(args.mode)
    if args.m_slots < 1:
        raise ConfigError("--m-slots must be at least 1")
    if args.n_runs < 1:
        raise ConfigError("--n-runs must be at least 1")
    w = _weights(args, cfg)
    params = cfg.params(mode)
    fading = cfg.fading_config()
    if args.calibration:
        try:
            rep = read_calibration(args.calibration)
        except OSError as e:
            raise _Fail(EXIT_IO, f"cannot read calibration: {e}") from e
    else:
        spec = cfg.sweep_spec()
        rep = calibrate(w, params, fading, spec.tolerance, spec.max_iter, spec.n_calib_slots)
    if not rep.converged:
        raise _Fail(EXIT_NUMERIC, "calibration did not converge")
    out = _out_dir(args, cfg)
    if args.n_runs == 1:
        tr = run_trajectory(w, rep.multipliers, params, fading, args.m_slots, keep_arrays=args.trace)
        ens = run_ensemble(w, rep.multipliers, params, fading, args.m_slots, seeds=[fading.seed])
        if args.trace:
            try:
                write_trace(tr.arrays, params.epsilon, out / f"trace_{mode.value}.csv")
            except OSError as e:
                raise _Fail(EXIT_IO, f"cannot write trace: {e}") from e
    else:
        ens = run_ensemble(w, rep.multipliers, params, fading, args.m_slots, n_runs=args.n_runs)
    report = {"mode": mode.value, "mu": w.mu.tolist(), "m_slots": args.m_slots, "n_runs": ens.n_runs,
              "rates": ens.rates.tolist(), "rates_se": ens.rates_se.tolist(),
              "weighted_rate": ens.weighted_rate, "half_width": ens.half_width(),
              "outage_fraction": ens.outage_fraction.tolist(), "mean_bs_power": ens.mean_bs_power}
    try:
        write_json(report, out / f"simulation_{mode.value}.json")
    except OSError as e:
        raise _Fail(EXIT_IO, f"cannot write simulation: {e}") from e
    _say(args, f"rates={report['rates']} outage={report['outage_fraction']} "
               f"bs_power={report['mean_bs_power']:.6g}")
    return EXIT_OK


def grid_check(cfg: ExperimentConfig, mode: Mode, w: Weights, n_slots: int) -> float:
    """Worst relative Lagrangian shortfall of the closed-form rules against the grid search."""
    params = cfg.params(mode)
    fading = cfg.fading_config()
    spec = cfg.sweep_spec()
    rep = calibrate(w, params, fading, spec.tolerance, spec.max_iter, spec.n_calib_slots)
    return max_grid_gap(sample_block(fading, params, 0, n_slots), w, rep.multipliers, params)


def cmd_oracle(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    params = cfg.params(args.mode)
    if args.check == "grid-check":
        if args.slots < 1:
            raise ConfigError("--slots must be at least 1")
        gap = grid_check(cfg, Mode(args.mode), _weights(args, cfg), args.slots)
        print(f"max relative Lagrangian gap: {gap:.3e}")
        return EXIT_OK if gap <= GRID_GAP_LIMIT else EXIT_NUMERIC
    if args.check == "baseline":
        fading = cfg.fading_config()
        budget = params.eta_prime * params.p_avg * fading.mean_y
        region = baseline_mac_region(cfg.weights(), budget, fading, params,
                                     args.slots or cfg.sweep_spec().n_calib_slots)
        report = {"power_budget": budget.tolist(), "mu": region.mu().tolist(),
                  "rates": region.rates().tolist(), "converged": region.converged}
        name = "baseline.json"
    else:
        fading = cfg.fading_config()
        if fading.distribution is not Distribution.TWO_POINT:
            raise ConfigError("the tiny exhaustive check needs the TwoPointTest distribution")
        region = exhaustive_region_tiny(params, fading, cfg.weights())
        report = {"mode": params.mode.value, "mu": region.mu().tolist(), "rates": region.rates().tolist()}
        name = f"tiny_{params.mode.value}.json"
    try:
        write_json(report, out / name)
    except OSError as e:
        raise _Fail(EXIT_IO, f"cannot write {name}: {e}") from e
    for mu, r in zip(report["mu"], report["rates"]):
        _say(args, f"mu={mu} rates={r}")
    return EXIT_OK if all(region.converged) else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config (JSON)")
    common.add_argument("--out", help="output directory (default: from the config)")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
    common.add_argument("--seed-override", type=int, help="replace the fading seed")
    common.add_argument("--trace", action="store_true", help="write per-slot traces")
    common.add_argument("--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="ehmac", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("region", parents=[common], help="sweep weights and write the rate region")

    c = sub.add_parser("calibrate", parents=[common], help="calibrate prices for one weight vector")
    c.add_argument("--mode", choices=[m.value for m in Mode], default="TDT")
    c.add_argument("--mu", help="comma-separated weights (default: the middle sweep point)")
    c.add_argument("--max-iter", type=int)
    c.add_argument("--slots", type=int, help="calibration sample slots")

    s = sub.add_parser("simulate", parents=[common], help="simulate one weight vector")
    s.add_argument("--mode", choices=[m.value for m in Mode], default="TDT")
    s.add_argument("--mu")
    s.add_argument("--m-slots", type=int, required=True)
    s.add_argument("--n-runs", type=int, default=1)
    s.add_argument("--calibration", help="calibration JSON written by the calibrate command")

    o = sub.add_parser("oracle", parents=[common], help="brute-force reference checks")
    o.add_argument("check", choices=["grid-check", "baseline", "tiny"])
    o.add_argument("--mode", choices=[m.value for m in Mode], default="TDT")
    o.add_argument("--mu")
    o.add_argument("--slots", type=int, default=1000)
    return p


COMMANDS = {"region": cmd_region, "calibrate": cmd_calibrate, "simulate": cmd_simulate,
            "oracle": cmd_oracle}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except _Fail as e:
        print(str(e), file=sys.stderr)
        return e.code
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
