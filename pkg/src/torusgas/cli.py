"""Command-line interface.

Subcommands: kernel, simulate, diffusion, pde, compare, study, exact.
Shared flags: --config, --seed, --out, --threads.  Exit codes: 0 success,
1 invariant violation, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvariantViolation
from .harness import (ExperimentConfig, convergence_study, emit_outputs,
                      exact_small_experiment, run_experiment, replica_stream)
from .kernels import validate_kernel
from .lattice import TorusGeometry, block_density, sample_product_measure
from .pde import DensityField, DiffusionTable, solve_to_time
from .resolvent import compute_diffusion
from .simulate import evolve
from .profiles import validate_profile


def _add_shared(p):
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None, help="override master seed")
    p.add_argument("--out", default=None, help="override output directory")
    p.add_argument("--threads", type=int, default=None, help="worker pool size")


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load_json(args.config)
    if args.seed is not None:
        cfg.master_seed = int(args.seed)
    if args.out is not None:
        cfg.output_dir = args.out
    if args.threads is not None:
        cfg.threads = int(args.threads)
    return cfg


def _outdir(cfg) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_kernel(args) -> int:
    cfg = _load(args)
    analysis = validate_kernel(cfg.kernel)
    data = {
        "dimension": analysis.dimension,
        "range": analysis.range,
        "drift": [float(x) for x in analysis.drift],
        "covariance": [[float(x) for x in row] for row in analysis.covariance],
        "symmetric_part": [
            {"offset": [int(c) for c in z], "value": float(s)}
            for z, s in zip(analysis.sym_offsets, analysis.sym_weights)],
        "antisymmetric_part": [
            {"offset": [int(c) for c in z], "value": float(a)}
            for z, a in zip(analysis.sym_offsets, analysis.asym_weights)],
        "adjoint_entries": analysis.adjoint.to_entries(),
        "is_symmetric": analysis.is_symmetric,
        "low_dimension_note": (
            "dimension below 3: diffusive-limit guarantees are out of range, "
            "provided for testing" if analysis.dimension < 3 else ""),
    }
    path = _outdir(cfg) / "kernel.json"
    path.write_text(json.dumps(data, indent=1, sort_keys=True))
    print(path)
    return 0


def cmd_simulate(args) -> int:
    cfg = _load(args)
    analysis = validate_kernel(cfg.kernel)
    profile = cfg.build_profile()
    diag = validate_profile(profile, analysis.drift, cfg.delta0, cfg.drift_tol)
    if not diag["ok"]:
        raise ConfigError(f"profile fails validation: {diag}")
    out = _outdir(cfg)
    for size_index, n in enumerate(cfg.torus_sizes):
        geom = TorusGeometry(cfg.dimension, n)
        for r in range(cfg.replicas):
            rng = replica_stream(cfg, size_index, r).generator()
            config = sample_product_measure(geom, profile, rng)
            t_prev = 0.0
            for t in cfg.times:
                before = config
                config, ledger = evolve(config, cfg.kernel, (t - t_prev) * n * n, rng)
                ledger.check_continuity(before, config)
                t_prev = t
                blocks = block_density(config, cfg.block_radius)
                header = {"d": cfg.dimension, "N": n, "K": cfg.block_radius,
                          "t": t, "replica": r, "seed": cfg.master_seed}
                stem = f"blocks_N{n}_t{t}_r{r}"
                if "csv" in cfg.formats:
                    field = DensityField(blocks.reshape(geom.shape))
                    field.save_csv(out / f"{stem}.csv", header)
                if "npy" in cfg.formats or "binary" in cfg.formats:
                    np.save(out / f"{stem}.npy", blocks.reshape(geom.shape))
                    (out / f"{stem}.meta.json").write_text(
                        json.dumps(header, sort_keys=True))
    print(out)
    return 0


def cmd_diffusion(args) -> int:
    cfg = _load(args)
    analysis = validate_kernel(cfg.kernel)
    d = cfg.dimension
    vectors = {"e1": [1.0] + [0.0] * (d - 1)}
    if d >= 2:
        v = np.zeros(d)
        v[0] = v[1] = 1.0 / np.sqrt(2.0)
        vectors["diag12"] = [float(x) for x in v]
    result = compute_diffusion(analysis, cfg.alpha_grid, cfg.truncation,
                               mobility_vectors=vectors, with_residuals=True)
    out = _outdir(cfg)
    result.save_json(out / "diffusion.json")
    result.save_csv(out / "diffusion.csv")
    table = DiffusionTable.from_diffusion_result(result)
    table.save_json(out / "table.json")
    print(out / "diffusion.json")
    return 0


def cmd_pde(args) -> int:
    cfg = _load(args)
    analysis = validate_kernel(cfg.kernel)
    profile = cfg.build_profile()
    if cfg.diffusion_table_path:
        table = DiffusionTable.load_json(cfg.diffusion_table_path)
    else:
        result = compute_diffusion(analysis, cfg.alpha_grid, cfg.truncation)
        table = DiffusionTable.from_diffusion_result(result)
    out = _outdir(cfg)
    fld = DensityField.from_profile(profile, cfg.pde_resolution)
    t_prev = 0.0
    for t in cfg.times:
        fld = solve_to_time(fld, table, t - t_prev, safety=cfg.pde_safety)
        t_prev = t
        header = {"d": cfg.dimension, "m": cfg.pde_resolution, "t": t}
        if "csv" in cfg.formats:
            fld.save_csv(out / f"pde_t{t}.csv", header)
        if "npy" in cfg.formats or "binary" in cfg.formats:
            fld.save_npy(out / f"pde_t{t}.npy")
    print(out)
    return 0


def cmd_compare(args) -> int:
    cfg = _load(args)
    report = run_experiment(cfg)
    emit_outputs(report, cfg.output_dir, cfg.formats)
    for row in report.rows:
        print(f"N={row['N']} t={row['t']}: L1={row['L1']:.6g} "
              f"L2={row['L2']:.6g} Linf={row['Linf']:.6g}")
    return 0


def cmd_study(args) -> int:
    cfg = _load(args)
    study = convergence_study(cfg)
    emit_outputs(study["report"], cfg.output_dir, cfg.formats)
    for row in study["table"]:
        print(f"N={row['N']} t={row['t']}: L1={row['L1']:.6g}")
    print("monotone:", study["monotone_in_size"])
    return 0


def cmd_exact(args) -> int:
    cfg = _load(args)
    diag = exact_small_experiment(cfg)
    out = _outdir(cfg)
    path = out / "exact_diagnostics.json"
    path.write_text(json.dumps(diag, indent=1, sort_keys=True))
    print(json.dumps({k: diag[k] for k in
                      ("stationarity_tv", "entropy_t0_closed_form",
                       "entropy_t0_exact")}, indent=1))
    print(path)
    return 0


_COMMANDS = {
    "kernel": cmd_kernel,
    "simulate": cmd_simulate,
    "diffusion": cmd_diffusion,
    "pde": cmd_pde,
    "compare": cmd_compare,
    "study": cmd_study,
    "exact": cmd_exact,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="torusgas",
        description="Exclusion-process workbench on the discrete torus")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        _add_shared(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
