"""Experiment orchestration: configs, ensemble runs, comparisons, reports.

The harness owns the declarative run description, drives the other modules
through their public contracts only, and emits deterministic outputs: equal
master seeds give byte-identical report files (wall-clock timings go to a
separate side file excluded from that contract).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvariantViolation
from .exactsmall import (MAX_SITES, exact_evolution_small,
                         product_distribution, total_variation)
from .gibbs import relative_entropy_distributions, relative_entropy_product
from .kernels import TransitionKernel, validate_kernel
from .lattice import TorusGeometry, block_density, sample_product_measure
from .pde import DensityField, DiffusionTable, solve_to_time
from .profiles import Profile, validate_profile
from .resolvent import TruncationParams, compute_diffusion
from .simulate import RngStream, evolve

SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version", "kernel", "torus_sizes", "profile", "delta0", "times",
    "block_radius", "replicas", "master_seed", "alpha_grid", "truncation",
    "pde", "diffusion_table", "output_dir", "formats", "threads", "drift_tol",
    "exact", "label",
}
_KERNEL_KEYS = {"dimension", "entries"}
_TRUNC_KEYS = {"radius", "max_degree", "solver_tol", "lambda_seq", "reg",
               "dense_threshold"}
_PDE_KEYS = {"resolution", "safety"}
_PROFILE_KEYS = {"kind", "value", "base", "amplitude", "axis", "path"}
_EXACT_KEYS = {"side", "replicas", "alpha", "times"}


def _reject_unknown(mapping: dict, allowed: set, where: str):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass
class ExperimentConfig:
    """Validated, serializable description of a comparison run."""

    kernel: TransitionKernel
    torus_sizes: list
    profile_spec: dict
    times: list
    block_radius: int
    replicas: int
    master_seed: int
    delta0: float = 0.05
    alpha_grid: list = field(default_factory=lambda: [round(0.1 * i, 10)
                                                      for i in range(1, 10)])
    truncation: TruncationParams = None
    pde_resolution: int = 64
    pde_safety: float = 0.9
    diffusion_table_path: str | None = None
    output_dir: str = "out"
    formats: list = field(default_factory=lambda: ["json", "csv"])
    threads: int = 1
    drift_tol: float = 1e-10
    exact: dict = field(default_factory=dict)
    label: str = "experiment"

    def __post_init__(self):
        if self.truncation is None:
            r = max(2, self.kernel.range)
            self.truncation = TruncationParams(radius=r, max_degree=2)
        if self.block_radius < 0:
            raise ConfigError("block radius must be nonnegative")
        if self.replicas < 1:
            raise ConfigError("need at least one replica")
        for n in self.torus_sizes:
            if 2 * self.block_radius + 1 > n:
                raise ConfigError(f"block radius {self.block_radius} too large for N={n}")
        if sorted(self.times) != list(self.times):
            raise ConfigError("observation times must be ascending")

    @property
    def dimension(self) -> int:
        return self.kernel.dimension

    def build_profile(self) -> Profile:
        return Profile.from_spec(self.dimension, self.profile_spec, self.delta0)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        _reject_unknown(data, _TOP_KEYS, "config")
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
        kd = data["kernel"]
        _reject_unknown(kd, _KERNEL_KEYS, "kernel")
        kernel = TransitionKernel.from_entries(int(kd["dimension"]), kd["entries"])
        validate_kernel(kernel)
        prof = dict(data["profile"])
        _reject_unknown(prof, _PROFILE_KEYS, "profile")
        if prof.get("kind") == "cosine":
            if not 0 <= int(prof["axis"]) < kernel.dimension:
                raise ConfigError("profile axis outside the kernel dimension")
        trunc = None
        if "truncation" in data:
            td = dict(data["truncation"])
            _reject_unknown(td, _TRUNC_KEYS, "truncation")
            trunc = TruncationParams(
                radius=int(td["radius"]), max_degree=int(td["max_degree"]),
                solver_tol=float(td.get("solver_tol", 1e-10)),
                reg=float(td.get("reg", 1e-3)),
                lambda_seq=tuple(td.get("lambda_seq", (1e-1, 1e-2, 1e-3, 1e-4))),
                dense_threshold=int(td.get("dense_threshold", 0)))
        pde = dict(data.get("pde", {}))
        _reject_unknown(pde, _PDE_KEYS, "pde")
        exact = dict(data.get("exact", {}))
        _reject_unknown(exact, _EXACT_KEYS, "exact")
        return cls(
            kernel=kernel,
            torus_sizes=[int(n) for n in data["torus_sizes"]],
            profile_spec=prof,
            times=[float(t) for t in data["times"]],
            block_radius=int(data["block_radius"]),
            replicas=int(data["replicas"]),
            master_seed=int(data["master_seed"]),
            delta0=float(data.get("delta0", 0.05)),
            alpha_grid=[float(a) for a in data.get(
                "alpha_grid", [round(0.1 * i, 10) for i in range(1, 10)])],
            truncation=trunc,
            pde_resolution=int(pde.get("resolution", 64)),
            pde_safety=float(pde.get("safety", 0.9)),
            diffusion_table_path=data.get("diffusion_table"),
            output_dir=data.get("output_dir", "out"),
            formats=list(data.get("formats", ["json", "csv"])),
            threads=int(data.get("threads", 1)),
            drift_tol=float(data.get("drift_tol", 1e-10)),
            exact=exact,
            label=str(data.get("label", "experiment")),
        )

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "kernel": {"dimension": self.dimension,
                       "entries": self.kernel.to_entries()},
            "torus_sizes": list(self.torus_sizes),
            "profile": dict(self.profile_spec),
            "times": list(self.times),
            "block_radius": self.block_radius,
            "replicas": self.replicas,
            "master_seed": self.master_seed,
            "delta0": self.delta0,
            "alpha_grid": list(self.alpha_grid),
            "truncation": {
                "radius": self.truncation.radius,
                "max_degree": self.truncation.max_degree,
                "solver_tol": self.truncation.solver_tol,
                "reg": self.truncation.reg,
                "lambda_seq": list(self.truncation.lambda_seq),
            },
            "pde": {"resolution": self.pde_resolution, "safety": self.pde_safety},
            "output_dir": self.output_dir,
            "formats": list(self.formats),
            "threads": self.threads,
            "drift_tol": self.drift_tol,
            "label": self.label,
        }
        if self.diffusion_table_path:
            out["diffusion_table"] = self.diffusion_table_path
        if self.exact:
            out["exact"] = dict(self.exact)
        return out

    @classmethod
    def load_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)


def compare_fields(empirical: np.ndarray, pde_field: DensityField,
                   block_radius: int, side: int) -> dict:
    """Distances between a block-density field and the PDE field at block centers.

    The block field value at site x is compared against the PDE density at
    the point x/N (blocks are centered on their site).
    """
    d = pde_field.dimension
    geom = TorusGeometry(d, side)
    centers = geom.all_coords() / side
    target = pde_field.evaluate(centers)
    diff = np.abs(np.asarray(empirical).reshape(-1) - target)
    return {
        "L1": float(diff.mean()),
        "L2": float(np.sqrt((diff ** 2).mean())),
        "Linf": float(diff.max()),
    }


def _load_or_compute_table(cfg: ExperimentConfig, analysis) -> DiffusionTable:
    if cfg.diffusion_table_path:
        return DiffusionTable.load_json(cfg.diffusion_table_path)
    result = compute_diffusion(analysis, cfg.alpha_grid, cfg.truncation)
    return DiffusionTable.from_diffusion_result(result)


def replica_stream(cfg: ExperimentConfig, size_index: int, replica: int) -> RngStream:
    return RngStream(cfg.master_seed, (size_index << 20) | replica)


def _replica_job(cfg_dict: dict, size_index: int, replica: int):
    """One replica trajectory: block fields and state checks per time.

    Self-contained so a process pool can run replicas independently; the
    replica substream makes the result a pure function of (config, indices).
    """
    cfg = ExperimentConfig.from_dict(cfg_dict)
    n = cfg.torus_sizes[size_index]
    geom = TorusGeometry(cfg.dimension, n)
    profile = cfg.build_profile()
    rng = replica_stream(cfg, size_index, replica).generator()
    config = sample_product_measure(geom, profile, rng)
    t_prev = 0.0
    fields = {}
    for t in cfg.times:
        before = config
        config, ledger = evolve(config, cfg.kernel, (t - t_prev) * n ** 2, rng)
        ledger.check_continuity(before, config)
        if config.particle_count != before.particle_count:
            raise InvariantViolation("particle count changed")
        t_prev = t
        fields[t] = block_density(config, cfg.block_radius)
    return fields


@dataclass
class ComparisonReport:
    config: dict
    rows: list
    monotone_in_size: dict
    table_asymmetry: float
    failure: str | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "rows": self.rows,
            "monotone_in_size": self.monotone_in_size,
            "table_asymmetry": self.table_asymmetry,
            "failure": self.failure,
        }


def run_experiment(cfg: ExperimentConfig, table: DiffusionTable | None = None,
                   progress=None) -> ComparisonReport:
    """Ensemble-vs-PDE comparison over all torus sizes and times.

    Every trajectory is continuity-checked against its bond ledger; block
    fields are averaged over replicas before distances are taken, and
    per-replica distances are logged alongside.
    """
    analysis = validate_kernel(cfg.kernel)
    profile = cfg.build_profile()
    diag = validate_profile(profile, analysis.drift, cfg.delta0, cfg.drift_tol)
    if not diag["ok"]:
        raise ConfigError(f"initial profile fails validation: {diag}")
    if table is None:
        table = _load_or_compute_table(cfg, analysis)

    pde_fields = {}
    fld = DensityField.from_profile(profile, cfg.pde_resolution)
    t_prev = 0.0
    for t in cfg.times:
        fld = solve_to_time(fld, table, t - t_prev, safety=cfg.pde_safety)
        pde_fields[t] = fld
        t_prev = t

    rows = []
    report = ComparisonReport(config=cfg.to_dict(), rows=rows,
                              monotone_in_size={}, table_asymmetry=table.asymmetry)
    try:
        for size_index, n in enumerate(cfg.torus_sizes):
            geom = TorusGeometry(cfg.dimension, n)
            sums = {t: np.zeros(geom.n_sites) for t in cfg.times}
            per_replica = {t: [] for t in cfg.times}
            if cfg.threads > 1:
                from concurrent.futures import ProcessPoolExecutor

                with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
                    futures = [pool.submit(_replica_job, cfg.to_dict(), size_index, r)
                               for r in range(cfg.replicas)]
                    # reduce in replica order for a deterministic report
                    results = [f.result() for f in futures]
            else:
                results = [_replica_job(cfg.to_dict(), size_index, r)
                           for r in range(cfg.replicas)]
            for r, fields in enumerate(results):
                for t in cfg.times:
                    sums[t] += fields[t]
                    per_replica[t].append(compare_fields(
                        fields[t], pde_fields[t], cfg.block_radius, n)["L1"])
                if progress:
                    progress(n, r)
            for t in cfg.times:
                mean_field = sums[t] / cfg.replicas
                dist = compare_fields(mean_field, pde_fields[t], cfg.block_radius, n)
                rows.append({
                    "N": n, "t": t,
                    "L1": dist["L1"], "L2": dist["L2"], "Linf": dist["Linf"],
                    "per_replica_L1": [float(x) for x in per_replica[t]],
                })
        for t in cfg.times:
            vals = [row["L1"] for row in rows if row["t"] == t]
            report.monotone_in_size[repr(float(t))] = all(
                b < a for a, b in zip(vals, vals[1:]))
    except Exception as exc:  # flush partial results with a marker, then re-raise
        report.failure = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        if report.failure and cfg.output_dir:
            try:
                emit_outputs(report, cfg.output_dir, cfg.formats)
            except Exception:
                pass
    return report


def convergence_study(cfg: ExperimentConfig, table: DiffusionTable | None = None,
                      progress=None) -> dict:
    """Distance-versus-size table with a monotonicity verdict per time."""
    report = run_experiment(cfg, table=table, progress=progress)
    table_rows = [{k: row[k] for k in ("N", "t", "L1", "L2", "Linf")}
                  for row in report.rows]
    return {
        "table": table_rows,
        "monotone_in_size": report.monotone_in_size,
        "report": report,
    }


def exact_small_experiment(cfg: ExperimentConfig,
                           table: DiffusionTable | None = None) -> dict:
    """Tiny-torus diagnostics against the exact law.

    Reports (i) total-variation distance between the Monte Carlo ensemble
    and the exactly evolved distribution, (ii) the exact relative entropy of
    the evolving law against the product state of the PDE solution along the
    run (with a closed-form cross-check at time zero), and (iii) exact
    stationarity of the flat product measure.
    """
    exact_cfg = cfg.exact or {}
    n = int(exact_cfg.get("side", 3))
    mc_replicas = int(exact_cfg.get("replicas", 100000))
    alpha = float(exact_cfg.get("alpha", 0.3))
    times = [float(t) for t in exact_cfg.get("times", cfg.times)]
    geom = TorusGeometry(cfg.dimension, n)
    if geom.n_sites > MAX_SITES:
        raise ConfigError("exact diagnostics need at most 13 sites")
    analysis = validate_kernel(cfg.kernel)
    profile = cfg.build_profile()
    diag = validate_profile(profile, analysis.drift, cfg.delta0, cfg.drift_tol)
    if not diag["ok"]:
        raise ConfigError(f"initial profile fails validation: {diag}")

    pts = geom.all_coords() / n
    marginals0 = profile.values_at(pts)
    mu = product_distribution(geom, marginals0)

    # stationarity of the flat product measure
    nu_alpha = product_distribution(geom, np.full(geom.n_sites, alpha))
    t_max = max(times) if times else 1.0
    nu_evolved = exact_evolution_small(geom, cfg.kernel, nu_alpha, t_max * n ** 2)
    stationarity_tv = total_variation(nu_evolved, nu_alpha)

    # PDE reference along the run (grid resolution a multiple of the side)
    resolution = max(cfg.pde_resolution, n)
    resolution += (-resolution) % n
    if table is None:
        table = _load_or_compute_table(cfg, analysis)
    fld = DensityField.from_profile(profile, resolution)

    # exact law and entropy curve along the run, including the time-zero row
    entropy_rows = []
    ref0 = product_distribution(geom, fld.evaluate(pts))
    entropy_rows.append({
        "t": 0.0,
        "entropy_vs_profile_state": float(relative_entropy_distributions(mu, ref0)),
        "entropy_vs_flat": float(relative_entropy_distributions(mu, nu_alpha)),
    })
    exact_laws = {}
    t_prev = 0.0
    for t in times:
        duration = (t - t_prev) * n ** 2
        mu = exact_evolution_small(geom, cfg.kernel, mu, duration)
        fld = solve_to_time(fld, table, t - t_prev, safety=cfg.pde_safety)
        t_prev = t
        exact_laws[t] = mu
        nu_ref = product_distribution(geom, fld.evaluate(pts))
        entropy_rows.append({
            "t": t,
            "entropy_vs_profile_state": float(relative_entropy_distributions(mu, nu_ref)),
            "entropy_vs_flat": float(relative_entropy_distributions(mu, nu_alpha)),
        })

    # Monte Carlo ensemble through the same times, one replica at a time
    counts = {t: np.zeros(1 << geom.n_sites, dtype=np.int64) for t in times}
    for r in range(mc_replicas):
        gen = RngStream(cfg.master_seed, (1 << 19) + r).generator()
        config = sample_product_measure(geom, profile, gen)
        t_prev = 0.0
        for t in times:
            before = config
            config, ledger = evolve(config, cfg.kernel, (t - t_prev) * n ** 2, gen)
            ledger.check_continuity(before, config)
            t_prev = t
            counts[t][config.state_code()] += 1
    mc_rows = []
    for t in times:
        emp = counts[t] / counts[t].sum()
        mc_rows.append({"t": t, "tv_mc_vs_exact": total_variation(emp, exact_laws[t])})

    # time-zero closed form: product-vs-product entropy from per-site marginals
    closed0 = relative_entropy_product(marginals0, marginals0)
    exact0 = entropy_rows[0]["entropy_vs_profile_state"]
    closed_alpha0 = relative_entropy_product(marginals0, np.full(geom.n_sites, alpha))
    mu0 = product_distribution(geom, marginals0)
    exact_alpha0 = relative_entropy_distributions(mu0, nu_alpha)

    return {
        "side": n,
        "states": 1 << geom.n_sites,
        "stationarity_tv": float(stationarity_tv),
        "mc": mc_rows,
        "entropy": entropy_rows,
        "entropy_t0_closed_form": float(closed0),
        "entropy_t0_exact": float(exact0),
        "entropy_t0_vs_flat_closed_form": float(closed_alpha0),
        "entropy_t0_vs_flat_exact": float(exact_alpha0),
        "replicas": mc_replicas,
    }


def _json_bytes(data: dict) -> bytes:
    return json.dumps(data, indent=1, sort_keys=True).encode()


def emit_outputs(report: ComparisonReport, output_dir, formats) -> list:
    """Write report files; byte-identical across reruns with equal seeds."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    data = report.to_dict()
    if "json" in formats:
        path = out / "report.json"
        path.write_bytes(_json_bytes(data))
        written.append(str(path))
    if "csv" in formats:
        path = out / "distances.csv"
        lines = ["N,t,L1,L2,Linf"]
        for row in report.rows:
            lines.append(",".join(repr(v) for v in
                                  (row["N"], row["t"], row["L1"], row["L2"],
                                   row["Linf"])))
        path.write_text("\n".join(lines) + "\n")
        written.append(str(path))
    if "dat" in formats or "plot" in formats:
        path = out / "distances.dat"
        lines = ["# N t L1 L2 Linf"]
        for row in report.rows:
            lines.append(" ".join(repr(v) for v in
                                  (row["N"], row["t"], row["L1"], row["L2"],
                                   row["Linf"])))
        path.write_text("\n".join(lines) + "\n")
        written.append(str(path))
    meta = out / "run_meta.json"
    meta.write_text(json.dumps({"wall_time": time.time()}, indent=1))
    return written
