######
# Project       : nmpec
# File          : cli.py
# license       : Apache 2.0
# Description   :
# Command line driver. Subcommands:
#   nmpec validate  --config FILE
#   nmpec run       --config FILE [--seed N] [--threads N] [--out DIR] [--plans]
#   nmpec bounds    --config FILE [--out DIR] [--epsilon E] [--delta D]
#   nmpec sweep     --config FILE [--out DIR]
#   nmpec reference --config FILE [--out DIR]
# The driver is single threaded; trajectory parallelism lives in the engine.
######
import argparse
import csv
import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import scipy
from ascii_colors import ASCIIColors

import nmpec
from nmpec.bath import env_params
from nmpec.errors import NmpecError, StepSizeError
from nmpec.helpers import on_grid, trace_exception
from nmpec.main_config import ExperimentConfig
from nmpec.operators import MAX_BASIS_QUBITS
from nmpec.paths import RunPaths
from nmpec.pec import plans_table
from nmpec.qem import bounds, estimate, fit_overhead_constant, sweep_gamma_tot, write_bounds_csv, write_manifest, write_report_csv, write_sweep_csv
from nmpec.reference import propagate_noisy, write_reference_csv


@dataclass
class ValidationResult:
    path: str
    errors: List[str] = field(default_factory=list)
    summary: Dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1


def _load(path: Union[str, Path], seed: Optional[int] = None, threads: Optional[int] = None) -> ExperimentConfig:
    config = ExperimentConfig.autoload(path)
    run = config.config.setdefault("run", {})
    if seed is not None:
        run["seed"] = int(seed)
    if threads is not None:
        run["threads"] = int(threads)
    return config


def _paths(config: ExperimentConfig, out: Optional[Union[str, Path]]) -> RunPaths:
    return RunPaths(out or config.normalized()["output"]["directory"])


def cmd_validate(path: Union[str, Path]) -> ValidationResult:
    """Checks every invariant of a configuration file; exit code 0 iff valid."""
    result = ValidationResult(str(path))
    try:
        config = ExperimentConfig(path)
        run = config.build()
    except (NmpecError, FileNotFoundError) as ex:
        result.errors.append(str(ex))
        ASCIIColors.error(f"{path}: {ex}")
        return result
    result.summary["M"] = run.M
    result.summary["substeps"] = run.substeps
    if run.bath.n_poles:
        params = env_params(run.bath)
        result.summary.update({"g_env": params.g_env, "g_b2": params.g_b2, "theta": params.theta})
    ASCIIColors.success(f"{path} is valid")
    for key, value in result.summary.items():
        ASCIIColors.red(f"{key}: ", end="")
        ASCIIColors.yellow(f"{value:g}" if isinstance(value, float) else f"{value}")
    return result


def _versions() -> Dict[str, str]:
    return {"nmpec": nmpec.__version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def cmd_run(path: Union[str, Path], seed: Optional[int] = None, threads: Optional[int] = None,
            out: Optional[Union[str, Path]] = None, export_plans: bool = False) -> RunPaths:
    """Runs the configured ensembles and writes one CSV per observable plus a manifest."""
    start = time.perf_counter()
    config = _load(path, seed, threads)
    run = config.build()
    paths = _paths(config, out)
    plans = run.compile() if run.mode.mitigated else None
    if plans is not None and export_plans:
        with open(paths.plans_path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(plans_table(plans), f, indent=2)
            f.write("\n")
    report = estimate(run, plans)
    files = write_report_csv(report, paths.observables_path)
    write_bounds_csv(report.bounds, paths.bounds_path)
    write_manifest(paths.manifest_path, {
        "config_hash": config.config_hash(),
        "config": str(Path(path)),
        "seed": run.seed,
        "mode": run.mode.value,
        "N_r": run.N_r,
        "N_noisy": run.noisy_count,
        "M": run.M,
        "versions": _versions(),
        "wall_time": time.perf_counter() - start,
        "files": [str(f.relative_to(paths.out_dir)) for f in files],
        "warnings": report.warnings,
    })
    ASCIIColors.success(f"Results written to {paths.out_dir}")
    return paths


def cmd_bounds(path: Union[str, Path], out: Optional[Union[str, Path]] = None, epsilon: float = 0.1,
               delta: float = 0.05) -> RunPaths:
    config = _load(path)
    run = config.build()
    paths = _paths(config, out)
    plans = None
    if run.model.n <= MAX_BASIS_QUBITS:
        try:
            plans = run.compile()
        except StepSizeError as ex:
            ASCIIColors.warning(f"Plans not available for gamma_tot: {ex}")
    values = bounds(run, epsilon, delta, plans)
    write_bounds_csv(values, paths.bounds_path)
    for name, value in values.to_rows():
        ASCIIColors.red(f"{name}: ", end="")
        ASCIIColors.yellow(f"{value}")
    ASCIIColors.success(f"Bounds written to {paths.bounds_path}")
    return paths


def cmd_sweep(path: Union[str, Path], out: Optional[Union[str, Path]] = None) -> RunPaths:
    config = _load(path)
    run = config.build()
    paths = _paths(config, out)
    cutoffs, tables = config.sweep_tables()
    rows = sweep_gamma_tot(run, cutoffs, tables)
    write_sweep_csv(rows, paths.sweep_path)
    for row in rows:
        ASCIIColors.red(f"omega_c={row.omega_c:g}: ", end="")
        ASCIIColors.yellow(f"G_env={row.g_env:.6g} gamma_tot(T)={row.gamma_tot[-1]:.6g}")
    if rows:
        ASCIIColors.info(f"Fitted overhead constant: {fit_overhead_constant(rows, run.T):.6g}")
    ASCIIColors.success(f"Sweep written to {paths.sweep_path}")
    return paths


def write_spectrum_csv(times: Sequence[float], eigenvalues: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["t"] + [f"eig_{i}" for i in range(eigenvalues.shape[1])])
        for t, row in zip(times, eigenvalues):
            writer.writerow([repr(float(t))] + [repr(float(x)) for x in row])
    return path


def cmd_reference(path: Union[str, Path], out: Optional[Union[str, Path]] = None) -> RunPaths:
    """Deterministic master-equation trajectory and the Gamma(t) eigenvalue monitor."""
    config = _load(path)
    run = config.build()
    paths = _paths(config, out)
    psi0 = run.initial_state
    record_every = max(1, on_grid(run.dt, run.ode_step))
    generator = run.generator()
    states = propagate_noisy(run.model, run.bath, np.outer(psi0, psi0.conj()), run.T, run.ode_step,
                             record_every=record_every, generator=generator, recovery_step=run.dt)
    write_reference_csv(states, paths.states_path)
    times = [s.t for s in states]
    spectrum = generator.gamma_series(times, exact=True)
    write_spectrum_csv(times, spectrum, paths.spectrum_path)
    crossing = next((t for t, row in zip(times, spectrum) if row[0] < -1e-12), None)
    if crossing is not None:
        ASCIIColors.warning(f"Smallest Gamma eigenvalue is negative from t={crossing:g} (not CP-divisible)")
    ASCIIColors.success(f"Reference written to {paths.reference_path}")
    return paths


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmpec", description="Probabilistic error cancellation of non-Markovian noise.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, required=True, help="experiment file (YAML or JSON)")
    outputs = argparse.ArgumentParser(add_help=False)
    outputs.add_argument("--out", type=str, default=None, help="output directory, overrides output.directory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check a configuration file")
    run = sub.add_parser("run", parents=[common, outputs], help="run the Monte Carlo ensembles")
    run.add_argument("--seed", type=int, default=None, help="overrides run.seed")
    run.add_argument("--threads", type=int, default=None, help="worker threads (default: hardware)")
    run.add_argument("--plans", action="store_true", help="also export the compiled quasi-probability plans")
    bnd = sub.add_parser("bounds", parents=[common, outputs], help="evaluate the error and overhead bounds")
    bnd.add_argument("--epsilon", type=float, default=0.1)
    bnd.add_argument("--delta", type=float, default=0.05)
    sub.add_parser("sweep", parents=[common, outputs], help="gamma_tot against the bath cutoff")
    sub.add_parser("reference", parents=[common, outputs], help="deterministic master-equation reference")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args.config).exit_code
        if args.command == "run":
            cmd_run(args.config, args.seed, args.threads, args.out, args.plans)
        elif args.command == "bounds":
            cmd_bounds(args.config, args.out, args.epsilon, args.delta)
        elif args.command == "sweep":
            cmd_sweep(args.config, args.out)
        elif args.command == "reference":
            cmd_reference(args.config, args.out)
    except (NmpecError, FileNotFoundError) as ex:
        ASCIIColors.error(f"{args.command} failed: {ex}")
        return 1
    except Exception as ex:
        trace_exception(ex)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
