######
# Project       : nmpec
# File          : qem.py
# license       : Apache 2.0
# Description   :
# Monte Carlo mitigation engine: noisy stochastic evolution interleaved with
# sampled recovery operations, estimators, bound calculators and result writers.
######
import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from ascii_colors import ASCIIColors

from nmpec.bath import BathSpec, EnvParams, env_params
from nmpec.errors import ConfigError, DimensionError, GridError, TrajectoryError
from nmpec.generator import SystemModel, TimeLocalGenerator
from nmpec.helpers import OPERATOR_TOL, on_grid, trajectory_rng
from nmpec.nmsse import DEFAULT_ABORT_FRACTION, DEFAULT_BATCH, NmsseIntegrator, NoiseSource, TrajectoryBatch, map_batches
from nmpec.operators import MAX_BASIS_QUBITS, apply_basis_ops_batch, basis_kraus_stack, basis_operations, density_expectation, expectation, is_hermitian
from nmpec.pec import DEFAULT_GAMMA_CAP, QuasiProbabilityPlan, compile_plans, gamma_tot, gamma_tot_series, overhead_constant
from nmpec.reference import ODE_SUBSTEPS, propagate_ideal
from nmpec.types import HistoryMode, MITIGATED_STREAM, NOISY_STREAM, RunMode

# Leading constant of the sample-count prescription N_r = c ln(1/delta) e^{lam^2 T G_env} / eps^2
SAMPLE_CONSTANT = 4.0
REPORT_COLUMNS = ["t", "ideal", "noisy_mean", "noisy_stderr", "mitigated_mean", "mitigated_stderr", "gamma_tot"]


@dataclass(frozen=True)
class RunConfig:
    """Everything one mitigation experiment needs.

    Raises:
        ConfigError: T not a multiple of dt, dt_f not dividing dt, N_r < 1,
            non-Hermitian observables or an unnormalized initial state.
    """
    model: SystemModel = field(repr=False)
    bath: BathSpec = field(repr=False)
    T: float
    dt: float
    dt_f: float
    N_r: int
    seed: int
    observables: Tuple[np.ndarray, ...] = field(repr=False)
    initial_state: np.ndarray = field(repr=False)
    mode: RunMode = RunMode.BOTH
    observable_labels: Tuple[str, ...] = ()
    N_noisy: Optional[int] = None
    noise_dt: Optional[float] = None
    quad_step: Optional[float] = None
    dt_ode: Optional[float] = None
    gamma_cap: Optional[float] = DEFAULT_GAMMA_CAP
    batch_size: int = DEFAULT_BATCH
    threads: Optional[int] = None
    history_mode: HistoryMode = HistoryMode.POST
    abort_fraction: float = DEFAULT_ABORT_FRACTION
    progress: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", RunMode(self.mode))
        object.__setattr__(self, "history_mode", HistoryMode(self.history_mode))
        if self.dt <= 0 or self.T <= 0:
            raise ConfigError(f"T={self.T} and dt={self.dt} must be positive", "run.dt")
        if on_grid(self.T, self.dt) < 1:
            raise ConfigError(f"T={self.T} is not a multiple of dt={self.dt}", "run.T")
        if self.dt_f <= 0 or on_grid(self.dt, self.dt_f) < 1:
            raise ConfigError(f"dt_f={self.dt_f} does not divide dt={self.dt}", "run.dt_f")
        if self.dt_ode is not None and self.dt_ode != 0:
            if self.dt_ode < 0 or self.dt_ode > self.dt / ODE_SUBSTEPS * (1 + 1e-9) or on_grid(self.dt, self.dt_ode) < 1:
                raise ConfigError(f"dt_ode={self.dt_ode} must divide dt={self.dt} and not exceed dt/{ODE_SUBSTEPS}", "run.dt_ode")
        if self.N_r < 1:
            raise ConfigError(f"N_r must be at least 1, got {self.N_r}", "run.N_r")
        if self.N_noisy is not None and self.N_noisy < 1:
            raise ConfigError(f"N_noisy must be at least 1, got {self.N_noisy}", "run.N_noisy")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}", "run.batch_size")
        if not 0 <= self.abort_fraction < 1:
            raise ConfigError(f"abort_fraction must lie in [0, 1), got {self.abort_fraction}", "run.abort_fraction")
        d = self.model.dim
        observables = tuple(np.asarray(o, dtype=complex) for o in self.observables)
        for i, o in enumerate(observables):
            if o.shape != (d, d) or not is_hermitian(o):
                raise ConfigError(f"observable {i} is not a Hermitian {d}x{d} matrix", f"run.observables[{i}]")
        object.__setattr__(self, "observables", observables)
        labels = tuple(self.observable_labels) or tuple(f"O{i}" for i in range(len(observables)))
        if len(labels) != len(observables):
            raise ConfigError(f"{len(labels)} labels for {len(observables)} observables", "run.observables")
        object.__setattr__(self, "observable_labels", labels)
        psi0 = np.asarray(self.initial_state, dtype=complex).reshape(-1)
        if psi0.shape != (d,) or abs(np.vdot(psi0, psi0) - 1.0) > OPERATOR_TOL:
            raise ConfigError(f"initial state must be a normalized vector of length {d}", "run.initial_state")
        object.__setattr__(self, "initial_state", psi0)
        if self.mode.mitigated and self.model.n > MAX_BASIS_QUBITS:
            raise ConfigError(f"mitigation supports at most {MAX_BASIS_QUBITS} qubits, got {self.model.n}", "run.mode")

    @property
    def M(self) -> int:
        return on_grid(self.T, self.dt)

    @property
    def substeps(self) -> int:
        return on_grid(self.dt, self.dt_f)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.M + 1)

    @property
    def noisy_count(self) -> int:
        return self.N_noisy or self.N_r

    @property
    def ode_step(self) -> float:
        return self.dt_ode or min(self.dt_f, self.dt / ODE_SUBSTEPS)

    def generator(self) -> TimeLocalGenerator:
        return TimeLocalGenerator(self.model, self.bath, self.quad_step)

    def compile(self) -> List[QuasiProbabilityPlan]:
        return compile_plans(self.generator(), self.T, self.dt, self.gamma_cap)


@dataclass(frozen=True)
class TrajectoryOutcome:
    """One Monte Carlo sample.

    values[i, k] is coefficient[k] * <psi_k|O_i|psi_k>; indices holds the 1-based
    sampled operation per step (0 after death or without recovery).
    """
    index: int
    values: np.ndarray = field(repr=False)
    coefficient: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)
    dead: bool = False
    aborted: bool = False


@dataclass
class OutcomeBatch:
    start: int
    values: np.ndarray
    coefficient: np.ndarray
    indices: np.ndarray
    norms: np.ndarray
    dead: np.ndarray
    aborted: np.ndarray

    def outcome(self, i: int) -> TrajectoryOutcome:
        return TrajectoryOutcome(self.start + i, self.values[i], self.coefficient[i], self.indices[i], self.norms[i],
                                 bool(self.dead[i]), bool(self.aborted[i]))


@dataclass
class Moments:
    """Count, mean and centered second moment, merged pairwise across batches."""
    count: int
    mean: np.ndarray
    m2: np.ndarray

    @staticmethod
    def of(samples: np.ndarray) -> "Moments":
        if len(samples) == 0:
            return Moments(0, np.zeros(samples.shape[1:]), np.zeros(samples.shape[1:]))
        mean = samples.mean(axis=0)
        return Moments(len(samples), mean, np.sum((samples - mean) ** 2, axis=0))

    def merge(self, other: "Moments") -> "Moments":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        total = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / total
        m2 = self.m2 + other.m2 + delta ** 2 * self.count * other.count / total
        return Moments(total, mean, m2)

    @property
    def stderr(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


def merge_moments(parts: Sequence[Moments]) -> Moments:
    """Pairwise tree reduction in index order."""
    parts = list(parts)
    while len(parts) > 1:
        parts = [parts[i].merge(parts[i + 1]) if i + 1 < len(parts) else parts[i] for i in range(0, len(parts), 2)]
    return parts[0]


class MitigationEngine:
    """Runs trajectories of one RunConfig in batches.

    Each trajectory owns the generator trajectory_rng(seed, stream, index): its noise
    path is drawn first, then one uniform per recovery step.
    """

    def __init__(self, config: RunConfig, plans: Optional[Sequence[QuasiProbabilityPlan]] = None):
        self.config = config
        model = config.model
        if plans is None and config.mode.mitigated:
            plans = config.compile()
        self.plans = list(plans or [])
        if self.plans and len(self.plans) != config.M:
            raise GridError(f"{len(self.plans)} plans for {config.M} steps")
        self.noise = NoiseSource(config.bath, config.T, config.dt_f, config.noise_dt)
        self.integrator = NmsseIntegrator(model, config.bath, config.dt_f, config.M * config.substeps)
        self.observables = np.array(config.observables).reshape(-1, model.dim, model.dim)
        if model.n <= MAX_BASIS_QUBITS:
            self.kraus = basis_kraus_stack(model.n)
            self.projective = np.array([op.is_projective for op in basis_operations(model.n)])

    @property
    def warnings(self) -> List[str]:
        return self.noise.warnings

    def simulate(self, start: int, count: int, recover: bool) -> OutcomeBatch:
        cfg = self.config
        m = cfg.M
        stream = MITIGATED_STREAM if recover else NOISY_STREAM
        if recover and not self.plans:
            raise GridError("no recovery plans compiled for this engine")
        rngs = [trajectory_rng(cfg.seed, stream, start + i) for i in range(count)]
        noise = self.noise.draw(rngs)
        uniforms = np.array([rng.random(m) for rng in rngs]) if recover else None
        batch = TrajectoryBatch(self.integrator, cfg.initial_state, noise)

        values = np.zeros((count, len(self.observables), m + 1))
        coefficient = np.ones((count, m + 1))
        indices = np.zeros((count, m), dtype=int)
        norms = np.ones((count, m + 1))
        coeff = np.ones(count)
        values[:, :, 0] = expectation(batch.current, self.observables)
        for k in range(m):
            batch.advance(cfg.substeps)
            if recover:
                plan = self.plans[k]
                pos = plan.positions(uniforms[:, k])
                states, weights = apply_basis_ops_batch(self.kraus[pos], self.projective[pos], batch.current)
                live = batch.alive.copy()
                coeff = np.where(live, coeff * plan.gamma * plan.alpha[pos] * weights, 0.0)
                indices[:, k] = np.where(live, pos + 1, 0)
                batch.replace_current(states, cfg.history_mode)
                batch.kill(live & (weights == 0.0))
            coeff = np.where(batch.alive, coeff, 0.0)
            coefficient[:, k + 1] = coeff
            values[:, :, k + 1] = coeff[:, None] * expectation(batch.current, self.observables)
            norms[:, k + 1] = np.sum(np.abs(batch.current) ** 2, axis=1)
        dead = ~batch.alive & ~batch.aborted
        return OutcomeBatch(start, values, coefficient, indices, norms, dead, batch.aborted.copy())


def run_trajectory(config: RunConfig, plans: Sequence[QuasiProbabilityPlan], index: int,
                   engine: Optional[MitigationEngine] = None) -> TrajectoryOutcome:
    """One mitigated trajectory, reproducible from (config.seed, index) alone."""
    engine = engine or MitigationEngine(config, plans)
    return engine.simulate(index, 1, recover=True).outcome(0)


@dataclass
class ObservableSeries:
    """Per observable (rows) and output time (columns)."""
    mean: np.ndarray
    stderr: np.ndarray
    count: int
    dead: int = 0
    aborted: int = 0


@dataclass(frozen=True)
class BoundValues:
    env: Optional[EnvParams]
    hamiltonian_norm: float
    one_step: float
    bias: float
    gamma_bound: float
    overhead_constant: float
    required_samples_bound: int
    required_step: float
    gamma_tot: Optional[float] = None
    required_samples: Optional[int] = None

    def to_rows(self) -> List[Tuple[str, float]]:
        rows = [
            ("g_env", self.env.g_b1 if self.env else 0.0),
            ("g_b2", self.env.g_b2 if self.env else 0.0),
            ("theta", self.env.theta if self.env else 0.0),
            ("hamiltonian_norm", self.hamiltonian_norm),
            ("one_step", self.one_step),
            ("bias", self.bias),
            ("gamma_bound", self.gamma_bound),
            ("overhead_constant", self.overhead_constant),
            ("required_samples_bound", self.required_samples_bound),
            ("required_step", self.required_step),
        ]
        if self.gamma_tot is not None:
            rows += [("gamma_tot", self.gamma_tot), ("required_samples", self.required_samples)]
        return rows


@dataclass
class EstimateReport:
    times: np.ndarray
    labels: Tuple[str, ...]
    ideal: np.ndarray
    gamma_tot: np.ndarray
    bounds: BoundValues
    noisy: Optional[ObservableSeries] = None
    mitigated: Optional[ObservableSeries] = None
    warnings: List[str] = field(default_factory=list)

    def column(self, name: str, i: int) -> Optional[np.ndarray]:
        series = {"noisy": self.noisy, "mitigated": self.mitigated}[name.split("_")[0]]
        if series is None:
            return None
        return series.mean[i] if name.endswith("_mean") else series.stderr[i]


def _safe_env(bath: BathSpec) -> Optional[EnvParams]:
    return env_params(bath) if bath.n_poles else None


def bounds(config: RunConfig, epsilon: float = 0.1, delta: float = 0.05,
           plans: Optional[Sequence[QuasiProbabilityPlan]] = None) -> BoundValues:
    """Numeric values of the one-step, bias, overhead and sample-count bounds.

    one_step  = dt^2 lam^2 (|H| G_b1 + G_b2)                    (at t = 0)
    bias      = dt T lam^2 |H| G_b1 + dt^2 lam^2 G_b2 / (1 - e^{-theta dt})
    gamma     = exp(c lam^2 T G_b1), c = overhead_constant(n)
    N_r       = ceil(4 ln(1/delta) exp(lam^2 T G_b1) / eps^2)
    dt needed = eps / (lam^2 (T |H| G_b1 + G_b2 / (1 - e^{-theta})))
    """
    _check_accuracy(epsilon, delta)
    model = config.model
    lam2 = model.lam2
    h = model.hamiltonian_norm
    env = _safe_env(config.bath)
    g1, g2, theta = (env.g_b1, env.g_b2, env.theta) if env else (0.0, 0.0, math.inf)
    c = overhead_constant(model.n) if model.n <= MAX_BASIS_QUBITS else float("nan")
    dt, T = config.dt, config.T
    one_step = dt ** 2 * lam2 * (h * g1 + g2)
    bias = dt * T * lam2 * h * g1 + (dt ** 2 * lam2 * g2 / -math.expm1(-theta * dt) if g2 else 0.0)
    gamma_bound = math.exp(c * lam2 * T * g1) if lam2 * g1 else 1.0
    samples = math.ceil(SAMPLE_CONSTANT * math.log(1.0 / delta) * math.exp(lam2 * T * g1) / epsilon ** 2)
    denominator = lam2 * (T * h * g1 + (g2 / -math.expm1(-theta) if g2 else 0.0))
    step = epsilon / denominator if denominator > 0 else math.inf
    total = gamma_tot(plans) if plans is not None else None
    needed = required_samples(epsilon, delta, total) if total is not None else None
    return BoundValues(env, h, one_step, bias, gamma_bound, c, samples, step, total, needed)


def one_step_bound(config: RunConfig, t: float) -> float:
    """dt^2 lam^2 (|H| G_b1 + G_b2 e^{-theta t})."""
    env = _safe_env(config.bath)
    if env is None:
        return 0.0
    return config.dt ** 2 * config.model.lam2 * (config.model.hamiltonian_norm * env.g_b1 + env.g_b2 * math.exp(-env.theta * t))


def required_step(config: RunConfig, epsilon: float) -> float:
    """Largest dt for which the bias bound stays below epsilon."""
    return bounds(config, epsilon, 0.5).required_step


def _check_accuracy(epsilon: float, delta: float):
    if not 0 < epsilon <= 1:
        raise ConfigError(f"epsilon must lie in (0, 1], got {epsilon}", "epsilon")
    if not 0 < delta <= 1:
        raise ConfigError(f"delta must lie in (0, 1], got {delta}", "delta")


def required_samples(epsilon: float, delta: float, source: Union[float, RunConfig, Sequence[QuasiProbabilityPlan]]) -> int:
    """Smallest N_r with 2 exp(-N_r eps^2 / gamma_tot) <= delta.

    source is gamma_tot itself, compiled plans, or a RunConfig whose plans get compiled.
    """
    _check_accuracy(epsilon, delta)
    if isinstance(source, RunConfig):
        total = gamma_tot(source.compile())
    elif isinstance(source, (int, float)):
        total = float(source)
    else:
        total = gamma_tot(source)
    return max(1, math.ceil(total * math.log(2.0 / delta) / epsilon ** 2))


def ideal_expectations(config: RunConfig) -> np.ndarray:
    psi0 = config.initial_state
    rho0 = np.outer(psi0, psi0.conj())
    spectrum = config.model.spectrum
    obs = np.array(config.observables).reshape(-1, config.model.dim, config.model.dim)
    return np.array([density_expectation(propagate_ideal(spectrum, rho0, t).rho, obs) for t in config.times]).T


def _ensemble(engine: MitigationEngine, count: int, recover: bool) -> Tuple[ObservableSeries, Moments]:
    cfg = engine.config

    def work(start: int, size: int) -> Tuple[Moments, Moments, int, int]:
        batch = engine.simulate(start, size, recover)
        keep = ~batch.aborted
        return (Moments.of(batch.values[keep]), Moments.of(batch.norms[keep]),
                int(np.sum(batch.dead)), int(np.sum(batch.aborted)))

    desc = "mitigated" if recover else "noisy"
    parts = map_batches(work, count, cfg.batch_size, cfg.threads, cfg.progress, desc=desc)
    values = merge_moments([p[0] for p in parts])
    norms = merge_moments([p[1] for p in parts])
    dead = sum(p[2] for p in parts)
    aborted = sum(p[3] for p in parts)
    if aborted > cfg.abort_fraction * count:
        ASCIIColors.error(f"{aborted} of {count} {desc} trajectories aborted")
        raise TrajectoryError(f"{aborted} of {count} {desc} trajectories aborted (limit {cfg.abort_fraction:.2%})")
    if values.count == 0 or (recover and dead == values.count):
        raise TrajectoryError(f"all {count} {desc} trajectories died")
    return ObservableSeries(values.mean, values.stderr, values.count, dead, aborted), norms


def estimate(config: RunConfig, plans: Optional[Sequence[QuasiProbabilityPlan]] = None,
             epsilon: float = 0.1, delta: float = 0.05) -> EstimateReport:
    """Ensemble estimates of every observable at every multiple of dt.

    The mitigated mean is the plain average of the trajectory values. The noisy mean is
    renormalized by the ensemble trace. Ensembles run on disjoint random streams.

    Raises:
        TrajectoryError: all trajectories died, or too many aborted.
    """
    mode = config.mode
    if mode.mitigated and plans is None:
        ASCIIColors.info(f"Compiling {config.M} recovery plans")
        plans = config.compile()
    engine = MitigationEngine(config, plans)
    report = EstimateReport(
        times=config.times,
        labels=config.observable_labels,
        ideal=ideal_expectations(config),
        gamma_tot=gamma_tot_series(plans) if mode.mitigated else np.ones(config.M + 1),
        bounds=bounds(config, epsilon, delta, plans if mode.mitigated else None),
        warnings=list(engine.warnings),
    )
    if mode.noisy:
        ASCIIColors.info(f"Running {config.noisy_count} noisy trajectories")
        series, norms = _ensemble(engine, config.noisy_count, recover=False)
        series.mean = series.mean / norms.mean
        series.stderr = series.stderr / norms.mean
        report.noisy = series
    if mode.mitigated:
        ASCIIColors.info(f"Running {config.N_r} mitigated trajectories (gamma_tot={report.gamma_tot[-1]:.4g})")
        report.mitigated, _ = _ensemble(engine, config.N_r, recover=True)
        if report.mitigated.dead:
            ASCIIColors.info(f"{report.mitigated.dead} trajectories ended on a vanishing projection")
    for series in (report.noisy, report.mitigated):
        if series is not None and series.aborted:
            report.warnings.append(f"{series.aborted} trajectories aborted by the blow-up guard")
    return report


@dataclass(frozen=True)
class SweepRow:
    omega_c: float
    g_env: float
    times: np.ndarray = field(repr=False)
    gamma_tot: np.ndarray = field(repr=False)
    lam2: float = 0.0


def sweep_gamma_tot(config: RunConfig, cutoffs: Sequence[float], tables: Mapping[float, BathSpec]) -> List[SweepRow]:
    """gamma_tot(t) of the config's model for the pole table of every cutoff.

    Raises:
        ConfigError: a requested cutoff has no pole table.
    """
    rows = []
    for omega_c in cutoffs:
        bath = next((b for c, b in tables.items() if abs(float(c) - float(omega_c)) <= 1e-9 * max(1.0, abs(omega_c))), None)
        if bath is None:
            raise ConfigError(f"no pole table for cutoff {omega_c}", "sweep.tables")
        if bath.channels != config.model.channels:
            raise DimensionError(f"pole table for cutoff {omega_c} has {bath.channels} channels, model has {config.model.channels}")
        generator = TimeLocalGenerator(config.model, bath, config.quad_step)
        plans = compile_plans(generator, config.T, config.dt, config.gamma_cap)
        rows.append(SweepRow(float(omega_c), env_params(bath).g_b1, config.times, gamma_tot_series(plans),
                             config.model.lam2))
    return rows


def fit_overhead_constant(rows: Sequence[SweepRow], T: float, lam2: Optional[float] = None) -> float:
    """Smallest c with log gamma_tot(T) <= c lam^2 T G_env for every row.

    Rows may come from sweeps at different couplings; each uses its own lam^2 unless
    lam2 is given.
    """
    ratios = []
    for row in rows:
        scale = (row.lam2 if lam2 is None else lam2) * T * row.g_env
        if scale > 0:
            ratios.append(math.log(row.gamma_tot[-1]) / scale)
    return max(ratios, default=0.0)


def _label_filename(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label).strip("_") or "observable"


def _cell(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def write_report_csv(report: EstimateReport, out_dir: Union[str, Path]) -> List[Path]:
    """One CSV per observable with the fixed column order of REPORT_COLUMNS."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, label in enumerate(report.labels):
        path = out_dir / f"{_label_filename(label)}.csv"
        columns = {name: report.column(name, i) for name in REPORT_COLUMNS[2:6]}
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            for k, t in enumerate(report.times):
                row = [_cell(t), _cell(report.ideal[i, k])]
                row += [_cell(None if columns[name] is None else columns[name][k]) for name in REPORT_COLUMNS[2:6]]
                row.append(_cell(report.gamma_tot[k]))
                writer.writerow(row)
        paths.append(path)
    return paths


def write_bounds_csv(values: BoundValues, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["quantity", "value"])
        for name, value in values.to_rows():
            writer.writerow([name, value if isinstance(value, int) else _cell(value)])
    return path


def write_sweep_csv(rows: Sequence[SweepRow], path: Union[str, Path]) -> Path:
    """Long format: one line per (cutoff, time)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["omega_c", "g_env", "t", "gamma_tot"])
        for row in rows:
            for t, value in zip(row.times, row.gamma_tot):
                writer.writerow([_cell(row.omega_c), _cell(row.g_env), _cell(t), _cell(value)])
    return path


def write_manifest(path: Union[str, Path], entries: Dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as f:
        json.dump(entries, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
