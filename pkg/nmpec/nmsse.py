######
# Project       : nmpec
# File          : nmsse.py
# license       : Apache 2.0
# Description   :
# Linear non-Markovian stochastic Schrodinger equation with colored noise and
# a memory integral, integrated for batches of trajectories.
######
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from ascii_colors import ASCIIColors
from tqdm import tqdm

from nmpec.bath import BathSpec, NoisePath, NoiseSampler, bcf_series
from nmpec.errors import GridError, TrajectoryError
from nmpec.generator import SystemModel
from nmpec.helpers import on_grid, trajectory_rng
from nmpec.reference import DensityState
from nmpec.types import HistoryMode, NOISY_STREAM

BLOWUP_NORM = 10.0
# Memory contributions with e^{-theta tau} below this are dropped
HISTORY_CUTOFF = 1e-8
DEFAULT_BATCH = 256
DEFAULT_ABORT_FRACTION = 0.01

R = TypeVar("R")


def memory_kernel(model: SystemModel, bath: BathSpec, taus: np.ndarray) -> np.ndarray:
    """K(tau) = sum_jk C_jk(tau) S_j e^{-i H tau} S_k, shape (len(taus), d, d)."""
    taus = np.asarray(taus, dtype=float)
    corr = bcf_series(bath, taus)
    s = model.coupling_stack
    props = np.array([model.spectrum.propagator(tau) for tau in taus])
    return np.einsum("tjk,jab,tbc,kcd->tad", corr, s, props, s, optimize=True)


def history_window(bath: BathSpec, dt: float) -> int:
    """Number of past grid points the memory integral keeps."""
    if bath.n_poles == 0:
        return 0
    theta = float(np.min(bath.omegas.imag))
    return int(np.ceil(np.log(1.0 / HISTORY_CUTOFF) / theta / dt))


class NmsseIntegrator:
    """Read-only propagation data of one (model, bath, fine step) triple.

    One step uses exact propagation under H_S, a Heun predictor-corrector on the memory
    drift and an Euler treatment of the noise:

        D(t, psi)  = -lam^2 int_0^t K(tau) psi(t - tau) dtau    (trapezoid on the grid)
        N_n        = lam sum_j eta_j(t_n) S_j psi_n
        predictor  = U (psi_n + dt (D_n + N_n))
        psi_{n+1}  = U (psi_n + dt/2 D_n + dt N_n) + dt/2 D(t_{n+1}, predictor)

    with U = e^{-i H_S dt}. At zero coupling a step is the exact unitary.
    """

    def __init__(self, model: SystemModel, bath: BathSpec, dt: float, n_steps: int):
        if dt <= 0:
            raise GridError(f"fine step must be positive, got {dt}")
        self.model = model
        self.bath = bath
        self.dt = float(dt)
        self.n_steps = int(n_steps)
        self.window = min(self.n_steps, history_window(bath, self.dt))
        self.kernel = memory_kernel(model, bath, self.dt * np.arange(self.window + 1))
        self.unitary = model.spectrum.propagator(self.dt)
        self.couplings = model.coupling_stack

    def memory(self, history: np.ndarray, current: np.ndarray, n: int) -> np.ndarray:
        """Trapezoidal int_0^{t_n} K(tau) psi(t_n - tau) dtau for a batch.

        history[:, k] holds psi at grid point k < n; current holds psi_n.
        """
        m = min(n, self.window)
        if m == 0:
            return np.zeros_like(current)
        out = 0.5 * current @ self.kernel[0].T
        past = history[:, n - m:n][:, ::-1]                    # psi_{n-1}, ..., psi_{n-m}
        weights = np.ones(m)
        if m == n:
            weights[-1] = 0.5
        out = out + np.einsum("i,iab,zib->za", weights, self.kernel[1:m + 1], past)
        return self.dt * out

    def noise_term(self, eta: np.ndarray, psi: np.ndarray) -> np.ndarray:
        """lam sum_j eta_j S_j psi for eta (B, J) and psi (B, d)."""
        return self.model.coupling_strength * np.einsum("zj,jab,zb->za", eta, self.couplings, psi)

    def step(self, history: np.ndarray, current: np.ndarray, n: int, eta: np.ndarray) -> np.ndarray:
        """psi_{n+1} for the batch; history[:, n] must already hold the state at t_n."""
        lam2 = self.model.lam2
        ut = self.unitary.T
        if lam2 == 0.0:
            return current @ ut
        drift = -lam2 * self.memory(history, current, n)
        noise = self.noise_term(eta, current)
        predictor = (current + self.dt * (drift + noise)) @ ut
        drift_next = -lam2 * self.memory(history, predictor, n + 1)
        return (current + 0.5 * self.dt * drift + self.dt * noise) @ ut + 0.5 * self.dt * drift_next


class TrajectoryBatch:
    """Mutable state of a batch of trajectories sharing one fine grid.

    history[:, k] is the state the memory integral sees at grid point k and current the
    state being propagated; they differ only after a basis operation in PRE mode.
    """

    def __init__(self, integrator: NmsseIntegrator, psi0: np.ndarray, noise: np.ndarray):
        count = noise.shape[0]
        d = integrator.model.dim
        self.integrator = integrator
        self.noise = noise
        self.history = np.zeros((count, integrator.n_steps + 1, d), dtype=complex)
        self.current = np.broadcast_to(np.asarray(psi0, dtype=complex), (count, d)).copy()
        self.n = 0
        self.alive = np.ones(count, dtype=bool)
        self.aborted = np.zeros(count, dtype=bool)
        self._pinned = False

    @property
    def size(self) -> int:
        return len(self.current)

    def advance(self, steps: int):
        integ = self.integrator
        for _ in range(steps):
            if self.n >= integ.n_steps:
                raise GridError("trajectory advanced past the end of its grid")
            if not self._pinned:
                self.history[:, self.n] = self.current
            self._pinned = False
            nxt = integ.step(self.history, self.current, self.n, self.noise[:, self.n])
            self.n += 1
            norms = np.linalg.norm(nxt, axis=1)
            blown = self.alive & (~np.isfinite(norms) | (norms > BLOWUP_NORM))
            if np.any(blown):
                self.aborted |= blown
                self.alive &= ~blown
            nxt[~self.alive] = 0.0
            self.current = nxt
        if self.n == integ.n_steps:
            self.history[:, self.n] = self.current

    def replace_current(self, states: np.ndarray, mode: HistoryMode = HistoryMode.POST):
        """Installs post-operation states at the current grid point."""
        if HistoryMode(mode) is HistoryMode.PRE:
            self.history[:, self.n] = self.current
            self._pinned = True
        self.current = np.where(self.alive[:, None], states, 0.0)

    def kill(self, mask: np.ndarray):
        self.alive &= ~mask
        self.current[mask] = 0.0


def resample_noise(values: np.ndarray, source_dt: float, target_times: np.ndarray) -> np.ndarray:
    """Linear interpolation of paths (B, L, J) from a grid of step source_dt onto target_times."""
    source_times = source_dt * np.arange(values.shape[1])
    out = np.empty((values.shape[0], len(target_times), values.shape[2]), dtype=complex)
    for b in range(values.shape[0]):
        for j in range(values.shape[2]):
            out[b, :, j] = (np.interp(target_times, source_times, values[b, :, j].real)
                            + 1j * np.interp(target_times, source_times, values[b, :, j].imag))
    return out


class NoiseSource:
    """Draws fine-grid noise for trajectories, one private random stream each."""

    def __init__(self, bath: BathSpec, T: float, dt_f: float, noise_dt: Optional[float] = None):
        self.dt_f = float(dt_f)
        self.noise_dt = float(noise_dt or dt_f)
        n_fine = on_grid(T, self.dt_f)
        if n_fine < 0:
            raise GridError(f"T={T} is not a multiple of the fine step {dt_f}")
        self.fine_times = self.dt_f * np.arange(n_fine + 1)
        n_noise = int(np.ceil(T / self.noise_dt - 1e-9)) + 1
        self.sampler = NoiseSampler(bath, self.noise_dt, n_noise)

    @property
    def warnings(self) -> List[str]:
        return self.sampler.warnings

    def draw(self, rngs: Sequence[np.random.Generator]) -> np.ndarray:
        values = self.sampler.draw_many(rngs)
        if self.noise_dt == self.dt_f:
            return values[:, :len(self.fine_times)]
        return resample_noise(values, self.noise_dt, self.fine_times)


def map_batches(fn: Callable[[int, int], R], total: int, batch_size: int, threads: Optional[int] = None,
                progress: bool = True, desc: str = "trajectories") -> List[R]:
    """Runs fn(start, count) over fixed-size index batches, results in index order.

    The partition depends only on total and batch_size, never on the thread count.
    """
    starts = list(range(0, total, batch_size))
    jobs = [(s, min(batch_size, total - s)) for s in starts]
    bar = tqdm(total=len(jobs), desc=desc, disable=not progress)
    results: List[R] = []
    try:
        if threads is not None and threads <= 1:
            for start, count in jobs:
                results.append(fn(start, count))
                bar.update(1)
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for result in pool.map(lambda job: fn(*job), jobs):
                    results.append(result)
                    bar.update(1)
    finally:
        bar.close()
    return results


@dataclass(frozen=True)
class StochasticTrajectory:
    """One trajectory: fine grid, states at every elapsed grid point and its noise."""
    times: np.ndarray = field(repr=False)
    psi_history: np.ndarray = field(repr=False)
    noise: NoisePath = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.psi_history) - 1

    @property
    def state(self) -> np.ndarray:
        return self.psi_history[-1]


def start_trajectory(model: SystemModel, bath: BathSpec, psi0: np.ndarray, T: float, dt_f: float, seed: int,
                     index: int = 0, stream: int = NOISY_STREAM) -> StochasticTrajectory:
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.vdot(psi0, psi0) - 1.0) > 1e-8:
        raise TrajectoryError("initial state must be normalized")
    source = NoiseSource(bath, T, dt_f)
    noise = source.draw([trajectory_rng(seed, stream, index)])[0]
    return StochasticTrajectory(source.fine_times, psi0[None, :].copy(), NoisePath(source.fine_times, noise))


def nmsse_step(model: SystemModel, bath: BathSpec, traj: StochasticTrajectory, dt_f: float,
               integrator: Optional[NmsseIntegrator] = None) -> StochasticTrajectory:
    """Advances one trajectory by one fine step.

    Raises:
        TrajectoryError: when the state norm exceeds the blow-up guard.
    """
    n_steps = len(traj.times) - 1
    if traj.n >= n_steps:
        raise GridError("trajectory already reached the end of its grid")
    if len(traj.times) > 1 and abs(traj.times[1] - dt_f) > 1e-12:
        raise GridError(f"trajectory grid step {traj.times[1]} differs from dt_f={dt_f}")
    integrator = integrator or NmsseIntegrator(model, bath, dt_f, n_steps)
    history = np.zeros((1, n_steps + 1, model.dim), dtype=complex)
    history[0, :traj.n + 1] = traj.psi_history
    nxt = integrator.step(history, traj.psi_history[-1][None, :], traj.n, traj.noise.values[traj.n][None, :])[0]
    norm = float(np.linalg.norm(nxt))
    if not np.isfinite(norm) or norm > BLOWUP_NORM:
        ASCIIColors.warning(f"Trajectory blew up at t={traj.times[traj.n + 1]:g} (norm {norm:.3g})")
        raise TrajectoryError(f"state norm {norm:.3g} exceeds {BLOWUP_NORM} at step {traj.n + 1}")
    return StochasticTrajectory(traj.times, np.vstack([traj.psi_history, nxt]), traj.noise)


@dataclass
class EnsembleResult:
    """Trace-normalized ensemble densities with their entrywise standard errors."""
    states: List[DensityState]
    stderr: np.ndarray
    mean_trace: np.ndarray
    count: int
    aborted: int
    warnings: List[str] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])


def ensemble_density(model: SystemModel, bath: BathSpec, psi0: np.ndarray, T: float, dt_f: float, N: int, seed: int,
                     record_every: int = 1, batch_size: int = DEFAULT_BATCH, threads: Optional[int] = None,
                     noise_dt: Optional[float] = None, abort_fraction: float = DEFAULT_ABORT_FRACTION,
                     progress: bool = False, stream: int = NOISY_STREAM) -> EnsembleResult:
    """rho(t) = mean of psi psi^dag over N trajectories, renormalized to unit trace.

    Raises:
        TrajectoryError: when more than abort_fraction of the trajectories blew up.
    """
    if N < 1:
        raise TrajectoryError(f"ensemble size must be at least 1, got {N}")
    psi0 = np.asarray(psi0, dtype=complex)
    source = NoiseSource(bath, T, dt_f, noise_dt)
    n_steps = len(source.fine_times) - 1
    integrator = NmsseIntegrator(model, bath, dt_f, n_steps)
    recorded = list(range(0, n_steps + 1, record_every))
    if recorded[-1] != n_steps:
        recorded.append(n_steps)

    def run(start: int, count: int) -> Tuple[np.ndarray, np.ndarray, int]:
        rngs = [trajectory_rng(seed, stream, start + i) for i in range(count)]
        batch = TrajectoryBatch(integrator, psi0, source.draw(rngs))
        batch.advance(n_steps)
        states = batch.history[:, recorded]                      # (B, R, d)
        keep = ~batch.aborted
        outer = np.einsum("zri,zrj->zrij", states[keep], states[keep].conj())
        return outer.sum(axis=0), (np.abs(outer) ** 2).sum(axis=0), int(np.sum(batch.aborted))

    parts = map_batches(run, N, batch_size, threads, progress, desc="nmsse")
    first = np.sum([p[0] for p in parts], axis=0)
    second = np.sum([p[1] for p in parts], axis=0)
    aborted = sum(p[2] for p in parts)
    warnings = list(source.warnings)
    if aborted:
        message = f"{aborted} of {N} trajectories aborted by the blow-up guard"
        ASCIIColors.warning(message)
        warnings.append(message)
    if aborted > abort_fraction * N:
        raise TrajectoryError(f"{aborted} of {N} trajectories aborted (limit {abort_fraction:.2%})")
    count = N - aborted
    mean = first / count
    variance = np.clip(second / count - np.abs(mean) ** 2, 0.0, None)
    traces = np.real(np.einsum("rii->r", mean))
    states = [DensityState(float(source.fine_times[k]), mean[r] / traces[r]) for r, k in enumerate(recorded)]
    stderr = np.sqrt(variance / count) / traces[:, None, None]
    return EnsembleResult(states, stderr, traces, count, aborted, warnings)
