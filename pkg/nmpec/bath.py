######
# Project       : nmpec
# File          : bath.py
# license       : Apache 2.0
# Description   :
# Pole-expanded bath correlation functions, environment constants and
# stationary colored Gaussian noise synthesis.
######
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from ascii_colors import ASCIIColors

from nmpec.errors import BathError, NoiseSynthesisError
from nmpec.helpers import complex_from_config, complex_to_config, trajectory_rng
from nmpec.types import NOISE_PATH_STREAM

# Circulant eigenvalues above -CLIP_TOL*scale are zeroed silently, above -FAIL_TOL*scale
# they are clipped with a warning, below the synthesis fails.
CLIP_TOL = 1e-10
FAIL_TOL = 1e-2
# Embedding is padded until the covariance has decayed below this fraction
EMBEDDING_DECAY = 1e-12
MAX_EMBEDDING = 2 ** 22


@dataclass(frozen=True)
class Pole:
    """One term g*_j g_k e^{i omega t} of the correlation function."""
    g: Tuple[complex, ...]
    omega: complex


@dataclass(frozen=True)
class BathSpec:
    """Bath correlation function C_jk(t) = sum_mu g*_{j,mu} g_{k,mu} e^{i omega_mu t}.

    Args:
        channels (int): number of coupling operators S_j.
        poles (tuple of Pole): every pole must satisfy Im(omega) > 0.

    Raises:
        BathError: on a non-decaying pole or an amplitude vector of the wrong length.
    """
    channels: int
    poles: Tuple[Pole, ...] = ()

    def __post_init__(self):
        if self.channels < 1:
            raise BathError(f"a bath needs at least one channel, got {self.channels}")
        poles = tuple(Pole(tuple(complex(x) for x in p.g), complex(p.omega)) for p in self.poles)
        object.__setattr__(self, "poles", poles)
        for i, pole in enumerate(poles):
            if not np.isfinite(pole.omega) or pole.omega.imag <= 0:
                raise BathError(f"pole {i}: non-decaying frequency {pole.omega}")
            if len(pole.g) != self.channels:
                raise BathError(f"pole {i}: {len(pole.g)} amplitudes for {self.channels} channels")

    @property
    def n_poles(self) -> int:
        return len(self.poles)

    @cached_property
    def amplitudes(self) -> np.ndarray:
        """(poles, channels) complex amplitudes g_{j,mu} stored pole-major."""
        return np.array([p.g for p in self.poles], dtype=complex).reshape(self.n_poles, self.channels)

    @cached_property
    def omegas(self) -> np.ndarray:
        return np.array([p.omega for p in self.poles], dtype=complex)

    def scaled(self, factor: float) -> "BathSpec":
        return BathSpec(self.channels, tuple(Pole(tuple(factor * x for x in p.g), p.omega) for p in self.poles))

    @staticmethod
    def from_config(block: dict, field_name: str = "bath") -> "BathSpec":
        """Builds a bath from ``{channels, convention, poles: [{g: [...], omega: [re, im]}]}``.

        ``convention: minus`` declares tables written with e^{-i omega t}; they are
        converted by omega -> -omega (same correlation function) and must still
        decay after conversion, otherwise the pole is rejected.
        """
        if not isinstance(block, dict):
            raise BathError(f"{field_name}: expected a mapping")
        convention = block.get("convention", "plus")
        if convention not in ("plus", "minus"):
            raise BathError(f"{field_name}.convention: expected 'plus' or 'minus', got {convention!r}")
        raw_poles = block.get("poles", []) or []
        channels = block.get("channels")
        if channels is None:
            channels = len(raw_poles[0]["g"]) if raw_poles else 1
        poles = []
        for i, raw in enumerate(raw_poles):
            try:
                g = tuple(complex_from_config(x) for x in raw["g"])
                omega = complex_from_config(raw["omega"])
            except (KeyError, TypeError, ValueError) as ex:
                raise BathError(f"{field_name}.poles[{i}]: {ex}")
            if convention == "minus":
                omega = -omega
            poles.append(Pole(g, omega))
        return BathSpec(int(channels), tuple(poles))

    def to_config(self) -> dict:
        return {
            "channels": self.channels,
            "convention": "plus",
            "poles": [{"g": [complex_to_config(x) for x in p.g], "omega": complex_to_config(p.omega)} for p in self.poles],
        }


def bcf_eval(bath: BathSpec, t: float) -> np.ndarray:
    """C_jk(t) as a (J, J) matrix; negative t uses C_jk(-t) = C_kj(t)*."""
    return bcf_series(bath, np.array([t]))[0]


def bcf_series(bath: BathSpec, times: np.ndarray) -> np.ndarray:
    """C_jk(t) for every t in times, shape (len(times), J, J)."""
    times = np.asarray(times, dtype=float)
    j = bath.channels
    if bath.n_poles == 0:
        return np.zeros(times.shape + (j, j), dtype=complex)
    g = bath.amplitudes
    weights = np.einsum("pj,pk->pjk", g.conj(), g)
    tau = np.abs(times)
    values = np.einsum("tp,pjk->tjk", np.exp(1j * np.outer(tau, bath.omegas)), weights)
    negative = times < 0
    if np.any(negative):
        values[negative] = np.conj(np.swapaxes(values[negative], -1, -2))
    return values


def bcf_l1(bath: BathSpec, t: float) -> float:
    """Element-wise 1-norm of C(t)."""
    return float(np.sum(np.abs(bcf_eval(bath, t))))


@dataclass(frozen=True)
class EnvParams:
    """Environment constants entering the error and overhead bounds."""
    g_b1: float
    g_b2: float
    theta: float

    @property
    def g_env(self) -> float:
        return self.g_b1


def env_params(bath: BathSpec) -> EnvParams:
    if bath.n_poles == 0:
        raise BathError("environment constants need at least one pole")
    weight = np.sum(np.abs(bath.amplitudes), axis=1) ** 2
    imag = bath.omegas.imag
    return EnvParams(
        g_b1=float(2.0 * np.sum(weight / imag)),
        g_b2=float(0.5 * np.sum(weight)),
        theta=float(np.min(imag)),
    )


def single_pole_family(omega_c: float, channels: int = 1, amplitude: float = 0.5) -> BathSpec:
    """One decaying pole omega = i/omega_c with g^2 = amplitude * omega_c^2 on every channel.

    G_env = 2 * channels^2 * amplitude * omega_c^3 grows with the cutoff.
    """
    if omega_c <= 0:
        raise BathError(f"cutoff must be positive, got {omega_c}")
    g = np.sqrt(amplitude) * omega_c
    return BathSpec(channels, (Pole(tuple([g] * channels), 1j / omega_c),))


@dataclass(frozen=True)
class NoisePath:
    """One sample eta_j(t_k) on a uniform grid, values of shape (len(times), J)."""
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation of every channel at time t."""
        re = [np.interp(t, self.times, self.values[:, j].real) for j in range(self.values.shape[1])]
        im = [np.interp(t, self.times, self.values[:, j].imag) for j in range(self.values.shape[1])]
        return np.array(re) + 1j * np.array(im)


def noise_covariance(bath: BathSpec, tau: np.ndarray) -> np.ndarray:
    """Stationary covariance R(tau)_jk = E[eta_j(t+tau) eta_k*(t)].

    R(tau) = C(tau)* for tau >= 0 and R(-tau) = R(tau)^dag; this convention makes the
    ensemble of the linear stochastic equation reproduce the time-local master equation.
    """
    return np.conj(bcf_series(bath, tau))


class NoiseSampler:
    """Circulant-embedding sampler of stationary complex Gaussian paths on a uniform grid.

    The covariance sequence is embedded into a block circulant of odd length
    M = 2 L - 1 (padded until the covariance has decayed), whose block eigenvalues are
    obtained by one FFT. Paths are eta = sqrt(M) * ifft(S^(1/2) z) with z complex
    standard normal, truncated to the requested points.

    Args:
        bath (BathSpec): correlation function to reproduce.
        dt (float): grid spacing.
        n_points (int): number of grid points 0, dt, ..., (n_points-1)*dt.
    """

    def __init__(self, bath: BathSpec, dt: float, n_points: int):
        if dt <= 0 or n_points < 1:
            raise NoiseSynthesisError(f"invalid noise grid dt={dt}, points={n_points}")
        self.bath = bath
        self.dt = float(dt)
        self.n_points = int(n_points)
        self.times = self.dt * np.arange(self.n_points)
        self.warnings: List[str] = []
        self.min_eigenvalue = 0.0
        self._sqrt_spectrum: Optional[np.ndarray] = None
        if bath.n_poles > 0:
            self._build()

    @property
    def channels(self) -> int:
        return self.bath.channels

    def _embedding_points(self) -> int:
        theta = float(np.min(self.bath.omegas.imag))
        decay_points = int(np.ceil(np.log(1.0 / EMBEDDING_DECAY) / theta / self.dt)) + 1
        points = max(self.n_points, decay_points)
        if 2 * points - 1 > MAX_EMBEDDING:
            raise NoiseSynthesisError(
                f"circulant embedding of {2 * points - 1} points exceeds {MAX_EMBEDDING}; increase noise_dt")
        return points

    def _build(self):
        points = self._embedding_points()
        m = 2 * points - 1
        lags = self.dt * np.arange(points)
        forward = noise_covariance(self.bath, lags)
        # r_k = R(k dt) for k < L, r_k = R((M-k) dt)^dag for the wrapped half
        wrapped = np.conj(np.swapaxes(forward[1:][::-1], -1, -2))
        sequence = np.concatenate([forward, wrapped], axis=0)
        spectrum = np.fft.fft(sequence, axis=0)
        spectrum = 0.5 * (spectrum + np.conj(np.swapaxes(spectrum, -1, -2)))
        eigvals, eigvecs = np.linalg.eigh(spectrum)
        scale = max(float(np.max(eigvals)), 0.0)
        self.min_eigenvalue = float(np.min(eigvals))
        if scale == 0.0:
            self._sqrt_spectrum = np.zeros_like(spectrum)
            self._m = m
            return
        worst = -self.min_eigenvalue / scale
        if worst > FAIL_TOL:
            ASCIIColors.error(f"Noise covariance is not positive after discretization (relative {worst:.3e})")
            raise NoiseSynthesisError(
                f"circulant embedding has eigenvalue {self.min_eigenvalue:.3e} (relative {worst:.3e} > {FAIL_TOL})")
        if worst > CLIP_TOL:
            message = f"clipped circulant eigenvalues down to {self.min_eigenvalue:.3e} (relative {worst:.3e})"
            ASCIIColors.warning(message)
            self.warnings.append(message)
        eigvals = np.clip(eigvals, 0.0, None)
        self._sqrt_spectrum = np.einsum("fij,fj,fkj->fik", eigvecs, np.sqrt(eigvals), eigvecs.conj())
        self._m = m

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        """One path of shape (n_points, J) drawn from rng."""
        return self.draw_many([rng])[0]

    def draw_many(self, rngs: Sequence[np.random.Generator]) -> np.ndarray:
        """One path per generator, stacked as (len(rngs), n_points, J).

        Each generator supplies exactly the normals of its own path, so the result for a
        given generator does not depend on the other members of the batch.
        """
        count = len(rngs)
        if self._sqrt_spectrum is None:
            return np.zeros((count, self.n_points, self.channels), dtype=complex)
        shape = (self._m, self.channels)
        z = np.empty((count,) + shape, dtype=complex)
        for b, rng in enumerate(rngs):
            normals = rng.standard_normal((2,) + shape)
            z[b] = (normals[0] + 1j * normals[1]) / np.sqrt(2.0)
        y = np.einsum("fij,bfj->bfi", self._sqrt_spectrum, z)
        paths = np.sqrt(self._m) * np.fft.ifft(y, axis=1)
        return paths[:, :self.n_points, :]


def noise_paths(bath: BathSpec, grid: np.ndarray, count: int, seed: int, stream: int = NOISE_PATH_STREAM) -> List[NoisePath]:
    """Independent noise paths on a uniform grid.

    Path i is drawn from the private stream (seed, stream, i), so every path is
    reproducible on its own.
    """
    grid = np.asarray(grid, dtype=float)
    if count < 1:
        raise NoiseSynthesisError(f"path count must be at least 1, got {count}")
    if len(grid) > 1:
        steps = np.diff(grid)
        if grid[0] != 0.0 or np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, grid[-1]):
            raise NoiseSynthesisError("noise grid must be uniform and start at 0")
        dt = float(steps[0])
    else:
        dt = 1.0
    sampler = NoiseSampler(bath, dt, len(grid))
    values = sampler.draw_many([trajectory_rng(seed, stream, i) for i in range(count)])
    return [NoisePath(grid.copy(), values[i]) for i in range(count)]


def bath_summary(bath: BathSpec) -> Dict[str, float]:
    params = env_params(bath)
    return {"g_env": params.g_b1, "g_b2": params.g_b2, "theta": params.theta, "poles": bath.n_poles}
