######
# Project       : nmpec
# File          : reference.py
# license       : Apache 2.0
# Description   :
# Deterministic oracles: ideal propagation, the time-local master equation,
# the second-order perturbative state and exactly solvable dephasing.
######
import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from ascii_colors import ASCIIColors

from nmpec.bath import BathSpec, bcf_series
from nmpec.errors import EnumerationError, GridError, StepSizeError
from nmpec.generator import Spectrum, SystemModel, TimeLocalGenerator, heisenberg
from nmpec.helpers import OPERATOR_TOL, on_grid
from nmpec.operators import basis_operations, trace_norm
from nmpec.pec import QuasiProbabilityPlan, apply_plan
from nmpec.types import ExactMethod

TRACE_ABORT = 1e-6
# minimum RK4 substeps per recovery step
ODE_SUBSTEPS = 4
# Explicit enumeration limits per qubit count, and on the number of live branches
ENUMERATION_LIMITS = {1: 6, 2: 3}
MAX_BRANCHES = 2 ** 22


@dataclass(frozen=True)
class DensityState:
    t: float
    rho: np.ndarray = field(repr=False)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.rho))

    def is_valid(self, tol: float = OPERATOR_TOL, negativity: float = 1e-6) -> bool:
        rho = self.rho
        if np.max(np.abs(rho - rho.conj().T)) > tol or abs(np.trace(rho) - 1.0) > tol:
            return False
        return float(np.min(np.linalg.eigvalsh((rho + rho.conj().T) / 2))) >= -negativity

    def expectation(self, observable: np.ndarray) -> float:
        return float(np.real(np.trace(observable @ self.rho)))


def propagate_ideal(hamiltonian: Union[np.ndarray, Spectrum], rho0: np.ndarray, t: float) -> DensityState:
    spectrum = hamiltonian if isinstance(hamiltonian, Spectrum) else Spectrum.of(hamiltonian)
    u = spectrum.propagator(t)
    return DensityState(t, u @ rho0 @ u.conj().T)


def _rhs(model: SystemModel, generator: TimeLocalGenerator, t: float, rho: np.ndarray) -> np.ndarray:
    h = model.hamiltonian
    return -1j * (h @ rho - rho @ h) + generator.apply(t, rho, exact=True)


def rk4_segment(model: SystemModel, generator: TimeLocalGenerator, rho: np.ndarray, t0: float, t1: float, dt_ode: float) -> np.ndarray:
    """Classic RK4 of the master equation from t0 to t1 (a multiple of dt_ode apart).

    rho may carry leading batch dimensions.
    """
    steps = on_grid(t1 - t0, dt_ode)
    if steps < 0:
        raise GridError(f"interval [{t0}, {t1}] is not a multiple of dt_ode={dt_ode}")
    t = t0
    for _ in range(steps):
        k1 = _rhs(model, generator, t, rho)
        k2 = _rhs(model, generator, t + dt_ode / 2, rho + dt_ode / 2 * k1)
        k3 = _rhs(model, generator, t + dt_ode / 2, rho + dt_ode / 2 * k2)
        k4 = _rhs(model, generator, t + dt_ode, rho + dt_ode * k3)
        rho = rho + dt_ode / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt_ode
    return rho


def check_ode_step(dt_ode: float, dt: float):
    if dt_ode <= 0 or dt_ode > dt / ODE_SUBSTEPS * (1 + 1e-9):
        raise StepSizeError(f"dt_ode={dt_ode} must lie in (0, dt/{ODE_SUBSTEPS}] for dt={dt}")


def propagate_noisy(model: SystemModel, bath: BathSpec, rho0: np.ndarray, T: float, dt_ode: float,
                    record_every: int = 1, generator: Optional[TimeLocalGenerator] = None,
                    recovery_step: Optional[float] = None) -> List[DensityState]:
    """Integrates d rho/dt = -i[H_S, rho] + L_N(t) rho with RK4.

    L_N(t) uses the closed-form memory operators, so the scheme keeps fourth order.

    Raises:
        StepSizeError: when the trace drifts by more than 1e-6, or when dt_ode
            exceeds recovery_step / 4.
    """
    if recovery_step is not None:
        check_ode_step(dt_ode, recovery_step)
    steps = on_grid(T, dt_ode)
    if steps < 0:
        raise GridError(f"T={T} is not a multiple of dt_ode={dt_ode}")
    generator = generator or TimeLocalGenerator(model, bath)
    rho = np.array(rho0, dtype=complex)
    trace0 = np.trace(rho)
    states = [DensityState(0.0, rho.copy())]
    for k in range(steps):
        rho = rk4_segment(model, generator, rho, k * dt_ode, (k + 1) * dt_ode, dt_ode)
        drift = abs(np.trace(rho) - trace0)
        if drift > TRACE_ABORT:
            ASCIIColors.error(f"Master equation trace drift {drift:.3e} at t={(k + 1) * dt_ode:g}")
            raise StepSizeError(f"trace drift {drift:.3e} exceeds {TRACE_ABORT}; reduce dt_ode={dt_ode}")
        if (k + 1) % record_every == 0 or k + 1 == steps:
            states.append(DensityState((k + 1) * dt_ode, rho.copy()))
    return states


def second_order_state(model: SystemModel, bath: BathSpec, rho0: np.ndarray, t: float, quad_points: int = 400) -> DensityState:
    """Perturbative state to order lam^2 by a 2-D trapezoidal rule on 0 <= t2 <= t1 <= t.

    In the interaction picture
        rho_I(t) = rho0 + lam^2 int dt1 int_0^{t1} dt2 sum_jk [C*_jk S_j(t1) rho0 S_k(t2)
                   + C_jk S_k(t2) rho0 S_j(t1) - C*_jk rho0 S_k(t2) S_j(t1) - C_jk S_j(t1) S_k(t2) rho0]
    with C_jk = C_jk(t1 - t2), and rho(t) = U rho_I U^dag.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if t <= 0 or model.coupling_strength == 0.0:
        return propagate_ideal(model.spectrum, rho0, t)
    n = int(quad_points)
    h = t / n
    grid = h * np.arange(n + 1)
    s = np.array([[heisenberg(op, tau, model.spectrum) for op in model.couplings] for tau in grid])  # (n+1, J, d, d)
    lags = bcf_series(bath, grid)                                                                    # (n+1, J, J)
    i_idx, k_idx = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    lower = i_idx >= k_idx
    # inner trapezoid over k <= i, outer trapezoid over i
    inner = np.where(lower, h, 0.0)
    inner[:, 0] *= 0.5
    inner[np.arange(n + 1), np.arange(n + 1)] *= 0.5
    inner[0, 0] = 0.0
    outer = np.full(n + 1, h)
    outer[[0, -1]] *= 0.5
    weights = outer[:, None] * inner
    corr = lags[np.where(lower, i_idx - k_idx, 0)] * weights[:, :, None, None]                      # (i, k, J, J)
    corr_c = np.conj(lags[np.where(lower, i_idx - k_idx, 0)]) * weights[:, :, None, None]
    sandwich = np.einsum("ikab,iaxy,yz,kbzw->xw", corr_c, s, rho0, s, optimize=True)
    trailing = np.einsum("ikab,yz,kbzw,iawv->yv", corr_c, rho0, s, s, optimize=True)
    leading = np.einsum("ikab,iaxy,kbyz,zw->xw", corr, s, s, rho0, optimize=True)
    correction = sandwich + sandwich.conj().T - trailing - leading
    rho_i = rho0 + model.lam2 * correction
    return propagate_ideal(model.spectrum, rho_i, t)


def analytic_dephasing_coherence(g: complex, omega: complex, lam: float, t: Union[float, np.ndarray], splitting: float = 0.0,
                                 rho01: complex = 0.5) -> Union[complex, np.ndarray]:
    """rho_01(t) for H = -(splitting/2) Z, S = Z and a single pole (g, omega).

    rho_01(t) = rho_01(0) e^{i splitting t} exp(-4 lam^2 Re int_0^t A), where
    int_0^t A = |g|^2/(i w*) [t - (1 - e^{-i w* t})/(i w*)].
    """
    t = np.asarray(t, dtype=float)
    w = 1j * np.conj(omega)
    integral = abs(g) ** 2 / w * (t + np.expm1(-w * t) / w)
    value = rho01 * np.exp(1j * splitting * t) * np.exp(-4.0 * lam ** 2 * np.real(integral))
    return value if value.ndim else complex(value)


def analytic_dephasing_rate(g: complex, omega: complex, t: Union[float, np.ndarray]) -> Union[complex, np.ndarray]:
    """Closed form A_zz(t) = |g|^2 (1 - e^{-i w* t}) / (i w*)."""
    w = 1j * np.conj(omega)
    return -abs(g) ** 2 * np.expm1(-w * np.asarray(t, dtype=float)) / w


def _check_plans(plans: Sequence[QuasiProbabilityPlan], dt: float):
    for k, plan in enumerate(plans):
        if abs(plan.t - k * dt) > 1e-9 * max(1.0, k * dt):
            raise GridError(f"plan {k} starts at t={plan.t}, expected {k * dt}")


def mitigated_density_exact(model: SystemModel, bath: BathSpec, plans: Sequence[QuasiProbabilityPlan], rho0: np.ndarray,
                            dt: float, dt_ode: float, generator: Optional[TimeLocalGenerator] = None) -> np.ndarray:
    """Distributive evaluation of the quasi-probability sum: alternate the master-equation
    propagator of each step with the compiled recovery map."""
    _check_plans(plans, dt)
    check_ode_step(dt_ode, dt)
    generator = generator or TimeLocalGenerator(model, bath)
    rho = np.array(rho0, dtype=complex)
    for k, plan in enumerate(plans):
        rho = rk4_segment(model, generator, rho, k * dt, (k + 1) * dt, dt_ode)
        rho = apply_plan(plan, model.n, rho)
    return rho


def _enumerate_density(model: SystemModel, generator: TimeLocalGenerator, plans: Sequence[QuasiProbabilityPlan],
                       rho0: np.ndarray, dt: float, dt_ode: float) -> np.ndarray:
    ops = basis_operations(model.n)
    branches = np.array([rho0], dtype=complex)
    weights = np.array([1.0])
    for k, plan in enumerate(plans):
        support = plan.support
        if len(branches) * len(support) > MAX_BRANCHES:
            raise EnumerationError(f"enumeration would track {len(branches) * len(support)} branches")
        branches = rk4_segment(model, generator, branches, k * dt, (k + 1) * dt, dt_ode)
        # each branch picks index l with weight gamma * alpha_l * p_l = q_l
        new_branches = [np.array([ops[pos].apply_to_density(rho) for rho in branches]) for pos in support]
        branches = np.concatenate(new_branches, axis=0)
        weights = np.concatenate([weights * plan.q[pos] for pos in support])
    return np.einsum("b,bij->ij", weights, branches)


def mitigated_expectation_exact(model: SystemModel, bath: BathSpec, plans: Sequence[QuasiProbabilityPlan], observable: np.ndarray,
                                rho0: np.ndarray, dt: float, dt_ode: float, method: ExactMethod = ExactMethod.ENUMERATE,
                                generator: Optional[TimeLocalGenerator] = None) -> float:
    """Zero-variance limit of the mitigation estimator.

    The noisy evolution of each step is the master-equation propagator. ``enumerate``
    sums explicitly over index vectors (limited to 6 steps on one qubit and 3 on two),
    ``factorized`` evaluates the same sum step by step.

    Raises:
        EnumerationError: too many steps for explicit enumeration.
    """
    generator = generator or TimeLocalGenerator(model, bath)
    rho0 = np.asarray(rho0, dtype=complex)
    if not plans:
        return float(np.real(np.trace(observable @ rho0)))
    _check_plans(plans, dt)
    check_ode_step(dt_ode, dt)
    if ExactMethod(method) is ExactMethod.ENUMERATE:
        limit = ENUMERATION_LIMITS.get(model.n, 0)
        if len(plans) > limit:
            raise EnumerationError(f"explicit enumeration supports at most {limit} steps for {model.n} qubit(s), got {len(plans)}")
        rho = _enumerate_density(model, generator, plans, rho0, dt, dt_ode)
    else:
        rho = mitigated_density_exact(model, bath, plans, rho0, dt, dt_ode, generator)
    return float(np.real(np.trace(observable @ rho)))


def one_step_defect(model: SystemModel, bath: BathSpec, plan: QuasiProbabilityPlan, rho0: np.ndarray, dt: float, dt_ode: float,
                    generator: Optional[TimeLocalGenerator] = None) -> float:
    """Trace-norm distance between recovery(noisy step)(rho) and the ideal step from plan.t."""
    check_ode_step(dt_ode, dt)
    generator = generator or TimeLocalGenerator(model, bath)
    start = plan.t
    rho_start = propagate_ideal(model.spectrum, np.asarray(rho0, dtype=complex), start).rho
    noisy = rk4_segment(model, generator, rho_start, start, start + dt, dt_ode)
    recovered = apply_plan(plan, model.n, noisy)
    ideal = propagate_ideal(model.spectrum, rho_start, dt).rho
    return trace_norm(recovered - ideal)


def write_reference_csv(states: Sequence[DensityState], path: Union[str, Path]) -> Path:
    """t followed by real/imag parts of every rho entry, row-major."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = states[0].rho.shape[0] if states else 0
    header = ["t"] + [f"{part}_{i}{j}" for i, j in itertools.product(range(dim), repeat=2) for part in ("re", "im")]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for state in states:
            row = [repr(float(state.t))]
            for value in state.rho.reshape(-1):
                row += [repr(float(value.real)), repr(float(value.imag))]
            writer.writerow(row)
    return path
