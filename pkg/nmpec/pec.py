######
# Project       : nmpec
# File          : pec.py
# license       : Apache 2.0
# Description   :
# Compiles the per-step recovery map I - dt L_N(t + dt) into quasi-probabilities
# over the recovery basis, and samples from them.
######
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from ascii_colors import ASCIIColors

from nmpec.errors import DimensionError, StepSizeError
from nmpec.generator import CoeffMatrix, TimeLocalGenerator, hermitian_split
from nmpec.helpers import on_grid
from nmpec.operators import MAX_BASIS_QUBITS, basis_operations, basis_ptm_matrix, pauli_basis

DEFAULT_GAMMA_CAP = 10.0
# Quasi-probabilities below this magnitude are dropped before normalization
ZERO_TOL = 1e-14
SOLVE_RESIDUAL = 1e-10


@dataclass(frozen=True)
class BasisCoeffs:
    """u[l, a, b]: expansion of rho -> V_a rho V_b - rho V_b V_a over the basis operations.

    The companion family rho -> V_a rho V_b - V_b V_a rho expands with conj(u[l, b, a]).
    """
    n: int
    u: np.ndarray = field(repr=False)
    residual: float = 0.0

    def conjugate_family(self) -> np.ndarray:
        return np.conj(np.swapaxes(self.u, 1, 2))

    @property
    def total_weight(self) -> float:
        """sum over (l, a, b) of |u|; sets the overhead constant."""
        return float(np.sum(np.abs(self.u)))


def commutator_family_ptms(n: int) -> np.ndarray:
    """PTM of rho -> V_a rho V_b - rho V_b V_a for every (a, b), shape (N, N, N, N)."""
    basis = pauli_basis(n)
    p = basis.elements
    sandwich = np.einsum("gij,ajk,dkl,bli->abgd", p, p, p, p, optimize=True)
    trailing = np.einsum("gij,djk,bkl,ali->abgd", p, p, p, p, optimize=True)
    return (sandwich - trailing) / basis.dim


@lru_cache(maxsize=None)
def basis_coeffs(n: int) -> BasisCoeffs:
    """Solves the PTM linear systems for every (a, b) at once.

    Raises:
        DimensionError: more qubits than the basis supports, or a singular system.
    """
    if not 1 <= n <= MAX_BASIS_QUBITS:
        raise DimensionError(f"basis coefficients support 1..{MAX_BASIS_QUBITS} qubits, got {n}")
    system = basis_ptm_matrix(n)
    condition = np.linalg.cond(system)
    if not np.isfinite(condition) or condition > 1e12:
        ASCIIColors.error(f"Recovery basis PTM system is singular (condition {condition:.3e})")
        raise DimensionError("recovery basis is not linearly independent")
    n_pauli = 4 ** n
    targets = commutator_family_ptms(n).reshape(n_pauli * n_pauli, -1).T
    lu = scipy.linalg.lu_factor(system)
    solution = scipy.linalg.lu_solve(lu, targets)
    residual = float(np.max(np.abs(system @ solution - targets)))
    if residual > SOLVE_RESIDUAL:
        raise DimensionError(f"basis expansion residual {residual:.3e} above {SOLVE_RESIDUAL}")
    u = solution.T.reshape(n_pauli, n_pauli, -1).transpose(2, 0, 1).copy()
    u[np.abs(u) < 1e-13] = 0.0
    u.setflags(write=False)
    return BasisCoeffs(n, u, residual)


@dataclass(frozen=True)
class QuasiProbabilityPlan:
    """Signed decomposition sum_l q_l B_l of one recovery step.

    Positions are 0-based over basis_operations(n); Table indices are position + 1.
    """
    step: int
    t: float
    q: np.ndarray = field(repr=False)
    gamma: float
    alpha: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    imag_residue: float = 0.0

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.p)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.q)

    def positions(self, uniforms: np.ndarray) -> np.ndarray:
        """Inverse-CDF sampling of 0-based positions from uniforms in [0, 1)."""
        cdf = self.cumulative
        idx = np.searchsorted(cdf, np.asarray(uniforms) * cdf[-1], side="right")
        return np.minimum(idx, len(cdf) - 1)

    def to_row(self) -> Dict:
        return {"step": self.step, "t": self.t, "q": [float(x) for x in self.q], "gamma": self.gamma}


def _plan_from_coefficients(step: int, t: float, q: np.ndarray, imag_residue: float, gamma_cap: Optional[float]) -> QuasiProbabilityPlan:
    q = np.where(np.abs(q) < ZERO_TOL, 0.0, q)
    gamma = float(np.sum(np.abs(q)))
    if gamma_cap is not None and gamma > gamma_cap:
        ASCIIColors.error(f"Step {step} at t={t:g}: gamma={gamma:.4g} exceeds cap {gamma_cap:g}")
        raise StepSizeError(f"step size too large for coupling: gamma={gamma:.6g} > gamma_cap={gamma_cap:g} at t={t:g}")
    alpha = np.where(q < 0, -1.0, 1.0)
    p = np.abs(q) / gamma
    for arr in (q, alpha, p):
        arr.setflags(write=False)
    return QuasiProbabilityPlan(step, float(t), q, gamma, alpha, p, imag_residue)


def generator_weights(A: np.ndarray, coeffs: BasisCoeffs) -> Tuple[np.ndarray, float]:
    """sum_ab F^l_ab with F^l_ab = A_ab u_lab + A*_ba u*_lba; returns (real part, imaginary residue)."""
    direct = np.einsum("lab,ab->l", coeffs.u, A)
    companion = np.einsum("lab,ab->l", coeffs.conjugate_family(), A.conj().T)
    total = direct + companion
    return total.real, float(np.max(np.abs(total.imag), initial=0.0))


def quasi_probs(A: CoeffMatrix, coeffs: BasisCoeffs, dt: float, lam: float, step: int = 0,
                gamma_cap: Optional[float] = DEFAULT_GAMMA_CAP) -> QuasiProbabilityPlan:
    """Quasi-probabilities of I - dt L_N with L_N built from A (evaluated at the step end).

    q_1 = 1 - dt lam^2 sum F^1 on the identity operation, q_l = -dt lam^2 sum F^l otherwise.
    The plan's t is the step start, A.t - dt.

    Raises:
        StepSizeError: when gamma exceeds gamma_cap.
    """
    if dt <= 0:
        raise StepSizeError(f"step size must be positive, got {dt}")
    weights, residue = generator_weights(A.A, coeffs)
    q = -dt * lam ** 2 * weights
    q[0] += 1.0
    return _plan_from_coefficients(step, A.t - dt, q, residue, gamma_cap)


def split_plans(A: CoeffMatrix, coeffs: BasisCoeffs, dt: float, lam: float, step: int = 0,
                gamma_cap: Optional[float] = None) -> Tuple[QuasiProbabilityPlan, QuasiProbabilityPlan]:
    """Operator-splitting route: plans of I - dt L_C (coherent) and I - dt L_D (incoherent)."""
    split = hermitian_split(A)
    coherent = quasi_probs(CoeffMatrix(A.t, 1j * split.Xi), coeffs, dt, lam, step, gamma_cap)
    incoherent = quasi_probs(CoeffMatrix(A.t, split.Gamma.astype(complex)), coeffs, dt, lam, step, gamma_cap)
    return coherent, incoherent


def compiled_ptm(plan: QuasiProbabilityPlan, n: int) -> np.ndarray:
    """PTM of sum_l q_l B_l."""
    n_pauli = 4 ** n
    return (basis_ptm_matrix(n) @ plan.q).reshape(n_pauli, n_pauli)


def apply_plan(plan: QuasiProbabilityPlan, n: int, rho: np.ndarray) -> np.ndarray:
    """(sum_l q_l B_l)(rho) for rho with optional leading batch dimensions."""
    ops = basis_operations(n)
    out = np.zeros(np.shape(rho), dtype=complex)
    for pos in plan.support:
        out = out + plan.q[pos] * ops[pos].apply_to_density(rho)
    return out


def sample_index(plan: QuasiProbabilityPlan, rng: np.random.Generator) -> int:
    """Draws a 1-based Table index l with probability p_l."""
    return int(plan.positions(rng.random())) + 1


def gamma_tot(plans: Sequence[QuasiProbabilityPlan]) -> float:
    return float(np.prod([plan.gamma for plan in plans])) if plans else 1.0


def gamma_tot_series(plans: Sequence[QuasiProbabilityPlan]) -> np.ndarray:
    """Running products, entry k is the overhead after k steps (entry 0 is 1)."""
    return np.concatenate([[1.0], np.cumprod([plan.gamma for plan in plans])])


def overhead_constant(n: int) -> float:
    """Constant c in gamma_tot <= exp(c lam^2 T G_env).

    |A_ab| <= G_env / 2 and gamma <= 1 + dt lam^2 sum_l |sum F^l| give c = sum |u|.
    """
    return basis_coeffs(n).total_weight


def compile_plans(generator: TimeLocalGenerator, T: float, dt: float, gamma_cap: Optional[float] = DEFAULT_GAMMA_CAP,
                  coeffs: Optional[BasisCoeffs] = None) -> List[QuasiProbabilityPlan]:
    """Plans for every step k of [0, T]; step k uses A((k + 1) dt)."""
    steps = on_grid(T, dt)
    if steps < 0:
        raise StepSizeError(f"T={T} is not a multiple of dt={dt}")
    coeffs = coeffs or basis_coeffs(generator.model.n)
    lam = generator.model.coupling_strength
    plans = []
    for k in range(steps):
        a = generator.coeff_matrix((k + 1) * dt) if generator.quad_step else generator.exact_coeff_matrix((k + 1) * dt)
        plans.append(quasi_probs(a, coeffs, dt, lam, step=k, gamma_cap=gamma_cap))
    return plans


def plans_table(plans: Sequence[QuasiProbabilityPlan]) -> List[Dict]:
    return [plan.to_row() for plan in plans]
