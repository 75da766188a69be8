######
# Project       : nmpec
# File          : generator.py
# license       : Apache 2.0
# Description   :
# Time-local noise generator of second order in the coupling: jump operators,
# Heisenberg evolution, the coefficient matrix A(t) and its action on states.
######
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from nmpec.bath import BathSpec
from nmpec.errors import DimensionError, GridError
from nmpec.helpers import OPERATOR_TOL, on_grid
from nmpec.operators import is_hermitian, num_qubits, pauli_basis

# Pauli components smaller than this are treated as absent from the support
SUPPORT_TOL = 1e-12


@dataclass(frozen=True)
class Spectrum:
    """Eigendecomposition H = W diag(E) W^dag of a Hermitian Hamiltonian."""
    energies: np.ndarray = field(repr=False)
    vectors: np.ndarray = field(repr=False)

    @staticmethod
    def of(hamiltonian: np.ndarray) -> "Spectrum":
        if not is_hermitian(hamiltonian):
            raise DimensionError("Hamiltonian is not Hermitian")
        energies, vectors = np.linalg.eigh(hamiltonian)
        return Spectrum(energies, vectors)

    def propagator(self, t: float) -> np.ndarray:
        """e^{-iHt}."""
        w = self.vectors
        return (w * np.exp(-1j * self.energies * t)) @ w.conj().T


def heisenberg(op: np.ndarray, tau: float, hamiltonian: Union[np.ndarray, Spectrum]) -> np.ndarray:
    """op(tau) = e^{iH tau} op e^{-iH tau}."""
    spectrum = hamiltonian if isinstance(hamiltonian, Spectrum) else Spectrum.of(hamiltonian)
    u = spectrum.propagator(-tau)
    return u @ op @ u.conj().T


@dataclass(frozen=True)
class SystemModel:
    """System Hamiltonian, Hermitian coupling operators of unit norm and coupling strength.

    Raises:
        DimensionError: non-Hermitian operators, wrong shapes, non-unit coupling norms.
    """
    hamiltonian: np.ndarray = field(repr=False)
    couplings: Tuple[np.ndarray, ...] = field(repr=False)
    coupling_strength: float = 0.0

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        object.__setattr__(self, "hamiltonian", h)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise DimensionError(f"Hamiltonian must be square, got shape {h.shape}")
        num_qubits(h.shape[0])
        if not is_hermitian(h):
            raise DimensionError("Hamiltonian is not Hermitian")
        couplings = tuple(np.asarray(s, dtype=complex) for s in self.couplings)
        object.__setattr__(self, "couplings", couplings)
        if not couplings:
            raise DimensionError("at least one coupling operator is required")
        for j, s in enumerate(couplings):
            if s.shape != h.shape:
                raise DimensionError(f"coupling {j} has shape {s.shape}, Hamiltonian {h.shape}")
            if not is_hermitian(s):
                raise DimensionError(f"coupling {j} is not Hermitian")
            norm = np.linalg.norm(s, 2)
            if abs(norm - 1.0) > OPERATOR_TOL:
                raise DimensionError(f"coupling {j} has spectral norm {norm:.12g}, expected 1")
        if self.coupling_strength < 0:
            raise DimensionError(f"coupling strength must be non negative, got {self.coupling_strength}")

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def n(self) -> int:
        return num_qubits(self.dim)

    @property
    def channels(self) -> int:
        return len(self.couplings)

    @property
    def lam2(self) -> float:
        return self.coupling_strength ** 2

    @cached_property
    def spectrum(self) -> Spectrum:
        return Spectrum.of(self.hamiltonian)

    @cached_property
    def hamiltonian_norm(self) -> float:
        return float(np.max(np.abs(self.spectrum.energies)))

    @cached_property
    def coupling_stack(self) -> np.ndarray:
        return np.array(self.couplings)

    def with_coupling(self, strength: float) -> "SystemModel":
        return replace(self, coupling_strength=float(strength))


@dataclass(frozen=True)
class JumpOps:
    """T_mu = sum_j g_{j,mu} S_j, one per pole."""
    operators: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.operators)

    def __getitem__(self, mu):
        return self.operators[mu]


def jump_ops(model: SystemModel, bath: BathSpec) -> JumpOps:
    if bath.channels != model.channels:
        raise DimensionError(f"bath has {bath.channels} channels, model has {model.channels} couplings")
    if bath.n_poles == 0:
        return JumpOps(np.zeros((0, model.dim, model.dim), dtype=complex))
    return JumpOps(np.einsum("pj,jab->pab", bath.amplitudes, model.coupling_stack))


@dataclass(frozen=True)
class CoeffMatrix:
    """A_ab(t) = sum_mu f^mu_a conj(k^mu_b(t)) over Pauli indices."""
    t: float
    A: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class GammaXi:
    """Hermitian split A = Gamma + i Xi."""
    Gamma: np.ndarray = field(repr=False)
    Xi: np.ndarray = field(repr=False)


def hermitian_split(A: Union[CoeffMatrix, np.ndarray]) -> GammaXi:
    a = A.A if isinstance(A, CoeffMatrix) else np.asarray(A)
    return GammaXi((a + a.conj().T) / 2.0, (a - a.conj().T) / 2.0j)


def _pauli_elements(dim: int) -> np.ndarray:
    return pauli_basis(num_qubits(dim)).elements


def apply_L_N(model: SystemModel, A: Union[CoeffMatrix, np.ndarray], rho: np.ndarray) -> np.ndarray:
    """lam^2 sum_ab [A_ab (V_a rho V_b - rho V_b V_a) + A*_ba (V_a rho V_b - V_b V_a rho)].

    rho may carry leading batch dimensions.
    """
    a = A.A if isinstance(A, CoeffMatrix) else np.asarray(A)
    rho = np.asarray(rho)
    if rho.shape[-2:] != (model.dim, model.dim):
        raise DimensionError(f"state of shape {rho.shape} for dimension {model.dim}")
    p = _pauli_elements(model.dim)
    if a.shape != (len(p), len(p)):
        raise DimensionError(f"coefficient matrix of shape {a.shape}, expected {(len(p), len(p))}")
    right = np.einsum("ab,bij->aij", a, p)            # sum_b A_ab V_b
    left = np.einsum("ba,aij->bij", a.conj(), p)      # sum_a A*_ba V_a
    jump = np.einsum("aij,...jk,akl->...il", p, rho, right) + np.einsum("bij,...jk,bkl->...il", left, rho, p)
    pair = np.einsum("aij,ajk->ik", right, p)          # sum_ab A_ab V_b V_a
    out = jump - rho @ pair - pair.conj().T @ rho
    return model.lam2 * out


def apply_L_D(model: SystemModel, split: GammaXi, rho: np.ndarray) -> np.ndarray:
    """lam^2 sum_ab Gamma_ab (2 V_a rho V_b - rho V_b V_a - V_b V_a rho)."""
    p = _pauli_elements(model.dim)
    g = split.Gamma
    right = np.einsum("ab,bij->aij", g, p)
    pair = np.einsum("aij,ajk->ik", right, p)
    out = 2.0 * np.einsum("aij,...jk,akl->...il", p, rho, right) - rho @ pair - pair @ rho
    return model.lam2 * out


def coherent_hamiltonian(model: SystemModel, split: GammaXi) -> np.ndarray:
    """sum_ab Xi_ab V_b V_a (Hermitian)."""
    p = _pauli_elements(model.dim)
    return np.einsum("ab,bij,ajk->ik", split.Xi, p, p)


def apply_L_C(model: SystemModel, split: GammaXi, rho: np.ndarray) -> np.ndarray:
    """i lam^2 [sum_ab Xi_ab V_b V_a, rho]."""
    h = coherent_hamiltonian(model, split)
    return 1j * model.lam2 * (h @ rho - rho @ h)


def lindblad_pair(F: np.ndarray, G: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """F rho G^dag + G rho F^dag - rho G^dag F - F^dag G rho."""
    gd = G.conj().T
    fd = F.conj().T
    return F @ rho @ gd + G @ rho @ fd - rho @ gd @ F - fd @ G @ rho


def apply_L_N_jump(model: SystemModel, jumps: JumpOps, memory: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Jump-operator form lam^2 sum_mu L(T_mu, K_mu) rho with memory K_mu of shape (P, d, d)."""
    out = np.zeros(np.shape(rho), dtype=complex)
    for t_op, k_op in zip(jumps.operators, memory):
        out = out + lindblad_pair(t_op, k_op, rho)
    return model.lam2 * out


class TimeLocalGenerator:
    """Time-dependent generator of one (model, bath) pair.

    The memory operators K_mu(t) = int_0^t T_mu(-tau) e^{i omega_mu tau} dtau are
    available two ways: by composite trapezoidal quadrature on a uniform grid of step
    quad_step, accumulated incrementally, and in closed form through the eigenbasis
    of H_S. A(t) follows as A_ab = sum_mu f^mu_a conj(k^mu_b) with f, k the Pauli
    components of T_mu and K_mu.

    The quadrature table is built on first use from the calling thread; afterwards the
    object is only read.
    """

    def __init__(self, model: SystemModel, bath: BathSpec, quad_step: Optional[float] = None):
        self.model = model
        self.bath = bath
        self.jumps = jump_ops(model, bath)
        self.quad_step = quad_step
        self.basis = pauli_basis(model.n)
        # f^mu_a = tr(T_mu V_a) / d
        self.f = self.basis.coefficients(self.jumps.operators) if len(self.jumps) else np.zeros((0, len(self.basis)))
        self._memory_table: List[np.ndarray] = [np.zeros((len(self.jumps), model.dim, model.dim), dtype=complex)]
        self._integrand_prev = self._integrand(0.0)

    def _integrand(self, tau: float) -> np.ndarray:
        """T_mu(-tau) e^{i omega_mu tau} for every pole."""
        if not len(self.jumps):
            return np.zeros((0, self.model.dim, self.model.dim), dtype=complex)
        u = self.model.spectrum.propagator(tau)
        evolved = np.einsum("ij,pjk,kl->pil", u, self.jumps.operators, u.conj().T)
        return evolved * np.exp(1j * self.bath.omegas * tau)[:, None, None]

    def _grid_index(self, t: float) -> int:
        if self.quad_step is None:
            raise GridError("no quadrature step configured; use exact_memory")
        k = on_grid(t, self.quad_step)
        if k < 0:
            raise GridError(f"t={t} is not a multiple of the quadrature step {self.quad_step}")
        return k

    def memory(self, t: float) -> np.ndarray:
        """K_mu(t) by trapezoidal quadrature, shape (P, d, d)."""
        k = self._grid_index(t)
        h = self.quad_step
        while len(self._memory_table) <= k:
            step = len(self._memory_table)
            current = self._integrand(step * h)
            self._memory_table.append(self._memory_table[-1] + 0.5 * h * (self._integrand_prev + current))
            self._integrand_prev = current
        return self._memory_table[k]

    def exact_memory(self, t: float) -> np.ndarray:
        """K_mu(t) in closed form: eigenbasis entries integrate e^{i(omega - E_a + E_b) tau}."""
        if not len(self.jumps):
            return np.zeros((0, self.model.dim, self.model.dim), dtype=complex)
        w = self.model.spectrum.vectors
        e = self.model.spectrum.energies
        t_eig = np.einsum("ji,pjk,kl->pil", w.conj(), self.jumps.operators, w)
        nu = self.bath.omegas[:, None, None] - e[None, :, None] + e[None, None, :]
        factor = np.expm1(1j * nu * t) / (1j * nu)
        return np.einsum("ij,pjk,lk->pil", w, t_eig * factor, w.conj())

    def _coeff_from_memory(self, t: float, memory: np.ndarray) -> CoeffMatrix:
        if not len(self.jumps):
            n = len(self.basis)
            return CoeffMatrix(t, np.zeros((n, n), dtype=complex))
        k = self.basis.coefficients(memory)
        return CoeffMatrix(t, np.einsum("pa,pb->ab", self.f, k.conj()))

    def coeff_matrix(self, t: float) -> CoeffMatrix:
        return self._coeff_from_memory(t, self.memory(t))

    def exact_coeff_matrix(self, t: float) -> CoeffMatrix:
        return self._coeff_from_memory(t, self.exact_memory(t))

    def active_support(self, A: Optional[CoeffMatrix] = None) -> np.ndarray:
        """Pauli indices touched by some T_mu or by the given coefficient matrix."""
        mask = np.any(np.abs(self.f) > SUPPORT_TOL, axis=0)
        if A is not None:
            mask |= np.any(np.abs(A.A) > SUPPORT_TOL, axis=0) | np.any(np.abs(A.A) > SUPPORT_TOL, axis=1)
        return np.flatnonzero(mask)

    def apply(self, t: float, rho: np.ndarray, exact: bool = True) -> np.ndarray:
        """L_N(t) rho through the jump-operator form."""
        memory = self.exact_memory(t) if exact else self.memory(t)
        return apply_L_N_jump(self.model, self.jumps, memory, rho)

    def lamb_shift(self, t: float, exact: bool = True) -> np.ndarray:
        """Hamiltonian correction Delta_S with L_C rho = -i [Delta_S, rho]."""
        a = self.exact_coeff_matrix(t) if exact else self.coeff_matrix(t)
        return -self.model.lam2 * coherent_hamiltonian(self.model, hermitian_split(a))

    def gamma_spectrum(self, t: float, restrict: bool = False, exact: bool = False) -> np.ndarray:
        a = self.exact_coeff_matrix(t) if exact else self.coeff_matrix(t)
        gamma = hermitian_split(a).Gamma
        if restrict:
            support = self.active_support(a)
            gamma = gamma[np.ix_(support, support)]
        return np.linalg.eigvalsh(gamma)

    def gamma_series(self, times: Sequence[float], restrict: bool = False, exact: bool = False) -> np.ndarray:
        """Ascending eigenvalues of Gamma(t) for every t, one row per time."""
        return np.array([self.gamma_spectrum(t, restrict=restrict, exact=exact) for t in times])


def coeff_matrix(model: SystemModel, bath: BathSpec, t: float, quad_step: float) -> CoeffMatrix:
    """A(t) by trapezoidal quadrature with step quad_step (t must lie on the grid)."""
    return TimeLocalGenerator(model, bath, quad_step).coeff_matrix(t)


def gamma_spectrum(model: SystemModel, bath: BathSpec, t: float, quad_step: Optional[float] = None, restrict: bool = False) -> np.ndarray:
    """Sorted eigenvalues of Gamma(t); closed-form A(t) when no quadrature step is given."""
    generator = TimeLocalGenerator(model, bath, quad_step)
    return generator.gamma_spectrum(t, restrict=restrict, exact=quad_step is None)
