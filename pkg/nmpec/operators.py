######
# Project       : nmpec
# File          : operators.py
# license       : Apache 2.0
# Description   :
# Dense linear algebra for small qubit registers: Pauli bases, Pauli transfer
# matrices and the sixteen-element recovery basis.
######
import itertools
import re
from dataclasses import dataclass, field
from functools import cached_property, lru_cache, reduce
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from nmpec.errors import DimensionError
from nmpec.helpers import OPERATOR_TOL
from nmpec.types import OperationKind

MAX_QUBITS = 3
MAX_BASIS_QUBITS = 2

PAULI_LABELS = "IXYZ"
PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Projector |0><0| used by the projective basis operations
PROJECTOR = np.array([[1, 0], [0, 0]], dtype=complex)

_SQRT2 = np.sqrt(2.0)
RX = (PAULI_MATRICES["I"] + 1j * PAULI_MATRICES["X"]) / _SQRT2
RY = (PAULI_MATRICES["I"] + 1j * PAULI_MATRICES["Y"]) / _SQRT2
RZ = (PAULI_MATRICES["I"] + 1j * PAULI_MATRICES["Z"]) / _SQRT2


def _mpow(m: np.ndarray, k: int) -> np.ndarray:
    return np.linalg.matrix_power(m, k)


def num_qubits(dim: int) -> int:
    """Number of qubits of a Hilbert space of dimension dim (a power of two)."""
    n = int(round(np.log2(dim))) if dim > 0 else -1
    if n < 0 or 2 ** n != dim:
        raise DimensionError(f"dimension {dim} is not a power of two")
    return n


def is_hermitian(m: np.ndarray, tol: float = OPERATOR_TOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.max(np.abs(m - m.conj().T), initial=0.0) <= tol


def is_unitary(m: np.ndarray, tol: float = OPERATOR_TOL) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])), initial=0.0) <= tol


def pauli_operator(label: str) -> np.ndarray:
    """Tensor product of single-qubit Paulis, leftmost letter on the most significant qubit."""
    label = label.strip().upper()
    if not label or any(c not in PAULI_LABELS for c in label):
        raise DimensionError(f"invalid Pauli string {label!r}")
    return reduce(np.kron, [PAULI_MATRICES[c] for c in label])


_TERM = re.compile(r"\s*([+-])?\s*(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)?\s*\*?\s*([IXYZixyz]+)\s*")


def parse_pauli_sum(text: str, n: Optional[int] = None) -> np.ndarray:
    """Parses a real-coefficient Pauli sum such as ``"-1.0 ZI + 0.5 XX - IZ"``.

    Args:
        text (str): the expression.
        n (int, optional): expected qubit count; every term must have this length.

    Returns:
        np.ndarray: the dense Hermitian matrix.

    Raises:
        DimensionError: on syntax errors or inconsistent term lengths.
    """
    total = None
    pos = 0
    while pos < len(text):
        match = _TERM.match(text, pos)
        if match is None or match.end() == pos:
            raise DimensionError(f"cannot parse Pauli sum {text!r} at column {pos}")
        sign, number, label = match.groups()
        if sign is None and total is not None:
            raise DimensionError(f"missing '+' or '-' before term {label!r} in {text!r}")
        coeff = float(number) if number else 1.0
        if sign == "-":
            coeff = -coeff
        pos = match.end()
        label = label.upper()
        if n is not None and len(label) != n:
            raise DimensionError(f"term {label!r} acts on {len(label)} qubits, expected {n}")
        term = coeff * pauli_operator(label)
        if total is not None and total.shape != term.shape:
            raise DimensionError(f"terms of {text!r} act on different qubit counts")
        total = term if total is None else total + term
    if total is None:
        raise DimensionError("empty Pauli sum")
    return total


@dataclass(frozen=True)
class PauliBasis:
    """Ordered Pauli strings on n qubits, identity first.

    Satisfies tr(V_a V_b^dag) = 2^n delta_ab.
    """
    n: int
    labels: Tuple[str, ...]
    elements: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return 2 ** self.n

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, index: int) -> np.ndarray:
        return self.elements[index]

    def index(self, label: str) -> int:
        return self.labels.index(label.upper())

    def coefficients(self, op: np.ndarray) -> np.ndarray:
        """Components c_a = tr(V_a op)/2^n, so that op = sum_a c_a V_a."""
        return np.einsum("aij,...ji->...a", self.elements, op) / self.dim


@lru_cache(maxsize=None)
def pauli_basis(n: int) -> PauliBasis:
    if not 1 <= n <= MAX_QUBITS:
        raise DimensionError(f"qubit count {n} outside 1..{MAX_QUBITS}")
    labels = tuple("".join(word) for word in itertools.product(PAULI_LABELS, repeat=n))
    elements = np.array([pauli_operator(label) for label in labels])
    elements.setflags(write=False)
    return PauliBasis(n, labels, elements)


@dataclass(frozen=True)
class PTM:
    """Pauli transfer matrix R[a, b] = tr(V_a S(V_b)) / 2^n of a superoperator S.

    Hermiticity preserving maps have real matrices; the matrix is stored real when the
    imaginary residue is below 1e-12 and complex otherwise.
    """
    n: int
    matrix: np.ndarray = field(repr=False)

    def is_trace_preserving(self, tol: float = 1e-9) -> bool:
        first = np.zeros(self.matrix.shape[1])
        first[0] = 1.0
        return np.max(np.abs(self.matrix[0] - first)) <= tol

    def is_hermiticity_preserving(self, tol: float = 1e-12) -> bool:
        return np.max(np.abs(np.imag(self.matrix)), initial=0.0) <= tol

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return reconstruct_from_ptm(self, rho)


def _as_ptm(n: int, matrix: np.ndarray) -> PTM:
    if np.max(np.abs(np.imag(matrix)), initial=0.0) <= 1e-12:
        matrix = np.real(matrix).copy()
    return PTM(n, matrix)


def ptm_of(superop: Callable[[np.ndarray], np.ndarray], n: int) -> PTM:
    """Pauli transfer matrix of a linear map given as a black box."""
    basis = pauli_basis(n)
    images = np.array([np.asarray(superop(v)) for v in basis.elements])
    if images.shape[1:] != (basis.dim, basis.dim):
        raise DimensionError(f"superoperator returned shape {images.shape[1:]}, expected {(basis.dim, basis.dim)}")
    # R[a, b] = tr(V_a S(V_b)) / d
    matrix = np.einsum("aij,bji->ab", basis.elements, images) / basis.dim
    return _as_ptm(n, matrix)


def ptm_two_sided(left: np.ndarray, right: np.ndarray, n: int) -> np.ndarray:
    """Complex PTM of rho -> left @ rho @ right."""
    basis = pauli_basis(n)
    p = basis.elements
    return np.einsum("aij,jk,bkl,li->ab", p, left, p, right, optimize=True) / basis.dim


def ptm_from_kraus(kraus_ops: Sequence[np.ndarray], n: int) -> PTM:
    """PTM of rho -> sum_k K rho K^dag."""
    total = sum(ptm_two_sided(k, k.conj().T, n) for k in kraus_ops)
    return _as_ptm(n, total)


def reconstruct_from_ptm(ptm: PTM, rho: np.ndarray) -> np.ndarray:
    """S(rho) = sum_ab R[a,b] tr(V_b rho) V_a / 2^n."""
    basis = pauli_basis(ptm.n)
    components = basis.coefficients(rho)
    return np.einsum("ab,b,aij->ij", ptm.matrix, components, basis.elements)


# Single-qubit recovery basis as (kind, left factor, right factor); the operation is
# rho -> K rho K^dag with K = left @ P @ right for projective kinds and K = left otherwise.
_SINGLE_QUBIT_TABLE = (
    ("I", OperationKind.UNITARY, PAULI_MATRICES["I"], None),
    ("X", OperationKind.UNITARY, PAULI_MATRICES["X"], None),
    ("Y", OperationKind.UNITARY, PAULI_MATRICES["Y"], None),
    ("Z", OperationKind.UNITARY, PAULI_MATRICES["Z"], None),
    ("Rx", OperationKind.UNITARY, RX, None),
    ("Ry", OperationKind.UNITARY, RY, None),
    ("Rz", OperationKind.UNITARY, RZ, None),
    ("Ryz", OperationKind.UNITARY, (PAULI_MATRICES["Y"] + PAULI_MATRICES["Z"]) / _SQRT2, None),
    ("Rzx", OperationKind.UNITARY, (PAULI_MATRICES["Z"] + PAULI_MATRICES["X"]) / _SQRT2, None),
    ("Rxy", OperationKind.UNITARY, (PAULI_MATRICES["X"] + PAULI_MATRICES["Y"]) / _SQRT2, None),
    ("Pi_x", OperationKind.PROJECTIVE, _mpow(RZ, 3) @ _mpow(RX, 3), RX @ RZ),
    ("Pi_y", OperationKind.PROJECTIVE, RX, _mpow(RX, 3)),
    ("Pi_z", OperationKind.PROJECTIVE, PAULI_MATRICES["I"], PAULI_MATRICES["I"]),
    ("Pi_yx", OperationKind.PROJECTIVE, _mpow(RZ, 3) @ _mpow(RX, 3), _mpow(RX, 3) @ RZ),
    ("Pi_xz", OperationKind.PROJECTIVE, RX, _mpow(RX, 3) @ _mpow(RZ, 2)),
    ("Pi_xy", OperationKind.PROJECTIVE, PAULI_MATRICES["I"], _mpow(RX, 2)),
)
SINGLE_QUBIT_OPS = len(_SINGLE_QUBIT_TABLE)


@dataclass(frozen=True)
class BasisOperation:
    """One recovery operation rho -> K rho K^dag.

    Attributes:
        index: 1-based Table index per qubit, leftmost qubit first.
        kind: unitary or projective.
        left, projector, right: factors with K = left @ projector @ right
            (projector is the identity for unitary kinds).
    """
    index: Tuple[int, ...]
    label: str
    kind: OperationKind
    left: np.ndarray = field(repr=False)
    projector: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.index)

    @property
    def flat_index(self) -> int:
        """1-based position in the tensor-lexicographic list."""
        pos = 0
        for i in self.index:
            pos = pos * SINGLE_QUBIT_OPS + (i - 1)
        return pos + 1

    @property
    def is_projective(self) -> bool:
        return self.kind is OperationKind.PROJECTIVE

    @cached_property
    def kraus(self) -> np.ndarray:
        return self.left @ self.projector @ self.right

    def apply_to_density(self, rho: np.ndarray) -> np.ndarray:
        k = self.kraus
        return k @ rho @ k.conj().T

    @cached_property
    def ptm(self) -> PTM:
        return ptm_from_kraus([self.kraus], self.n)


def _single_qubit_operation(i: int) -> BasisOperation:
    label, kind, left, right = _SINGLE_QUBIT_TABLE[i - 1]
    if kind is OperationKind.UNITARY:
        return BasisOperation((i,), label, kind, left, np.eye(2, dtype=complex), np.eye(2, dtype=complex))
    return BasisOperation((i,), label, kind, left, PROJECTOR, right)


@lru_cache(maxsize=None)
def basis_operations(n: int) -> Tuple[BasisOperation, ...]:
    """The 16^n recovery operations in tensor-lexicographic order."""
    if not 1 <= n <= MAX_BASIS_QUBITS:
        raise DimensionError(f"basis enumeration supports 1..{MAX_BASIS_QUBITS} qubits, got {n}")
    singles = [_single_qubit_operation(i) for i in range(1, SINGLE_QUBIT_OPS + 1)]
    ops = []
    for combo in itertools.product(singles, repeat=n):
        projective = any(op.is_projective for op in combo)
        ops.append(BasisOperation(
            index=tuple(op.index[0] for op in combo),
            label="(x)".join(op.label for op in combo),
            kind=OperationKind.PROJECTIVE if projective else OperationKind.UNITARY,
            left=reduce(np.kron, [op.left for op in combo]),
            projector=reduce(np.kron, [op.projector for op in combo]),
            right=reduce(np.kron, [op.right for op in combo]),
        ))
    return tuple(ops)


@lru_cache(maxsize=None)
def basis_kraus_stack(n: int) -> np.ndarray:
    """Kraus operators of basis_operations(n) stacked as (16^n, d, d)."""
    stack = np.array([op.kraus for op in basis_operations(n)])
    stack.setflags(write=False)
    return stack


@lru_cache(maxsize=None)
def basis_ptm_matrix(n: int) -> np.ndarray:
    """Column l holds the flattened PTM of basis operation l (a (16^n, 16^n) real matrix)."""
    basis = pauli_basis(n)
    p = basis.elements
    kraus = basis_kraus_stack(n)
    # tr(V_a K V_b K^dag) / d for every operation
    ptms = np.einsum("aij,ljk,bkm,lim->lab", p, kraus, p, kraus.conj(), optimize=True) / basis.dim
    matrix = np.real(ptms).reshape(len(kraus), -1).T.copy()
    matrix.setflags(write=False)
    return matrix


def apply_basis_op(op: BasisOperation, psi: np.ndarray, require_normalized: bool = True) -> Tuple[Optional[np.ndarray], float]:
    """Applies a basis operation to a pure state.

    Projective kinds are applied by amplitude weighting: the returned weight is the
    squared norm ratio ||K psi||^2 / ||psi||^2 and the returned state is rescaled to
    the input norm. A vanishing projection returns (None, 0.0).

    Raises:
        DimensionError: wrong vector size, or unnormalized input when require_normalized.
    """
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (op.kraus.shape[0],):
        raise DimensionError(f"state of shape {psi.shape} for a {op.n}-qubit operation")
    norm2 = float(np.real(np.vdot(psi, psi)))
    if require_normalized and abs(norm2 - 1.0) > OPERATOR_TOL:
        raise DimensionError(f"state is not normalized (norm^2 = {norm2:.12g})")
    out = op.kraus @ psi
    if not op.is_projective:
        return out, 1.0
    out_norm2 = float(np.real(np.vdot(out, out)))
    weight = out_norm2 / norm2 if norm2 > 0 else 0.0
    if weight < 1e-14:
        return None, 0.0
    return out * np.sqrt(norm2 / out_norm2), weight


def apply_basis_ops_batch(kraus: np.ndarray, projective: np.ndarray, psi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised apply_basis_op over a batch.

    Args:
        kraus: (B, d, d) Kraus operator per trajectory.
        projective: (B,) bool mask of projective kinds.
        psi: (B, d) unnormalised states.

    Returns:
        (states, weights); dead entries have weight 0 and a zero state.
    """
    out = np.einsum("bij,bj->bi", kraus, psi)
    norm2 = np.einsum("bi,bi->b", psi.conj(), psi).real
    out_norm2 = np.einsum("bi,bi->b", out.conj(), out).real
    weights = np.ones(len(psi))
    safe_norm = np.where(norm2 > 0, norm2, 1.0)
    ratio = np.where(norm2 > 0, out_norm2 / safe_norm, 0.0)
    weights = np.where(projective, ratio, weights)
    dead = projective & (weights < 1e-14)
    scale = np.where(projective & ~dead, np.sqrt(safe_norm / np.where(out_norm2 > 0, out_norm2, 1.0)), 1.0)
    out = out * scale[:, None]
    out[dead] = 0.0
    weights = np.where(dead, 0.0, weights)
    return out, weights


def product_state(label: str) -> np.ndarray:
    """Pure product state from per-qubit letters 0, 1, +, -, r (+i) and l (-i)."""
    singles = {
        "0": np.array([1, 0], dtype=complex),
        "1": np.array([0, 1], dtype=complex),
        "+": np.array([1, 1], dtype=complex) / _SQRT2,
        "-": np.array([1, -1], dtype=complex) / _SQRT2,
        "r": np.array([1, 1j], dtype=complex) / _SQRT2,
        "l": np.array([1, -1j], dtype=complex) / _SQRT2,
    }
    if not label or any(c not in singles for c in label):
        raise DimensionError(f"invalid product state label {label!r}")
    return reduce(np.kron, [singles[c] for c in label])


def trace_norm(m: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def expectation(psi: np.ndarray, observables: np.ndarray) -> np.ndarray:
    """<psi|O|psi> for a batch of (unnormalised) states: psi (B, d), observables (K, d, d) -> (B, K)."""
    return np.einsum("bi,kij,bj->bk", psi.conj(), observables, psi).real


def density_expectation(rho: np.ndarray, observables: np.ndarray) -> np.ndarray:
    return np.einsum("kij,...ji->...k", observables, rho).real


