import numpy as np
import pytest

from nmpec.bath import BathSpec, Pole
from nmpec.errors import DimensionError, GridError
from nmpec.generator import (
    CoeffMatrix,
    SystemModel,
    TimeLocalGenerator,
    apply_L_C,
    apply_L_D,
    apply_L_N,
    coeff_matrix,
    gamma_spectrum,
    heisenberg,
    hermitian_split,
    jump_ops,
    lindblad_pair,
)
from nmpec.operators import PAULI_MATRICES, pauli_basis, pauli_operator
from nmpec.reference import analytic_dephasing_rate

X, Y, Z = PAULI_MATRICES["X"], PAULI_MATRICES["Y"], PAULI_MATRICES["Z"]


def test_system_model_validation():
    with pytest.raises(DimensionError):
        SystemModel(np.array([[0, 1], [0, 0]]), (X,), 0.1)
    with pytest.raises(DimensionError, match="spectral norm"):
        SystemModel(np.zeros((2, 2)), (2 * X,), 0.1)
    with pytest.raises(DimensionError):
        SystemModel(np.zeros((2, 2)), (pauli_operator("XX"),), 0.1)
    with pytest.raises(DimensionError):
        SystemModel(np.zeros((2, 2)), (), 0.1)


def test_jump_ops_single_channel(spin_boson_model, unit_bath):
    jumps = jump_ops(spin_boson_model, unit_bath)
    assert len(jumps) == 1
    np.testing.assert_allclose(jumps[0], X)
    scaled = jump_ops(spin_boson_model, unit_bath.scaled(3.0))
    np.testing.assert_allclose(scaled[0], 3.0 * X)


def test_jump_ops_two_qubits(two_qubit_model):
    g = 0.7
    bath = BathSpec(2, (Pole((g, 0.0), 1j), Pole((0.0, g), 1j)))
    jumps = jump_ops(two_qubit_model, bath)
    np.testing.assert_allclose(jumps[0], g * pauli_operator("XI"))
    np.testing.assert_allclose(jumps[1], g * pauli_operator("IX"))


def test_jump_ops_channel_mismatch(two_qubit_model, unit_bath):
    with pytest.raises(DimensionError):
        jump_ops(two_qubit_model, unit_bath)


def test_heisenberg():
    delta = 2.0
    h = -(delta / 2) * Z
    np.testing.assert_allclose(heisenberg(X, 0.0, h), X)
    for tau in (0.3, np.pi / (2 * delta)):
        expected = np.cos(delta * tau) * X + np.sin(delta * tau) * Y
        np.testing.assert_allclose(heisenberg(X, tau, h), expected, atol=1e-12)
    np.testing.assert_allclose(heisenberg(Z, 1.3, h), Z, atol=1e-12)


def test_coefficient_matrix_vanishes_at_zero(spin_boson_model, unit_bath):
    generator = TimeLocalGenerator(spin_boson_model, unit_bath, quad_step=0.01)
    assert not np.any(generator.coeff_matrix(0.0).A)
    assert not np.any(generator.exact_coeff_matrix(0.0).A)


def test_dephasing_closed_form(dephasing_model):
    g, omega = 0.8, 1.5 + 1j
    bath = BathSpec(1, (Pole((g,), omega),))
    generator = TimeLocalGenerator(dephasing_model, bath, quad_step=0.001)
    a = generator.exact_coeff_matrix(1.2).A
    expected = np.zeros((4, 4), dtype=complex)
    expected[3, 3] = analytic_dephasing_rate(g, omega, 1.2)
    np.testing.assert_allclose(a, expected, atol=1e-12)
    np.testing.assert_allclose(generator.coeff_matrix(1.2).A, expected, atol=1e-5)


def test_dephasing_long_time_limit(dephasing_model):
    g, omega = 0.8, 1.5 + 1j
    bath = BathSpec(1, (Pole((g,), omega),))
    a = TimeLocalGenerator(dephasing_model, bath).exact_coeff_matrix(20.0).A
    assert a[3, 3] == pytest.approx(g ** 2 / (1j * np.conj(omega)), abs=1e-6)


def test_quadrature_is_second_order(dephasing_model, unit_bath):
    steps = np.array([0.1, 0.05, 0.025, 0.0125])
    exact = analytic_dephasing_rate(1.0, 1j, 1.0)
    errors = [abs(coeff_matrix(dephasing_model, unit_bath, 1.0, h).A[3, 3] - exact) for h in steps]
    slope = np.polyfit(np.log(steps), np.log(errors), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.2)


def test_quadrature_matches_closed_form(spin_boson_model, unit_bath):
    generator = TimeLocalGenerator(spin_boson_model, unit_bath, quad_step=0.0025)
    for t in (0.5, 1.0, 2.0):
        np.testing.assert_allclose(generator.coeff_matrix(t).A, generator.exact_coeff_matrix(t).A, atol=1e-5)


def test_quadrature_grid_enforced(spin_boson_model, unit_bath):
    with pytest.raises(GridError):
        TimeLocalGenerator(spin_boson_model, unit_bath, quad_step=0.1).coeff_matrix(0.15)
    with pytest.raises(GridError):
        TimeLocalGenerator(spin_boson_model, unit_bath).memory(0.1)


def test_hermitian_split(rng):
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    split = hermitian_split(a)
    assert np.max(np.abs(split.Gamma + 1j * split.Xi - a)) < 1e-14
    np.testing.assert_allclose(split.Gamma, split.Gamma.conj().T)
    np.testing.assert_allclose(split.Xi, split.Xi.conj().T)
    herm = a + a.conj().T
    assert not np.any(hermitian_split(herm).Xi)
    assert np.max(np.abs(hermitian_split(1j * herm).Gamma)) < 1e-15


@pytest.fixture
def spin_boson_state(spin_boson_model, unit_bath):
    generator = TimeLocalGenerator(spin_boson_model, unit_bath)
    return generator, generator.exact_coeff_matrix(0.7)


def test_generator_properties(spin_boson_state, make_density):
    generator, a = spin_boson_state
    model = generator.model
    rho1, rho2 = make_density(2), make_density(2)
    out = apply_L_N(model, a, rho1)
    assert abs(np.trace(out)) < 1e-12
    np.testing.assert_allclose(out, out.conj().T, atol=1e-12)
    combined = apply_L_N(model, a, 0.3 * rho1 - 1.7j * rho2)
    np.testing.assert_allclose(combined, 0.3 * out - 1.7j * apply_L_N(model, a, rho2), atol=1e-12)
    split = hermitian_split(a)
    np.testing.assert_allclose(apply_L_C(model, split, rho1) + apply_L_D(model, split, rho1), out, atol=1e-12)


def test_pauli_form_matches_jump_form(spin_boson_state, make_density):
    generator, a = spin_boson_state
    rho = make_density(2)
    np.testing.assert_allclose(apply_L_N(generator.model, a, rho), generator.apply(0.7, rho), atol=1e-12)


def test_two_qubit_pauli_form(two_qubit_model, two_qubit_bath, make_density):
    generator = TimeLocalGenerator(two_qubit_model, two_qubit_bath)
    rho = make_density(4)
    a = generator.exact_coeff_matrix(0.4)
    np.testing.assert_allclose(apply_L_N(two_qubit_model, a, rho), generator.apply(0.4, rho), atol=1e-12)


def test_zero_coupling_generator(spin_boson_model, unit_bath, make_density):
    model = spin_boson_model.with_coupling(0.0)
    a = TimeLocalGenerator(model, unit_bath).exact_coeff_matrix(1.0)
    assert not np.any(apply_L_N(model, a, make_density(2)))


def test_apply_dimension_checked(spin_boson_state):
    generator, a = spin_boson_state
    with pytest.raises(DimensionError):
        apply_L_N(generator.model, a, np.eye(4))


def test_dephasing_off_diagonal_rate(dephasing_model):
    g, omega, t = 1.0, 0.5 + 1j, 0.9
    bath = BathSpec(1, (Pole((g,), omega),))
    a = TimeLocalGenerator(dephasing_model, bath).exact_coeff_matrix(t)
    rho = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
    out = apply_L_N(dephasing_model, a, rho)
    k = g ** 2 * np.expm1(1j * omega * t) / (1j * omega)
    assert out[0, 1] == pytest.approx(-4.0 * dephasing_model.lam2 * k.real * rho[0, 1])
    # entrywise oracle from L(F, G) with F = Z and G = Z k
    oracle = dephasing_model.lam2 * lindblad_pair(Z, k * Z, rho)
    np.testing.assert_allclose(out, oracle, atol=1e-14)


def test_lamb_shift_is_hermitian(spin_boson_state):
    generator, _ = spin_boson_state
    shift = generator.lamb_shift(0.7)
    np.testing.assert_allclose(shift, shift.conj().T, atol=1e-14)


def test_gamma_spectrum_at_zero(spin_boson_model, unit_bath):
    np.testing.assert_allclose(gamma_spectrum(spin_boson_model, unit_bath, 0.0), np.zeros(4))


def test_gamma_spectrum_dephasing(dephasing_model):
    kappa = 1.5
    bath = BathSpec(1, (Pole((1.0,), 1j * kappa),))
    generator = TimeLocalGenerator(dephasing_model, bath)
    for t in (0.1, 1.0, 5.0):
        values = generator.gamma_spectrum(t, exact=True)
        np.testing.assert_allclose(values[:3], 0.0, atol=1e-14)
        assert values[3] == pytest.approx((1 - np.exp(-kappa * t)) / kappa)
    restricted = generator.gamma_spectrum(1.0, restrict=True, exact=True)
    assert len(restricted) == 1


def test_active_support(two_qubit_model, two_qubit_bath):
    generator = TimeLocalGenerator(two_qubit_model, two_qubit_bath)
    labels = pauli_basis(2).labels
    assert [labels[i] for i in generator.active_support()] == ["IX", "XI"]


def test_two_qubit_strong_not_divisible(two_qubit_model, two_qubit_bath):
    generator = TimeLocalGenerator(two_qubit_model, two_qubit_bath)
    times = 0.025 * np.arange(41)
    series = generator.gamma_series(times, exact=True)
    np.testing.assert_allclose(series[0], 0.0)
    assert np.min(series[1:, 0]) < 0.0
    assert series.shape == (41, 16)
    crossing = next(t for t, row in zip(times, series) if row[0] < -1e-12)
    assert crossing == pytest.approx(0.025)
    # each qubit block of Gamma is [[a, b/2], [b/2, 0]] with K = a X + b Y
    decay = np.exp(-times)
    a = (1.0 + decay * (8.0 * np.sin(8.0 * times) - np.cos(8.0 * times))) / 65.0
    b = (8.0 - decay * (np.sin(8.0 * times) + 8.0 * np.cos(8.0 * times))) / 65.0
    np.testing.assert_allclose(series[:, 0], (a - np.hypot(a, b)) / 2.0, atol=1e-12)
    np.testing.assert_allclose(series[:, 1], series[:, 0], atol=1e-12)


def test_coeff_matrix_type(spin_boson_model, unit_bath):
    a = TimeLocalGenerator(spin_boson_model, unit_bath).exact_coeff_matrix(0.5)
    assert isinstance(a, CoeffMatrix)
    assert a.t == 0.5 and a.A.shape == (4, 4)
