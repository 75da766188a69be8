import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest

from nmpec.bath import BathSpec, single_pole_family
from nmpec.errors import ConfigError
from nmpec.generator import SystemModel
from nmpec.operators import PAULI_MATRICES, pauli_operator
from nmpec.pec import QuasiProbabilityPlan, gamma_tot_series, overhead_constant
from nmpec.qem import (
    REPORT_COLUMNS,
    MitigationEngine,
    Moments,
    RunConfig,
    bounds,
    estimate,
    fit_overhead_constant,
    merge_moments,
    one_step_bound,
    required_samples,
    required_step,
    run_trajectory,
    sweep_gamma_tot,
    write_bounds_csv,
    write_manifest,
    write_report_csv,
    write_sweep_csv,
)
from nmpec.types import RunMode

X, Z = PAULI_MATRICES["X"], PAULI_MATRICES["Z"]
PLUS = np.array([1.0, 1.0]) / np.sqrt(2.0)
ZERO = np.array([1.0, 0.0])


def run_config(model, bath, **overrides):
    params = dict(T=0.2, dt=0.1, dt_f=0.05, N_r=8, seed=3, observables=(X,), initial_state=PLUS,
                  observable_labels=("X",), batch_size=4)
    params.update(overrides)
    return RunConfig(model, bath, **params)


@pytest.mark.parametrize("overrides,field", [
    (dict(T=0.25), "run.T"),
    (dict(dt=-0.1), "run.dt"),
    (dict(dt_f=0.03), "run.dt_f"),
    (dict(dt_ode=0.05), "run.dt_ode"),
    (dict(dt_ode=0.015), "run.dt_ode"),
    (dict(N_r=0), "run.N_r"),
    (dict(N_noisy=0), "run.N_noisy"),
    (dict(batch_size=0), "run.batch_size"),
    (dict(abort_fraction=1.0), "run.abort_fraction"),
    (dict(observables=(np.array([[0, 1], [0, 0]]),)), "run.observables[0]"),
    (dict(initial_state=np.array([1.0, 1.0])), "run.initial_state"),
])
def test_run_config_errors(spin_boson_model, unit_bath, overrides, field):
    with pytest.raises(ConfigError) as info:
        run_config(spin_boson_model, unit_bath, **overrides)
    assert info.value.field == field
    assert str(info.value).startswith(field)


def test_mitigation_qubit_limit():
    model = SystemModel(np.zeros((8, 8)), (pauli_operator("XII"),), 0.1)
    psi0 = np.zeros(8)
    psi0[0] = 1.0
    kwargs = dict(observables=(pauli_operator("ZII"),), initial_state=psi0, observable_labels=())
    with pytest.raises(ConfigError, match="run.mode"):
        run_config(model, BathSpec(1), **kwargs)
    config = run_config(model, BathSpec(1), mode="noisy-only", **kwargs)
    assert config.mode is RunMode.NOISY_ONLY
    assert config.observable_labels == ("O0",)


def test_run_config_grid(spin_boson_model, unit_bath):
    config = run_config(spin_boson_model, unit_bath, T=1.0, dt=0.1, dt_f=0.025, N_noisy=None)
    assert config.M == 10 and config.substeps == 4
    np.testing.assert_allclose(config.times, 0.1 * np.arange(11))
    assert config.noisy_count == config.N_r
    assert config.ode_step == 0.025
    assert run_config(spin_boson_model, unit_bath, dt_f=0.1).ode_step == pytest.approx(0.025)
    assert len(config.compile()) == 10


def test_zero_coupling_estimate(spin_boson_model, unit_bath):
    config = run_config(spin_boson_model.with_coupling(0.0), unit_bath, T=0.5, N_r=6)
    report = estimate(config)
    expected = np.cos(2.0 * config.times)
    np.testing.assert_allclose(report.ideal[0], expected, atol=1e-12)
    np.testing.assert_allclose(report.noisy.mean[0], expected, atol=1e-10)
    np.testing.assert_allclose(report.mitigated.mean[0], expected, atol=1e-10)
    np.testing.assert_allclose(report.gamma_tot, 1.0)
    assert report.mitigated.count == 6 and report.mitigated.dead == 0
    assert np.max(report.mitigated.stderr) < 1e-6


def test_forced_plan_trajectory(spin_boson_model, unit_bath):
    q = np.zeros(16)
    q[3] = -2.0
    p = np.zeros(16)
    p[3] = 1.0
    alpha = np.ones(16)
    alpha[3] = -1.0
    plan = QuasiProbabilityPlan(0, 0.0, q, 2.0, alpha, p)
    config = run_config(spin_boson_model.with_coupling(0.0), unit_bath, T=0.1, mode="mitigated")
    outcome = run_trajectory(config, [plan], 0)
    assert outcome.indices[0] == 4
    np.testing.assert_allclose(outcome.coefficient, [1.0, -2.0])
    assert outcome.values[0, 1] == pytest.approx(2.0 * np.cos(0.2))
    assert not outcome.dead and not outcome.aborted


def test_trajectory_coefficients(spin_boson_model, unit_bath):
    config = run_config(spin_boson_model.with_coupling(0.5), unit_bath, T=0.3, N_r=32, mode="mitigated")
    plans = config.compile()
    batch = MitigationEngine(config, plans).simulate(0, 32, recover=True)
    series = gamma_tot_series(plans)
    assert np.all(np.abs(batch.coefficient) <= series[None, :] + 1e-12)
    for i in np.flatnonzero(batch.coefficient[:, -1]):
        sign = np.prod([plans[k].alpha[batch.indices[i, k] - 1] for k in range(config.M)])
        assert np.sign(batch.coefficient[i, -1]) == sign
        assert np.all(batch.indices[i] >= 1)


def test_single_trajectory_matches_batch(spin_boson_model, unit_bath):
    config = run_config(spin_boson_model.with_coupling(0.5), unit_bath, T=0.3, mode="mitigated")
    engine = MitigationEngine(config)
    batch = engine.simulate(0, 8, recover=True)
    single = run_trajectory(config, engine.plans, 5, engine)
    np.testing.assert_allclose(single.values, batch.values[5], atol=1e-12)
    np.testing.assert_array_equal(single.indices, batch.indices[5])


def test_estimate_is_deterministic(spin_boson_model, unit_bath):
    config = run_config(spin_boson_model.with_coupling(0.3), unit_bath, T=0.3, N_r=20, threads=1)
    first = estimate(config)
    second = estimate(replace(config, threads=3))
    np.testing.assert_array_equal(first.noisy.mean, second.noisy.mean)
    np.testing.assert_array_equal(first.mitigated.mean, second.mitigated.mean)
    np.testing.assert_array_equal(first.mitigated.stderr, second.mitigated.stderr)
    other = estimate(replace(config, seed=4))
    assert not np.array_equal(first.mitigated.mean, other.mitigated.mean)


def test_required_samples():
    assert required_samples(0.1, 0.05, 1.0) == 369
    assert required_samples(0.1, 0.05, 2.0) == 738
    with pytest.raises(ConfigError):
        required_samples(0.0, 0.05, 1.0)
    with pytest.raises(ConfigError):
        required_samples(0.1, 1.5, 1.0)


def test_required_samples_from_plans(spin_boson_model, unit_bath):
    config = run_config(spin_boson_model, unit_bath)
    plans = config.compile()
    assert required_samples(0.1, 0.05, plans) == required_samples(0.1, 0.05, config)
    assert required_samples(0.1, 0.05, plans) >= 369


@pytest.fixture
def strong_config(unit_bath):
    model = SystemModel(-4.0 * Z, (X,), 0.9)
    return run_config(model, unit_bath, T=1.0, dt=0.025, dt_f=0.025)


def test_one_step_bound(strong_config):
    assert one_step_bound(strong_config, 0.0) == pytest.approx(4.303125e-3)
    assert bounds(strong_config).one_step == pytest.approx(4.303125e-3)
    assert one_step_bound(strong_config, 2.0) < one_step_bound(strong_config, 1.0)


def test_bias_and_step_bounds(strong_config):
    values = bounds(strong_config)
    lam2, dt = 0.81, 0.025
    assert values.hamiltonian_norm == pytest.approx(4.0)
    assert values.bias == pytest.approx(dt * lam2 * 8.0 + dt ** 2 * lam2 * 0.5 / (1 - math.exp(-dt)))
    assert required_step(strong_config, 0.1) == pytest.approx(0.1 / (lam2 * (8.0 + 0.5 / (1 - math.exp(-1.0)))))
    assert values.required_samples_bound == pytest.approx(4.0 * math.log(20.0) * math.exp(lam2 * 2.0) / 0.01, abs=1.0)


def test_gamma_tot_below_bound(strong_config):
    values = bounds(strong_config, plans=strong_config.compile())
    assert values.overhead_constant == overhead_constant(1)
    assert 1.0 < values.gamma_tot <= values.gamma_bound
    assert values.required_samples == required_samples(0.1, 0.05, values.gamma_tot)


def test_bounds_without_bath(spin_boson_model):
    values = bounds(run_config(spin_boson_model, BathSpec(1)))
    assert values.env is None
    assert values.one_step == 0.0 and values.bias == 0.0
    assert values.gamma_bound == 1.0
    assert values.required_step == math.inf


def test_sweep_gamma_tot(commuting_model):
    config = run_config(commuting_model, single_pole_family(1.0), T=0.5)
    cutoffs = (1.0, 2.0, 4.0)
    tables = {c: single_pole_family(c) for c in cutoffs}
    rows = sweep_gamma_tot(config, cutoffs, tables)
    np.testing.assert_allclose([row.g_env for row in rows], [1.0, 8.0, 64.0])
    finals = [row.gamma_tot[-1] for row in rows]
    assert finals[0] < finals[1] < finals[2]
    assert all(len(row.gamma_tot) == config.M + 1 for row in rows)
    assert all(row.lam2 == pytest.approx(0.01) for row in rows)
    fitted = fit_overhead_constant(rows, config.T)
    assert 0.0 < fitted <= overhead_constant(1)
    assert fit_overhead_constant(rows, config.T, lam2=0.02) == pytest.approx(fitted / 2)
    with pytest.raises(ConfigError) as info:
        sweep_gamma_tot(config, (3.0,), tables)
    assert info.value.field == "sweep.tables"


def test_overhead_constant_across_couplings(commuting_model):
    cutoffs = (1.0, 2.0, 4.0)
    tables = {c: single_pole_family(c) for c in cutoffs}
    sweeps = {}
    for lam in (0.1, 0.5, 0.9):
        config = run_config(commuting_model.with_coupling(lam), single_pole_family(1.0), T=0.5, gamma_cap=None)
        sweeps[lam] = sweep_gamma_tot(config, cutoffs, tables)
    rows = [row for lam_rows in sweeps.values() for row in lam_rows]
    assert len(rows) == 9
    fitted = fit_overhead_constant(rows, 0.5)
    assert 0.0 < fitted <= overhead_constant(1)
    for row in rows:
        assert math.log(row.gamma_tot[-1]) <= fitted * row.lam2 * row.g_env * 0.5 * (1 + 1e-12)
    for weak, medium, strong in zip(sweeps[0.1], sweeps[0.5], sweeps[0.9]):
        assert weak.gamma_tot[-1] < medium.gamma_tot[-1] < strong.gamma_tot[-1]
    assert fitted == pytest.approx(fit_overhead_constant(sweeps[0.1], 0.5))


def test_mitigated_variance_grows_with_steps(commuting_model, unit_bath):
    model = commuting_model.with_coupling(0.7)
    variances = []
    for steps in (1, 2, 4):
        config = run_config(model, unit_bath, T=0.1 * steps, N_r=4000, batch_size=500, mode="mitigated",
                            observables=(Z,), observable_labels=("Z",), initial_state=ZERO)
        plans = config.compile()
        report = estimate(config, plans)
        variance = report.mitigated.stderr[0, -1] ** 2 * report.mitigated.count
        assert variance <= gamma_tot_series(plans)[-1] ** 2
        variances.append(variance)
    assert variances[0] <= variances[1] <= variances[2]


def test_strong_coupling_widens_mitigated_band(commuting_model, unit_bath):
    config = run_config(commuting_model.with_coupling(0.9), unit_bath, T=1.0, N_r=2000, batch_size=500,
                        observables=(Z,), observable_labels=("Z",), initial_state=ZERO)
    report = estimate(config)
    assert report.gamma_tot[-1] > 2.0
    assert report.mitigated.stderr[0, -1] > report.noisy.stderr[0, -1]


def test_moments_merge(rng):
    samples = rng.normal(size=(37, 3))
    parts = [Moments.of(samples[:10]), Moments.of(samples[10:11]), Moments.of(samples[11:]), Moments.of(samples[:0])]
    merged = merge_moments(parts)
    assert merged.count == 37
    np.testing.assert_allclose(merged.mean, samples.mean(axis=0), atol=1e-14)
    np.testing.assert_allclose(merged.stderr, samples.std(axis=0, ddof=1) / np.sqrt(37), atol=1e-14)
    assert not np.any(Moments.of(samples[:1]).stderr)


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_write_report_csv(tmp_path, spin_boson_model, unit_bath):
    config = run_config(spin_boson_model.with_coupling(0.0), unit_bath, mode="noisy-only", N_r=2)
    report = estimate(config)
    assert report.mitigated is None
    paths = write_report_csv(report, tmp_path / "observables")
    assert [p.name for p in paths] == ["X.csv"]
    rows = read_rows(paths[0])
    assert rows[0] == REPORT_COLUMNS
    assert len(rows) == config.M + 2
    assert rows[2][4:6] == ["", ""]
    assert float(rows[2][2]) == pytest.approx(np.cos(0.2))
    assert float(rows[2][6]) == 1.0


def test_write_bounds_csv(tmp_path, strong_config):
    path = write_bounds_csv(bounds(strong_config, plans=strong_config.compile()), tmp_path / "bounds.csv")
    rows = read_rows(path)
    assert rows[0] == ["quantity", "value"]
    table = dict(rows[1:])
    assert float(table["one_step"]) == pytest.approx(4.303125e-3)
    assert table["required_samples_bound"].isdigit()
    assert "gamma_tot" in table and "required_samples" in table


def test_write_sweep_csv(tmp_path, commuting_model):
    config = run_config(commuting_model, single_pole_family(1.0))
    rows = sweep_gamma_tot(config, (1.0, 2.0), {1.0: single_pole_family(1.0), 2.0: single_pole_family(2.0)})
    lines = read_rows(write_sweep_csv(rows, tmp_path / "sweep.csv"))
    assert lines[0] == ["omega_c", "g_env", "t", "gamma_tot"]
    assert len(lines) == 1 + 2 * (config.M + 1)
    assert float(lines[-1][0]) == 2.0


def test_write_manifest(tmp_path):
    path = write_manifest(tmp_path / "run" / "manifest.json", {"seed": 1, "config_hash": "abc"})
    text = path.read_text(encoding="utf-8")
    assert text.index('"config_hash"') < text.index('"seed"')
    assert json.loads(text) == {"seed": 1, "config_hash": "abc"}


@pytest.mark.slow
def test_mitigated_mean_tracks_ideal(spin_boson_model, unit_bath):
    config = run_config(spin_boson_model.with_coupling(0.3), unit_bath, T=0.5, dt=0.05, dt_f=0.01,
                        N_r=4000, batch_size=256)
    report = estimate(config)
    deviation = np.abs(report.mitigated.mean[0] - report.ideal[0])
    assert np.all(deviation < 0.02 + 4.0 * report.mitigated.stderr[0])


@pytest.mark.slow
def test_monte_carlo_matches_exact_mitigation(spin_boson_model, unit_bath):
    from nmpec.reference import mitigated_expectation_exact

    config = run_config(spin_boson_model, unit_bath, T=0.3, dt=0.1, dt_f=0.025, N_r=20000, batch_size=512,
                        mode="mitigated")
    plans = config.compile()
    report = estimate(config, plans)
    rho0 = np.outer(PLUS, PLUS)
    exact = mitigated_expectation_exact(spin_boson_model, unit_bath, plans, X, rho0, config.dt, 0.005)
    assert abs(report.mitigated.mean[0, -1] - exact) < 0.005 + 4.0 * report.mitigated.stderr[0, -1]
