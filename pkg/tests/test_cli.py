import csv
import json

import pytest
import yaml

from nmpec.cli import build_parser, cmd_validate, main


def write_config(tmp_path, name="experiment", lam=0.1, sweep=None, **run):
    settings = {"T": 0.2, "dt": 0.1, "dt_f": 0.05, "N_r": 16, "seed": 5, "mode": "both",
                "observables": ["X", "Z"], "initial_state": "+", "batch_size": 8, "progress": False}
    settings.update(run)
    document = {
        "version": 1,
        "name": name,
        "model": {"n": 1, "hamiltonian": "-1.0 Z", "couplings": ["X"], "coupling_strength": lam},
        "bath": {"channels": 1, "poles": [{"g": [[1.0, 0.0]], "omega": [0.0, 1.0]}]},
        "run": settings,
        "output": {"directory": str(tmp_path / "results" / name)},
    }
    if sweep is not None:
        document["sweep"] = sweep
    path = tmp_path / f"{name}.yaml"
    path.write_text(yaml.safe_dump(document, sort_keys=False), encoding="utf-8")
    return str(path)


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_validate(tmp_path):
    good = write_config(tmp_path)
    assert main(["validate", "--config", good]) == 0
    result = cmd_validate(good)
    assert result.ok
    assert result.summary["M"] == 2 and result.summary["substeps"] == 2
    assert result.summary["g_env"] == pytest.approx(2.0)
    bad = write_config(tmp_path, "bad", T=0.25)
    assert main(["validate", "--config", bad]) == 1
    assert "run.T" in cmd_validate(bad).errors[0]
    assert main(["validate", "--config", str(tmp_path / "absent.yaml")]) == 1


def test_run_without_coupling(tmp_path):
    config = write_config(tmp_path, lam=0.0)
    out = tmp_path / "out"
    assert main(["run", "--config", config, "--out", str(out)]) == 0
    for label in ("X", "Z"):
        rows = read_rows(out / "observables" / f"{label}.csv")
        assert rows[0][:3] == ["t", "ideal", "noisy_mean"]
        assert len(rows) == 4
        for row in rows[1:]:
            ideal, noisy, mitigated = float(row[1]), float(row[2]), float(row[4])
            assert noisy == pytest.approx(ideal, abs=1e-10)
            assert mitigated == pytest.approx(ideal, abs=1e-10)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["M"] == 2 and manifest["seed"] == 5
    assert manifest["files"] == ["observables/X.csv", "observables/Z.csv"]
    assert len(manifest["config_hash"]) == 64
    assert set(manifest["versions"]) == {"nmpec", "numpy", "scipy", "python"}


def test_run_is_reproducible(tmp_path):
    config = write_config(tmp_path, lam=0.3)
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["run", "--config", config, "--out", str(first), "--threads", "1"]) == 0
    assert main(["run", "--config", config, "--out", str(second), "--threads", "3"]) == 0
    for name in ("observables/X.csv", "observables/Z.csv", "bounds.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    reseeded = tmp_path / "reseeded"
    assert main(["run", "--config", config, "--out", str(reseeded), "--seed", "6"]) == 0
    assert (first / "observables/X.csv").read_bytes() != (reseeded / "observables/X.csv").read_bytes()
    assert json.loads((reseeded / "manifest.json").read_text(encoding="utf-8"))["seed"] == 6


def test_run_exports_plans(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", write_config(tmp_path), "--out", str(out), "--plans"]) == 0
    plans = json.loads((out / "plans.json").read_text(encoding="utf-8"))
    assert [p["step"] for p in plans] == [0, 1]
    assert len(plans[0]["q"]) == 16


def test_run_noisy_only_leaves_mitigated_empty(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", write_config(tmp_path, mode="noisy-only"), "--out", str(out)]) == 0
    rows = read_rows(out / "observables" / "X.csv")
    assert all(row[4] == "" and row[5] == "" for row in rows[1:])
    assert not (out / "plans.json").exists()


def test_run_failure_exit_code(tmp_path):
    config = write_config(tmp_path, lam=0.0, dt_f=0.03)
    assert main(["run", "--config", config, "--out", str(tmp_path / "out")]) == 1


def test_bounds(tmp_path):
    out = tmp_path / "out"
    assert main(["bounds", "--config", write_config(tmp_path), "--out", str(out), "--epsilon", "0.05"]) == 0
    table = dict(read_rows(out / "bounds.csv")[1:])
    assert float(table["g_env"]) == pytest.approx(2.0)
    assert float(table["gamma_tot"]) >= 1.0
    assert int(table["required_samples"]) >= 1476
    assert main(["bounds", "--config", write_config(tmp_path, "loose"), "--delta", "2"]) == 1


def test_sweep(tmp_path):
    out = tmp_path / "out"
    sweep = {"cutoffs": [1.0, 2.0], "family": {"amplitude": 0.5}}
    assert main(["sweep", "--config", write_config(tmp_path, sweep=sweep), "--out", str(out)]) == 0
    rows = read_rows(out / "sweep.csv")
    assert rows[0] == ["omega_c", "g_env", "t", "gamma_tot"]
    assert len(rows) == 1 + 2 * 3
    assert float(rows[-1][3]) > float(rows[3][3])


def test_empty_sweep(tmp_path):
    out = tmp_path / "out"
    config = write_config(tmp_path, sweep={"cutoffs": [], "family": {"amplitude": 0.5}})
    assert main(["sweep", "--config", config, "--out", str(out)]) == 0
    assert read_rows(out / "sweep.csv") == [["omega_c", "g_env", "t", "gamma_tot"]]


def test_sweep_needs_block(tmp_path):
    assert main(["sweep", "--config", write_config(tmp_path), "--out", str(tmp_path / "out")]) == 1


def test_reference(tmp_path):
    out = tmp_path / "out"
    assert main(["reference", "--config", write_config(tmp_path), "--out", str(out)]) == 0
    states = read_rows(out / "reference" / "states.csv")
    assert states[0][0] == "t" and len(states) == 4
    assert [float(row[0]) for row in states[1:]] == pytest.approx([0.0, 0.1, 0.2])
    spectrum = read_rows(out / "reference" / "gamma_spectrum.csv")
    assert spectrum[0] == ["t", "eig_0", "eig_1", "eig_2", "eig_3"]
    assert len(spectrum) == 4


def test_default_output_directory(tmp_path):
    config = write_config(tmp_path)
    assert main(["bounds", "--config", config]) == 0
    assert (tmp_path / "results" / "experiment" / "bounds.csv").exists()


def test_parser_requires_config():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run"])
    args = build_parser().parse_args(["run", "--config", "x.yaml", "--seed", "3", "--plans"])
    assert args.seed == 3 and args.plans and args.out is None
