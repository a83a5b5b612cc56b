import json

import numpy as np
import pytest

from ionsq.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_modes_json(capsys):
    code, out = run_cli(capsys, "modes", "--n-ions", "4", "--json")
    assert code == 0
    data = json.loads(out)
    assert data["n_ions"] == 4
    assert abs(data["mode_freqs"][1] - np.sqrt(3)) < 1e-8
    assert data["couplings_cm"] == [0.5, 0.5, 0.5, 0.5]


def test_modes_text(capsys):
    code, out = run_cli(capsys, "modes", "--n-ions", "2")
    assert code == 0
    assert "mode frequencies" in out


def test_run_and_output_file(tmp_path, capsys):
    out_file = tmp_path / "run.json"
    code, out = run_cli(
        capsys, "run", "--protocol", "nr", "--mode", "cm", "--n-ions", "4",
        "--r", "0.4", "--qcrb", "--output", str(out_file),
    )
    assert code == 0
    data = json.loads(out_file.read_text())
    assert data["gain"] == pytest.approx(json.loads(out)["gain"])
    assert data["gain_db"] > 0
    assert data["qcrb"] is not None


def test_probe_save_and_analyze(tmp_path, capsys):
    probe_file = tmp_path / "probe.bin"
    code, _ = run_cli(
        capsys, "run", "--protocol", "nr", "--mode", "cm", "--n-ions", "4",
        "--r", "0.5", "--save-probe", str(probe_file),
    )
    assert code == 0
    code, out = run_cli(
        capsys, "analyze", "--input", str(probe_file),
        "--qfi", "--qfi-spin", "--cfi", "--renyi", "--json",
    )
    assert code == 0
    data = json.loads(out)
    assert data["cfi_spin"] <= data["qfi_spin"] * (1 + 1e-6)
    assert data["qfi_spin"] <= data["qfi"] * (1 + 1e-6)
    assert data["renyi"] >= 0


def test_save_ensemble_snapshot(tmp_path, capsys):
    from ionsq.container import load_ensemble

    ens_file = tmp_path / "probe_ens.bin"
    code, _ = run_cli(
        capsys, "run", "--protocol", "nr", "--mode", "cm", "--n-ions", "4",
        "--r", "0.3", "--engine", "twa", "--trajectories", "512",
        "--save-ensemble", str(ens_file),
    )
    assert code == 0
    header, spins, boson = load_ensemble(ens_file)
    assert header["n_traj"] == 512
    assert spins.shape == (512, 4, 3)
    assert boson.shape == (512, 1)


def test_analyze_text_mode(tmp_path, capsys):
    probe_file = tmp_path / "p.bin"
    run_cli(capsys, "run", "--protocol", "nr", "--mode", "cm", "--n-ions", "4",
            "--r", "0.3", "--save-probe", str(probe_file))
    code, out = run_cli(capsys, "analyze", "--input", str(probe_file), "--renyi")
    assert code == 0
    assert "renyi:" in out


def test_sweep_with_config_file_and_override(tmp_path, capsys):
    plan = {
        "base": {"protocol": "nr", "mode": "cm", "n_ions": 4},
        "axis": "r",
        "values": [0.2, 0.4],
        "master_seed": 3,
    }
    cfg_file = tmp_path / "plan.json"
    cfg_file.write_text(json.dumps(plan))
    csv_file = tmp_path / "out.csv"
    json_file = tmp_path / "out.json"
    code, out = run_cli(
        capsys, "sweep", "--config", str(cfg_file),
        "--output", str(csv_file), "--json-output", str(json_file),
    )
    assert code == 0
    lines = csv_file.read_text().splitlines()
    assert len(lines) == 3
    rows = json.loads(json_file.read_text())
    assert rows[0]["n_ions"] == 4
    # flag override: different ion count
    code, _ = run_cli(
        capsys, "sweep", "--config", str(cfg_file), "--n-ions", "6",
        "--output", str(csv_file),
    )
    assert code == 0
    assert ",6," in csv_file.read_text().splitlines()[1]


def test_sweep_exit_code_on_failure(tmp_path, capsys):
    code, _ = run_cli(
        capsys, "sweep", "--protocol", "nr", "--mode", "b",
        "--axis", "n_ions", "--values", "4,5",
    )
    assert code == 1


def test_fit_command(tmp_path, capsys):
    csv_file = tmp_path / "scaling.csv"
    header = "n_ions,gain,status"
    rows = [f"{n},{0.45 * n ** -0.68!r},ok" for n in (4, 8, 16, 32)]
    csv_file.write_text("\n".join([header] + rows) + "\n")
    code, out = run_cli(capsys, "fit", "--input", str(csv_file))
    assert code == 0
    data = json.loads(out)
    assert data["b"] == pytest.approx(0.68, abs=1e-9)
    assert data["a"] == pytest.approx(0.45, abs=1e-9)


def test_analytic_models(capsys):
    code, out = run_cli(capsys, "analytic", "--model", "sa-phase", "--r", "1.0",
                        "--sigma", "3.0")
    assert code == 0
    data = json.loads(out)
    assert data["gain"] == pytest.approx(np.cosh(1.0) ** -2, rel=1e-6)
    code, out = run_cli(capsys, "analytic", "--model", "thermal", "--nbar", "0.5",
                        "--n-ions", "64")
    data = json.loads(out)
    assert data["r_opt"] == pytest.approx(0.5 * np.log(8.0), rel=1e-9)


def test_config_error_is_reported(capsys):
    code = main(["run", "--protocol", "nr", "--mode", "b", "--n-ions", "5"])
    assert code == 2
