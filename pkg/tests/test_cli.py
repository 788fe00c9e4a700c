import json
import os
import subprocess
import sys

import pytest

from dracsim import io
from dracsim.cli import EXIT_INPUT, EXIT_MISMATCH, EXIT_OK, main
from dracsim.config import parse_experiment, parse_nv, preset_names, preset_text


def _write(path, doc):
    path.write_text(json.dumps(doc, indent=2))
    return str(path)


def _pair_config(kind, b0=1.0, axis="free_time", **protocol):
    proto = {"kind": kind, "tau": 8e-4, "n_blocks": 1500} | protocol
    return {
        "schema_version": 1,
        "molecule": "pair-plus-singlet",
        "field": {"b0": b0},
        "protocol": proto,
        "spectrum": {"axis": axis, "threshold": 0.2},
    }


def test_list_presets(capsys):
    assert main(["list-presets"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("fig2a-conventional", "fig3c", "fig4-dracaeris-r10", "fig5a"):
        assert name in out


@pytest.mark.parametrize("name", preset_names())
def test_every_preset_validates(name, capsys):
    assert main(["validate", "--preset", name]) == EXIT_OK
    doc = json.loads(preset_text(name))
    cfg = parse_nv(doc) if "nv" in doc else parse_experiment(doc)
    assert cfg is not None


def test_simulate_writes_outputs(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", _pair_config("conventional"))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    names = {p.name for p in (tmp_path / "o").iterdir()}
    assert {"timeseries.csv", "spectrum.csv", "peaks.csv", "spectrum.svg"} <= names
    assert len(io.read_peaks(tmp_path / "o" / "peaks.csv")) >= 3


def test_out_dir_from_environment(tmp_path, monkeypatch):
    cfg = _write(tmp_path / "c.json", _pair_config("conventional"))
    monkeypatch.setenv("DRACSIM_OUT_DIR", str(tmp_path / "env"))
    assert main(["simulate", "--config", cfg]) == EXIT_OK
    assert (tmp_path / "env" / "spectrum.csv").exists()


def test_bad_thread_env_is_input_error(tmp_path, monkeypatch):
    cfg = _write(tmp_path / "c.json", _pair_config("conventional"))
    monkeypatch.setenv("DRACSIM_THREADS", "many")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == EXIT_INPUT


def test_missing_t2_reports_field(tmp_path, capsys):
    doc = _pair_config("conventional")
    doc["molecule"] = {"name": "m", "spins": [{"label": "a", "shift_ppm": 1.0}]}
    cfg = _write(tmp_path / "c.json", doc)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "molecule.t2" in err and "line" in err


def test_invariant_violation_is_input_error(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", _pair_config("aeris", mu=8e-4, rabi_hz=1000.0))
    assert main(["validate", "--config", cfg]) == EXIT_INPUT
    assert "protocol" in capsys.readouterr().err


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("schema_version"),
        lambda d: d.update(schema_version=2),
        lambda d: d["protocol"].update(bogus=1),
        lambda d: d["protocol"].update(kind="cpmg"),
        lambda d: d["spectrum"].update(threshold=2.0),
        lambda d: d.update(outputs=[{"kind": "match_report"}]),
    ],
)
def test_malformed_configs(tmp_path, mutate):
    doc = _pair_config("conventional")
    mutate(doc)
    assert main(["validate", "--config", _write(tmp_path / "c.json", doc)]) == EXIT_INPUT


def test_config_and_preset_are_exclusive(tmp_path):
    assert main(["validate"]) == EXIT_INPUT
    cfg = _write(tmp_path / "c.json", _pair_config("conventional"))
    assert main(["validate", "--config", cfg, "--preset", "fig3a"]) == EXIT_INPUT


def test_unreadable_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    assert main(["validate", "--config", str(path)]) == EXIT_INPUT
    assert main(["validate", "--config", str(tmp_path / "missing.json")]) == EXIT_INPUT


def test_argparse_usage_error():
    assert main(["simulate", "--threads", "x"]) == 2


def _spectrum(tmp_path, name, doc):
    out = tmp_path / name
    assert main(["simulate", "--config", _write(tmp_path / f"{name}.json", doc), "--out", str(out)]) == EXIT_OK
    return str(out / "spectrum.csv")


def test_compare_identical_spectra(tmp_path):
    a = _spectrum(tmp_path, "conv", _pair_config("conventional"))
    assert main(["compare", a, a, "--threshold", "0.2", "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "match_report.json").read_text())
    assert rep["all_matched"] and rep["max_abs_delta_hz"] == 0.0


def test_compare_free_axis_dracaeris_against_full_field(tmp_path):
    # on the free-time axis the J splitting is stretched by (tau + mu) / tau
    conv = _spectrum(tmp_path, "conv", _pair_config("conventional"))
    drac = _spectrum(tmp_path, "drac", _pair_config("dracaeris", mu=8e-4, rabi_hz=20000.0))
    report = tmp_path / "r.json"
    code = main(["compare", conv, drac, "--tol", "1", "--threshold", "0.2", "--report", str(report)])
    assert code == EXIT_MISMATCH
    assert not json.loads(report.read_text())["all_matched"]


def test_compare_accepts_peak_files(tmp_path):
    _spectrum(tmp_path, "conv", _pair_config("conventional"))
    p = str(tmp_path / "conv" / "peaks.csv")
    assert main(["compare", p, p, "--report", str(tmp_path / "r.json")]) == EXIT_OK


def test_compare_missing_input(tmp_path):
    assert main(["compare", str(tmp_path / "a.csv"), str(tmp_path / "b.csv")]) == EXIT_INPUT


def test_simulate_with_reference_mismatch_exit_code(tmp_path):
    doc = _pair_config("dracaeris", mu=8e-4, rabi_hz=20000.0)
    doc["reference"] = {"protocol": {"kind": "conventional", "tau": 8e-4, "n_blocks": 1500}, "freq_tol_hz": 1.0}
    cfg = _write(tmp_path / "c.json", doc)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_MISMATCH
    rep = json.loads((tmp_path / "o" / "match_report.json").read_text())
    assert rep["passed"] is False


def test_simulate_preset_with_reference_passes(tmp_path):
    assert main(["simulate", "--preset", "fig3c", "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "match_report.json").read_text())
    assert rep["passed"] and rep["units"] == "ppm"


def test_trajectory_preset(tmp_path):
    assert main(["simulate", "--preset", "trajectory-dracaeris", "--out", str(tmp_path)]) == EXIT_OK
    tr = io.read_trajectory(tmp_path / "trajectory.csv")
    assert abs(tr.mz[tr.block_end]).max() < 1e-6


def _nv_doc(seed=0):
    return {
        "schema_version": 1,
        "nv": {
            "n_field_samples": 10,
            "rng_seed": seed,
            "theta_grid": [150, 180, 210],
            "sequences": [{"family": "xy8", "n_cycles": 1}, {"family": "rewind2", "n_cycles": 2}],
        },
        "outputs": [{"kind": "sweep"}, {"kind": "svg"}, {"kind": "sequence", "path": "{name}.json"}],
    }


def test_nv_sweep_outputs_and_seed(tmp_path):
    cfg = _write(tmp_path / "nv.json", _nv_doc())
    assert main(["nv-sweep", "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["nv-sweep", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "3"]) == EXIT_OK
    assert main(["nv-sweep", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "9"]) == EXIT_OK
    a = (tmp_path / "a" / "sweep-xy8-1.csv").read_text()
    assert a == (tmp_path / "b" / "sweep-xy8-1.csv").read_text()
    assert a != (tmp_path / "c" / "sweep-xy8-1.csv").read_text()
    assert (tmp_path / "a" / "sweep.svg").read_text().startswith("<svg")
    assert json.loads((tmp_path / "a" / "rewind2-2.json").read_text())["name"] == "rewind2-2"


def test_nv_sweep_from_sequence_file(tmp_path):
    from dracsim.nvsensor import rewind2

    rewind2(3).save(tmp_path / "seq.json")
    doc = _nv_doc()
    doc["nv"]["sequences"] = [{"file": "seq.json"}]
    cfg = _write(tmp_path / "nv.json", doc)
    assert main(["nv-sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    assert io.read_sweep(tmp_path / "o" / "sweep-rewind2-3.csv").n_cycles == 3


def test_wrong_subcommand_for_config(tmp_path):
    nv = _write(tmp_path / "nv.json", _nv_doc())
    assert main(["simulate", "--config", nv]) == EXIT_INPUT
    assert main(["nv-sweep", "--preset", "fig3a"]) == EXIT_INPUT


def test_console_script_with_pure_python_backend(tmp_path):
    env = dict(os.environ, DRACSIM_PURE_PYTHON="1")
    code = "import dracsim.kernels as k; print(k.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    proc = subprocess.run(
        [sys.executable, "-m", "dracsim.cli", "validate", "--preset", "fig2a-aeris"],
        env=env,
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
