import json
import math
from pathlib import Path

import numpy as np
import pytest

from mhdecay.cli import main
from mhdecay.config import DEFAULTS, ConfigError, default_config, load_config, parse_config_text
from mhdecay.evolution import EvolutionError
from mhdecay.runner import convergence, read_history, run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SMALL = "grid.w1 = 12\ngrid.v1 = 12\ngrid.delta = 0.125\n"
PULSE = (CONFIGS / "pulse.txt").read_text()
MODE = ("sector = mode\nmode.ell = 1\ndata.profile = compact-bump\ndata.amplitude = 1\n"
        "data.center = 6\ndata.width = 2\ngrid.w1 = 20\ngrid.v1 = 20\ngrid.delta = 0.125\n"
        "curves.quantities = mode amplitude\n")


def test_minimal_config_defaults():
    cfg = load_config("")
    assert cfg.values == DEFAULTS
    assert cfg == default_config()
    assert cfg.grid.delta == 0.0625 and cfg.background.m == 1.0


def test_comments_and_types():
    cfg = load_config("# header\ngrid.delta = 0.25  # coarse\nmode.ell = 3\nmultiplier.h.enabled = false\n")
    assert cfg["grid.delta"] == 0.25 and cfg["mode.ell"] == 3 and cfg["multiplier.h.enabled"] is False


def test_r1_outside_support_window():
    with pytest.raises(ConfigError, match="support window"):
        load_config("multiplier.r1 = 2.9\n")
    # without the H diagnostics the window does not apply
    load_config("multiplier.r1 = 2.9\nmultiplier.h.enabled = false\n")


def test_duplicate_key():
    with pytest.raises(ConfigError, match="line 2: duplicate key"):
        parse_config_text("grid.delta = 0.5\ngrid.delta = 0.25\n")


def test_unknown_key_and_bad_value():
    with pytest.raises(ConfigError, match="line 1: unknown key"):
        parse_config_text("grid.spacing = 1\n")
    with pytest.raises(ConfigError, match="grid.delta"):
        parse_config_text("grid.delta = fine\n")


def test_config_hash_tracks_values():
    a, b = load_config(SMALL), load_config(SMALL + "data.Q0 = 1\n")
    assert a.config_hash != b.config_hash
    assert a.config_hash == load_config(SMALL).config_hash
    assert load_config(a.text()) == a


def test_zero_run(tmp_path):
    res = run(load_config(SMALL), tmp_path)
    assert res.passed
    header, table = read_history(tmp_path / "history.csv")
    assert header["run_id"] == res.config.run_id
    assert np.all(table[:, 3:] == 0)
    for rec in res.records:
        if rec.get("record") == "energy":
            # E4 carries an additive constant 1 outside the Quartic case
            assert rec["value"] == (1.0 if rec["functional"] == "E4" else 0.0)


def test_coulomb_run(tmp_path):
    res = run(load_config(SMALL + "data.Q0 = 1\n"), tmp_path)
    energies = [r["value"] for r in res.records
                if r.get("record") == "energy" and r["functional"] == "E_t" and r["commutation"] == [0, 0]]
    assert res.passed
    assert np.allclose(energies, math.pi, rtol=1e-4)


def test_pulse_run_outputs(tmp_path):
    res = run(load_config(PULSE), tmp_path)
    assert res.passed
    files = set(p.name for p in tmp_path.iterdir())
    assert {"config.txt", "history.csv", "diagnostics.ndjson", "run.json"} <= files
    assert sum(name.startswith("series_") for name in files) == 9
    kinds = {json.loads(x)["record"] for x in (tmp_path / "diagnostics.ndjson").read_text().splitlines()}
    assert {"energy", "identity", "killing_bulk", "residual", "fit", "envelope", "check"} <= kinds
    functionals = {json.loads(x).get("functional") for x in (tmp_path / "diagnostics.ndjson").read_text().splitlines()}
    assert {"E_t", "E_K", "E_G", "E_H", "E_MH_hat", "E4", "J_K", "I_H"} <= functionals


def test_runs_are_byte_identical(tmp_path):
    cfg = load_config(PULSE.replace("grid.w1 = 30", "grid.w1 = 20").replace("grid.v1 = 30", "grid.v1 = 20")
                      + "grid.delta = 0.125\n")
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name


def test_abort_writes_partial_summary(tmp_path):
    cfg = load_config("data.profile = compact-bump\ndata.amplitude = 1000\ndata.center = 5\ndata.width = 2\n"
                      "potential.kind = Quartic\npotential.c2 = 1\ngrid.w1 = 10\ngrid.v1 = 10\ngrid.delta = 0.25\n")
    with pytest.raises(EvolutionError):
        run(cfg, tmp_path)
    summary = json.loads((tmp_path / "run.json").read_text())
    assert summary["status"] == "aborted" and summary["partial"] and len(summary["cell"]) == 2


def test_mode_convergence_orders():
    rep = convergence(load_config(MODE), 3)
    for name in ("probe_psi", "mode_energy_drift"):
        assert 1.7 <= rep.order(name) <= 2.3, (name, rep.entries[name])


def test_first_order_hook_detected():
    rep = convergence(load_config(MODE), 3, first_order=True)
    assert rep.order("probe_psi") == pytest.approx(1.0, abs=0.25)


def test_zero_diagnostics_order_not_applicable():
    rep = convergence(load_config(SMALL.replace("0.125", "0.25")), 3)
    assert all(e["order"] is None for e in rep.entries.values())
    assert all("n/a" in line for line in rep.lines())


def test_cli_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("multiplier.r1 = 2.9\n")
    assert main(["evolve", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "support window" in capsys.readouterr().err


def test_cli_modes_and_fit(tmp_path, capsys):
    cfg = tmp_path / "m.txt"
    cfg.write_text(MODE)
    assert main(["modes", "--config", str(cfg), "--out", str(tmp_path / "m")]) == 0
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "f")]) == 0
    assert "[PASS] E_t_drift" in capsys.readouterr().out


def test_cli_convergence(tmp_path, capsys):
    cfg = tmp_path / "m.txt"
    cfg.write_text(MODE)
    assert main(["convergence", "--config", str(cfg), "--levels", "2", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "convergence.ndjson").exists()
    assert "probe_psi" in capsys.readouterr().out


def test_cli_verify_without_evolution(capsys):
    assert main(["verify", "--suite", "no-evolution"]) != 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 11
    assert sum(line.startswith("[SKIP]") for line in lines) == 10
