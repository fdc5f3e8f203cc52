import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpsi.cli import EXIT_CONFIG, EXIT_DEGENERATE, EXIT_OK, main
from fpsi.errors import ConfigError
from fpsi.io import (MOLLIFIER_COLUMNS, OUT_DIR_ENV, REPORT_COLUMNS, format_float, output_dir, parse_config,
                     serialize_config, write_vtk)
from fpsi.scheme import LEDGER_COLUMNS, Thresholds

MINIMAL = "nx = 2\nny = 2\ndt = 0.05\nT = 0.1\ndelta = 0.25\n"


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert (cfg.nx, cfg.ny, cfg.dt, cfg.T, cfg.delta) == (2, 2, 0.05, 0.1, 0.25)
    assert cfg.order == 6 and cfg.thresholds == Thresholds() and cfg.h_aux_factor == 8.0
    assert cfg.params.L == 1.0 and cfg.kernel == "bump"


def test_comments_and_blank_lines():
    cfg = parse_config("# header\n\n" + MINIMAL.replace("nx = 2", "nx = 3   # trailing"))
    assert cfg.nx == 3


@pytest.mark.parametrize("extra,match", [
    ("mu_v = -1\n", "μ_v, λ_v ≥ 0"),
    ("lam_v = -0.5\n", "μ_v, λ_v ≥ 0"),
    ("unknown_key = 1\n", "unknown key"),
    ("nx = 4\n", "duplicate"),
    ("order = six\n", "cannot parse"),
    ("init = avalanche\n", "not one of"),
    ("this line has no equals sign\n", "key = value"),
])
def test_config_errors(extra, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(MINIMAL + extra)


def test_delta_must_be_below_domain_size():
    with pytest.raises(ConfigError, match=r"δ < min\(L,R\)"):
        parse_config(MINIMAL.replace("delta = 0.25", "delta = 2.0"))


@pytest.mark.parametrize("key", ["nx", "ny", "dt", "T", "delta"])
def test_missing_required_key(key):
    text = "".join(line + "\n" for line in MINIMAL.splitlines() if not line.startswith(key + " "))
    with pytest.raises(ConfigError, match="missing"):
        parse_config(text)


@pytest.mark.parametrize("text", ["dt = 0\n", "T = -1\n"])
def test_nonpositive_times(text):
    key = text.split()[0]
    body = "".join(l + "\n" for l in MINIMAL.splitlines() if not l.startswith(key + " "))
    with pytest.raises(ConfigError):
        parse_config(body + text)


@settings(max_examples=40, deadline=None)
@given(nx=st.integers(1, 64), dt=st.floats(1e-6, 1.0), T=st.floats(1e-3, 10.0),
       delta=st.floats(0.0, 0.99), mu_v=st.floats(0.0, 5.0), nu=st.floats(1e-3, 10.0))
def test_serialize_round_trip(nx, dt, T, delta, mu_v, nu):
    text = (f"nx = {nx}\nny = {nx + 1}\ndt = {format_float(dt)}\nT = {format_float(T)}\n"
            f"delta = {format_float(delta)}\nmu_v = {format_float(mu_v)}\nnu = {format_float(nu)}\n")
    cfg = parse_config(text)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


def test_format_float_round_trips():
    for v in (0.1, 1 / 3, 1e-300, 2.5e17, -7.0):
        assert float(format_float(v)) == v


def test_output_dir_precedence(tmp_path, monkeypatch):
    cfg = parse_config(MINIMAL + f"out = {tmp_path / 'cfg'}\n")
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    assert output_dir(None, cfg) == tmp_path / "cfg"
    assert output_dir(str(tmp_path / "cli"), cfg) == tmp_path / "cli"
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
    assert output_dir(str(tmp_path / "cli"), cfg) == tmp_path / "env"
    assert (tmp_path / "env").is_dir()


def test_vtk_writer(tmp_path):
    p = tmp_path / "t.vtk"
    write_vtk(p, "demo", np.array([[0, 0], [1, 0], [0, 1]]), np.array([[0, 1, 2]]),
              {"v": np.array([[1, 2], [3, 4], [5, 6]]), "s": np.array([0.5, 1.5, 2.5])})
    lines = p.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0" and lines[2] == "ASCII"
    assert "POINTS 3 double" in lines and "CELLS 1 4" in lines and "CELL_TYPES 1" in lines
    assert "VECTORS v double" in lines and "SCALARS s double 1" in lines


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_run_writes_ledger_and_snapshots(tmp_path, monkeypatch):
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    cfg = _write(tmp_path, MINIMAL + "snapshot_stride = 1\ninit = smooth\n")
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out), "--threads", "1"]) == EXIT_OK
    lines = (out / "ledger.csv").read_text().splitlines()
    assert lines[0] == ",".join(LEDGER_COLUMNS) and len(lines) == 3
    for kind in ("fluid", "biot", "plate"):
        assert (out / f"{kind}_000002.vtk").exists()


def test_cli_csv_is_deterministic(tmp_path, monkeypatch):
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    cfg = _write(tmp_path, MINIMAL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(a), "--threads", "1"]) == EXIT_OK
    assert main(["run", "--config", cfg, "--out", str(b), "--threads", "1"]) == EXIT_OK
    assert (a / "ledger.csv").read_bytes() == (b / "ledger.csv").read_bytes()


def test_cli_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
    cfg = _write(tmp_path, MINIMAL)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "ignored")]) == EXIT_OK
    assert (tmp_path / "env" / "ledger.csv").exists() and not (tmp_path / "ignored").exists()


def test_cli_plate_drop_exits_3(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    cfg = _write(tmp_path, "nx = 8\nny = 8\ndt = 0.001\nT = 0.1\ndelta = 0.1\nmu_e = 1\nlam_e = 1\n"
                           "mu_v = 0.01\nlam_v = 0.01\ninit = plate_drop\ninit_amp = 50\n")
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == EXIT_DEGENERATE
    assert "plate_touches_boundary" in capsys.readouterr().err


def test_cli_config_error_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL.replace("delta = 0.25", "delta = 2.0"))
    assert main(["run", "--config", cfg]) == EXIT_CONFIG
    assert "δ < min(L,R)" in capsys.readouterr().err
    assert main(["run"]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG


def test_cli_unknown_subcommand(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["launch"])
    assert exc.value.code == EXIT_CONFIG
    assert "usage:" in capsys.readouterr().err


def test_cli_bad_threads():
    assert main(["verify", "--threads", "0"]) == EXIT_CONFIG


def test_cli_mollifier_sweep(tmp_path, monkeypatch):
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    cfg = _write(tmp_path, MINIMAL + "sweep_kind = mollifier\nsweep_deltas = 0.2, 0.1\n")
    assert main(["sweep-delta", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "mollifier_rates.csv").read_text().splitlines()
    assert lines[0] == ",".join(MOLLIFIER_COLUMNS) and len(lines) == 3


def test_cli_consistency_sweep_rest(tmp_path, monkeypatch):
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    cfg = _write(tmp_path, MINIMAL.replace("delta = 0.25", "delta = 0.0")
                 + "reference = rest\nsweep_deltas = 0.4, 0.2\n")
    assert main(["sweep-delta", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "consistency_report.csv").read_text().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS) and len(lines) == 3
    assert all(float(l.split(",")[1]) == 0 for l in lines[1:])


def test_cli_mms_rest(capsys):
    assert main(["mms", "--reference", "rest", "--points", "10"]) == EXIT_OK
    assert "[PASS] rest" in capsys.readouterr().out


def test_cli_verify_pristine(capsys):
    assert main(["verify"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "[FAIL]" not in out and out.count("[PASS]") == 6
