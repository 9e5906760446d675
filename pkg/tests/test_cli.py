import json
import math

import numpy as np
import pytest

from striplab import cli
from striplab.errors import ConfigInvalid, SchemaMismatch


FLAT_SPECTRUM = """
[geometry]
a = 1.5707963267948966
L = 20.0
n1 = 120
n2 = 24

[curvature]
kind = zero

[experiment]
kind = spectrum
k = 3

[output]
dir = {out}
"""

RULED_NU = """
[geometry]
a = 0.5
L = 10.0
n1 = 80
n2 = 24

[curvature]
kind = ruled
theta_dot_max = 0.35
support_radius = 6.0

[experiment]
kind = nu-sweep
s_lattice = 0.0, 2.0
frame_half_width = 13.0
frame_cells = 260

[output]
dir = {out}
"""

FLAT_EVOLVE = """
[geometry]
a = 1.5707963267948966
L = 20.0
n1 = 100
n2 = 16

[curvature]
kind = zero

[experiment]
kind = evolve
alpha = 1.0
t_end = 12.0
checkpoint_step = 0.5
dt = 0.02
fit_window = 2.0, 12.0

[output]
dir = {out}
"""

FLAT_MC = """
[geometry]
a = 1.5707963267948966
L = 20.0
n1 = 40
n2 = 12

[curvature]
kind = zero

[experiment]
kind = mc
x0 = 0.0, 0.0
t_lattice = 0.5, 1.0
dt = 0.002
n_paths = 5000
seed = 7

[output]
dir = {out}
"""


def _write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text.format(out=tmp_path / "out"))
    return p


def test_load_config_and_validation(tmp_path):
    p = _write(tmp_path, FLAT_SPECTRUM)
    cfg = cli.load_config(p)
    assert cfg.kind == "spectrum"
    assert cfg.a == pytest.approx(math.pi / 2)
    with pytest.raises(ConfigInvalid):
        cli.load_config(tmp_path / "missing.ini")
    bad = tmp_path / "bad.ini"
    bad.write_text("[geometry]\na = 1\n")
    with pytest.raises(ConfigInvalid):
        cli.load_config(bad)


def test_config_rejects_wide_strip(tmp_path):
    text = FLAT_SPECTRUM.replace("kind = zero", "kind = gaussian-bump\namplitude = 0.9\nwidth = 1.0\nsupport_radius = 3.0")
    p = _write(tmp_path, text)
    with pytest.raises(ConfigInvalid):
        cli.load_config(p)


def test_spectrum_run_outputs_and_reproducibility(tmp_path):
    p = _write(tmp_path, FLAT_SPECTRUM)
    cfg = cli.load_config(p)
    manifest = cli.run(cfg)
    out = tmp_path / "out" / "spectrum"
    csv = out / "spectrum.csv"
    assert csv.exists()
    header = csv.read_text().splitlines()[0]
    assert header.split(",")[0].startswith("parameter")
    first = csv.read_bytes()
    man1 = (out / "manifest.txt").read_text()
    assert "config_hash" in man1 and "tool_version" in man1
    # byte-identical rerun
    cli.run(cli.load_config(p))
    assert csv.read_bytes() == first
    rows = csv.read_text().splitlines()[1:]
    lam0 = float(rows[0].split(",")[2])
    assert lam0 == pytest.approx(1.0, abs=2e-2)
    assert manifest.outputs == ["spectrum/spectrum.csv"]


def test_nu_sweep_run_and_plot(tmp_path):
    p = _write(tmp_path, RULED_NU)
    cli.run(cli.load_config(p))
    csv = tmp_path / "out" / "nu-sweep" / "nu_sweep.csv"
    rows = csv.read_text().splitlines()
    assert rows[0].split(",")[0].startswith("s")
    vals = [float(r.split(",")[2]) for r in rows[1:]]
    assert vals[1] > vals[0] > 0.25
    svg = cli.emit_plot(csv, "nu-vs-s")
    assert svg.exists() and svg.read_text().startswith("<svg")


def test_evolve_run_fit_record_and_plot(tmp_path):
    p = _write(tmp_path, FLAT_EVOLVE)
    cli.run(cli.load_config(p))
    out = tmp_path / "out" / "evolve"
    traj = out / "trajectory.csv"
    fitjson = out / "decay_fit.json"
    assert traj.exists() and fitjson.exists()
    record = json.loads(fitjson.read_text())
    assert set(record) >= {"lambda_hat", "gamma_hat", "stderr_gamma", "window_lo"}
    assert record["gamma_hat"] == pytest.approx(0.25, abs=0.08)
    svg = cli.emit_plot(traj, "decay-loglog")
    assert svg.exists()
    # headers carry units
    assert "[time]" in traj.read_text().splitlines()[0]


def test_mc_run(tmp_path):
    p = _write(tmp_path, FLAT_MC)
    cli.run(cli.load_config(p))
    csv = tmp_path / "out" / "mc" / "mc.csv"
    rows = csv.read_text().splitlines()
    assert rows[0] == "t[time],alive[1],estimate[1],ci_low[1],ci_high[1]"
    est = [float(r.split(",")[2]) for r in rows[1:]]
    assert est[0] >= est[1] > 0


def test_emit_plot_schema_mismatch(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("a,b\n")
    with pytest.raises(SchemaMismatch):
        cli.emit_plot(empty, "decay-loglog")
    wrong = tmp_path / "wrong.csv"
    wrong.write_text("foo,bar\n1,2\n")
    with pytest.raises(SchemaMismatch):
        cli.emit_plot(wrong, "nu-vs-s")


def test_main_exit_codes(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("not an ini at all [[[")
    assert cli.main(["run", str(bad)]) == 2
    good = _write(tmp_path, FLAT_SPECTRUM)
    assert cli.main(["run", str(good)]) == 0


def test_oracle_subcommand(capsys):
    assert cli.main(["oracle", "p0", "t=1.0", "x=1.0", "y=1.0"]) == 0
    out = capsys.readouterr().out
    assert "p0 = 0.1783179174" in out
    assert cli.main(["oracle", "survival", "t=1.0", "a=1.5707963267948966"]) == 0
    assert cli.main(["oracle", "nonsense"]) == 2


def test_histogram_plot(tmp_path):
    csv = tmp_path / "hist.csv"
    rows = ["bin[len],mass[1]"] + [f"{x},{m}" for x, m in zip(np.linspace(-2, 2, 9), np.linspace(0.01, 0.2, 9))]
    csv.write_text("\n".join(rows) + "\n")
    svg = cli.emit_plot(csv, "histogram")
    assert svg.exists()


def test_report_mode_exit_codes(tmp_path, monkeypatch):
    import striplab.acceptance as acc
    from striplab.acceptance import CriterionResult

    def fake_all(include_slow=True):
        return [
            CriterionResult(1, "stub-pass", True, "ok", 0.0),
            CriterionResult(2, "stub-fail", include_slow, "detail", 0.0),
        ]

    monkeypatch.setattr(acc, "run_all", fake_all)
    good = _write(tmp_path, FLAT_SPECTRUM)
    # include_slow=True -> both pass -> exit 0; report.txt written via config path
    cfg = cli.load_config(good)
    cfg.kind = "report"
    cli.run(cfg)
    report = tmp_path / "out" / "report" / "report.txt"
    assert report.exists()
    assert "stub-pass" in report.read_text()
    # --skip-slow flips the stub to failure -> exit code 4
    assert cli.main(["report", "--skip-slow"]) == 4
    assert cli.main(["report"]) == 0
