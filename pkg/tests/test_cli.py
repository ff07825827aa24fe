import json
import subprocess
import sys

import numpy as np
import pytest

from pshflow.cli import main
from pshflow.estimates import COLUMNS, EstimateReport

SHRINKER = """\
geometry: {{n: 2, N: 4}}
problem: {{chi: {{base: beta, scale: -1}}}}
integrator: {{t_end: {t_end}}}
monitor: {{cadence: 0.1{extra}}}
output: {{dir: {out}}}
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def shrinker_cfg(tmp_path, t_end=0.3, extra="", out="out", name="s.yaml"):
    return write(tmp_path, name, SHRINKER.format(t_end=t_end, extra=extra, out=tmp_path / out))


def test_check_flat_passes(tmp_path, capsys):
    cfg = write(tmp_path, "c.yaml", f"geometry: {{n: 2, N: 8}}\noutput: {{dir: {tmp_path}}}\n")
    assert main(["check", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "suite,check,value,threshold,status"
    assert "FAIL" not in out
    data = json.loads((tmp_path / "check.json").read_text())
    assert data["schema_version"] == 1 and all(c["passed"] for c in data["checks"])


def test_check_tolerance_failure_exits_2(tmp_path, capsys):
    # a rough conformal factor on a coarse grid cannot meet a tiny tolerance
    cfg = write(tmp_path, "c.yaml", "geometry:\n  n: 2\n  N: 4\n"
                "  metric: {recipe: conformal, f: '0.5 cos(x1 + y2)'}\n"
                f"check: {{tolerance: 1.0e-14}}\noutput: {{dir: {tmp_path}}}\n")
    assert main(["check", "--config", cfg]) == 2
    assert "exceeds" in capsys.readouterr().err


def test_non_hermitian_metric_exits_2(tmp_path, capsys):
    cfg = write(tmp_path, "c.yaml", "geometry:\n  n: 2\n  N: 4\n"
                "  metric: {recipe: explicit, matrix: [[1, 1], [0, 1]]}\n")
    assert main(["check", "--config", cfg]) == 2
    assert "not Hermitian" in capsys.readouterr().err


def test_config_errors_exit_4(tmp_path, capsys):
    cfg = write(tmp_path, "c.yaml", "geometry: {n: 2, N: 4}\nintegrator: {t_stop: 1}\n")
    assert main(["run", "--config", cfg]) == 4
    err = capsys.readouterr().err
    assert "line 2" in err and "t_stop" in err
    assert main(["run"]) == 4
    assert main(["report", "--out", str(tmp_path / "nope")]) == 4


def test_run_shrinker_outputs(tmp_path):
    cfg = shrinker_cfg(tmp_path)
    assert main(["run", "--config", cfg]) == 0
    out = tmp_path / "out"
    rep = EstimateReport.read_csv(out / "estimates.csv")
    t = rep.series("t")
    assert np.allclose(t, [0, 0.1, 0.2, 0.3])
    assert np.allclose(rep.series("sup_udot"), 2 * np.abs(np.log(1 - t)), atol=1e-9)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["singular"] is None and summary["samples"] == 4
    assert (out / "latest.pshf").exists()
    assert len(list((out / "checkpoints").glob("state_t*.pshf"))) == 4


def test_run_singular_exit_codes(tmp_path, capsys):
    cfg = shrinker_cfg(tmp_path, t_end=1.5)
    assert main(["run", "--config", cfg]) == 3
    assert "singular" in capsys.readouterr().err.lower()
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert 0.98 < summary["singular"]["t"] <= 1.0
    cfg = shrinker_cfg(tmp_path, t_end=1.5, extra=", expect_singular: true", out="out2", name="e.yaml")
    assert main(["run", "--config", cfg]) == 0


def test_resume_matches_uninterrupted(tmp_path):
    full = shrinker_cfg(tmp_path, t_end=0.4, out="full", name="full.yaml")
    assert main(["run", "--config", full]) == 0
    first = shrinker_cfg(tmp_path, t_end=0.2, out="part", name="part1.yaml")
    assert main(["run", "--config", first]) == 0
    second = shrinker_cfg(tmp_path, t_end=0.4, out="part", name="part2.yaml")
    assert main(["run", "--config", second, "--resume", str(tmp_path / "part" / "latest.pshf")]) == 0
    a = EstimateReport.read_csv(tmp_path / "full" / "estimates.csv").rows
    b = EstimateReport.read_csv(tmp_path / "part" / "estimates.csv").rows
    assert [r["t"] for r in a] == [r["t"] for r in b]
    for ra, rb in zip(a, b):
        for c in COLUMNS:
            if c not in ("step_count", "rejected_count"):
                assert abs(ra[c] - rb[c]) <= 1e-14 * max(1.0, abs(ra[c])), c


def test_csv_byte_identical_across_invocations(tmp_path):
    a = shrinker_cfg(tmp_path, out="a", name="a.yaml")
    b = shrinker_cfg(tmp_path, out="b", name="b.yaml")
    assert main(["run", "--config", a]) == 0
    assert main(["run", "--config", b]) == 0
    assert (tmp_path / "a" / "estimates.csv").read_bytes() == (tmp_path / "b" / "estimates.csv").read_bytes()


def test_resume_from_malformed_checkpoint_exits_4(tmp_path, capsys):
    cfg = shrinker_cfg(tmp_path)
    bad = tmp_path / "bad.pshf"
    bad.write_bytes(b"junk")
    assert main(["run", "--config", cfg, "--resume", str(bad)]) == 4
    assert "truncated" in capsys.readouterr().err


def test_maxtime_and_report(tmp_path, capsys):
    cfg = write(tmp_path, "m.yaml",
                "geometry: {n: 2, N: 4}\nproblem: {chi: {base: beta, scale: -1}}\n"
                f"maxtime: {{t_hi: 1.5, tol: 0.02, run_flow: true}}\noutput: {{dir: {tmp_path / 'm'}}}\n")
    assert main(["maxtime", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "quantity,value"
    data = json.loads((tmp_path / "m" / "maxtime.json").read_text())
    assert data["T_lo"] <= 1.0 <= data["T_hi"] and data["T_hi"] - data["T_lo"] <= 0.02
    assert 0.98 <= data["t_sing"] <= 1.0
    assert (tmp_path / "m" / "certificate_0.pshf").exists()

    run_cfg = shrinker_cfg(tmp_path, out="m", name="r.yaml")
    assert main(["run", "--config", run_cfg]) == 0
    capsys.readouterr()
    assert main(["report", "--out", str(tmp_path / "m")]) == 0
    out = capsys.readouterr().out
    figs = [line.split("\t")[1] for line in out.splitlines() if line.startswith("figure\t")]
    assert sorted(p.rsplit("/", 1)[1] for p in figs) == ["estimates.png", "maxtime.png", "residuals.png"]
    for p in figs:
        with open(p, "rb") as fh:
            assert fh.read(8) == b"\x89PNG\r\n\x1a\n"


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pshflow.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
    cfg = write(tmp_path, "bad.yaml", "geometry: {n: 5, N: 4}\n")
    proc = subprocess.run([sys.executable, "-m", "pshflow.cli", "run", "--config", cfg],
                          capture_output=True, text=True)
    assert proc.returncode == 4
