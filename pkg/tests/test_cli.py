"""Command-line runner: exit codes, artifacts, determinism."""

import json
import os

import pytest

from finegrid.cli import main

FAST_PARTITION = """\
[partition]
dimension = 1
l_half = 2.0
h_coarse = 0.25
eta_factor = 8
"""


def _cfg(tmp_path, body, name="run.cfg"):
    p = tmp_path / name
    p.write_text(body)
    return str(p)


def test_verify_default_passes(tmp_path):
    cfg = _cfg(tmp_path, FAST_PARTITION + "\n[derivative]\nprobes = 20\n")
    code = main(["verify", "--config", cfg, "--out", str(tmp_path / "v")])
    assert code == 0
    rep = json.loads((tmp_path / "v" / "verify.json").read_text())
    assert rep["all_pass"]
    assert (tmp_path / "v" / "manifest.json").exists()


def test_unknown_key_is_config_error(tmp_path):
    cfg = _cfg(tmp_path, FAST_PARTITION + "typo_key = 3\n")
    code = main(["verify", "--config", cfg, "--out", str(tmp_path / "v")])
    assert code == 2


def test_unknown_section_is_config_error(tmp_path):
    cfg = _cfg(tmp_path, FAST_PARTITION + "[nosuch]\nx = 1\n")
    assert main(["verify", "--config", cfg]) == 2


def test_odd_fine_count_rejected(tmp_path):
    cfg = _cfg(
        tmp_path,
        "[partition]\ndimension = 1\nl_half = 2.0\nh_coarse = 0.25\n"
        "eta_factor = 7\n",
    )
    code = main(["verify", "--config", cfg, "--out", str(tmp_path / "v")])
    assert code in (1, 2)


def test_solve_poisson_artifacts(tmp_path):
    cfg = _cfg(
        tmp_path,
        FAST_PARTITION
        + "\n[derivative]\nprobes = 10\n\n[problem]\nkind = poisson\n"
        "domain_lo = 0.0\ndomain_hi = 1.0\n",
    )
    out = tmp_path / "poisson"
    code = main(["solve", "--config", cfg, "--out", str(out)])
    assert code == 0
    assert (out / "solution.csv").exists()
    assert (out / "solution.png").exists()
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["partition"]["n_points"] == 128
    assert doc["extra"]["sup_error"] < 0.05


def test_unknown_problem_kind(tmp_path):
    cfg = _cfg(
        tmp_path,
        FAST_PARTITION + "\n[problem]\nkind = frobnicate\n",
    )
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "x")]) == 2


def test_evolve_burgers_deterministic(tmp_path):
    cfg = _cfg(
        tmp_path,
        FAST_PARTITION
        + "\n[derivative]\nprobes = 10\n\n[problem]\nkind = burgers\n"
        "form = conservative\nt_end = 0.05\ndt = 1e-3\nrecord_every = 10\n",
    )
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        code = main(
            ["evolve", "--config", cfg, "--out", str(out), "--seed", "5", "--no-plot"]
        )
        assert code == 0
        outs.append((out / "diagnostics.csv").read_bytes())
    assert outs[0] == outs[1]


def test_evolve_wave_energy_column(tmp_path):
    cfg = _cfg(
        tmp_path,
        FAST_PARTITION
        + "\n[derivative]\nprobes = 10\n\n[problem]\nkind = wave\npower = 4.0\n"
        "t_end = 0.05\ndt = 1e-3\nrecord_every = 10\n",
    )
    out = tmp_path / "wave"
    assert main(["evolve", "--config", cfg, "--out", str(out), "--no-plot"]) == 0
    lines = (out / "diagnostics.csv").read_text().splitlines()
    assert lines[0].split(",")[4] == "energy"
    first = float(lines[1].split(",")[4])
    last = float(lines[-1].split(",")[4])
    assert abs(last - first) <= 1e-8 * abs(first)


def test_minimize_lavrentiev_artifacts(tmp_path):
    cfg = _cfg(
        tmp_path,
        "[partition]\ndimension = 1\nl_half = 2.0\nh_coarse = 0.125\n"
        "eta_factor = 8\n\n[derivative]\nprobes = 10\n\n"
        "[problem]\nkind = lavrentiev\ndomain_lo = 0.0\ndomain_hi = 1.0\n"
        "max_iter = 800\n",
    )
    out = tmp_path / "lav"
    assert main(["minimize", "--config", cfg, "--out", str(out), "--no-plot"]) == 0
    doc = json.loads((out / "minima.json").read_text())
    assert doc["J_zero"] == 1.0
    assert doc["min_full"] <= doc["min_regular"] + 1e-12
    assert doc["min_regular"] < 0.2


def test_spectrum_artifacts(tmp_path):
    cfg = _cfg(
        tmp_path,
        "[partition]\ndimension = 1\nl_half = 4.0\nh_coarse = 0.25\n"
        "eta_factor = 20\n\n[derivative]\nprobes = 10\n\n"
        "[problem]\nkind = interval\ndomain_lo = 0.0\ndomain_hi = 3.14159265358979\n"
        "count = 5\n",
    )
    out = tmp_path / "spec"
    assert main(["spectrum", "--config", cfg, "--out", str(out), "--no-plot"]) == 0
    lines = (out / "spectrum.csv").read_text().splitlines()
    vals = [float(l.split(",")[1]) for l in lines[1:]]
    for n, v in enumerate(vals, start=1):
        assert abs(v / n**2 - 1) < 0.01


def test_export_operator(tmp_path):
    cfg = _cfg(tmp_path, FAST_PARTITION + "\n[derivative]\nprobes = 10\n")
    out = tmp_path / "op"
    assert main(["export-operator", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "operator_axis0.csv").exists()
    cert = json.loads((out / "certification_axis0.json").read_text())
    assert cert["sigma_min"] > 0


def test_refine_levels(tmp_path):
    cfg = _cfg(
        tmp_path,
        FAST_PARTITION
        + "\n[derivative]\nprobes = 10\n\n[problem]\nkind = poisson\n"
        "domain_lo = 0.0\ndomain_hi = 1.0\n",
    )
    out = tmp_path / "levels"
    assert main(
        ["solve", "--config", cfg, "--out", str(out), "--refine", "2", "--no-plot"]
    ) == 0
    e0 = json.loads((out / "level0" / "manifest.json").read_text())["extra"]["sup_error"]
    e1 = json.loads((out / "level1" / "manifest.json").read_text())["extra"]["sup_error"]
    assert e1 < e0
