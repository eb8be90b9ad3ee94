import hashlib
import json
import os

import numpy as np
import pytest
import yaml

from adhesim.cli import main
from adhesim.snapshots import atomic_write, read_snapshot, write_snapshot


def small_config(tmp_path, **overrides):
    cfg = {
        "geometry": {"nx": 4, "ny": 4},
        "material": {"latent": {"l0": 0.3}},
        "regularization": {"eps": 1e-3, "mu": 1e-2},
        "sources": {"h": {"profile": 0.1, "time": {"cutoff": {"t0": 0.1}}}},
        "initial": {"theta": 1.0, "theta_s": 0.9, "chi": 0.7},
        "schedule": {"t_end": 0.2, "dt0": 5e-3, "dt_max": 2e-2, "snapshot_every": 5},
        "diagnostics": {"stop_at_equilibrium": False},
        "output": {"dir": str(tmp_path / "out")},
    }
    cfg.update(overrides)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path, cfg


def hash_outputs(outdir):
    digest = hashlib.sha256()
    for name in sorted(os.listdir(outdir)):
        if name.startswith("snapshot") or name == "ledger.csv":
            digest.update(name.encode())
            with open(os.path.join(outdir, name), "rb") as fh:
                digest.update(fh.read())
    return digest.hexdigest()


def test_run_command_happy_path(tmp_path):
    cfg_path, cfg = small_config(tmp_path)
    assert main(["run", "--config", str(cfg_path)]) == 0
    outdir = cfg["output"]["dir"]
    summary = json.loads(open(os.path.join(outdir, "summary.json")).read())
    for key in (
        "run_id",
        "params",
        "equilibrium",
        "theta_bar_estimate",
        "final_norms",
        "stationary_residual",
        "wall_time_s",
    ):
        assert key in summary
    assert summary["params"] == {"eps": 1e-3, "mu": 1e-2}
    assert os.path.exists(os.path.join(outdir, "ledger.csv"))
    assert os.path.exists(os.path.join(outdir, "config_normalized.yaml"))
    for fig in ("energy.png", "dissipation.png", "indicators.png", "contact_profiles.png"):
        assert os.path.exists(os.path.join(outdir, fig))
    snaps = [n for n in os.listdir(outdir) if n.startswith("snapshot_")]
    assert len(snaps) >= 2  # initial + final at least
    # no temporary files left behind
    assert not [n for n in os.listdir(outdir) if n.startswith(".tmp-")]


def test_run_command_rejects_bad_config(tmp_path, capsys):
    cfg_path, _ = small_config(tmp_path, regularization={"eps": 1e-3, "mu": -2.0})
    assert main(["run", "--config", str(cfg_path)]) == 1
    err = capsys.readouterr().err
    assert "regularization.mu" in err


def test_run_command_missing_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.yaml")]) == 1


def test_run_outputs_deterministic(tmp_path):
    cfg_path, _ = small_config(tmp_path)
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["run", "--config", str(cfg_path), "--out", out1]) == 0
    assert main(["run", "--config", str(cfg_path), "--out", out2]) == 0
    assert hash_outputs(out1) == hash_outputs(out2)


def test_snapshot_every_flag(tmp_path):
    cfg_path, _ = small_config(tmp_path)
    out = str(tmp_path / "snaps")
    assert main(["run", "--config", str(cfg_path), "--out", out, "--snapshot-every", "1"]) == 0
    snaps = [n for n in os.listdir(out) if n.startswith("snapshot_")]
    assert len(snaps) > 10


def test_single_element_sweep_matches_run(tmp_path):
    cfg_path, cfg = small_config(tmp_path)
    run_out = str(tmp_path / "single")
    sweep_out = str(tmp_path / "sweep")
    assert main(["run", "--config", str(cfg_path), "--out", run_out]) == 0
    assert main(
        ["sweep", "--config", str(cfg_path), "--out", sweep_out, "--eps", "1e-3", "--mu", "1e-2"]
    ) == 0
    rundirs = [d for d in os.listdir(sweep_out) if d.startswith("run_")]
    assert len(rundirs) == 1
    ledger_a = open(os.path.join(run_out, "ledger.csv")).read()
    ledger_b = open(os.path.join(sweep_out, rundirs[0], "ledger.csv")).read()
    assert ledger_a == ledger_b


def test_sweep_chain_table(tmp_path):
    cfg_path, _ = small_config(tmp_path)
    out = str(tmp_path / "sw")
    code = main(
        ["sweep", "--config", str(cfg_path), "--out", out, "--eps", "1e-2", "1e-3", "--mu", "1e-2"]
    )
    assert code == 0
    table = open(os.path.join(out, "sweep_table.csv")).read().splitlines()
    assert table[0] == "chain,param,distance"
    assert len(table) == 2
    summary = json.loads(open(os.path.join(out, "sweep_summary.json")).read())
    assert len(summary["runs"]) == 2
    assert os.path.exists(os.path.join(out, "sweep_distances.png"))


def test_stationary_command(tmp_path):
    cfg_path, _ = small_config(tmp_path)
    out = str(tmp_path / "stat")
    assert main(
        ["stationary", "--config", str(cfg_path), "--out", out, "--theta-bar", "1.0"]
    ) == 0
    report = json.loads(open(os.path.join(out, "stationary_report.json")).read())
    assert report["residual"] < 1e-10
    text = open(os.path.join(out, "stationary.txt")).read()
    assert text.splitlines()[0] == "# time inf"


def test_stationary_requires_theta_bar(tmp_path):
    cfg_path, _ = small_config(tmp_path)
    assert main(["stationary", "--config", str(cfg_path)]) == 1


def test_stationary_from_snapshot(tmp_path):
    cfg_path, cfg = small_config(tmp_path)
    run_out = str(tmp_path / "traj")
    assert main(["run", "--config", str(cfg_path), "--out", run_out]) == 0
    snaps = sorted(n for n in os.listdir(run_out) if n.startswith("snapshot_"))
    out = str(tmp_path / "stat2")
    assert main(
        [
            "stationary",
            "--config",
            str(cfg_path),
            "--out",
            out,
            "--from-snapshot",
            os.path.join(run_out, snaps[-1]),
        ]
    ) == 0
    report = json.loads(open(os.path.join(out, "stationary_report.json")).read())
    assert report["theta_bar"] > 0


def test_verify_unknown_suite():
    assert main(["verify", "bogus"]) == 1


def test_verify_proximal_suite(capsys):
    assert main(["verify", "proximal"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] criterion  1" in out


def test_atomic_write_cleans_up_on_failure(tmp_path, monkeypatch):
    target = tmp_path / "artifact.txt"
    atomic_write(str(target), "hello")
    assert target.read_text() == "hello"

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        atomic_write(str(target), "world")
    assert target.read_text() == "hello"
    assert not [n for n in os.listdir(tmp_path) if n.startswith(".tmp-")]


def test_snapshot_roundtrip(tmp_path):
    from adhesim.assembly import RegularizationParams, zero_state
    from adhesim.mesh import build_rect_mesh, build_spaces, extract_surface

    m = build_rect_mesh(3, 3)
    spc = build_spaces(m, extract_surface(m))
    rng = np.random.default_rng(4)
    st = zero_state(spc)
    st.theta = rng.uniform(0.5, 1.5, spc.n_scalar)
    st.theta_s = rng.uniform(0.5, 1.5, spc.n_surface)
    st.u = spc.apply_constraints(rng.normal(0, 0.1, 2 * spc.n_scalar))
    st.chi = rng.uniform(0, 1, spc.n_surface)
    rp = RegularizationParams(eps=1e-3, mu=1e-2)
    path = str(tmp_path / "snap.txt")
    write_snapshot(path, st, 1.25, 0.01, rp, spc)
    data = read_snapshot(path)
    assert data["time"] == 1.25
    assert data["mu"] == 1e-2
    assert np.array_equal(data["theta"], st.theta)
    assert np.array_equal(data["u"], st.u)
    assert np.array_equal(data["chi"], st.chi)


def test_sweep_parallel_jobs(tmp_path):
    cfg_path, _ = small_config(tmp_path)
    out = str(tmp_path / "par")
    code = main(
        [
            "sweep", "--config", str(cfg_path), "--out", out,
            "--eps", "1e-2", "1e-3", "--mu", "1e-2", "--jobs", "2",
        ]
    )
    assert code == 0
    rundirs = [d for d in os.listdir(out) if d.startswith("run_")]
    assert len(rundirs) == 2
