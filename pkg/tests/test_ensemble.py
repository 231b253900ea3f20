import filecmp
import json
import os
import shutil

import numpy as np
import pytest

import vscmash as vm
from vscmash.config import RunConfig
from vscmash.ensemble import NumericalFailureBudgetExceeded
from vscmash.units import FS_TO_AU


def tiny_config(tmp_path, n_traj=32, method="mash", cavity="quantum",
                t_max_fs=400.0, seed=101, **kw):
    params = vm.derive_params({"n_traj": n_traj, "seed": seed, "dt": 2.5})
    return RunConfig(params=params, method=method, cavity_mode=cavity,
                     plateau_window=(100.0 * FS_TO_AU, 0.95 * t_max_fs * FS_TO_AU),
                     t_max=t_max_fs * FS_TO_AU,
                     output_dir=str(tmp_path), **kw)


def test_single_trajectory_degenerate_ensemble(tmp_path):
    cfg = tiny_config(tmp_path, n_traj=1)
    res = vm.run_ensemble(cfg, workers=1, estimate_rate=False)
    single = vm.run_trajectory(
        vm.build_energy_model(cfg.params, cfg.cavity_mode), "mash",
        cfg.params.seed, 0, cfg.params.dt,
        int(round(cfg.t_max / cfg.params.dt)),
        int(round(cfg.stride / cfg.params.dt)))
    assert np.array_equal(res.series.P_R, single.pops)
    assert np.all(res.series.sem == 0.0)


def test_worker_count_determinism(tmp_path):
    csvs = []
    for w in (1, 8):
        out = tmp_path / f"w{w}"
        cfg = tiny_config(out, n_traj=40)
        vm.run_ensemble(cfg, workers=w, estimate_rate=False)
        csvs.append(out / "populations_mash_quantum_wc1190_eta0.0025.csv")
    assert filecmp.cmp(csvs[0], csvs[1], shallow=False)


def test_resume_after_interruption(tmp_path):
    """Dropping completed blocks from the checkpoint and resuming
    reproduces the uninterrupted artifacts byte for byte."""
    out_a = tmp_path / "full"
    cfg_a = tiny_config(out_a, n_traj=600)      # 3 blocks of 256
    vm.run_ensemble(cfg_a, workers=2, estimate_rate=False)
    csv_a = (out_a / "populations_mash_quantum_wc1190_eta0.0025.csv").read_bytes()

    out_b = tmp_path / "interrupted"
    cfg_b = tiny_config(out_b, n_traj=600)
    vm.run_ensemble(cfg_b, workers=2, estimate_rate=False)
    ck = out_b / "checkpoint_mash_quantum_wc1190_eta0.0025.npz"
    data = dict(np.load(ck, allow_pickle=False))
    data["done"][1:] = False                    # forget all but block 0
    np.savez(ck, **data)
    vm.run_ensemble(cfg_b, workers=1, estimate_rate=False)
    csv_b = (out_b / "populations_mash_quantum_wc1190_eta0.0025.csv").read_bytes()
    assert csv_a == csv_b


def test_checkpoint_invalidated_on_config_change(tmp_path):
    cfg = tiny_config(tmp_path, n_traj=32)
    vm.run_ensemble(cfg, workers=1, estimate_rate=False)
    import dataclasses
    cfg2 = dataclasses.replace(
        cfg, params=dataclasses.replace(cfg.params, seed=999))
    res = vm.run_ensemble(cfg2, workers=1, estimate_rate=False)
    assert res.n_failed == 0                    # ran fresh, no stale mixing


def test_failure_budget(tmp_path):
    """An unstable timestep trips the per-step norm guard and the budget."""
    params = vm.derive_params({"n_traj": 16, "seed": 5, "dt": 400.0})
    cfg = RunConfig(params=params, method="ehrenfest", cavity_mode="quantum",
                    plateau_window=(400.0, 1500.0), t_max=4000.0,
                    output_dir=str(tmp_path))
    with pytest.raises(NumericalFailureBudgetExceeded):
        vm.run_ensemble(cfg, workers=1, estimate_rate=False, checkpoint=False)


def test_manifest_lists_every_output(tmp_path):
    import hashlib
    cfg = tiny_config(tmp_path, n_traj=24)
    res = vm.run_ensemble(cfg, workers=1)
    from vscmash.ensemble import write_manifest
    write_manifest(cfg.output_dir, cfg, res.files)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {os.path.basename(f) for f in res.files}
    for name, entry in manifest["outputs"].items():
        blob = (tmp_path / name).read_bytes()
        assert hashlib.sha256(blob).hexdigest() == entry["sha256"]
        assert len(blob) == entry["bytes"]
    assert manifest["config"]["n_traj"] == 24


def test_sweep_empty_rejected(tmp_path):
    from vscmash.units import ConfigurationError
    cfg = tiny_config(tmp_path)
    object.__setattr__(cfg, "sweep", ())
    with pytest.raises(ConfigurationError):
        vm.run_sweep(cfg, workers=1)


def test_sweep_two_points(tmp_path):
    params = vm.derive_params({"n_traj": 24, "seed": 7, "dt": 2.5})
    w0 = params.omega_c
    cfg = RunConfig(params=params, method="mash", cavity_mode="quantum",
                    sweep=((w0, 2.5e-3),),
                    plateau_window=(100.0 * FS_TO_AU, 380.0 * FS_TO_AU),
                    t_max=400.0 * FS_TO_AU, output_dir=str(tmp_path))
    profile = vm.run_sweep(cfg, workers=2)
    assert len(profile.rows) == 1
    assert np.isfinite(profile.rows[0][2])
    assert (tmp_path / "rate_profile.csv").exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert "rate_profile.csv" in manifest["outputs"]
    # reference + sweep point populations present
    names = list(manifest["outputs"])
    assert any("eta0" in n and n.startswith("populations") for n in names)


# ---------------------------------------------------------------- #
#  CLI
# ---------------------------------------------------------------- #

def test_cli_model_dumps(tmp_path):
    from vscmash.cli import main
    rc = main(["model", "--out", str(tmp_path), "--dump-model",
               "--dump-spectrum", "2", "--dump-bath", "--quiet"])
    assert rc == 0
    summary = json.loads((tmp_path / "model_summary.json").read_text())
    assert abs(summary["omega_0_cm1"] - 1190.0) < 5.0
    spec = (tmp_path / "spectrum_Np2.csv").read_text().splitlines()
    assert spec[0] == "index,energy_cm1,method"
    assert any(line.endswith("bare") for line in spec[1:])
    assert any(line.endswith("polaron") for line in spec[1:])
    assert (tmp_path / "bath_solvent.csv").exists()
    assert (tmp_path / "bath_cavity.csv").exists()


def test_cli_config_error_exit_code(tmp_path):
    from vscmash.cli import main
    assert main(["run", "--set", "omega_b=-3", "--out", str(tmp_path)]) == 2
    assert main(["run", "--set", "garbage", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["model", "--config", str(bad)]) == 2


def test_cli_run_and_trace(tmp_path):
    from vscmash.cli import main
    rc = main(["run", "--out", str(tmp_path / "r"), "--ntraj", "8",
               "--seed", "3", "--method", "mash", "--cavity", "quantum",
               "--set", "t_max=400", "--set", "plateau_window=100 380",
               "--quiet"])
    assert rc == 0
    outs = os.listdir(tmp_path / "r")
    assert any(f.startswith("populations_") for f in outs)
    assert any(f.startswith("kt_") for f in outs)
    assert "manifest.json" in outs

    rc = main(["trace", "--out", str(tmp_path / "t"), "--traj", "1",
               "--set", "t_max=200", "--set", "plateau_window=50 190",
               "--quiet"])
    assert rc == 0
    trace_file = tmp_path / "t" / "trace_1.csv"
    header = trace_file.read_text().splitlines()[0]
    assert header.startswith("t_fs,active,n_photon,d_an,E0_cm1")


def test_cli_numerical_exit_code(tmp_path):
    from vscmash.cli import main
    rc = main(["run", "--out", str(tmp_path), "--ntraj", "16",
               "--method", "ehrenfest", "--set", "dt=400",
               "--set", "t_max=400", "--set", "plateau_window=100 380",
               "--quiet"])
    assert rc == 3
