import csv
import io
import subprocess
import sys

import pytest

from pnpreg.cli import main
from pnpreg.priors import DenoiserNet, ReGNet, load_checkpoint, save_checkpoint


def run(argv, capsys):
    rc = main(argv)
    out, err = capsys.readouterr()
    return rc, out, err


def test_selfcheck_passes(tmp_path, capsys):
    rc, out, err = run(["selfcheck", "--out", str(tmp_path)], capsys)
    assert rc == 0, err
    lines = [l for l in out.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert lines and all(l.startswith("PASS") for l in lines)
    assert any("adjoint/" in l for l in lines)
    assert any("residual_identity/" in l for l in lines)
    assert any("solver_equivalence/" in l for l in lines)
    rows = list(csv.DictReader(open(tmp_path / "selfcheck.csv")))
    assert len(rows) == len(lines) and {r["status"] for r in rows} == {"PASS"}


@pytest.mark.parametrize("argv", [["selfcheck", "--bogus"], ["fly"], [],
                                  ["restore", "--set", "run.nope=1"],
                                  ["restore", "--set", "noequals"],
                                  ["restore", "--config", "/no/such.ini"],
                                  ["restore", "--seed", "-1"]])
def test_usage_errors_exit_1(argv, capsys):
    rc, out, err = run(argv, capsys)
    assert rc == 1
    assert "ERROR:" in err


def test_unknown_flag_prints_usage(capsys):
    rc, _, err = run(["selfcheck", "--bogus"], capsys)
    assert rc == 1 and "usage:" in err


def test_missing_checkpoint_exit_1(tmp_path, capsys):
    rc, _, err = run(["restore", "--set", "prior.kind=reg", "--set",
                      f"prior.checkpoint={tmp_path / 'none.pnpr'}", "--set", "solver.mu=0.1",
                      "--set", "solver.sigma=0.1", "--out", str(tmp_path)], capsys)
    assert rc == 1 and err.startswith("ERROR:")


def test_runtime_failure_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[task]\nname = deblur\nkernel_size = 5\n[solver]\nmu = 1e3\nsigma = 3\n"
                   "n_iter = 3000\n[data]\ntoy_count = 1\ntoy_size = 16\n")
    with pytest.warns(RuntimeWarning):
        rc, out, err = run(["restore", "--config", str(cfg), "--out", str(tmp_path / "o")],
                           capsys)
    assert rc == 2
    assert "ERROR: toy000:" in err


def test_restore_sr2_published_block(tmp_path, capsys):
    G = ReGNet(1, base_channels=4, scales=2, blocks=1, seed=3)
    ck = tmp_path / "g.pnpr"
    save_checkpoint(str(ck), G)
    cfg = tmp_path / "sr2.ini"
    cfg.write_text(f"""[task]
name = sr2
kernel = bicubic
sigma_n = 0
[solver]
algorithm = pnp_gd
preset = true
[prior]
kind = reg
checkpoint = {ck.name}
[data]
toy_count = 1
toy_size = 16
[run]
figures = false
""")
    rc, out, err = run(["restore", "--config", str(cfg), "--out", str(tmp_path / "o"),
                        "--seed", "3"], capsys)
    assert rc == 0, err
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["index", "name", "psnr_input", "psnr", "iterations", "status"]
    assert rows[1][4] == "1500" and rows[1][5] == "ok"
    echo = (tmp_path / "o" / "config.ini").read_text()
    assert "seed = 3" in echo and "preset = true" in echo


def test_restore_is_reproducible(tmp_path, capsys):
    args = ["restore", "--set", "data.toy_count=2", "--set", "data.toy_size=16",
            "--set", "task.kernel_size=5", "--set", "solver.mu=1", "--set", "solver.sigma=0.2",
            "--set", "solver.n_iter=20", "--set", "task.sigma_n=0.02", "--seed", "9"]
    rc1, out1, _ = run(args + ["--out", str(tmp_path / "a")], capsys)
    rc2, out2, _ = run(args + ["--out", str(tmp_path / "b"), "--jobs", "2"], capsys)
    assert rc1 == rc2 == 0 and out1 == out2
    assert (tmp_path / "a/report.csv").read_bytes() == (tmp_path / "b/report.csv").read_bytes()


def test_train_eval_study_pipeline(tmp_path, capsys):
    common = ["--set", "train.toy_count=3", "--set", "train.toy_size=16",
              "--set", "train.patch_size=8", "--set", "train.batch_size=2",
              "--set", "train.base_channels=4", "--set", "train.blocks=1",
              "--set", "study.heldout_count=2", "--out", str(tmp_path)]
    rc, out, err = run(["pretrain", "--set", "train.pretrain_steps=3"] + common, capsys)
    assert rc == 0, err
    assert out.splitlines()[0] == "checkpoint,steps,final_L_D"
    d = str(tmp_path / "denoiser.pnpr")
    assert load_checkpoint(d).step == 3
    for frozen in ("false", "true"):
        rc, out, err = run(["train-joint", "--set", f"train.denoiser={d}",
                            "--set", "train.steps=2",
                            "--set", f"train.freeze_denoiser={frozen}"] + common, capsys)
        assert rc == 0, err
        assert [r[0] for r in csv.reader(io.StringIO(out))] == ["stage", "before", "after"]
    for tag in ("joint", "frozen"):
        assert (tmp_path / f"reg_{tag}.pnpr").exists()
        assert (tmp_path / f"{tag}_log.csv").exists()
    rc, out, err = run(["eval", "--set", f"train.denoiser={tmp_path / 'denoiser_joint.pnpr'}",
                        "--set", f"train.reg={tmp_path / 'reg_joint.pnpr'}"] + common, capsys)
    assert rc == 0, err
    assert (tmp_path / "eval.csv").read_text().startswith("L_D,L_G,L,jacobian_asymmetry\n")
    study = ["study", "--set", "data.toy_count=1", "--set", "data.toy_size=16",
             "--set", "task.kernel_size=5", "--set", "solver.mu=0.5",
             "--set", "solver.sigma=0.01", "--set", "solver.n_iter=3"]
    for tag in ("joint", "frozen"):
        study += ["--set", f"study.{tag}_denoiser={tmp_path / f'denoiser_{tag}.pnpr'}",
                  "--set", f"study.{tag}_reg={tmp_path / f'reg_{tag}.pnpr'}"]
    rc, out, err = run(study + common, capsys)
    assert rc == 0, err
    assert "mean_psnr_delta_joint_minus_frozen" in out
    rc, out, err = run(["study", "--set", "study.kind=admm_stability",
                        "--set", f"study.original_denoiser={d}",
                        "--set", f"study.updated_denoiser={tmp_path / 'denoiser_joint.pnpr'}",
                        "--set", "solver.s0=0.1", "--set", "solver.sN=0.05",
                        "--set", "solver.n_iter=3", "--set", "data.toy_count=1",
                        "--set", "data.toy_size=16", "--set", "task.kernel_size=5",
                        "--set", "task.sigma_n=0.01"] + common, capsys)
    assert rc == 0, err
    assert out.splitlines()[0] == "denoiser,final_psnr"
    assert (tmp_path / "admm_iterate_mse.csv").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pnpreg", "nope"], capture_output=True,
                          text=True)
    assert proc.returncode == 1 and "ERROR:" in proc.stderr
