import json

import numpy as np
import pytest

from popnets.cli import main
from popnets.data import load_dataset
from popnets.engine import load_posterior_json


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = main([
        "simulate", "--out-dir", str(out),
        "-J", "2", "-n", "6", "-P", "3", "--seed", "7",
    ])
    assert code == 0
    return out


class TestSimulate:
    def test_writes_expected_files(self, sim_dir):
        for name in ("dataset.csv", "truth.json", "prior.json"):
            assert (sim_dir / name).exists()
        data = load_dataset(sim_dir / "dataset.csv")
        assert data.num_individuals == 2
        assert data.num_variables == 3

    def test_seed_repeatability(self, tmp_path, capsys):
        dirs = [tmp_path / "a", tmp_path / "b"]
        for d in dirs:
            code, out, _ = _run(
                capsys, "simulate", "--out-dir", str(d),
                "-J", "2", "-n", "5", "-P", "3", "--seed", "3",
            )
            assert code == 0
            assert "latent edges" in out
        assert (dirs[0] / "dataset.csv").read_bytes() == (dirs[1] / "dataset.csv").read_bytes()
        assert (dirs[0] / "truth.json").read_bytes() == (dirs[1] / "truth.json").read_bytes()

    def test_contaminate_flag_changes_data(self, tmp_path, capsys):
        plain, dirty = tmp_path / "plain", tmp_path / "dirty"
        for d, extra in ((plain, []), (dirty, ["--contaminate"])):
            code, _, _ = _run(
                capsys, "simulate", "--out-dir", str(d),
                "-J", "2", "-n", "5", "-P", "3", "--seed", "3", *extra,
            )
            assert code == 0
        assert (plain / "dataset.csv").read_bytes() != (dirty / "dataset.csv").read_bytes()
        # ground truth is untouched by contamination
        assert (plain / "truth.json").read_bytes() == (dirty / "truth.json").read_bytes()

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        config = tmp_path / "regime.cfg"
        config.write_text("J = 4\nP = 3\nn = 5\nseed = 9\n# comment\n")
        out = tmp_path / "out"
        code, _, _ = _run(
            capsys, "simulate", "--config", str(config),
            "--out-dir", str(out), "-J", "2",
        )
        assert code == 0
        data = load_dataset(out / "dataset.csv")
        assert data.num_individuals == 2  # flag wins over config
        assert data.num_variables == 3

    def test_unknown_config_key(self, tmp_path, capsys):
        config = tmp_path / "bad.cfg"
        config.write_text("bogus = 1\n")
        code, _, err = _run(
            capsys, "simulate", "--config", str(config), "--out-dir", str(tmp_path / "x"),
        )
        assert code == 1
        assert "bogus" in err


class TestInfer:
    def test_jni_outputs(self, sim_dir, tmp_path, capsys):
        out = tmp_path / "inf"
        code, stdout, stderr = _run(
            capsys, "infer",
            "--data", str(sim_dir / "dataset.csv"),
            "--prior", str(sim_dir / "prior.json"),
            "--out-dir", str(out),
            "--estimator", "jni,correlation",
            "--eta", "1", "--lam", "4", "--c", "2",
        )
        assert code == 0
        assert "[timing]" in stderr
        for kind in ("jni", "correlation"):
            posterior, meta = load_posterior_json(out / f"posterior_{kind}.json")
            assert meta["estimator"] == kind
            assert posterior.latent.shape == (3, 3)
            assert (out / f"posterior_{kind}.csv").exists()

    def test_infinite_lambda_matches_ani(self, sim_dir, tmp_path, capsys):
        out_inf = tmp_path / "inf_flag"
        out_ani = tmp_path / "ani"
        for out, est, lam in ((out_inf, "jni", "inf"), (out_ani, "ani", "4")):
            code, _, _ = _run(
                capsys, "infer",
                "--data", str(sim_dir / "dataset.csv"),
                "--prior", str(sim_dir / "prior.json"),
                "--out-dir", str(out),
                "--estimator", est, "--eta", "1", "--lam", lam, "--c", "2",
            )
            assert code == 0
        a, _ = load_posterior_json(out_inf / "posterior_jni.json")
        b, _ = load_posterior_json(out_ani / "posterior_ani.json")
        assert np.array_equal(a.latent, b.latent)
        assert np.array_equal(a.individual, b.individual)

    def test_worker_count_does_not_change_output(self, sim_dir, tmp_path, capsys):
        outs = []
        for workers in ("1", "2"):
            out = tmp_path / f"w{workers}"
            code, _, _ = _run(
                capsys, "infer",
                "--data", str(sim_dir / "dataset.csv"),
                "--prior", str(sim_dir / "prior.json"),
                "--out-dir", str(out),
                "--estimator", "jni", "--c", "2", "--workers", workers,
            )
            assert code == 0
            outs.append((out / "posterior_jni.json").read_bytes())
        assert outs[0] == outs[1]

    def test_env_var_sets_default_workers(self, sim_dir, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("POPNETS_WORKERS", "2")
        out_env = tmp_path / "env"
        code, _, _ = _run(
            capsys, "infer",
            "--data", str(sim_dir / "dataset.csv"),
            "--prior", str(sim_dir / "prior.json"),
            "--out-dir", str(out_env),
            "--estimator", "jni", "--c", "2",
        )
        assert code == 0
        monkeypatch.delenv("POPNETS_WORKERS")
        out_one = tmp_path / "one"
        code, _, _ = _run(
            capsys, "infer",
            "--data", str(sim_dir / "dataset.csv"),
            "--prior", str(sim_dir / "prior.json"),
            "--out-dir", str(out_one),
            "--estimator", "jni", "--c", "2", "--workers", "1",
        )
        assert code == 0
        assert (out_env / "posterior_jni.json").read_bytes() == (
            out_one / "posterior_jni.json"
        ).read_bytes()

    def test_missing_data_file_is_data_error(self, sim_dir, tmp_path, capsys):
        code, _, err = _run(
            capsys, "infer",
            "--data", str(tmp_path / "nope.csv"),
            "--prior", str(sim_dir / "prior.json"),
            "--out-dir", str(tmp_path / "x"),
        )
        assert code == 2

    def test_malformed_csv_is_data_error(self, sim_dir, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("individual,course,time,intervention_target,v1\na,1,1,0\n")
        code, _, err = _run(
            capsys, "infer",
            "--data", str(bad),
            "--prior", str(sim_dir / "prior.json"),
            "--out-dir", str(tmp_path / "x"),
        )
        assert code == 2
        assert "row 2" in err


class TestEvaluate:
    def test_perfect_posterior_scores_one(self, sim_dir, tmp_path, capsys):
        truth = json.loads((sim_dir / "truth.json").read_text())
        # hand-build a posterior that is the exact indicator of the truth
        import popnets.engine as engine
        from popnets.data import load_ground_truth
        from popnets.engine import make_posterior

        gt = load_ground_truth(sim_dir / "truth.json")
        latent = gt.latent.adjacency().astype(float)
        individual = np.stack([g.adjacency().astype(float) for g in gt.individuals])
        posterior = make_posterior(latent, individual)
        path = tmp_path / "perfect.json"
        engine.save_posterior_json(posterior, path, estimator="jni")
        out_csv = tmp_path / "scores.csv"
        code, stdout, _ = _run(
            capsys, "evaluate",
            "--posterior", str(path), "--truth", str(sim_dir / "truth.json"),
            "--out", str(out_csv),
        )
        assert code == 0
        assert "latent" in stdout and "1.0000" in stdout
        lines = out_csv.read_text().strip().splitlines()
        assert lines[0] == "estimator,task,aur"
        latent_row = [ln for ln in lines if ",latent," in ln][0]
        assert latent_row.endswith(",1")


class TestSweepCommand:
    def test_tiny_sweep_files(self, tmp_path, capsys):
        out = tmp_path / "sweep"
        code, stdout, _ = _run(
            capsys, "sweep", "--out-dir", str(out),
            "-J", "2", "-n", "6", "-P", "3", "--c", "2",
            "--estimators", "jni,prior", "--replicates", "2", "--master-seed", "5",
        )
        assert code == 0
        assert (out / "ledger.csv").exists()
        assert (out / "summary.csv").exists()
        assert "jni" in stdout

    def test_grid_mode(self, tmp_path, capsys):
        out = tmp_path / "grid"
        code, _, _ = _run(
            capsys, "sweep", "--out-dir", str(out), "--grid",
            "-J", "2", "-n", "6", "-P", "3", "--c", "2",
            "--replicates", "1", "--master-seed", "2",
            "--eta-grid", "0,1", "--lambda-grid", "1,4",
        )
        assert code == 0
        surface = (out / "sensitivity.dat").read_text()
        assert surface.startswith("# eta lambda mean_aur")


class TestElicit:
    def test_lambda_four(self, capsys):
        code, stdout, _ = _run(capsys, "elicit", "--lam", "4", "--p", "10")
        assert code == 0
        obj = json.loads(stdout)
        assert obj["h_lambda"] == pytest.approx(0.98201, abs=1e-5)
        assert obj["lambda"] == 4
        assert obj["expected_shd_individual"] == pytest.approx(
            100 * (1 - obj["h_lambda"]), abs=1e-9
        )

    def test_two_step(self, capsys):
        code, stdout, _ = _run(capsys, "elicit", "--s1", "0.82", "--s2", "0.74")
        assert code == 0
        obj = json.loads(stdout)
        assert obj["h_lambda"] == pytest.approx(0.9, abs=1e-10)
        assert obj["h_eta"] == pytest.approx(0.8, abs=1e-10)

    def test_missing_inputs_is_usage_error(self, capsys):
        code, _, err = _run(capsys, "elicit")
        assert code == 1

    def test_s1_without_s2_is_usage_error(self, capsys):
        code, _, _ = _run(capsys, "elicit", "--s1", "0.8")
        assert code == 1


class TestExitCodes:
    def test_unknown_command_is_usage_error(self, capsys):
        code, _, _ = _run(capsys, "frobnicate")
        assert code == 1

    def test_unknown_flag_is_usage_error(self, capsys):
        code, _, _ = _run(capsys, "simulate", "--no-such-flag")
        assert code == 1
