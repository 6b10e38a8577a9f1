import pytest
import yaml

from lqpartial import ConfigError, scenario_from_dict
from lqpartial.cli import main
from lqpartial.config import load_scenario, override_key


def small_config(**overrides):
    cfg = {
        "model": {
            "F": [[0.0]], "G": [[1.0]], "H": [[1.0]], "sigma": [[1.0]],
            "M": [[1.0]], "N": [[1.0]], "M_T": [[0.0]], "T": 1.0,
        },
        "density": {"kind": "gaussian", "mean": [0.0], "cov": [[1.0]], "mass": 1.0},
        "grid": {"n_steps": 200},
        "policy": {"kind": "optimal"},
        "measure": "reference",
        "mc": {"n_mc": 40, "seed": 11},
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="scenario.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


class TestConfig:
    def test_missing_field_named(self):
        cfg = small_config()
        del cfg["model"]["F"]
        with pytest.raises(ConfigError, match="model.F"):
            scenario_from_dict(cfg)

    def test_missing_seed_named(self):
        cfg = small_config()
        del cfg["mc"]["seed"]
        with pytest.raises(ConfigError, match="mc.seed"):
            scenario_from_dict(cfg)

    def test_mixture_mass_rescaling(self):
        cfg = small_config(
            density={
                "kind": "mixture", "weights": [1.0, 1.0],
                "means": [[-1.0], [1.0]], "covs": [[[0.25]], [[0.25]]],
                "mass": 3.0,
            }
        )
        scenario = scenario_from_dict(cfg)
        assert scenario.q0.mass == pytest.approx(3.0)

    def test_unknown_density_kind(self):
        cfg = small_config(density={"kind": "levy"})
        with pytest.raises(ConfigError, match="levy"):
            scenario_from_dict(cfg)

    def test_load_scenario_roundtrip(self, tmp_path):
        path = write_config(tmp_path, small_config())
        scenario = load_scenario(path)
        assert scenario.seed == 11
        assert scenario.grid.n_steps == 200

    def test_override_key(self):
        cfg = small_config()
        out = override_key(cfg, "mc.seed", 99)
        assert out["mc"]["seed"] == 99
        assert cfg["mc"]["seed"] == 11  # original untouched


class TestRunCommand:
    def test_run_writes_reports_and_figures(self, tmp_path):
        path = write_config(tmp_path, small_config())
        out = tmp_path / "out"
        assert main(["run", str(path), "--output", str(out)]) == 0
        trajectory = (out / "trajectory.csv").read_text().splitlines()
        assert trajectory[0].startswith("t,xhat,rho,log_nu,gamma,v")
        assert len(trajectory) == 202
        summary = (out / "summary.csv").read_text().splitlines()
        assert summary[0] == "quantity,analytic,estimate,stderr"
        quantities = {line.split(",")[0] for line in summary[1:]}
        assert {"value_function", "cost_reference", "cost_physical"} <= quantities
        assert (out / "trajectory.png").exists()
        assert (out / "summary.png").exists()

    def test_run_outputs_are_deterministic(self, tmp_path):
        path = write_config(tmp_path, small_config())
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["run", str(path), "--output", str(out1), "--no-figures"]) == 0
        assert main(["run", str(path), "--output", str(out2), "--no-figures"]) == 0
        assert (out1 / "trajectory.csv").read_bytes() == (out2 / "trajectory.csv").read_bytes()
        assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()

    def test_seed_override_changes_trajectory(self, tmp_path):
        path = write_config(tmp_path, small_config())
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        assert main(["run", str(path), "--output", str(out1), "--no-figures"]) == 0
        assert main(["run", str(path), "--output", str(out2), "--no-figures", "--seed", "12"]) == 0
        assert (out1 / "trajectory.csv").read_bytes() != (out2 / "trajectory.csv").read_bytes()

    def test_run_reports_config_errors(self, tmp_path, capsys):
        cfg = small_config()
        del cfg["model"]["F"]
        path = write_config(tmp_path, cfg)
        assert main(["run", str(path)]) == 1
        assert "model.F" in capsys.readouterr().err

    def test_missing_file(self):
        assert main(["run", "/nonexistent/conf.yaml"]) == 1


class TestCheckCommand:
    def test_check_passes_on_benchmark(self, tmp_path, capsys):
        path = write_config(tmp_path, small_config())
        assert main(["check", str(path)]) == 0
        output = capsys.readouterr().out
        assert "checks passed" in output
        assert "FAIL" not in output


class TestSweepCommand:
    def test_sweep_over_replications(self, tmp_path):
        path = write_config(tmp_path, small_config())
        out = tmp_path / "sweep"
        assert main([
            "sweep", str(path), "--param", "mc.n_mc", "--values", "20,40",
            "--output", str(out),
        ]) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "param,value,quantity,analytic,estimate,stderr"
        assert sum("cost_reference" in line for line in lines) == 2
        assert (out / "sweep.png").exists()
