"""Tests for experiment configs, the replica runner, output tables and manifests."""

from __future__ import annotations

import json

import pytest
import yaml

from src.errors import ConfigurationError
from src.runner.config import build_config, load_config, load_defaults, validate_config
from src.runner.manifest import RunManifest
from src.runner.output import format_value, read_table, write_table
from src.runner.registry import EXPERIMENTS, get_experiment, summarize
from src.runner.runner import REPLICAS_FILE, ROWS_FILE, SUMMARY_FILE, output_dir, run_experiment
from src.utils.seeds import derive_seed, replica_seeds


# ---------------------------------------------------------------------------
#  Fixtures
# ---------------------------------------------------------------------------


@pytest.fixture
def chernoff_config(tmp_path):
    return build_config(
        {
            "experiment": "chernoff",
            "lattice": {"side": 4},
            "params": {"lams": [1.0, 10.0], "epss": [0.5]},
            "reps": 2,
            "out": str(tmp_path / "results"),
        }
    )


def _surface_config(out, workers=1):
    return build_config(
        {
            "experiment": "surface",
            "lattice": {"side": 4},
            "params": {"p_bad": 0.1, "base_shape": [8, 8], "n_levels": 6, "D": 4},
            "reps": 3,
            "seed": 11,
            "out": str(out),
            "workers": workers,
        }
    )


class TestConfig:
    def test_empty_config(self):
        with pytest.raises(ConfigurationError, match="Empty"):
            build_config({})

    def test_unknown_experiment(self):
        with pytest.raises(ConfigurationError, match="unknown experiment"):
            build_config({"experiment": "nope"})

    def test_unknown_param(self):
        with pytest.raises(ConfigurationError):
            build_config({"experiment": "chernoff", "params": {"lamda": [1.0]}})

    def test_params_get_defaults(self):
        config = build_config({"experiment": "heat-kernel"})
        assert config.params == {"t": 5.0, "s": 2.0}

    def test_overrides_win(self):
        config = build_config({"experiment": "chernoff", "seed": 1}, seed=5, reps=None)
        assert config.seed == 5
        assert config.reps == 1

    def test_hash_ignores_workers_and_out(self, tmp_path):
        a = _surface_config(tmp_path / "a", workers=1)
        b = _surface_config(tmp_path / "b", workers=4)
        assert a.canonical_json() == b.canonical_json()
        assert json.loads(a.canonical_json())["seed"] == 11

    def test_load_named_block(self, tmp_path):
        path = tmp_path / "experiments.yaml"
        path.write_text(
            yaml.safe_dump({"experiments": {"chernoff": {"params": {"lams": [2.0]}, "reps": 3}}})
        )
        config = load_config(path, "chernoff")
        assert config.params["lams"] == [2.0]
        assert config.reps == 3
        with pytest.raises(ConfigurationError, match="name one"):
            load_config(path)
        with pytest.raises(ConfigurationError, match="no block"):
            load_config(path, "surface")

    def test_load_json_and_missing_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"experiment": "surface", "reps": 2}))
        assert load_config(path).reps == 2
        with pytest.raises(ConfigurationError, match="not found"):
            load_config(tmp_path / "missing.yaml")

    def test_defaults_without_file(self, tmp_path):
        assert load_defaults("surface", tmp_path / "none.yaml") == {"experiment": "surface"}


class TestValidation:
    def test_clean_config(self):
        assert validate_config(build_config({"experiment": "chernoff"})) == []

    def test_dilute_above_threshold(self):
        config = build_config(
            {"experiment": "chernoff", "lattice": {"law": "dilute", "p0": 0.6}}
        )
        (violation,) = validate_config(config)
        assert "threshold" in violation

    def test_super_cube_larger_than_box(self):
        config = build_config(
            {"experiment": "cell-event", "lattice": {"side": 16}, "params": {"ell": 8}}
        )
        assert any("super cube" in v for v in validate_config(config))

    def test_collision_window_inside_cell(self):
        config = build_config(
            {
                "experiment": "cell-event",
                "lattice": {"side": 64},
                "params": {"ell": 8, "beta_time": 8.0},
            }
        )
        assert any("beta_time" in v for v in validate_config(config))

    def test_spread_uses_collision_time(self):
        config = build_config(
            {
                "experiment": "spread",
                "lattice": {"side": 40},
                "params": {"ell": 8, "collision_time": 300.0},
            }
        )
        assert validate_config(config) == ["T = 300.000 must be < beta_time = 256"]

    def test_mixing_margin(self):
        config = build_config(
            {"experiment": "mixing", "lattice": {"side": 64}, "params": {"deltas": [4096.0]}}
        )
        violations = validate_config(config)
        assert violations
        assert violations[0].startswith("Delta=4096")

    def test_run_refuses_violations(self, tmp_path):
        config = build_config(
            {
                "experiment": "cell-event",
                "lattice": {"side": 16},
                "params": {"ell": 8},
                "out": str(tmp_path),
            }
        )
        with pytest.raises(ConfigurationError):
            run_experiment(config)
        assert not (tmp_path / "cell-event").exists()


class TestOutput:
    def test_format_value(self):
        assert format_value(True) == "true"
        assert format_value(None) == ""
        assert format_value(0.1) == "0.10000000000000001"
        assert format_value(3) == "3"

    def test_table_headers(self, tmp_path):
        rows = [{"a": 1, "b": True}, {"a": 2, "c": 0.5}]
        path = write_table(tmp_path / "t.csv", rows, "demo", "x < y")
        lines = path.read_text().splitlines()
        assert lines[0] == "# schema=1 experiment=demo"
        assert lines[1] == "# statement: x < y"
        assert lines[2] == "a,b,c"
        header, body = read_table(path)
        assert header == {"schema": "1", "experiment": "demo", "statement": "x < y"}
        assert body[1] == {"a": "2", "b": "", "c": "0.5"}


class TestRunner:
    def test_writes_outputs_and_manifest(self, chernoff_config):
        manifest = run_experiment(chernoff_config)
        out = output_dir(chernoff_config)
        assert set(manifest.outputs) == {ROWS_FILE, SUMMARY_FILE, REPLICAS_FILE}
        assert manifest.seeds == replica_seeds(0, "chernoff", 2)
        assert RunManifest.read(out).config_hash == manifest.config_hash
        assert manifest.verify(out) == []

        header, rows = read_table(out / ROWS_FILE)
        assert header["experiment"] == "chernoff"
        assert len(rows) == 4
        assert [r["replica"] for r in rows] == ["0", "0", "1", "1"]
        assert all(r["holds"] == "true" for r in rows)

        _, summary = read_table(out / SUMMARY_FILE)
        assert len(summary) == 2
        assert all(s["n"] == "2" for s in summary)
        assert "holds_low" in summary[0]

        records = [json.loads(line) for line in (out / REPLICAS_FILE).read_text().splitlines()]
        assert [r["seed"] for r in records] == manifest.seeds

    def test_fieldless_experiments_skip_sampling(self, chernoff_config, monkeypatch):
        def fail(spec):
            raise AssertionError("field sampled for a lattice-free experiment")

        monkeypatch.setattr("src.runner.runner.build_field", fail)
        manifest = run_experiment(chernoff_config)
        assert ROWS_FILE in manifest.outputs
        assert not get_experiment("surface").needs_field
        assert get_experiment("stationarity").needs_field

    def test_verify_detects_edits(self, chernoff_config):
        manifest = run_experiment(chernoff_config)
        out = output_dir(chernoff_config)
        (out / ROWS_FILE).write_text("tampered\n")
        assert RunManifest.read(out).verify(out) == [ROWS_FILE]

    def test_same_config_same_bytes(self, tmp_path):
        first = run_experiment(_surface_config(tmp_path / "one"))
        second = run_experiment(_surface_config(tmp_path / "two"))
        assert first.outputs == second.outputs
        assert first.config_hash == second.config_hash

    def test_workers_do_not_change_outputs(self, tmp_path):
        serial = run_experiment(_surface_config(tmp_path / "serial", workers=1))
        pooled = run_experiment(_surface_config(tmp_path / "pooled", workers=2))
        assert serial.outputs == pooled.outputs

    def test_seed_changes_outputs(self, tmp_path):
        base = _surface_config(tmp_path / "a")
        other = base.model_copy(update={"seed": 12, "out": tmp_path / "b"})
        assert run_experiment(base).outputs != run_experiment(other).outputs


class TestRegistry:
    def test_every_experiment_has_defaults(self):
        for name, experiment in EXPERIMENTS.items():
            assert experiment.statement
            experiment.params_model()
            assert get_experiment(name) is experiment

    def test_unknown_name(self):
        with pytest.raises(ConfigurationError, match="known"):
            get_experiment("nope")

    def test_summary_fit_row(self):
        experiment = get_experiment("spread")
        rows = [
            {"replica": i, "N": n, "reached": i < k}
            for n, k in [(1, 3), (2, 5), (4, 8)]
            for i in range(10)
        ]
        summary = summarize(experiment, rows)
        assert [s["N"] for s in summary[:3]] == [1, 2, 4]
        assert summary[0]["reached_freq"] == pytest.approx(0.3)
        assert summary[-1]["fit"] is True
        assert summary[-1]["c_p"] > 0


class TestSeeds:
    def test_seeds_are_stable_and_distinct(self):
        seeds = replica_seeds(3, "mixing", 5)
        assert seeds == replica_seeds(3, "mixing", 5)
        assert len(set(seeds)) == 5
        assert derive_seed(3, "mixing", 0) != derive_seed(3, "spread", 0)
        assert all(0 <= s < 2**64 for s in seeds)
