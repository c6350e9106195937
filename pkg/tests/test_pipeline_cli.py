import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from cuisine_infer import pipeline
from cuisine_infer.cli import main
from cuisine_infer.pipeline import (
    ConfigError,
    DEFAULT_CONFIG,
    MissingArtifactError,
    config_hash,
    load_config,
    load_dataset,
    run_pipeline,
    stage_seed,
)

TINY = {
    "seed": 1,
    "synth": {"n_restaurants": 150, "n_customers": 750, "days": 14},
    "embed": {"micro": {"dim": 8, "window": 4, "negative": 4, "epochs": 1},
              "macro": {"dim": 8, "window": 20, "negative": 4, "epochs": 1},
              "name_dim": 10},
    "train": {"branch_hidden": 8, "trunk_hidden": [16, 8], "epochs": 10},
}


def _tiny_cfg(tmp_path, **extra):
    overrides = {"out_dir": str(tmp_path / "out")}
    cfg_file = tmp_path / "config.yaml"
    merged = dict(TINY)
    merged.update(extra)
    cfg_file.write_text(yaml.safe_dump(merged))
    return load_config(cfg_file, overrides)


class TestConfig:
    def test_defaults_load(self):
        cfg = load_config()
        assert cfg == pipeline.load_config()
        assert cfg["seed"] == 7
        assert cfg["train"]["variant"] == "residual_deep"

    def test_file_and_override_round_trip(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("seed: 99\ntrain:\n  dropout: 0.2\n")
        cfg = load_config(p, {"train.batch_size": 64})
        assert cfg["seed"] == 99
        assert cfg["train"]["dropout"] == 0.2
        assert cfg["train"]["batch_size"] == 64
        # untouched defaults survive
        assert cfg["label"]["theta_p"] == DEFAULT_CONFIG["label"]["theta_p"]

    def test_unknown_field_rejected(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("trian:\n  dropout: 0.2\n")
        with pytest.raises(ConfigError, match="trian"):
            load_config(p)

    def test_unknown_nested_field_names_path(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("train:\n  dropouts: 0.2\n")
        with pytest.raises(ConfigError, match="train.dropouts"):
            load_config(p)

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError):
            load_config(None, {"train.warp_speed": 9})

    def test_validation(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("train:\n  variant: transformer\n")
        with pytest.raises(ConfigError, match="variant"):
            load_config(p)

    def test_hash_sensitivity(self):
        a = load_config()
        b = load_config(None, {"seed": 8})
        assert config_hash(a) != config_hash(b)
        assert config_hash(a) == config_hash(load_config())

    def test_stage_seeds_distinct(self):
        cfg = load_config()
        seeds = {stage_seed(cfg, s) for s in pipeline.PIPELINE_ORDER}
        assert len(seeds) == len(pipeline.PIPELINE_ORDER)


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("pipe")
    cfg = _tiny_cfg(tmp_path)
    artifacts = run_pipeline(cfg)
    return cfg, artifacts, tmp_path


class TestPipeline:
    def test_artifacts_exist(self, pipeline_run):
        cfg, artifacts, _ = pipeline_run
        for path in artifacts.values():
            assert path.exists(), path
        out = artifacts["metrics"].parent
        for stage in pipeline.PIPELINE_ORDER:
            assert (out / f"manifest_{stage}.txt").exists()

    def test_manifest_contents(self, pipeline_run):
        cfg, artifacts, _ = pipeline_run
        out = artifacts["metrics"].parent
        text = (out / "manifest_train.txt").read_text()
        lines = dict(line.split("\t", 1) for line in text.splitlines())
        assert lines["stage"] == "train"
        assert lines["config_hash"] == config_hash(cfg)
        assert int(lines["seed"]) == stage_seed(cfg, "train")
        assert float(lines["duration_s"]) >= 0

    def test_dataset_block_layout(self, pipeline_run):
        cfg, _, _ = pipeline_run
        ds = load_dataset(cfg)
        assert len(ds) <= cfg["synth"]["n_restaurants"]
        assert len(ds) > 100
        assert set(ds.features) == {
            "price_deciles", "tip_deciles", "capacity_deciles", "revisit_deciles",
            "loyalty_deciles", "dow_dist", "weekday_hour_dist", "weekend_hour_dist",
            "party_prop", "party_price", "zip_onehot",
            "micro_embed", "macro_embed", "name_embed"}
        assert ds.features["name_embed"].shape[1] == cfg["embed"]["name_dim"]
        assert ((ds.labels >= -1) & (ds.labels <= 9)).all()
        assert (ds.labels >= 0).any() and (ds.labels == -1).any()

    def test_metrics_file_parses(self, pipeline_run):
        _, artifacts, _ = pipeline_run
        lines = artifacts["metrics"].read_text().splitlines()
        metrics = {}
        for line in lines:
            parts = line.split("\t")
            if parts[0] in ("accuracy", "balanced_accuracy"):
                metrics[parts[0]] = float(parts[1])
        assert 0.0 <= metrics["accuracy"] <= 1.0

    def test_eval_before_train_missing_artifact(self, tmp_path):
        cfg = _tiny_cfg(tmp_path)
        with pytest.raises(MissingArtifactError):
            pipeline.run_eval(cfg)

    def test_label_before_synth_missing_artifact(self, tmp_path):
        cfg = _tiny_cfg(tmp_path)
        with pytest.raises(MissingArtifactError):
            pipeline.run_label(cfg)


class TestDeterminism:
    def test_rerun_byte_identical(self, tmp_path):
        digests = []
        for run in ("a", "b"):
            out = tmp_path / f"out_{run}"
            cfg = load_config(None, {"out_dir": str(out)})
            cfg = pipeline._merge(cfg, TINY)
            artifacts = run_pipeline(cfg)
            blob = b"".join(
                sorted(p.read_bytes() for p in out.iterdir()
                       if p.name != "metrics.txt" and not p.name.startswith("manifest")))
            digests.append(blob)
        assert digests[0] == digests[1]


class TestCli:
    def test_help_lists_subcommands(self):
        result = CliRunner().invoke(main, ["--help"])
        assert result.exit_code == 0
        for sub in ("synth", "label", "features", "embed", "train", "eval",
                    "report", "pipeline"):
            assert sub in result.output

    def test_synth_stage(self, tmp_path):
        out = tmp_path / "out"
        result = CliRunner().invoke(main, [
            "synth", "--out-dir", str(out), "--seed", "3",
            "--set", "synth.n_restaurants=20",
            "--set", "synth.n_customers=100",
            "--set", "synth.days=5"])
        assert result.exit_code == 0, result.output
        assert (out / "transactions.csv").exists()
        assert (out / "manifest_synth.txt").exists()

    def test_config_error_exit_code(self):
        result = CliRunner().invoke(main, ["synth", "--set", "nope=1"])
        assert result.exit_code == 2

    def test_bad_override_format_exit_code(self):
        result = CliRunner().invoke(main, ["synth", "--set", "seed"])
        assert result.exit_code == 2

    def test_missing_artifact_exit_code(self, tmp_path):
        result = CliRunner().invoke(main, ["eval", "--out-dir", str(tmp_path / "x")])
        assert result.exit_code == 3

    def test_data_error_exit_code(self, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        (out / "transactions.csv").write_text("bad,header\n")
        result = CliRunner().invoke(main, ["features", "--out-dir", str(out)])
        assert result.exit_code == 4

    def test_seed_override_changes_manifest(self, tmp_path):
        outs = []
        for seed in ("3", "4"):
            out = tmp_path / f"o{seed}"
            CliRunner().invoke(main, [
                "synth", "--out-dir", str(out), "--seed", seed,
                "--set", "synth.n_restaurants=10",
                "--set", "synth.n_customers=50",
                "--set", "synth.days=3"])
            outs.append((out / "manifest_synth.txt").read_text())
        hash_a = [l for l in outs[0].splitlines() if l.startswith("config_hash")]
        hash_b = [l for l in outs[1].splitlines() if l.startswith("config_hash")]
        assert hash_a != hash_b
