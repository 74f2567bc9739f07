import json
import os

import numpy as np
import pytest

from fixed_dg.cli import run_cli
from fixed_dg.config import build_dataset, parse_config, parse_config_text, serialize_config
from fixed_dg.errors import ConfigError

MINIMAL = "data.generator = rotated_moons\ndata.seed = 7\n"


class TestParsing:
    def test_minimal_config_gets_protocol_defaults(self):
        cfg = parse_config_text(MINIMAL)
        acfg = cfg.algorithm_config()
        assert acfg.algorithm == "ERM"
        assert acfg.epochs == 150
        assert acfg.batch_per_domain == 32
        assert acfg.lr == 1e-2
        assert acfg.weight_decay == 5e-4
        assert acfg.seed == 7  # falls back to data.seed

    def test_misspelled_key_rejected_by_name(self):
        with pytest.raises(ConfigError, match="margin.gama"):
            parse_config_text(MINIMAL + "margin.gama = 0.5\n")

    def test_type_mismatch_names_key(self):
        with pytest.raises(ConfigError, match="algorithm.epochs"):
            parse_config_text(MINIMAL + "algorithm.epochs = many\n")

    def test_missing_seed_rejected(self):
        with pytest.raises(ConfigError, match="data.seed"):
            parse_config_text("data.generator = rotated_moons\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text(MINIMAL + "data.seed = 9\n")

    def test_comments_and_blanks_ignored(self):
        cfg = parse_config_text("# header\n\n" + MINIMAL + "margin.gamma = 2.0  # inline\n")
        assert cfg["margin.gamma"] == 2.0

    def test_roundtrip(self, tmp_path):
        text = MINIMAL + "mixup.alpha = 0.4\nmodel.hidden = 32,16\nreport.emit_plots = true\n"
        cfg = parse_config_text(text)
        reparsed = parse_config_text(serialize_config(cfg))
        assert reparsed.values == cfg.values

    def test_csv_path_must_exist(self, tmp_path):
        cfgfile = tmp_path / "c.cfg"
        cfgfile.write_text("data.generator = csv\ndata.seed = 1\ndata.csv_path = nope.csv\n")
        with pytest.raises(ConfigError, match="nope.csv"):
            parse_config(cfgfile)

    def test_unknown_generator(self):
        with pytest.raises(ConfigError, match="generator"):
            parse_config_text("data.generator = imagenet\ndata.seed = 1\n")


class TestBuildDataset:
    def test_moons(self):
        ds = build_dataset(parse_config_text(MINIMAL + "data.n_per_domain = 20\n"))
        assert ds.num_domains == 4 and ds.feature_shape == (2,)

    def test_har_with_windowing(self):
        cfg = parse_config_text(
            "data.generator = synthetic_har\ndata.seed = 3\ndata.n_per_class = 2\n"
            "data.length = 64\ndata.channels = 2\ndata.num_classes = 2\ndata.num_domains = 2\n"
            "data.window = true\ndata.window_width = 32\ndata.window_stride = 16\n"
        )
        ds = build_dataset(cfg)
        assert ds.feature_shape == (2, 32)

    def test_csv_roundtrip_through_config(self, tmp_path):
        out = tmp_path / "data.csv"
        assert run_cli(["gen", "--config", str(_write(tmp_path, MINIMAL + "data.n_per_domain = 12\n")), "--out", str(out)]) == 0
        cfg = parse_config_text(f"data.generator = csv\ndata.seed = 1\ndata.csv_path = {out}\n")
        ds = build_dataset(cfg)
        assert ds.num_domains == 4
        assert ds.domains[0].x.shape == (12, 2)


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


TRAIN_CFG = (
    "data.generator = rotated_moons\n"
    "data.seed = 5\n"
    "data.n_per_domain = 40\n"
    "data.rotations = 0,30,60\n"
    "algorithm.name = ERM\n"
    "algorithm.epochs = 2\n"
    "algorithm.batch = 8\n"
    "model.hidden = 8\n"
    "model.bottleneck_dim = 4\n"
)


class TestCli:
    def test_unknown_subcommand_exits_1(self, capsys):
        assert run_cli(["frobnicate"]) == 1

    def test_missing_required_flag_exits_1(self):
        assert run_cli(["train"]) == 1

    def test_config_error_exits_2(self, tmp_path, capsys):
        cfg = _write(tmp_path, "data.generator = rotated_moons\n")  # no seed
        assert run_cli(["train", "--config", str(cfg)]) == 2
        assert "data.seed" in capsys.readouterr().err

    def test_help_exits_0(self):
        assert run_cli(["--help"]) == 0

    def test_train_writes_artifacts(self, tmp_path):
        cfg = _write(tmp_path, TRAIN_CFG + "report.emit_plots = true\n")
        out = tmp_path / "run"
        assert run_cli(["train", "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / "config.txt").exists()  # config echo: reproducible from artifacts
        assert (out / "best.ckpt").exists()
        assert (out / "embedding.svg").exists() and (out / "embedding.csv").exists()
        epochs = [json.loads(l) for l in (out / "metrics.jsonl").read_text().splitlines()]
        assert len(epochs) == 3  # 2 epoch records + final sentinel
        assert epochs[-1]["final"] is True

    def test_eval_reads_checkpoint(self, tmp_path, capsys):
        cfg = _write(tmp_path, TRAIN_CFG)
        out = tmp_path / "run"
        run_cli(["train", "--config", str(cfg), "--out", str(out)])
        assert run_cli(["eval", "--ckpt", str(out / "best.ckpt"), "--config", str(cfg)]) == 0
        assert "overall" in capsys.readouterr().out

    def test_bench_produces_expected_record_count(self, tmp_path, capsys):
        cfg = _write(
            tmp_path,
            "data.generator = rotated_moons\ndata.seed = 2\ndata.n_per_domain = 30\n"
            "data.rotations = 0,20,40,60\nalgorithm.epochs = 1\nalgorithm.batch = 4\n"
            "model.hidden = 4\nmodel.bottleneck_dim = 4\n",
        )
        out = tmp_path / "bench"
        code = run_cli(
            ["bench", "--config", str(cfg), "--algorithms", "ERM,Mixup", "--seeds", "3", "--out", str(out)]
        )
        assert code == 0
        jsonls = [os.path.join(r, f) for r, _, fs in os.walk(out) for f in fs if f.endswith(".jsonl")]
        assert len(jsonls) == 24  # 2 algorithms x 3 seeds x 4 held-out domains
        assert "24 runs" in capsys.readouterr().out
        assert (out / "table.csv").exists()

    def test_report_aggregates_only_completed_runs(self, tmp_path, capsys):
        cfg = _write(tmp_path, TRAIN_CFG)
        out = tmp_path / "bench"
        run_cli(["bench", "--config", str(cfg), "--algorithms", "ERM", "--seeds", "1", "--out", str(out)])
        # an unfinished run must be ignored by the aggregator
        (out / "partial.jsonl").write_text(json.dumps({"epoch": 0, "losses": {}, "val_acc": 0.1}) + "\n")
        rep_out = tmp_path / "rep"
        assert run_cli(["report", "--runs", str(out), "--out", str(rep_out)]) == 0
        table = (rep_out / "table.csv").read_text()
        assert "ERM" in table

    def test_bench_runs_concurrently_with_thread_cap(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FIXED_DG_THREADS", "2")
        cfg = _write(
            tmp_path,
            "data.generator = rotated_moons\ndata.seed = 4\ndata.n_per_domain = 30\n"
            "data.rotations = 0,45\nalgorithm.epochs = 1\nalgorithm.batch = 4\n"
            "model.hidden = 4\nmodel.bottleneck_dim = 4\n",
        )
        out = tmp_path / "bench"
        assert run_cli(["bench", "--config", str(cfg), "--algorithms", "ERM,Mixup", "--seeds", "2", "--out", str(out)]) == 0
        jsonls = [f for _, _, fs in os.walk(out) for f in fs if f.endswith(".jsonl")]
        ckpts = [f for _, _, fs in os.walk(out) for f in fs if f.endswith(".ckpt")]
        assert len(jsonls) == 8 and len(ckpts) == 8  # 2 algs x 2 seeds x 2 domains

    def test_bounds_report_has_no_negative_slack(self, tmp_path):
        out = tmp_path / "bounds.csv"
        assert run_cli(["bounds", "--seed", "1", "--out", str(out)]) == 0
        rows = out.read_text().splitlines()
        assert rows[0] == "suite,instance,inequality,lhs,rhs,slack"
        slacks = [float(r.rsplit(",", 1)[1]) for r in rows[1:]]
        assert len(slacks) > 500
        assert min(slacks) >= 0.0
