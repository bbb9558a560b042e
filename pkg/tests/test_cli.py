"""Command-line surface: parsing, run directories, and the full pipeline."""

import json
import os

import numpy as np
import pytest

from widthsearch.assign import BC, Principle
from widthsearch.cli import (DataConfig, PipelineError, RunConfig, _parse_layer,
                             build_parser, main, make_dataset, parse_budget,
                             run_pipeline)
from widthsearch.evo import EvoConfig
from widthsearch.space import FlopsTable, LayerSpec, SearchSpace
from widthsearch.supertrain import TrainConfig


def small_config(seed=0, method="evo", budget="1.0x", epochs=2):
    space = SearchSpace(layers=(LayerSpec(4, 0, 2), LayerSpec(4, 0, 2)),
                        input_dim=5, output_dim=3)
    return RunConfig(
        space=space,
        data=DataConfig(kind="blobs", n_train=192, n_val=64),
        train=TrainConfig(epochs=epochs, batch_size=32, seed=seed,
                          principle=Principle(kind=BC)),
        evo=EvoConfig(population_size=4, iterations=3, survivors=1, seed=seed),
        budget=budget,
        method=method,
        seed=seed,
    )


class TestParsing:
    def test_parse_budget_absolute_and_fractional(self):
        space = SearchSpace(layers=(LayerSpec(4, 0, 2),), input_dim=5, output_dim=3)
        table = FlopsTable.from_dense(space)
        assert parse_budget("12345", table) == 12345
        assert parse_budget("1.0x", table) == table.max_total()
        assert parse_budget("0.5x", table) == int(0.5 * table.max_total())

    def test_parse_budget_rejects_garbage(self):
        space = SearchSpace(layers=(LayerSpec(4, 0, 2),), input_dim=5, output_dim=3)
        table = FlopsTable.from_dense(space)
        for bad in ["0", "-5", "0x", "-0.5x", "abc", ""]:
            with pytest.raises(ValueError):
                parse_budget(bad, table)

    def test_parse_layer_forms(self):
        assert _parse_layer("8") == LayerSpec(8, 0, 8)
        assert _parse_layer("8:0:4") == LayerSpec(8, 0, 4)
        assert _parse_layer("12:4:3") == LayerSpec(12, 4, 3)
        assert _parse_layer("12:4:3:blk") == LayerSpec(12, 4, 3, "blk")
        with pytest.raises(ValueError):
            _parse_layer("not-a-layer")

    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["--help"])
        assert exc.value.code == 0

    def test_unknown_flag_exits_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["train", "--no-such-flag"])
        assert exc.value.code == 2

    def test_identity_hash_ignores_search_settings(self):
        base = small_config()
        searched = small_config(method="greedy", budget="0.7x")
        assert base.identity_hash() == searched.identity_hash()
        other_seed = small_config(seed=1)
        assert base.identity_hash() != other_seed.identity_hash()

    def test_run_config_round_trip(self):
        cfg = small_config(seed=3, method="random", budget="0.8x")
        again = RunConfig.from_json(json.loads(json.dumps(cfg.to_json())))
        assert again == cfg
        assert again.identity_hash() == cfg.identity_hash()

    def test_dataset_kind_validated(self):
        with pytest.raises(ValueError):
            DataConfig(kind="mnist")

    def test_spirals_need_two_input_dims(self):
        space = SearchSpace(layers=(LayerSpec(4, 0, 2),), input_dim=5, output_dim=3)
        with pytest.raises(ValueError):
            make_dataset(space, DataConfig(kind="spirals"), seed=0)


class TestPipeline:
    def test_end_to_end_artifacts(self, tmp_path):
        out = str(tmp_path / "run")
        cfg = small_config()
        out_dir = run_pipeline(cfg, out)
        report_path = os.path.join(out_dir, "report.json")
        expected = ["config.json", "space.json", "flops.json", "losslog.jsonl",
                    "supernet.ckpt", "train_meta.json", "audit.json",
                    "audit.csv", "history.csv", "best_width.json",
                    "report.json", "loss_curve.png", "audit.png",
                    "search_history.png"]
        for name in expected:
            assert os.path.exists(os.path.join(out, name)), name
        report = json.loads(open(report_path).read())
        assert report["config_hash"] == cfg.identity_hash()
        assert tuple(report["width"]) in set(cfg.space.enumerate_widths())
        assert report["retrained_acc"] >= 0.0
        assert report["method"] == "evo"

    def test_artifacts_stamped_with_hash(self, tmp_path):
        out = str(tmp_path / "run")
        cfg = small_config()
        run_pipeline(cfg, out)
        h = cfg.identity_hash()
        for name in ["space.json", "flops.json", "train_meta.json",
                     "audit.json", "best_width.json", "report.json"]:
            payload = json.loads(open(os.path.join(out, name)).read())
            assert payload["config_hash"] == h, name
        first = open(os.path.join(out, "losslog.jsonl")).readline()
        assert json.loads(first)["config_hash"] == h
        assert open(os.path.join(out, "history.csv")).readline().strip() \
            == f"# config_hash={h}"

    def test_rerun_is_bit_identical(self, tmp_path):
        cfg = small_config(seed=5)
        a = run_pipeline(cfg, str(tmp_path / "a"))
        b = run_pipeline(cfg, str(tmp_path / "b"))
        ra = open(os.path.join(a, "report.json"), "rb").read()
        rb = open(os.path.join(b, "report.json"), "rb").read()
        assert ra == rb

    def test_existing_dir_with_other_run_refused(self, tmp_path):
        out = str(tmp_path / "run")
        run_pipeline(small_config(seed=0), out)
        with pytest.raises((PipelineError, ValueError)) as err:
            run_pipeline(small_config(seed=1), out)
        assert "fresh --out" in str(err.value)

    def test_greedy_and_random_methods(self, tmp_path):
        for method in ["greedy", "random"]:
            out = run_pipeline(small_config(method=method), str(tmp_path / method))
            report = json.loads(open(os.path.join(out, "report.json")).read())
            assert report["method"] == method

    @pytest.mark.filterwarnings("ignore:requested top")
    def test_prior_method_writes_distribution(self, tmp_path):
        out = str(tmp_path / "run")
        run_pipeline(small_config(method="evo-prior"), out)
        prior = json.loads(open(os.path.join(out, "prior_dist.json")).read())
        assert "distributions" in prior
        for d in prior["distributions"]:
            assert sum(d) == pytest.approx(1.0, abs=1e-9)


class TestCommands:
    def run_main(self, *argv):
        return main(list(argv))

    def test_space_then_train_then_search(self, tmp_path, capsys):
        out = str(tmp_path / "run")
        common = ["--layer", "4:0:2", "--layer", "4:0:2",
                  "--input-dim", "5", "--output-dim", "3",
                  "--n-train", "192", "--n-val", "64", "--seed", "0"]
        train = ["--epochs", "2", "--batch-size", "32"]
        # the identity hash covers the training settings, so every composed
        # stage must restate them
        assert self.run_main("space", "--out", out, *common, *train) == 0
        assert self.run_main("train", "--out", out, *common, *train) == 0
        assert self.run_main("audit", "--out", out, *common, *train) == 0
        assert self.run_main("search", "--out", out, *common, *train,
                             "--budget", "1.0x", "--method", "greedy") == 0
        assert os.path.exists(os.path.join(out, "best_width.json"))
        capsys.readouterr()

    def test_eval_prints_json_lines(self, tmp_path, capsys):
        out = str(tmp_path / "run")
        common = ["--layer", "4:0:2", "--layer", "4:0:2",
                  "--input-dim", "5", "--output-dim", "3",
                  "--n-train", "192", "--n-val", "64", "--seed", "0",
                  "--epochs", "2", "--batch-size", "32"]
        assert self.run_main("train", "--out", out, *common) == 0
        capsys.readouterr()
        assert self.run_main("eval", "--out", out, *common,
                             "--width", "2,2", "--width", "4,4") == 0
        lines = [l for l in capsys.readouterr().out.strip().split("\n") if l]
        assert len(lines) == 2
        for line in lines:
            obj = json.loads(line)
            assert {"width", "acc_mean", "flops", "config_hash"} <= set(obj)

    def test_mixed_run_artifacts_rejected(self, tmp_path, capsys):
        out_a = str(tmp_path / "a")
        out_b = str(tmp_path / "b")
        common = ["--layer", "4:0:2", "--layer", "4:0:2",
                  "--input-dim", "5", "--output-dim", "3",
                  "--n-train", "192", "--n-val", "64",
                  "--epochs", "2", "--batch-size", "32"]
        assert self.run_main("train", "--out", out_a, *common, "--seed", "0") == 0
        assert self.run_main("train", "--out", out_b, *common, "--seed", "1") == 0
        # graft the other run's training log, then ask for a prior
        os.replace(os.path.join(out_b, "losslog.jsonl"),
                   os.path.join(out_a, "losslog.jsonl"))
        rc = self.run_main("prior", "--out", out_a, *common, "--seed", "0",
                           "--budget", "1.0x")
        captured = capsys.readouterr()
        assert rc == 1
        assert "hash" in captured.err

    def test_run_command_and_config_replay(self, tmp_path, capsys):
        out = str(tmp_path / "run")
        replay = str(tmp_path / "replay")
        common = ["--layer", "4:0:2", "--layer", "4:0:2",
                  "--input-dim", "5", "--output-dim", "3",
                  "--n-train", "192", "--n-val", "64", "--seed", "4",
                  "--epochs", "2", "--batch-size", "32",
                  "--budget", "1.0x", "--method", "greedy"]
        assert self.run_main("run", "--out", out, *common) == 0
        capsys.readouterr()
        assert self.run_main("run", "--out", replay, "--config",
                             os.path.join(out, "config.json")) == 0
        a = open(os.path.join(out, "report.json"), "rb").read()
        b = open(os.path.join(replay, "report.json"), "rb").read()
        assert a == b

    def test_bench_cycle(self, tmp_path, capsys):
        out = str(tmp_path / "run")
        common = ["--layer", "4:0:2", "--layer", "4:0:2",
                  "--input-dim", "5", "--output-dim", "3",
                  "--n-train", "128", "--n-val", "64", "--seed", "0",
                  "--epochs", "1", "--batch-size", "32"]
        assert self.run_main("train", "--out", out, *common) == 0
        assert self.run_main("bench", "generate", "--out", out, *common,
                             "--num-seeds", "1") == 0
        assert os.path.exists(os.path.join(out, "bench.jsonl"))
        assert self.run_main("bench", "score", "--out", out) == 0
        assert os.path.exists(os.path.join(out, "score.json"))
        capsys.readouterr()

    def test_failure_exits_one_with_message(self, tmp_path, capsys):
        # searching before a supernet exists must fail with a message
        rc = self.run_main("search", "--out", str(tmp_path / "nope"),
                           "--layer", "4:0:2", "--input-dim", "5",
                           "--output-dim", "3", "--budget", "1.0x")
        captured = capsys.readouterr()
        assert rc == 1
        assert captured.err.strip()
