import json

import numpy as np
import pytest

from depthloc.cli import main
from depthloc.config import (ExperimentConfig, ParseError, config_from_dict,
                             parse_config)
from depthloc.results import aggregate, read_records


def base_config():
    return {
        "seed": 5,
        "target": {"g": "monomial", "scope": "local", "d": 6,
                   "indices": [1, 2]},
        "sweep": {"n_train": 80, "n_test": 200, "P": 400, "depths": [1, 2],
                  "lr_grid": {"lo": 0.05, "hi": 0.2, "points_per_decade": 2,
                              "refine_rounds": 0},
                  "folds": 3, "batch_size": 20, "epoch_cap": 100,
                  "seeds": [0], "ntk_baseline": False},
    }


def write_config(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


class TestConfigParsing:
    def test_defaults(self):
        cfg = config_from_dict({
            "target": {"d": 4, "indices": [1, 2]},
            "sweep": {"n_train": 10},
        })
        s = cfg.sweep
        assert (s.batch_size, s.folds, s.epoch_cap) == (50, 10, 2500)
        assert s.beta == 0.1
        assert s.n_test == 100_000
        assert s.seeds == (0, 1, 2)
        assert cfg.target.g.kind == "monomial"
        assert cfg.target.task == "regression"
        assert cfg.target.noise_eps == 0.0

    def test_unknown_key_reports_path(self):
        raw = base_config()
        raw["sweep"]["batchsize"] = 10
        with pytest.raises(ParseError) as e:
            config_from_dict(raw)
        assert e.value.path == "sweep.batchsize"

    def test_unknown_nested_key(self):
        raw = base_config()
        raw["target"]["dim"] = 5
        with pytest.raises(ParseError) as e:
            config_from_dict(raw)
        assert e.value.path == "target.dim"

    def test_missing_required(self):
        with pytest.raises(ParseError) as e:
            config_from_dict({"target": {"d": 4, "indices": [1]}})
        assert e.value.path == "sweep"

    def test_too_many_indices_flagged(self):
        raw = base_config()
        raw["target"]["indices"] = [1, 2, 3, 4, 5, 6, 7]  # k = 7 > d = 6
        with pytest.raises(ParseError) as e:
            config_from_dict(raw)
        assert e.value.path.startswith("target")

    def test_round_trip(self):
        cfg = config_from_dict(base_config())
        again = config_from_dict(cfg.to_dict())
        assert again == cfg
        assert again.to_dict() == cfg.to_dict()

    def test_invalid_json_file(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{nope")
        with pytest.raises(ParseError):
            parse_config(str(p))

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            parse_config("/nonexistent/cfg.json")

    def test_workers_env_override(self, tmp_path, monkeypatch):
        path = write_config(tmp_path, base_config())
        monkeypatch.setenv("DLB_WORKERS", "3")
        cfg = parse_config(path)
        assert cfg.workers == 3
        assert cfg.sweep.workers == 3


class TestCliExitCodes:
    def test_bad_config_is_1(self, tmp_path, capsys):
        raw = base_config()
        raw["oops"] = True
        path = write_config(tmp_path, raw)
        rc = main(["sweep", "--config", path, "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "config error" in capsys.readouterr().err

    def test_missing_config_is_1(self, tmp_path):
        rc = main(["sweep", "--config", str(tmp_path / "none.json"),
                   "--out", str(tmp_path / "o")])
        assert rc == 1

    def test_all_diverged_is_2(self, tmp_path, capsys):
        raw = base_config()
        raw["sweep"]["lr_grid"] = {"lo": 1e6, "hi": 1e6,
                                   "points_per_decade": 1, "refine_rounds": 0}
        raw["sweep"]["epoch_cap"] = 60
        path = write_config(tmp_path, raw)
        rc = main(["sweep", "--config", path, "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "runtime failure" in capsys.readouterr().err


class TestCliCommands:
    def test_gen_materialized(self, tmp_path):
        path = write_config(tmp_path, base_config())
        out = str(tmp_path / "data.json")
        assert main(["gen", "--config", path, "--out", out,
                     "--materialize"]) == 0
        payload = json.loads(open(out).read())
        assert payload["n"] == 80
        assert len(payload["inputs"]) == 80
        assert len(payload["labels"]) == 80
        X = np.asarray(payload["inputs"])
        y = np.asarray(payload["labels"])
        assert np.allclose(X[:, 0] * X[:, 1], y)  # noiseless 2-local monomial

    def test_train_single_run(self, tmp_path):
        path = write_config(tmp_path, base_config())
        out = str(tmp_path / "run.csv")
        assert main(["train", "--config", path, "--depth", "1",
                     "--lr", "0.05", "--seed", "0", "--out", out]) == 0
        recs = read_records(out)
        assert len(recs) == 1
        assert recs[0].kind == "sgd" and recs[0].depth == 1
        assert recs[0].learning_rate == 0.05

    def test_ntk_single_run(self, tmp_path):
        path = write_config(tmp_path, base_config())
        out = str(tmp_path / "ntk.csv")
        assert main(["ntk", "--config", path, "--depth", "2",
                     "--out", out]) == 0
        recs = read_records(out)
        assert len(recs) == 1
        assert recs[0].kind == "ntk"
        assert recs[0].test_metric < 1.0  # beats the zero predictor

    def test_lr_scan(self, tmp_path):
        raw = base_config()
        del raw["sweep"]["P"]
        raw["sweep"]["h"] = 12
        raw["sweep"]["depths"] = [1]
        path = write_config(tmp_path, raw)
        out = str(tmp_path / "scan.csv")
        assert main(["lr-scan", "--config", path, "--out", out]) == 0
        recs = read_records(out)
        assert len(recs) >= 2
        assert all(r.width == 12 for r in recs)

    def test_sweep_and_report(self, tmp_path):
        path = write_config(tmp_path, base_config())
        out = str(tmp_path / "sweep.csv")
        assert main(["sweep", "--config", path, "--out", out]) == 0
        recs = read_records(out)
        assert len(recs) == 2  # depths {1,2} x 1 seed, no ntk baseline
        rpt = str(tmp_path / "report.csv")
        assert main(["report", out, "--out", rpt]) == 0
        lines = open(rpt).read().strip().split("\n")
        assert lines[0] == "kind,depth,n,mean_test_metric,stderr_test_metric"
        assert len(lines) == 3

    def test_report_aggregation_oracle(self, tmp_path):
        # two csvs for the same cell; mean and stderr computed by hand
        from depthloc.experiment import RunRecord
        from depthloc.results import write_results
        vals = [0.2, 0.3, 0.7]
        recs = [RunRecord("sgd", 1, 8, 100, 0.1, s, 10, "epoch_cap", 0.0, v,
                          0.0) for s, v in enumerate(vals)]
        a = str(tmp_path / "a.csv")
        b = str(tmp_path / "b.csv")
        write_results(recs[:2], a, {})
        write_results(recs[2:], b, {})
        merged = read_records(a) + read_records(b)
        rows = aggregate(merged)
        assert len(rows) == 1
        _, _, n, mean, stderr = rows[0]
        assert n == 3
        assert np.isclose(mean, 0.4)
        assert np.isclose(stderr, np.std(vals, ddof=1) / np.sqrt(3))

    def test_sweep_rerun_byte_identical(self, tmp_path):
        path = write_config(tmp_path, base_config())
        outs = []
        for name in ("r1.csv", "r2.csv"):
            out = str(tmp_path / name)
            assert main(["sweep", "--config", path, "--out", out]) == 0
            outs.append(out)
        a, b = (open(o, "rb").read() for o in outs)
        assert a == b
        ma, mb = (open(o + ".manifest.json", "rb").read() for o in outs)
        assert ma == mb
