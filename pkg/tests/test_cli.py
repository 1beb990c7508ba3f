import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from stdhl.cli import RunConfig, main
from stdhl.model import TRAINABLE_MODELS

SMALL_MODEL = {"look_back": 6, "horizon": 2, "nwp_extension": 1, "hidden": 4, "adjust_width": 3,
               "embedding_dim": 3, "linear_hidden": 8, "levels": [0.1, 0.5, 0.9]}
SMALL_TRAIN = {"max_epochs": 2, "patience": 2, "batch_size": 32}


def write_config(path, model=None, train=None, **extra):
    doc = {"model": {**SMALL_MODEL, **(model or {})}, "train": {**SMALL_TRAIN, **(train or {})}, **extra}
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    return list(csv.reader(open(path)))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "synth.csv"
    assert main(["synth", "--farms", "4", "--length", "300", "--seed", "3", "--out", str(data)]) == 0
    config = write_config(root / "config.json")
    run = root / "run"
    assert main(["train", "--config", config, "--data", str(data), "--out", str(run)]) == 0
    return {"root": root, "data": str(data), "config": config, "checkpoint": str(run / "checkpoint.json"), "run": run}


class TestSynth:
    def test_byte_identical_per_seed(self, tmp_path):
        a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
        for path, seed in ((a, 1), (b, 1), (c, 2)):
            assert main(["synth", "--farms", "2", "--length", "50", "--seed", str(seed), "--out", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes() != c.read_bytes()

    def test_lags_validated(self, tmp_path):
        code = main(["synth", "--farms", "2", "--length", "50", "--lags", "0,x", "--out", str(tmp_path / "x.csv")])
        assert code == 1

    def test_missing_output_dir(self, tmp_path):
        assert main(["synth", "--farms", "2", "--length", "50", "--out", str(tmp_path / "no" / "x.csv")]) == 2


class TestConfig:
    def test_init_round_trip(self, tmp_path):
        assert main(["config", "init", "--out", str(tmp_path / "c.json")]) == 0
        doc = json.loads((tmp_path / "c.json").read_text())
        assert set(doc) == {"data", "output_dir", "model", "train"}
        assert RunConfig.from_dict(doc).to_dict() == doc

    def test_init_stdout(self, capsys):
        assert main(["config", "init"]) == 0
        assert json.loads(capsys.readouterr().out)["model"]["look_back"] == 12

    def test_unknown_key_is_usage_error(self, tmp_path, workspace):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"model": {"lookback": 3}}))
        assert main(["train", "--config", str(bad), "--data", workspace["data"], "--out", str(tmp_path)]) == 1
        bad.write_text(json.dumps({"optimizer": {}}))
        assert main(["train", "--config", str(bad), "--data", workspace["data"], "--out", str(tmp_path)]) == 1

    def test_seed_environment_override(self, tmp_path, monkeypatch):
        path = write_config(tmp_path / "c.json", model={"seed": 1}, train={"seed": 1})
        monkeypatch.setenv("STDHL_SEED", "7")
        run = RunConfig.load(path)
        assert run.model.seed == 7 and run.train.seed == 7


class TestTrain:
    def test_outputs(self, workspace):
        rows = read_csv(workspace["run"] / "history.csv")
        assert rows[0] == ["epoch", "train_loss", "val_pinball"] and len(rows) == 3
        doc = json.loads(open(workspace["checkpoint"]).read())
        assert doc["model"] == "stdhl"

    @pytest.mark.parametrize("name", [m for m in TRAINABLE_MODELS if m != "stdhl"])
    def test_every_model_trains(self, name, tmp_path, workspace):
        out = tmp_path / name
        assert main(["train", "--config", workspace["config"], "--model", name, "--data", workspace["data"],
                     "--out", str(out)]) == 0
        assert (out / "checkpoint.json").exists()

    def test_unknown_model(self, tmp_path, workspace):
        assert main(["train", "--model", "nope", "--data", workspace["data"], "--out", str(tmp_path)]) == 1

    def test_missing_data(self, tmp_path, workspace):
        args = ["train", "--config", workspace["config"], "--out", str(tmp_path)]
        assert main(args + ["--data", str(tmp_path / "missing.csv")]) == 2
        assert main(args) == 1

    def test_empty_data(self, tmp_path, workspace):
        (tmp_path / "e.csv").write_text("ZONEID,TIMESTAMP,TARGETVAR,U10,V10,U100,V100\n")
        assert main(["train", "--config", workspace["config"], "--data", str(tmp_path / "e.csv"),
                     "--out", str(tmp_path)]) == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_exits_3(self, tmp_path, workspace):
        config = write_config(tmp_path / "c.json", train={"learning_rate": 1e300, "clip_norm": 1e300})
        assert main(["train", "--config", config, "--data", workspace["data"], "--out", str(tmp_path)]) == 3

    def test_same_seed_idempotent(self, tmp_path, workspace):
        out = tmp_path / "again"
        assert main(["train", "--config", workspace["config"], "--data", workspace["data"], "--out", str(out)]) == 0
        assert (out / "checkpoint.json").read_bytes() == open(workspace["checkpoint"], "rb").read()
        assert (out / "history.csv").read_bytes() == (workspace["run"] / "history.csv").read_bytes()


class TestEvaluate:
    def test_checkpoint_report(self, tmp_path, workspace):
        assert main(["evaluate", "--checkpoint", workspace["checkpoint"], "--data", workspace["data"],
                     "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "report.csv")
        assert rows[0] == ["Model", "MAE", "RMSE", "AR", "PP", "CRPS", "PS"]
        assert rows[1][0] == "stdhl" and all(rows[1][1:])
        assert len(read_csv(tmp_path / "horizon_mae.csv")) == 1 + SMALL_MODEL["horizon"]
        first = (tmp_path / "report.json").read_bytes()
        assert main(["evaluate", "--checkpoint", workspace["checkpoint"], "--data", workspace["data"],
                     "--out", str(tmp_path)]) == 0
        assert (tmp_path / "report.json").read_bytes() == first

    @pytest.mark.parametrize("name", ["persistence", "mechanism"])
    def test_builtin(self, name, tmp_path, workspace):
        assert main(["evaluate", "--checkpoint", f"builtin:{name}", "--data", workspace["data"],
                     "--config", workspace["config"], "--out", str(tmp_path)]) == 0
        row = read_csv(tmp_path / "report.csv")[1]
        assert row[0] == name and row[5] == "" and row[6] == ""

    def test_unknown_builtin(self, tmp_path, workspace):
        assert main(["evaluate", "--checkpoint", "builtin:oracle", "--data", workspace["data"],
                     "--out", str(tmp_path)]) == 1

    def test_corrupt_checkpoint(self, tmp_path, workspace):
        (tmp_path / "ck.json").write_text("{not json")
        assert main(["evaluate", "--checkpoint", str(tmp_path / "ck.json"), "--data", workspace["data"],
                     "--out", str(tmp_path)]) == 2

    def test_farm_mismatch(self, tmp_path, workspace):
        other = tmp_path / "other.csv"
        main(["synth", "--farms", "3", "--length", "300", "--out", str(other)])
        assert main(["evaluate", "--checkpoint", workspace["checkpoint"], "--data", str(other),
                     "--out", str(tmp_path)]) == 2


class TestForecast:
    def test_fan_rows(self, tmp_path, workspace):
        out = tmp_path / "f.csv"
        assert main(["forecast", "--checkpoint", workspace["checkpoint"], "--data", workspace["data"],
                     "--origin", "0", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == ["time", "farm", "level", "value"]
        body = rows[1:]
        assert len(body) == SMALL_MODEL["horizon"] * 4 * len(SMALL_MODEL["levels"])
        for k in range(0, len(body), 3):
            group = body[k : k + 3]
            assert len({(r[0], r[1]) for r in group}) == 1
            assert [float(r[3]) for r in group] == sorted(float(r[3]) for r in group)

    def test_origin_by_timestamp(self, tmp_path, workspace):
        out = tmp_path / "f.csv"
        main(["forecast", "--checkpoint", workspace["checkpoint"], "--data", workspace["data"],
              "--origin", "0", "--out", str(out)])
        first_time = read_csv(out)[1][0]
        stamp = np.datetime64(f"{first_time[:4]}-{first_time[4:6]}-{first_time[6:8]}T{first_time[9:]}") - np.timedelta64(1, "h")
        text = str(stamp).replace("-", "").replace("T", " ")[:14]
        again = tmp_path / "g.csv"
        assert main(["forecast", "--checkpoint", workspace["checkpoint"], "--data", workspace["data"],
                     "--origin", text, "--out", str(again)]) == 0
        assert again.read_bytes() == out.read_bytes()

    @pytest.mark.parametrize("origin,code", [("19990101 00:00", 2), ("tomorrow", 1), ("100000", 1)])
    def test_bad_origin(self, origin, code, tmp_path, workspace):
        assert main(["forecast", "--checkpoint", workspace["checkpoint"], "--data", workspace["data"],
                     "--origin", origin, "--out", str(tmp_path / "f.csv")]) == code


class TestTransferMatrix:
    def _matrix(self, tmp_path, workspace, checkpoint, *extra):
        out = tmp_path / "m.csv"
        code = main(["transfer-matrix", "--checkpoint", checkpoint, "--data", workspace["data"], "--origin", "0",
                     "--out", str(out), *extra])
        if code:
            return code, None
        rows = read_csv(out)
        assert rows[0] == ["1", "2", "3", "4"]
        return code, np.array(rows[1:], dtype=float)

    def test_stdhl_row_stochastic_and_asymmetric(self, tmp_path, workspace):
        for encoder in ("measured", "nwp"):
            code, m = self._matrix(tmp_path, workspace, workspace["checkpoint"], "--encoder", encoder)
            assert code == 0 and m.shape == (4, 4)
            np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-9)
            assert np.abs(m - m.T).max() > 1e-6

    def test_stsgl_symmetric(self, tmp_path, workspace):
        out = tmp_path / "sg"
        main(["train", "--config", workspace["config"], "--model", "stsgl", "--data", workspace["data"],
              "--out", str(out)])
        code, m = self._matrix(tmp_path, workspace, str(out / "checkpoint.json"))
        assert code == 0
        np.testing.assert_allclose(m, m.T, atol=1e-12)

    def test_linear_rejected(self, tmp_path, workspace):
        out = tmp_path / "lin"
        main(["train", "--config", workspace["config"], "--model", "linear", "--data", workspace["data"],
              "--out", str(out)])
        code, _ = self._matrix(tmp_path, workspace, str(out / "checkpoint.json"))
        assert code == 1

    def test_block_out_of_range(self, tmp_path, workspace):
        code, _ = self._matrix(tmp_path, workspace, workspace["checkpoint"], "--block", "9")
        assert code == 1


class TestAblate:
    def test_value_validation(self, tmp_path, workspace):
        base = ["--config", workspace["config"], "--data", workspace["data"], "--out", str(tmp_path / "a.csv")]
        assert main(["ablate", "lookback", "--values", "0,3", *base]) == 1
        assert main(["ablate", "nwp-ext", "--values", "-1", *base]) == 1
        assert main(["ablate", "spatial", "--target", "9", *base]) == 1

    def test_nwp_extension_allows_zero(self, tmp_path, workspace):
        out = tmp_path / "n.csv"
        assert main(["ablate", "nwp-ext", "--values", "0,2", "--model", "linear", "--config", workspace["config"],
                     "--data", workspace["data"], "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == ["nwp_extension", "mae"] and [r[0] for r in rows[1:]] == ["0", "2"]

    def test_spatial_incremental(self, tmp_path, workspace):
        out = tmp_path / "s.csv"
        assert main(["ablate", "spatial", "--target", "2", "--order", "4,1", "--config", workspace["config"],
                     "--data", workspace["data"], "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == ["n_farms", "added_farm", "target_mae"]
        assert [r[:2] for r in rows[1:]] == [["1", "2"], ["2", "4"], ["3", "1"]]

    def test_lookback_recovers_planted_memory(self, tmp_path):
        data = tmp_path / "m.csv"
        main(["synth", "--farms", "2", "--length", "1500", "--seed", "0", "--memory-lag", "12", "--out", str(data)])
        config = write_config(tmp_path / "c.json", model={"nwp_extension": 0},
                              train={"max_epochs": 60, "patience": 10, "learning_rate": 3e-3})
        out = tmp_path / "l.csv"
        assert main(["ablate", "lookback", "--values", "3,12", "--model", "linear", "--config", config,
                     "--data", str(data), "--out", str(out)]) == 0
        scores = {r[0]: float(r[1]) for r in read_csv(out)[1:]}
        assert scores["12"] <= scores["3"]


def test_entry_point_usage_exit_code():
    proc = subprocess.run([sys.executable, "-m", "stdhl.cli", "train", "--bogus"], capture_output=True, text=True)
    assert proc.returncode == 1 and "usage" in proc.stderr
