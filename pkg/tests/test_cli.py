"""Command-line wiring: exit codes, file outputs, end-to-end loop."""

import json
import subprocess
import sys

import numpy as np
import pytest

from arhmm import serialize
from arhmm.basis import LinearBasis
from arhmm.cartesian import CartesianDynamics
from arhmm.cli import main
from arhmm.composite import cartesian_layout
from arhmm.core import GaussianNoise, ModelParams
from arhmm.data import read_modes_csv

RUN_CONFIG = {
    "layout": {"blocks": [{"name": "y", "kind": "cartesian", "dim": 2}]},
    "S": 2,
    "basis": {"y": {"kind": "poly", "d": 2, "k": 3}},
    "em": {"tol": 1e-4, "max_iters": 40, "seed": 0, "restarts": 2},
}


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One simulate + train pass shared by the pipeline tests."""
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    assert main(["simulate", "--preset", "validation", "--seed", "3",
                 "--out", str(data), "--sequences", "8", "--length", "50"]) == 0
    config = root / "run.json"
    config.write_text(json.dumps(RUN_CONFIG))
    model = root / "model.json"
    trace = root / "trace.csv"
    assert main(["train", "--config", str(config), "--data", str(data),
                 "--out", str(model), "--trace", str(trace)]) == 0
    return {"root": root, "data": data, "config": config,
            "model": model, "trace": trace}


# ------------------------------------------------------------------ simulate


def test_simulate_writes_dataset_and_manifest(tmp_path, capsys):
    out = tmp_path / "ds"
    rc = main(["simulate", "--preset", "validation", "--seed", "0",
               "--out", str(out), "--sequences", "3", "--length", "20"])
    assert rc == 0
    assert "wrote 3 sequences" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["preset"] == "validation"
    assert manifest["seed"] == 0
    assert manifest["n_sequences"] == 3
    assert manifest["length"] == 20
    assert manifest["layout"]["blocks"] == [
        {"name": "y", "kind": "cartesian", "dim": 2}]
    assert len(manifest["sequences"]) == 3
    for entry in manifest["sequences"]:
        rows = (out / entry["data"]).read_text().splitlines()
        assert rows[0] == "y_0,y_1"
        assert len(rows) == 22  # header + starting row + 20 steps
        modes = read_modes_csv(out / entry["modes"])
        assert modes.size == 20
        assert set(np.unique(modes)) <= {0, 1}


def test_simulate_is_byte_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["simulate", "--preset", "sweep-d1", "--seed", "7",
                     "--out", str(out), "--sequences", "3",
                     "--length", "25"]) == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir())
    assert files == sorted(p.name for p in outs[1].iterdir())
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_module_entry_point(tmp_path):
    out = tmp_path / "ds"
    proc = subprocess.run(
        [sys.executable, "-m", "arhmm", "simulate", "--preset", "quat",
         "--seed", "1", "--out", str(out), "--sequences", "1",
         "--length", "5"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (out / "manifest.json").exists()


# ------------------------------------------------------------- training loop


def test_train_writes_model_and_monotone_trace(trained):
    model = serialize.load_model(trained["model"])
    assert model.n_modes == 2
    assert model.standardization is not None
    lines = trained["trace"].read_text().splitlines()
    assert lines[0] == "iter,loglik"
    trace = np.array([float(line.split(",")[1]) for line in lines[1:]])
    assert trace.size >= 2
    assert np.all(np.diff(trace) > -1e-8)


def test_segment_score_report_round_trip(trained, tmp_path, capsys):
    data = trained["data"] / "seq_000.csv"
    truth = trained["data"] / "seq_000_modes.csv"
    pred = tmp_path / "pred.csv"
    rc = main(["segment", "--model", str(trained["model"]),
               "--data", str(data), "--out", str(pred)])
    assert rc == 0
    capsys.readouterr()
    path = read_modes_csv(pred)
    assert path.size == 50
    assert np.unique(path).size >= 2  # both regimes show up in the labeling

    rc = main(["score", "--pred", str(pred), "--truth", str(truth),
               "--data", str(data), "--model", str(trained["model"])])
    assert rc == 0
    scores = json.loads(capsys.readouterr().out)
    assert set(scores) == {"seg_score", "silhouette", "frame_accuracy"}
    assert 0.0 <= scores["seg_score"] <= 1.0
    assert 0.0 <= scores["frame_accuracy"] <= 1.0
    assert -1.0 <= scores["silhouette"] <= 1.0
    assert scores["seg_score"] > 0.5  # the fitted labeling tracks the truth

    figures = tmp_path / "figs"
    rc = main(["report", "--data", str(data), "--pred", str(pred),
               "--truth", str(truth), "--model", str(trained["model"]),
               "--trace", str(trained["trace"]), "--out", str(figures)])
    assert rc == 0
    for name in ("segmentation.png", "loglik_trace.png"):
        blob = (figures / name).read_bytes()
        assert blob[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(blob) > 1000


def test_score_without_model_uses_raw_rows(trained, capsys):
    truth = trained["data"] / "seq_001_modes.csv"
    data = trained["data"] / "seq_001.csv"
    rc = main(["score", "--pred", str(truth), "--truth", str(truth),
               "--data", str(data)])
    assert rc == 0
    scores = json.loads(capsys.readouterr().out)
    assert scores["seg_score"] == 1.0
    assert scores["frame_accuracy"] == 1.0
    assert scores["silhouette"] is not None


def test_score_without_data_skips_silhouette(trained, capsys):
    truth = trained["data"] / "seq_002_modes.csv"
    rc = main(["score", "--pred", str(truth), "--truth", str(truth)])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["silhouette"] is None


# ------------------------------------------------------------------ failures


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--preset", "bogus", "--seed", "0", "--out", "x"])
    assert exc.value.code == 2


def test_unreadable_config_exits_2(tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text("{not json")
    rc = main(["train", "--config", str(config), "--data", str(tmp_path),
               "--out", str(tmp_path / "m.json")])
    assert rc == 2
    assert "not valid JSON" in capsys.readouterr().err


def test_bad_mode_count_exits_2(tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({**RUN_CONFIG, "S": 0}))
    rc = main(["train", "--config", str(config), "--data", str(tmp_path),
               "--out", str(tmp_path / "m.json")])
    assert rc == 2
    assert "bad run config" in capsys.readouterr().err


def test_empty_data_directory_exits_3(tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps(RUN_CONFIG))
    empty = tmp_path / "data"
    empty.mkdir()
    rc = main(["train", "--config", str(config), "--data", str(empty),
               "--out", str(tmp_path / "m.json")])
    assert rc == 3
    assert "no sequence CSVs" in capsys.readouterr().err


def test_segment_layout_mismatch_exits_3(trained, tmp_path, capsys):
    wrong = tmp_path / "wide.csv"
    wrong.write_text("y_0,y_1,y_2\n0,0,0\n1,1,1\n")
    rc = main(["segment", "--model", str(trained["model"]),
               "--data", str(wrong), "--out", str(tmp_path / "p.csv")])
    assert rc == 3
    assert "does not match the layout" in capsys.readouterr().err


def test_score_length_mismatch_exits_3(trained, capsys):
    rc = main(["score", "--pred", str(trained["data"] / "seq_000_modes.csv"),
               "--truth", str(trained["data"] / "seq_000_modes.csv"),
               "--data", str(trained["data"] / "seq_001.csv"),
               "--model", str(trained["model"])])
    assert rc == 0  # same-length paths, matching data
    capsys.readouterr()
    short = trained["root"] / "short.csv"
    lines = (trained["data"] / "seq_000_modes.csv").read_text().splitlines()
    short.write_text("\n".join(lines[:-10]) + "\n")
    rc = main(["score", "--pred", str(short),
               "--truth", str(trained["data"] / "seq_000_modes.csv")])
    assert rc == 3
    assert "differ in length" in capsys.readouterr().err


def test_indefinite_covariance_exits_4(tmp_path, capsys):
    layout = cartesian_layout(2)
    noise = GaussianNoise(np.eye(2))
    dyn = CartesianDynamics(LinearBasis(2), np.zeros((2, 3)), noise)
    model = ModelParams(init=np.array([1.0]), trans=np.array([[1.0]]),
                        emissions=(dyn,), layout=layout)
    path = tmp_path / "model.json"
    serialize.save_model(model, path)
    doc = json.loads(path.read_text())
    doc["emissions"][0]["sigma"] = [[1.0, 2.0], [2.0, 1.0]]
    path.write_text(json.dumps(doc))
    data = tmp_path / "seq.csv"
    data.write_text("y_0,y_1\n0,0\n1,1\n")
    rc = main(["segment", "--model", str(path), "--data", str(data),
               "--out", str(tmp_path / "p.csv")])
    assert rc == 4
    assert "covariance" in capsys.readouterr().err
