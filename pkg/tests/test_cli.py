import json

import numpy as np

from deepdeff.cli import main
from deepdeff.data import write_canonical
from deepdeff.numerics import SeededRng
from helpers import make_series


def entity_csv(tmp_path, name="house1", n_days=40, interval=60, seed=2):
    s = 1440 // interval
    n = n_days * s
    slot = np.arange(n) % s
    noise = SeededRng(seed).uniform(-0.1, 0.1, size=n)
    values = 2.0 + np.sin(2 * np.pi * slot / s) + noise
    series = make_series(n, interval=interval, values=values, start="2013-06-01T00:00")
    path = tmp_path / f"{name}.csv"
    write_canonical(series, path)
    return path


def write_config(tmp_path, files, **extra):
    raw = {
        "dataset": "canonical",
        "files": {k: str(v) for k, v in files.items()},
        "methods": ["GRU"],
        "timesteps": [2],
        "kind": "both",
        "seed": 5,
        "hidden_size": 4,
        "train": {"epochs": 2, "patience": None},
        "split": {"mode": "month-wise"},
        "save_models": True,
    }
    raw.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path


def test_ingest_run_report_predict_round_trip(tmp_path, capsys):
    data = entity_csv(tmp_path)
    config = write_config(tmp_path, {"house1": data})
    out = tmp_path / "out"

    assert main(["run", "--config", str(config), "--out", str(out)]) == 0
    assert (out / "results.csv").exists()
    assert (out / "results.json").exists()
    assert (out / "weights_house1_GRU_K2_deepdeff.npz").exists()

    assert main(["report", "--results", str(out / "results.json"), "--format", "table"]) == 0
    table_text = capsys.readouterr().out
    assert "Method" in table_text and "DeepDeFF" in table_text and "GRU" in table_text

    assert (
        main(
            [
                "predict",
                "--weights", str(out / "weights_house1_GRU_K2_deepdeff.npz"),
                "--data", str(data),
                "--entity", "house1",
                "--out", str(out),
            ]
        )
        == 0
    )
    pred_path = out / "predictions_house1.csv"
    assert pred_path.exists()
    assert pred_path.read_text().splitlines()[0] == "timestamp,actual,predicted"


def test_ingest_writes_cache(tmp_path, capsys):
    data = entity_csv(tmp_path, name="h2")
    config = write_config(tmp_path, {"h2": data})
    cache_dir = tmp_path / "cache"
    assert main(["ingest", "--config", str(config), "--out", str(cache_dir)]) == 0
    assert (cache_dir / "cache_h2.csv").exists()


def test_run_table_format(tmp_path, capsys):
    data = entity_csv(tmp_path, name="h3")
    config = write_config(tmp_path, {"h3": data})
    out = tmp_path / "out3"
    assert main(["run", "--config", str(config), "--out", str(out),
                 "--format", "table", "--format", "csv"]) == 0
    printed = capsys.readouterr().out
    assert "Time-steps" in printed
    assert (out / "results.txt").exists()
    assert (out / "results.csv").exists()


def test_bad_config_is_reported(tmp_path, capsys):
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"dataset": "canonical", "files": {}}))
    assert main(["run", "--config", str(config)]) == 2
    assert "error:" in capsys.readouterr().err
