import csv
import json
import os

import numpy as np
import pytest

import cogntke as ck
from cogntke.cli import main
from cogntke.evaluation import evaluate
from cogntke.training import TrainConfig, load_checkpoint, train
from conftest import random_tiny_tkg, write_dataset

TINY = ["--embed-dim", "8", "--time-dim", "4", "--layers", "2", "--window", "4",
        "--epochs", "1", "--batch-size", "16"]


@pytest.fixture
def dataset_dir(tmp_path, rng):
    tr, va, te, ne, nr = random_tiny_tkg(rng, num_entities=12, num_relations=3,
                                         num_snapshots=12, n_facts=90)
    return write_dataset(tmp_path / "toy", tr, va, te, ne, nr,
                         entity_names=[f"e{i}" for i in range(ne)],
                         relation_names=[f"r{i}" for i in range(nr)])


def test_train_then_eval(dataset_dir, tmp_path, capsys):
    ckpt = str(tmp_path / "ckpt")
    out = str(tmp_path / "train.json")
    code = main(["train", "--dataset-dir", dataset_dir, "--checkpoint", ckpt,
                 "--out", out, "--seed", "3", *TINY])
    assert code == 0
    payload = json.loads(open(out).read())
    assert payload["config"]["embed_dim"] == 8
    assert len(payload["epoch_losses"]) == 1

    metrics_out = str(tmp_path / "metrics.json")
    code = main(["eval", "--dataset-dir", dataset_dir, "--checkpoint", ckpt,
                 "--split", "valid", "--out", metrics_out])
    assert code == 0
    metrics = json.loads(open(metrics_out).read())
    assert metrics["split"] == "valid"
    assert 0 <= metrics["mrr"] <= 100
    assert metrics["config"]["embed_dim"] == 8  # effective config echoed
    assert "MRR" in capsys.readouterr().out


def test_eval_on_zero_epoch_checkpoint(dataset_dir, tmp_path):
    ckpt = str(tmp_path / "ck0")
    assert main(["train", "--dataset-dir", dataset_dir, "--checkpoint", ckpt,
                 "--epochs", "0", *TINY[:8]]) == 0
    out = str(tmp_path / "m.json")
    assert main(["eval", "--dataset-dir", dataset_dir, "--checkpoint", ckpt,
                 "--out", out]) == 0
    metrics = json.loads(open(out).read())
    assert metrics["n_queries"] > 0


def test_config_file_and_flag_precedence(dataset_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("embed_dim = 8\ntime-dim = 4\nlayers = 2\nwindow = 4\n"
                   "epochs = 1\nbatch_size = 16\nseed = 9\n# comment\n")
    ckpt = str(tmp_path / "ckcfg")
    out = str(tmp_path / "t.json")
    code = main(["train", "--dataset-dir", dataset_dir, "--config", str(cfg),
                 "--checkpoint", ckpt, "--window", "6", "--out", out])
    assert code == 0
    payload = json.loads(open(out).read())
    assert payload["config"]["embed_dim"] == 8      # from file
    assert payload["config"]["window"] == 6          # flag wins
    assert payload["config"]["seed"] == 9


def test_env_var_dataset_fallback(dataset_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("COGNTKE_DATA_DIR", dataset_dir)
    ckpt = str(tmp_path / "ckenv")
    assert main(["train", "--checkpoint", ckpt, "--epochs", "0", *TINY[:8]]) == 0


def test_missing_dataset_dir_is_diagnosed(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("COGNTKE_DATA_DIR", raising=False)
    code = main(["train", "--checkpoint", str(tmp_path / "x")])
    assert code == 1
    assert "dataset" in capsys.readouterr().err


def test_seed_reproducibility(dataset_dir, tmp_path):
    outs = []
    for run in ("a", "b"):
        ckpt = str(tmp_path / f"ck_{run}")
        out = str(tmp_path / f"m_{run}.json")
        assert main(["train", "--dataset-dir", dataset_dir, "--checkpoint", ckpt,
                     "--seed", "11", *TINY]) == 0
        assert main(["eval", "--dataset-dir", dataset_dir, "--checkpoint", ckpt,
                     "--split", "test", "--out", out]) == 0
        payload = json.loads(open(out).read())
        del payload["dataset_dir"]
        outs.append(json.dumps(payload, sort_keys=True))
    assert outs[0] == outs[1]


def test_zeroshot_command(dataset_dir, tmp_path, rng):
    tr, va, te, ne, _ = random_tiny_tkg(rng, num_entities=9, num_relations=3,
                                        num_snapshots=12, n_facts=70)
    target_dir = write_dataset(tmp_path / "target", tr, va, te, ne, 3,
                               relation_names=["r0", "r1", "zzz"])
    ckpt = str(tmp_path / "cksrc")
    assert main(["train", "--dataset-dir", dataset_dir, "--checkpoint", ckpt,
                 "--seed", "5", *TINY]) == 0
    out = str(tmp_path / "zs.json")
    assert main(["zeroshot", "--dataset-dir", target_dir, "--checkpoint", ckpt,
                 "--out", out]) == 0
    payload = json.loads(open(out).read())
    assert payload["unmatched_relations"] == [2]
    assert payload["n_skipped"] >= 0


def test_explain_command(dataset_dir, tmp_path):
    ckpt = str(tmp_path / "ckex")
    assert main(["train", "--dataset-dir", dataset_dir, "--checkpoint", ckpt,
                 "--seed", "7", *TINY]) == 0
    ds = ck.load_dataset(dataset_dir)
    e, r = int(ds.train[0, 0]), int(ds.train[0, 1])
    t = int(ds.test[0, 3])
    out = str(tmp_path / "why")
    assert main(["explain", "--dataset-dir", dataset_dir, "--checkpoint", ckpt,
                 "--query", f"{e},{r},{t}", "--threshold", "0.0",
                 "--out", out]) == 0
    payload = json.loads(open(out + ".json").read())
    assert payload["query"] == {"entity": e, "relation": r, "time": t}
    assert os.path.exists(out + ".dot")


def test_sweep_matches_individual_runs(dataset_dir, tmp_path):
    out_csv = str(tmp_path / "grid.csv")
    code = main(["sweep", "--dataset-dir", dataset_dir, "--split", "valid",
                 "--sweep-window", "4", "--sweep-layers", "1,2",
                 "--workdir", str(tmp_path), "--out", out_csv,
                 "--seed", "13", *TINY])
    assert code == 0
    rows = list(csv.DictReader(open(out_csv)))
    assert len(rows) == 2

    # composition oracle: each cell equals an independent train+eval
    ds = ck.augment_relations(ck.load_dataset(dataset_dir))
    for row in rows:
        config = TrainConfig(embed_dim=8, time_dim=4, window=4,
                             num_layers=int(row["layers"]), epochs=1,
                             batch_size=16, seed=13)
        result = train(ds, config, str(tmp_path / f"solo{row['layers']}"))
        model, _ = load_checkpoint(result.checkpoint_dir)
        report = evaluate(model, config, ds, split="valid")
        assert float(row["mrr"]) == pytest.approx(report.mrr, abs=1e-9)
        assert float(row["hits10"]) == pytest.approx(report.hits10, abs=1e-9)
