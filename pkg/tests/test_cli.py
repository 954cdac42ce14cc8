import csv
import json

import numpy as np
import pytest

from hanet.cli import main
from hanet.imageio import read_pbm, read_pgm

SMALL = {"task": "disks", "epochs": 2, "seed": 1, "n_train": 4, "n_test": 3, "size": 16, "width": 2,
         "ha": {"delta": 0.5, "n": 2, "c": 4}}


def write_config(tmp_path, name="cfg.json", **overrides):
    cfg = {**SMALL, "output_dir": str(tmp_path / "run"), **overrides}
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path, cfg


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("trained")
    path, cfg = write_config(tmp)
    assert main(["train", str(path), "--quiet"]) == 0
    return tmp, cfg


def test_train_writes_outputs(trained):
    tmp, cfg = trained
    run = tmp / "run"
    assert {p.name for p in run.iterdir()} >= {"checkpoint.hant", "metrics.csv", "run.json"}
    rows = read_rows(run / "metrics.csv")
    assert [r["epoch"] for r in rows] == ["1", "2"]
    assert list(rows[0]) == ["epoch", "loss", "mdice"]
    echo = json.loads((run / "run.json").read_text())
    assert echo["config"]["ha"] == {"delta": 0.5, "n": 2, "mode": "masked", "c": 4}
    assert echo["config"]["lr"] == 0.01


def test_train_is_byte_reproducible(trained, tmp_path):
    tmp, _ = trained
    path, _ = write_config(tmp_path)
    assert main(["train", str(path), "--quiet"]) == 0
    for name in ("metrics.csv", "checkpoint.hant"):
        assert (tmp_path / "run" / name).read_bytes() == (tmp / "run" / name).read_bytes()


@pytest.mark.parametrize("overrides, fragment", [
    ({"epochs": 0}, "epochs"),
    ({"ha": {"delta": 1.5}}, "ha.delta"),
    ({"ha": {"detla": 0.5}}, "detla"),
    ({"learning_rate": 0.1}, "learning_rate"),
    ({"data": {"contrst": 0.2}}, "contrst"),
    ({"size": 18}, "multiple of 4"),
    ({"epochs": "3"}, "epochs"),
    ({"export_attention": {"sample_seed": 0, "pixel": [99, 0]}}, "pixel"),
])
def test_train_rejects_bad_config(tmp_path, capsys, overrides, fragment):
    path, _ = write_config(tmp_path, **overrides)
    assert main(["train", str(path)]) == 2
    assert fragment in capsys.readouterr().err
    assert not (tmp_path / "run").exists()


def test_train_missing_config(tmp_path):
    assert main(["train", str(tmp_path / "absent.json")]) == 2


def test_train_divergence_exit_code(tmp_path):
    path, _ = write_config(tmp_path, lr=1e30, clip_norm=None, epochs=3)
    assert main(["train", str(path), "--quiet"]) == 3


def test_eval_reproduces_trainer_score(trained, tmp_path, capsys):
    tmp, _ = trained
    ckpt = str(tmp / "run" / "checkpoint.hant")
    best = json.loads((tmp / "run" / "run.json").read_text())["best_mdice"]
    assert main(["eval", ckpt, "--task", "disks", "--out", str(tmp_path / "a")]) == 0
    assert "mdice" in capsys.readouterr().out
    rows = read_rows(tmp_path / "a" / "eval.csv")
    assert rows[-1]["seed"] == "mean" and len(rows) == 4
    assert abs(float(rows[-1]["mdice"]) - best) <= 1e-12
    assert set(rows[0]) == {"seed", "mdice", "dice_disc", "dice_cup", "ecdr"}
    test_seeds = json.loads((tmp / "run" / "run.json").read_text())["test_seeds"]
    explicit = f"{test_seeds[0]}:{test_seeds[1]}"
    assert main(["eval", ckpt, "--task", "disks", "--seeds", explicit, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "eval.csv").read_bytes() == (tmp_path / "b" / "eval.csv").read_bytes()


def test_eval_errors(trained, tmp_path):
    tmp, _ = trained
    ckpt = str(tmp / "run" / "checkpoint.hant")
    assert main(["eval", ckpt, "--task", "disks", "--seeds", "5:5", "--out", str(tmp_path)]) == 2
    assert main(["eval", ckpt, "--task", "blobs", "--out", str(tmp_path)]) == 2
    assert main(["eval", str(tmp_path / "none.hant"), "--task", "disks"]) == 2
    (tmp_path / "junk.hant").write_bytes(b"junk")
    assert main(["eval", str(tmp_path / "junk.hant"), "--task", "disks"]) == 2


def test_sweep_single_cell(tmp_path):
    path, _ = write_config(tmp_path, epochs=1)
    assert main(["sweep", str(path), "--deltas", "0", "--ns", "1", "--out", str(tmp_path / "s")]) == 0
    rows = read_rows(tmp_path / "s" / "sweep.csv")
    assert len(rows) == 1
    assert list(rows[0]) == ["delta", "n", "mdice", "edges_b1", "status"]
    assert rows[0]["status"] == "ok" and int(rows[0]["edges_b1"]) == 16 ** 2


def test_sweep_grid_and_edge_monotonicity(tmp_path):
    path, _ = write_config(tmp_path, epochs=1, n_train=2, n_test=1)
    out = tmp_path / "s"
    assert main(["sweep", str(path), "--deltas", "0.3,0.5,0.7", "--ns", "1,2", "--out", str(out)]) == 0
    rows = read_rows(out / "sweep.csv")
    assert len(rows) == 6 and all(r["status"] == "ok" for r in rows)
    edges = {(float(r["delta"]), int(r["n"])): int(r["edges_b1"]) for r in rows}
    assert edges[(0.7, 1)] <= edges[(0.5, 1)] <= edges[(0.3, 1)]
    assert (out / "delta0.3_n2" / "checkpoint.hant").exists()


def test_sweep_records_failed_cells(tmp_path):
    path, _ = write_config(tmp_path, epochs=1, n_train=2, n_test=1)
    assert main(["sweep", str(path), "--deltas", "0.5,2", "--ns", "1", "--out", str(tmp_path / "s")]) == 0
    rows = read_rows(tmp_path / "s" / "sweep.csv")
    assert [r["status"] for r in rows][0] == "ok"
    assert "ConfigError" in rows[1]["status"] and rows[1]["mdice"] == ""


def test_export_attention(trained, tmp_path):
    tmp, _ = trained
    ckpt = str(tmp / "run" / "checkpoint.hant")
    out = tmp_path / "full"
    assert main(["export-attention", ckpt, "--sample-seed", "3", "--pixel", "5,9",
                 "--delta", "0", "--n", "1", "--out", str(out)]) == 0
    assert read_pbm(out / "graph_b1.pbm").all()
    img, maxval = read_pgm(out / "attn_h1.pgm")
    assert img.shape == (4, 4) and maxval == 255 and img.max() == 255

    out = tmp_path / "levels"
    assert main(["export-attention", ckpt, "--sample-seed", "3", "--pixel", "5,9", "--out", str(out)]) == 0
    graph = read_pbm(out / "graph_b1.pbm")
    query = (5 * 4 // 16) * 4 + 9 * 4 // 16
    for h in (1, 2):
        img, _ = read_pgm(out / f"attn_h{h}.pgm")
        assert img.shape == (4, 4)
    # masked entries are exactly zero
    img1, _ = read_pgm(out / "attn_h1.pgm")
    assert np.all(img1.ravel()[~graph[query]] == 0)


def test_export_self_loop_only(trained, tmp_path):
    tmp, _ = trained
    ckpt = str(tmp / "run" / "checkpoint.hant")
    out = tmp_path / "d1"
    for r in range(0, 16, 4):
        for c in range(0, 16, 4):
            assert main(["export-attention", ckpt, "--sample-seed", "3", "--pixel", f"{r},{c}",
                         "--delta", "1", "--n", "1", "--out", str(out)]) == 0
            graph = read_pbm(out / "graph_b1.pbm")
            query = (r // 4) * 4 + c // 4
            if graph[query].sum() == 1:  # the global maximum is not in this row
                img, _ = read_pgm(out / "attn_h1.pgm")
                assert np.flatnonzero(img).tolist() == [query]
                return
    pytest.fail("every row held the global maximum")


def test_export_pixel_out_of_range(trained, tmp_path):
    tmp, _ = trained
    ckpt = str(tmp / "run" / "checkpoint.hant")
    assert main(["export-attention", ckpt, "--sample-seed", "0", "--pixel", "16,0", "--out", str(tmp_path)]) == 2
    assert main(["export-attention", ckpt, "--sample-seed", "0", "--pixel", "x", "--out", str(tmp_path)]) == 2


def test_gen_data(tmp_path):
    assert main(["gen-data", "--task", "vessels", "--seeds", "0:3", "--size", "32",
                 "--param", "thickness=2", "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(
        [f"img_{s}.pgm" for s in range(3)] + [f"lbl_{s}.pgm" for s in range(3)])
    lbl, maxval = read_pgm(tmp_path / "lbl_0.pgm")
    assert maxval == 1 and lbl.shape == (32, 32)
    assert main(["gen-data", "--task", "vessels", "--seeds", "3:1", "--out", str(tmp_path)]) == 2
    assert main(["gen-data", "--task", "vessels", "--seeds", "0:1", "--param", "bogus=1"]) == 2
    assert main(["gen-data", "--task", "cats", "--seeds", "0:1"]) == 2


def test_usage_errors():
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
