import json
from dataclasses import replace

import numpy as np
import pytest

from lidarbeam.cli import main
from lidarbeam.config import RunConfig, load_config
from lidarbeam.dataset import DatasetError, DatasetWriter, read_dataset, read_manifest, split
from lidarbeam.features import voxelize
from lidarbeam.learn import min_dist_to_line
from lidarbeam.pipeline import (DATASET, FEATURES, PipelineError, evaluate_models, featurize,
                                generate, run_pipeline, train_models)

TINY = {"episodes": 30, "codebook": {"design_episodes": 20, "min_count": 0},
        "train": {"epochs": 1}}


def tiny(**kw):
    return RunConfig().replace(**TINY).replace(**kw)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    run_pipeline(tiny(), out, gate=True)
    return out


# ---------------------------------------------------------------------------
# config


def test_config_validation_names_fields(tmp_path):
    with pytest.raises(ValueError, match="lidar.sigma"):
        RunConfig().replace(lidar={"sigma": 1})
    with pytest.raises(ValueError, match="'features'"):
        RunConfig().replace(features={"d_max": -1})
    with pytest.raises(ValueError, match="split_fraction"):
        RunConfig(split_fraction=1.0)
    (tmp_path / "c.json").write_text(json.dumps({"episodes": 7, "trace": {"max_order": 1}}))
    cfg = load_config(tmp_path / "c.json", seed=3)
    assert (cfg.episodes, cfg.trace.max_order, cfg.seed) == (7, 1, 3)


def test_config_hash_tracks_fields():
    a = RunConfig()
    assert a.hash() == RunConfig.from_dict(a.to_dict()).hash()
    assert a.hash() != a.replace(seed=1).hash()
    assert a.hash() != a.replace(features={"d_max": 20.0}).hash()
    assert a.hash() != a.replace(noise="noisy").hash()


# ---------------------------------------------------------------------------
# dataset and split


def test_empty_dataset(tmp_path):
    path = generate(tiny(episodes=0), tmp_path)
    assert read_dataset(path) == []
    m = read_manifest(path)
    assert m["episodes"] == 0 and sum(m["counts"].values()) == 0


def test_generate_is_byte_identical(tmp_path):
    cfg = tiny(episodes=6)
    a, b = generate(cfg, tmp_path / "a"), generate(cfg, tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a" / "codebook_tx.txt").read_bytes() == (tmp_path / "b" / "codebook_tx.txt").read_bytes()
    c = generate(tiny(episodes=6, seed=1), tmp_path / "c")
    assert c.read_bytes() != a.read_bytes()


def test_records_revalidate_on_load(tmp_path):
    path = generate(tiny(episodes=6), tmp_path)
    recs = read_dataset(path)
    counts = read_manifest(path)["counts"]
    assert sum(counts.values()) == 6
    assert all(r.los == (r.state == "LOS") for r in recs)
    bad = next(r for r in recs if not r.outage)
    label = bad.label.copy()
    label[np.argmax(label)] -= 1e-3
    with DatasetWriter(tmp_path / "bad.lbds") as w:
        w.write(replace(bad, label=label))
    with pytest.raises(DatasetError, match="make_label"):
        read_dataset(tmp_path / "bad.lbds")
    with DatasetWriter(tmp_path / "flag.lbds") as w:
        w.write(replace(bad, los=not bad.los))
    with pytest.raises(DatasetError, match="LOS flag"):
        read_dataset(tmp_path / "flag.lbds")


def test_truncated_file_is_rejected(tmp_path):
    path = generate(tiny(episodes=2), tmp_path)
    data = path.read_bytes()
    (tmp_path / "cut.lbds").write_bytes(data[:-10])
    with pytest.raises(DatasetError):
        read_dataset(tmp_path / "cut.lbds")
    (tmp_path / "junk.lbds").write_bytes(b"not a dataset")
    with pytest.raises(DatasetError):
        read_dataset(tmp_path / "junk.lbds")


class _Rec:
    def __init__(self, los, outage=False):
        self.los, self.outage = los, outage


def test_split_examples():
    recs = [_Rec(i % 2 == 0) for i in range(10)]
    tr, te = split(recs, 0.8, 0)
    assert (len(tr), len(te)) == (8, 2)
    assert not set(tr) & set(te) and set(tr) | set(te) == set(range(10))
    assert split(recs, 0.8, 0) == (tr, te)


@pytest.mark.parametrize("n_los,n_nlos", [(7, 13), (50, 9), (33, 33), (2, 100)])
def test_split_stratified(n_los, n_nlos):
    recs = [_Rec(True)] * n_los + [_Rec(False)] * n_nlos + [_Rec(False, outage=True)] * 3
    tr, te = split(recs, 0.8, 5)
    assert len(tr) == round(0.8 * (n_los + n_nlos))
    assert all(i < n_los + n_nlos for i in tr + te)
    for lo, hi in ((0, n_los), (n_los, n_los + n_nlos)):
        k = sum(lo <= i < hi for i in tr)
        assert abs(k - 0.8 * (hi - lo)) <= 1


def test_split_too_small():
    with pytest.raises(ValueError, match="too small"):
        split([_Rec(True), _Rec(False), _Rec(False)], 0.8, 0)
    with pytest.raises(ValueError):
        split([_Rec(True)] * 4, 1.0, 0)


# ---------------------------------------------------------------------------
# noise provenance


def test_noise_changes_only_sigmas(tmp_path):
    a = read_manifest(generate(tiny(episodes=5), tmp_path / "a"))
    b = read_manifest(generate(tiny(episodes=5, noise="noisy"), tmp_path / "b"))
    assert (a["sigma_G"], a["sigma_L"]) == (0.0, 0.0)
    assert (b["sigma_G"], b["sigma_L"]) == (3.0, 0.1)
    differ = {k for k in a if a[k] != b[k]}
    assert differ == {"sigma_G", "sigma_L", "config", "config_hash"}
    assert {k for k in a["config"] if a["config"][k] != b["config"][k]} == {"noise"}
    ra = read_dataset(tmp_path / "a" / DATASET)
    rb = read_dataset(tmp_path / "b" / DATASET)
    for x, y in zip(ra, rb):
        # same scenes and channels; only the cloud and the GNSS estimate move
        assert np.array_equal(x.y, y.y) and x.state == y.state
        assert np.array_equal(x.ego_estimate, x.scene["ego_position"])
        assert not np.array_equal(y.ego_estimate, y.scene["ego_position"])


def test_featurize_shifts_cloud_with_gnss_error(tmp_path):
    cfg = tiny(episodes=3, noise="noisy")
    path = generate(cfg, tmp_path)
    feats = read_dataset(featurize(path, cfg))
    for rec, f in zip(read_dataset(path), feats):
        assert len(f.cloud) == 0 and np.array_equal(f.y, rec.y)
        ego, est = np.array(rec.scene["ego_position"]), rec.ego_estimate
        # features equal those of the cloud rigidly shifted by the GNSS error
        shifted = rec.cloud.astype(float) + (est - ego)
        grid = voxelize(shifted, cfg.zone, est, replace(cfg.features, ground_z_min=-np.inf,
                                                         d_max=np.inf), rec.scene["bs_position"])
        assert np.array_equal(f.histogram(cfg.features.shape).counts, grid.counts)
        assert f.dhat == min_dist_to_line(shifted, rec.scene["bs_position"], est)


# ---------------------------------------------------------------------------
# end-to-end


def test_pipeline_outputs(run_dir):
    summary = json.loads((run_dir / "summary.json").read_text())
    for name in ("detector.ckpt", "selector_los.ckpt", "selector_nlos.ckpt", "stump.json",
                 "history_detector.csv", "report_los.json", "report_nlos.csv", "report_gated.json"):
        assert (run_dir / name).exists(), name
    assert summary["n_train"] + summary["n_test"] + summary["n_outage"] == 30
    assert 0 <= summary["detector_error"] <= 1 and 0 <= summary["stump_error"] <= 1
    n = summary["num_classes"]
    for rep in summary["reports"].values():
        assert rep["rt"][str(n)] == 1.0 and rep["accuracy"][str(n)] == 1.0


def test_rerun_from_persisted_dataset_is_identical(run_dir, tmp_path):
    before = {p.name: p.read_bytes() for p in run_dir.glob("report_*")}
    stamp = (run_dir / DATASET).stat().st_mtime_ns
    summary = run_pipeline(tiny(), run_dir, gate=True)
    assert summary["regenerated"] is False
    assert (run_dir / DATASET).stat().st_mtime_ns == stamp
    after = {p.name: p.read_bytes() for p in run_dir.glob("report_*")}
    assert before == after


def test_training_is_byte_reproducible(run_dir, tmp_path):
    train_models(run_dir / FEATURES, tiny(), tmp_path, subsets=("all",))
    for name in ("detector.ckpt", "stump.json", "history_detector.csv"):
        assert (tmp_path / name).read_bytes() == (run_dir / name).read_bytes()


def test_empty_test_split(run_dir, monkeypatch):
    import lidarbeam.pipeline as pl
    monkeypatch.setattr(pl, "split", lambda recs, f, s: (list(range(len(recs))), []))
    with pytest.raises(PipelineError, match=r"\[evaluate\] empty test split"):
        evaluate_models(run_dir / FEATURES, tiny(), run_dir, out_dir=run_dir / "x")


def test_cli_report_and_errors(run_dir, capsys):
    assert main(["report", "--out", str(run_dir)]) == 0
    out = capsys.readouterr().out
    assert "LOS detection error" in out and "LOS/noise-free" in out
    assert main(["train", "--out", str(run_dir / "missing")]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_selftest(capsys):
    assert main(["selftest", "--instances", "50"]) == 0
    assert capsys.readouterr().out.count("PASS") == 4


def test_cli_generate_and_featurize(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(TINY))
    out = tmp_path / "o"
    assert main(["generate", "--config", str(cfg), "--episodes", "3", "--out", str(out)]) == 0
    assert read_manifest(out / DATASET)["episodes"] == 3
    assert main(["featurize", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(read_dataset(out / FEATURES)) == 3
