"""Paired LIDAR + channel simulation and the train/evaluate workflow.

Every stage reads and writes files in one output directory:

    codebook_tx.txt, codebook_rx.txt     pruned codebooks
    dataset.lbds (+ .manifest.json)      raw paired records
    features.lbds (+ .manifest.json)     records with histograms and d-hat, no cloud
    detector.ckpt, selector_los.ckpt, selector_nlos.ckpt, stump.json
    history_*.csv                        loss curves
    report_*.json / report_*.csv, summary.json
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .dataset import (DatasetRecord, DatasetWriter, iter_records, read_dataset, read_manifest,
                      split, state_counts, write_manifest)
from .evaluate import (evaluate_selector, frequency_ranking,
                       misclassification_error, overhead_factor)
from .features import apply_gnss_noise, encode_input, sensor_filter, voxelize
from .learn import (StumpModel, TrainConfig, build_network, default_spec, fit_stump,
                    load_checkpoint, min_dist_to_line, predict_los, rank_outputs,
                    save_checkpoint, stump_error, train, write_history)
from .lidar_sim import scan
from .mmwave import (Codebook, beam_powers_from_mpcs, best_pair, build_candidate_codebook,
                     make_label, prune_from_best_pairs)
from .raytrace import LinkState, link_state, trace_link
from .scene import generate_scene

log = logging.getLogger(__name__)

DATASET = "dataset.lbds"
FEATURES = "features.lbds"
SUBSETS = ("los", "nlos")


class PipelineError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def episode_seeds(seed: int, index: int, stream: int = 0) -> dict:
    """Independent per-episode seeds for scene, LIDAR, tracer and GNSS."""
    ss = np.random.SeedSequence(seed, spawn_key=(stream, index))
    s = ss.generate_state(4, dtype=np.uint64)
    return {"scene": int(s[0]), "lidar": int(s[1]), "trace": int(s[2]), "gnss": int(s[3])}


def _channel_inputs(cfg: RunConfig, scene):
    return cfg.codebook.tx_array(), cfg.codebook.rx_array(scene.ego_heading)


# ---------------------------------------------------------------------------
# codebooks


def candidate_codebooks(cfg: RunConfig):
    cb = cfg.codebook
    ct = build_candidate_codebook(cb.tx_array(), cb.tx_angles(), cb.tx_random, seed=[cfg.seed, 11])
    cr = build_candidate_codebook(cb.rx_array(), cb.rx_angles(), cb.rx_random, seed=[cfg.seed, 12])
    return ct, cr


def design_codebooks(cfg: RunConfig):
    """Prune the candidate codebooks on a design set of scenes drawn from a
    seed stream disjoint from the dataset's."""
    cand_t, cand_r = candidate_codebooks(cfg)
    pairs = []
    for i in range(cfg.codebook.design_episodes):
        seeds = episode_seeds(cfg.seed, i, stream=1)
        scene = generate_scene(cfg.scene, seeds["scene"])
        mpcs = trace_link(scene, cfg.trace, seeds["trace"])
        if len(mpcs) == 0:
            continue
        tx, rx = _channel_inputs(cfg, scene)
        pairs.append(best_pair(beam_powers_from_mpcs(mpcs, cfg.ofdm, tx, rx, cand_t, cand_r)))
    ct, cr = prune_from_best_pairs(cand_t, cand_r, pairs, cfg.codebook.min_count)
    log.info("codebooks pruned to %d x %d from %d x %d candidates",
             len(ct), len(cr), len(cand_t), len(cand_r))
    return ct, cr


def load_codebooks(out_dir):
    out_dir = Path(out_dir)
    return Codebook.load(out_dir / "codebook_tx.txt"), Codebook.load(out_dir / "codebook_rx.txt")


# ---------------------------------------------------------------------------
# generate


def simulate_episode(cfg: RunConfig, index: int, ct: Codebook, cr: Codebook) -> DatasetRecord:
    seeds = episode_seeds(cfg.seed, index)
    scene = generate_scene(cfg.scene, seeds["scene"])
    cloud = scan(scene, cfg.effective_lidar(), seeds["lidar"]).points
    mpcs = trace_link(scene, cfg.trace, seeds["trace"])
    state = link_state(mpcs)
    tx, rx = _channel_inputs(cfg, scene)
    y = beam_powers_from_mpcs(mpcs, cfg.ofdm, tx, rx, ct, cr)
    label = best = None
    if state is not LinkState.OUTAGE:
        label, best = make_label(y), best_pair(y)
    ego_est = apply_gnss_noise(scene.ego_position, cfg.sigma_G, seeds["gnss"])
    # only points that can survive the sensor-frame filters are stored
    cloud = cloud[sensor_filter(cloud, scene.ego_position, cfg.features)]
    summary = {"seed": seeds["scene"], "ego_position": scene.ego_position.tolist(),
               "ego_heading": scene.ego_heading, "ego_class": scene.ego_class,
               "bs_position": scene.bs_position.tolist(), "n_vehicles": len(scene.vehicles)}
    return DatasetRecord(
        episode=index, scene=summary, cloud=cloud.astype(np.float32), mpcs=mpcs.to_array(),
        y=y, los=state is LinkState.LOS, state=state.value, label=label, best=best,
        ego_estimate=ego_est, tags={"noise": cfg.noise, "state": state.value})


def generate(cfg: RunConfig, out_dir, codebooks=None) -> Path:
    """Simulate ``cfg.episodes`` paired episodes into ``out_dir/dataset.lbds``.

    Codebooks are designed first unless given; both are saved next to the
    dataset. The manifest records the config hash, seed and state counts.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        ct, cr = codebooks if codebooks is not None else design_codebooks(cfg)
    except ValueError as exc:
        raise PipelineError("codebook", exc) from exc
    ct.save(out_dir / "codebook_tx.txt")
    cr.save(out_dir / "codebook_rx.txt")
    path = out_dir / DATASET
    counts = {s.value: 0 for s in LinkState}
    with DatasetWriter(path) as w:
        for i in range(cfg.episodes):
            rec = simulate_episode(cfg, i, ct, cr)
            counts[rec.state] += 1
            w.write(rec)
            if (i + 1) % 100 == 0:
                log.info("generated %d/%d episodes", i + 1, cfg.episodes)
    write_manifest(path, {
        "kind": "dataset", "config": cfg.to_dict(), "config_hash": cfg.hash(), "seed": cfg.seed,
        "episodes": cfg.episodes, "counts": counts, "sigma_G": cfg.sigma_G,
        "sigma_L": cfg.sigma_L, "codebook_sizes": [len(ct), len(cr)],
    })
    log.info("generate: %d episodes in %.1f s", cfg.episodes, time.perf_counter() - t0)
    return path


# ---------------------------------------------------------------------------
# featurize


def featurize_record(rec: DatasetRecord, cfg: RunConfig) -> DatasetRecord:
    """Histogram and d-hat of one record; the raw cloud is dropped.

    The ground and range filters act in the sensor frame; the surviving
    points are then placed in the zone through the (possibly noisy) ego
    position estimate, so GNSS error shifts the whole cloud.
    """
    ego = np.asarray(rec.scene["ego_position"])
    bs = np.asarray(rec.scene["bs_position"])
    pts = rec.cloud.astype(float)
    pts = pts[sensor_filter(pts, ego, cfg.features)] + (rec.ego_estimate - ego)
    placed = replace(cfg.effective_features(), ground_z_min=-np.inf, d_max=np.inf)
    grid = voxelize(pts, cfg.zone, rec.ego_estimate, placed, bs_position=bs)
    dhat = min_dist_to_line(pts, bs, rec.ego_estimate)
    rec = replace(rec, cloud=np.zeros((0, 3), dtype=np.float32))
    return rec.with_features(grid.to_sparse(), grid.bs_bin, dhat)


def featurize(dataset_path, cfg: RunConfig, out_path=None) -> Path:
    dataset_path = Path(dataset_path)
    out_path = Path(out_path) if out_path is not None else dataset_path.with_name(FEATURES)
    with DatasetWriter(out_path) as w:
        for rec in iter_records(dataset_path):
            w.write(featurize_record(rec, cfg))
    manifest = read_manifest(dataset_path)
    manifest.update(kind="features", source=dataset_path.name,
                    features=cfg.effective_features().to_dict(), zone=cfg.zone.to_dict())
    write_manifest(out_path, manifest)
    return out_path


# ---------------------------------------------------------------------------
# train / evaluate


def _inputs(records, cfg: RunConfig) -> np.ndarray:
    shape = cfg.features.shape
    if not records:
        return np.zeros((0,) + shape, dtype=np.float32)
    return np.stack([encode_input(r.histogram(shape)) for r in records])


def _subset(records, idx, subset):
    rs = [records[i] for i in idx]
    if subset == "los":
        return [r for r in rs if r.los]
    if subset == "nlos":
        return [r for r in rs if not r.los]
    return rs


def _flat(best, n_r):
    return best[0] * n_r + best[1]


def _train_cfg(cfg: RunConfig, epochs, seed_offset):
    t = cfg.train
    return TrainConfig(epochs=t.epochs if epochs is None else epochs, batch_size=t.batch_size,
                       rho=t.rho, epsilon=t.epsilon, learning_rate=t.learning_rate,
                       l2=t.l2, seed=t.seed + seed_offset)


def load_features(features_path, cfg: RunConfig):
    records = read_dataset(features_path)
    try:
        train_idx, test_idx = split(records, cfg.split_fraction, cfg.seed)
    except ValueError as exc:
        raise PipelineError("split", exc) from exc
    return records, train_idx, test_idx


def train_models(features_path, cfg: RunConfig, out_dir, subsets=("all",) + SUBSETS) -> dict:
    """Fit the LOS detector ("all"), the stump, and the per-subset top-M
    selectors; checkpoints and loss histories land in ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, train_idx, test_idx = load_features(features_path, cfg)
    ct, cr = load_codebooks(Path(features_path).parent)
    n_classes = len(ct) * len(cr)
    shape = cfg.features.shape
    in_shape = (shape[0], shape[1], shape[2])
    timings = {}
    for subset in subsets:
        t0 = time.perf_counter()
        tr = _subset(records, train_idx, subset)
        te = _subset(records, test_idx, subset)
        if not tr:
            raise PipelineError("train", f"empty training subset {subset!r}")
        x, xv = _inputs(tr, cfg), _inputs(te, cfg)
        if subset == "all":
            name = "detector"
            spec = default_spec("binary", dropout=cfg.model.dropout)
            y = np.array([r.los for r in tr], dtype=float)
            yv = np.array([r.los for r in te], dtype=float)
            tcfg = _train_cfg(cfg, cfg.model.detector_epochs, 0)
            stump = fit_stump([r.dhat for r in tr], [r.los for r in tr])
            with open(out_dir / "stump.json", "w") as fh:
                json.dump({"gamma": stump.gamma}, fh)
        else:
            name = f"selector_{subset}"
            spec = default_spec("topM", n_classes, dropout=cfg.model.dropout)
            y = np.stack([r.label for r in tr])
            yv = np.stack([r.label for r in te]) if te else None
            tcfg = _train_cfg(cfg, cfg.model.selector_epochs, 1 if subset == "los" else 2)
        net = build_network(spec, in_shape, seed=tcfg.seed)
        try:
            history = train(net, x, y, tcfg, xv if len(te) else None, yv)
        except (ValueError, RuntimeError) as exc:
            raise PipelineError("train", f"{name}: {exc}") from exc
        save_checkpoint(net, out_dir / f"{name}.ckpt")
        write_history(history, out_dir / f"history_{name}.csv")
        timings[name] = time.perf_counter() - t0
        log.info("trained %s on %d examples in %.1f s", name, len(tr), timings[name])
    return timings


def evaluate_models(features_path, cfg: RunConfig, model_dir, out_dir=None, gate: bool = False) -> dict:
    """Score the trained models on the held-out split and write reports."""
    model_dir = Path(model_dir)
    out_dir = Path(out_dir) if out_dir is not None else model_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    records, train_idx, test_idx = load_features(features_path, cfg)
    if not test_idx:
        raise PipelineError("evaluate", "empty test split")
    ct, cr = load_codebooks(Path(features_path).parent)
    n_r, n_classes = len(cr), len(ct) * len(cr)
    cond = "noisy" if cfg.noise == "noisy" else "noise-free"
    n_outage = sum(r.outage for r in records)
    summary = {"condition": cond, "num_classes": n_classes, "codebook_sizes": [len(ct), len(cr)],
               "n_train": len(train_idx), "n_test": len(test_idx), "n_outage": n_outage,
               "counts": state_counts(records), "config_hash": cfg.hash()}

    test = [records[i] for i in test_idx]
    x_test = _inputs(test, cfg)
    truth_los = [r.los for r in test]
    detector = load_checkpoint(model_dir / "detector.ckpt")
    pred_los = predict_los(detector, x_test)
    with open(model_dir / "stump.json") as fh:
        stump = StumpModel(json.load(fh)["gamma"])
    summary["detector_error"] = misclassification_error(pred_los, truth_los)
    summary["stump_error"] = stump_error(stump, [r.dhat for r in test], truth_los)
    summary["stump_gamma"] = stump.gamma

    reports = {}
    for subset in SUBSETS:
        tr = _subset(records, train_idx, subset)
        sel = [i for i, r in enumerate(test) if r.los == (subset == "los")]
        if not sel:
            continue
        net = load_checkpoint(model_dir / f"selector_{subset}.ckpt")
        ranks = rank_outputs(net.predict_proba(x_test[sel]))
        truths = [_flat(test[i].best, n_r) for i in sel]
        ys = [test[i].y for i in sel]
        rep = evaluate_selector(ranks, truths, ys, cfg.eval.M, f"{subset.upper()}/{cond}", n_classes)
        prior = frequency_ranking([_flat(r.best, n_r) for r in tr], n_classes)
        prior_rank = np.tile(prior, (len(sel), 1))
        base = evaluate_selector(prior_rank, truths, ys, cfg.eval.M, f"{subset.upper()}-prior/{cond}",
                                 n_classes)
        rep.binary_error = summary["detector_error"]
        rep.extra = {"prior_accuracy": {str(k): v for k, v in base.accuracy.items()},
                     "prior_rt": {str(k): v for k, v in base.rt.items()},
                     "overhead_factor": overhead_factor(rep.rt, n_classes, cfg.eval.rt_floor),
                     "rt_floor": cfg.eval.rt_floor}
        rep.check(n_classes)
        rep.write_json(out_dir / f"report_{subset}.json")
        rep.write_csv(out_dir / f"report_{subset}.csv")
        reports[subset] = rep

    if gate:
        nets = {s: load_checkpoint(model_dir / f"selector_{s}.ckpt") for s in SUBSETS}
        ranks = np.empty((len(test), n_classes), dtype=int)
        for s, want in (("los", True), ("nlos", False)):
            sel = [i for i, p in enumerate(pred_los) if bool(p) == want]
            if sel:
                ranks[sel] = rank_outputs(nets[s].predict_proba(x_test[sel]))
        rep = evaluate_selector(ranks, [_flat(r.best, n_r) for r in test], [r.y for r in test],
                                cfg.eval.M, f"gated/{cond}", n_classes)
        rep.binary_error = summary["detector_error"]
        rep.check(n_classes)
        rep.write_json(out_dir / "report_gated.json")
        rep.write_csv(out_dir / "report_gated.csv")
        reports["gated"] = rep

    summary["reports"] = {k: v.to_dict() for k, v in reports.items()}
    with open(out_dir / "summary.json", "w") as fh:
        fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def run_pipeline(cfg: RunConfig, out_dir, reuse: bool = True, gate: bool = False) -> dict:
    """generate -> featurize -> train -> evaluate. With ``reuse`` an existing
    dataset whose manifest carries the same config hash is not regenerated."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    ds = out_dir / DATASET
    fresh = True
    if reuse and ds.exists():
        try:
            fresh = read_manifest(ds)["config_hash"] != cfg.hash()
        except (OSError, KeyError, ValueError):
            fresh = True
    if fresh:
        generate(cfg, out_dir)
    timings["generate"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    feats = featurize(ds, cfg)
    timings["featurize"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    timings.update(train_models(feats, cfg, out_dir))
    timings["train"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    summary = evaluate_models(feats, cfg, out_dir, gate=gate)
    timings["evaluate"] = time.perf_counter() - t0
    summary["timings"] = timings
    summary["regenerated"] = fresh
    with open(out_dir / "summary.json", "w") as fh:
        fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
