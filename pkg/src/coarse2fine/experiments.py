"""Benchmark and active-learning runners behind the command line.

Each (ratio, learner, repetition) or (strategy, repetition) cell is
independent and deterministic given the master seed, so cells can run in a
process pool without changing any output byte.
"""
import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .active import Oracle, run_active_loop
from .config import FileSource
from .data import Dataset, deduce_fine_observations, generate_synthetic, split_warmup, warmup_size
from .errors import ConfigError, InputError
from .fileio import load_dataset, save_dataset, save_params
from .learners import train
from .metrics import all_ones_f1_loss, curve_auc, mean_precision_at_k, random_f1_loss, recover_f1_loss
from .model import predict_logits

_SPLIT_STREAM = 2
_TEST_STREAM = 5


@dataclass(frozen=True, eq=False)
class Fold:
    train: Dataset  # coarse-labelled rows plus the warm-up rows, with ground truth
    test: Dataset
    hierarchy: object


def synthesize(cfg, seed):
    """Train-pool and test rows drawn from one synthetic scorer."""
    src = cfg.source
    full, hierarchy = generate_synthetic(src.n_coarse, src.children_per_coarse, src.n_features,
                                         src.n_rows + src.n_test, src.label_density, src.noise, seed)
    n = src.n_rows
    return Fold(full.rows(np.arange(n)), full.rows(np.arange(n, len(full))), hierarchy)


_file_cache = {}


def _load_files(src):
    key = (src.features, src.coarse, src.fine, src.hierarchy)
    if key not in _file_cache:
        _file_cache[key] = load_dataset(src.features, src.coarse, src.fine, src.hierarchy)
    return _file_cache[key]


def make_fold(cfg, seed):
    src = cfg.source
    if not isinstance(src, FileSource):
        return synthesize(cfg, seed)
    data, hierarchy = _load_files(src)
    if not data.has_fine:
        raise InputError("benchmark and active runs need ground-truth fine labels")
    if src.test_features:
        test, _ = load_dataset(src.test_features, src.test_coarse, src.test_fine, src.hierarchy)
        return Fold(data, test, hierarchy)
    perm = np.random.default_rng([seed, _TEST_STREAM]).permutation(len(data))
    n_test = max(1, round(src.test_fraction * len(data)))
    if n_test >= len(data):
        raise ConfigError("test split leaves no training rows")
    return Fold(data.rows(np.sort(perm[n_test:])), data.rows(np.sort(perm[:n_test])), hierarchy)


def _split(fold, ratio, seed):
    data, warmup = split_warmup(fold.train, ratio, [seed, _SPLIT_STREAM])
    partial = deduce_fine_observations(data.coarse, fold.hierarchy)
    return data, warmup, partial


def _arch(cfg, fold):
    return cfg.model.architecture(fold.train.n_features, fold.hierarchy.n_fine)


def _check_ks(cfg, n_labels):
    bad = [k for k in cfg.ks if k > n_labels]
    if bad:
        raise ConfigError(f"k values {bad} exceed the {n_labels} fine labels")


def _map(fn, cells, threads):
    if threads and threads > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def _benchmark_cell(args):
    cfg, ratio, learner, rep, params_dir = args
    seed = cfg.repetition_seed(rep)
    fold = make_fold(cfg, seed)
    data, warmup, partial = _split(fold, ratio, seed)
    tcfg = replace(cfg.train, seed=seed)
    arch = _arch(cfg, fold)
    # every learner gets the step budget of the pooled learners so trajectories are comparable
    steps = tcfg.n_steps(len(data) + len(warmup)) if tcfg.steps is None else tcfg.steps
    theta, pseudo = train(learner, data.without_fine(), partial, warmup, arch, replace(tcfg, steps=steps))
    scores = predict_logits(theta, fold.test.features)
    row = {"ratio": ratio, "learner": learner, "repetition": rep, "seed": seed,
           "p_at_k": {k: mean_precision_at_k(scores, fold.test.fine, k) for k in cfg.ks}}
    if pseudo is not None:
        unknown = ~partial.mask
        truth = data.fine
        rate = float(truth[unknown].mean()) if unknown.any() else 0.0
        row["recover"] = {
            "recover_f1_loss": recover_f1_loss(pseudo.values, truth, unknown),
            "all_ones_f1_loss": all_ones_f1_loss(rate),
            "random_f1_loss": random_f1_loss(truth, unknown)[0],
            "positive_rate": rate,
            "n_unknown": int(unknown.sum()),
        }
    if params_dir:
        save_params(theta, os.path.join(params_dir, f"params_r{ratio}_{learner}_{rep}.bin"))
    return row


def _fmt(v):
    return repr(float(v))


def _mean_std(values):
    values = np.asarray(values, dtype=np.float64)
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return float(np.mean(values)), std


def _write_csv(path, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_benchmark(cfg, threads=1, save_params_flag=False):
    """Train every learner at every ratio for every repetition; write the result tables."""
    out = cfg.out
    params_dir = os.path.join(out, "params") if save_params_flag else None
    total = cfg.source.n_rows if not isinstance(cfg.source, FileSource) else None
    for ratio in cfg.ratios:
        if total is not None and warmup_size(total, ratio) >= total:
            raise ConfigError(f"ratio {ratio} leaves no coarse-labelled rows")
    cells = [(cfg, ratio, learner, rep, params_dir)
             for ratio in cfg.ratios for learner in cfg.learners for rep in range(cfg.repetitions)]
    fold0 = make_fold(cfg, cfg.repetition_seed(0))
    _check_ks(cfg, fold0.hierarchy.n_fine)
    results = _map(_benchmark_cell, cells, threads)

    detail, summary, recover = [], [], []
    for r in results:
        for k in cfg.ks:
            detail.append([r["ratio"], r["learner"], r["repetition"], r["seed"], k, _fmt(r["p_at_k"][k])])
        if "recover" in r:
            rc = r["recover"]
            recover.append([r["ratio"], r["repetition"], r["seed"], _fmt(rc["recover_f1_loss"]),
                            _fmt(rc["all_ones_f1_loss"]), _fmt(rc["random_f1_loss"]),
                            _fmt(rc["positive_rate"]), rc["n_unknown"]])
    for ratio in cfg.ratios:
        for learner in cfg.learners:
            cell = [r for r in results if r["ratio"] == ratio and r["learner"] == learner]
            for k in cfg.ks:
                mean, std = _mean_std([r["p_at_k"][k] for r in cell])
                summary.append([ratio, learner, k, _fmt(mean), _fmt(std)])

    paths = {"benchmark": os.path.join(out, "benchmark.csv"),
             "detail": os.path.join(out, "benchmark_detail.csv")}
    _write_csv(paths["benchmark"], ["ratio", "learner", "k", "mean", "std"], summary)
    _write_csv(paths["detail"], ["ratio", "learner", "repetition", "seed", "k", "precision_at_k"], detail)
    if recover:
        paths["recover"] = os.path.join(out, "recover.csv")
        _write_csv(paths["recover"], ["ratio", "repetition", "seed", "recover_f1_loss", "all_ones_f1_loss",
                                      "random_f1_loss", "positive_rate", "n_unknown"], recover)
    return paths


def _active_setup(cfg, rep):
    seed = cfg.repetition_seed(rep)
    fold = make_fold(cfg, seed)
    data, warmup, partial = _split(fold, cfg.active_ratio, seed)
    return seed, fold, data, warmup, partial


def check_active_budget(cfg):
    """Fail before any training when some repetition cannot supply the budget."""
    for rep in range(cfg.repetitions):
        _, fold, _, _, partial = _active_setup(cfg, rep)
        _check_ks(cfg, fold.hierarchy.n_fine)
        n_unknown = int((~partial.mask).sum())
        if cfg.active.budget > n_unknown:
            raise ConfigError(f"budget {cfg.active.budget} exceeds the {n_unknown} unknown entries "
                              f"of repetition {rep}")


def _active_cell(args):
    cfg, strategy, rep = args
    seed, fold, data, warmup, partial = _active_setup(cfg, rep)
    acfg = replace(cfg.active, strategy=strategy, ks=tuple(cfg.ks), train=replace(cfg.train, seed=seed))
    result = run_active_loop(data.without_fine(), partial, warmup, Oracle.from_dataset(data),
                             _arch(cfg, fold), acfg, fold.test)
    return {"strategy": strategy, "repetition": rep, "seed": seed,
            "points": {k: c.points for k, c in result.curves.items()},
            "auc": {k: curve_auc(c) if len(c) > 1 else c.values[0] for k, c in result.curves.items()}}


def run_active(cfg, threads=1):
    check_active_budget(cfg)
    cells = [(cfg, s, rep) for s in cfg.strategies for rep in range(cfg.repetitions)]
    results = _map(_active_cell, cells, threads)

    out = cfg.out
    paths = {}
    auc = {}
    for strategy in cfg.strategies:
        runs = [r for r in results if r["strategy"] == strategy]
        mean_rows, detail_rows = [], []
        for k in cfg.ks:
            n_points = len(runs[0]["points"][k])
            for i in range(n_points):
                x = runs[0]["points"][k][i][0]
                vals = [r["points"][k][i][1] for r in runs]
                mean_rows.append([i, x, k, _fmt(np.mean(vals))])
                detail_rows.extend([r["repetition"], i, x, k, _fmt(v)] for r, v in zip(runs, vals))
        paths[strategy] = os.path.join(out, f"progression_{strategy}.csv")
        _write_csv(paths[strategy], ["round", "labels_queried", "k", "precision_at_k"], mean_rows)
        _write_csv(os.path.join(out, f"progression_{strategy}_detail.csv"),
                   ["repetition", "round", "labels_queried", "k", "precision_at_k"], detail_rows)
        auc[strategy] = {}
        for k in cfg.ks:
            values = [r["auc"][k] for r in runs]
            mean, std = _mean_std(values)
            auc[strategy][str(k)] = {"mean": mean, "std": std, "per_repetition": values}
    paths["auc"] = os.path.join(out, "auc.json")
    with open(paths["auc"], "w") as fh:
        json.dump(auc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def run_synth(cfg):
    if isinstance(cfg.source, FileSource):
        raise ConfigError("synth needs a synthetic dataset section")
    fold = synthesize(cfg, cfg.seed)
    paths = save_dataset(fold.train, fold.hierarchy, cfg.out)
    test = save_dataset(fold.test, fold.hierarchy, os.path.join(cfg.out, "test"))
    paths.update({f"test_{k}": v for k, v in test.items() if k != "hierarchy"})
    return paths


def run_eval(params, data, ks, out):
    """P@k of saved parameters on a labelled dataset, written as ``eval.json``."""
    if not data.has_fine:
        raise InputError("evaluation needs ground-truth fine labels")
    if params.arch.input_dim != data.n_features or params.arch.n_labels != data.fine.shape[1]:
        raise InputError(f"parameters expect {params.arch.input_dim} features and {params.arch.n_labels} labels, "
                         f"data has {data.n_features} and {data.fine.shape[1]}")
    if any(k > data.fine.shape[1] or k < 1 for k in ks):
        raise ConfigError(f"k values must lie in [1, {data.fine.shape[1]}]")
    scores = predict_logits(params, data.features)
    result = {str(k): mean_precision_at_k(scores, data.fine, k) for k in ks}
    path = os.path.join(out, "eval.json")
    os.makedirs(out, exist_ok=True)
    with open(path, "w") as fh:
        json.dump({"n_rows": len(data), "precision_at_k": result}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
