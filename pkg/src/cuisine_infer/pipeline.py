"""Closed-loop pipeline stages: synth -> label -> features -> embed -> train
-> eval -> report.

Each stage reads its predecessors' artifacts from the output directory,
writes its own plain-file artifacts plus a manifest, and derives its RNG
seed from the global seed and the stage name, so any stage can be rerun in
isolation and full reruns are byte-identical.
"""

from __future__ import annotations

import copy
import hashlib
import time
import zlib
from pathlib import Path

import numpy as np
import yaml

from . import btm, embed, eval_harness, nnet, stat_features, synthgen, weak_label
from .txn_core import CuisineClass, build_index, parse_transactions

DEFAULT_CONFIG: dict = {
    "seed": 7,
    "out_dir": "out",
    "paths": {
        "transactions": None,          # default: <out_dir>/transactions.csv
        "taxonomy": None,              # default: bundled seed list
        "pretrained_vectors": None,    # default: <out_dir>/pretrained_vectors.txt
    },
    "synth": {
        "n_restaurants": 500,
        "n_customers": 5000,
        "days": 90,
        "p_kw": 0.4,
    },
    "label": {
        "theta_f": 0.0005,
        "theta_p": 0.9,
        "theta_s": 0.5,
        "rounds": 1,
        "topic_augment": False,
        "btm": {"k": 10, "gibbs_iters": 50, "top_n": 5, "strata": 4, "cap_ratio": 4.0},
        "coherence_sweep": False,
    },
    "features": {"gmm_kmax": 6},
    "embed": {
        "micro": {"dim": 64, "window": 10, "negative": 10, "epochs": 3,
                  "min_count": 2, "learning_rate": 0.025},
        "macro": {"dim": 32, "window": 100, "negative": 10, "epochs": 3,
                  "min_count": 1, "learning_rate": 0.025},
        "name_dim": 50,
    },
    "train": {
        "variant": "residual_deep",
        "branch_hidden": 64,
        "trunk_hidden": [256, 128],
        "dropout": 0.0,
        "batch_size": 128,
        "learning_rate": 0.1,
        "epochs": 150,
        "class_weights": False,
        "train_frac": 0.8,
    },
    "eval": {"folds": 5, "ablation": False},
}


class ConfigError(Exception):
    pass


class MissingArtifactError(Exception):
    pass


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config field: {where}")
        if isinstance(base[key], dict) and base[key]:
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected a mapping")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        cfg = _merge(cfg, user)
    for dotted, value in (overrides or {}).items():
        node = cfg
        parts = dotted.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"unknown config field: {dotted}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config field: {dotted}")
        node[parts[-1]] = value
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    def check(cond, where, msg):
        if not cond:
            raise ConfigError(f"{where}: {msg}")

    check(isinstance(cfg["seed"], int), "seed", "must be an integer")
    check(cfg["synth"]["n_restaurants"] >= 0, "synth.n_restaurants", "must be >= 0")
    check(0 <= cfg["synth"]["p_kw"] <= 1, "synth.p_kw", "must be in [0, 1]")
    check(0 < cfg["label"]["theta_f"] <= 1, "label.theta_f", "must be in (0, 1]")
    check(0 < cfg["label"]["theta_p"] <= 1, "label.theta_p", "must be in (0, 1]")
    check(cfg["label"]["theta_s"] > 0, "label.theta_s", "must be > 0")
    check(cfg["train"]["variant"] in nnet.VARIANTS, "train.variant",
          f"must be one of {nnet.VARIANTS}")
    check(0 <= cfg["train"]["dropout"] < 1, "train.dropout", "must be in [0, 1)")


def config_hash(cfg: dict) -> str:
    canonical = yaml.safe_dump(cfg, sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def stage_seed(cfg: dict, stage: str) -> int:
    return (int(cfg["seed"]) << 32) ^ zlib.crc32(stage.encode())


def _out(cfg: dict) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _txn_path(cfg: dict) -> Path:
    p = cfg["paths"]["transactions"]
    return Path(p) if p else _out(cfg) / "transactions.csv"


def _vectors_path(cfg: dict) -> Path:
    p = cfg["paths"]["pretrained_vectors"]
    return Path(p) if p else _out(cfg) / "pretrained_vectors.txt"


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"missing {what} artifact: {path}")
    return path


def _write_manifest(cfg: dict, stage: str, inputs: list, outputs: list,
                    started: float, extra: dict | None = None) -> None:
    path = _out(cfg) / f"manifest_{stage}.txt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"stage\t{stage}\n")
        fh.write(f"config_hash\t{config_hash(cfg)}\n")
        fh.write(f"seed\t{stage_seed(cfg, stage)}\n")
        for p in inputs:
            fh.write(f"input\t{p}\n")
        for p in outputs:
            fh.write(f"output\t{p}\n")
        for key, value in (extra or {}).items():
            fh.write(f"{key}\t{value}\n")
        fh.write(f"duration_s\t{time.time() - started:.3f}\n")


def run_synth(cfg: dict) -> dict:
    started = time.time()
    out = _out(cfg)
    seed = stage_seed(cfg, "synth")
    scfg = synthgen.SynthConfig(
        n_restaurants=cfg["synth"]["n_restaurants"],
        n_customers=cfg["synth"]["n_customers"],
        days=cfg["synth"]["days"],
        p_kw=cfg["synth"]["p_kw"],
        seed=seed,
    )
    result = synthgen.generate(scfg)
    txn_path = _txn_path(cfg)
    labels_path = out / "truth_labels.tsv"
    party_path = out / "truth_party.tsv"
    synthgen.write_outputs(result, txn_path, labels_path, party_path)
    names: dict[str, str] = {}
    for t in result.transactions:
        names.setdefault(t.merchant_id, t.merchant_name)
    vec_path = _vectors_path(cfg)
    synthgen.write_pretrained_vectors(
        vec_path, names, cfg["embed"]["name_dim"], seed)
    _write_manifest(cfg, "synth", [], [txn_path, labels_path, party_path, vec_path],
                    started, {"n_transactions": len(result.transactions)})
    return {"transactions": txn_path, "truth_labels": labels_path}


def _load_names(cfg: dict) -> dict[str, str]:
    txn_path = _require(_txn_path(cfg), "transactions")
    parsed = parse_transactions(txn_path)
    names: dict[str, str] = {}
    for t in parsed.transactions:
        names.setdefault(t.merchant_id, t.merchant_name)
    return names


def run_label(cfg: dict) -> dict:
    started = time.time()
    out = _out(cfg)
    names = _load_names(cfg)
    taxonomy = weak_label.load_taxonomy(cfg["paths"]["taxonomy"])
    th = weak_label.BootstrapThresholds(
        cfg["label"]["theta_f"], cfg["label"]["theta_p"], cfg["label"]["theta_s"])
    labels, bootstrapped = weak_label.label_names(
        names, taxonomy, th, rounds=cfg["label"]["rounds"])

    extra = {"n_restaurants": len(names), "n_labeled": len(labels),
             "coverage": f"{len(labels) / max(1, len(names)):.4f}",
             "n_bootstrap_words": len(bootstrapped)}
    outputs = []
    if cfg["label"]["topic_augment"] or cfg["label"]["coherence_sweep"]:
        seed = stage_seed(cfg, "label")
        bcfg_raw = cfg["label"]["btm"]
        biterms = btm.extract_biterms(names, sprinkle=labels)
        biterms = btm.stratified_sample_biterms(
            biterms, bcfg_raw["strata"], bcfg_raw["cap_ratio"], seed)
        docs = [weak_label.tokenize_name(n) for n in names.values()]
        bcfg = btm.BtmConfig(k=bcfg_raw["k"], gibbs_iters=bcfg_raw["gibbs_iters"],
                             top_n=bcfg_raw["top_n"], seed=seed)
        if cfg["label"]["coherence_sweep"]:
            rows = btm.coherence_sweep(biterms, docs, base_cfg=bcfg)
            coherence_path = out / "coherence.tsv"
            btm.write_coherence_report(coherence_path, rows)
            outputs.append(coherence_path)
        if cfg["label"]["topic_augment"]:
            model = btm.btm_fit(biterms, bcfg)
            mapping = btm.topic_cuisine_map(model)
            added = 0
            for rid, name in sorted(names.items()):
                if rid in labels:
                    continue
                toks = weak_label.tokenize_name(name)
                in_vocab = [t for t in toks if t in model.vocab]
                if not in_vocab:
                    continue
                idx = [model.vocab.index(t) for t in in_vocab]
                topic_scores = model.topic_prior * np.prod(
                    model.topic_word[:, idx], axis=1)
                top_topic = int(np.argmax(topic_scores))
                if top_topic in mapping:
                    labels.add(rid, mapping[top_topic], "topic")
                    added += 1
            extra["n_topic_labels"] = added

    labels_path = out / "labels.tsv"
    labels.write_tsv(labels_path)
    boot_path = out / "bootstrap_report.tsv"
    weak_label.write_bootstrap_report(boot_path, bootstrapped)
    _write_manifest(cfg, "label", [_txn_path(cfg)],
                    [labels_path, boot_path] + outputs, started, extra)
    return {"labels": labels_path, "bootstrap_report": boot_path}


def run_features(cfg: dict) -> dict:
    started = time.time()
    out = _out(cfg)
    txn_path = _require(_txn_path(cfg), "transactions")
    parsed = parse_transactions(txn_path)
    index = build_index(parsed.transactions)
    feats = stat_features.extract_all(index, seed=stage_seed(cfg, "features"))
    path = out / "features_stat.tsv"
    stat_features.write_features(path, feats)
    _write_manifest(cfg, "features", [txn_path], [path], started,
                    {"n_restaurants": len(feats)})
    return {"features_stat": path}


def run_embed(cfg: dict) -> dict:
    started = time.time()
    out = _out(cfg)
    txn_path = _require(_txn_path(cfg), "transactions")
    labels_path = _require(out / "labels.tsv", "labels")
    boot_path = out / "bootstrap_report.tsv"
    parsed = parse_transactions(txn_path)
    index = build_index(parsed.transactions)
    seed = stage_seed(cfg, "embed")

    micro_cfg = embed.EmbedConfig(seed=seed, **cfg["embed"]["micro"])
    macro_cfg = embed.EmbedConfig(seed=seed ^ 1, **cfg["embed"]["macro"])
    micro = embed.sgns_train(embed.build_customer_corpus(index), micro_cfg)
    macro = embed.pv_train(embed.build_restaurant_corpus(index), macro_cfg)
    micro_path, macro_path = out / "micro.txt", out / "macro.txt"
    micro.write(micro_path)
    macro.write(macro_path)

    taxonomy = weak_label.load_taxonomy(cfg["paths"]["taxonomy"])
    labeling_words = taxonomy.all_keywords()
    if boot_path.exists():
        with open(boot_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    labeling_words.add(line.split("\t")[0])
    pretrained = embed.load_pretrained_vectors(
        _require(_vectors_path(cfg), "pretrained vectors"))
    names: dict[str, str] = {}
    for t in parsed.transactions:
        names.setdefault(t.merchant_id, t.merchant_name)
    name_vecs = {}
    for rid in sorted(names):
        vec, _matched = embed.name_embedding(names[rid], labeling_words, pretrained)
        name_vecs[rid] = vec
    name_path = out / "name_embed.txt"
    embed.EmbeddingMatrix(name_vecs).write(name_path)

    _write_manifest(cfg, "embed", [txn_path, labels_path],
                    [micro_path, macro_path, name_path], started)
    return {"micro": micro_path, "macro": macro_path, "name": name_path}


def _split_stat_blocks(vec: np.ndarray) -> dict[str, np.ndarray]:
    blocks = {}
    pos = 0
    for name, dim in stat_features.STAT_BLOCK_DIMS.items():
        blocks[name] = vec[pos:pos + dim]
        pos += dim
    return blocks


def load_dataset(cfg: dict, labels: weak_label.LabelSet | None = None) -> nnet.FeatureDataset:
    """Assemble the per-block dataset for every restaurant with features.

    Labels come from the given LabelSet (weak labels by default); unlabeled
    restaurants get label -1.
    """
    out = _out(cfg)
    stat_path = _require(out / "features_stat.tsv", "statistical features")
    stat_vecs = stat_features.read_features(stat_path)
    micro = embed.load_pretrained_vectors(_require(out / "micro.txt", "micro embedding"))
    macro = embed.load_pretrained_vectors(_require(out / "macro.txt", "macro embedding"))
    name = embed.load_pretrained_vectors(_require(out / "name_embed.txt", "name embedding"))
    if labels is None:
        labels = weak_label.LabelSet.read_tsv(_require(out / "labels.tsv", "labels"))

    ids = sorted(stat_vecs)
    block_mats: dict[str, list] = {b: [] for b in stat_features.STAT_BLOCK_DIMS}
    micro_dim, macro_dim, name_dim = micro.dim, macro.dim, name.dim
    block_mats["micro_embed"] = []
    block_mats["macro_embed"] = []
    block_mats["name_embed"] = []
    y = []
    for rid in ids:
        for bname, vec in _split_stat_blocks(stat_vecs[rid]).items():
            block_mats[bname].append(vec)
        block_mats["micro_embed"].append(
            micro.vectors.get(rid, np.zeros(micro_dim)))
        block_mats["macro_embed"].append(
            macro.vectors.get(rid, np.zeros(macro_dim)))
        block_mats["name_embed"].append(
            name.vectors.get(rid, np.zeros(name_dim)))
        cuisine = labels.get(rid)
        y.append(int(cuisine) if cuisine is not None else -1)
    features = {b: np.vstack(m) for b, m in block_mats.items()}
    return nnet.FeatureDataset(ids, features, np.array(y, dtype=int))


def _make_spec(cfg: dict, dataset: nnet.FeatureDataset) -> nnet.NetworkSpec:
    return nnet.NetworkSpec(
        branches=dataset.spec_branches(),
        branch_hidden=cfg["train"]["branch_hidden"],
        trunk_hidden=tuple(cfg["train"]["trunk_hidden"]),
        variant=cfg["train"]["variant"],
    )


def _make_train_cfg(cfg: dict) -> nnet.TrainConfig:
    return nnet.TrainConfig(
        dropout=cfg["train"]["dropout"],
        batch_size=cfg["train"]["batch_size"],
        learning_rate=cfg["train"]["learning_rate"],
        epochs=cfg["train"]["epochs"],
        seed=stage_seed(cfg, "train"),
        class_weights=cfg["train"]["class_weights"],
    )


def run_train(cfg: dict) -> dict:
    started = time.time()
    out = _out(cfg)
    dataset = load_dataset(cfg)
    labeled = dataset.subset(np.flatnonzero(dataset.labels >= 0))
    if len(labeled) == 0:
        raise MissingArtifactError("no labeled restaurants to train on")
    spec = _make_spec(cfg, dataset)
    tcfg = _make_train_cfg(cfg)
    train_idx, test_idx = eval_harness.stratified_split(
        labeled.labels, cfg["train"]["train_frac"], seed=stage_seed(cfg, "split"))
    train_ds, test_ds = nnet.standardize(
        labeled.subset(train_idx), labeled.subset(test_idx))
    params, curve = nnet.train(train_ds, spec, tcfg, val=test_ds)

    model_path = out / "model.txt"
    nnet.save_params(model_path, spec, params)
    curve_path = out / "loss_curve.tsv"
    with open(curve_path, "w", encoding="utf-8") as fh:
        for epoch, tr, va in curve:
            fh.write(f"{epoch}\t{tr!r}\t{va!r}\n")
    split_path = out / "split.tsv"
    with open(split_path, "w", encoding="utf-8") as fh:
        for i in train_idx:
            fh.write(f"{labeled.ids[i]}\ttrain\n")
        for i in test_idx:
            fh.write(f"{labeled.ids[i]}\ttest\n")
    _write_manifest(cfg, "train", [out / "features_stat.tsv", out / "labels.tsv"],
                    [model_path, curve_path, split_path], started,
                    {"n_train": len(train_idx), "n_test": len(test_idx)})
    return {"model": model_path, "loss_curve": curve_path, "split": split_path}


def run_eval(cfg: dict) -> dict:
    started = time.time()
    out = _out(cfg)
    model_path = _require(out / "model.txt", "model")
    spec, params = nnet.load_params(model_path)
    dataset = load_dataset(cfg)
    labeled = dataset.subset(np.flatnonzero(dataset.labels >= 0))
    split_path = _require(out / "split.tsv", "train/test split")
    split = {}
    with open(split_path, "r", encoding="utf-8") as fh:
        for line in fh:
            rid, part = line.split()
            split[rid] = part
    train_idx = [i for i, rid in enumerate(labeled.ids) if split.get(rid) == "train"]
    test_idx = [i for i, rid in enumerate(labeled.ids) if split.get(rid) == "test"]
    train_ds, test_ds = nnet.standardize(
        labeled.subset(train_idx), labeled.subset(test_idx))
    probs = nnet.predict_proba(params, spec, test_ds)
    report = eval_harness.evaluate(probs, test_ds.labels)
    metrics_path = out / "metrics.tsv"
    report.write_tsv(metrics_path)
    confusion_path = out / "confusion.tsv"
    report.write_confusion_tsv(confusion_path)
    text_path = out / "metrics.txt"
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(report.render() + "\n")

    outputs = [metrics_path, confusion_path, text_path]
    extra = {"test_accuracy": f"{report.accuracy:.4f}"}

    truth_path = out / "truth_labels.tsv"
    if truth_path.exists():
        truth = weak_label.LabelSet.read_tsv(truth_path)
        unlabeled_idx = [i for i, rid in enumerate(dataset.ids)
                        if dataset.labels[i] < 0 and rid in truth]
        if unlabeled_idx:
            _, un_ds = nnet.standardize(labeled.subset(train_idx),
                                        dataset.subset(unlabeled_idx))
            un_truth = np.array([int(truth.get(rid)) for rid in un_ds.ids])
            un_probs = nnet.predict_proba(params, spec, un_ds)
            un_report = eval_harness.evaluate(un_probs, un_truth)
            truth_metrics = out / "metrics_truth.tsv"
            un_report.write_tsv(truth_metrics)
            outputs.append(truth_metrics)
            extra["truth_accuracy_unlabeled"] = f"{un_report.accuracy:.4f}"

    if cfg["eval"]["ablation"]:
        raw_train, raw_test = labeled.subset(train_idx), labeled.subset(test_idx)
        rows = eval_harness.ablation(raw_train, raw_test, spec, _make_train_cfg(cfg))
        ablation_path = out / "ablation.tsv"
        eval_harness.write_ablation_tsv(ablation_path, rows)
        outputs.append(ablation_path)

    _write_manifest(cfg, "eval", [model_path, split_path], outputs, started, extra)
    return {"metrics": metrics_path, "confusion": confusion_path}


def run_report(cfg: dict) -> dict:
    started = time.time()
    out = _out(cfg)
    txn_path = _require(_txn_path(cfg), "transactions")
    labels_path = _require(out / "labels.tsv", "labels")
    parsed = parse_transactions(txn_path)
    index = build_index(parsed.transactions)
    feats = stat_features.extract_all(index, seed=stage_seed(cfg, "features"))
    labels = weak_label.LabelSet.read_tsv(labels_path)
    rows = eval_harness.cuisine_summary(
        {rid: c for rid, (c, _src) in labels.items()}, feats)
    path = out / "cuisine_summary.tsv"
    eval_harness.write_cuisine_summary_tsv(path, rows)
    _write_manifest(cfg, "report", [txn_path, labels_path], [path], started)
    return {"cuisine_summary": path}


STAGES = {
    "synth": run_synth,
    "label": run_label,
    "features": run_features,
    "embed": run_embed,
    "train": run_train,
    "eval": run_eval,
    "report": run_report,
}

PIPELINE_ORDER = ["synth", "label", "features", "embed", "train", "eval", "report"]


def run_pipeline(cfg: dict) -> dict:
    artifacts = {}
    for stage in PIPELINE_ORDER:
        artifacts.update(STAGES[stage](cfg))
    return artifacts
