"""Multi-branch feedforward classifier over per-block feature vectors.

Variants: residual_deep (two hidden layers per branch with a skip
connection), deep (same without the skip), shallow (one hidden layer per
branch and one trunk layer), and logistic (affine + softmax on the raw
concatenated features). Trained with plain minibatch SGD; all math in numpy
with analytic gradients.
"""

from __future__ import annotations

import itertools
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .txn_core import N_CLASSES

VARIANTS = ("residual_deep", "deep", "shallow", "logistic")


@dataclass(frozen=True)
class NetworkSpec:
    branches: tuple          # ((block name, input dim), ...)
    branch_hidden: int = 64
    trunk_hidden: tuple = (256, 128)
    n_classes: int = N_CLASSES
    variant: str = "residual_deep"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.branch_hidden < 1 or any(h < 1 for h in self.trunk_hidden):
            raise ValueError("hidden dims must be positive")
        for name, dim in self.branches:
            if dim < 1:
                raise ValueError(f"branch {name}: nonpositive input dim {dim}")

    @property
    def block_names(self) -> list[str]:
        return [name for name, _ in self.branches]

    def concat_dim(self) -> int:
        if self.variant == "logistic":
            return sum(dim for _, dim in self.branches)
        return self.branch_hidden * len(self.branches)


@dataclass(frozen=True)
class TrainConfig:
    dropout: float = 0.0
    batch_size: int = 128
    learning_rate: float = 0.1
    epochs: int = 100
    seed: int = 0
    class_weights: bool = False

    def __post_init__(self):
        if not (0 <= self.dropout < 1):
            raise ValueError("dropout must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.learning_rate < 0:
            raise ValueError("invalid training config")


# Table-style default grids for the hyperparameter search.
DEFAULT_GRIDS = {
    "dropout": (0.0, 0.1, 0.2, 0.3),
    "batch_size": (128, 256, 512, 1024),
    "learning_rate": (0.001, 0.01, 0.1, 1.0),
}


def _branch_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng((seed << 32) ^ zlib.crc32(name.encode()))


def _he(rng, fan_out: int, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))


def init_params(spec: NetworkSpec, seed: int = 0) -> dict[str, np.ndarray]:
    """He-scaled random init, keyed per branch name so branch declaration
    order does not affect the drawn weights."""
    params: dict[str, np.ndarray] = {}
    h = spec.branch_hidden
    if spec.variant != "logistic":
        for name, dim in spec.branches:
            rng = _branch_rng(seed, "branch:" + name)
            params[f"branch/{name}/W1"] = _he(rng, h, dim)
            params[f"branch/{name}/b1"] = np.zeros(h)
            if spec.variant in ("deep", "residual_deep"):
                params[f"branch/{name}/W2"] = _he(rng, h, h)
                params[f"branch/{name}/b2"] = np.zeros(h)
    # trunk first layer: one column block per branch, keyed by branch name
    trunk_dims = list(spec.trunk_hidden) if spec.variant in ("deep", "residual_deep") \
        else [spec.trunk_hidden[0]] if spec.variant == "shallow" else []
    if trunk_dims:
        t0 = trunk_dims[0]
        for name, dim in spec.branches:
            rng = _branch_rng(seed, "trunk0:" + name)
            width = dim if spec.variant == "logistic" else h
            params[f"trunk0/{name}"] = _he(rng, t0, width)
        params["trunk/b0"] = np.zeros(t0)
        prev = t0
        for i, width in enumerate(trunk_dims[1:], start=1):
            rng = _branch_rng(seed, f"trunk{i}")
            params[f"trunk/W{i}"] = _he(rng, width, prev)
            params[f"trunk/b{i}"] = np.zeros(width)
            prev = width
        rng = _branch_rng(seed, "out")
        params["out/W"] = _he(rng, spec.n_classes, prev)
        params["out/b"] = np.zeros(spec.n_classes)
    else:
        # logistic: per-branch column blocks straight to the output layer
        for name, dim in spec.branches:
            rng = _branch_rng(seed, "out:" + name)
            params[f"out/{name}"] = _he(rng, spec.n_classes, dim)
        params["out/b"] = np.zeros(spec.n_classes)
    return params


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params, spec: NetworkSpec, features: dict[str, np.ndarray],
            train_mode: bool = False, dropout: float = 0.0,
            rng: np.random.Generator | None = None):
    """Run the network; returns (class probabilities, cache for backward)."""
    cache: dict = {"features": features, "dropout": 0.0}
    n = next(iter(features.values())).shape[0]
    for name, dim in spec.branches:
        if features[name].shape != (n, dim):
            raise ValueError(
                f"branch {name}: expected shape {(n, dim)}, got {features[name].shape}")

    if spec.variant == "logistic":
        logits = np.zeros((n, spec.n_classes)) + params["out/b"]
        # accumulate in sorted name order so branch declaration order cannot
        # perturb floating-point summation
        for name in sorted(spec.block_names):
            logits += features[name] @ params[f"out/{name}"].T
        probs = _softmax(logits)
        cache["probs"] = probs
        return probs, cache

    branch_out = {}
    for name, _ in spec.branches:
        x = features[name]
        a1 = x @ params[f"branch/{name}/W1"].T + params[f"branch/{name}/b1"]
        h1 = np.maximum(a1, 0.0)
        cache[f"{name}/a1"] = a1
        cache[f"{name}/h1"] = h1
        if spec.variant == "shallow":
            branch_out[name] = h1
        else:
            a2 = h1 @ params[f"branch/{name}/W2"].T + params[f"branch/{name}/b2"]
            r = np.maximum(a2, 0.0)
            cache[f"{name}/a2"] = a2
            branch_out[name] = r + h1 if spec.variant == "residual_deep" else r
    cache["branch_out"] = branch_out

    use_dropout = train_mode and dropout > 0
    if use_dropout and rng is None:
        raise ValueError("dropout in train mode requires an rng")
    cache["dropout"] = dropout if use_dropout else 0.0

    t = np.zeros((n, params["trunk/b0"].shape[0])) + params["trunk/b0"]
    for name in sorted(spec.block_names):
        t += branch_out[name] @ params[f"trunk0/{name}"].T
    cache["t_pre0"] = t
    t = np.maximum(t, 0.0)
    cache["t_act0"] = t
    if use_dropout:
        mask = (rng.random(t.shape) >= dropout) / (1 - dropout)
        cache["mask0"] = mask
        t = t * mask
    cache["t_drop0"] = t

    n_trunk = len(spec.trunk_hidden) if spec.variant in ("deep", "residual_deep") else 1
    for i in range(1, n_trunk):
        pre = t @ params[f"trunk/W{i}"].T + params[f"trunk/b{i}"]
        cache[f"t_pre{i}"] = pre
        t = np.maximum(pre, 0.0)
        cache[f"t_act{i}"] = t
        if use_dropout:
            mask = (rng.random(t.shape) >= dropout) / (1 - dropout)
            cache[f"mask{i}"] = mask
            t = t * mask
        cache[f"t_drop{i}"] = t
    cache["n_trunk"] = n_trunk

    logits = t @ params["out/W"].T + params["out/b"]
    probs = _softmax(logits)
    cache["probs"] = probs
    return probs, cache


def cross_entropy(probs: np.ndarray, onehot: np.ndarray,
                  sample_weights: np.ndarray | None = None) -> float:
    p = np.clip((probs * onehot).sum(axis=1), 1e-12, None)
    losses = -np.log(p)
    if sample_weights is not None:
        losses = losses * sample_weights
    return float(losses.mean())


def backward(params, spec: NetworkSpec, cache, onehot: np.ndarray,
             sample_weights: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Exact gradients of the mean cross-entropy loss w.r.t. all params."""
    probs = cache["probs"]
    n = probs.shape[0]
    dlogits = (probs - onehot) / n
    if sample_weights is not None:
        dlogits = dlogits * sample_weights[:, None]
    grads: dict[str, np.ndarray] = {}
    features = cache["features"]

    if spec.variant == "logistic":
        for name, _ in spec.branches:
            grads[f"out/{name}"] = dlogits.T @ features[name]
        grads["out/b"] = dlogits.sum(axis=0)
        return grads

    n_trunk = cache["n_trunk"]
    t_last = cache[f"t_drop{n_trunk - 1}"]
    grads["out/W"] = dlogits.T @ t_last
    grads["out/b"] = dlogits.sum(axis=0)
    dt = dlogits @ params["out/W"]

    dropout = cache["dropout"]
    for i in range(n_trunk - 1, 0, -1):
        if dropout > 0:
            dt = dt * cache[f"mask{i}"]
        dt = dt * (cache[f"t_pre{i}"] > 0)
        grads[f"trunk/W{i}"] = dt.T @ cache[f"t_drop{i - 1}"]
        grads[f"trunk/b{i}"] = dt.sum(axis=0)
        dt = dt @ params[f"trunk/W{i}"]
    if dropout > 0:
        dt = dt * cache["mask0"]
    dt = dt * (cache["t_pre0"] > 0)
    grads["trunk/b0"] = dt.sum(axis=0)

    branch_out = cache["branch_out"]
    for name, _ in spec.branches:
        grads[f"trunk0/{name}"] = dt.T @ branch_out[name]
        dh2 = dt @ params[f"trunk0/{name}"]
        x = features[name]
        h1 = cache[f"{name}/h1"]
        if spec.variant == "shallow":
            dh1 = dh2
        else:
            dr = dh2 * (cache[f"{name}/a2"] > 0)
            grads[f"branch/{name}/W2"] = dr.T @ h1
            grads[f"branch/{name}/b2"] = dr.sum(axis=0)
            dh1 = dr @ params[f"branch/{name}/W2"]
            if spec.variant == "residual_deep":
                dh1 = dh1 + dh2
        da1 = dh1 * (cache[f"{name}/a1"] > 0)
        grads[f"branch/{name}/W1"] = da1.T @ x
        grads[f"branch/{name}/b1"] = da1.sum(axis=0)
    return grads


@dataclass
class FeatureDataset:
    """Aligned per-block feature matrices plus integer class labels."""

    ids: list[str]
    features: dict[str, np.ndarray]   # block name -> (n, dim)
    labels: np.ndarray                # (n,) int codes, -1 for unlabeled

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, idx) -> "FeatureDataset":
        idx = np.asarray(idx)
        return FeatureDataset(
            [self.ids[i] for i in idx],
            {k: v[idx] for k, v in self.features.items()},
            self.labels[idx],
        )

    def drop_block(self, name: str) -> "FeatureDataset":
        if name not in self.features:
            raise KeyError(name)
        return FeatureDataset(
            self.ids, {k: v for k, v in self.features.items() if k != name}, self.labels)

    def spec_branches(self) -> tuple:
        return tuple((name, mat.shape[1]) for name, mat in self.features.items())


def standardize(train: FeatureDataset, *others: FeatureDataset):
    """Z-score every block using the training-set statistics."""
    stats = {}
    for name, mat in train.features.items():
        mu = mat.mean(axis=0)
        sd = mat.std(axis=0)
        sd[sd < 1e-9] = 1.0
        stats[name] = (mu, sd)
    out = []
    for ds in (train, *others):
        feats = {name: (mat - stats[name][0]) / stats[name][1]
                 for name, mat in ds.features.items()}
        out.append(FeatureDataset(ds.ids, feats, ds.labels))
    return out[0] if not others else tuple(out)


def _onehot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def train(dataset: FeatureDataset, spec: NetworkSpec, cfg: TrainConfig,
          val: FeatureDataset | None = None):
    """Seeded shuffled minibatch SGD; returns (params, loss curve).

    Loss curve rows: (epoch, train loss, val loss or nan).
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    params = init_params(spec, cfg.seed)
    rng = np.random.default_rng((cfg.seed << 32) ^ 0x5EED)
    onehot = _onehot(dataset.labels, spec.n_classes)
    weights = None
    if cfg.class_weights:
        counts = np.bincount(dataset.labels, minlength=spec.n_classes).astype(float)
        inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)
        inv = inv / inv[counts > 0].mean() if (counts > 0).any() else inv
        weights = inv[dataset.labels]
    curve = []
    n = len(dataset)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = {k: v[idx] for k, v in dataset.features.items()}
            probs, cache = forward(params, spec, batch, train_mode=True,
                                   dropout=cfg.dropout, rng=rng)
            grads = backward(params, spec, cache, onehot[idx],
                             None if weights is None else weights[idx])
            for key, g in grads.items():
                params[key] -= cfg.learning_rate * g
        probs, _ = forward(params, spec, dataset.features)
        tr_loss = cross_entropy(probs, onehot, weights)
        if val is not None and len(val) > 0:
            vp, _ = forward(params, spec, val.features)
            v_loss = cross_entropy(vp, _onehot(val.labels, spec.n_classes))
        else:
            v_loss = float("nan")
        curve.append((epoch, tr_loss, v_loss))
    return params, curve


def predict_proba(params, spec: NetworkSpec, dataset: FeatureDataset) -> np.ndarray:
    probs, _ = forward(params, spec, dataset.features)
    return probs


def predict_topk(params, spec: NetworkSpec, features: dict[str, np.ndarray],
                 k: int) -> np.ndarray:
    """Top-k class codes per sample, probability descending, ties broken by
    ascending class code."""
    if k < 1 or k > spec.n_classes:
        raise ValueError(f"k must be in [1, {spec.n_classes}]")
    probs, _ = forward(params, spec, features)
    return topk_from_probs(probs, k)


def topk_from_probs(probs: np.ndarray, k: int) -> np.ndarray:
    n, c = probs.shape
    codes = np.tile(np.arange(c), (n, 1))
    order = np.lexsort((codes, -probs), axis=1)
    return order[:, :k]


def accuracy(params, spec: NetworkSpec, dataset: FeatureDataset) -> float:
    top1 = predict_topk(params, spec, dataset.features, 1)[:, 0]
    return float((top1 == dataset.labels).mean())


def grid_search(dataset: FeatureDataset, spec: NetworkSpec,
                grids: dict = None, folds: int = 5, epochs: int = 50,
                seed: int = 0):
    """Full Cartesian grid with stratified k-fold CV.

    Returns (best TrainConfig, CV table rows (config, mean accuracy)).
    Ties prefer smaller batch, then smaller learning rate, then smaller
    dropout.
    """
    from .eval_harness import kfold

    grids = dict(DEFAULT_GRIDS, **(grids or {}))
    fold_indices = kfold(dataset.labels, k=folds, seed=seed)
    table = []
    for dropout, batch, lr in itertools.product(
            grids["dropout"], grids["batch_size"], grids["learning_rate"]):
        cfg = TrainConfig(dropout=dropout, batch_size=batch,
                          learning_rate=lr, epochs=epochs, seed=seed)
        scores = []
        for f in range(folds):
            test_idx = fold_indices[f]
            train_idx = np.concatenate([fold_indices[g] for g in range(folds) if g != f])
            tr, te = standardize(dataset.subset(train_idx), dataset.subset(test_idx))
            params, _ = train(tr, spec, cfg)
            scores.append(accuracy(params, spec, te))
        table.append((cfg, float(np.mean(scores))))
    best_cfg, _ = max(
        table, key=lambda row: (row[1], -row[0].batch_size,
                                -row[0].learning_rate, -row[0].dropout))
    return best_cfg, table


def save_params(path, spec: NetworkSpec, params: dict[str, np.ndarray]) -> None:
    """Versioned text dump: spec line, then one `key shape values` line per
    parameter."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("cuisine-infer-model v1\n")
        fh.write(f"variant={spec.variant}\tbranch_hidden={spec.branch_hidden}\t"
                 f"trunk_hidden={','.join(map(str, spec.trunk_hidden))}\t"
                 f"n_classes={spec.n_classes}\t"
                 f"branches={';'.join(f'{n}:{d}' for n, d in spec.branches)}\n")
        for key in sorted(params):
            arr = params[key]
            shape = ",".join(map(str, arr.shape))
            vals = " ".join(repr(float(x)) for x in arr.ravel())
            fh.write(f"{key}\t{shape}\t{vals}\n")


def load_params(path):
    with open(path, "r", encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != "cuisine-infer-model v1":
            raise ValueError(f"bad model file magic: {magic!r}")
        meta = dict(kv.split("=", 1) for kv in fh.readline().strip().split("\t"))
        branches = tuple((n, int(d)) for n, d in
                         (b.split(":") for b in meta["branches"].split(";")))
        spec = NetworkSpec(
            branches=branches,
            branch_hidden=int(meta["branch_hidden"]),
            trunk_hidden=tuple(int(x) for x in meta["trunk_hidden"].split(",")),
            n_classes=int(meta["n_classes"]),
            variant=meta["variant"],
        )
        params = {}
        for line in fh:
            key, shape, vals = line.rstrip("\n").split("\t")
            arr = np.array([float(x) for x in vals.split(" ")])
            params[key] = arr.reshape(tuple(int(s) for s in shape.split(",")))
    return spec, params
