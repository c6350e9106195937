"""Statistical feature blocks extracted from per-restaurant transaction history.

Eleven blocks: five decile vectors (price, tip, hourly capacity, revisits,
loyalty), three temporal distributions, GMM-based party-size proportions and
prices, and a positional zip-digit one-hot. Total dimensionality 162.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .txn_core import RestaurantIndex, Transaction

STAT_BLOCK_DIMS = {
    "price_deciles": 9,
    "tip_deciles": 9,
    "capacity_deciles": 9,
    "revisit_deciles": 9,
    "loyalty_deciles": 9,
    "dow_dist": 7,
    "weekday_hour_dist": 24,
    "weekend_hour_dist": 24,
    "party_prop": 6,
    "party_price": 6,
    "zip_onehot": 50,
}
STAT_DIM = sum(STAT_BLOCK_DIMS.values())  # 162


def deciles(values) -> np.ndarray:
    """Nine deciles by linear interpolation on order statistics.

    For p in {0.1..0.9}: h = (n-1)p, result = v[floor(h)] + frac(h) *
    (v[floor(h)+1] - v[floor(h)]). Empty input yields nine zeros.
    """
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    if n == 0:
        return np.zeros(9)
    out = np.empty(9)
    for i, p in enumerate(np.arange(1, 10) / 10.0):
        h = (n - 1) * p
        lo = int(np.floor(h))
        hi = min(lo + 1, n - 1)
        out[i] = v[lo] + (h - lo) * (v[hi] - v[lo])
    return out


def tip_series(txns: list[Transaction]) -> list[int]:
    return [t.settle_amount - t.auth_amount for t in txns]


def hourly_capacity(txns: list[Transaction]) -> list[int]:
    """Transaction counts per (date, hour) bucket, active hours only."""
    counts: dict[tuple, int] = {}
    for t in txns:
        key = (t.timestamp.date(), t.timestamp.hour)
        counts[key] = counts.get(key, 0) + 1
    return [counts[k] for k in sorted(counts)]


def temporal_dists(txns: list[Transaction]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalized day-of-week, weekday-hour, and weekend-hour histograms.

    Saturday/Sunday count as weekend. Each histogram sums to 1, or is
    all-zero when the restaurant has no qualifying transactions.
    """
    dow = np.zeros(7)
    wd_hours = np.zeros(24)
    we_hours = np.zeros(24)
    for t in txns:
        d = t.timestamp.weekday()
        dow[d] += 1
        if d >= 5:
            we_hours[t.timestamp.hour] += 1
        else:
            wd_hours[t.timestamp.hour] += 1
    for arr in (dow, wd_hours, we_hours):
        s = arr.sum()
        if s > 0:
            arr /= s
    return dow, wd_hours, we_hours


def revisit_counts(txns: list[Transaction]) -> list[int]:
    """Per distinct cardholder, the number of transactions at this restaurant."""
    counts: dict[str, int] = {}
    for t in txns:
        counts[t.cardholder_id] = counts.get(t.cardholder_id, 0) + 1
    return [counts[c] for c in sorted(counts)]


def loyalty_counts(txns: list[Transaction], index: RestaurantIndex) -> list[int]:
    """Per distinct customer of this restaurant, how many restaurants they
    visit anywhere (global cardholder index)."""
    out = []
    for chid in sorted({t.cardholder_id for t in txns}):
        visited = {t.merchant_id for t in index.cardholders.get(chid, [])}
        out.append(len(visited))
    return out


# --- Gaussian mixture over authorized amounts ---

class GmmError(Exception):
    pass


@dataclass
class GmmModel:
    phi: np.ndarray     # K mixture weights
    mu: np.ndarray      # K means, cents; sorted ascending
    sigma: np.ndarray   # K standard deviations, cents
    loglik: float
    aic: float
    n_iter: int = 0

    @property
    def K(self) -> int:
        return len(self.mu)


def _log_gauss(x: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    return -0.5 * np.log(2 * np.pi) - np.log(sigma) - 0.5 * ((x - mu) / sigma) ** 2


def _kmeanspp_init(x: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[int(rng.integers(0, len(x)))]]
    for _ in range(K - 1):
        d2 = np.min([(x - c) ** 2 for c in centers], axis=0)
        if d2.sum() <= 0:
            centers.append(x[int(rng.integers(0, len(x)))])
            continue
        centers.append(x[int(np.searchsorted(np.cumsum(d2), rng.random() * d2.sum()))])
    return np.sort(np.asarray(centers, dtype=float))


def gmm_fit(x, K: int, seed: int = 0, max_iter: int = 200, tol: float = 1e-6) -> GmmModel:
    """EM fit of a K-component 1-D Gaussian mixture.

    k-means++-style initialization; sigma floored at max(1, 1e-3 * std(x));
    log-likelihood asserted nondecreasing across iterations.
    """
    x = np.asarray(x, dtype=float)
    if len(x) < K:
        raise GmmError(f"need at least {K} points for K={K}, got {len(x)}")
    rng = np.random.default_rng(seed)
    sigma_floor = max(1.0, 1e-3 * float(np.std(x)))

    mu = _kmeanspp_init(x, K, rng)
    sigma = np.full(K, max(float(np.std(x)), sigma_floor))
    phi = np.full(K, 1.0 / K)

    prev_ll = -np.inf
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        # E step
        log_p = np.log(phi)[:, None] + np.stack(
            [_log_gauss(x, mu[k], sigma[k]) for k in range(K)])
        m = log_p.max(axis=0)
        log_total = m + np.log(np.exp(log_p - m).sum(axis=0))
        ll = float(log_total.sum())
        if ll + 1e-9 < prev_ll:
            raise GmmError(f"log-likelihood decreased: {prev_ll} -> {ll}")
        resp = np.exp(log_p - log_total)
        # M step
        nk = resp.sum(axis=1)
        nk = np.maximum(nk, 1e-12)
        phi = nk / len(x)
        mu = (resp @ x) / nk
        var = (resp @ x**2) / nk - mu**2
        sigma = np.maximum(np.sqrt(np.maximum(var, 0.0)), sigma_floor)
        if ll - prev_ll < tol and n_iter > 1:
            prev_ll = ll
            break
        prev_ll = ll

    order = np.argsort(mu)
    phi, mu, sigma = phi[order], mu[order], sigma[order]
    log_p = np.log(phi)[:, None] + np.stack(
        [_log_gauss(x, mu[k], sigma[k]) for k in range(K)])
    m = log_p.max(axis=0)
    loglik = float((m + np.log(np.exp(log_p - m).sum(axis=0))).sum())
    aic = 2.0 * (3 * K - 1) - 2.0 * loglik
    return GmmModel(phi, mu, sigma, loglik, aic, n_iter)


def select_k_aic(x, K_max: int = 6, seed: int = 0) -> GmmModel:
    """Fit K = 1..min(K_max, |x|) and return the minimum-AIC model (ties:
    smaller K)."""
    x = np.asarray(x, dtype=float)
    if len(x) < 1:
        raise GmmError("select_k_aic requires at least one point")
    best = None
    for K in range(1, min(K_max, len(x)) + 1):
        model = gmm_fit(x, K, seed=seed)
        if best is None or model.aic < best.aic:
            best = model
    return best


def party_features(model: GmmModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Hard-assign transactions to mixture components (sorted by mean) and
    read the components as party sizes 1..K."""
    x = np.asarray(x, dtype=float)
    prop = np.zeros(6)
    price = np.zeros(6)
    if len(x) == 0:
        return prop, price
    log_p = np.log(model.phi)[:, None] + np.stack(
        [_log_gauss(x, model.mu[k], model.sigma[k]) for k in range(model.K)])
    assign = np.argmax(log_p, axis=0)
    for k in range(min(model.K, 6)):
        mask = assign == k
        prop[k] = mask.mean()
        if mask.any():
            price[k] = x[mask].mean()
    # renormalize in case K > 6 truncated some mass
    s = prop.sum()
    if s > 0:
        prop /= s
    return prop, price


def zip_feature(zip5: str) -> np.ndarray:
    """Positional digit one-hot: digit d at position i sets index 10i + d."""
    if len(zip5) != 5 or not zip5.isdigit():
        raise ValueError(f"malformed zip5: {zip5!r}")
    out = np.zeros(50)
    for i, ch in enumerate(zip5):
        out[10 * i + int(ch)] = 1.0
    return out


@dataclass
class StatFeatureBlock:
    blocks: dict[str, np.ndarray]
    empty: bool = False

    def __post_init__(self):
        if set(self.blocks) != set(STAT_BLOCK_DIMS):
            raise ValueError("wrong block set")
        for name, arr in self.blocks.items():
            if len(arr) != STAT_BLOCK_DIMS[name]:
                raise ValueError(f"block {name}: expected {STAT_BLOCK_DIMS[name]}, got {len(arr)}")

    def concat(self) -> np.ndarray:
        return np.concatenate([self.blocks[name] for name in STAT_BLOCK_DIMS])


def extract_restaurant(rid: str, index: RestaurantIndex,
                       seed: int = 0, gmm_kmax: int = 6) -> StatFeatureBlock:
    """All 11 statistical blocks for one restaurant."""
    bucket = index.restaurants[rid]
    txns = bucket.txns
    amounts = [t.auth_amount for t in txns]
    dow, wd, we = temporal_dists(txns)
    if txns:
        model = select_k_aic(amounts, K_max=gmm_kmax, seed=seed)
        party_prop, party_price = party_features(model, amounts)
    else:
        party_prop, party_price = np.zeros(6), np.zeros(6)
    blocks = {
        "price_deciles": deciles(amounts),
        "tip_deciles": deciles(tip_series(txns)),
        "capacity_deciles": deciles(hourly_capacity(txns)),
        "revisit_deciles": deciles(revisit_counts(txns)),
        "loyalty_deciles": deciles(loyalty_counts(txns, index)),
        "dow_dist": dow,
        "weekday_hour_dist": wd,
        "weekend_hour_dist": we,
        "party_prop": party_prop,
        "party_price": party_price,
        "zip_onehot": zip_feature(bucket.zip5),
    }
    return StatFeatureBlock(blocks, empty=not txns)


def _derive_seed(base_seed: int, rid: str) -> int:
    import zlib

    return (base_seed << 32) ^ zlib.crc32(rid.encode())


def extract_all(index: RestaurantIndex, seed: int = 0) -> dict[str, StatFeatureBlock]:
    return {rid: extract_restaurant(rid, index, seed=_derive_seed(seed, rid))
            for rid in index.restaurants}


def feature_header() -> list[str]:
    cols = ["restaurant_id"]
    for name, dim in STAT_BLOCK_DIMS.items():
        cols.extend(f"{name}_{i}" for i in range(dim))
    return cols


def write_features(path, features: dict[str, StatFeatureBlock]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(feature_header()) + "\n")
        for rid in sorted(features):
            vec = features[rid].concat()
            fh.write(rid + "\t" + "\t".join(f"{x:.9g}" for x in vec) + "\n")


def read_features(path) -> dict[str, np.ndarray]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("restaurant_id"):
            raise ValueError("bad feature file header")
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            out[parts[0]] = np.array([float(x) for x in parts[1:]])
    return out
