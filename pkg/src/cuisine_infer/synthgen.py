"""Seeded synthetic-transaction generator with planted cuisine signals.

Stands in for a real card-transaction feed: every restaurant gets a cuisine,
and price level, tipping, busy hours, day-of-week mix, party sizes, and name
vocabulary all depend on it. Ground-truth labels are emitted alongside so
the whole pipeline can be validated at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta

import numpy as np

from .txn_core import CuisineClass, Transaction, write_transactions
from .weak_label import LabelSet, load_taxonomy

START_DATE = datetime(2025, 1, 6)  # a Monday

GENERIC_FILLERS = [
    "HOUSE", "KITCHEN", "PLACE", "CORNER", "GARDEN", "GOLDEN", "ROYAL",
    "FAMILY", "MAIN", "STREET", "VILLAGE", "TOWN", "CITY", "RIVER", "SUNSET",
    "STAR", "HAPPY", "LUCKY", "BLUE", "SILVER", "GREEN", "UNION", "CENTRAL",
    "HARBOR", "PARK", "GROVE", "SUMMIT", "VALLEY", "CROSSING", "TABLE",
]

# Non-seed vocabulary that leans toward one cuisine; these are the words the
# bootstrap step should discover and the name embedding should exploit.
STYLE_WORDS = {
    CuisineClass.LatinAmerican: ["FIESTA", "CASA", "SOMBRERO", "AZTECA", "MARIACHI", "PLAYA"],
    CuisineClass.European: ["VILLA", "CHATEAU", "NONNA", "VIENNA", "ROMA", "PROVENCE"],
    CuisineClass.MMA: ["OASIS", "OLIVE", "SULTAN", "CEDARS", "NILE", "AEGEAN"],
    CuisineClass.SouthAsian: ["SPICE", "TAJ", "GANGES", "RAJA", "SAFFRON", "MAHARAJA"],
    CuisineClass.SouthEastAsian: ["BAMBOO", "ORCHID", "JASMINE", "ELEPHANT", "LOTUS", "MANGO"],
    CuisineClass.EastAsian: ["DRAGON", "PANDA", "JADE", "LANTERN", "EMPIRE", "BLOSSOM"],
    CuisineClass.GrillSteak: ["RANCH", "FLAME", "EMBER", "OAK", "CATTLE", "IRON"],
    CuisineClass.Fastfood: ["SPEEDY", "JUMBO", "CRISPY", "COMBO", "SNACK", "ZESTY"],
    CuisineClass.Bar: ["BARREL", "HOPS", "ANCHOR", "CROW", "CELLAR", "GRIFFIN"],
    CuisineClass.Dessert: ["SWEET", "SUGAR", "HONEY", "VANILLA", "BERRY", "MAPLE"],
}


# Cuisine pairs that are deliberately confusable: identical price, tip,
# day-of-week, and party-size marginals within a pair. Each restaurant in a
# paired cuisine draws a subtype that couples its price level to its busy
# meal (lunch vs dinner), with the coupling inverted between the two pair
# members. Marginal feature blocks then look the same for both cuisines and
# only the price-by-hour interaction tells them apart, so a linear model
# cannot fully separate them while a nonlinear one can.
XOR_PAIRS = (
    (CuisineClass.LatinAmerican, CuisineClass.MMA),
    (CuisineClass.European, CuisineClass.GrillSteak),
    (CuisineClass.SouthAsian, CuisineClass.SouthEastAsian),
)


def _hour_profile(peaks: list[tuple[float, float, float]]) -> np.ndarray:
    """24 hourly weights from (center, width, weight) gaussian bumps."""
    hours = np.arange(24, dtype=float)
    w = np.zeros(24)
    for center, width, weight in peaks:
        d = np.minimum(np.abs(hours - center), 24 - np.abs(hours - center))
        w += weight * np.exp(-0.5 * (d / width) ** 2)
    return w


@dataclass(frozen=True)
class CuisineParams:
    price_log_mu: float      # log of per-person price in cents
    price_log_sigma: float
    tip_rate: float          # fraction of auth; 0 for cash-tip cuisines
    weekday_hours: tuple     # 24 nonnegative weights
    weekend_hours: tuple
    dow_weights: tuple       # 7 weights, Monday first
    party_probs: tuple       # categorical over party sizes 1..6

    def __post_init__(self):
        for profile in (self.weekday_hours, self.weekend_hours, self.dow_weights):
            arr = np.asarray(profile, dtype=float)
            if (arr < 0).any() or arr.sum() <= 0:
                raise ValueError("weight profiles must be nonnegative and not all-zero")
        if not (0 <= self.tip_rate <= 0.5):
            raise ValueError("tip_rate must be in [0, 0.5]")
        p = np.asarray(self.party_probs, dtype=float)
        if len(p) != 6 or (p < 0).any() or abs(p.sum() - 1) > 1e-6:
            raise ValueError("party_probs must be 6 nonnegative values summing to 1")


def _params(mu_cents, sigma, tip, wd_peaks, we_peaks, dow, party) -> CuisineParams:
    return CuisineParams(
        price_log_mu=float(np.log(mu_cents)),
        price_log_sigma=sigma,
        tip_rate=tip,
        weekday_hours=tuple(_hour_profile(wd_peaks)),
        weekend_hours=tuple(_hour_profile(we_peaks)),
        dow_weights=tuple(dow),
        party_probs=tuple(party),
    )


# Neutral two-peak hour profiles for subtype-modulated (paired) cuisines:
# subtype 0 leans lunch, subtype 1 leans dinner (or vice versa, see XOR_PAIRS).
LUNCH_PEAKS = [(12, 1.2, 1.0), (19, 1.4, 0.35)]
DINNER_PEAKS = [(12, 1.2, 0.35), (19, 1.4, 1.0)]
_NEUTRAL_PEAKS = [(12, 1.2, 1.0), (19, 1.4, 1.0)]

DEFAULT_CUISINE_PARAMS: dict[CuisineClass, CuisineParams] = {
    CuisineClass.LatinAmerican: _params(
        1550, 0.28, 0.0,
        _NEUTRAL_PEAKS, _NEUTRAL_PEAKS,
        [1.0, 1.0, 1.0, 1.1, 1.2, 1.1, 0.9], [0.25, 0.35, 0.15, 0.15, 0.07, 0.03]),
    CuisineClass.European: _params(
        2700, 0.27, 0.18,
        _NEUTRAL_PEAKS, _NEUTRAL_PEAKS,
        [0.7, 0.8, 0.9, 1.0, 1.4, 1.6, 1.2], [0.20, 0.45, 0.10, 0.15, 0.07, 0.03]),
    CuisineClass.MMA: _params(
        1550, 0.28, 0.0,
        _NEUTRAL_PEAKS, _NEUTRAL_PEAKS,
        [1.0, 1.0, 1.0, 1.1, 1.2, 1.1, 0.9], [0.25, 0.35, 0.15, 0.15, 0.07, 0.03]),
    CuisineClass.SouthAsian: _params(
        2200, 0.26, 0.11,
        _NEUTRAL_PEAKS, _NEUTRAL_PEAKS,
        [0.9, 0.9, 1.0, 1.0, 1.2, 1.3, 1.0], [0.15, 0.35, 0.20, 0.18, 0.08, 0.04]),
    CuisineClass.SouthEastAsian: _params(
        2200, 0.26, 0.11,
        _NEUTRAL_PEAKS, _NEUTRAL_PEAKS,
        [0.9, 0.9, 1.0, 1.0, 1.2, 1.3, 1.0], [0.15, 0.35, 0.20, 0.18, 0.08, 0.04]),
    CuisineClass.EastAsian: _params(
        1900, 0.28, 0.0,
        [(12, 1.1, 0.9), (18.5, 1.4, 1.0)], [(18, 2.0, 1.0)],
        [1.0, 1.0, 1.0, 1.0, 1.1, 1.0, 1.0], [0.15, 0.40, 0.18, 0.17, 0.07, 0.03]),
    CuisineClass.GrillSteak: _params(
        2700, 0.27, 0.18,
        _NEUTRAL_PEAKS, _NEUTRAL_PEAKS,
        [0.7, 0.8, 0.9, 1.0, 1.4, 1.6, 1.2], [0.20, 0.45, 0.10, 0.15, 0.07, 0.03]),
    CuisineClass.Fastfood: _params(
        1100, 0.35, 0.0,
        [(12, 1.0, 1.0), (18, 1.5, 0.8)], [(13, 2.5, 1.0), (18, 2.0, 0.7)],
        [1.0, 1.0, 1.0, 1.0, 1.1, 1.0, 1.0], [0.45, 0.30, 0.12, 0.08, 0.03, 0.02]),
    CuisineClass.Bar: _params(
        2200, 0.40, 0.18,
        [(21.5, 1.8, 1.0)], [(22, 2.2, 1.0), (15, 2.0, 0.3)],
        [0.5, 0.6, 0.8, 1.1, 1.8, 2.0, 1.0], [0.30, 0.40, 0.15, 0.10, 0.03, 0.02]),
    CuisineClass.Dessert: _params(
        800, 0.30, 0.0,
        [(15, 2.2, 1.0), (10, 1.5, 0.5)], [(14.5, 3.0, 1.0)],
        [0.9, 0.9, 0.9, 1.0, 1.1, 1.3, 1.2], [0.50, 0.30, 0.10, 0.06, 0.03, 0.01]),
}

# Mildly imbalanced class mix, echoing that real cuisine frequencies are skewed.
DEFAULT_CUISINE_MIX = (1.2, 0.9, 0.6, 0.5, 0.7, 1.1, 1.0, 1.6, 1.3, 1.1)


@dataclass(frozen=True)
class SynthConfig:
    n_restaurants: int = 100
    n_customers: int = 1000
    days: int = 30
    seed: int = 0
    cuisine_params: dict = field(default_factory=lambda: dict(DEFAULT_CUISINE_PARAMS))
    cuisine_mix: tuple = DEFAULT_CUISINE_MIX
    p_kw: float = 0.4                # prob. a name carries a seed keyword of its cuisine
    p_style: float = 0.6             # prob. an extra token comes from the cuisine style vocab
    filler_words: tuple = tuple(GENERIC_FILLERS)
    preference_concentration: float = 0.3   # Dirichlet over the 10 cuisines
    visits_per_day: float = 0.25     # mean visits per customer per day
    home_zip_weight: float = 4.0     # sampling weight boost for same-zip restaurants
    n_zips: int = 25
    xor_pairs: tuple = XOR_PAIRS     # confusable cuisine pairs with subtypes
    subtype_price_shift: float = 0.30  # log-price shift between the two subtypes

    def __post_init__(self):
        if self.n_restaurants < 0 or self.n_customers < 0 or self.days < 0:
            raise ValueError("counts must be nonnegative")
        if not (0 <= self.p_kw <= 1):
            raise ValueError("p_kw must be in [0, 1]")
        mix = np.asarray(self.cuisine_mix, dtype=float)
        if len(mix) != 10 or (mix < 0).any() or mix.sum() <= 0:
            raise ValueError("cuisine_mix must be 10 nonnegative weights, not all zero")


def name_for(cuisine: CuisineClass, rng: np.random.Generator, cfg: SynthConfig,
             taxonomy=None) -> str:
    """Draw a 1-4 token restaurant name for a cuisine.

    With probability p_kw the name embeds a uniformly chosen seed keyword of
    the cuisine; remaining tokens come from the cuisine's style vocabulary or
    the shared filler list.
    """
    if taxonomy is None:
        taxonomy = load_taxonomy()
    tokens = []
    use_kw = rng.random() < cfg.p_kw
    n_extra = int(rng.integers(1, 4)) if use_kw else int(rng.integers(1, 5))
    n_extra = min(n_extra, 4 - (1 if use_kw else 0))
    for _ in range(n_extra):
        if rng.random() < cfg.p_style:
            vocab = STYLE_WORDS[cuisine]
        else:
            vocab = cfg.filler_words
        tokens.append(vocab[int(rng.integers(0, len(vocab)))])
    if use_kw:
        kws = sorted(taxonomy.keywords[cuisine])
        kw = kws[int(rng.integers(0, len(kws)))]
        tokens.insert(int(rng.integers(0, len(tokens) + 1)), kw)
    return " ".join(t.title() for t in tokens)


@dataclass
class SynthResult:
    transactions: list[Transaction]
    truth: LabelSet
    party_sizes: dict[str, dict[int, int]]  # restaurant_id -> {party size: txn count}
    names: dict[str, str]                   # restaurant_id -> generated name


def generate(cfg: SynthConfig) -> SynthResult:
    """Generate a deterministic transaction log with planted cuisine signals."""
    rng = np.random.default_rng(cfg.seed)
    taxonomy = load_taxonomy()
    classes = list(CuisineClass)
    mix = np.asarray(cfg.cuisine_mix, dtype=float)
    mix = mix / mix.sum()

    zips = [f"{int(z):05d}" for z in rng.integers(10000, 99999, size=cfg.n_zips)]

    pair_of = {}
    for a, b in cfg.xor_pairs:
        pair_of[a] = (a, b)
        pair_of[b] = (a, b)

    rest_ids = [f"R{i:06d}" for i in range(cfg.n_restaurants)]
    rest_cuisine = {}
    rest_zip = {}
    rest_name = {}
    rest_subtype = {}   # 1 = high-price subtype, only for paired cuisines
    truth = LabelSet()
    for rid in rest_ids:
        cuisine = classes[int(rng.choice(10, p=mix))]
        rest_cuisine[rid] = cuisine
        rest_zip[rid] = zips[int(rng.integers(0, len(zips)))]
        rest_name[rid] = name_for(cuisine, rng, cfg, taxonomy)
        if cuisine in pair_of:
            rest_subtype[rid] = int(rng.random() < 0.5)
        truth.add(rid, cuisine, "truth")

    lunch_profile = _hour_profile(LUNCH_PEAKS)
    dinner_profile = _hour_profile(DINNER_PEAKS)

    by_cuisine: dict[CuisineClass, list[str]] = {c: [] for c in classes}
    for rid in rest_ids:
        by_cuisine[rest_cuisine[rid]].append(rid)

    # date lookup per day-of-week over the window
    dates_by_dow: dict[int, list[datetime]] = {d: [] for d in range(7)}
    for d in range(cfg.days):
        day = START_DATE + timedelta(days=d)
        dates_by_dow[day.weekday()].append(day)

    txns: list[Transaction] = []
    party_sizes: dict[str, dict[int, int]] = {rid: {} for rid in rest_ids}

    for c_idx in range(cfg.n_customers):
        chid = f"C{c_idx:06d}"
        home = zips[int(rng.integers(0, len(zips)))]
        pref = rng.dirichlet(np.full(10, cfg.preference_concentration))
        # symmetrize preferences within each confusable pair so co-visitation
        # patterns cannot tell the pair members apart
        for a, b in cfg.xor_pairs:
            avg = (pref[a] + pref[b]) / 2.0
            pref[a] = pref[b] = avg
        n_visits = int(rng.poisson(cfg.visits_per_day * cfg.days))
        for _ in range(n_visits):
            cuisine = classes[int(rng.choice(10, p=pref))]
            pool = by_cuisine[cuisine]
            if not pool:
                continue
            weights = np.array(
                [cfg.home_zip_weight if rest_zip[r] == home else 1.0 for r in pool])
            rid = pool[int(rng.choice(len(pool), p=weights / weights.sum()))]
            params: CuisineParams = cfg.cuisine_params[rest_cuisine[rid]]

            dow_w = np.array([params.dow_weights[d] if dates_by_dow[d] else 0.0
                              for d in range(7)])
            if dow_w.sum() <= 0:
                continue
            dow = int(rng.choice(7, p=dow_w / dow_w.sum()))
            day = dates_by_dow[dow][int(rng.integers(0, len(dates_by_dow[dow])))]
            price_mu = params.price_log_mu
            if rid in rest_subtype:
                subtype = rest_subtype[rid]
                price_mu += cfg.subtype_price_shift * (1 if subtype else -1)
                first, _second = pair_of[rest_cuisine[rid]]
                # XOR coupling: first pair member is dinner-leaning when
                # expensive, second pair member when cheap
                dinner = (subtype == 1) if rest_cuisine[rid] is first \
                    else (subtype == 0)
                profile = dinner_profile if dinner else lunch_profile
            else:
                profile = np.asarray(
                    params.weekend_hours if dow >= 5 else params.weekday_hours)
            hour = int(rng.choice(24, p=profile / profile.sum()))
            minute = int(rng.integers(0, 60))
            ts = day.replace(hour=hour, minute=minute)

            party = 1 + int(rng.choice(6, p=np.asarray(params.party_probs)))
            per_person = np.exp(rng.normal(price_mu, params.price_log_sigma))
            auth = max(1, int(round(party * per_person)))
            if params.tip_rate > 0:
                tip_frac = params.tip_rate * rng.uniform(0.85, 1.15)
                settle = int(round(auth * (1 + tip_frac)))
            else:
                settle = auth
            settle = max(settle, auth)

            txns.append(Transaction(rid, rest_name[rid], rest_zip[rid], ts,
                                    chid, auth, settle))
            party_sizes[rid][party] = party_sizes[rid].get(party, 0) + 1

    txns.sort(key=lambda t: (t.timestamp, t.cardholder_id, t.merchant_id, t.auth_amount))
    return SynthResult(txns, truth, party_sizes, rest_name)


def write_outputs(result: SynthResult, txn_path, labels_path, party_path) -> None:
    write_transactions(txn_path, result.transactions)
    result.truth.write_tsv(labels_path)
    with open(party_path, "w", encoding="utf-8") as fh:
        for rid in sorted(result.party_sizes):
            for size in sorted(result.party_sizes[rid]):
                fh.write(f"{rid}\t{size}\t{result.party_sizes[rid][size]}\n")


def write_pretrained_vectors(path, names: dict[str, str], dim: int, seed: int) -> None:
    """Emit a deterministic stand-in for an external pretrained vector file.

    One random unit vector per lowercase name token, so name embeddings are
    well-defined without shipping a third-party resource.
    """
    import zlib

    from .weak_label import tokenize_name

    vocab = sorted({t.lower() for name in names.values() for t in tokenize_name(name)})
    with open(path, "w", encoding="utf-8") as fh:
        for tok in vocab:
            tok_seed = zlib.crc32(tok.encode())
            v = np.random.default_rng((seed << 32) ^ tok_seed).normal(size=dim)
            v /= np.linalg.norm(v)
            fh.write(tok + " " + " ".join(f"{x:.6f}" for x in v) + "\n")


def corrupt_file(src_path, dst_path, n_corrupt: int, seed: int) -> list[int]:
    """Copy a transaction CSV while corrupting n_corrupt random data rows.

    Returns the 1-based line numbers of the corrupted rows. Used to exercise
    lenient-mode reject reporting.
    """
    with open(src_path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    n_data = len(lines) - 1
    if n_corrupt > n_data:
        raise ValueError("more corruptions than data rows")
    rng = np.random.default_rng(seed)
    picks = sorted(rng.choice(n_data, size=n_corrupt, replace=False) + 2)
    modes = ["badzip", "badts", "badamount", "negtip"]
    for i, line_no in enumerate(picks):
        parts = lines[line_no - 1].split(",")
        mode = modes[i % len(modes)]
        if mode == "badzip":
            parts[2] = "ABCDE"
        elif mode == "badts":
            parts[3] = "not-a-time"
        elif mode == "badamount":
            parts[5] = "12.5x"
        else:
            parts[5], parts[6] = parts[6], str(max(0, int(parts[5]) - 1))
        lines[line_no - 1] = ",".join(parts)
    with open(dst_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return [int(p) for p in picks]
