"""Merchant-side analytics: QoS, popularity, market leaders, retention, customers."""
from __future__ import annotations

import math
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from importlib import resources
from typing import Iterable, Mapping, Sequence
from urllib.parse import urlsplit

import numpy as np

from .metrics import UndefinedCorrelationError, pearson, tokenize
from .model import AccountDossier, InsufficientDataError, Merchant, SnapshotSeries

LEADER_THRESHOLD = 0.71
AVERAGE_REPUTATION = 40.0


class UndefinedPerformanceError(ValueError):
    pass


class AllZeroWarning(UserWarning):
    pass


@dataclass(frozen=True)
class QosResult:
    merchant_id: str
    per_promise_terms: tuple[tuple[str, float], ...]
    qos: float


@dataclass(frozen=True)
class PopularityResult:
    merchant_id: str
    alexa_norm: float
    osn_popularity: float
    popularity: float


@dataclass(frozen=True)
class KneePoint:
    x: float
    y: float
    index: int
    distance: float


@dataclass(frozen=True)
class LeaderReport:
    ranking: tuple[tuple[str, float], ...]
    leaders: tuple[str, ...]
    gap: float | None
    oligopoly: bool
    leader_share: float


@dataclass(frozen=True)
class RetentionReport:
    subject_id: str
    rows: tuple[tuple[datetime, int, int], ...]  # (timestamp, hour of day, follower count)
    dips: tuple[tuple[datetime, int], ...]  # (timestamp, followers lost vs previous hour)
    pcc_vs_hour: float | None


@dataclass(frozen=True)
class QosPopularityReport:
    rows: tuple[tuple[str, float, float], ...]
    pcc: float | None
    most_popular: tuple[str, float]  # merchant, its QoS
    highest_qos: tuple[str, float]  # merchant, its popularity


@dataclass
class CustomerReport:
    n_customers: int
    frac_above_threshold: float | None
    frac_with_blacklisted_url: float
    top_bio_terms: list[tuple[str, int]]
    verified_count: int
    subscriptions: dict[str, int] = field(default_factory=dict)
    leader_subscription_rate_above: float | None = None
    leader_subscription_rate_below: float | None = None
    reputation_source: str = "data"


# -- QoS ---------------------------------------------------------------------

def per_promise_score(expect: float, perform: float) -> float:
    """1 - (expect - perform) / perform; exceeds 1 when the merchant overdelivers."""
    if not perform > 0:
        raise UndefinedPerformanceError(f"perform must be > 0, got {perform}")
    return 1.0 - (expect - perform) / perform


def merchant_qos(merchant: Merchant) -> QosResult:
    expect = {p.promise_id: p.expect for p in merchant.promises}
    terms = tuple((pid, per_promise_score(expect[pid], perf))
                  for pid, perf in merchant.performances if pid in expect)
    if not terms:
        raise InsufficientDataError(f"{merchant.merchant_id}: no measured promises")
    return QosResult(merchant.merchant_id, terms, math.fsum(t for _, t in terms) / len(terms))


# -- popularity --------------------------------------------------------------

def alexa_norm(ranks: Mapping[str, int]) -> dict[str, float]:
    if not ranks:
        raise InsufficientDataError("no traffic ranks")
    if any(r < 1 for r in ranks.values()):
        raise ValueError("traffic ranks must be >= 1")
    worst = max(ranks.values())
    return {m: 1.0 - r / worst for m, r in ranks.items()}


def osn_popularity(tweet_counts: Mapping[str, int]) -> dict[str, float]:
    if not tweet_counts:
        raise InsufficientDataError("no promotional tweet counts")
    top = max(tweet_counts.values())
    if top <= 0:
        warnings.warn("every promotional tweet count is zero", AllZeroWarning, stacklevel=2)
        return {m: 0.0 for m in tweet_counts}
    return {m: c / top for m, c in tweet_counts.items()}


def merchant_popularity(alexa: Mapping[str, float], osn: Mapping[str, float]
                        ) -> dict[str, PopularityResult]:
    missing = set(alexa) ^ set(osn)
    if missing:
        raise KeyError(f"popularity component missing for {sorted(missing)}")
    return {m: PopularityResult(m, alexa[m], osn[m], (alexa[m] + osn[m]) / 2.0)
            for m in alexa}


def popularity_of(merchants: Iterable[Merchant]) -> dict[str, PopularityResult]:
    merchants = list(merchants)
    a = alexa_norm({m.merchant_id: m.traffic_rank for m in merchants})
    o = osn_popularity({m.merchant_id: m.promo_tweet_count for m in merchants})
    return merchant_popularity(a, o)


def rank_leaders(popularities: Mapping[str, float | PopularityResult], top_k: int | None = None,
                 threshold: float | None = None) -> LeaderReport:
    """Sort merchants by popularity and split off the leading group.

    With ``top_k`` the first k merchants lead; otherwise every merchant at or
    above ``threshold`` (default 0.71) does. ``gap`` is the popularity drop
    from the last leader to the next merchant and is ``None`` when there is
    no such pair. The market is flagged an oligopoly when a strict minority
    leads and the gap is positive.
    """
    if not popularities:
        raise InsufficientDataError("no merchants to rank")
    vals = {m: (p.popularity if isinstance(p, PopularityResult) else float(p))
            for m, p in popularities.items()}
    ranking = tuple(sorted(vals.items(), key=lambda kv: (-kv[1], kv[0])))
    if top_k is not None:
        k = max(0, min(top_k, len(ranking)))
    else:
        t = LEADER_THRESHOLD if threshold is None else threshold
        k = sum(1 for _, v in ranking if v >= t)
    gap = ranking[k - 1][1] - ranking[k][1] if 0 < k < len(ranking) else None
    total = sum(v for _, v in ranking)
    share = sum(v for _, v in ranking[:k]) / total if total > 0 else 0.0
    oligopoly = gap is not None and gap > 0 and k < len(ranking) / 2
    return LeaderReport(ranking, tuple(m for m, _ in ranking[:k]), gap, oligopoly, share)


# -- curves ------------------------------------------------------------------

def knee_point(curve: Sequence[tuple[float, float]]) -> KneePoint | None:
    """Point farthest from the chord joining the curve's endpoints.

    Returns ``None`` when every point lies on the chord. Ties go to the
    smaller x.
    """
    pts = np.asarray(curve, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise InsufficientDataError("knee detection needs >= 3 (x, y) points")
    if np.any(np.diff(pts[:, 0]) <= 0):
        raise ValueError("curve x values must be strictly increasing")
    p0, p1 = pts[0], pts[-1]
    d = p1 - p0
    length = math.hypot(d[0], d[1])
    rel = pts - p0
    dist = np.abs(d[0] * rel[:, 1] - d[1] * rel[:, 0]) / length
    best = float(dist.max())
    if best <= 1e-12 * length:
        return None
    i = int(np.flatnonzero(dist >= best * (1 - 1e-12))[0])
    return KneePoint(float(pts[i, 0]), float(pts[i, 1]), i, best)


def cdf_curve(values: Iterable[float]) -> list[tuple[float, float]]:
    """Empirical CDF as (value, fraction <= value) with one point per distinct value."""
    v = np.sort(np.asarray(list(values), dtype=float))
    if v.size == 0:
        return []
    uniq, idx = np.unique(v, return_index=True)
    counts = np.append(idx[1:], v.size)
    return [(float(x), float(c) / v.size) for x, c in zip(uniq, counts)]


# -- retention ---------------------------------------------------------------

def retention_report(series: SnapshotSeries) -> RetentionReport:
    snaps = series.snapshots
    if len(snaps) < 24:
        raise InsufficientDataError(
            f"{series.subject_id}: retention needs >= 24 snapshots, got {len(snaps)}")
    counts = [len(ids) for _, ids in snaps]
    hours = [ts.hour for ts, _ in snaps]
    rows = tuple((ts, h, c) for (ts, _), h, c in zip(snaps, hours, counts))
    dips = tuple((snaps[i][0], counts[i - 1] - counts[i])
                 for i in range(1, len(counts)) if counts[i] < counts[i - 1])
    try:
        pcc = pearson(counts, hours)
    except UndefinedCorrelationError:
        pcc = None
    return RetentionReport(series.subject_id, rows, dips, pcc)


def qos_popularity_report(qos: Mapping[str, float | QosResult],
                          popularity: Mapping[str, float | PopularityResult]
                          ) -> QosPopularityReport:
    q = {m: (v.qos if isinstance(v, QosResult) else float(v)) for m, v in qos.items()}
    p = {m: (v.popularity if isinstance(v, PopularityResult) else float(v))
         for m, v in popularity.items()}
    shared = sorted(set(q) & set(p))
    if len(shared) < 2:
        raise InsufficientDataError("need >= 2 merchants with both QoS and popularity")
    rows = tuple((m, q[m], p[m]) for m in shared)
    try:
        pcc = pearson([r[1] for r in rows], [r[2] for r in rows])
    except UndefinedCorrelationError:
        pcc = None
    top_pop = min(rows, key=lambda r: (-r[2], r[0]))
    top_q = min(rows, key=lambda r: (-r[1], r[0]))
    return QosPopularityReport(rows, pcc, (top_pop[0], top_pop[1]), (top_q[0], top_q[2]))


# -- customers ---------------------------------------------------------------

def load_stop_words() -> frozenset[str]:
    text = resources.files("shadowmarket.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w.strip().casefold() for w in text.splitlines()
                     if w.strip() and not w.startswith("#"))


def url_is_blacklisted(url: str, blacklist: Iterable[str]) -> bool:
    """Match by host (exact or subdomain) or by URL prefix."""
    u = url.strip().casefold()
    if "://" not in u:
        u = "http://" + u
    host = (urlsplit(u).hostname or "").removeprefix("www.")
    for entry in blacklist:
        e = entry.casefold()
        if "/" in e:
            bare = e.split("://", 1)[-1]
            if u.split("://", 1)[-1].startswith(bare):
                return True
        elif host == e or host.endswith("." + e):
            return True
    return False


_URL = re.compile(r"(?:https?://|www\.)[^\s]+", re.IGNORECASE)


def account_urls(acc: AccountDossier) -> list[str]:
    urls = list(acc.bio_urls)
    for t in acc.tweets:
        urls.extend(_URL.findall(t.text))
    return urls


def reputation_proxy(acc: AccountDossier) -> float:
    """Not a Klout score: logistic map of log-followers and the listed flag onto [0, 100]."""
    z = 0.9 * math.log1p(acc.follower_count) + 1.0 * float(acc.listed) - 6.5
    return 100.0 / (1.0 + math.exp(-z))


def customer_profile_report(customers: Sequence[AccountDossier], url_blacklist: Iterable[str],
                            reputation_threshold: float = AVERAGE_REPUTATION,
                            merchants: Iterable[Merchant] = (),
                            leaders: Iterable[str] = (),
                            stop_words: Iterable[str] | None = None,
                            top_n: int = 25, use_proxy: bool = False) -> CustomerReport:
    if not customers:
        raise InsufficientDataError("no customers")
    blacklist = frozenset(url_blacklist)
    stops = load_stop_words() if stop_words is None else frozenset(stop_words)

    def rep(a: AccountDossier) -> float | None:
        if a.reputation_score is not None:
            return a.reputation_score
        return reputation_proxy(a) if use_proxy else None

    reps = {a.account_id: rep(a) for a in customers}
    scored = [r for r in reps.values() if r is not None]
    frac_above = (sum(1 for r in scored if r > reputation_threshold) / len(scored)
                  if scored else None)
    n_black = sum(1 for a in customers
                  if any(url_is_blacklisted(u, blacklist) for u in account_urls(a)))
    terms = Counter(t for a in customers if a.bio
                    for t in tokenize(a.bio) if t not in stops and len(t) > 1)
    top_terms = sorted(terms.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]

    ids = {a.account_id for a in customers}
    subs: dict[str, set[str]] = {}
    xtab: dict[str, int] = {}
    for m in merchants:
        members = ids.intersection(m.customer_ids)
        xtab[m.merchant_id] = len(members)
        for c in members:
            subs.setdefault(c, set()).add(m.merchant_id)
    leader_set = frozenset(leaders)

    def leader_rate(pred) -> float | None:
        group = [c for c, r in reps.items() if r is not None and pred(r)]
        if not group or not leader_set:
            return None
        return sum(1 for c in group if subs.get(c, set()) & leader_set) / len(group)

    return CustomerReport(
        n_customers=len(customers),
        frac_above_threshold=frac_above,
        frac_with_blacklisted_url=n_black / len(customers),
        top_bio_terms=top_terms,
        verified_count=sum(1 for a in customers if a.verified),
        subscriptions=dict(sorted(xtab.items())),
        leader_subscription_rate_above=leader_rate(lambda r: r > reputation_threshold),
        leader_subscription_rate_below=leader_rate(lambda r: r <= reputation_threshold),
        reputation_source="proxy" if use_proxy and any(
            a.reputation_score is None for a in customers) else "data",
    )
