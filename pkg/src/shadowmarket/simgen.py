"""Seeded synthetic follower-market generator.

The generator writes a dataset directory in the layout read by
:func:`shadowmarket.model.parse_dataset` together with ``ground_truth.json``.
Every entity draws from its own ``SeedSequence(seed, spawn_key=(section, i))``
stream, so editing one section of the config leaves the others unchanged.

Phony followers sit in merchant-controlled pools. A latent control level per
account sets how many days of the window its pool rotates it (followers leave
and come back a few hours later); the same latent level depresses its
reputation, which ties unfollow entropy to reputation.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from .model import (LEGITIMATE, SUSPICIOUS, AccountDossier, Dataset, Merchant, Promise,
                    SnapshotSeries, TweetRecord, format_ts, parse_ts, write_dataset)


class InfeasibleConfigError(ValueError):
    pass


# section ids for hierarchical seeding; never renumber
_MERCHANT, _PHONY, _LEGIT, _CUSTOMER, _RETENTION, _GRAPH, _FLIP = range(7)

DEFAULTS: dict = {
    "seed": 0,
    "start": "2014-07-18T00:00:00Z",
    "window_days": 15,
    "snapshot_cadence_hours": 4,
    "languages": {
        "codes": ["es", "en", "pt", "ar", "tr", "ja", "fr", "id", "ru", "it", "de", "ko"],
        "weights": [0.52, 0.18, 0.07, 0.05, 0.04, 0.03, 0.03, 0.025, 0.02, 0.015, 0.01, 0.01],
    },
    "merchants": {
        "freemium_only": 12,
        "premium_only": 50,
        "both": 57,
        "leaders": 5,
        "twitter_profile_fraction": 0.25,
        "max_traffic_rank": 20_000_000,
        "max_promo_tweets": 4000,
        "leader_rank_fraction": [0.001, 0.05],
        "leader_tweet_fraction": [0.55, 1.0],
        "other_rank_fraction": [0.25, 1.0],
        "other_tweet_fraction": [0.0, 0.25],
        "good_fraction": 0.1,
        "good_delivery": [0.65, 0.85],
        "normal_delivery": [0.42, 0.62],
        "premium_followers_delivered": [738, 1700, 2095],
        "freemium_promises": [
            {"promise_id": "followers_per_ride", "expect": 60, "unit": "followers"},
            {"promise_id": "promotional_updates_only", "expect": 1.0, "unit": "fraction"},
            {"promise_id": "profile_unaltered", "expect": 1.0, "unit": "fraction"},
        ],
        "premium_promises": [
            {"promise_id": "followers_delivered", "expect": 1000, "unit": "followers"},
            {"promise_id": "new_followers_every_minute", "expect": 1.0, "unit": "fraction"},
            {"promise_id": "ad_free", "expect": 1.0, "unit": "fraction"},
            {"promise_id": "no_drop_3_months", "expect": 1.0, "unit": "fraction"},
            {"promise_id": "genuine_profiles", "expect": 1.0, "unit": "fraction"},
        ],
    },
    "retention": {
        "merchants": 2,
        "hours": 168,
        "dip_rate_per_hour": 4.0,
        "return_after_hours": [1, 5],
        "permanent_loss_per_day": 1.5,
    },
    "phony": {
        "count": 600,
        "control_beta": [2.6, 1.5],
        "rotation_days_exponent": 1.1,
        "unfollows_per_active_day": 1.6,
        "refollow_after_hours": [4, 14],
        "reputation": {"base": 27.0, "slope": 26.0, "noise": 4.0},
        "ratio_alpha": 1.8209,
        "ratio_xmin": 0.003,
        "friend_count": [2000, 5000],
        "observed_followers": [8, 24],
        "observed_friends": [20, 50],
        "bio_fraction": 0.40,
        "bio_url_fraction": 0.10,
        "posts_lognormal": [5.0, 1.2],
        "tweets": [0, 14],
        "no_tweet_fraction": 0.12,
        "days_since_last_tweet_lognormal": [2.3, 1.1],
        "tweet_gap_days_lognormal": [1.6, 1.0],
        "language_count_weights": [0.12, 0.20, 0.30, 0.25, 0.08, 0.05],
        "hashtags_per_tweet": 1.1,
        "spam_word_prob": 0.25,
        "retweet_prob": 0.7,
        "retweet_friend_prob": 0.15,
        "mentions_per_tweet": 0.25,
        "mention_friend_prob": 0.15,
    },
    "legitimate": {
        "count": 1200,
        "unfollow_events": 0.9,
        "new_followers": 1.5,
        "reputation": {"mean": 32.0, "sd": 14.0},
        "ratio_lognormal": [0.0, 1.0],
        "friend_lognormal": [4.1, 0.9],
        "observed_followers": [6, 18],
        "observed_friends": [4, 12],
        "bio_fraction": 0.55,
        "bio_url_fraction": 0.20,
        "posts_lognormal": [6.0, 1.3],
        "tweets": [3, 30],
        "no_tweet_fraction": 0.03,
        "days_since_last_tweet_lognormal": [0.8, 1.1],
        "tweet_gap_days_lognormal": [0.2, 1.0],
        "language_count_weights": [0.70, 0.25, 0.05],
        "hashtags_per_tweet": 0.4,
        "spam_word_prob": 0.04,
        "retweet_prob": 0.3,
        "retweet_friend_prob": 0.6,
        "mentions_per_tweet": 0.6,
        "mention_friend_prob": 0.6,
    },
    "customers": {
        "count": 250,
        "verified": 10,
        "above_average_fraction": 0.30,
        "blacklisted_url_fraction": 0.10,
        "leader_rate_above": 0.817,
        "leader_rate_below": 0.543,
        "bio_fraction": 0.75,
    },
    # round-trip targets checked against the metrics estimators: [target, tolerance]
    # or a lower bound on a fraction
    "calibration": {
        "entropy_at_least_0_76_fraction_min": 0.20,
        "reputation_below_20_fraction_min": 0.85,
        "ratio_power_law_alpha": [1.82, 0.1],
        "entropy_reputation_pcc": [-0.73, 0.15],
    },
}

SPAM_WORDS = ["free", "winner", "cash", "bonus", "guaranteed", "discount", "earn", "prize",
              "click here", "act now", "limited time", "risk free", "buy now", "cheap"]
BLACKLIST = ["malware-host.test", "phish-login.test", "free-prize.test", "drive-by.test"]
BENIGN_DOMAINS = ["youtube.example", "news.example", "music.example", "blog.example"]
BIO_TERMS = ["follow", "artist", "director", "music", "love", "life", "producer", "singer",
             "model", "actor", "dancer", "dj", "writer", "photographer", "fan", "dreamer"]
BIO_WEIGHTS = [10, 8, 7, 7, 4, 4, 3, 3, 2, 2, 2, 2, 1, 1, 1, 1]
FILLER = {
    "es": "hola gracias amigo vida hoy mundo feliz noche siempre gente".split(),
    "en": "hello thanks friend life today world happy night always people".split(),
    "pt": "ola obrigado amigo vida hoje mundo feliz noite sempre gente".split(),
}
STOP_FILLER = ["the", "and", "of", "a", "my", "i", "to"]


@dataclass(frozen=True)
class SimConfig:
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @classmethod
    def from_dict(cls, overrides: dict | None = None) -> "SimConfig":
        cfg = _merge(copy.deepcopy(DEFAULTS), overrides or {})
        _validate(cfg)
        return cls(cfg)

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "SimConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def preset(cls, name: str = "paper_calibrated") -> "SimConfig":
        text = resources.files("shadowmarket.presets").joinpath(f"{name}.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))

    def with_seed(self, seed: int) -> "SimConfig":
        d = copy.deepcopy(self.data)
        d["seed"] = int(seed)
        return SimConfig(d)

    def digest(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def _merge(base: dict, over: dict) -> dict:
    for k, v in over.items():
        if k.startswith("_"):
            continue
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


def _validate(cfg: dict) -> None:
    def nonneg(path, v):
        if not (isinstance(v, (int, float)) and v >= 0):
            raise InfeasibleConfigError(f"{path} must be a non-negative number, got {v!r}")

    for sec in ("phony", "legitimate", "customers"):
        nonneg(f"{sec}.count", cfg[sec]["count"])
    m = cfg["merchants"]
    for k in ("freemium_only", "premium_only", "both", "leaders"):
        nonneg(f"merchants.{k}", m[k])
    if m["leaders"] > m["both"]:
        raise InfeasibleConfigError("leaders are drawn from merchants offering both schemes")
    if cfg["window_days"] < 1:
        raise InfeasibleConfigError("window_days must be >= 1")
    cad = cfg["snapshot_cadence_hours"]
    if not (isinstance(cad, int) and 1 <= cad <= 24 and 24 % cad == 0):
        raise InfeasibleConfigError("snapshot_cadence_hours must be an integer dividing 24")
    if cfg["phony"]["count"] > 0 and cfg["window_days"] < 2:
        raise InfeasibleConfigError(
            "unfollow entropy is identically 0 with a 1-day window; "
            "phony rotation targets cannot be met")
    for sec in ("phony", "legitimate"):
        for k in ("bio_fraction", "bio_url_fraction", "spam_word_prob", "retweet_prob",
                  "retweet_friend_prob", "mention_friend_prob", "no_tweet_fraction"):
            v = cfg[sec][k]
            if not 0.0 <= v <= 1.0:
                raise InfeasibleConfigError(f"{sec}.{k} must be a probability, got {v}")
    c = cfg["customers"]
    for k in ("above_average_fraction", "blacklisted_url_fraction", "leader_rate_above",
              "leader_rate_below", "bio_fraction"):
        if not 0.0 <= c[k] <= 1.0:
            raise InfeasibleConfigError(f"customers.{k} must be a probability")
    if c["verified"] > c["count"]:
        raise InfeasibleConfigError("more verified customers than customers")
    if cfg["phony"]["ratio_alpha"] <= 1.0:
        raise InfeasibleConfigError("power-law exponent must exceed 1")
    langs = cfg["languages"]
    if len(langs["codes"]) != len(langs["weights"]) or not langs["codes"]:
        raise InfeasibleConfigError("language codes and weights must align")
    for sec in ("phony", "legitimate"):
        if len(cfg[sec]["language_count_weights"]) > len(langs["codes"]):
            raise InfeasibleConfigError(f"{sec} asks for more languages than exist")


def _rng(seed: int, section: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(section, index)))


def _uniform(rng, lo_hi) -> float:
    return float(rng.uniform(lo_hi[0], lo_hi[1]))


def _randint(rng, lo_hi) -> int:
    return int(rng.integers(lo_hi[0], lo_hi[1] + 1))


def _pick(rng, seq, k: int) -> list:
    k = min(k, len(seq))
    if k <= 0:
        return []
    return [seq[i] for i in sorted(rng.choice(len(seq), size=k, replace=False))]


class _World:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.seed = cfg.seed
        self.start = parse_ts(cfg["start"])
        self.days = int(cfg["window_days"])
        self.observed_at = self.start + timedelta(days=self.days)
        lang = cfg["languages"]
        w = np.asarray(lang["weights"], dtype=float)
        self.lang_codes = list(lang["codes"])
        self.lang_p = w / w.sum()
        self.accounts: dict[str, AccountDossier] = {}
        self.series: dict[str, SnapshotSeries] = {}
        self.labels: dict[str, str] = {}
        self.truth: dict = {}

    # -- merchants -------------------------------------------------------
    def merchants(self) -> dict[str, Merchant]:
        m = self.cfg["merchants"]
        kinds = (["both"] * m["both"] + ["freemium"] * m["freemium_only"]
                 + ["premium"] * m["premium_only"])
        pick = _rng(self.seed, _MERCHANT, 10_000)
        n = len(kinds)
        leaders = set(_pick(pick, list(range(m["both"])), m["leaders"]))
        n_good = int(round(m["good_fraction"] * n))
        good = set(_pick(pick, list(range(n)), n_good))
        out = {}
        for i, kind in enumerate(kinds):
            rng = _rng(self.seed, _MERCHANT, i)
            mid = f"m{i:03d}"
            schemes = {"freemium", "premium"} if kind == "both" else {kind}
            lead = i in leaders
            rank_frac = _uniform(rng, m["leader_rank_fraction" if lead else "other_rank_fraction"])
            tweet_frac = _uniform(rng, m["leader_tweet_fraction" if lead else "other_tweet_fraction"])
            promises, perfs = [], []
            delivery = m["good_delivery"] if i in good else m["normal_delivery"]
            templates = []
            if "freemium" in schemes:
                templates += m["freemium_promises"]
            if "premium" in schemes:
                templates += m["premium_promises"]
            for t in templates:
                promises.append(Promise(t["promise_id"], float(t["expect"]), t.get("unit", "")))
                if t["promise_id"] == "followers_delivered":
                    lo, mode, hi = m["premium_followers_delivered"]
                    perf = float(round(rng.triangular(lo, mode, hi)))
                else:
                    perf = round(float(t["expect"]) * _uniform(rng, delivery), 6)
                perfs.append((t["promise_id"], perf))
            out[mid] = Merchant(
                merchant_id=mid,
                schemes=frozenset(schemes),
                promises=tuple(promises),
                performances=tuple(perfs),
                traffic_rank=max(1, int(round(rank_frac * m["max_traffic_rank"]))),
                promo_tweet_count=int(round(tweet_frac * m["max_promo_tweets"])),
                has_twitter_profile=bool(rng.random() < m["twitter_profile_fraction"]),
            )
        self.truth["leaders"] = sorted(f"m{i:03d}" for i in leaders)
        self.truth["good_qos_merchants"] = sorted(f"m{i:03d}" for i in good)
        return out

    # -- shared helpers ----------------------------------------------------
    def _languages(self, rng, weights) -> list[str]:
        w = np.asarray(weights, dtype=float)
        k = int(rng.choice(len(w), p=w / w.sum())) + 1
        idx = rng.choice(len(self.lang_codes), size=k, replace=False, p=self.lang_p)
        return [self.lang_codes[i] for i in idx]

    def _tweets(self, rng, sec: dict, langs: list[str], friends: list[str],
                spam_rate: float | None = None, url_pool: list[str] | None = None
                ) -> list[TweetRecord]:
        if rng.random() < sec["no_tweet_fraction"]:
            return []
        n = _randint(rng, sec["tweets"])
        if n == 0:
            return []
        last = self.observed_at - timedelta(
            days=float(rng.lognormal(*sec["days_since_last_tweet_lognormal"])))
        stamps = [last]
        for _ in range(n - 1):
            stamps.append(stamps[-1] - timedelta(
                days=float(rng.lognormal(*sec["tweet_gap_days_lognormal"]))))
        stamps = [s.replace(microsecond=0) for s in reversed(stamps)]
        out = []
        spam_p = sec["spam_word_prob"] if spam_rate is None else spam_rate
        for k, ts in enumerate(stamps):
            lang = langs[k % len(langs)] if k < len(langs) else langs[int(rng.integers(len(langs)))]
            words = FILLER.get(lang, [f"{lang}word{j}" for j in range(8)])
            body = [words[int(rng.integers(len(words)))] for _ in range(_randint(rng, (3, 12)))]
            if rng.random() < spam_p:
                body.insert(int(rng.integers(len(body) + 1)), SPAM_WORDS[int(rng.integers(len(SPAM_WORDS)))])
            tags = [f"tag{int(rng.integers(40))}" for _ in range(int(rng.poisson(sec["hashtags_per_tweet"])))]
            is_rt = bool(rng.random() < sec["retweet_prob"])
            rt_of = None
            if is_rt:
                if friends and rng.random() < sec["retweet_friend_prob"]:
                    rt_of = friends[int(rng.integers(len(friends)))]
                else:
                    rt_of = f"x{int(rng.integers(1_000_000)):06d}"
            mentions = []
            for _ in range(int(rng.poisson(sec["mentions_per_tweet"]))):
                if friends and rng.random() < sec["mention_friend_prob"]:
                    mentions.append(friends[int(rng.integers(len(friends)))])
                else:
                    mentions.append(f"x{int(rng.integers(1_000_000)):06d}")
            parts = ([f"RT @{rt_of}:"] if is_rt else []) + body
            parts += [f"@{m}" for m in mentions] + [f"#{t}" for t in tags]
            if url_pool:
                parts.append(f"http://{url_pool[int(rng.integers(len(url_pool)))]}/p/{k}")
            out.append(TweetRecord(timestamp=ts, text=" ".join(parts), hashtags=tuple(tags),
                                   mentions=tuple(mentions), is_retweet=is_rt,
                                   retweeted_of=rt_of, languages=frozenset({lang})))
        return out

    def _bio(self, rng, p_bio: float, p_url: float) -> tuple[str | None, tuple[str, ...]]:
        if rng.random() >= p_bio:
            return None, ()
        w = np.asarray(BIO_WEIGHTS, dtype=float)
        terms = [BIO_TERMS[i] for i in rng.choice(len(BIO_TERMS), size=_randint(rng, (2, 5)),
                                                  p=w / w.sum())]
        for _ in range(_randint(rng, (0, 2))):
            terms.insert(int(rng.integers(len(terms) + 1)),
                         STOP_FILLER[int(rng.integers(len(STOP_FILLER)))])
        urls = ()
        if rng.random() < p_url:
            urls = (f"http://{BENIGN_DOMAINS[int(rng.integers(len(BENIGN_DOMAINS)))]}/me",)
        return " ".join(terms), urls

    def _created(self, rng) -> datetime:
        return (self.start - timedelta(days=float(rng.uniform(30, 2000)))).replace(microsecond=0)

    # -- snapshot simulation -----------------------------------------------
    def _series(self, sid: str, base: list[str], events: list[tuple[float, str | None, float]],
                gains: list[tuple[float, str]], cadence: int) -> SnapshotSeries:
        """Replay unfollow events on ``base`` and sample the follower set.

        ``events`` holds (hour, follower or None for a random current one,
        hours until the follower returns; inf = permanent).
        """
        n_snap = self.days * 24 // cadence
        changes: list[tuple[float, int, str]] = []  # (hour, +1 join / -1 leave, id)
        current = set(base)
        rng = _rng(self.seed, _GRAPH, int(hashlib.sha256(sid.encode()).hexdigest()[:8], 16))
        timeline = sorted([(h, 0, who, back) for h, who, back in events]
                          + [(h, 1, who, 0.0) for h, who in gains], key=lambda e: (e[0], e[1]))
        away: list[tuple[float, str]] = []
        for h, kind, who, back in timeline:
            # returns that happen before this event
            for t, f in sorted(a for a in away if a[0] <= h):
                changes.append((t, +1, f))
                current.add(f)
            away = [a for a in away if a[0] > h]
            if kind == 1:
                changes.append((h, +1, who))
                current.add(who)
                continue
            pool = sorted(current)
            if not pool:
                continue
            f = who if who in current else pool[int(rng.integers(len(pool)))]
            current.discard(f)
            changes.append((h, -1, f))
            if math.isfinite(back):
                away.append((h + back, f))
        for t, f in away:
            changes.append((t, +1, f))
        changes.sort(key=lambda c: c[0])
        snaps = []
        state = set(base)
        ci = 0
        for s in range(n_snap):
            t = float(s * cadence)
            while ci < len(changes) and changes[ci][0] <= t:
                _, d, f = changes[ci]
                (state.add if d > 0 else state.discard)(f)
                ci += 1
            snaps.append((self.start + timedelta(hours=t), frozenset(state)))
        return SnapshotSeries(sid, tuple(snaps))

    # -- population ------------------------------------------------------------
    def populations(self, merchants: dict[str, Merchant]) -> dict[str, Merchant]:
        cfg = self.cfg
        ph, lg, cu = cfg["phony"], cfg["legitimate"], cfg["customers"]
        phony_ids = [f"p{i:05d}" for i in range(ph["count"])]
        legit_ids = [f"u{i:05d}" for i in range(lg["count"])]
        cust_ids = [f"c{i:05d}" for i in range(cu["count"])]
        mids = sorted(merchants)
        freemium = [m for m in mids if "freemium" in merchants[m].schemes]
        leaders = self.truth["leaders"]
        cadence = int(cfg["snapshot_cadence_hours"])
        hours = self.days * 24

        # phony pools: each phony account belongs to one merchant
        pool_of = {}
        pools: dict[str, list[str]] = {m: [] for m in mids}
        for i, pid in enumerate(phony_ids):
            rng = _rng(self.seed, _PHONY, 1_000_000 + i)
            m = mids[int(rng.integers(len(mids)))]
            pool_of[pid] = m
            pools[m].append(pid)

        # customers and their subscriptions (freemium merchants only)
        subs: dict[str, list[str]] = {m: [] for m in mids}
        verified = set(_pick(_rng(self.seed, _CUSTOMER, 10_000), cust_ids, cu["verified"]))
        cust_lang = {}
        cust_rep = {}
        non_leader_f = [m for m in freemium if m not in leaders] or freemium
        for i, cid in enumerate(cust_ids):
            rng = _rng(self.seed, _CUSTOMER, i)
            above = cid in verified or rng.random() < cu["above_average_fraction"]
            rep = _uniform(rng, (40.5, 85.0) if above else (3.0, 39.5))
            cust_rep[cid] = round(rep, 2)
            rate = cu["leader_rate_above"] if above else cu["leader_rate_below"]
            chosen = []
            if leaders and (cid in verified or rng.random() < rate):
                top = leaders[:4] if cid in verified else leaders
                chosen.append(top[int(rng.integers(len(top)))])
            extra = _randint(rng, (0 if chosen else 1, 2))
            chosen += _pick(rng, non_leader_f, extra)
            for m in sorted(set(chosen)):
                subs[m].append(cid)
            cust_lang[cid] = self._languages(rng, [0.7, 0.3])

        # phony followers
        self.truth["phony_control"] = {}
        self.truth["phony_merchant"] = pool_of
        all_ids = phony_ids + cust_ids + legit_ids
        for i, pid in enumerate(phony_ids):
            rng = _rng(self.seed, _PHONY, i)
            z = float(rng.beta(*ph["control_beta"]))
            self.truth["phony_control"][pid] = round(z, 6)
            pool = [p for p in pools[pool_of[pid]] if p != pid]
            m_customers = subs.get(pool_of[pid], [])
            friends = sorted(set(_pick(rng, pool, _randint(rng, (2, 8)))
                                 + _pick(rng, m_customers, _randint(rng, (0, 6)))
                                 + _pick(rng, all_ids, _randint(rng, ph["observed_friends"]))) - {pid})
            followers = sorted(set(_pick(rng, pool, _randint(rng, (2, 8)))
                                   + _pick(rng, phony_ids, _randint(rng, ph["observed_followers"])))
                               - {pid})
            # follower/friend ratio ~ power law on [xmin, 1]
            a, xmin = ph["ratio_alpha"], ph["ratio_xmin"]
            while True:
                r = xmin * (1.0 - rng.random()) ** (-1.0 / (a - 1.0))
                if r <= 1.0:
                    break
            fr = _randint(rng, ph["friend_count"])
            fo = max(1, int(round(r * fr)))
            rep_cfg = ph["reputation"]
            rep = rep_cfg["base"] - rep_cfg["slope"] * z + rng.normal(0.0, rep_cfg["noise"])
            rep = round(min(max(rep, 0.5), 100.0), 2)
            langs = self._languages(rng, ph["language_count_weights"])
            bio, bio_urls = self._bio(rng, ph["bio_fraction"], ph["bio_url_fraction"])
            tweets = self._tweets(rng, ph, langs, friends)
            # rotation schedule: more control -> more rotation days
            k = 1 + int(round((self.days - 1) * z ** ph["rotation_days_exponent"]))
            days = sorted(rng.choice(self.days, size=min(k, self.days), replace=False))
            events = []
            for d in days:
                for _ in range(1 + int(rng.poisson(ph["unfollows_per_active_day"]))):
                    h = d * 24 + float(rng.uniform(0, 24))
                    events.append((h, None, _uniform(rng, ph["refollow_after_hours"])))
            series = self._series(pid, followers + [f"x{pid}_{j}" for j in range(6)],
                                  events, [], cadence)
            self.series[pid] = series
            self.accounts[pid] = AccountDossier(
                account_id=pid, created_at=self._created(rng), bio=bio, bio_urls=bio_urls,
                post_count=int(rng.lognormal(*ph["posts_lognormal"])), listed=bool(rng.random() < 0.02),
                verified=False, follower_count=fo, friend_count=fr,
                follower_ids=frozenset(followers), friend_ids=frozenset(friends),
                tweets=tuple(tweets), reputation_score=rep)
            self.labels[pid] = SUSPICIOUS

        # legitimate users: friends and followers within a language community
        legit_lang = {}
        for i, uid in enumerate(legit_ids):
            legit_lang[uid] = self._languages(_rng(self.seed, _LEGIT, 2_000_000 + i),
                                              lg["language_count_weights"])
        by_lang: dict[str, list[str]] = {}
        for uid in legit_ids:
            by_lang.setdefault(legit_lang[uid][0], []).append(uid)
        for i, uid in enumerate(legit_ids):
            rng = _rng(self.seed, _LEGIT, i)
            community = [u for u in by_lang[legit_lang[uid][0]] if u != uid] or legit_ids
            friends = sorted(set(_pick(rng, community, _randint(rng, lg["observed_friends"]))) - {uid})
            followers = sorted(set(_pick(rng, community, _randint(rng, lg["observed_followers"])))
                               - {uid})
            fr = max(1, int(round(rng.lognormal(*lg["friend_lognormal"]))))
            fo = int(round(fr * rng.lognormal(*lg["ratio_lognormal"])))
            rep = round(min(max(rng.normal(lg["reputation"]["mean"], lg["reputation"]["sd"]),
                                1.0), 99.0), 2)
            bio, bio_urls = self._bio(rng, lg["bio_fraction"], lg["bio_url_fraction"])
            tweets = self._tweets(rng, lg, legit_lang[uid], friends)
            events = [(float(rng.uniform(0, hours)), None, math.inf)
                      for _ in range(int(rng.poisson(lg["unfollow_events"])))]
            gains = [(float(rng.uniform(0, hours)), f"x{uid}_g{j}")
                     for j in range(int(rng.poisson(lg["new_followers"])))]
            self.series[uid] = self._series(uid, followers + [f"x{uid}_{j}" for j in range(4)],
                                            events, gains, cadence)
            self.accounts[uid] = AccountDossier(
                account_id=uid, created_at=self._created(rng), bio=bio, bio_urls=bio_urls,
                post_count=int(rng.lognormal(*lg["posts_lognormal"])),
                listed=bool(rng.random() < 0.1), verified=bool(rng.random() < 0.005),
                follower_count=fo, friend_count=fr, follower_ids=frozenset(followers),
                friend_ids=frozenset(friends), tweets=tuple(tweets), reputation_score=rep)
            self.labels[uid] = LEGITIMATE

        # customers: unlabeled, no snapshot series
        n_black = int(round(cu["blacklisted_url_fraction"] * len(cust_ids)))
        black = set(_pick(_rng(self.seed, _CUSTOMER, 20_000), cust_ids, n_black))
        for i, cid in enumerate(cust_ids):
            rng = _rng(self.seed, _CUSTOMER, 1_000_000 + i)
            bio, bio_urls = self._bio(rng, cu["bio_fraction"], 0.3)
            tw_cfg = dict(lg, tweets=[1, 6], no_tweet_fraction=0.0)
            pool = BLACKLIST if cid in black else BENIGN_DOMAINS
            tweets = self._tweets(rng, tw_cfg, cust_lang[cid], [], url_pool=pool)
            fo = int(rng.lognormal(6.0, 1.5)) + (50_000 if cid in verified else 0)
            self.accounts[cid] = AccountDossier(
                account_id=cid, created_at=self._created(rng), bio=bio, bio_urls=bio_urls,
                post_count=int(rng.lognormal(7.0, 1.0)), listed=bool(rng.random() < 0.2),
                verified=cid in verified, follower_count=fo,
                friend_count=int(rng.lognormal(6.0, 1.0)), tweets=tuple(tweets),
                reputation_score=cust_rep[cid])
        self.truth["customers_blacklisted"] = sorted(black)
        self.truth["customers_verified"] = sorted(verified)

        merchants = {m: Merchant(**{**merchants[m].__dict__, "customer_ids": tuple(subs[m])})
                     for m in mids}
        return self._retention(merchants)

    def _retention(self, merchants: dict[str, Merchant]) -> dict[str, Merchant]:
        rc = self.cfg["retention"]
        premium = [m for m in sorted(merchants) if "premium" in merchants[m].schemes]
        chosen = premium[:rc["merchants"]]
        out = dict(merchants)
        self.truth["retention_accounts"] = []
        for j, mid in enumerate(chosen):
            rng = _rng(self.seed, _RETENTION, j)
            perf = dict(merchants[mid].performances)
            n = int(perf.get("followers_delivered", 1000))
            sid = f"d_{mid}"
            base = [f"f{mid}_{k:05d}" for k in range(n)]
            hours = int(rc["hours"])
            snaps = []
            current = set(base)
            away: list[tuple[int, str]] = []
            lost_rate = rc["permanent_loss_per_day"] / 24.0
            for h in range(hours):
                if h:
                    back = [f for t, f in away if t <= h]
                    away = [(t, f) for t, f in away if t > h]
                    current.update(back)
                    pool = sorted(current)
                    for _ in range(int(rng.poisson(rc["dip_rate_per_hour"]))):
                        f = pool[int(rng.integers(len(pool)))]
                        if f in current:
                            current.discard(f)
                            away.append((h + _randint(rng, rc["return_after_hours"]), f))
                    for _ in range(int(rng.poisson(lost_rate))):
                        f = pool[int(rng.integers(len(pool)))]
                        current.discard(f)
                snaps.append((self.start + timedelta(hours=h), frozenset(current)))
            self.series[sid] = SnapshotSeries(sid, tuple(snaps))
            out[mid] = Merchant(**{**merchants[mid].__dict__, "dummy_account_id": sid})
            self.truth["retention_accounts"].append(sid)
        return out


def build_market(config: SimConfig) -> tuple[Dataset, dict]:
    """Generate the dataset in memory; returns (dataset, ground-truth manifest)."""
    w = _World(config)
    merchants = w.populations(w.merchants())
    ds = Dataset(accounts=w.accounts, merchants=merchants, series=w.series, labels=w.labels,
                 spam_words=frozenset(SPAM_WORDS), url_blacklist=frozenset(BLACKLIST),
                 observed_at=w.observed_at, window_start=w.start)
    truth = {
        "seed": config.seed,
        "config_sha256": config.digest(),
        "counts": {
            "merchants": len(merchants),
            "phony": config["phony"]["count"],
            "legitimate": config["legitimate"]["count"],
            "customers": config["customers"]["count"],
        },
        "planted_signal": "unfollow_entropy",
        "observed_at": format_ts(w.observed_at),
        "window_start": format_ts(w.start),
        "flipped_labels": [],
        **w.truth,
    }
    return ds, truth


def generate_market(config: SimConfig, out_dir: str | os.PathLike) -> dict:
    """Write a synthetic dataset plus ``ground_truth.json`` to ``out_dir``."""
    ds, truth = build_market(config)
    out = Path(out_dir)
    write_dataset(ds, out)
    with open(out / "ground_truth.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(truth, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return truth


def perturb_labels(ds: Dataset, flip_rate: float, seed: int) -> tuple[Dataset, list[str]]:
    """Flip exactly floor(flip_rate * n) labels chosen by seeded sampling."""
    if not 0.0 <= flip_rate < 0.5:
        raise ValueError("flip_rate must lie in [0, 0.5)")
    ids = sorted(ds.labels)
    k = int(math.floor(flip_rate * len(ids)))
    flipped = _pick(_rng(seed, _FLIP), ids, k)
    labels = dict(ds.labels)
    for a in flipped:
        labels[a] = LEGITIMATE if labels[a] == SUSPICIOUS else SUSPICIOUS
    return Dataset(**{**ds.__dict__, "labels": labels}), flipped
