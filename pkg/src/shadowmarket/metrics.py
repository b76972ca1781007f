"""Behavioural metrics for phony-follower analysis plus shared numeric helpers."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np

from .model import AccountDossier, InsufficientDataError


class UndefinedCorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class EngagementScore:
    value: float
    n_peers: int
    total_actions: int


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    sigma: float
    x_min: float
    n: int


@dataclass(frozen=True)
class ContentStats:
    hashtags_per_tweet: float
    spam_words_per_tweet: float
    mean_tweet_length: float
    num_languages: int
    rt_fraction: float
    mentions_per_tweet: float
    seconds_since_last_tweet: float
    tweets_per_day: float


def _engagement(targets: Sequence[str], friend_ids: frozenset[str]) -> EngagementScore:
    # coverage of friends times share of actions aimed at friends
    n, total = len(friend_ids), len(targets)
    if n == 0 or total == 0:
        return EngagementScore(0.0, n, total)
    hits = [t for t in targets if t in friend_ids]
    coverage = len(set(hits)) / n
    share = len(hits) / total
    return EngagementScore(coverage * share, n, total)


def retweet_engagement(subject: AccountDossier, friend_ids: Iterable[str] | None = None
                       ) -> EngagementScore:
    """Fraction of friends retweeted times the fraction of retweets that target friends."""
    friends = frozenset(subject.friend_ids if friend_ids is None else friend_ids)
    targets = [t.retweeted_of for t in subject.tweets if t.is_retweet]
    return _engagement(targets, friends)


def mention_engagement(subject: AccountDossier, friend_ids: Iterable[str] | None = None
                       ) -> EngagementScore:
    friends = frozenset(subject.friend_ids if friend_ids is None else friend_ids)
    targets = [m for t in subject.tweets for m in t.mentions]
    return _engagement(targets, friends)


def language_overlap(subject_langs: Iterable[str], peer_langs: Sequence[Iterable[str]]) -> float:
    """Share of peers that tweet in at least one of the subject's languages."""
    if not peer_langs:
        return 0.0
    mine = frozenset(subject_langs)
    return sum(1 for langs in peer_langs if mine & frozenset(langs)) / len(peer_langs)


def unfollow_entropy(daily_counts: Sequence[int] | Sequence[tuple[int, int]]) -> float:
    """Shannon entropy of the per-day unfollow distribution, normalised by log2(T).

    Accepts bare counts or the ``(day, count)`` pairs produced by
    :func:`shadowmarket.model.daily_unfollow_counts`.
    """
    counts = [c[1] if isinstance(c, tuple) else c for c in daily_counts]
    if not counts:
        raise InsufficientDataError("unfollow entropy needs at least one day")
    if any(c < 0 for c in counts):
        raise ValueError("negative unfollow count")
    total = sum(counts)
    n_days = len(counts)
    if total == 0 or n_days == 1:
        return 0.0
    h = 0.0
    for c in counts:
        if c:
            p = c / total
            h -= p * math.log2(p)
    return min(max(h / math.log2(n_days), 0.0), 1.0)


def follower_friend_ratio(subject: AccountDossier) -> float:
    """followers / friends; 0 for 0/0 and ``math.inf`` when only friends is zero."""
    if subject.friend_count == 0:
        return math.inf if subject.follower_count > 0 else 0.0
    return subject.follower_count / subject.friend_count


def fit_power_law(samples: Sequence[float]) -> PowerLawFit:
    """Continuous power-law MLE with x_min fixed at the sample minimum.

    alpha = 1 + n / sum(ln(x / x_min)),  sigma = (alpha - 1) / sqrt(n)
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 10:
        raise InsufficientDataError(f"power-law fit needs >= 10 samples, got {n}")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValueError("power-law samples must be finite and > 0")
    x_min = float(x.min())
    s = float(np.sum(np.log(x / x_min)))
    if s <= 0.0:
        raise InsufficientDataError("all samples equal; power-law exponent undefined")
    alpha = 1.0 + n / s
    return PowerLawFit(alpha=alpha, sigma=(alpha - 1.0) / math.sqrt(n), x_min=x_min, n=n)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-D sequences of equal length")
    if x.size < 2:
        raise InsufficientDataError("pearson needs at least 2 pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    # relative threshold: constant series leave only rounding noise in dx
    if sxx <= 1e-24 * max(1.0, float(x @ x)) or syy <= 1e-24 * max(1.0, float(y @ y)):
        raise UndefinedCorrelationError("zero variance; correlation undefined")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


_TOKEN = re.compile(r"[^\W_]+(?:'[^\W_]+)*")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.casefold())


def count_spam_words(text: str, lexicon: Iterable[str]) -> int:
    """Count lexicon hits on whole-token boundaries; multi-word entries match as phrases."""
    tokens = tokenize(text)
    if not tokens:
        return 0
    singles = set()
    phrases = []
    for entry in lexicon:
        parts = tokenize(entry)
        if len(parts) == 1:
            singles.add(parts[0])
        elif parts:
            phrases.append(tuple(parts))
    hits = sum(1 for t in tokens if t in singles)
    for ph in phrases:
        k = len(ph)
        hits += sum(1 for i in range(len(tokens) - k + 1) if tuple(tokens[i:i + k]) == ph)
    return hits


def content_stats(subject: AccountDossier, spam_lexicon: Iterable[str], now: datetime,
                  window_seconds: float = 0.0) -> ContentStats:
    """Stylistic statistics over an account's collected tweets.

    ``now`` is the experiment time. An account without tweets gets zero rates
    and ``seconds_since_last_tweet = window_seconds``. ``tweets_per_day``
    spreads the collected tweets over the days from the first one to ``now``
    (at least one day).
    """
    tweets = subject.tweets
    n = len(tweets)
    if n == 0:
        return ContentStats(0.0, 0.0, 0.0, 0, 0.0, 0.0, float(window_seconds), 0.0)
    lexicon = frozenset(spam_lexicon)
    langs = frozenset().union(*(t.languages for t in tweets))
    since_last = max((now - tweets[-1].timestamp).total_seconds(), 0.0)
    span_days = max((now - tweets[0].timestamp).total_seconds() / 86400.0, 1.0)
    return ContentStats(
        hashtags_per_tweet=sum(len(t.hashtags) for t in tweets) / n,
        spam_words_per_tweet=sum(count_spam_words(t.text, lexicon) for t in tweets) / n,
        mean_tweet_length=sum(len(t.text) for t in tweets) / n,
        num_languages=len(langs),
        rt_fraction=sum(1 for t in tweets if t.is_retweet) / n,
        mentions_per_tweet=sum(len(t.mentions) for t in tweets) / n,
        seconds_since_last_tweet=since_last,
        tweets_per_day=n / span_days,
    )
